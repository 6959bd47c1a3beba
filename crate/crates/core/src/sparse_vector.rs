//! AboveThreshold: a one-shot noisy threshold test over a query stream.

use crate::error::{check_pos, check_prob, state, Result};
use crate::noise::NoiseSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone)]
pub struct AboveThreshold {
    epsilon: f64,
    sensitivity: f64,
    tau: f64,
    halted: bool,
    answered: u64,
    last_mu: f64,
}

impl AboveThreshold {
    /// Draws `tau ~ Lap(2 sensitivity / epsilon)`.
    pub fn new(epsilon: f64, sensitivity: f64, src: &mut NoiseSource) -> Result<Self> {
        check_pos("epsilon", epsilon)?;
        check_pos("sensitivity", sensitivity)?;
        let tau = src.laplace(2.0 * sensitivity / epsilon)?;
        Ok(Self {
            epsilon,
            sensitivity,
            tau,
            halted: false,
            answered: 0,
            last_mu: 0.0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn answered(&self) -> u64 {
        self.answered
    }

    /// Gate noise of the most recent step.
    pub fn last_mu(&self) -> f64 {
        self.last_mu
    }

    pub fn mu_scale(&self) -> f64 {
        4.0 * self.sensitivity / self.epsilon
    }

    pub fn tau_scale(&self) -> f64 {
        2.0 * self.sensitivity / self.epsilon
    }

    /// `Yes` (and halt) iff `q + mu > thresh + tau`, `mu ~ Lap(4 sensitivity / epsilon)`.
    pub fn step(&mut self, q: f64, thresh: f64, src: &mut NoiseSource) -> Result<Answer> {
        if self.halted {
            return state("AboveThreshold already answered Yes");
        }
        let mu = src.laplace(self.mu_scale())?;
        self.answered += 1;
        self.last_mu = mu;
        if q + mu > thresh + self.tau {
            self.halted = true;
            Ok(Answer::Yes)
        } else {
            Ok(Answer::No)
        }
    }
}

/// `8 (ln k + ln(2/beta)) / epsilon` for sensitivity 1.
pub fn accuracy(k: u64, epsilon: f64, beta: f64) -> Result<f64> {
    check_pos("epsilon", epsilon)?;
    check_prob("beta", beta)?;
    Ok(8.0 * ((k.max(1) as f64).ln() + (2.0 / beta).ln()) / epsilon)
}
