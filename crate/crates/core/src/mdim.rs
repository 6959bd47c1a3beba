//! d-dimensional AboveThreshold: per-column Yes/No monitoring of fixed
//! thresholds on the partitioning skeleton, with `L_i` frozen to infinity
//! once column `i` answers Yes.

use crate::counting::{HistogramMechanism, Horizon};
use crate::draws::{DrawKind, DrawLog};
use crate::error::{param, Result};
use crate::noise::NoiseSource;
use crate::partition::{histogram_noise, BoundCalculator, Variant};
use crate::sparse_vector::Answer;

#[derive(Debug, Clone)]
pub struct MdAtState {
    bounds: BoundCalculator,
    thresholds: Vec<f64>,
    limits: Vec<f64>,
    answers: Vec<Answer>,
    c: Vec<f64>,
    s: Vec<f64>,
    exact: Vec<f64>,
    j: u64,
    t: u64,
    tau: f64,
    h: HistogramMechanism,
    closings: Vec<u64>,
    log: DrawLog,
}

impl MdAtState {
    pub fn new(thresholds: Vec<f64>, eps: f64, beta: f64, src: &mut NoiseSource) -> Result<Self> {
        Self::with_variant(thresholds, eps, beta, Variant::Pure, src)
    }

    pub fn with_variant(
        thresholds: Vec<f64>,
        eps: f64,
        beta: f64,
        variant: Variant,
        src: &mut NoiseSource,
    ) -> Result<Self> {
        let d = thresholds.len();
        if d == 0 {
            return param("need at least one column");
        }
        if thresholds.iter().any(|k| k.is_nan() || *k <= 0.0) {
            return param("thresholds must be positive");
        }
        let mode = src.mode();
        let bounds = BoundCalculator::new(eps, beta, d, d, variant, mode)?;
        let h = HistogramMechanism::new(d, Horizon::Unknown, histogram_noise(eps, variant), mode)?;
        let mut log = DrawLog::new();
        let tau = src.laplace(bounds.tau_scale())?;
        log.record(0, DrawKind::Tau, tau, bounds.alpha_tau(1));
        Ok(Self {
            bounds,
            limits: thresholds.clone(),
            thresholds,
            answers: vec![Answer::No; d],
            c: vec![0.0; d],
            s: vec![0.0; d],
            exact: vec![0.0; d],
            j: 1,
            t: 0,
            tau,
            h,
            closings: Vec::new(),
            log,
        })
    }

    pub fn d(&self) -> usize {
        self.thresholds.len()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn j(&self) -> u64 {
        self.j
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn closings(&self) -> &[u64] {
        &self.closings
    }

    pub fn bounds(&self) -> &BoundCalculator {
        &self.bounds
    }

    pub fn draw_log(&self) -> &DrawLog {
        &self.log
    }

    pub fn step(&mut self, x: &[u8], src: &mut NoiseSource) -> Result<&[Answer]> {
        if x.len() != self.d() {
            return param(format!(
                "expected a {}-row, got length {}",
                self.d(),
                x.len()
            ));
        }
        if x.iter().any(|&b| b > 1) {
            return param("rows must be binary");
        }
        self.t += 1;
        let t = self.t;
        for (i, &b) in x.iter().enumerate() {
            let b = b as f64;
            self.c[i] += b;
            self.s[i] += b;
            self.exact[i] += b;
        }
        let b = &self.bounds;
        let mu = src.laplace(b.mu_scale())?;
        self.log.record(t, DrawKind::Mu, mu, b.alpha_mu(t));
        let fire = (0..self.d())
            .any(|i| self.answers[i] == Answer::No && self.s[i] + mu > self.limits[i] + self.tau);
        if fire {
            self.h.insert(&self.c, src)?;
            self.c.iter_mut().for_each(|c| *c = 0.0);
            let cjt = b.c(t, self.j);
            for i in 0..self.d() {
                if self.answers[i] == Answer::Yes {
                    continue;
                }
                let g = b.draw_gamma(src)?;
                self.log
                    .record(t, DrawKind::Gamma, g, b.alpha_gamma(self.j));
                if self.s[i] + g > self.limits[i] - cjt {
                    self.answers[i] = Answer::Yes;
                    self.limits[i] = f64::INFINITY;
                }
            }
            self.j += 1;
            self.tau = src.laplace(b.tau_scale())?;
            self.log
                .record(t, DrawKind::Tau, self.tau, b.alpha_tau(self.j));
            self.s = self.h.query()?;
            let herr = self
                .s
                .iter()
                .zip(&self.exact)
                .map(|(s, e)| (s - e).abs())
                .fold(0.0, f64::max);
            self.log
                .record(t, DrawKind::Histogram, herr, b.alpha_h(self.j));
            self.closings.push(t);
        }
        Ok(&self.answers)
    }

    /// `alpha_mu(t) + alpha_tau(j) + 2 alpha_gamma(j) + alpha_H(j) + 1` at the current step.
    pub fn md_error_at(&self) -> f64 {
        md_error_at(&self.bounds, self.t.max(1), self.j)
    }
}

pub fn md_error_at(b: &BoundCalculator, t: u64, j: u64) -> f64 {
    b.alpha_mu(t) + b.alpha_tau(j) + 2.0 * b.alpha_gamma(j) + b.alpha_h(j) + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_thresholds_stay_no() {
        let mut src = NoiseSource::off();
        let mut st = MdAtState::new(vec![1e9; 4], 1.0, 0.1, &mut src).unwrap();
        for _ in 0..1000 {
            st.step(&[1, 1, 1, 1], &mut src).unwrap();
        }
        assert!(st.answers().iter().all(|a| *a == Answer::No));
        assert!(st.closings().is_empty());
    }
}
