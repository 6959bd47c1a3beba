//! Seeded Laplace/Gaussian noise, tail-bound calculators and the failure and
//! budget schedules shared by the mechanisms.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{check_pos, check_prob, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseMode {
    Live,
    Off,
}

/// Seeded source of Laplace and Gaussian variates.
///
/// In [`NoiseMode::Off`] every draw is exactly zero but still counted, so the
/// draw count of a run does not depend on the mode.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    seed: u64,
    mode: NoiseMode,
    rng: ChaCha12Rng,
    draws: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, mode: NoiseMode) -> Self {
        Self {
            seed,
            mode,
            rng: ChaCha12Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    pub fn live(seed: u64) -> Self {
        Self::new(seed, NoiseMode::Live)
    }

    pub fn off() -> Self {
        Self::new(0, NoiseMode::Off)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn is_off(&self) -> bool {
        self.mode == NoiseMode::Off
    }

    pub fn draw_count(&self) -> u64 {
        self.draws
    }

    /// A fresh seed from this source's stream, for structures that derive
    /// keyed noise on demand. Not counted as a draw.
    pub fn fork_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    // Uniform on the open interval (0, 1) from the top 53 bits.
    fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Laplace(0, scale) by inverse CDF.
    pub fn laplace(&mut self, scale: f64) -> Result<f64> {
        check_pos("laplace scale", scale)?;
        self.draws += 1;
        if self.is_off() {
            return Ok(0.0);
        }
        let v = self.open_uniform() - 0.5;
        Ok(-scale * v.signum() * (1.0 - 2.0 * v.abs()).ln())
    }

    /// N(0, sigma^2) by the Box-Muller transform (one variate per call).
    pub fn gaussian(&mut self, sigma: f64) -> Result<f64> {
        check_pos("gaussian sigma", sigma)?;
        self.draws += 1;
        if self.is_off() {
            return Ok(0.0);
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        Ok(sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos())
    }
}

/// `scale * ln(1/beta)`: `Pr[|Lap(scale)| >= B] = beta`.
pub fn laplace_tail_bound(scale: f64, beta: f64) -> Result<f64> {
    check_pos("scale", scale)?;
    check_prob("beta", beta)?;
    Ok(scale * (1.0 / beta).ln())
}

/// Bound on `|Y_1 + ... + Y_k|` for independent `Y_i ~ Lap(b_i)`, `b_i <= scale`,
/// holding with probability at least `1 - beta_s`:
/// `2 b sqrt(2 ln(2/beta_s)) max(sqrt(k), sqrt(ln(2/beta_s)))`.
pub fn laplace_sum_bound(k: u64, scale: f64, beta_s: f64) -> Result<f64> {
    if k == 0 {
        return crate::error::param("laplace_sum_bound needs k >= 1");
    }
    check_pos("scale", scale)?;
    check_prob("beta_s", beta_s)?;
    let l = (2.0 / beta_s).ln();
    Ok(2.0 * scale * (2.0 * l).sqrt() * (k as f64).sqrt().max(l.sqrt()))
}

/// `sigma sqrt(2 ln(2/beta))`, from `Pr[|N(0, sigma^2)| > x] <= 2 exp(-x^2 / 2 sigma^2)`.
pub fn gaussian_tail_bound(sigma: f64, beta: f64) -> Result<f64> {
    check_pos("sigma", sigma)?;
    check_prob("beta", beta)?;
    Ok(sigma * (2.0 * (2.0 / beta).ln()).sqrt())
}

/// Bound on a sum of `k` independent centred Gaussians with standard deviation at most `sigma`.
pub fn gaussian_sum_bound(k: u64, sigma: f64, beta: f64) -> Result<f64> {
    if k == 0 {
        return crate::error::param("gaussian_sum_bound needs k >= 1");
    }
    gaussian_tail_bound(sigma * (k as f64).sqrt(), beta)
}

/// Gaussian mechanism noise for L2 sensitivity `l2`:
/// `sigma = l2 * sqrt(2 ln(2/delta)) / eps`, which satisfies `c^2 > 2 ln(1.25/delta)`.
pub fn gaussian_sigma(l2: f64, eps: f64, delta: f64) -> Result<f64> {
    check_pos("l2 sensitivity", l2)?;
    check_pos("epsilon", eps)?;
    check_prob("delta", delta)?;
    Ok(l2 * (2.0 * (2.0 / delta).ln()).sqrt() / eps)
}

/// `beta_t = beta' / t^2`, with `sum_t beta_t = beta' * pi^2 / 6`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureSchedule {
    pub beta: f64,
    pub beta_prime: f64,
}

impl FailureSchedule {
    /// `beta' = 6 beta / pi^2`, so the series sums to exactly `beta`.
    pub fn new(beta: f64) -> Result<Self> {
        check_prob("beta", beta)?;
        Ok(Self {
            beta,
            beta_prime: 6.0 * beta / (PI * PI),
        })
    }

    /// `beta' = beta / (6 pi^2)`, the schedule used by the predecessor, range
    /// count and unknown-horizon cardinality structures. Sums to `beta / 36`.
    pub fn divided(beta: f64) -> Result<Self> {
        check_prob("beta", beta)?;
        Ok(Self {
            beta,
            beta_prime: beta / (6.0 * PI * PI),
        })
    }

    pub fn beta_t(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        self.beta_prime / (t * t)
    }

    pub fn partial_sum(&self, n: u64) -> f64 {
        (1..=n).map(|t| self.beta_t(t)).sum()
    }
}

/// `eps_j = eps / (6 pi^2 j^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub epsilon: f64,
}

impl EpsilonSchedule {
    pub fn new(epsilon: f64) -> Result<Self> {
        check_pos("epsilon", epsilon)?;
        Ok(Self { epsilon })
    }

    pub fn epsilon_j(&self, j: u64) -> f64 {
        let j = j.max(1) as f64;
        self.epsilon / (6.0 * PI * PI * j * j)
    }

    pub fn partial_sum(&self, n: u64) -> f64 {
        (1..=n).map(|j| self.epsilon_j(j)).sum()
    }
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1, "ceil_log2 of zero");
    if n == 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}
