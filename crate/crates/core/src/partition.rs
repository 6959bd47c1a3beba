//! Answering k monotone histogram queries at every step by adaptive interval
//! partitioning over a continual histogram.
//!
//! Within an interval the state keeps exact counts `c` and a running noisy
//! histogram `s`. A noisy gate on `q_i(s)` against per-query thresholds `L_i`
//! decides when to close the interval; the counts then go into the
//! continual histogram `H`, whose output replaces `s`.

use crate::counting::{HistogramMechanism, HistogramNoise, Horizon};
use crate::draws::{DrawKind, DrawLog};
use crate::error::{check_pos, check_prob, param, Result};
use crate::noise::{FailureSchedule, NoiseMode, NoiseSource};
use crate::queries::MonotoneQuery;

/// Pure eps-DP (Laplace everywhere) or (eps, delta)-DP (Gaussian threshold
/// updates and a Gaussian-noise histogram).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Pure,
    Approx { delta: f64 },
}

/// The tail caps `alpha_mu`, `alpha_tau`, `alpha_gamma`, `alpha_H` and the derived
/// `C_j^t`, `K_j^t`. `width` is the number of per-interval threshold updates
/// (`k` queries, or `d` coordinates for the d-dimensional variant).
#[derive(Debug, Clone)]
pub struct BoundCalculator {
    eps: f64,
    width: usize,
    schedule: FailureSchedule,
    variant: Variant,
    template: HistogramMechanism,
}

impl BoundCalculator {
    pub fn new(
        eps: f64,
        beta: f64,
        d: usize,
        width: usize,
        variant: Variant,
        mode: NoiseMode,
    ) -> Result<Self> {
        check_pos("epsilon", eps)?;
        check_prob("beta", beta)?;
        if d == 0 || width == 0 {
            return param("dimension and query count must be >= 1");
        }
        if let Variant::Approx { delta } = variant {
            check_prob("delta", delta)?;
        }
        let template =
            HistogramMechanism::new(d, Horizon::Unknown, histogram_noise(eps, variant), mode)?;
        Ok(Self {
            eps,
            width,
            schedule: FailureSchedule::new(beta)?,
            variant,
            template,
        })
    }

    pub fn schedule(&self) -> FailureSchedule {
        self.schedule
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn beta_t(&self, t: u64) -> f64 {
        self.schedule.beta_t(t)
    }

    /// `12/eps ln(2/beta_t)`.
    pub fn alpha_mu(&self, t: u64) -> f64 {
        12.0 / self.eps * (2.0 / self.beta_t(t)).ln()
    }

    /// `6/eps ln(6/beta_j)`.
    pub fn alpha_tau(&self, j: u64) -> f64 {
        6.0 / self.eps * (6.0 / self.beta_t(j)).ln()
    }

    /// Laplace: `3k/eps ln(6k/beta_j)`.
    /// Gaussian: `6/eps sqrt(k ln(12 e^(2eps/3) k / (delta beta_j)))`.
    pub fn alpha_gamma(&self, j: u64) -> f64 {
        let k = self.width as f64;
        let bj = self.beta_t(j);
        match self.variant {
            Variant::Pure => 3.0 * k / self.eps * (6.0 * k / bj).ln(),
            Variant::Approx { delta } => {
                let e = (2.0 * self.eps / 3.0).exp();
                6.0 / self.eps * (k * (12.0 * e * k / (delta * bj)).ln()).sqrt()
            }
        }
    }

    /// Error bound of `H` after at most `j` inserts, failure `beta_j / 6`.
    pub fn alpha_h(&self, j: u64) -> f64 {
        self.template
            .error_bound(j, self.beta_t(j) / 6.0)
            .expect("probabilities validated at construction")
    }

    /// `C_j^t = alpha_mu(t) + alpha_tau(j) + alpha_gamma(j)`.
    pub fn c(&self, t: u64, j: u64) -> f64 {
        self.alpha_mu(t) + self.alpha_tau(j) + self.alpha_gamma(j)
    }

    /// `K_j^t = 3 (C_j^t + alpha_H(j))`.
    pub fn k(&self, t: u64, j: u64) -> f64 {
        3.0 * (self.c(t, j) + self.alpha_h(j))
    }

    /// Scale of `mu_t`.
    pub fn mu_scale(&self) -> f64 {
        12.0 / self.eps
    }

    /// Scale of `tau_j`.
    pub fn tau_scale(&self) -> f64 {
        6.0 / self.eps
    }

    /// Laplace scale `3k/eps`, or the Gaussian sigma
    /// `sqrt(18 k ln(4 e^(2eps/3) / delta)) / eps`.
    pub fn gamma_magnitude(&self) -> f64 {
        let k = self.width as f64;
        match self.variant {
            Variant::Pure => 3.0 * k / self.eps,
            Variant::Approx { delta } => {
                let e = (2.0 * self.eps / 3.0).exp();
                (18.0 * k * (4.0 * e / delta).ln()).sqrt() / self.eps
            }
        }
    }

    pub fn draw_gamma(&self, src: &mut NoiseSource) -> Result<f64> {
        match self.variant {
            Variant::Pure => src.laplace(self.gamma_magnitude()),
            Variant::Approx { .. } => src.gaussian(self.gamma_magnitude()),
        }
    }
}

/// Budget `eps/3` for `H`; `(eps/3, delta / (2 e^(2eps/3)))` in the approximate variant.
pub fn histogram_noise(eps: f64, variant: Variant) -> HistogramNoise {
    match variant {
        Variant::Pure => HistogramNoise::Laplace { eps: eps / 3.0 },
        Variant::Approx { delta } => HistogramNoise::Gaussian {
            eps: eps / 3.0,
            delta: delta / (2.0 * (2.0 * eps / 3.0).exp()),
        },
    }
}

/// A threshold raise for query `query` at the close of interval `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: u64,
    pub j: u64,
    pub query: usize,
    /// `L_i` at the moment of the test.
    pub threshold: f64,
    /// `alpha_mu(t) + alpha_tau(j) + 2 alpha_gamma(j) + alpha_H(j)`.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct PartitionState {
    queries: Vec<MonotoneQuery>,
    bounds: BoundCalculator,
    c: Vec<f64>,
    s: Vec<f64>,
    exact: Vec<f64>,
    thresholds: Vec<f64>,
    j: u64,
    t: u64,
    tau: f64,
    h: HistogramMechanism,
    out: Vec<f64>,
    closings: Vec<u64>,
    crossings: Vec<Crossing>,
    log: DrawLog,
}

impl PartitionState {
    pub fn new(
        d: usize,
        queries: Vec<MonotoneQuery>,
        eps: f64,
        beta: f64,
        variant: Variant,
        src: &mut NoiseSource,
    ) -> Result<Self> {
        if queries.is_empty() {
            return param("need at least one query");
        }
        let zero = vec![0.0; d];
        for q in &queries {
            if d > 0 && q.eval(&zero) != 0.0 {
                return param(format!(
                    "query {} is nonzero on the empty histogram",
                    q.name()
                ));
            }
        }
        let mode = src.mode();
        let bounds = BoundCalculator::new(eps, beta, d, queries.len(), variant, mode)?;
        let h = HistogramMechanism::new(d, Horizon::Unknown, histogram_noise(eps, variant), mode)?;
        let k11 = bounds.k(1, 1);
        let mut log = DrawLog::new();
        let tau = src.laplace(bounds.tau_scale())?;
        log.record(0, DrawKind::Tau, tau, bounds.alpha_tau(1));
        let k = queries.len();
        Ok(Self {
            queries,
            bounds,
            c: zero.clone(),
            s: zero.clone(),
            exact: zero,
            thresholds: vec![k11; k],
            j: 1,
            t: 0,
            tau,
            h,
            out: vec![0.0; k],
            closings: Vec::new(),
            crossings: Vec::new(),
            log,
        })
    }

    pub fn d(&self) -> usize {
        self.c.len()
    }

    pub fn k(&self) -> usize {
        self.queries.len()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Index of the current (open) interval.
    pub fn j(&self) -> u64 {
        self.j
    }

    pub fn bounds(&self) -> &BoundCalculator {
        &self.bounds
    }

    pub fn queries(&self) -> &[MonotoneQuery] {
        &self.queries
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Running noisy histogram.
    pub fn noisy_histogram(&self) -> &[f64] {
        &self.s
    }

    pub fn out(&self) -> &[f64] {
        &self.out
    }

    /// Times `p_1, p_2, ...` at which intervals were closed.
    pub fn closings(&self) -> &[u64] {
        &self.closings
    }

    pub fn crossings(&self) -> &[Crossing] {
        &self.crossings
    }

    pub fn draw_log(&self) -> &DrawLog {
        &self.log
    }

    /// Process one binary row and return the released query answers.
    pub fn step(&mut self, x: &[u8], src: &mut NoiseSource) -> Result<&[f64]> {
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
        let values: Vec<f64> = self.queries.iter().map(|q| q.eval(&self.s)).collect();
        let fire = values
            .iter()
            .zip(&self.thresholds)
            .any(|(v, l)| v + mu > l + self.tau);
        if fire {
            self.h.insert(&self.c, src)?;
            self.c.iter_mut().for_each(|c| *c = 0.0);
            let j = self.j;
            let cjt = b.c(t, j);
            let kjt = b.k(t, j);
            let margin = b.alpha_mu(t) + b.alpha_tau(j) + 2.0 * b.alpha_gamma(j) + b.alpha_h(j);
            for (i, v) in values.iter().enumerate() {
                let g = b.draw_gamma(src)?;
                self.log.record(t, DrawKind::Gamma, g, b.alpha_gamma(j));
                if v + g > self.thresholds[i] - cjt {
                    self.crossings.push(Crossing {
                        t,
                        j,
                        query: i,
                        threshold: self.thresholds[i],
                        margin,
                    });
                    self.thresholds[i] += kjt;
                }
            }
            self.j += 1;
            let shift = b.k(t, self.j) - kjt;
            self.thresholds.iter_mut().for_each(|l| *l += shift);
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
            self.out = self.queries.iter().map(|q| q.eval(&self.s)).collect();
            self.closings.push(t);
        }
        let shift = b.k(t + 1, self.j) - b.k(t, self.j);
        self.thresholds.iter_mut().for_each(|l| *l += shift);
        Ok(&self.out)
    }

    /// Certified bound on `max_i |q_i(h^t) - out_i|` in the current interval.
    pub fn error_at(&self) -> f64 {
        error_at(&self.bounds, self.t.max(1), self.j)
    }
}

/// `K_j^t + 2 alpha_mu(t) + 2 alpha_tau(j) + 3 alpha_gamma(j) + 3 alpha_H(j) + 1`:
/// the upper bound on `q_i(h^t)`, minus the lower bound at the last
/// crossing (which sits `K_j^t` below the current threshold), plus the error
/// of the histogram the output was computed from.
pub fn error_at(b: &BoundCalculator, t: u64, j: u64) -> f64 {
    b.k(t, j)
        + 2.0 * b.alpha_mu(t)
        + 2.0 * b.alpha_tau(j)
        + 3.0 * b.alpha_gamma(j)
        + 3.0 * b.alpha_h(j)
        + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_values() {
        let b = BoundCalculator::new(1.0, 0.1, 1, 1, Variant::Pure, NoiseMode::Live).unwrap();
        assert!((b.alpha_mu(1) - 41.92).abs() < 0.01);
        assert!((b.alpha_tau(1) - 27.56).abs() < 0.01);
        assert!((b.alpha_gamma(1) - 13.78).abs() < 0.01);
    }

    #[test]
    fn all_zero_stream_never_closes() {
        let mut src = NoiseSource::off();
        let qs = vec![MonotoneQuery::max_sum(), MonotoneQuery::min_sum()];
        let mut st = PartitionState::new(3, qs, 1.0, 0.1, Variant::Pure, &mut src).unwrap();
        for _ in 0..500 {
            assert_eq!(st.step(&[0, 0, 0], &mut src).unwrap(), &[0.0, 0.0]);
        }
        assert!(st.closings().is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let mut src = NoiseSource::off();
        let mut st = PartitionState::new(
            2,
            vec![MonotoneQuery::max_sum()],
            1.0,
            0.1,
            Variant::Pure,
            &mut src,
        )
        .unwrap();
        assert!(st.step(&[1], &mut src).is_err());
        assert!(st.step(&[1, 2], &mut src).is_err());
        let bad = MonotoneQuery::new("shifted", |v| v[0] + 1.0);
        assert!(PartitionState::new(2, vec![bad], 1.0, 0.1, Variant::Pure, &mut src).is_err());
    }
}
