//! Set cardinality under user-level privacy with a bounded number of updates.
//!
//! The released count is refreshed by the Laplace mechanism only when an
//! AboveThreshold instance reports that it has drifted too far. At most `S`
//! refreshes are allowed; the doubling wrapper restarts with a larger update
//! budget when an instance runs out.

use crate::counting::Horizon;
use crate::draws::{DrawKind, DrawLog};
use crate::error::{check_pos, check_prob, param, state, Result};
use crate::noise::{EpsilonSchedule, FailureSchedule, NoiseSource};
use crate::sparse_vector::{AboveThreshold, Answer};

/// Stopping parameter: `ceil(sqrt(K eps / ln(T / beta)))` for a known horizon,
/// `ceil(sqrt(K eps))` otherwise, at least 1.
pub fn choose_s(k: u64, horizon: Horizon, eps: f64, beta: f64) -> Result<u64> {
    check_pos("epsilon", eps)?;
    check_prob("beta", beta)?;
    let x = match horizon {
        Horizon::Known(t) => k as f64 * eps / (t.max(1) as f64 / beta).ln(),
        Horizon::Unknown => k as f64 * eps,
    };
    Ok((x.sqrt().ceil() as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardParams {
    /// Number of users; ids are `1..=d`.
    pub d: u64,
    /// Promised bound on the total number of insertions and deletions.
    pub k: u64,
    pub eps: f64,
    pub beta: f64,
    pub horizon: Horizon,
    /// Stopping parameter; [`choose_s`] when `None`.
    pub s: Option<u64>,
}

impl CardParams {
    pub fn new(d: u64, k: u64, eps: f64, beta: f64, horizon: Horizon) -> Self {
        Self {
            d,
            k,
            eps,
            beta,
            horizon,
            s: None,
        }
    }
}

/// A refresh of the released count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Firing {
    pub t: u64,
    /// Exact cardinality at the refresh.
    pub size: u64,
}

#[derive(Debug, Clone)]
pub struct CardinalityState {
    params: CardParams,
    s: u64,
    eps1: f64,
    schedule: Option<FailureSchedule>,
    // min(d, K) for a bare instance; the wrapper cannot promise K
    cap: f64,
    present: Vec<bool>,
    size: u64,
    t: u64,
    count: u64,
    out: f64,
    svt: Option<AboveThreshold>,
    aborted: bool,
    firings: Vec<Firing>,
    log: DrawLog,
}

impl CardinalityState {
    pub fn new(params: CardParams) -> Result<Self> {
        let cap = params.d.min(params.k) as f64;
        Self::build(params, cap, Vec::new())
    }

    fn build(params: CardParams, cap: f64, initial: Vec<bool>) -> Result<Self> {
        check_pos("epsilon", params.eps)?;
        check_prob("beta", params.beta)?;
        if params.d == 0 {
            return param("need d >= 1");
        }
        if params.k == 0 {
            return param("need K >= 1");
        }
        if params.s == Some(0) {
            return param("stopping parameter must be >= 1");
        }
        let s = match params.s {
            Some(s) => s,
            None => choose_s(params.k, params.horizon, params.eps, params.beta)?,
        };
        let schedule = match params.horizon {
            Horizon::Known(0) => return param("horizon must be >= 1"),
            Horizon::Known(_) => None,
            Horizon::Unknown => Some(FailureSchedule::divided(params.beta)?),
        };
        let mut present = initial;
        present.resize(params.d as usize + 1, false);
        let size = present.iter().filter(|p| **p).count() as u64;
        Ok(Self {
            params,
            s,
            eps1: params.eps / 2.0,
            schedule,
            cap,
            present,
            size,
            t: 0,
            count: 1,
            out: 0.0,
            svt: None,
            aborted: false,
            firings: Vec::new(),
            log: DrawLog::new(),
        })
    }

    pub fn params(&self) -> &CardParams {
        &self.params
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    /// The AboveThreshold-maintained estimate, regardless of which release is used.
    pub fn svt_out(&self) -> f64 {
        self.out
    }

    /// Refreshes of the released count, including the initial one at `t = 1`.
    pub fn firings(&self) -> &[Firing] {
        &self.firings
    }

    pub fn draw_log(&self) -> &DrawLog {
        &self.log
    }

    fn log_term(&self, t: u64) -> f64 {
        match (self.params.horizon, self.schedule) {
            (Horizon::Known(h), _) => (2.0 * h as f64 / self.params.beta).ln(),
            (_, Some(sch)) => (2.0 / sch.beta_t(t)).ln(),
            _ => unreachable!("unknown horizon carries a schedule"),
        }
    }

    /// `24 S / eps_1 * ln(2T / beta)`, or with `ln(2 / beta_t)` for an unknown horizon.
    pub fn thresh(&self, t: u64) -> f64 {
        24.0 * self.s as f64 / self.eps1 * self.log_term(t)
    }

    /// `alpha_t = Thresh_t / 3`: the minimum drift between two refreshes on a
    /// conditioned run.
    pub fn alpha(&self, t: u64) -> f64 {
        self.thresh(t) / 3.0
    }

    /// `min(cap, 4 alpha_t)` where `cap = min(d, K)`.
    pub fn card_error_bound(&self, t: u64) -> f64 {
        self.cap.min(4.0 * self.alpha(t.max(1)))
    }

    /// Whether the release at `t` is the trivial all-zero output.
    pub fn trivial_at(&self, t: u64) -> bool {
        self.cap <= 4.0 * self.alpha(t.max(1))
    }

    fn caps(&self, t: u64) -> (f64, f64, f64) {
        let se = self.s as f64 / self.eps1;
        let nu_log = match self.schedule {
            None => (self.s as f64 / self.params.beta).ln(),
            Some(sch) => (self.s as f64 / sch.beta_t(t)).ln(),
        };
        let l = self.log_term(t);
        (2.0 * se * l, 4.0 * se * l, se * nu_log.max(0.0))
    }

    fn refresh(&mut self, src: &mut NoiseSource) -> Result<()> {
        let t = self.t;
        let (tau_cap, _, nu_cap) = self.caps(t);
        let svt = AboveThreshold::new(self.eps1 / self.s as f64, 1.0, src)?;
        self.log.record(t, DrawKind::Tau, svt.tau(), tau_cap);
        let nu = src.laplace(self.s as f64 / self.eps1)?;
        self.log.record(t, DrawKind::Nu, nu, nu_cap);
        self.svt = Some(svt);
        self.out = self.size as f64 + nu;
        self.firings.push(Firing { t, size: self.size });
        Ok(())
    }

    fn apply(&mut self, inserts: &[u64], deletes: &[u64]) -> Result<()> {
        for &x in inserts.iter().chain(deletes) {
            if x == 0 || x > self.params.d {
                return param(format!("user {x} outside [1, {}]", self.params.d));
            }
        }
        if inserts.iter().any(|x| deletes.contains(x)) {
            return param("a user is both inserted and deleted in one step");
        }
        for &x in inserts {
            if !self.present[x as usize] {
                self.present[x as usize] = true;
                self.size += 1;
            }
        }
        for &x in deletes {
            if self.present[x as usize] {
                self.present[x as usize] = false;
                self.size -= 1;
            }
        }
        Ok(())
    }

    /// One time step; returns the released count.
    pub fn card_update(
        &mut self,
        inserts: &[u64],
        deletes: &[u64],
        src: &mut NoiseSource,
    ) -> Result<f64> {
        if self.aborted {
            return state("instance aborted after exceeding its stopping parameter");
        }
        if let Horizon::Known(h) = self.params.horizon {
            if self.t >= h {
                return state(format!("time {} is past the horizon {h}", self.t + 1));
            }
        }
        self.apply(inserts, deletes)?;
        self.t += 1;
        let t = self.t;
        if t == 1 {
            self.refresh(src)?;
        } else {
            let (_, mu_cap, _) = self.caps(t);
            let q = (self.out - self.size as f64).abs();
            let thresh = self.thresh(t);
            let svt = self.svt.as_mut().expect("initialised at t = 1");
            let ans = svt.step(q, thresh, src)?;
            let mu = svt.last_mu();
            self.log.record(t, DrawKind::Mu, mu, mu_cap);
            if ans == Answer::Yes {
                self.count += 1;
                if self.count > self.s {
                    self.aborted = true;
                    return state(format!("stopping parameter {} exceeded at t = {t}", self.s));
                }
                self.refresh(src)?;
            }
        }
        Ok(self.released())
    }

    /// Released count at the current step: the refreshed estimate, or 0 when
    /// the trivial output has the smaller bound.
    pub fn released(&self) -> f64 {
        if self.trivial_at(self.t) {
            0.0
        } else {
            self.out
        }
    }

    fn snapshot(&self) -> Vec<bool> {
        self.present.clone()
    }
}

/// Runs instances with budget guesses `K_0, 2 K_0, 4 K_0, ...`; instance `j`
/// (1-based) uses `eps_j = eps / (6 pi^2 j^2)` and `beta_j = 6 beta / (pi^2 j^2)`.
#[derive(Debug, Clone)]
pub struct DoublingWrapper {
    d: u64,
    eps: EpsilonSchedule,
    betas: FailureSchedule,
    horizon: Horizon,
    k_guess: u64,
    j: u64,
    t: u64,
    inner: CardinalityState,
    restarts: Vec<u64>,
    retired: DrawLog,
}

impl DoublingWrapper {
    pub fn new(d: u64, k0: u64, eps: f64, beta: f64, horizon: Horizon) -> Result<Self> {
        let eps = EpsilonSchedule::new(eps)?;
        let betas = FailureSchedule::new(beta)?;
        let params = Self::params_for(d, k0, 1, eps, betas, horizon)?;
        Ok(Self {
            d,
            eps,
            betas,
            horizon,
            k_guess: k0,
            j: 1,
            t: 0,
            inner: CardinalityState::build(params, d as f64, Vec::new())?,
            restarts: Vec::new(),
            retired: DrawLog::new(),
        })
    }

    fn params_for(
        d: u64,
        k: u64,
        j: u64,
        eps: EpsilonSchedule,
        betas: FailureSchedule,
        horizon: Horizon,
    ) -> Result<CardParams> {
        if k == 0 {
            return param("initial K guess must be >= 1");
        }
        Ok(CardParams::new(
            d,
            k,
            eps.epsilon_j(j),
            betas.beta_t(j),
            horizon,
        ))
    }

    /// Parameters of instance `j` under initial guess `k0`.
    pub fn instance_params(&self, j: u64, k0: u64) -> Result<CardParams> {
        let k = k0.checked_shl((j - 1) as u32).unwrap_or(u64::MAX);
        Self::params_for(self.d, k, j, self.eps, self.betas, self.horizon)
    }

    pub fn j(&self) -> u64 {
        self.j
    }

    pub fn k_guess(&self) -> u64 {
        self.k_guess
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Global time steps at which a new instance started.
    pub fn restarts(&self) -> &[u64] {
        &self.restarts
    }

    pub fn instance(&self) -> &CardinalityState {
        &self.inner
    }

    pub fn size(&self) -> u64 {
        self.inner.size()
    }

    pub fn wrapper_update(
        &mut self,
        inserts: &[u64],
        deletes: &[u64],
        src: &mut NoiseSource,
    ) -> Result<f64> {
        self.t += 1;
        match self.inner.card_update(inserts, deletes, src) {
            Ok(v) => Ok(v),
            Err(crate::Error::State(_)) if self.inner.aborted() => {
                self.k_guess = self.k_guess.saturating_mul(2);
                self.j += 1;
                self.restarts.push(self.t);
                self.retired.absorb(self.inner.draw_log());
                let params = Self::params_for(
                    self.d,
                    self.k_guess,
                    self.j,
                    self.eps,
                    self.betas,
                    self.horizon,
                )?;
                // snapshot restart: the new instance starts from the current set
                self.inner = CardinalityState::build(params, self.d as f64, self.inner.snapshot())?;
                self.inner.card_update(&[], &[], src)
            }
            Err(e) => Err(e),
        }
    }

    /// Draws of every instance so far.
    pub fn draw_log(&self) -> DrawLog {
        let mut log = self.retired.clone();
        log.absorb(self.inner.draw_log());
        log
    }

    /// Bound of the running instance at its own time step.
    pub fn error_bound(&self) -> f64 {
        self.inner.card_error_bound(self.inner.t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_s_examples() {
        assert_eq!(
            choose_s(10_000, Horizon::Known(1024), 1.0, 0.1).unwrap(),
            33
        );
        assert_eq!(choose_s(1, Horizon::Known(1024), 1.0, 0.1).unwrap(), 1);
        assert_eq!(choose_s(10_000, Horizon::Unknown, 1.0, 0.1).unwrap(), 100);
    }

    #[test]
    fn thresh_example() {
        let mut p = CardParams::new(100, 100, 1.0, 0.1, Horizon::Known(1024));
        p.s = Some(10);
        let st = CardinalityState::new(p).unwrap();
        assert!((st.thresh(5) - 480.0 * 20480f64.ln()).abs() < 1e-9);
        assert!((st.thresh(5) - 4765.0).abs() < 1.0);
    }

    #[test]
    fn empty_stream_is_constant() {
        let mut src = NoiseSource::live(1);
        let p = CardParams::new(10_000, 1_000_000, 1.0, 0.1, Horizon::Unknown);
        let mut st = CardinalityState::new(p).unwrap();
        let first = st.card_update(&[], &[], &mut src).unwrap();
        for _ in 0..200 {
            assert_eq!(st.card_update(&[], &[], &mut src).unwrap(), first);
        }
        assert_eq!(st.count(), 1);
    }

    #[test]
    fn rejects_overlap_and_range() {
        let mut src = NoiseSource::off();
        let mut st =
            CardinalityState::new(CardParams::new(4, 4, 1.0, 0.1, Horizon::Known(8))).unwrap();
        assert!(st.card_update(&[1], &[1], &mut src).is_err());
        assert!(st.card_update(&[5], &[], &mut src).is_err());
    }

    #[test]
    fn wrapper_schedule_ratio() {
        let w = DoublingWrapper::new(8, 1, 1.0, 0.1, Horizon::Unknown).unwrap();
        let a = w.instance_params(1, 1).unwrap();
        let b = w.instance_params(2, 1).unwrap();
        assert!((b.eps / a.eps - 0.25).abs() < 1e-12);
        assert_eq!(b.k, 2);
    }
}
