//! Fully dynamic range counting over `[1, u]` and the predecessor reduction.
//!
//! Every pair of a universe dyadic interval and a time dyadic interval holds
//! the net number of updates inside both, plus Laplace noise. A range query
//! at time `t` sums the cells of `cover(a, b) x cover(1, t)`.
//!
//! Cell noise is a pure function of a per-store seed and the cell key, so a
//! cell's noise is fixed the first time it exists and queries stay read-only.

use std::collections::HashMap;

use crate::counting::Horizon;
use crate::dyadic::{DyadicIndex, DyadicInterval};
use crate::error::{check_pos, check_prob, param, state, Result};
use crate::noise::{laplace_sum_bound, FailureSchedule, NoiseMode, NoiseSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeOp {
    Insert,
    Delete,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn keyed_laplace(seed: u64, key: u64, scale: f64, mode: NoiseMode) -> f64 {
    if mode == NoiseMode::Off {
        return 0.0;
    }
    let mut src = NoiseSource::new(mix(seed ^ mix(key)), mode);
    src.laplace(scale).expect("positive scale")
}

fn cell_key(uid: usize, tid: usize) -> u64 {
    ((uid as u64) << 32) | tid as u64
}

/// Largest number of pieces in `cover(1, t')` over `t' <= t`.
fn prefix_pieces(t: u64) -> u64 {
    (t + 1).ilog2().max(1) as u64
}

fn depth(n: u64) -> u64 {
    crate::noise::ceil_log2(n) as u64 + 1
}

// Known-horizon store over local times 1..=len.
#[derive(Debug, Clone)]
struct Block {
    time: DyadicIndex,
    seed: u64,
    scale: f64,
    cells: Cells,
    // precomputed cell noise for small blocks, same values as the keyed draws
    table: Option<Vec<f64>>,
}

const TABLE_LIMIT: usize = 1 << 20;

// Exact cell counts: dense for small blocks, sparse otherwise.
#[derive(Debug, Clone)]
enum Cells {
    Dense(Vec<i64>),
    Sparse(HashMap<(usize, usize), i64>),
}

impl Block {
    fn new(len: u64, uidx: &DyadicIndex, eps: f64, seed: u64, mode: NoiseMode) -> Result<Self> {
        let time = DyadicIndex::new(len)?;
        let scale = (depth(uidx.u()) * depth(len)) as f64 / eps;
        let n = uidx.len() * time.len();
        let tl = time.len();
        let draw = move |i: usize| keyed_laplace(seed, cell_key(i / tl, i % tl), scale, mode);
        let table = (mode == NoiseMode::Live && n <= TABLE_LIMIT).then(|| {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(draw).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(draw).collect()
            }
        });
        let cells = if n <= TABLE_LIMIT {
            Cells::Dense(vec![0; n])
        } else {
            Cells::Sparse(HashMap::new())
        };
        Ok(Self {
            time,
            seed,
            scale,
            cells,
            table,
        })
    }

    fn update(&mut self, uidx: &DyadicIndex, x: u64, local_t: u64, delta: i64) -> Result<()> {
        let tids: Vec<usize> = self
            .time
            .ancestors(local_t)?
            .iter()
            .map(|j| self.time.id(j))
            .collect();
        for iv in uidx.ancestors(x)? {
            let uid = uidx.id(&iv);
            for &tid in &tids {
                match &mut self.cells {
                    Cells::Dense(v) => v[uid * self.time.len() + tid] += delta,
                    Cells::Sparse(m) => *m.entry((uid, tid)).or_insert(0) += delta,
                }
            }
        }
        Ok(())
    }

    fn cell(&self, uid: usize, tid: usize, mode: NoiseMode) -> f64 {
        let exact = match &self.cells {
            Cells::Dense(v) => v[uid * self.time.len() + tid],
            Cells::Sparse(m) => m.get(&(uid, tid)).copied().unwrap_or(0),
        } as f64;
        let noise = match &self.table {
            Some(t) => t[uid * self.time.len() + tid],
            None => keyed_laplace(self.seed, cell_key(uid, tid), self.scale, mode),
        };
        exact + noise
    }

    fn query(&self, uids: &[usize], local_t: u64, mode: NoiseMode) -> Result<f64> {
        let mut sum = 0.0;
        for j in self.time.cover(1, local_t)? {
            let tid = self.time.id(&j);
            for &uid in uids {
                sum += self.cell(uid, tid, mode);
            }
        }
        Ok(sum)
    }
}

// Unknown-horizon segments have lengths 1, 1, 2, 4, ...; segment j covers
// [1, 1], [2, 2] and (2^(j-1), 2^j] for j >= 2.
fn segment_of(t: u64) -> usize {
    if t <= 1 {
        0
    } else {
        crate::noise::ceil_log2(t) as usize
    }
}

fn segment_start(j: usize) -> u64 {
    if j == 0 {
        1
    } else {
        (1u64 << (j - 1)) + 1
    }
}

fn segment_len(j: usize) -> u64 {
    if j <= 1 {
        1
    } else {
        1u64 << (j - 1)
    }
}

/// Fully dynamic range counts with set semantics.
///
/// With a known horizon the store is `eps`-DP. The unknown-horizon variant
/// additionally releases noisy per-segment interval totals and is `2 eps`-DP.
#[derive(Debug, Clone)]
pub struct RangeCountStore {
    uidx: DyadicIndex,
    horizon: Horizon,
    eps: f64,
    beta: f64,
    mode: NoiseMode,
    seed: u64,
    present: Vec<bool>,
    t: u64,
    blocks: Vec<Block>,
    // noisy totals of finished segments, indexed by universe interval id
    frozen: Vec<Vec<f64>>,
    // exact net totals of the current segment
    running: Vec<i64>,
}

impl RangeCountStore {
    pub fn new(
        u: u64,
        horizon: Horizon,
        eps: f64,
        beta: f64,
        src: &mut NoiseSource,
    ) -> Result<Self> {
        check_pos("epsilon", eps)?;
        check_prob("beta", beta)?;
        if let Horizon::Known(0) = horizon {
            return param("horizon must be >= 1");
        }
        let uidx = DyadicIndex::new(u)?;
        let seed = src.fork_seed();
        let first_len = match horizon {
            Horizon::Known(t) => t,
            Horizon::Unknown => 1,
        };
        let block = Block::new(first_len, &uidx, eps, mix(seed), src.mode())?;
        Ok(Self {
            running: vec![0; uidx.len()],
            uidx,
            horizon,
            eps,
            beta,
            mode: src.mode(),
            seed,
            present: vec![false; u as usize + 1],
            t: 0,
            blocks: vec![block],
            frozen: Vec::new(),
        })
    }

    pub fn u(&self) -> u64 {
        self.uidx.u()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn contains(&self, x: u64) -> bool {
        self.present.get(x as usize).copied().unwrap_or(false)
    }

    fn u_depth(&self) -> u64 {
        depth(self.u())
    }

    fn local_t(&self, t: u64) -> u64 {
        match self.horizon {
            Horizon::Known(_) => t,
            Horizon::Unknown => t - segment_start(segment_of(t)) + 1,
        }
    }

    fn advance(&mut self) -> Result<()> {
        let t = self.t + 1;
        match self.horizon {
            Horizon::Known(h) if t > h => {
                return state(format!("time {t} is past the horizon {h}"))
            }
            Horizon::Known(_) => {}
            Horizon::Unknown => {
                let j = segment_of(t);
                if j == self.blocks.len() {
                    let scale = self.u_depth() as f64 / self.eps;
                    let jj = self.frozen.len() as u64;
                    let totals = self
                        .running
                        .iter()
                        .enumerate()
                        .map(|(id, &c)| {
                            c as f64
                                + keyed_laplace(self.seed, (jj << 40) | id as u64, scale, self.mode)
                        })
                        .collect();
                    self.frozen.push(totals);
                    self.running.iter_mut().for_each(|c| *c = 0);
                    let block = Block::new(
                        segment_len(j),
                        &self.uidx,
                        self.eps,
                        mix(self.seed ^ (j as u64 + 1)),
                        self.mode,
                    )?;
                    self.blocks.push(block);
                }
            }
        }
        self.t = t;
        Ok(())
    }

    /// One time step. Inserting a present element or deleting an absent one
    /// changes nothing but still advances time.
    pub fn range_insert(&mut self, x: u64, op: RangeOp) -> Result<()> {
        if x == 0 || x > self.u() {
            return param(format!("element {x} outside [1, {}]", self.u()));
        }
        self.advance()?;
        let delta = match (op, self.present[x as usize]) {
            (RangeOp::Insert, false) => 1,
            (RangeOp::Delete, true) => -1,
            _ => return Ok(()),
        };
        self.present[x as usize] = delta > 0;
        let local = self.local_t(self.t);
        let uidx = self.uidx.clone();
        self.blocks
            .last_mut()
            .expect("one block")
            .update(&uidx, x, local, delta)?;
        if self.horizon == Horizon::Unknown {
            for iv in uidx.ancestors(x)? {
                self.running[uidx.id(&iv)] += delta;
            }
        }
        Ok(())
    }

    /// Advances time with no update.
    pub fn tick(&mut self) -> Result<()> {
        self.advance()
    }

    fn cover_ids(&self, a: u64, b: u64) -> Result<Vec<usize>> {
        if a == 0 || a > b || b > self.u() {
            return param(format!("range [{a}, {b}] not inside [1, {}]", self.u()));
        }
        Ok(self
            .uidx
            .cover(a, b)?
            .iter()
            .map(|iv| self.uidx.id(iv))
            .collect())
    }

    /// Noisy `|D ∩ [a, b]|` at the current time.
    pub fn range_query(&self, a: u64, b: u64) -> Result<f64> {
        let uids = self.cover_ids(a, b)?;
        if self.t == 0 {
            return Ok(0.0);
        }
        let mut sum = 0.0;
        for totals in &self.frozen {
            sum += uids.iter().map(|&id| totals[id]).sum::<f64>();
        }
        let block = self.blocks.last().expect("one block");
        Ok(sum + block.query(&uids, self.local_t(self.t), self.mode)?)
    }

    /// Bound on the error of every range query at time `t`, holding for all
    /// queries and times simultaneously with probability `1 - beta`.
    pub fn range_error_bound(&self, t: u64, beta: f64) -> Result<f64> {
        check_prob("beta", beta)?;
        if self.mode == NoiseMode::Off {
            return Ok(0.0);
        }
        let t = t.max(1);
        let u = self.u() as f64;
        let pieces = self.uidx.cover_bound();
        match self.horizon {
            Horizon::Known(h) => {
                let scale = (self.u_depth() * depth(h)) as f64 / self.eps;
                laplace_sum_bound(
                    pieces * prefix_pieces(t.min(h)),
                    scale,
                    beta / (h as f64 * u * u),
                )
            }
            Horizon::Unknown => {
                let bt = FailureSchedule::divided(beta)?.beta_t(t) / (2.0 * u * u);
                let j = segment_of(t);
                let len = segment_len(j);
                let local = t - segment_start(j) + 1;
                let scale = (self.u_depth() * depth(len)) as f64 / self.eps;
                let mut b = laplace_sum_bound(pieces * prefix_pieces(local), scale, bt)?;
                if j > 0 {
                    b +=
                        laplace_sum_bound(pieces * j as u64, self.u_depth() as f64 / self.eps, bt)?;
                }
                Ok(b)
            }
        }
    }

    fn pred_threshold(&self) -> Result<f64> {
        self.range_error_bound(self.t, self.beta)
    }

    /// Largest `x <= q` whose noisy count of `[x, q]` exceeds the store's
    /// error bound, found by binary search; `None` if even `[1, q]` does not.
    ///
    /// The search keeps `N(lo) > a` and `N(hi) <= a` with `N(q + 1) = 0`, so the
    /// answer satisfies `1 <= |D ∩ [x, q]| <= 2a + 1` whenever all range errors
    /// are within `a`.
    pub fn fully_dynamic_pred_query(&self, q: u64) -> Result<Option<u64>> {
        let a = self.pred_threshold()?;
        self.pred_search(q, a)
    }

    pub fn pred_search(&self, q: u64, threshold: f64) -> Result<Option<u64>> {
        if q == 0 || q > self.u() {
            return param(format!("query {q} outside [1, {}]", self.u()));
        }
        if self.range_query(1, q)? <= threshold {
            return Ok(None);
        }
        let (mut lo, mut hi) = (1u64, q + 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.range_query(mid, q)? > threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(lo))
    }

    /// Reference downward scan `x = q, q - 1, ...`; O(u) range queries.
    pub fn scan_pred_query(&self, q: u64, threshold: f64) -> Result<Option<u64>> {
        if q == 0 || q > self.u() {
            return param(format!("query {q} outside [1, {}]", self.u()));
        }
        for x in (1..=q).rev() {
            if self.range_query(x, q)? > threshold {
                return Ok(Some(x));
            }
        }
        Ok(None)
    }

    /// Threshold used by [`RangeCountStore::fully_dynamic_pred_query`] at the current time.
    pub fn pred_alpha(&self) -> Result<f64> {
        self.pred_threshold()
    }

    pub fn universe(&self) -> &DyadicIndex {
        &self.uidx
    }

    #[doc(hidden)]
    pub fn cover_of(&self, a: u64, b: u64) -> Result<Vec<DyadicInterval>> {
        self.uidx.cover(a, b)
    }
}
