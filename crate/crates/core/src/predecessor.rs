//! Partially dynamic (insert-only) private predecessor search.
//!
//! The structure is a binary tree over dyadic intervals of `[1, u]`. Nodes
//! become active top-down: the root after `2 ceil(log2 u)` insertions, the
//! children of a node once that node is marked heavy. Every active node runs
//! two noisy threshold tests on its count; the lower one marks it heavy, the
//! higher one marks it finished and retires it. Queries only read marks.

use std::collections::HashMap;

use crate::draws::{DrawKind, DrawLog};
use crate::dyadic::DyadicIndex;
use crate::error::{check_pos, check_prob, param, Result};
use crate::noise::{ceil_log2, laplace_sum_bound, FailureSchedule, NoiseSource};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredParams {
    pub eps: f64,
    pub beta: f64,
    /// Heavy-threshold constant, `250 (1 + eps)` by default.
    pub c1: f64,
    /// Finished-threshold constant, `50 (1 + eps)` by default.
    pub c2: f64,
    /// Fixed group size instead of `k_t`; for fixtures.
    pub k_override: Option<u64>,
}

impl PredParams {
    pub fn new(eps: f64, beta: f64) -> Self {
        Self {
            eps,
            beta,
            c1: 250.0 * (1.0 + eps),
            c2: 50.0 * (1.0 + eps),
            k_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Marks {
    pub active: bool,
    pub heavy: bool,
    pub finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeNoise {
    nu: f64,
    tau1: f64,
    tau2: f64,
}

#[derive(Debug, Clone)]
pub struct PredNode {
    pub start: u64,
    pub end: u64,
    pub depth: u32,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
    pub marks: Marks,
    /// Noisy count `c~`; meaningful only while active.
    pub noisy: f64,
    pub activated_at: Option<u64>,
    exact: u64,
    noise: Option<NodeNoise>,
}

impl PredNode {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: u64) -> bool {
        self.start <= x && x <= self.end
    }
}

/// Which branch of the query procedure produced an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryCase {
    /// Finished node left of `q`, fewer than `k_t` heavy cover nodes.
    FinishedLight,
    /// Finished node left of `q`, at least `k_t` heavy cover nodes.
    FinishedHeavy,
    /// No finished node, fewer than `k_t` heavy cover nodes (answer is bottom).
    Empty,
    /// No finished node, at least `k_t` heavy cover nodes.
    Heavy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredAnswer {
    pub value: Option<u64>,
    pub case: QueryCase,
    /// Ranges of the cover nodes the case analysis looked at.
    pub cover: Vec<(u64, u64)>,
}

#[derive(Debug, Clone)]
pub struct PredTree {
    u: u64,
    log_u: f64,
    params: PredParams,
    schedule: FailureSchedule,
    index: DyadicIndex,
    nodes: Vec<PredNode>,
    by_range: HashMap<(u64, u64), usize>,
    present: Vec<bool>,
    running: Vec<usize>,
    finished: Vec<usize>,
    active_count: u64,
    t: u64,
    log: DrawLog,
    bound_cache: Vec<f64>,
}

/// Children of `[s, e]`: split after the largest power of two strictly below its length.
pub fn split(start: u64, end: u64) -> Option<((u64, u64), (u64, u64))> {
    let n = end - start + 1;
    if n == 1 {
        return None;
    }
    let h = 1u64 << (ceil_log2(n) - 1);
    Some(((start, start + h - 1), (start + h, end)))
}

impl PredTree {
    /// Guarantees `2 eps`-DP with the given `eps`; see [`PredTree::with_total_budget`].
    pub fn new(u: u64, params: PredParams) -> Result<Self> {
        if u < 2 {
            return param("predecessor universe needs u >= 2");
        }
        check_pos("epsilon", params.eps)?;
        check_prob("beta", params.beta)?;
        check_pos("c1", params.c1)?;
        check_pos("c2", params.c2)?;
        if params.k_override == Some(0) {
            return param("group size must be >= 1");
        }
        let index = DyadicIndex::new(u)?;
        let mut nodes = Vec::new();
        let mut by_range = HashMap::new();
        let mut stack = vec![(1u64, u, None::<usize>, 0u32, false)];
        // explicit stack; children are linked when popped
        while let Some((s, e, parent, depth, right)) = stack.pop() {
            let id = nodes.len();
            nodes.push(PredNode {
                start: s,
                end: e,
                depth,
                parent,
                children: None,
                marks: Marks::default(),
                noisy: 0.0,
                activated_at: None,
                exact: 0,
                noise: None,
            });
            by_range.insert((s, e), id);
            if let Some(p) = parent {
                let c = nodes[p].children.get_or_insert((usize::MAX, usize::MAX));
                if right {
                    c.1 = id;
                } else {
                    c.0 = id;
                }
            }
            if let Some((l, r)) = split(s, e) {
                stack.push((r.0, r.1, Some(id), depth + 1, true));
                stack.push((l.0, l.1, Some(id), depth + 1, false));
            }
        }
        Ok(Self {
            u,
            log_u: ceil_log2(u) as f64,
            params,
            schedule: FailureSchedule::divided(params.beta)?,
            index,
            nodes,
            by_range,
            present: vec![false; u as usize + 1],
            running: Vec::new(),
            finished: Vec::new(),
            active_count: 0,
            t: 0,
            log: DrawLog::new(),
            bound_cache: Vec::new(),
        })
    }

    /// Runs with `eps_total / 2` so the whole structure is `eps_total`-DP.
    pub fn with_total_budget(u: u64, eps_total: f64, beta: f64) -> Result<Self> {
        Self::new(u, PredParams::new(eps_total / 2.0, beta))
    }

    pub fn u(&self) -> u64 {
        self.u
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &PredParams {
        &self.params
    }

    pub fn nodes(&self) -> &[PredNode] {
        &self.nodes
    }

    pub fn node_id(&self, start: u64, end: u64) -> Option<usize> {
        self.by_range.get(&(start, end)).copied()
    }

    pub fn active_count(&self) -> u64 {
        self.active_count
    }

    pub fn draw_log(&self) -> &DrawLog {
        &self.log
    }

    pub fn len(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta_t(&self, t: u64) -> f64 {
        self.schedule.beta_t(t)
    }

    /// `max(1, floor(ceil(log2 u) / sqrt(ln(1/beta_t))))`.
    pub fn k_t(&self, t: u64) -> u64 {
        if let Some(k) = self.params.k_override {
            return k;
        }
        let k = (self.log_u / (1.0 / self.beta_t(t)).ln().sqrt()).floor() as u64;
        k.max(1)
    }

    /// `K_1^t = C_1 / (k_t eps) * log u * ln(2u / beta_t)`.
    pub fn k1(&self, t: u64) -> f64 {
        self.params.c1 / (self.k_t(t) as f64 * self.params.eps)
            * self.log_u
            * (2.0 * self.u as f64 / self.beta_t(t)).ln()
    }

    /// `K_2^t = C_2 / eps * log u * ln(2 / beta_t)`.
    pub fn k2(&self, t: u64) -> f64 {
        self.params.c2 / self.params.eps * self.log_u * (2.0 / self.beta_t(t)).ln()
    }

    fn nu_scale(&self) -> f64 {
        3.0 * self.log_u / self.params.eps
    }

    fn tau_scale(&self) -> f64 {
        6.0 * self.log_u / self.params.eps
    }

    fn mu_scale(&self) -> f64 {
        12.0 * self.log_u / self.params.eps
    }

    // Tail caps with A_t = t^3 active nodes.
    fn caps(&self, t: u64) -> (f64, f64, f64) {
        let t = t.max(1) as f64;
        let a = t * t * t;
        let bt = self.beta_t(t as u64);
        (
            self.nu_scale() * (3.0 * a / bt).ln(),
            self.tau_scale() * (3.0 * a / bt).ln(),
            self.mu_scale() * (3.0 * t * a / bt).ln(),
        )
    }

    /// Bound on the true count of any unfinished node at time `t`.
    pub fn unfinished_bound(&self, t: u64) -> f64 {
        let (nu, tau, mu) = self.caps(t);
        self.k2(t) + nu + tau + mu + 1.0
    }

    /// Bound on the total count of at most `2 log u` light active nodes.
    pub fn light_group_bound(&self, t: u64) -> f64 {
        let m = (2.0 * self.log_u).max(1.0);
        let noise = laplace_sum_bound(
            3 * m as u64,
            self.mu_scale(),
            self.beta_t(t) / self.u as f64,
        )
        .expect("validated parameters");
        m * self.k1(t) + noise
    }

    fn raw_bound(&self, t: u64) -> f64 {
        (self.k_t(t) + 1) as f64 * self.unfinished_bound(t) + self.light_group_bound(t)
    }

    /// Certified bound on `|D ∩ [answer, q]|` at time `t`: `k_t + 1` heavy
    /// unfinished nodes plus one light group, maximised over earlier times.
    pub fn pred_error_at(&self, t: u64) -> f64 {
        let t = t.max(1);
        if let Some(b) = self.bound_cache.get(t as usize - 1) {
            return *b;
        }
        let mut best = self.bound_cache.last().copied().unwrap_or(0.0);
        for s in self.bound_cache.len() as u64 + 1..=t {
            best = best.max(self.raw_bound(s));
        }
        best
    }

    fn activate(&mut self, id: usize, t: u64, src: &mut NoiseSource) -> Result<()> {
        let nu = src.laplace(self.nu_scale())?;
        let tau1 = src.laplace(self.tau_scale())?;
        let tau2 = src.laplace(self.tau_scale())?;
        let (nu_cap, tau_cap, _) = self.caps(t);
        self.log.record(t, DrawKind::Nu, nu, nu_cap);
        self.log.record(t, DrawKind::HeavyTau, tau1, tau_cap);
        self.log.record(t, DrawKind::FinishedTau, tau2, tau_cap);
        let n = &mut self.nodes[id];
        n.marks.active = true;
        n.noisy = n.exact as f64 + nu;
        n.activated_at = Some(t);
        n.noise = Some(NodeNoise { nu, tau1, tau2 });
        self.active_count += 1;
        Ok(())
    }

    fn mark_heavy(
        &mut self,
        id: usize,
        t: u64,
        fresh: &mut Vec<usize>,
        src: &mut NoiseSource,
    ) -> Result<()> {
        self.nodes[id].marks.heavy = true;
        if let Some((l, r)) = self.nodes[id].children {
            for c in [l, r] {
                self.activate(c, t, src)?;
                fresh.push(c);
            }
        }
        Ok(())
    }

    pub fn pred_insert(&mut self, x: u64, src: &mut NoiseSource) -> Result<()> {
        if x == 0 || x > self.u {
            return param(format!("element {x} outside [1, {}]", self.u));
        }
        self.t += 1;
        let t = self.t;
        let new = !self.present[x as usize];
        if new {
            self.present[x as usize] = true;
            let mut id = 0;
            loop {
                self.nodes[id].exact += 1;
                match self.nodes[id].children {
                    Some((l, r)) => id = if self.nodes[l].contains(x) { l } else { r },
                    None => break,
                }
            }
        }
        let mut fresh = Vec::new();
        if self.nodes[0].activated_at.is_none() {
            if t as f64 > 2.0 * self.log_u {
                self.activate(0, t, src)?;
                fresh.push(0);
            }
        } else {
            let k1 = self.k1(t);
            let k2 = self.k2(t);
            let (_, _, mu_cap) = self.caps(t);
            let mut keep = Vec::with_capacity(self.running.len());
            for id in std::mem::take(&mut self.running) {
                if new && self.nodes[id].contains(x) {
                    self.nodes[id].noisy += 1.0;
                }
                let mu1 = src.laplace(self.mu_scale())?;
                let mu2 = src.laplace(self.mu_scale())?;
                self.log.record(t, DrawKind::HeavyMu, mu1, mu_cap);
                self.log.record(t, DrawKind::FinishedMu, mu2, mu_cap);
                let noise = self.nodes[id].noise.expect("active nodes carry noise");
                let c = self.nodes[id].noisy;
                if c + mu1 > k1 + noise.tau1 && !self.nodes[id].marks.heavy {
                    self.mark_heavy(id, t, &mut fresh, src)?;
                }
                if c + mu2 > k2 + noise.tau2 {
                    if !self.nodes[id].marks.heavy {
                        self.mark_heavy(id, t, &mut fresh, src)?;
                    }
                    self.nodes[id].marks.finished = true;
                    self.finished.push(id);
                } else {
                    keep.push(id);
                }
            }
            self.running = keep;
        }
        self.running.extend(fresh);
        while (self.bound_cache.len() as u64) < t {
            let s = self.bound_cache.len() as u64 + 1;
            let prev = self.bound_cache.last().copied().unwrap_or(0.0);
            self.bound_cache.push(prev.max(self.raw_bound(s)));
        }
        Ok(())
    }

    /// Overwrite the marks of node `[start, end]`; for building fixtures.
    pub fn set_marks(&mut self, start: u64, end: u64, marks: Marks) -> Result<()> {
        let Some(id) = self.node_id(start, end) else {
            return param(format!("[{start}, {end}] is not a tree node"));
        };
        let was = self.nodes[id].marks;
        self.nodes[id].marks = marks;
        if marks.finished && !was.finished {
            self.finished.push(id);
        }
        if !marks.finished {
            self.finished.retain(|&f| f != id);
        }
        Ok(())
    }

    fn heavy_pick(&self, cover: &[usize], k: u64) -> Option<u64> {
        let heavy: Vec<usize> = cover
            .iter()
            .copied()
            .filter(|&c| self.nodes[c].marks.heavy)
            .collect();
        let m = heavy.len() as u64;
        if m < k {
            return None;
        }
        // y = v_{i_{m' - k_t}} (1-based); the m' = k_t edge takes i_1
        let pos = (m - k).max(1) as usize - 1;
        Some(self.nodes[heavy[pos]].start)
    }

    fn cover_nodes(&self, a: u64, b: u64) -> Result<Vec<usize>> {
        self.index
            .cover(a, b)?
            .iter()
            .map(|iv| {
                self.node_id(iv.start, iv.end).ok_or_else(|| {
                    crate::Error::State(format!(
                        "cover piece [{}, {}] is not a tree node",
                        iv.start, iv.end
                    ))
                })
            })
            .collect()
    }

    pub fn pred_query_detailed(&self, q: u64) -> Result<PredAnswer> {
        if q == 0 || q > self.u {
            return param(format!("query {q} outside [1, {}]", self.u));
        }
        let k = self.k_t(self.t.max(1));
        let best = self
            .finished
            .iter()
            .copied()
            .filter(|&f| self.nodes[f].end <= q)
            .max_by(|&a, &b| {
                let (na, nb) = (&self.nodes[a], &self.nodes[b]);
                na.start.cmp(&nb.start).then(na.depth.cmp(&nb.depth))
            });
        match best {
            Some(x) => {
                let x = &self.nodes[x];
                let cover = if x.end < q {
                    self.cover_nodes(x.end + 1, q)?
                } else {
                    Vec::new()
                };
                let ranges = cover
                    .iter()
                    .map(|&c| (self.nodes[c].start, self.nodes[c].end))
                    .collect();
                Ok(match self.heavy_pick(&cover, k) {
                    None => PredAnswer {
                        value: Some(x.start),
                        case: QueryCase::FinishedLight,
                        cover: ranges,
                    },
                    Some(y) => PredAnswer {
                        value: Some(y),
                        case: QueryCase::FinishedHeavy,
                        cover: ranges,
                    },
                })
            }
            None => {
                let cover = self.cover_nodes(1, q)?;
                let ranges = cover
                    .iter()
                    .map(|&c| (self.nodes[c].start, self.nodes[c].end))
                    .collect();
                Ok(match self.heavy_pick(&cover, k) {
                    None => PredAnswer {
                        value: None,
                        case: QueryCase::Empty,
                        cover: ranges,
                    },
                    Some(y) => PredAnswer {
                        value: Some(y),
                        case: QueryCase::Heavy,
                        cover: ranges,
                    },
                })
            }
        }
    }

    /// Some `x <= q` with `1 <= |D ∩ [x, q]| <= pred_error_at(t)` w.h.p., or `None`.
    pub fn pred_query(&self, q: u64) -> Result<Option<u64>> {
        Ok(self.pred_query_detailed(q)?.value)
    }

    /// finished implies heavy implies active, for every node.
    pub fn marks_consistent(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| (!n.marks.finished || n.marks.heavy) && (!n.marks.heavy || n.marks.active))
    }

    /// Every light node has a light active ancestor (itself included), once
    /// the root is active.
    pub fn light_ancestor_claim(&self) -> bool {
        if !self.nodes[0].marks.active {
            return true;
        }
        self.nodes.iter().filter(|n| !n.marks.heavy).all(|n| {
            let mut cur = Some(n);
            while let Some(c) = cur {
                if c.marks.active {
                    return !c.marks.heavy;
                }
                cur = c.parent.map(|p| &self.nodes[p]);
            }
            false
        })
    }

    /// Packed marks (3 bits per node) for monotonicity checks across time.
    pub fn marks_snapshot(&self) -> Vec<u8> {
        self.nodes
            .iter()
            .map(|n| {
                n.marks.active as u8 | (n.marks.heavy as u8) << 1 | (n.marks.finished as u8) << 2
            })
            .collect()
    }

    /// Exact count of elements in `[start, end]` of a node; diagnostics only.
    pub fn node_exact(&self, id: usize) -> u64 {
        self.nodes[id].exact
    }
}
