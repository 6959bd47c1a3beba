//! Binary tree mechanism for continual counting and the d-coordinate
//! continual histogram built from it.
//!
//! With a known horizon `T` one complete tree over `[1, T]` is used. With an
//! unknown horizon the time line is cut into segments of lengths
//! `1, 1, 2, 4, 8, ...`, each carrying its own tree; a finished segment
//! contributes its (already noisy) root, so past segments are never re-noised.

use crate::error::{param, state, Result};
use crate::noise::{
    ceil_log2, gaussian_sigma, gaussian_sum_bound, laplace_sum_bound, NoiseMode, NoiseSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Known(u64),
    Unknown,
}

/// How node noise is calibrated for a tree with `levels` levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeNoise {
    /// `Lap(levels / eps)`; `eps` is the budget of this single counter.
    Laplace { eps: f64 },
    /// `N(0, sigma^2)` with `sigma = sqrt(levels * coords) * sqrt(2 ln(2/delta)) / eps`:
    /// the L2 sensitivity of all node sums of `coords` counters together,
    /// for one `(eps, delta)` budget shared by the whole histogram.
    Gaussian { eps: f64, delta: f64, coords: usize },
}

impl NodeNoise {
    fn validate(&self) -> Result<()> {
        match *self {
            NodeNoise::Laplace { eps } => crate::error::check_pos("epsilon", eps),
            NodeNoise::Gaussian { eps, delta, coords } => {
                crate::error::check_pos("epsilon", eps)?;
                crate::error::check_prob("delta", delta)?;
                if coords == 0 {
                    return param("gaussian tree needs coords >= 1");
                }
                Ok(())
            }
        }
    }

    /// Laplace scale or Gaussian sigma of one node.
    pub fn magnitude(&self, levels: u32) -> f64 {
        match *self {
            NodeNoise::Laplace { eps } => levels as f64 / eps,
            NodeNoise::Gaussian { eps, delta, coords } => {
                gaussian_sigma(((levels as usize * coords) as f64).sqrt(), eps, delta)
                    .expect("validated at construction")
            }
        }
    }

    fn draw(&self, levels: u32, src: &mut NoiseSource) -> Result<f64> {
        let m = self.magnitude(levels);
        match self {
            NodeNoise::Laplace { .. } => src.laplace(m),
            NodeNoise::Gaussian { .. } => src.gaussian(m),
        }
    }

    /// Bound on the sum of `k` node noises of magnitude at most `m`.
    fn sum_bound(&self, k: u64, m: f64, beta: f64) -> Result<f64> {
        match self {
            NodeNoise::Laplace { .. } => laplace_sum_bound(k, m, beta),
            NodeNoise::Gaussian { .. } => gaussian_sum_bound(k, m, beta),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Node {
    sum: f64,
    noise: f64,
}

/// Complete tree over positions `1..=len`.
#[derive(Debug, Clone)]
struct Segment {
    len: u64,
    levels: u32,
    nodes: Vec<Vec<Node>>,
    filled: u64,
}

impl Segment {
    fn new(len: u64) -> Self {
        let levels = ceil_log2(len) + 1;
        Self {
            len,
            levels,
            nodes: vec![Vec::new(); levels as usize],
            filled: 0,
        }
    }

    fn insert(&mut self, x: f64, noise: &NodeNoise, src: &mut NoiseSource) -> Result<()> {
        let p = self.filled + 1;
        for l in 0..self.levels {
            let idx = ((p - 1) >> l) as usize;
            let level = &mut self.nodes[l as usize];
            if idx == level.len() {
                level.push(Node {
                    sum: 0.0,
                    noise: noise.draw(self.levels, src)?,
                });
            }
            level[idx].sum += x;
        }
        self.filled = p;
        Ok(())
    }

    fn prefix(&self, p: u64) -> f64 {
        let mut pos = 0u64;
        let mut acc = 0.0;
        for l in (0..self.levels).rev() {
            if p & (1u64 << l) != 0 {
                let n = self.nodes[l as usize][(pos >> l) as usize];
                acc += n.sum + n.noise;
                pos += 1u64 << l;
            }
        }
        acc
    }
}

fn bit_len(p: u64) -> u64 {
    (64 - p.leading_zeros()) as u64
}

// Largest popcount of an integer in [1, p].
fn max_popcount(p: u64) -> u64 {
    let b = bit_len(p);
    if p == (1u64 << b) - 1 {
        b
    } else {
        b - 1
    }
}

// Segment of time t in the unknown-horizon layout: (index j >= 1, offset, len).
fn unknown_segment(t: u64) -> (u64, u64, u64) {
    if t <= 1 {
        return (1, 0, 1);
    }
    // segment j >= 2 covers (2^(j-2), 2^(j-1)]
    let j = bit_len(t - 1) + 1;
    let off = 1u64 << (j - 2);
    (j, off, off)
}

/// Continual counter over a stream of nonnegative reals.
#[derive(Debug, Clone)]
pub struct CountingTree {
    horizon: Horizon,
    noise: NodeNoise,
    mode: NoiseMode,
    current: Segment,
    seg_index: u64,
    seg_offset: u64,
    frozen: f64,
    t: u64,
}

impl CountingTree {
    pub fn new(horizon: Horizon, noise: NodeNoise, mode: NoiseMode) -> Result<Self> {
        noise.validate()?;
        let current = match horizon {
            Horizon::Known(0) => return param("known horizon must be >= 1"),
            Horizon::Known(t) => Segment::new(t),
            Horizon::Unknown => Segment::new(1),
        };
        Ok(Self {
            horizon,
            noise,
            mode,
            current,
            seg_index: 1,
            seg_offset: 0,
            frozen: 0.0,
            t: 0,
        })
    }

    /// Laplace counter with budget `eps`.
    pub fn laplace(horizon: Horizon, eps: f64, mode: NoiseMode) -> Result<Self> {
        Self::new(horizon, NodeNoise::Laplace { eps }, mode)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn insert(&mut self, x: f64, src: &mut NoiseSource) -> Result<()> {
        if !(x >= 0.0 && x.is_finite()) {
            return param(format!("counter input must be a nonnegative real, got {x}"));
        }
        if self.current.filled == self.current.len {
            match self.horizon {
                Horizon::Known(t) => return state(format!("insert past horizon T = {t}")),
                Horizon::Unknown => {
                    self.frozen += self.current.prefix(self.current.len);
                    self.seg_offset += self.current.len;
                    self.seg_index += 1;
                    let (_, _, len) = unknown_segment(self.seg_offset + 1);
                    self.current = Segment::new(len);
                }
            }
        }
        self.current.insert(x, &self.noise, src)?;
        self.t += 1;
        Ok(())
    }

    pub fn query(&self) -> Result<f64> {
        if self.t == 0 {
            return state("query before any insert");
        }
        Ok(self.frozen + self.current.prefix(self.current.filled))
    }

    /// Number of noisy nodes summed by a query at time `t`.
    pub fn nodes_at(&self, t: u64) -> u64 {
        match self.horizon {
            Horizon::Known(_) => t.count_ones() as u64,
            Horizon::Unknown => {
                let (j, off, _) = unknown_segment(t);
                (j - 1) + (t - off).count_ones() as u64
            }
        }
    }

    /// `max_{t' <= t} nodes_at(t')`.
    pub fn node_bound(&self, t: u64) -> u64 {
        let t = t.max(1);
        match self.horizon {
            Horizon::Known(_) => max_popcount(t),
            Horizon::Unknown => {
                let (j, off, _) = unknown_segment(t);
                let mut best = (j - 1) + max_popcount(t - off);
                for i in 2..j {
                    let len = 1u64 << (i - 2);
                    best = best.max((i - 1) + max_popcount(len));
                }
                best.max(1)
            }
        }
    }

    /// Largest per-node noise magnitude among nodes used up to time `t`.
    pub fn magnitude_at(&self, t: u64) -> f64 {
        let levels = match self.horizon {
            Horizon::Known(h) => ceil_log2(h) + 1,
            Horizon::Unknown => ceil_log2(unknown_segment(t.max(1)).2) + 1,
        };
        self.noise.magnitude(levels)
    }

    /// `B` with `Pr[|query(t) - exact(t)| > B] <= beta`; zero when noise is off.
    pub fn error_bound(&self, t: u64, beta: f64) -> Result<f64> {
        crate::error::check_prob("beta", beta)?;
        if self.mode == NoiseMode::Off {
            return Ok(0.0);
        }
        self.noise
            .sum_bound(self.node_bound(t), self.magnitude_at(t), beta)
    }
}

/// Noise family of a [`HistogramMechanism`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramNoise {
    /// eps-DP, each counter gets `eps / d`.
    Laplace { eps: f64 },
    /// (eps, delta)-DP with Gaussian node noise.
    Gaussian { eps: f64, delta: f64 },
}

/// `d` counters in parallel.
#[derive(Debug, Clone)]
pub struct HistogramMechanism {
    counters: Vec<CountingTree>,
    noise: HistogramNoise,
}

impl HistogramMechanism {
    pub fn new(d: usize, horizon: Horizon, noise: HistogramNoise, mode: NoiseMode) -> Result<Self> {
        if d == 0 {
            return param("histogram dimension must be >= 1");
        }
        let node = match noise {
            HistogramNoise::Laplace { eps } => NodeNoise::Laplace {
                eps: eps / d as f64,
            },
            HistogramNoise::Gaussian { eps, delta } => NodeNoise::Gaussian {
                eps,
                delta,
                coords: d,
            },
        };
        let counters = (0..d)
            .map(|_| CountingTree::new(horizon, node, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { counters, noise })
    }

    pub fn d(&self) -> usize {
        self.counters.len()
    }

    pub fn t(&self) -> u64 {
        self.counters[0].t()
    }

    pub fn noise(&self) -> HistogramNoise {
        self.noise
    }

    pub fn insert(&mut self, v: &[f64], src: &mut NoiseSource) -> Result<()> {
        if v.len() != self.d() {
            return param(format!(
                "expected a {}-vector, got length {}",
                self.d(),
                v.len()
            ));
        }
        if let Some(x) = v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
            return param(format!("histogram input must be nonnegative, got {x}"));
        }
        for (c, &x) in self.counters.iter_mut().zip(v) {
            c.insert(x, src)?;
        }
        Ok(())
    }

    pub fn query(&self) -> Result<Vec<f64>> {
        self.counters.iter().map(|c| c.query()).collect()
    }

    /// Max-coordinate error bound at time `t` with failure `beta` (split `beta / d`).
    pub fn error_bound(&self, t: u64, beta: f64) -> Result<f64> {
        self.counters[0].error_bound(t, beta / self.d() as f64)
    }
}
