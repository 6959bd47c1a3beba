//! Dyadic intervals `[(k-1) 2^l + 1, min(k 2^l, u)]` over the universe `[1, u]`.

use crate::error::{param, Result};
use crate::noise::ceil_log2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
    pub start: u64,
    pub end: u64,
}

impl DyadicInterval {
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

/// All dyadic intervals of `[1, u]`, levels `0..=ceil(log2 u)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicIndex {
    u: u64,
    top: u32,
    offsets: Vec<usize>,
}

impl DyadicIndex {
    pub fn new(u: u64) -> Result<Self> {
        if u == 0 {
            return param("universe size must be >= 1");
        }
        let top = ceil_log2(u);
        let mut offsets = Vec::with_capacity(top as usize + 2);
        let mut acc = 0usize;
        for l in 0..=top {
            offsets.push(acc);
            acc += Self::level_len(u, l) as usize;
        }
        offsets.push(acc);
        Ok(Self { u, top, offsets })
    }

    fn level_len(u: u64, level: u32) -> u64 {
        (u + (1u64 << level) - 1) >> level
    }

    pub fn u(&self) -> u64 {
        self.u
    }

    /// Highest level, `ceil(log2 u)`.
    pub fn top(&self) -> u32 {
        self.top
    }

    /// Number of levels a point belongs to, `ceil(log2 u) + 1`.
    pub fn depth(&self) -> u32 {
        self.top + 1
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intervals_at(&self, level: u32) -> u64 {
        Self::level_len(self.u, level)
    }

    pub fn interval(&self, level: u32, index: u64) -> Result<DyadicInterval> {
        if level > self.top || index == 0 || index > self.intervals_at(level) {
            return param(format!(
                "no dyadic interval at level {level}, index {index}"
            ));
        }
        Ok(self.make(level, index))
    }

    fn make(&self, level: u32, index: u64) -> DyadicInterval {
        let w = 1u64 << level;
        DyadicInterval {
            level,
            index,
            start: (index - 1) * w + 1,
            end: (index * w).min(self.u),
        }
    }

    pub fn root(&self) -> DyadicInterval {
        self.make(self.top, 1)
    }

    /// Dense id in `0..len()`.
    pub fn id(&self, iv: &DyadicInterval) -> usize {
        self.offsets[iv.level as usize] + (iv.index - 1) as usize
    }

    pub fn containing(&self, level: u32, x: u64) -> DyadicInterval {
        self.make(level, ((x - 1) >> level) + 1)
    }

    pub fn parent(&self, iv: &DyadicInterval) -> Option<DyadicInterval> {
        (iv.level < self.top).then(|| self.make(iv.level + 1, iv.index.div_ceil(2)))
    }

    pub fn children(&self, iv: &DyadicInterval) -> Vec<DyadicInterval> {
        if iv.level == 0 {
            return Vec::new();
        }
        let l = iv.level - 1;
        let mut out = vec![self.make(l, 2 * iv.index - 1)];
        if 2 * iv.index <= self.intervals_at(l) {
            out.push(self.make(l, 2 * iv.index));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        (0..=self.top).flat_map(move |l| (1..=self.intervals_at(l)).map(move |k| self.make(l, k)))
    }

    fn check_point(&self, x: u64) -> Result<()> {
        if x == 0 || x > self.u {
            return param(format!("point {x} outside [1, {}]", self.u));
        }
        Ok(())
    }

    /// Intervals containing `x`, leaf first.
    pub fn ancestors(&self, x: u64) -> Result<Vec<DyadicInterval>> {
        self.check_point(x)?;
        Ok((0..=self.top).map(|l| self.containing(l, x)).collect())
    }

    /// Maximal dyadic intervals tiling `[a, b]`, sorted by start.
    pub fn cover(&self, a: u64, b: u64) -> Result<Vec<DyadicInterval>> {
        self.check_point(a)?;
        self.check_point(b)?;
        if a > b {
            return param(format!("empty range [{a}, {b}]"));
        }
        // greedy from the left: the highest aligned block that fits
        let mut out = Vec::with_capacity(self.cover_bound() as usize + 1);
        let mut s = a;
        while s <= b {
            let mut l = if s == 1 {
                self.top
            } else {
                (s - 1).trailing_zeros().min(self.top)
            };
            while l > 0 && (s - 1 + (1u64 << l)).min(self.u) > b {
                l -= 1;
            }
            let iv = self.make(l, ((s - 1) >> l) + 1);
            s = iv.end + 1;
            out.push(iv);
        }
        Ok(out)
    }

    /// Worst-case cover size, `max(1, 2 ceil(log2 u))`.
    pub fn cover_bound(&self) -> u64 {
        (2 * self.top as u64).max(1)
    }
}
