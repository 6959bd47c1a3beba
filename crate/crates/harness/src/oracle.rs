//! Exact reference computations. Nothing here calls into the mechanisms.

/// Exact column sums, updated one row at a time.
#[derive(Debug, Clone, Default)]
pub struct HistogramOracle {
    sums: Vec<u64>,
}

impl HistogramOracle {
    pub fn new(d: usize) -> Self {
        Self { sums: vec![0; d] }
    }

    pub fn push(&mut self, row: &[u8]) {
        for (s, &b) in self.sums.iter_mut().zip(row) {
            *s += b as u64;
        }
    }

    pub fn sums(&self) -> &[u64] {
        &self.sums
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.sums.iter().map(|&s| s as f64).collect()
    }
}

/// Per-step histograms of a whole row stream.
pub fn oracle_histogram(rows: &[Vec<u8>]) -> Vec<Vec<u64>> {
    let d = rows.first().map_or(0, Vec::len);
    let mut acc = vec![0u64; d];
    rows.iter()
        .map(|r| {
            for i in 0..d {
                acc[i] += r[i] as u64;
            }
            acc.clone()
        })
        .collect()
}

/// Query evaluators written against exact integer histograms.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleQuery {
    MaxSum,
    MinSum,
    /// Smallest `c_j` with at least `ceil(q d)` columns `<= c_j`.
    Quantile(f64),
    Coordinate(usize),
    /// `i`-th largest column (1-based).
    KthLargest(usize),
}

impl OracleQuery {
    pub fn eval(&self, h: &[u64]) -> u64 {
        match *self {
            OracleQuery::MaxSum => h.iter().copied().max().unwrap_or(0),
            OracleQuery::MinSum => h.iter().copied().min().unwrap_or(0),
            OracleQuery::Quantile(q) => {
                // rank in exact rational arithmetic where q is a short decimal
                let d = h.len() as f64;
                let need = ((q * d) - 1e-9).ceil().max(1.0) as usize;
                h.iter()
                    .copied()
                    .filter(|&c| h.iter().filter(|&&x| x <= c).count() >= need)
                    .min()
                    .unwrap_or(0)
            }
            OracleQuery::Coordinate(i) => h[i],
            OracleQuery::KthLargest(i) => {
                let mut v = h.to_vec();
                v.sort_unstable_by(|a, b| b.cmp(a));
                v[i - 1]
            }
        }
    }
}

/// Exact set with membership and size.
#[derive(Debug, Clone)]
pub struct SetOracle {
    present: Vec<bool>,
    size: u64,
    updates: u64,
}

impl SetOracle {
    pub fn new(universe: u64) -> Self {
        Self {
            present: vec![false; universe as usize + 1],
            size: 0,
            updates: 0,
        }
    }

    /// Returns whether the set changed.
    pub fn insert(&mut self, x: u64) -> bool {
        let p = &mut self.present[x as usize];
        if *p {
            return false;
        }
        *p = true;
        self.size += 1;
        self.updates += 1;
        true
    }

    pub fn delete(&mut self, x: u64) -> bool {
        let p = &mut self.present[x as usize];
        if !*p {
            return false;
        }
        *p = false;
        self.size -= 1;
        self.updates += 1;
        true
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// Effective insertions and deletions so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn contains(&self, x: u64) -> bool {
        self.present[x as usize]
    }

    /// `|D ∩ [a, b]|` by direct count.
    pub fn count(&self, a: u64, b: u64) -> u64 {
        self.present[a as usize..=b as usize]
            .iter()
            .filter(|p| **p)
            .count() as u64
    }

    /// Prefix counts `F(x) = |D ∩ [1, x]|`, `F(0) = 0`.
    pub fn prefix(&self) -> Vec<u64> {
        let mut f = Vec::with_capacity(self.present.len());
        let mut acc = 0;
        f.push(0);
        for &p in &self.present[1..] {
            acc += p as u64;
            f.push(acc);
        }
        f
    }

    /// Largest element `<= q`.
    pub fn predecessor(&self, q: u64) -> Option<u64> {
        (1..=q).rev().find(|&x| self.present[x as usize])
    }
}
