//! Monotone sensitivity-1 histogram queries.
//!
//! Evaluators are total on real vectors: they are applied to noisy
//! histograms that may hold negative or fractional entries.

use std::fmt;
use std::sync::Arc;

use crate::error::{param, Result};

type Eval = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct MonotoneQuery {
    name: String,
    eval: Arc<Eval>,
}

impl fmt::Debug for MonotoneQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("MonotoneQuery").field(&self.name).finish()
    }
}

impl MonotoneQuery {
    /// Caller promises `q(0) = 0`, sensitivity 1 under the sup norm, and monotonicity.
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        (self.eval)(v)
    }

    pub fn max_sum() -> Self {
        Self::new("max_sum", |v| {
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
    }

    pub fn min_sum() -> Self {
        Self::new("min_sum", |v| {
            v.iter().copied().fold(f64::INFINITY, f64::min)
        })
    }

    pub fn quantile(q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return param(format!("quantile fraction must lie in (0, 1], got {q}"));
        }
        Ok(Self::new(format!("quantile_{q}"), move |v| {
            quantile(v, q).unwrap_or(0.0)
        }))
    }

    /// Column `i` (0-based).
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("column_{i}"), move |v| v[i])
    }

    /// The `i`-th largest entry (1-based), i.e. `Quantile_{(d+1-i)/d}`.
    pub fn kth_largest(i: usize) -> Self {
        Self::new(format!("largest_{i}"), move |v| {
            let mut s = v.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s[i - 1]
        })
    }

    /// All `d` columns.
    pub fn histogram(d: usize) -> Vec<Self> {
        (0..d).map(Self::coordinate).collect()
    }

    /// The `k` largest column sums.
    pub fn top_k(k: usize) -> Vec<Self> {
        (1..=k).map(Self::kth_largest).collect()
    }
}

// ceil(q d), snapping values within rounding noise of an integer.
fn rank(q: f64, d: usize) -> usize {
    let r = q * d as f64;
    let n = if (r - r.round()).abs() < 1e-9 {
        r.round()
    } else {
        r.ceil()
    };
    (n as usize).clamp(1, d)
}

/// Smallest `v_j` with `|{i : v_i <= v_j}| >= ceil(q d)`.
pub fn quantile(v: &[f64], q: f64) -> Result<f64> {
    if v.is_empty() {
        return param("quantile of an empty vector");
    }
    if !(q > 0.0 && q <= 1.0) {
        return param(format!("quantile fraction must lie in (0, 1], got {q}"));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[rank(q, v.len()) - 1])
}

/// Indices (0-based) of the `k` largest entries, ties to the smaller index.
pub fn select_indices(v: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > v.len() {
        return param(format!("need 1 <= k <= {}, got {k}", v.len()));
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// `max_l |c_(l) - c[selected_l]|`, with `c_(l)` the `l`-th largest exact value.
pub fn top_k_select_error(exact: &[f64], selected: &[usize]) -> f64 {
    let mut sorted = exact.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    selected
        .iter()
        .enumerate()
        .map(|(l, &i)| (sorted[l] - exact[i]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 5.0, 9.0], 1.0).unwrap(), 9.0);
        assert_eq!(quantile(&[1.0, 5.0, 9.0], 0.5).unwrap(), 5.0);
        for q in [0.1, 0.5, 1.0] {
            assert_eq!(quantile(&[3.0; 4], q).unwrap(), 3.0);
        }
        assert!(quantile(&[], 0.5).is_err());
        // (d + 1 - i) / d for d = 7 must not round up past the rank
        assert_eq!(
            quantile(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 3.0 / 7.0).unwrap(),
            3.0
        );
    }

    #[test]
    fn select_examples() {
        assert_eq!(select_indices(&[9.0, 5.0, 1.0], 1).unwrap(), vec![0]);
        assert_eq!(select_indices(&[5.0, 9.0, 9.0], 2).unwrap(), vec![1, 2]);
        assert_eq!(select_indices(&[7.0, 7.0, 7.0], 3).unwrap(), vec![0, 1, 2]);
        assert!(select_indices(&[1.0], 2).is_err());
    }

    #[test]
    fn builtin_queries() {
        let v = [4.0, -1.0, 7.0, 2.0];
        assert_eq!(MonotoneQuery::max_sum().eval(&v), 7.0);
        assert_eq!(MonotoneQuery::min_sum().eval(&v), -1.0);
        let top: Vec<f64> = MonotoneQuery::top_k(2).iter().map(|q| q.eval(&v)).collect();
        assert_eq!(top, vec![7.0, 4.0]);
        assert_eq!(MonotoneQuery::coordinate(3).eval(&v), 2.0);
        assert_eq!(top_k_select_error(&v, &[0, 2]), 3.0);
    }
}
