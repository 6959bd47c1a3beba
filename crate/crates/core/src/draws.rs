//! Record of noise draws against their analytic tail caps.
//!
//! A run is "conditioned" when every recorded magnitude stayed within its cap.
//! The structural guarantees (interval budgets, active-node counts, firing
//! gaps) are asserted only on conditioned runs.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DrawKind {
    /// Per-step gate noise.
    Mu,
    /// Per-interval threshold noise.
    Tau,
    /// Per-query threshold-update noise.
    Gamma,
    /// Error of the continual histogram at an interval boundary.
    Histogram,
    /// Release noise (predecessor snapshot, cardinality output).
    Nu,
    HeavyTau,
    FinishedTau,
    HeavyMu,
    FinishedMu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawRecord {
    pub t: u64,
    pub kind: DrawKind,
    pub value: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrawLog {
    checked: u64,
    exceeded: Vec<DrawRecord>,
}

impl DrawLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, t: u64, kind: DrawKind, value: f64, cap: f64) {
        self.checked += 1;
        if value.abs() > cap {
            self.exceeded.push(DrawRecord {
                t,
                kind,
                value,
                cap,
            });
        }
    }

    pub fn checked(&self) -> u64 {
        self.checked
    }

    pub fn exceeded(&self) -> &[DrawRecord] {
        &self.exceeded
    }

    pub fn within_caps(&self) -> bool {
        self.exceeded.is_empty()
    }

    pub fn absorb(&mut self, other: &DrawLog) {
        self.checked += other.checked;
        self.exceeded.extend_from_slice(&other.exceeded);
    }
}
