//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

pub(crate) fn invalid<T>(field: &'static str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field,
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Counting,
    Histogram,
    HistogramQueries,
    Mdim,
    Predecessor,
    RangeCount,
    FdPredecessor,
    Cardinality,
    CardinalityDoubling,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Counting => "counting",
            Mechanism::Histogram => "histogram",
            Mechanism::HistogramQueries => "histogram_queries",
            Mechanism::Mdim => "mdim",
            Mechanism::Predecessor => "predecessor",
            Mechanism::RangeCount => "range_count",
            Mechanism::FdPredecessor => "fd_predecessor",
            Mechanism::Cardinality => "cardinality",
            Mechanism::CardinalityDoubling => "cardinality_doubling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSetting {
    #[default]
    Live,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonSetting {
    #[default]
    Known,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamSpec {
    /// Independent Bernoulli columns; `ps` overrides `p` per column.
    Bernoulli {
        d: usize,
        #[serde(default = "half")]
        p: f64,
        ps: Option<Vec<f64>>,
    },
    /// Columns alternate between on and off phases of geometric length.
    Bursty {
        d: usize,
        #[serde(default = "p_on")]
        p_on: f64,
        #[serde(default = "p_off")]
        p_off: f64,
        #[serde(default = "burst")]
        burst: u64,
    },
    /// Distinct insertions in random order.
    Permutation {
        u: u64,
    },
    /// Random insert/delete steps within an update budget.
    RandomSetOps {
        d: u64,
        budget: u64,
        #[serde(default = "half")]
        p_insert: f64,
        #[serde(default = "one")]
        max_batch: u64,
    },
    Adversarial {
        pattern: Pattern,
        d: u64,
        #[serde(default = "burst")]
        burst: u64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Rows of all ones.
    Ones,
    /// Rows of all zeros.
    Zeros,
    /// Column `i` is one on steps divisible by `i + 1`.
    Staircase,
    /// Insert `burst` users one per step, then delete them one per step.
    AlternatingBursts,
    /// A new user every step; update count equals the stream length.
    Growing,
    /// Points `1, 2, 3, ...` inserted in order.
    Ascending,
}

fn half() -> f64 {
    0.5
}
fn p_on() -> f64 {
    0.9
}
fn p_off() -> f64 {
    0.05
}
fn burst() -> u64 {
    64
}
fn one() -> u64 {
    1
}
fn one_seed() -> u64 {
    1
}
fn eps() -> f64 {
    1.0
}
fn beta() -> f64 {
    0.1
}
fn checkpoints() -> u64 {
    16
}
fn slack() -> f64 {
    0.0
}
fn queries_per_checkpoint() -> u64 {
    64
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechParams {
    /// Query names: `max_sum`, `min_sum`, `quantile:Q`, `coordinate:I`,
    /// `kth_largest:I`, `histogram`, `top_k:K`.
    pub queries: Option<Vec<String>>,
    pub thresholds: Option<Vec<f64>>,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub horizon: HorizonSetting,
    /// Update budget `K` for set cardinality.
    pub k_budget: Option<u64>,
    /// Initial guess for the doubling wrapper.
    pub k0: Option<u64>,
    pub s: Option<u64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    #[serde(default = "queries_per_checkpoint")]
    pub queries_per_checkpoint: u64,
}

impl Default for MechParams {
    fn default() -> Self {
        Self {
            queries: None,
            thresholds: None,
            threshold: None,
            horizon: HorizonSetting::Known,
            k_budget: None,
            k0: None,
            s: None,
            c1: None,
            c2: None,
            queries_per_checkpoint: queries_per_checkpoint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mechanism: Mechanism,
    #[serde(default)]
    pub noise: NoiseSetting,
    #[serde(alias = "T")]
    pub t: u64,
    #[serde(default = "one_seed")]
    pub seeds: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "eps", alias = "eps")]
    pub epsilon: f64,
    #[serde(default = "beta")]
    pub beta: f64,
    pub delta: Option<f64>,
    #[serde(default = "checkpoints")]
    pub checkpoints: u64,
    /// Allowed violation fraction above `beta` for a passing exit code.
    #[serde(default = "slack")]
    pub slack: f64,
    pub stream: StreamSpec,
    #[serde(default)]
    pub params: MechParams,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.t == 0 {
            return invalid("t", "stream length must be >= 1");
        }
        if self.seeds == 0 {
            return invalid("seeds", "need at least one run");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid("epsilon", "must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return invalid("beta", "must lie in (0, 1)");
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return invalid("delta", "must lie in (0, 1)");
            }
        }
        if self.checkpoints == 0 {
            return invalid("checkpoints", "must be >= 1");
        }
        if self.params.queries_per_checkpoint == 0 {
            return invalid("params.queries_per_checkpoint", "must be >= 1");
        }
        if let Some(qs) = &self.params.queries {
            for q in qs {
                crate::runner::parse_query(q, None)?;
            }
        }
        Ok(())
    }

    /// Seed of run `i`.
    pub fn run_seed(&self, i: u64) -> u64 {
        self.seed.wrapping_add(i)
    }

    /// Steps `ceil(T i / n)` for `i = 1..=n`, deduplicated.
    pub fn checkpoint_times(&self) -> Vec<u64> {
        let n = self.checkpoints.min(self.t);
        let mut v: Vec<u64> = (1..=n).map(|i| (self.t * i).div_ceil(n)).collect();
        v.dedup();
        v
    }
}
