//! Seeded runs of one mechanism against the exact oracles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use dpstream_core::cardinality::{CardParams, CardinalityState, DoublingWrapper};
use dpstream_core::counting::{CountingTree, HistogramMechanism, HistogramNoise, Horizon};
use dpstream_core::mdim::MdAtState;
use dpstream_core::partition::{PartitionState, Variant};
use dpstream_core::predecessor::{PredParams, PredTree};
use dpstream_core::queries::MonotoneQuery;
use dpstream_core::range_count::{RangeCountStore, RangeOp};
use dpstream_core::sparse_vector::Answer;
use dpstream_core::{DrawLog, DrawRecord, FailureSchedule, NoiseMode, NoiseSource};

use crate::config::{invalid, Config, ConfigError, HorizonSetting, Mechanism, NoiseSetting};
use crate::exec::{map_runs, Exec};
use crate::oracle::{HistogramOracle, OracleQuery, SetOracle};
use crate::streams::{generate, PointStep, Stream};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {seed}: {source}")]
    Mechanism {
        seed: u64,
        source: dpstream_core::Error,
    },
}

/// One checkpoint of one run; vector outputs report their worst coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: u64,
    pub exact: f64,
    pub released: f64,
    pub bound: f64,
    /// Some step `t' <= t` had error above its bound.
    pub violated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Check {
    /// Only meaningful on runs where every draw stayed within its cap.
    pub conditional: bool,
    pub held: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub intervals: u64,
    pub firings: u64,
    pub restarts: u64,
    pub aborted: bool,
    /// Non-bottom predecessor answers.
    pub answered: u64,
    /// Binary-search answers equal to the linear scan, out of `compared`.
    pub agree: u64,
    pub compared: u64,
    pub checks: BTreeMap<&'static str, Check>,
}

impl RunStats {
    fn check(&mut self, name: &'static str, conditional: bool, held: bool) {
        let c = self.checks.entry(name).or_insert(Check {
            conditional,
            held: true,
        });
        c.held &= held;
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: u64,
    pub seed: u64,
    pub mechanism: &'static str,
    pub rows: Vec<Row>,
    pub max_error: f64,
    pub violated: bool,
    pub draws: DrawLog,
    pub stats: RunStats,
}

impl RunRecord {
    /// Add an out-of-band draw to the record, e.g. to test the report.
    pub fn inject_draw(&mut self, d: DrawRecord) {
        self.draws.record(d.t, d.kind, d.value, d.cap);
    }

    /// Failed checks that count against the run: every unconditional failure,
    /// and conditional failures on conditioned runs.
    pub fn failed_checks(&self) -> Vec<&'static str> {
        let cond = conditioning_report(self);
        self.stats
            .checks
            .iter()
            .filter(|(_, c)| !c.held && (!c.conditional || cond))
            .map(|(n, _)| *n)
            .collect()
    }
}

/// True iff every recorded noise draw stayed within its cap.
pub fn conditioning_report(record: &RunRecord) -> bool {
    record.draws.within_caps()
}

struct Tracker {
    checkpoints: Vec<u64>,
    next: usize,
    rows: Vec<Row>,
    violated: bool,
    max_error: f64,
    worst: Option<(f64, f64, f64, f64)>,
}

impl Tracker {
    fn new(checkpoints: Vec<u64>) -> Self {
        Self {
            checkpoints,
            next: 0,
            rows: Vec::new(),
            violated: false,
            max_error: 0.0,
            worst: None,
        }
    }

    fn is_checkpoint(&self, t: u64) -> bool {
        self.checkpoints.get(self.next) == Some(&t)
    }

    /// One measured output at step `t`; `score` ranks outputs for the row.
    fn observe(&mut self, exact: f64, released: f64, bound: f64, error: f64, violated: bool) {
        self.violated |= violated;
        self.max_error = self.max_error.max(error);
        let score = if violated {
            f64::INFINITY
        } else {
            error - bound
        };
        if self.worst.is_none_or(|w| score > w.0) {
            self.worst = Some((score, exact, released, bound));
        }
    }

    /// Close step `t`; emits a row if `t` is a checkpoint.
    fn end_step(&mut self, t: u64) {
        if self.is_checkpoint(t) {
            let (_, exact, released, bound) = self.worst.unwrap_or((0.0, 0.0, 0.0, 0.0));
            self.rows.push(Row {
                t,
                exact,
                released,
                bound,
                violated: self.violated,
            });
            self.next += 1;
        }
        self.worst = None;
    }
}

fn horizon(cfg: &Config, len: usize) -> Horizon {
    match cfg.params.horizon {
        HorizonSetting::Known => Horizon::Known(len.max(1) as u64),
        HorizonSetting::Unknown => Horizon::Unknown,
    }
}

fn variant(cfg: &Config) -> Variant {
    match cfg.delta {
        Some(delta) => Variant::Approx { delta },
        None => Variant::Pure,
    }
}

fn num<T: std::str::FromStr>(name: &str, arg: Option<&str>) -> Result<T, ConfigError> {
    match arg.and_then(|a| a.parse().ok()) {
        Some(v) => Ok(v),
        None => invalid(
            "params.queries",
            format!("`{name}` needs a numeric argument"),
        ),
    }
}

/// Expand a query name into mechanism and oracle evaluators. With `d = None`
/// only the syntax is checked.
pub fn parse_query(
    spec: &str,
    d: Option<usize>,
) -> Result<Vec<(MonotoneQuery, OracleQuery)>, ConfigError> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let within = |i: usize, lo: usize| -> Result<(), ConfigError> {
        match d {
            Some(d) if i < lo || i > d - 1 + lo => invalid(
                "params.queries",
                format!("`{spec}` is out of range for d = {d}"),
            ),
            _ => Ok(()),
        }
    };
    Ok(match name {
        "max_sum" => vec![(MonotoneQuery::max_sum(), OracleQuery::MaxSum)],
        "min_sum" => vec![(MonotoneQuery::min_sum(), OracleQuery::MinSum)],
        "quantile" => {
            let q: f64 = num(name, arg)?;
            let mq = MonotoneQuery::quantile(q).map_err(|e| ConfigError::Invalid {
                field: "params.queries",
                msg: e.to_string(),
            })?;
            vec![(mq, OracleQuery::Quantile(q))]
        }
        "coordinate" => {
            let i: usize = num(name, arg)?;
            within(i, 0)?;
            vec![(MonotoneQuery::coordinate(i), OracleQuery::Coordinate(i))]
        }
        "kth_largest" => {
            let i: usize = num(name, arg)?;
            within(i, 1)?;
            vec![(MonotoneQuery::kth_largest(i), OracleQuery::KthLargest(i))]
        }
        "histogram" => (0..d.unwrap_or(1))
            .map(|i| (MonotoneQuery::coordinate(i), OracleQuery::Coordinate(i)))
            .collect(),
        "top_k" => {
            let k: usize = num(name, arg)?;
            within(k, 1)?;
            (1..=k)
                .map(|i| (MonotoneQuery::kth_largest(i), OracleQuery::KthLargest(i)))
                .collect()
        }
        _ => return invalid("params.queries", format!("unknown query `{spec}`")),
    })
}

fn mode(cfg: &Config) -> NoiseMode {
    match cfg.noise {
        NoiseSetting::Live => NoiseMode::Live,
        NoiseSetting::Off => NoiseMode::Off,
    }
}

/// Generate the stream of run `i` (same for all runs for file streams).
pub fn stream_for(cfg: &Config, i: u64) -> Result<Stream, ConfigError> {
    let s = generate(&cfg.stream, cfg.t, cfg.run_seed(i))?;
    if s.is_empty() {
        return invalid("stream", "stream is empty");
    }
    Ok(s)
}

// Pre-flight: everything that can be rejected without running.
fn preflight(cfg: &Config, stream: &Stream) -> Result<(), ConfigError> {
    match cfg.mechanism {
        Mechanism::Counting => {
            let (d, _) = stream.rows()?;
            if d != 1 {
                return invalid("stream.d", "counting needs a single column");
            }
        }
        Mechanism::Histogram => {
            stream.rows()?;
        }
        Mechanism::HistogramQueries => {
            let (d, _) = stream.rows()?;
            let qs = cfg.params.queries.as_ref().ok_or(ConfigError::Invalid {
                field: "params.queries",
                msg: "histogram_queries needs a query list".into(),
            })?;
            for q in qs {
                parse_query(q, Some(d))?;
            }
        }
        Mechanism::Mdim => {
            let (d, _) = stream.rows()?;
            match (&cfg.params.thresholds, cfg.params.threshold) {
                (Some(t), _) if t.len() != d => {
                    return invalid("params.thresholds", format!("need {d} entries"))
                }
                (None, None) => return invalid("params.threshold", "mdim needs thresholds"),
                _ => {}
            }
        }
        Mechanism::Predecessor => {
            let (_, steps) = stream.points()?;
            if steps.iter().any(|s| !matches!(s, PointStep::Insert(_))) {
                return invalid(
                    "stream",
                    "the partially dynamic predecessor takes insertions only",
                );
            }
        }
        Mechanism::RangeCount | Mechanism::FdPredecessor => {
            stream.points()?;
        }
        Mechanism::Cardinality => {
            stream.sets()?;
            if cfg.params.k_budget.is_none() {
                return invalid("params.k_budget", "cardinality needs an update budget");
            }
        }
        Mechanism::CardinalityDoubling => {
            stream.sets()?;
        }
    }
    Ok(())
}

/// Run every seed of `cfg`. Records come back in run order whatever `exec` is.
pub fn run_experiment(cfg: &Config, exec: Exec) -> Result<Vec<RunRecord>, RunError> {
    cfg.validate()?;
    preflight(cfg, &stream_for(cfg, 0)?)?;
    let ids: Vec<u64> = (0..cfg.seeds).collect();
    map_runs(exec, &ids, |i| run_one(cfg, i))
        .into_iter()
        .collect()
}

pub fn run_one(cfg: &Config, run_id: u64) -> Result<RunRecord, RunError> {
    let seed = cfg.run_seed(run_id);
    let stream = stream_for(cfg, run_id)?;
    preflight(cfg, &stream)?;
    let mut rec = RunRecord {
        run_id,
        seed,
        mechanism: cfg.mechanism.name(),
        rows: Vec::new(),
        max_error: 0.0,
        violated: false,
        draws: DrawLog::new(),
        stats: RunStats::default(),
    };
    let mut src = NoiseSource::new(seed, mode(cfg));
    let mut tr = Tracker::new(
        cfg.checkpoint_times()
            .into_iter()
            .filter(|&t| t <= stream.len() as u64)
            .collect(),
    );
    let res = match cfg.mechanism {
        Mechanism::Counting | Mechanism::Histogram => {
            run_histogram(cfg, &stream, &mut src, &mut tr, &mut rec)
        }
        Mechanism::HistogramQueries => run_queries(cfg, &stream, &mut src, &mut tr, &mut rec),
        Mechanism::Mdim => run_mdim(cfg, &stream, &mut src, &mut tr, &mut rec),
        Mechanism::Predecessor => run_pred(cfg, &stream, &mut src, &mut tr, &mut rec),
        Mechanism::RangeCount | Mechanism::FdPredecessor => {
            run_range(cfg, &stream, &mut src, &mut tr, &mut rec)
        }
        Mechanism::Cardinality | Mechanism::CardinalityDoubling => {
            run_card(cfg, &stream, &mut src, &mut tr, &mut rec)
        }
    };
    res.map_err(|source| RunError::Mechanism { seed, source })?;
    rec.rows = tr.rows;
    rec.violated = tr.violated;
    rec.max_error = tr.max_error;
    Ok(rec)
}

type Res = dpstream_core::Result<()>;

fn run_histogram(
    cfg: &Config,
    stream: &Stream,
    src: &mut NoiseSource,
    tr: &mut Tracker,
    _rec: &mut RunRecord,
) -> Res {
    let (d, rows) = stream.rows().expect("checked");
    let h = horizon(cfg, rows.len());
    let sched = FailureSchedule::new(cfg.beta)?;
    let mut oracle = HistogramOracle::new(d);
    let mut tree = if cfg.mechanism == Mechanism::Counting {
        Some(CountingTree::laplace(h, cfg.epsilon, src.mode())?)
    } else {
        None
    };
    let noise = match cfg.delta {
        Some(delta) => HistogramNoise::Gaussian {
            eps: cfg.epsilon,
            delta,
        },
        None => HistogramNoise::Laplace { eps: cfg.epsilon },
    };
    let mut hist = HistogramMechanism::new(d, h, noise, src.mode())?;
    for (i, row) in rows.iter().enumerate() {
        let t = i as u64 + 1;
        oracle.push(row);
        let exact = oracle.as_f64();
        let (released, bound) = match tree.as_mut() {
            Some(tree) => {
                tree.insert(row[0] as f64, src)?;
                (vec![tree.query()?], tree.error_bound(t, sched.beta_t(t))?)
            }
            None => {
                let v: Vec<f64> = row.iter().map(|&b| b as f64).collect();
                hist.insert(&v, src)?;
                (hist.query()?, hist.error_bound(t, sched.beta_t(t))?)
            }
        };
        for (e, r) in exact.iter().zip(&released) {
            let err = (e - r).abs();
            tr.observe(*e, *r, bound, err, err > bound);
        }
        tr.end_step(t);
    }
    Ok(())
}

fn run_queries(
    cfg: &Config,
    stream: &Stream,
    src: &mut NoiseSource,
    tr: &mut Tracker,
    rec: &mut RunRecord,
) -> Res {
    let (d, rows) = stream.rows().expect("checked");
    let mut pairs = Vec::new();
    for q in cfg.params.queries.as_ref().expect("checked") {
        pairs.extend(parse_query(q, Some(d)).expect("checked"));
    }
    let (mqs, oqs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let k = mqs.len() as f64;
    let mut st = PartitionState::new(d, mqs, cfg.epsilon, cfg.beta, variant(cfg), src)?;
    let mut oracle = HistogramOracle::new(d);
    let mut prev_out = st.out().to_vec();
    let mut seen_crossings = 0;
    for (i, row) in rows.iter().enumerate() {
        let t = i as u64 + 1;
        oracle.push(row);
        let closed_before = st.closings().len();
        let out = st.step(row, src)?.to_vec();
        let exact: Vec<f64> = oqs.iter().map(|q| q.eval(oracle.sums()) as f64).collect();
        let bound = st.error_at();
        for (e, r) in exact.iter().zip(&out) {
            let err = (e - r).abs();
            tr.observe(*e, *r, bound, err, err > bound);
        }
        if st.closings().len() == closed_before {
            rec.stats.check("output_staleness", false, out == prev_out);
        }
        prev_out = out;
        let cmax = exact.iter().copied().fold(0.0, f64::max);
        rec.stats.check(
            "interval_budget",
            true,
            st.closings().len() as f64 <= k * cmax + 1.0,
        );
        for c in &st.crossings()[seen_crossings..] {
            rec.stats.check(
                "crossing_lower_bound",
                true,
                exact[c.query] >= c.threshold - c.margin,
            );
        }
        seen_crossings = st.crossings().len();
        tr.end_step(t);
    }
    rec.stats
        .check("first_interval", true, st.closings().first() != Some(&1));
    rec.stats.intervals = st.closings().len() as u64;
    rec.draws = st.draw_log().clone();
    Ok(())
}

fn run_mdim(
    cfg: &Config,
    stream: &Stream,
    src: &mut NoiseSource,
    tr: &mut Tracker,
    rec: &mut RunRecord,
) -> Res {
    let (d, rows) = stream.rows().expect("checked");
    let ks = match (&cfg.params.thresholds, cfg.params.threshold) {
        (Some(v), _) => v.clone(),
        (None, Some(k)) => vec![k; d],
        (None, None) => unreachable!("checked"),
    };
    let mut st = MdAtState::with_variant(ks.clone(), cfg.epsilon, cfg.beta, variant(cfg), src)?;
    let mut oracle = HistogramOracle::new(d);
    let mut yes = vec![false; d];
    for (i, row) in rows.iter().enumerate() {
        let t = i as u64 + 1;
        oracle.push(row);
        let ans = st.step(row, src)?.to_vec();
        let alpha = st.md_error_at();
        for (c, a) in ans.iter().enumerate() {
            let exact = oracle.sums()[c] as f64;
            let is_yes = *a == Answer::Yes;
            rec.stats.check("yes_monotone", false, is_yes || !yes[c]);
            yes[c] = is_yes;
            let (err, bad) = if is_yes {
                (ks[c] - exact, exact <= ks[c] - alpha)
            } else {
                (exact - ks[c], exact >= ks[c] + alpha)
            };
            tr.observe(exact, is_yes as u8 as f64, alpha, err, bad);
        }
        tr.end_step(t);
    }
    rec.stats.intervals = st.closings().len() as u64;
    rec.stats
        .check("closing_budget", true, st.closings().len() <= d + 1);
    rec.draws = st.draw_log().clone();
    Ok(())
}

fn query_points(u: u64, n: u64, rng: &mut ChaCha12Rng) -> Vec<u64> {
    (0..n).map(|_| rng.random_range(1..=u)).collect()
}

fn run_pred(
    cfg: &Config,
    stream: &Stream,
    src: &mut NoiseSource,
    tr: &mut Tracker,
    rec: &mut RunRecord,
) -> Res {
    let (u, steps) = stream.points().expect("checked");
    let mut p = PredParams::new(cfg.epsilon, cfg.beta);
    if let Some(c1) = cfg.params.c1 {
        p.c1 = c1;
    }
    if let Some(c2) = cfg.params.c2 {
        p.c2 = c2;
    }
    let mut tree = PredTree::new(u, p)?;
    let mut oracle = SetOracle::new(u);
    let mut qrng = ChaCha12Rng::seed_from_u64(rec.seed ^ 0x9e3779b97f4a7c15);
    let mut marks = tree.marks_snapshot();
    for (i, s) in steps.iter().enumerate() {
        let t = i as u64 + 1;
        let PointStep::Insert(x) = *s else {
            unreachable!("checked")
        };
        tree.pred_insert(x, src)?;
        oracle.insert(x);
        let now = tree.marks_snapshot();
        rec.stats.check(
            "mark_monotone",
            false,
            marks.iter().zip(&now).all(|(a, b)| a & b == *a),
        );
        marks = now;
        rec.stats
            .check("marks_consistent", false, tree.marks_consistent());
        rec.stats
            .check("light_ancestor", false, tree.light_ancestor_claim());
        rec.stats.check(
            "active_budget",
            true,
            tree.active_count() as f64 <= (t as f64).powi(3),
        );
        let finished_ok = tree
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.marks.finished)
            .all(|(id, _)| tree.node_exact(id) >= 1);
        rec.stats.check("finished_nonempty", true, finished_ok);
        if tr.is_checkpoint(t) {
            let bound = tree.pred_error_at(t);
            for q in query_points(u, cfg.params.queries_per_checkpoint, &mut qrng) {
                let ans = tree.pred_query(q)?;
                let (count, bad) = match ans {
                    Some(v) => {
                        rec.stats.answered += 1;
                        let c = oracle.count(v, q) as f64;
                        (c, c < 1.0 || c > bound)
                    }
                    None => {
                        let c = oracle.count(1, q) as f64;
                        (c, c > bound)
                    }
                };
                tr.observe(count, ans.unwrap_or(0) as f64, bound, count, bad);
            }
        }
        tr.end_step(t);
    }
    rec.stats.intervals = tree.nodes().iter().filter(|n| n.marks.finished).count() as u64;
    rec.draws = tree.draw_log().clone();
    Ok(())
}

fn run_range(
    cfg: &Config,
    stream: &Stream,
    src: &mut NoiseSource,
    tr: &mut Tracker,
    rec: &mut RunRecord,
) -> Res {
    let (u, steps) = stream.points().expect("checked");
    let mut store = RangeCountStore::new(u, horizon(cfg, steps.len()), cfg.epsilon, cfg.beta, src)?;
    let mut oracle = SetOracle::new(u);
    let mut qrng = ChaCha12Rng::seed_from_u64(rec.seed ^ 0x9e3779b97f4a7c15);
    let off = src.is_off();
    for (i, s) in steps.iter().enumerate() {
        let t = i as u64 + 1;
        match *s {
            PointStep::Insert(x) => {
                store.range_insert(x, RangeOp::Insert)?;
                oracle.insert(x);
            }
            PointStep::Delete(x) => {
                store.range_insert(x, RangeOp::Delete)?;
                oracle.delete(x);
            }
            PointStep::Tick => store.tick()?,
        }
        if tr.is_checkpoint(t) {
            if cfg.mechanism == Mechanism::RangeCount {
                let bound = store.range_error_bound(t, cfg.beta)?;
                let f = oracle.prefix();
                let ranges: Vec<(u64, u64)> = if u <= 128 {
                    (1..=u).flat_map(|a| (a..=u).map(move |b| (a, b))).collect()
                } else {
                    (0..2048)
                        .map(|_| {
                            let (a, b) = (qrng.random_range(1..=u), qrng.random_range(1..=u));
                            (a.min(b), a.max(b))
                        })
                        .collect()
                };
                for (a, b) in ranges {
                    let exact = (f[b as usize] - f[a as usize - 1]) as f64;
                    let r = store.range_query(a, b)?;
                    let err = (r - exact).abs();
                    tr.observe(exact, r, bound, err, err > bound);
                }
            } else {
                let alpha = store.pred_alpha()?;
                let bound = 2.0 * alpha + 1.0;
                for q in query_points(u, cfg.params.queries_per_checkpoint, &mut qrng) {
                    let ans = store.fully_dynamic_pred_query(q)?;
                    let scan = store.scan_pred_query(q, alpha)?;
                    rec.stats.compared += 1;
                    rec.stats.agree += (ans == scan) as u64;
                    if off {
                        rec.stats
                            .check("noise_off_exact", false, ans == oracle.predecessor(q));
                    }
                    let (count, bad) = match ans {
                        Some(v) => {
                            rec.stats.answered += 1;
                            let c = oracle.count(v, q) as f64;
                            (c, c < 1.0 || c > bound)
                        }
                        None => {
                            let c = oracle.count(1, q) as f64;
                            (c, c > bound)
                        }
                    };
                    tr.observe(count, ans.unwrap_or(0) as f64, bound, count, bad);
                }
            }
        }
        tr.end_step(t);
    }
    Ok(())
}

fn run_card(
    cfg: &Config,
    stream: &Stream,
    src: &mut NoiseSource,
    tr: &mut Tracker,
    rec: &mut RunRecord,
) -> Res {
    let (d, steps) = stream.sets().expect("checked");
    let h = horizon(cfg, steps.len());
    let mut oracle = SetOracle::new(d);
    if cfg.mechanism == Mechanism::CardinalityDoubling {
        let mut w = DoublingWrapper::new(d, cfg.params.k0.unwrap_or(1), cfg.epsilon, cfg.beta, h)?;
        for (i, s) in steps.iter().enumerate() {
            let t = i as u64 + 1;
            let r = w.wrapper_update(&s.inserts, &s.deletes, src)?;
            s.inserts.iter().for_each(|&x| {
                oracle.insert(x);
            });
            s.deletes.iter().for_each(|&x| {
                oracle.delete(x);
            });
            let exact = oracle.size() as f64;
            let bound = w.error_bound();
            let err = (r - exact).abs();
            tr.observe(exact, r, bound, err, err > bound);
            tr.end_step(t);
        }
        rec.stats.restarts = w.restarts().len() as u64;
        let k_true = oracle.updates().max(1);
        let budget = (k_true as f64).log2().ceil() as u64 + 2;
        rec.stats
            .check("restart_budget", true, rec.stats.restarts <= budget);
        rec.draws = w.draw_log();
        return Ok(());
    }
    let mut p = CardParams::new(
        d,
        cfg.params.k_budget.expect("checked"),
        cfg.epsilon,
        cfg.beta,
        h,
    );
    p.s = cfg.params.s;
    let mut st = CardinalityState::new(p)?;
    for (i, s) in steps.iter().enumerate() {
        let t = i as u64 + 1;
        let r = match st.card_update(&s.inserts, &s.deletes, src) {
            Ok(r) => r,
            Err(dpstream_core::Error::State(_)) if st.aborted() => {
                rec.stats.aborted = true;
                tr.violated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        s.inserts.iter().for_each(|&x| {
            oracle.insert(x);
        });
        s.deletes.iter().for_each(|&x| {
            oracle.delete(x);
        });
        let exact = oracle.size() as f64;
        let bound = st.card_error_bound(t);
        let err = (r - exact).abs();
        tr.observe(exact, r, bound, err, err > bound);
        if src.is_off() {
            rec.stats.check(
                "staleness",
                false,
                (st.svt_out() - exact).abs() <= st.thresh(t),
            );
        }
        rec.stats.check("stopping", false, st.count() <= st.s());
        tr.end_step(t);
    }
    let f = st.firings();
    let gaps_ok = f
        .windows(2)
        .all(|w| (w[1].size as f64 - w[0].size as f64).abs() >= st.alpha(w[1].t));
    rec.stats.check("firing_gap", true, gaps_ok);
    rec.stats.firings = f.len() as u64;
    rec.draws = st.draw_log().clone();
    Ok(())
}

/// Aggregate outcome of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: u64,
    pub violations: u64,
    pub conditioned: u64,
    pub fraction: f64,
    pub failed_checks: Vec<(u64, &'static str)>,
    pub passed: bool,
}

pub fn summarize(cfg: &Config, records: &[RunRecord]) -> Summary {
    let runs = records.len() as u64;
    let violations = records.iter().filter(|r| r.violated).count() as u64;
    let conditioned = records.iter().filter(|r| conditioning_report(r)).count() as u64;
    let failed_checks: Vec<(u64, &'static str)> = records
        .iter()
        .flat_map(|r| r.failed_checks().into_iter().map(move |c| (r.run_id, c)))
        .collect();
    let fraction = violations as f64 / runs.max(1) as f64;
    Summary {
        runs,
        violations,
        conditioned,
        fraction,
        passed: fraction <= cfg.beta + cfg.slack && failed_checks.is_empty(),
        failed_checks,
    }
}
