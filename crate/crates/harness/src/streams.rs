//! Stream generators and the line-oriented stream file format.
//!
//! File records are `t;payload`, one per line, `t` starting at 1:
//! `t;0110` for binary rows, `t;+{1,4}` / `t;-{2}` for set updates,
//! `t;+7` / `t;-7` for point updates, and `t;` for a step without update.
//! Missing steps are steps without update.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::{invalid, ConfigError, Pattern, StreamSpec};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SetStep {
    pub inserts: Vec<u64>,
    pub deletes: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStep {
    Insert(u64),
    Delete(u64),
    Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stream {
    Rows { d: usize, rows: Vec<Vec<u8>> },
    Sets { d: u64, steps: Vec<SetStep> },
    Points { u: u64, steps: Vec<PointStep> },
}

impl Stream {
    pub fn len(&self) -> usize {
        match self {
            Stream::Rows { rows, .. } => rows.len(),
            Stream::Sets { steps, .. } => steps.len(),
            Stream::Points { steps, .. } => steps.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Result<(usize, &[Vec<u8>]), ConfigError> {
        match self {
            Stream::Rows { d, rows } => Ok((*d, rows)),
            _ => invalid("stream.kind", "this mechanism needs a binary row stream"),
        }
    }

    /// Set steps; point streams are read as singleton set updates.
    pub fn sets(&self) -> Result<(u64, Vec<SetStep>), ConfigError> {
        match self {
            Stream::Sets { d, steps } => Ok((*d, steps.clone())),
            Stream::Points { u, steps } => Ok((
                *u,
                steps
                    .iter()
                    .map(|p| match *p {
                        PointStep::Insert(x) => SetStep {
                            inserts: vec![x],
                            deletes: vec![],
                        },
                        PointStep::Delete(x) => SetStep {
                            inserts: vec![],
                            deletes: vec![x],
                        },
                        PointStep::Tick => SetStep::default(),
                    })
                    .collect(),
            )),
            Stream::Rows { .. } => {
                invalid("stream.kind", "this mechanism needs a set-update stream")
            }
        }
    }

    /// Point steps; set streams qualify when every step touches at most one element.
    pub fn points(&self) -> Result<(u64, Vec<PointStep>), ConfigError> {
        match self {
            Stream::Points { u, steps } => Ok((*u, steps.clone())),
            Stream::Sets { d, steps } => {
                let mut out = Vec::with_capacity(steps.len());
                for s in steps {
                    out.push(match (s.inserts.as_slice(), s.deletes.as_slice()) {
                        ([], []) => PointStep::Tick,
                        ([x], []) => PointStep::Insert(*x),
                        ([], [x]) => PointStep::Delete(*x),
                        _ => {
                            return invalid(
                                "stream",
                                "point mechanisms need at most one update per step",
                            )
                        }
                    });
                }
                Ok((*d, out))
            }
            Stream::Rows { .. } => {
                invalid("stream.kind", "this mechanism needs a point-update stream")
            }
        }
    }

    pub fn truncate(&mut self, t: usize) {
        match self {
            Stream::Rows { rows, .. } => rows.truncate(t),
            Stream::Sets { steps, .. } => steps.truncate(t),
            Stream::Points { steps, .. } => steps.truncate(t),
        }
    }
}

fn check_p(field: &'static str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        invalid(field, format!("probability {p} outside [0, 1]"))
    }
}

// Pool of users split into present and absent, with O(1) random moves.
struct Pool {
    present: Vec<u64>,
    absent: Vec<u64>,
}

impl Pool {
    fn new(d: u64) -> Self {
        Self {
            present: Vec::new(),
            absent: (1..=d).collect(),
        }
    }

    fn take(from: &mut Vec<u64>, to: &mut Vec<u64>, rng: &mut ChaCha12Rng) -> Option<u64> {
        if from.is_empty() {
            return None;
        }
        let x = from.swap_remove(rng.random_range(0..from.len()));
        to.push(x);
        Some(x)
    }

    fn insert(&mut self, rng: &mut ChaCha12Rng) -> Option<u64> {
        Self::take(&mut self.absent, &mut self.present, rng)
    }

    fn delete(&mut self, rng: &mut ChaCha12Rng) -> Option<u64> {
        Self::take(&mut self.present, &mut self.absent, rng)
    }
}

/// Generate `t` steps from `spec`; the same `(spec, t, seed)` always gives the same stream.
pub fn generate(spec: &StreamSpec, t: u64, seed: u64) -> Result<Stream, ConfigError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_5eed_0000_0001);
    let n = t as usize;
    match spec {
        StreamSpec::Bernoulli { d, p, ps } => {
            if *d == 0 {
                return invalid("stream.d", "must be >= 1");
            }
            let ps = match ps {
                Some(ps) if ps.len() != *d => {
                    return invalid("stream.ps", format!("need {d} entries"))
                }
                Some(ps) => ps.clone(),
                None => vec![*p; *d],
            };
            for &p in &ps {
                check_p("stream.p", p)?;
            }
            let rows = (0..n)
                .map(|_| ps.iter().map(|&p| rng.random_bool(p) as u8).collect())
                .collect();
            Ok(Stream::Rows { d: *d, rows })
        }
        StreamSpec::Bursty {
            d,
            p_on,
            p_off,
            burst,
        } => {
            if *d == 0 {
                return invalid("stream.d", "must be >= 1");
            }
            check_p("stream.p_on", *p_on)?;
            check_p("stream.p_off", *p_off)?;
            if *burst == 0 {
                return invalid("stream.burst", "must be >= 1");
            }
            let switch = 1.0 / *burst as f64;
            let mut on: Vec<bool> = (0..*d).map(|_| rng.random_bool(0.5)).collect();
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let row = on
                    .iter_mut()
                    .map(|s| {
                        if rng.random_bool(switch) {
                            *s = !*s;
                        }
                        rng.random_bool(if *s { *p_on } else { *p_off }) as u8
                    })
                    .collect();
                rows.push(row);
            }
            Ok(Stream::Rows { d: *d, rows })
        }
        StreamSpec::Permutation { u } => {
            if t > *u {
                return invalid(
                    "t",
                    format!("a permutation of [1, {u}] has fewer than {t} elements"),
                );
            }
            let mut xs: Vec<u64> = (1..=*u).collect();
            xs.shuffle(&mut rng);
            let steps = xs.into_iter().take(n).map(PointStep::Insert).collect();
            Ok(Stream::Points { u: *u, steps })
        }
        StreamSpec::RandomSetOps {
            d,
            budget,
            p_insert,
            max_batch,
        } => {
            if *d == 0 || *max_batch == 0 {
                return invalid("stream", "d and max_batch must be >= 1");
            }
            check_p("stream.p_insert", *p_insert)?;
            let mut pool = Pool::new(*d);
            let mut left = *budget;
            let mut steps = Vec::with_capacity(n);
            for _ in 0..n {
                let mut step = SetStep::default();
                if left > 0 {
                    let b = rng.random_range(1..=(*max_batch).min(left));
                    let ins = pool.present.is_empty()
                        || (!pool.absent.is_empty() && rng.random_bool(*p_insert));
                    for _ in 0..b {
                        let x = if ins {
                            pool.insert(&mut rng)
                        } else {
                            pool.delete(&mut rng)
                        };
                        match x {
                            Some(x) if ins => step.inserts.push(x),
                            Some(x) => step.deletes.push(x),
                            None => break,
                        }
                    }
                    left -= (step.inserts.len() + step.deletes.len()) as u64;
                }
                steps.push(step);
            }
            Ok(Stream::Sets { d: *d, steps })
        }
        StreamSpec::Adversarial { pattern, d, burst } => {
            adversarial(*pattern, *d, *burst, n, &mut rng)
        }
        StreamSpec::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid {
                field: "stream.path",
                msg: format!("{}: {e}", path.display()),
            })?;
            let mut s = parse(&text)?;
            s.truncate(n);
            Ok(s)
        }
    }
}

fn adversarial(
    pattern: Pattern,
    d: u64,
    burst: u64,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Stream, ConfigError> {
    if d == 0 {
        return invalid("stream.d", "must be >= 1");
    }
    let dz = d as usize;
    Ok(match pattern {
        Pattern::Ones => Stream::Rows {
            d: dz,
            rows: vec![vec![1; dz]; n],
        },
        Pattern::Zeros => Stream::Rows {
            d: dz,
            rows: vec![vec![0; dz]; n],
        },
        Pattern::Staircase => Stream::Rows {
            d: dz,
            rows: (1..=n as u64)
                .map(|t| (0..d).map(|i| (t % (i + 1) == 0) as u8).collect())
                .collect(),
        },
        Pattern::AlternatingBursts => {
            if burst == 0 {
                return invalid("stream.burst", "must be >= 1");
            }
            let mut pool = Pool::new(d);
            let mut steps = Vec::with_capacity(n);
            let mut inserting = true;
            let mut phase = 0;
            for _ in 0..n {
                let mut step = SetStep::default();
                if inserting {
                    if let Some(x) = pool.insert(rng) {
                        step.inserts.push(x);
                    }
                } else if let Some(x) = pool.delete(rng) {
                    step.deletes.push(x);
                }
                steps.push(step);
                phase += 1;
                if phase == burst {
                    phase = 0;
                    inserting = !inserting;
                }
            }
            Stream::Sets { d, steps }
        }
        Pattern::Growing => Stream::Sets {
            d,
            steps: (1..=n as u64)
                .map(|t| SetStep {
                    inserts: if t <= d { vec![t] } else { vec![] },
                    deletes: vec![],
                })
                .collect(),
        },
        Pattern::Ascending => Stream::Points {
            u: d,
            steps: (1..=n as u64)
                .map(|t| {
                    if t <= d {
                        PointStep::Insert(t)
                    } else {
                        PointStep::Tick
                    }
                })
                .collect(),
        },
    })
}

fn bad(line: usize, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError::Parse(format!("stream line {line}: {msg}"))
}

fn parse_ids(s: &str, line: usize) -> Result<Vec<u64>, ConfigError> {
    let inner = s
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(|| bad(line, "expected {ids}"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|e| bad(line, e)))
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rows,
    Sets,
    Points,
}

/// Parse the stream file format. The universe size of set and point
/// streams is the largest id that occurs.
pub fn parse(text: &str) -> Result<Stream, ConfigError> {
    let mut kind = None;
    let mut rows: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
    let mut sets: BTreeMap<u64, SetStep> = BTreeMap::new();
    let mut points: BTreeMap<u64, PointStep> = BTreeMap::new();
    let mut last = 0u64;
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (t, payload) = line
            .split_once(';')
            .ok_or_else(|| bad(ln, "expected `t;payload`"))?;
        let t: u64 = t.trim().parse().map_err(|e| bad(ln, e))?;
        if t == 0 {
            return Err(bad(ln, "time steps start at 1"));
        }
        last = last.max(t);
        let payload = payload.trim();
        if payload.is_empty() {
            continue;
        }
        let this = if payload.starts_with(['+', '-']) {
            if payload[1..].starts_with('{') {
                Kind::Sets
            } else {
                Kind::Points
            }
        } else {
            Kind::Rows
        };
        if *kind.get_or_insert(this) != this {
            return Err(bad(ln, "mixed record kinds"));
        }
        match this {
            Kind::Rows => {
                let row: Vec<u8> = payload
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        _ => Err(bad(ln, format!("bad bit `{c}`"))),
                    })
                    .collect::<Result<_, _>>()?;
                if *width.get_or_insert(row.len()) != row.len() {
                    return Err(bad(ln, "row width differs from earlier rows"));
                }
                if rows.insert(t, row).is_some() {
                    return Err(bad(ln, format!("duplicate row for t = {t}")));
                }
            }
            Kind::Sets => {
                let ids = parse_ids(&payload[1..], ln)?;
                let step = sets.entry(t).or_default();
                if payload.starts_with('+') {
                    step.inserts.extend(ids);
                } else {
                    step.deletes.extend(ids);
                }
            }
            Kind::Points => {
                let x: u64 = payload[1..].trim().parse().map_err(|e| bad(ln, e))?;
                let p = if payload.starts_with('+') {
                    PointStep::Insert(x)
                } else {
                    PointStep::Delete(x)
                };
                if points.insert(t, p).is_some() {
                    return Err(bad(ln, format!("two point updates at t = {t}")));
                }
            }
        }
    }
    Ok(match kind.unwrap_or(Kind::Sets) {
        Kind::Rows => {
            let d = width.unwrap_or(0);
            Stream::Rows {
                d,
                rows: (1..=last)
                    .map(|t| rows.remove(&t).unwrap_or_else(|| vec![0; d]))
                    .collect(),
            }
        }
        Kind::Sets => {
            let d = sets
                .values()
                .flat_map(|s| s.inserts.iter().chain(&s.deletes))
                .copied()
                .max()
                .unwrap_or(1);
            Stream::Sets {
                d,
                steps: (1..=last)
                    .map(|t| sets.remove(&t).unwrap_or_default())
                    .collect(),
            }
        }
        Kind::Points => {
            let u = points
                .values()
                .filter_map(|p| match p {
                    PointStep::Insert(x) | PointStep::Delete(x) => Some(*x),
                    PointStep::Tick => None,
                })
                .max()
                .unwrap_or(1);
            Stream::Points {
                u,
                steps: (1..=last)
                    .map(|t| points.remove(&t).unwrap_or(PointStep::Tick))
                    .collect(),
            }
        }
    })
}

fn ids(xs: &[u64]) -> String {
    let parts: Vec<String> = xs.iter().map(u64::to_string).collect();
    format!("{{{}}}", parts.join(","))
}

/// Serialise in the file format; `parse(&render(s))` gives back `s` up to the
/// universe size, which the file does not record.
pub fn render(stream: &Stream) -> String {
    let mut out = String::new();
    match stream {
        Stream::Rows { rows, .. } => {
            for (i, r) in rows.iter().enumerate() {
                let bits: String = r.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
                let _ = writeln!(out, "{};{bits}", i + 1);
            }
        }
        Stream::Sets { steps, .. } => {
            for (i, s) in steps.iter().enumerate() {
                let t = i + 1;
                if s.inserts.is_empty() && s.deletes.is_empty() {
                    let _ = writeln!(out, "{t};");
                }
                if !s.inserts.is_empty() {
                    let _ = writeln!(out, "{t};+{}", ids(&s.inserts));
                }
                if !s.deletes.is_empty() {
                    let _ = writeln!(out, "{t};-{}", ids(&s.deletes));
                }
            }
        }
        Stream::Points { steps, .. } => {
            for (i, p) in steps.iter().enumerate() {
                let t = i + 1;
                let _ = match p {
                    PointStep::Insert(x) => writeln!(out, "{t};+{x}"),
                    PointStep::Delete(x) => writeln!(out, "{t};-{x}"),
                    PointStep::Tick => writeln!(out, "{t};"),
                };
            }
        }
    }
    out
}
