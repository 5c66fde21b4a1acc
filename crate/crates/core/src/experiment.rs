//! Outer loop: sweep driver, query log, run summary, timing plot and
//! a posteriori validation against the full-order model.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fem::{solve_fom, FomOperators, ParameterPoint};
use crate::hierarchy::{AdaptiveState, ModelKind, QueryRecord};
use crate::kernel::io::save as save_model;
use crate::sampling::{samplers, Sampler, UniformRandom};

pub const QUERY_LOG: &str = "queries.csv";
pub const SUMMARY: &str = "summary.txt";
pub const TIMINGS: &str = "timings.svg";
pub const MODEL: &str = "model.bin";

/// Bound checks tolerate this much floating-point slack.
pub const VIOLATION_SLACK: f64 = 1e-10;

const HEADER: [&str; 9] = [
    "index",
    "da",
    "pe",
    "model_used",
    "wall_time",
    "delta_rb",
    "ml_certificate",
    "rb_dim_after",
    "train_size_after",
];

#[derive(Debug)]
pub struct RunOutcome {
    pub state: AdaptiveState,
    pub records: Vec<QueryRecord>,
    pub summary: Summary,
}

/// Fresh adaptive state for the problem described by `cfg`.
pub fn build_state(cfg: &RunConfig) -> Result<AdaptiveState> {
    let ops = Arc::new(FomOperators::assemble(cfg.mesh_spec()?));
    AdaptiveState::new(
        ops,
        cfg.time_grid()?,
        cfg.param_box()?,
        cfg.hierarchy.clone(),
        cfg.kernel.clone(),
    )
}

/// Sweep parameters in query order.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<ParameterPoint>> {
    let sampler = samplers().get(&cfg.sweep.sampler)?();
    let seed = match (cfg.seed, sampler.is_random()) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => {
            return Err(Error::config(
                None,
                format!("sampler '{}' needs a seed", cfg.sweep.sampler),
            ))
        }
    };
    Ok(sampler.sample(&cfg.param_box()?, cfg.sweep.n_queries, seed))
}

/// Runs the whole sweep in memory.
pub fn run_sweep(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut state = build_state(cfg)?;
    let points = sweep_points(cfg)?;
    let mut records = Vec::with_capacity(points.len());
    for mu in &points {
        let (_, record) = state.query(mu)?;
        log::debug!(
            "query {} (da = {:.4}, pe = {:.4}) -> {} in {:.3e} s",
            record.index,
            mu.da,
            mu.pe,
            record.model_used,
            record.wall_time
        );
        records.push(record);
    }
    let summary = Summary::from_records(&records);
    Ok(RunOutcome {
        state,
        records,
        summary,
    })
}

/// Runs the sweep and writes the query log, summary, plot and, if enabled,
/// the kernel model into `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let outcome = run_sweep(cfg)?;
    write_outputs(&outcome, out_dir, cfg.output.save_model)?;
    Ok(outcome)
}

pub fn write_outputs(outcome: &RunOutcome, out_dir: &Path, with_model: bool) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_query_log(&outcome.records, fs::File::create(out_dir.join(QUERY_LOG))?)?;
    fs::write(out_dir.join(SUMMARY), outcome.summary.render())?;
    fs::write(out_dir.join(TIMINGS), timings_svg(&outcome.records))?;
    if with_model && outcome.state.ml_fitted() {
        save_model(outcome.state.kernel_model(), &out_dir.join(MODEL))?;
    }
    Ok(())
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_query_log<W: Write>(records: &[QueryRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in records {
        out.write_record([
            r.index.to_string(),
            fmt_float(r.mu.da),
            fmt_float(r.mu.pe),
            r.model_used.as_str().to_string(),
            fmt_float(r.wall_time),
            fmt_opt(r.delta_rb),
            fmt_opt(r.ml_certificate),
            r.rb_dim_after.to_string(),
            r.train_size_after.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_query_log<R: Read>(r: R) -> Result<Vec<QueryRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::QueryLog(format!("unexpected header {header:?}")));
    }
    let bad = |row: usize, col: &str| Error::QueryLog(format!("row {row}: bad {col}"));
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| field(i).parse::<f64>().map_err(|_| bad(row, HEADER[i]));
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(row, HEADER[i]));
        let opt = |i: usize| match field(i) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(row, HEADER[i])),
        };
        records.push(QueryRecord {
            index: int(0)?,
            mu: ParameterPoint::new(num(1)?, num(2)?),
            model_used: ModelKind::parse(field(3)).ok_or_else(|| bad(row, HEADER[3]))?,
            wall_time: num(4)?,
            delta_rb: opt(5)?,
            ml_certificate: opt(6)?,
            rb_dim_after: int(7)?,
            train_size_after: int(8)?,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchStats {
    pub count: usize,
    pub median_time: Option<f64>,
    pub mean_time: Option<f64>,
}

/// Run summary. Everything is a function of the query log alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n_queries: usize,
    /// Indexed ML, RB, FOM.
    pub branches: [BranchStats; 3],
    pub final_rb_dim: usize,
    pub final_train_size: usize,
    pub max_ml_certificate: Option<f64>,
}

pub const BRANCHES: [ModelKind; 3] = [ModelKind::Ml, ModelKind::Rb, ModelKind::Fom];

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl Summary {
    pub fn from_records(records: &[QueryRecord]) -> Self {
        let branches = BRANCHES.map(|kind| {
            let times: Vec<f64> = records
                .iter()
                .filter(|r| r.model_used == kind)
                .map(|r| r.wall_time)
                .collect();
            BranchStats {
                count: times.len(),
                median_time: median(&times),
                mean_time: (!times.is_empty())
                    .then(|| times.iter().sum::<f64>() / times.len() as f64),
            }
        });
        let last = records.last();
        Self {
            n_queries: records.len(),
            branches,
            final_rb_dim: last.map_or(0, |r| r.rb_dim_after),
            final_train_size: last.map_or(0, |r| r.train_size_after),
            max_ml_certificate: records
                .iter()
                .filter_map(|r| r.ml_certificate)
                .max_by(f64::total_cmp),
        }
    }

    pub fn count(&self, kind: ModelKind) -> usize {
        self.branches[BRANCHES.iter().position(|k| *k == kind).unwrap()].count
    }

    pub fn render(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), fmt_float);
        let mut s = String::new();
        let _ = writeln!(s, "queries = {}", self.n_queries);
        for (kind, b) in BRANCHES.iter().zip(&self.branches) {
            let _ = writeln!(s, "count_{kind} = {}", b.count);
            let _ = writeln!(s, "median_time_{kind} = {}", opt(b.median_time));
            let _ = writeln!(s, "mean_time_{kind} = {}", opt(b.mean_time));
        }
        let _ = writeln!(s, "final_rb_dim = {}", self.final_rb_dim);
        let _ = writeln!(s, "final_train_size = {}", self.final_train_size);
        let _ = writeln!(s, "max_ml_certificate = {}", opt(self.max_ml_certificate));
        s
    }
}

fn color(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Ml => "#2ca02c",
        ModelKind::Rb => "#1f77b4",
        ModelKind::Fom => "#d62728",
    }
}

/// Wall time per query on a log axis, one marker per query, colored by the
/// model that answered.
pub fn timings_svg(records: &[QueryRecord]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 130.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;

    let logs: Vec<f64> = records
        .iter()
        .map(|r| r.wall_time.max(1e-12).log10())
        .collect();
    let (mut lo, mut hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        lo = -6.0;
        hi = 0.0;
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);
    let n = records.len().max(2) as f64;
    let x = |i: usize| LEFT + pw * i as f64 / (n - 1.0);
    let y = |v: f64| TOP + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut d = lo as i32;
    while d as f64 <= hi {
        let yy = y(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            yy + 4.0
        );
        d += 1;
    }
    let last = records.len().saturating_sub(1);
    for i in [0, last / 2, last] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{i}</text>"#,
            x(i),
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">query index</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">wall time [s]</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (r, v) in records.iter().zip(&logs) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"><title>{} {}</title></circle>"#,
            x(r.index.min(last)),
            y(*v),
            color(r.model_used),
            r.index,
            r.model_used
        );
    }
    for (k, kind) in BRANCHES.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{lx:.2}" cy="{ly:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}">{kind}</text>"#,
            color(*kind),
            lx + 10.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationEntry {
    pub mu: ParameterPoint,
    pub rb_error: f64,
    pub delta_rb: f64,
    pub ml_error: f64,
    pub ml_certificate: f64,
}

impl ValidationEntry {
    pub fn rb_violation(&self) -> bool {
        self.rb_error > self.delta_rb + VIOLATION_SLACK
    }

    pub fn ml_violation(&self) -> bool {
        self.ml_error > self.ml_certificate + VIOLATION_SLACK
    }

    pub fn effectivity(&self) -> f64 {
        self.delta_rb / self.rb_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.rb_violation() || e.ml_violation())
            .count()
    }

    pub fn render(&self) -> String {
        let mut s = String::from("da,pe,rb_error,delta_rb,ml_error,ml_certificate,violation\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_float(e.mu.da),
                fmt_float(e.mu.pe),
                fmt_float(e.rb_error),
                fmt_float(e.delta_rb),
                fmt_float(e.ml_error),
                fmt_float(e.ml_certificate),
                e.rb_violation() || e.ml_violation()
            );
        }
        s
    }
}

/// Seed offset so validation points differ from a sweep with the same seed.
const VALIDATION_STREAM: u64 = 0x5eed_0f_7a11d;

/// Checks the RB bound and the ML certificate against FOM solves at `n`
/// fresh uniform points. Does not modify the state.
pub fn validate_run(state: &AdaptiveState, n: usize, seed: u64) -> Result<ValidationReport> {
    let points = UniformRandom.sample(state.param_box(), n, seed ^ VALIDATION_STREAM);
    validate_at(state, &points)
}

pub fn validate_at(state: &AdaptiveState, points: &[ParameterPoint]) -> Result<ValidationReport> {
    let entries = points
        .iter()
        .map(|mu| {
            let (_, fom) = solve_fom(state.ops(), mu, state.grid(), state.initial_state())?;
            let (sol, bound) = state.evaluate_rb(mu)?;
            let ml = state.predict_ml(mu);
            let ml_certificate = bound.delta_rb + sol.qoi.distance(&ml);
            Ok(ValidationEntry {
                mu: *mu,
                rb_error: fom.distance(&sol.qoi),
                delta_rb: bound.delta_rb,
                ml_error: fom.distance(&ml),
                ml_certificate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport { entries })
}
