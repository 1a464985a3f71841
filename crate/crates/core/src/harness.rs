//! Experiment configuration, CSV/JSON output, parameter sweeps and
//! solve-count comparisons behind the `ddsolve` command line.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dd_iteration::{run, DdSetup, IterationParams, IterationTrace, MethodKind, TraceRow};
use crate::error::{Error, Result};
use crate::fem::{Discretization, QuadratureRule};
use crate::mesh::{build_rect_mesh, decompose_l_shaped, decompose_vertical, InterfaceVector};
use crate::problems::ProblemKind;
use crate::solver::NewtonConfig;

pub const TRACE_HEADER: [&str; 5] = [
    "n",
    "rel_error",
    "cum_linear_solves",
    "newton_iters",
    "update_norm",
];

pub const SWEEP_HEADER: [&str; 7] = [
    "param",
    "value",
    "final_error",
    "iterations",
    "linear_solves",
    "contraction_factor",
    "failed",
];

/// Fewest decreasing steps needed before a contraction factor is reported.
pub const MIN_DECREASING_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitKind {
    Vertical,
    LShaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    Zero,
    /// Interface values of the monolithic solution.
    Exact,
    /// Uniform in `[-1, 1]` from `seed`.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub method: MethodKind,
    pub width: f64,
    pub height: f64,
    pub h: f64,
    pub split: SplitKind,
    pub x_split: f64,
    pub l_x_low: f64,
    pub l_x_high: f64,
    pub l_y_step: f64,
    /// `None` selects the tuned default for the problem and method.
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    pub max_outer: usize,
    pub stop_tol: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub warm_start: bool,
    pub gamma: f64,
    pub p: f64,
    pub quad_degree: u32,
    pub eta0: InitialGuess,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemKind::Semilinear,
            method: MethodKind::Mnn1,
            width: 3.0,
            height: 2.0,
            h: 1.0 / 32.0,
            split: SplitKind::Vertical,
            x_split: 1.5,
            l_x_low: 1.0,
            l_x_high: 2.0,
            l_y_step: 1.0,
            s1: None,
            s2: None,
            max_outer: 30,
            stop_tol: 1e-8,
            newton_tol: 1e-10,
            newton_max: 50,
            warm_start: true,
            gamma: 0.1,
            p: 3.0,
            quad_degree: 2,
            eta0: InitialGuess::Zero,
            seed: 0,
            threads: 1,
            out: None,
        }
    }
}

/// Step parameters used in the reference experiments.
pub fn default_step(problem: ProblemKind, method: MethodKind) -> f64 {
    match (problem, method) {
        (ProblemKind::PLaplace, MethodKind::Mnn1) => 0.15,
        (ProblemKind::PLaplace, _) => 0.2,
        (_, MethodKind::Nn) => 0.2,
        (_, MethodKind::Mnn1) => 0.19,
        (_, MethodKind::Mnn2) => 0.21,
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

/// Accepts plain numbers and simple fractions such as `1/32`.
fn parse_real(key: &str, value: &str) -> Result<f64> {
    let v = match value.split_once('/') {
        Some((a, b)) => parse_num::<f64>(key, a.trim())? / parse_num::<f64>(key, b.trim())?,
        None => parse_num::<f64>(key, value)?,
    };
    if v.is_nan() {
        return Err(Error::Config(format!("invalid value '{value}' for {key}")));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for {key}"))),
    }
}

impl ExperimentConfig {
    /// Sets one field from its textual form. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "problem" => self.problem = value.parse()?,
            "method" => self.method = value.parse()?,
            "width" => self.width = parse_real(k, value)?,
            "height" => self.height = parse_real(k, value)?,
            "h" => self.h = parse_real(k, value)?,
            "split" => {
                self.split = match value {
                    "vertical" => SplitKind::Vertical,
                    "l-shaped" | "l_shaped" => SplitKind::LShaped,
                    _ => return Err(Error::Config(format!("unknown split '{value}'"))),
                }
            }
            "x_split" => self.x_split = parse_real(k, value)?,
            "l_x_low" => self.l_x_low = parse_real(k, value)?,
            "l_x_high" => self.l_x_high = parse_real(k, value)?,
            "l_y_step" => self.l_y_step = parse_real(k, value)?,
            "s1" => self.s1 = Some(parse_real(k, value)?),
            "s2" => self.s2 = Some(parse_real(k, value)?),
            "s1s2" => {
                let s = parse_real(k, value)?;
                self.s1 = Some(s);
                self.s2 = Some(s);
            }
            "max_outer" => self.max_outer = parse_num(k, value)?,
            "stop_tol" => self.stop_tol = parse_real(k, value)?,
            "newton_tol" => self.newton_tol = parse_real(k, value)?,
            "newton_max" => self.newton_max = parse_num(k, value)?,
            "warm_start" => self.warm_start = parse_bool(k, value)?,
            "gamma" => self.gamma = parse_real(k, value)?,
            "p" => self.p = parse_real(k, value)?,
            "quad_degree" => self.quad_degree = parse_num(k, value)?,
            "eta0" => {
                self.eta0 = match value {
                    "zero" => InitialGuess::Zero,
                    "exact" => InitialGuess::Exact,
                    "random" => InitialGuess::Random,
                    _ => return Err(Error::Config(format!("unknown eta0 '{value}'"))),
                }
            }
            "seed" => self.seed = parse_num(k, value)?,
            "threads" => self.threads = parse_num(k, value)?,
            "out" => self.out = if value.is_empty() { None } else { Some(value.into()) },
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file on top of `self`. Blank lines and
    /// `#` comments are ignored; repeating a key is an error.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected 'key = value'".into(),
            })?;
            let norm = key.trim().replace('-', "_");
            if norm.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if !seen.insert(norm.clone()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate key '{norm}'"),
                });
            }
            self.set(&norm, value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn s1(&self) -> f64 {
        self.s1.unwrap_or_else(|| default_step(self.problem, self.method))
    }

    pub fn s2(&self) -> f64 {
        self.s2.unwrap_or_else(|| default_step(self.problem, self.method))
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            residual_tol: self.newton_tol,
            max_iters: self.newton_max,
            warm_start: self.warm_start,
        }
    }

    pub fn params(&self) -> IterationParams {
        IterationParams {
            s1: self.s1(),
            s2: self.s2(),
            max_outer: self.max_outer,
            stop_tol: self.stop_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.newton().validate()?;
        self.params().validate()?;
        for (name, v) in [("width", self.width), ("height", self.height), ("h", self.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.problem == ProblemKind::PLaplace && !(self.p >= 2.0) {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma must be finite".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        QuadratureRule::with_degree(self.quad_degree)?;
        Ok(())
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let mesh = build_rect_mesh(self.width, self.height, self.h)?;
        let decomp = match self.split {
            SplitKind::Vertical => decompose_vertical(&mesh, self.x_split)?,
            SplitKind::LShaped => decompose_l_shaped(&mesh, self.l_x_low, self.l_x_high, self.l_y_step)?,
        };
        let mut disc = Discretization::new(mesh, decomp);
        disc.rule = QuadratureRule::with_degree(self.quad_degree)?;
        Ok(disc)
    }

    /// Validates and builds the shared setup (including the monolithic reference).
    pub fn setup(&self) -> Result<DdSetup> {
        self.validate()?;
        let problem = self.problem.build(self.gamma, self.p)?;
        let mut setup = DdSetup::new(problem, self.discretization()?, self.newton())?;
        setup.parallel = self.threads > 1;
        Ok(setup)
    }

    pub fn initial_guess(&self, setup: &DdSetup) -> InterfaceVector {
        match self.eta0 {
            InitialGuess::Zero => setup.zero_interface(),
            InitialGuess::Exact => setup.exact_interface(),
            InitialGuess::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                InterfaceVector(
                    (0..setup.disc.decomp.interface_len())
                        .map(|_| rng.gen_range(-1.0..=1.0))
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_error: Option<f64>,
    pub iterations: usize,
    pub linear_solves: usize,
    pub contraction_factor: Option<f64>,
    pub failed: bool,
}

impl RunSummary {
    pub fn from_trace(trace: &IterationTrace) -> Self {
        RunSummary {
            final_error: trace.final_error(),
            iterations: trace.rows.last().map_or(0, |r| r.n),
            linear_solves: trace.total_linear_solves(),
            contraction_factor: contraction_factor(&trace.errors()),
            failed: trace.failed,
        }
    }

    fn failure() -> Self {
        RunSummary {
            final_error: None,
            iterations: 0,
            linear_solves: 0,
            contraction_factor: None,
            failed: true,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// `exp` of the least-squares slope of `ln e_n` over the second half of the
/// iterations, reported only when at least [`MIN_DECREASING_STEPS`] steps decreased.
pub fn contraction_factor(errors: &[f64]) -> Option<f64> {
    let decreasing = errors.windows(2).filter(|w| w[1] < w[0]).count();
    if decreasing < MIN_DECREASING_STEPS {
        return None;
    }
    let last = errors.len() - 1;
    let pts: Vec<(f64, f64)> = (last / 2..=last)
        .filter(|&n| errors[n] > 0.0 && errors[n].is_finite())
        .map(|n| (n as f64, errors[n].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some((sxy / sxx).exp())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace_csv<W: Write>(trace: &IterationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.rel_error),
            r.cumulative_linear_solves.to_string(),
            r.newton_iters.to_string(),
            fmt_f64(r.update_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_trace_csv`]. The header must match exactly.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected trace header '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| {
            rec.get(k).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column {}", TRACE_HEADER[k]),
            })
        };
        let bad = |k: usize| Error::Parse {
            line,
            message: format!("bad value for {}", TRACE_HEADER[k]),
        };
        let row = TraceRow {
            n: field(0)?.parse().map_err(|_| bad(0))?,
            rel_error: field(1)?.parse().map_err(|_| bad(1))?,
            cumulative_linear_solves: field(2)?.parse().map_err(|_| bad(2))?,
            newton_iters: field(3)?.parse().map_err(|_| bad(3))?,
            update_norm: field(4)?.parse().map_err(|_| bad(4))?,
            inner_failure: false,
        };
        if row.n != rows.len() {
            return Err(Error::Parse {
                line,
                message: format!("row index {} out of sequence", row.n),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: RunSummary,
    pub trace: IterationTrace,
}

/// Builds, runs and (when `out` is set) writes the trace CSV.
/// Solver failures are reported in the summary, not as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let setup = cfg.setup()?;
    run_with_setup(cfg, &setup)
}

/// As [`run_experiment`] with a prebuilt setup; `cfg` supplies the method,
/// step parameters, initial guess and output path.
pub fn run_with_setup(cfg: &ExperimentConfig, setup: &DdSetup) -> Result<ExperimentOutput> {
    cfg.params().validate()?;
    let eta0 = cfg.initial_guess(setup);
    let trace = run(cfg.method, setup, &cfg.params(), &eta0)?;
    if let Some(path) = &cfg.out {
        write_trace_csv(&trace, std::fs::File::create(path)?)?;
    }
    Ok(ExperimentOutput {
        summary: RunSummary::from_trace(&trace),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// `s1 = s2`.
    S1S2,
    H,
    Gamma,
    P,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::S1S2 => "s1s2",
            SweepParam::H => "h",
            SweepParam::Gamma => "gamma",
            SweepParam::P => "p",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1s2" => Ok(SweepParam::S1S2),
            "h" => Ok(SweepParam::H),
            "gamma" => Ok(SweepParam::Gamma),
            "p" => Ok(SweepParam::P),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter '{s}' (expected s1s2, h, gamma or p)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub summary: RunSummary,
    pub error: Option<String>,
}

fn sweep_one(base: &ExperimentConfig, param: SweepParam, value: f64) -> SweepRow {
    let mut cfg = base.clone();
    cfg.out = None;
    match param {
        SweepParam::S1S2 => {
            cfg.s1 = Some(value);
            cfg.s2 = Some(value);
        }
        SweepParam::H => cfg.h = value,
        SweepParam::Gamma => cfg.gamma = value,
        SweepParam::P => cfg.p = value,
    }
    let (summary, error) = match run_experiment(&cfg) {
        Ok(out) => (out.summary, None),
        Err(e) => (RunSummary::failure(), Some(e.to_string())),
    };
    SweepRow {
        param,
        value,
        summary,
        error,
    }
}

/// One summary per value, in the order given. Up to `threads` rows run at
/// once; a failing row is recorded and the sweep continues.
pub fn run_sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    threads: usize,
) -> Vec<SweepRow> {
    let threads = threads.max(1);
    let mut rows = Vec::with_capacity(values.len());
    for chunk in values.chunks(threads) {
        if chunk.len() == 1 {
            rows.push(sweep_one(base, param, chunk[0]));
            continue;
        }
        let done: Vec<SweepRow> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&v| scope.spawn(move || sweep_one(base, param, v)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
        rows.extend(done);
    }
    rows
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.param.as_str().to_string(),
            fmt_f64(r.value),
            s.final_error.map(fmt_f64).unwrap_or_default(),
            s.iterations.to_string(),
            s.linear_solves.to_string(),
            s.contraction_factor.map(fmt_f64).unwrap_or_default(),
            s.failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveComparison {
    pub threshold: f64,
    /// Cumulative solves at the first row with `rel_error <= threshold`.
    pub solves_a: Option<usize>,
    pub solves_b: Option<usize>,
    /// `solves_a / solves_b` when both reached the threshold.
    pub ratio: Option<f64>,
}

pub fn solves_to_reach(rows: &[TraceRow], threshold: f64) -> Option<usize> {
    rows.iter()
        .find(|r| r.rel_error <= threshold)
        .map(|r| r.cumulative_linear_solves)
}

pub fn compare_traces(a: &[TraceRow], b: &[TraceRow], threshold: f64) -> SolveComparison {
    let solves_a = solves_to_reach(a, threshold);
    let solves_b = solves_to_reach(b, threshold);
    let ratio = match (solves_a, solves_b) {
        (Some(x), Some(y)) if y > 0 => Some(x as f64 / y as f64),
        _ => None,
    };
    SolveComparison {
        threshold,
        solves_a,
        solves_b,
        ratio,
    }
}

/// Runs both configurations and compares their solve counts at `threshold`.
pub fn compare_solve_counts(
    a: &ExperimentConfig,
    b: &ExperimentConfig,
    threshold: f64,
) -> Result<SolveComparison> {
    let ra = run_experiment(a)?;
    let rb = run_experiment(b)?;
    Ok(compare_traces(&ra.trace.rows, &rb.trace.rows, threshold))
}
