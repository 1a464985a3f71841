use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddsolve::harness::{
    compare_solve_counts, run_experiment, run_sweep, write_sweep_csv, ExperimentConfig, SweepParam,
};
use ddsolve::mesh::build_rect_mesh;
use ddsolve::Error;

#[derive(Parser)]
#[command(name = "ddsolve", version, about = "Nonlinear Neumann-Neumann interface iterations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one iteration and print a JSON summary.
    Run(RunArgs),
    /// Repeat a run over a list of parameter values; writes CSV.
    Sweep(SweepArgs),
    /// Compare linear solves needed by two methods to reach a threshold.
    Compare(CompareArgs),
    /// Write the structured mesh in the plain-text dump format.
    Mesh(MeshArgs),
}

/// Overrides applied on top of `--config`; values use the config-file syntax.
#[derive(Args, Default)]
struct Overrides {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    height: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    x_split: Option<String>,
    #[arg(long)]
    s1: Option<String>,
    #[arg(long)]
    s2: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    #[arg(long)]
    stop_tol: Option<String>,
    #[arg(long)]
    newton_tol: Option<String>,
    #[arg(long)]
    newton_max: Option<String>,
    #[arg(long)]
    warm_start: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    eta0: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Generic `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn build(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Ok(t) = std::env::var("DDSOLVE_THREADS") {
            cfg.set("threads", &t)?;
        }
        if let Some(path) = &self.config {
            cfg.apply_kv(&std::fs::read_to_string(path)?)?;
        }
        let flags = [
            ("problem", &self.problem),
            ("method", &self.method),
            ("h", &self.h),
            ("width", &self.width),
            ("height", &self.height),
            ("split", &self.split),
            ("x_split", &self.x_split),
            ("s1", &self.s1),
            ("s2", &self.s2),
            ("max_outer", &self.max_outer),
            ("stop_tol", &self.stop_tol),
            ("newton_tol", &self.newton_tol),
            ("newton_max", &self.newton_max),
            ("warm_start", &self.warm_start),
            ("gamma", &self.gamma),
            ("p", &self.p),
            ("eta0", &self.eta0),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: Overrides,
    /// Trace CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: Overrides,
    /// One of s1s2, h, gamma, p.
    #[arg(long)]
    param: String,
    /// Comma-separated values; fractions like 1/16 are accepted.
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    values: String,
    /// Sweep CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: Overrides,
    #[arg(long, default_value = "nn")]
    method_a: String,
    #[arg(long, default_value = "mnn2")]
    method_b: String,
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, default_value = "3")]
    width: f64,
    #[arg(long, default_value = "2")]
    height: f64,
    #[arg(long, default_value = "0.25")]
    h: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_values(text: &str) -> Result<Vec<f64>, Error> {
    let mut probe = ExperimentConfig::default();
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            probe.set("h", s)?;
            Ok(probe.h)
        })
        .collect()
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = args.cfg.build()?;
            if args.out.is_some() {
                cfg.out = args.out;
            }
            let out = run_experiment(&cfg)?;
            if let Some(msg) = &out.trace.failure {
                eprintln!("warning: {msg}");
            }
            println!("{}", out.summary.to_json());
        }
        Command::Sweep(args) => {
            let cfg = args.cfg.build()?;
            let param: SweepParam = args.param.parse()?;
            let values = parse_values(&args.values)?;
            let rows = run_sweep(&cfg, param, &values, cfg.threads);
            for r in &rows {
                if let Some(e) = &r.error {
                    eprintln!("warning: {}={}: {e}", r.param, r.value);
                }
            }
            match args.out {
                Some(path) => write_sweep_csv(&rows, std::fs::File::create(path)?)?,
                None => write_sweep_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Compare(args) => {
            let base = args.cfg.build()?;
            let mut a = base.clone();
            a.set("method", &args.method_a)?;
            let mut b = base;
            b.set("method", &args.method_b)?;
            a.out = None;
            b.out = None;
            let cmp = compare_solve_counts(&a, &b, args.threshold)?;
            println!("{}", serde_json::to_string(&cmp).expect("comparison serializes"));
        }
        Command::Mesh(args) => {
            let h = parse_values(&args.h)?.first().copied().unwrap_or(f64::NAN);
            let mesh = build_rect_mesh(args.width, args.height, h)?;
            match args.out {
                Some(path) => mesh.write_dump(std::fs::File::create(path)?)?,
                None => mesh.write_dump(std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
