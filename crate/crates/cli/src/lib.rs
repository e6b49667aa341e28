//! `uvp`: run the ultrametric-vp computations from a JSON configuration and
//! write CSV/JSON outputs with a manifest and a run report.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use ultrametric_vp::operator::KernelForm;
use ultrametric_vp::tree::build_tree;

pub use config::RunConfig;
pub use error::CliError;
use config::{parse_family, parse_metric, DEFAULT_OUT_DIR, OUT_DIR_ENV};
use output::{sha256_hex, write_atomic, OutputSet};

#[derive(Debug, Parser)]
#[command(name = "uvp", version, about = "Vladimirov-Pearson operators on truncated ultrametric Cantor sets")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: config `output_dir`, then $UVP_OUT_DIR, then ./uvp-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed for random trees and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Truncation depth (number of levels below the root).
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Operator order s.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// padic:P, level-regular:B1,B2,..., random:MIN,MAX,SEED or explicit:JSON
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// canonical, baire or per-level:D0,D1,...
    #[arg(long, global = true)]
    pub metric: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Truncated zeta function by level, tail estimate and abscissa.
    Zeta,
    /// Exact diameter and measure of every ball.
    Measure,
    /// Wavelet basis values on the leaves.
    Wavelets,
    /// Closed-form eigenvalues against a dense eigensolve.
    Spectrum,
    /// Transition matrices p_t.
    Heat {
        /// Comma separated times, overriding the config.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        times: Option<Vec<f64>>,
    },
    /// Green function and its convergence class.
    Green,
    /// Monte Carlo jump process against the analytic p_T row.
    Simulate {
        /// Starting leaf address, e.g. 0.1.1 (default: first leaf).
        #[arg(long)]
        x0: Option<String>,
        /// Horizon T.
        #[arg(long = "T", alias = "horizon", allow_negative_numbers = true)]
        horizon: Option<f64>,
        /// Number of sample paths.
        #[arg(long)]
        paths: Option<u64>,
    },
    /// Named invariant checks; exits with 3 on a tolerance failure.
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Zeta => "zeta",
            Command::Measure => "measure",
            Command::Wavelets => "wavelets",
            Command::Spectrum => "spectrum",
            Command::Heat { .. } => "heat",
            Command::Green => "green",
            Command::Simulate { .. } => "simulate",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub validate_ms: f64,
    pub compute_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub output_dir: String,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub timings: Timings,
    pub version: &'static str,
    pub config_sha256: Option<String>,
}

/// Config file or defaults, with command line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(f) = &cli.family {
        cfg.tree.family = parse_family(f)?;
        if matches!(cfg.tree.family, config::FamilyConfig::Explicit { .. }) && cli.depth.is_none() {
            cfg.tree.depth = None;
        }
    }
    if let Some(m) = &cli.metric {
        cfg.tree.metric = parse_metric(m)?;
    }
    if let Some(d) = cli.depth {
        cfg.tree.depth = Some(d);
    }
    if let Some(s) = cli.s {
        cfg.s = s;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Heat { times: Some(t) } => cfg.times = t.clone(),
        Command::Simulate { x0, horizon, paths } => {
            if x0.is_some() {
                cfg.simulate.x0 = x0.clone();
            }
            if let Some(h) = horizon {
                cfg.simulate.horizon = *h;
            }
            if let Some(p) = paths {
                cfg.simulate.paths = *p;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

/// Flag, then config, then environment, then `./uvp-out`.
pub fn output_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Hash of the resolved configuration, independent of the output directory.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = None;
    sha256_hex(serde_json::to_string(&c).expect("serializable config").as_bytes())
}

fn execute(cli: &Cli, cfg: &RunConfig, out: &mut OutputSet, mark: &mut Option<Instant>) -> Result<(), CliError> {
    let spec = cfg.validate()?;
    let tree = build_tree(&spec)?;
    if cfg.kernel_form == KernelForm::DiameterAligned && !tree.is_aligned() {
        return Err(ultrametric_vp::Error::NotAligned.into());
    }
    *mark = Some(Instant::now());
    let ctx = commands::Context {
        config: cfg,
        spec: &spec,
        tree: &tree,
    };
    match cli.command {
        Command::Zeta => commands::zeta(&ctx, out),
        Command::Measure => commands::measure(&ctx, out),
        Command::Wavelets => commands::wavelets(&ctx, out),
        Command::Spectrum => commands::spectrum(&ctx, out),
        Command::Heat { .. } => commands::heat(&ctx, out),
        Command::Green => commands::green(&ctx, out),
        Command::Simulate { .. } => commands::simulate(&ctx, out),
        Command::Check => commands::check(&ctx, out),
    }
}

/// Run one parsed invocation and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let cfg = resolve_config(cli);
    let dir = output_dir(cli, cfg.as_ref().ok());
    let hash = cfg.as_ref().ok().map(config_hash);
    let mut compute_start = None;
    let mut out = None;
    let result = cfg.and_then(|cfg| {
        let set = out.insert(OutputSet::create(&dir)?);
        execute(cli, &cfg, set, &mut compute_start)?;
        set.write_manifest(cli.command.name(), hash.as_deref().unwrap_or_default())
    });
    let end = Instant::now();
    let ms = |a: Instant, b: Instant| b.duration_since(a).as_secs_f64() * 1e3;
    let validated = compute_start.unwrap_or(end);
    let (status, code, error) = match &result {
        Ok(()) => ("ok", 0, None),
        Err(e @ CliError::CheckFailed { .. }) => ("check_failed", e.exit_code(), Some(e.to_string())),
        Err(e) => ("error", e.exit_code(), Some(e.to_string())),
    };
    if let Some(e) = &error {
        eprintln!("uvp {}: {e}", cli.command.name());
    }
    let (outputs, warnings) = match &out {
        Some(set) => (set.files.iter().map(|f| f.path.clone()).collect(), set.warnings.clone()),
        None => (Vec::new(), Vec::new()),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = RunReport {
        subcommand: cli.command.name().to_string(),
        status,
        exit_code: code,
        error,
        output_dir: dir.display().to_string(),
        outputs,
        warnings,
        timings: Timings {
            validate_ms: ms(start, validated),
            compute_ms: ms(validated, end),
            total_ms: ms(start, end),
        },
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: hash,
    };
    let text = serde_json::to_string_pretty(&report).expect("serializable report") + "\n";
    if std::fs::create_dir_all(&dir).is_ok() {
        if let Err(e) = write_atomic(&dir.join("run_report.json"), text.as_bytes()) {
            eprintln!("uvp: could not write run report: {e}");
        }
    }
    code
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}
