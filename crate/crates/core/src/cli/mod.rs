//! Command-line front end.
//!
//! Exit codes: 0 success (or `Subset`), 1 compute error, 2 config error,
//! 3 `NotSubset`.

pub mod config;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{LoadedConfig, NamedSet, RunConfig};
pub use plot::{balls_csv, render_svg, PlotSpec};

use crate::backreach::{
    build_ball_model, center_bounds, config_hash, run_backreach, BackreachResult,
};
use crate::error::ReachError;
use crate::geometry::Polytope;
use crate::milp::write_lp;
use crate::nfl::EnvelopeSet;
use crate::verify::{check_goal_reaching, coverage_csv, estimate_coverage, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_SUBSET: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl From<ReachError> for CliError {
    fn from(e: ReachError) -> Self {
        match e {
            ReachError::Config(m) => CliError::Config(m),
            e => CliError::Compute(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nfl-reach", version, about = "Backward reachability for neural feedback loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute ball unions for steps 1..k and write the result file.
    Reach(ReachArgs),
    /// Decide whether a start set lies in the union of a result's balls.
    Check(CheckArgs),
    /// Monte-Carlo coverage of the true backward sets by the stored balls.
    Coverage(CoverageArgs),
    /// Draw a 2-D result as SVG.
    Plot(PlotArgs),
    /// Write one ball problem in LP format.
    ExportLp(ExportLpArgs),
}

#[derive(Debug, Args)]
pub struct ReachArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Result file; defaults to `output.result` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Timing sidecar; defaults to `output.timing`, else `<out>.timing.json`.
    #[arg(long)]
    pub timing: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub result: PathBuf,
    /// Start set as a polytope JSON file `{"a": [[..]], "b": [..]}`.
    #[arg(long, conflicts_with = "start_box", required_unless_present = "start_box")]
    pub start: Option<PathBuf>,
    /// Start box as `lo_1,hi_1,lo_2,hi_2,...`.
    #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true)]
    pub start_box: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// One or more result files; each becomes a CSV row.
    #[arg(long, required = true)]
    pub result: Vec<PathBuf>,
    /// Samples per step; defaults to `coverage.samples` in the config.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV table; printed to stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ball geometry CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
    #[arg(long, num_args = 2, value_delimiter = ',', allow_hyphen_values = true)]
    pub xlim: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_delimiter = ',', allow_hyphen_values = true)]
    pub ylim: Option<Vec<f64>>,
    /// Start sets to overlay (polytope JSON files).
    #[arg(long)]
    pub start: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportLpArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub t: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub center: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Compute(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

pub fn load_result(path: &Path) -> Result<BackreachResult, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read result {}: {e}", path.display())))?;
    BackreachResult::from_json(&text).map_err(|e| CliError::Config(format!("result {}: {e}", path.display())))
}

pub fn load_polytope(path: &Path) -> Result<Polytope, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read start set {}: {e}", path.display())))?;
    let p: Polytope =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("start set {}: {e}", path.display())))?;
    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(p)
}

fn box_polytope(v: &[f64]) -> Result<Polytope, CliError> {
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(CliError::Config("--box needs lo,hi pairs".into()));
    }
    let lo: Vec<f64> = v.iter().step_by(2).copied().collect();
    let hi: Vec<f64> = v.iter().skip(1).step_by(2).copied().collect();
    Polytope::from_box(&lo, &hi).map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_reach(args: &ReachArgs) -> Result<i32, CliError> {
    let cfg = LoadedConfig::load(&args.config)?;
    let out = match (&args.out, &cfg.config.output.result) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => return Err(CliError::Config("no result path: pass --out or set output.result".into())),
    };
    let timing_path = match (&args.timing, &cfg.config.output.timing) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => {
            let mut s = out.clone().into_os_string();
            s.push(".timing.json");
            PathBuf::from(s)
        }
    };
    let nfl = cfg.system()?;
    let goal = cfg.goal()?;
    let (result, timing) = run_backreach(&nfl, &goal, &cfg.config.reach)?;
    write_file(&out, &result.to_json())?;
    write_file(&timing_path, &to_json(&timing))?;
    let balls = result.balls().count();
    eprintln!("wrote {} ({balls} balls over {} steps) and {}", out.display(), result.steps.len(), timing_path.display());
    Ok(EXIT_OK)
}

pub fn cmd_check(args: &CheckArgs) -> Result<i32, CliError> {
    let result = load_result(&args.result)?;
    let start = match (&args.start, &args.start_box) {
        (Some(p), _) => load_polytope(p)?,
        (None, Some(v)) => box_polytope(v)?,
        (None, None) => return Err(CliError::Config("pass --start or --box".into())),
    };
    let verdict = check_goal_reaching(&start, &result, &result.config.solver, &result.config.backend)?;
    let text = to_json(&verdict);
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(match verdict.verdict {
        Verdict::Subset => EXIT_OK,
        Verdict::NotSubset { .. } => EXIT_NOT_SUBSET,
    })
}

pub fn cmd_coverage(args: &CoverageArgs) -> Result<i32, CliError> {
    let cfg = LoadedConfig::load(&args.config)?;
    let samples = args.samples.unwrap_or(cfg.config.coverage.samples);
    let seed = args.seed.unwrap_or(cfg.config.coverage.seed);
    if samples == 0 {
        return Err(CliError::Config("coverage needs at least one sample".into()));
    }
    let nfl = cfg.system()?;
    let goal = cfg.goal()?;
    let mut reports = Vec::with_capacity(args.result.len());
    for path in &args.result {
        let result = load_result(path)?;
        if config_hash(&nfl, &goal, &result.config) != result.config_hash {
            return Err(CliError::Config(format!("{} was computed for a different system or goal", path.display())));
        }
        reports.push(estimate_coverage(&nfl, &goal, &result, samples, seed)?);
    }
    if let Some(p) = &args.out {
        write_file(p, &to_json(&reports))?;
    }
    let csv = coverage_csv(&reports);
    match &args.csv {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

fn limits(v: &Option<Vec<f64>>, what: &str) -> Result<Option<(f64, f64)>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some([a, b]) if a < b => Ok(Some((*a, *b))),
        Some(_) => Err(CliError::Config(format!("--{what} needs two increasing numbers"))),
    }
}

pub fn cmd_plot(args: &PlotArgs) -> Result<i32, CliError> {
    let result = load_result(&args.result)?;
    if result.state_dim() != 2 {
        return Err(CliError::Config(format!("plot requires 2-D results, got {}-D", result.state_dim())));
    }
    let mut spec = PlotSpec {
        steps: args.steps.clone(),
        xlim: limits(&args.xlim, "xlim")?,
        ylim: limits(&args.ylim, "ylim")?,
        start_sets: Vec::new(),
    };
    for p in &args.start {
        let poly = load_polytope(p)?;
        if poly.dim() != 2 {
            return Err(CliError::Config(format!("start set {} is not 2-D", p.display())));
        }
        spec.start_sets.push((p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), poly));
    }
    write_file(&args.out, &render_svg(&result, &spec))?;
    if let Some(p) = &args.csv {
        write_file(p, &balls_csv(&result))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_export_lp(args: &ExportLpArgs) -> Result<i32, CliError> {
    let cfg = LoadedConfig::load(&args.config)?;
    let nfl = cfg.system()?;
    let goal = cfg.goal()?;
    let reach = &cfg.config.reach;
    if args.t == 0 || args.t > reach.k {
        return Err(CliError::Config(format!("--t must be in 1..={}", reach.k)));
    }
    if args.center.len() != nfl.state_dim() || !nfl.domain.contains(&args.center, 0.0) {
        return Err(CliError::Config("--center must be a point of the domain".into()));
    }
    let envs = EnvelopeSet::fit(&nfl, &nfl.domain, reach.k, reach.rel_tol).map_err(ReachError::from)?;
    let (_, cache) = center_bounds(&nfl, &envs, None, &args.center, &goal, args.t, reach)?;
    let (model, _) = build_ball_model(&nfl, &envs, &cache, &args.center, &goal, args.t, reach.norm)?;
    write_file(&args.out, &write_lp(&model))?;
    Ok(EXIT_OK)
}

/// Runs one parsed command and returns its exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Reach(a) => cmd_reach(a),
        Command::Check(a) => cmd_check(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Plot(a) => cmd_plot(a),
        Command::ExportLp(a) => cmd_export_lp(a),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
