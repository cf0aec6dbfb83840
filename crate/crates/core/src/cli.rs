//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for I/O
//! failures, 1 for anything else.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::parse_config;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian2D;
use crate::harness::{
    ablation_sweep, run_experiment, summarize, AblationRow, ExperimentConfig, ExperimentReport,
    HoleRecord, MethodSummary, DEFAULT_ABLATION_LAMBDAS,
};
use crate::meta::{initial_covers, optimize_covers_traced};
use crate::rng::{stream, tag};
use crate::Vec2;

/// Environment variable naming the directory for relative or omitted output paths.
pub const OUT_DIR_ENV: &str = "PEGSEARCH_OUT_DIR";

pub const RECORD_CSV_HEADER: &str =
    "method,seed,board,hole,attempts,success,sim_time_s,final_x_mm,final_y_mm";
pub const ABLATION_CSV_HEADER: &str = "lambda,mean_attempts,mean_sim_time_s,success_rate";
pub const TRAJECTORY_CSV_HEADER: &str = "step,cover,x,y";

/// λ values contrasted by `demo-covers`.
pub const DEMO_LAMBDAS: [f64; 2] = [0.0, 1e-4];

#[derive(Debug, Parser)]
#[command(
    name = "pegsearch",
    version,
    about = "Simulated peg-in-hole search experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Replace the configured seed list with this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file (a directory for demo-covers). Stdout when omitted and
    /// no output directory is set in the environment.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured method on every seed and emit one row per hole.
    Run,
    /// Rerun the meta search for each regularisation weight.
    Ablation {
        /// Comma-separated λ values.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Dump cover trajectories on the standard Gaussian without and with regularisation.
    DemoCovers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code.clamp(0, 255) as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        e if e.is_config_error() => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

/// Loads the config named by the invocation and applies the seed override.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    match &cli.command {
        Command::Run => {
            let report = run_experiment(&config)?;
            let text = match cli.format {
                Format::Csv => records_to_csv(&report.records),
                Format::Json => report_to_json(&report)?,
            };
            let target = resolve_output(
                cli.out.as_deref(),
                out_dir.as_deref(),
                "records",
                cli.format,
            );
            emit(target.as_deref(), &text)
        }
        Command::Ablation { lambdas } => {
            let lambdas = lambdas
                .clone()
                .unwrap_or_else(|| DEFAULT_ABLATION_LAMBDAS.to_vec());
            let rows = ablation_sweep(&config, &lambdas)?;
            let text = match cli.format {
                Format::Csv => ablation_to_csv(&rows),
                Format::Json => to_json(&rows)?,
            };
            let target = resolve_output(
                cli.out.as_deref(),
                out_dir.as_deref(),
                "ablation",
                cli.format,
            );
            emit(target.as_deref(), &text)
        }
        Command::DemoCovers => {
            let dir = match (cli.out.as_deref(), out_dir.as_deref()) {
                (Some(p), Some(d)) if p.is_relative() => d.join(p),
                (Some(p), _) => p.to_path_buf(),
                (None, Some(d)) => d.to_path_buf(),
                (None, None) => PathBuf::from("."),
            };
            let seed = config.seeds[0];
            for path in write_demo_covers(&config, seed, &dir, cli.format)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn resolve_output(
    out: Option<&Path>,
    env_dir: Option<&Path>,
    stem: &str,
    format: Format,
) -> Option<PathBuf> {
    match (out, env_dir) {
        (Some(p), Some(d)) if p.is_relative() => Some(d.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(d)) => Some(d.join(format!("{stem}.{}", format.extension()))),
        (None, None) => None,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn emit(target: Option<&Path>, text: &str) -> Result<()> {
    match target {
        Some(path) => write_file(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(io_err(Path::new("<stdout>")))
        }
    }
}

pub fn record_to_csv_row(r: &HoleRecord) -> String {
    format!(
        "{},{},{},{},{},{},{:.6},{:.6},{:.6}",
        r.method,
        r.seed,
        r.board,
        r.hole,
        r.attempts,
        r.success,
        r.sim_time_s,
        r.final_position.x,
        r.final_position.y
    )
}

pub fn records_to_csv(records: &[HoleRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(RECORD_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&record_to_csv_row(r));
        s.push('\n');
    }
    s
}

pub fn ablation_to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:e},{:.6},{:.6},{:.6}",
            r.lambda, r.mean_attempts, r.mean_sim_time_s, r.success_rate
        );
    }
    s
}

#[derive(Serialize)]
struct RunOutput<'a> {
    records: &'a [HoleRecord],
    summary: Vec<MethodSummary>,
}

pub fn report_to_json(report: &ExperimentReport) -> Result<String> {
    to_json(&RunOutput {
        records: &report.records,
        summary: summarize(report)?,
    })
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("json encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Cover centres per ascent step for one λ on the standard Gaussian.
pub fn demo_trajectory(
    config: &ExperimentConfig,
    lambda: f64,
    seed: u64,
) -> Result<Vec<Vec<Vec2>>> {
    let mut meta = config.meta.clone();
    meta.lambda = lambda;
    meta.validate()?;
    let g = Gaussian2D::standard();
    let init = initial_covers(&g, &meta, 0.0);
    let mut rng = stream(seed, &[tag::OPTIMIZE]);
    optimize_covers_traced(&g, &meta, &init, &mut rng)
}

pub fn trajectory_to_csv(trace: &[Vec<Vec2>]) -> String {
    let mut s = String::from(TRAJECTORY_CSV_HEADER);
    s.push('\n');
    for (step, centers) in trace.iter().enumerate() {
        for (k, c) in centers.iter().enumerate() {
            let _ = writeln!(s, "{step},{},{:.6},{:.6}", k + 1, c.x, c.y);
        }
    }
    s
}

/// Writes one trajectory file per entry of [`DEMO_LAMBDAS`] into `dir`.
pub fn write_demo_covers(
    config: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(DEMO_LAMBDAS.len());
    for lambda in DEMO_LAMBDAS {
        let trace = demo_trajectory(config, lambda, seed)?;
        let text = match format {
            Format::Csv => trajectory_to_csv(&trace),
            Format::Json => to_json(&trace)?,
        };
        let label = if lambda == 0.0 {
            "0".to_string()
        } else {
            format!("{lambda:e}")
        };
        let path = dir.join(format!("covers_lambda_{label}.{}", format.extension()));
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
