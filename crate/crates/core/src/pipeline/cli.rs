use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use super::{
    compute_volume_traced, round_body, rounded_outer_radius, sample_body, Mode, PipelineConfig, stage,
};
use crate::annealing::{format_phase_log, sample_well_rounded, AnnealingTarget};
use crate::bodies::read_body_file;
use crate::covariance::split_sample_covariance;
use crate::error::{Error, Result};
use crate::linalg;
use crate::walks::RngStream;

#[derive(Debug, Parser)]
#[command(name = "volumetrica", version, about = "Rounding, sampling and volume of convex bodies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Body file.
    #[arg(long)]
    pub body: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Practical)]
    pub mode: Mode,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parallel chains per stage.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Per-stage trace rows.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the volume and write a JSON report.
    Volume {
        #[command(flatten)]
        common: Common,
        /// Target relative error.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Compute a rounding map and write it as text.
    Round {
        #[command(flatten)]
        common: Common,
    },
    /// Write approximately uniform points as CSV.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Number of points.
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
}

fn config(common: &Common) -> Result<PipelineConfig> {
    let cfg = PipelineConfig::new(common.mode);
    match common.chains {
        Some(0) => Err(Error::InvalidInput("--chains must be positive".into())),
        Some(c) => Ok(cfg.with_chains(c)),
        None => Ok(cfg),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_trace(path: &Option<PathBuf>, text: String) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, text)?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<Arc<crate::bodies::Body>> {
    Ok(Arc::new(read_body_file(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Volume { common, eps } => {
            let cfg = config(&common)?;
            let body = load(&common.body)?;
            let (report, trace) = compute_volume_traced(&body, eps, &cfg, common.seed)?;
            let mut json = report.to_json();
            json.push('\n');
            emit(&common.out, &json)?;
            let mut rows = String::from("# rounding: phase t iter r k rankP trace queries\n");
            rows.push_str(&trace.format_rows());
            rows.push_str("# annealing: phase σ² samples ratio stderr queries\n");
            rows.push_str(&format_phase_log(&report.annealing_phases));
            write_trace(&common.trace, rows)
        }
        Command::Round { common } => {
            let cfg = config(&common)?;
            let body = load(&common.body)?;
            let rb = round_body(&body, &cfg, common.seed)?;
            let n = body.dim();
            let target = AnnealingTarget::new(&rb.image)
                .and_then(|t| t.with_outer_radius(rounded_outer_radius(&rb.image).max(t.r_in)))?;
            let mut rng = RngStream::new(common.seed, 0).fork(stage::SAMPLING);
            let count = 50 * n + (50 * n) % 2;
            let pts = sample_well_rounded(target, count, &cfg.annealing, &mut rng)?;
            let cov = split_sample_covariance(&pts)?;
            let eig = linalg::sym_eigenvalues(&cov.a_hat)?;

            let map = &rb.rounded.map;
            let join = |v: &mut dyn Iterator<Item = f64>| {
                v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
            };
            let mut text = format!("log_abs_det {}\n", map.log_abs_det());
            text.push_str(&format!("x {}\n", join(&mut map.shift().iter().copied())));
            text.push_str("T\n");
            for i in 0..n {
                text.push_str(&join(&mut map.matrix().row(i).iter().copied()));
                text.push('\n');
            }
            text.push_str(&format!("eigenvalues {}\n", join(&mut eig.into_iter())));
            emit(&common.out, &text)?;
            write_trace(&common.trace, rb.rounded.trace.format_rows())
        }
        Command::Sample { common, n } => {
            if n == 0 {
                return Err(Error::InvalidInput("--n must be positive".into()));
            }
            let cfg = config(&common)?;
            let body = load(&common.body)?;
            let pts = sample_body(&body, n, &cfg, common.seed)?;
            let mut csv = String::new();
            for p in &pts {
                let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            emit(&common.out, &csv)
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code:
/// 0 on success, 1 for input errors, 2 for numerical or diagnostic failures.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}
