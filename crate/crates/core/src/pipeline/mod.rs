//! End-to-end volume computation: round, measure, map back.

mod cli;

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

pub use crate::rounding::Mode;
pub use cli::{cli_main, Cli, Command};

use crate::annealing::{
    sample_well_rounded, volume_well_rounded, AnnealingConfig, AnnealingTarget, RatioEstimate,
};
use crate::bodies::{Body, BodyKind};
use crate::error::{Error, Result};
use crate::rounding::{
    iterative_isotropization, IsotropizeConfig, PhaseRecord, Rounded, RoundingTrace,
};
use crate::walks::RngStream;

/// Stream children of the master seed, one per stage.
pub mod stage {
    pub const ROUNDING: u64 = 1;
    pub const VOLUME: u64 = 2;
    pub const SAMPLING: u64 = 3;
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub rounding: IsotropizeConfig,
    pub annealing: AnnealingConfig,
}

impl PipelineConfig {
    pub fn new(mode: Mode) -> Self {
        PipelineConfig {
            mode,
            rounding: IsotropizeConfig::for_mode(mode),
            annealing: AnnealingConfig::default(),
        }
    }

    pub fn with_chains(mut self, chains: usize) -> Self {
        self.rounding.chains = chains;
        self.rounding.annealing.chains = chains;
        self.annealing.chains = chains;
        self
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::new(Mode::Practical)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryCounts {
    pub rounding: u64,
    pub volume: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub rounding_secs: f64,
    pub volume_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeReport {
    pub volume: f64,
    pub log_volume: f64,
    pub eps: f64,
    pub seed: u64,
    pub mode: Mode,
    pub body: BodyKind,
    pub dim: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub log_abs_det: f64,
    pub image_volume: f64,
    pub image_inner_radius: f64,
    pub image_outer_radius: f64,
    pub relative_stderr: f64,
    pub rounding_phases: Vec<PhaseRecord>,
    pub annealing_phases: Vec<RatioEstimate>,
    pub queries: QueryCounts,
    /// Excluded from determinism comparisons.
    pub timing: Timing,
}

impl VolumeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Certified origin-centred enclosing radius of a rounded image; the
/// cooling schedule runs until `σ² ≥ 4 r_out²`.
pub fn rounded_outer_radius(image: &Body) -> f64 {
    image.origin_outer_radius()
}

pub struct RoundedBody {
    pub rounded: Rounded,
    pub image: Body,
    pub queries: u64,
}

/// Run rounding and wrap the image body.
pub fn round_body(body: &Arc<Body>, cfg: &PipelineConfig, seed: u64) -> Result<RoundedBody> {
    let rng = RngStream::new(seed, 0);
    let r = body.inner_radius();
    let big_r = body.outer_radius();
    let rounded = iterative_isotropization(body, r, big_r, &cfg.rounding, &rng.fork(stage::ROUNDING))
        .map_err(|e| e.in_stage("rounding"))?;
    let image = Body::transformed(body.clone(), rounded.map.clone())?;
    let queries = rounded.trace.queries;
    Ok(RoundedBody {
        rounded,
        image,
        queries,
    })
}

/// Volume of a body with its declared `(r, R)` rounding.
pub fn compute_volume(
    body: &Arc<Body>,
    eps: f64,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<VolumeReport> {
    compute_volume_traced(body, eps, cfg, seed).map(|(report, _)| report)
}

/// As [`compute_volume`], also returning the full rounding trace.
pub fn compute_volume_traced(
    body: &Arc<Body>,
    eps: f64,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(VolumeReport, RoundingTrace)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("ε must lie in (0, 1), got {eps}")));
    }
    let start = Instant::now();
    let rb = round_body(body, cfg, seed)?;
    let rounding_secs = start.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let target = AnnealingTarget::new(&rb.image)
        .and_then(|t| t.with_outer_radius(rounded_outer_radius(&rb.image).max(t.r_in)))
        .map_err(|e| e.in_stage("volume"))?;
    let rng = RngStream::new(seed, 0);
    let est = volume_well_rounded(target, eps, &cfg.annealing, &rng.fork(stage::VOLUME))
        .map_err(|e| e.in_stage("volume"))?;
    let volume_secs = t1.elapsed().as_secs_f64();

    let log_abs_det = rb.rounded.map.log_abs_det();
    let log_volume = est.log_volume - log_abs_det;
    let report = VolumeReport {
        volume: log_volume.exp(),
        log_volume,
        eps,
        seed,
        mode: cfg.mode,
        body: body.kind(),
        dim: body.dim(),
        inner_radius: body.inner_radius(),
        outer_radius: body.outer_radius(),
        log_abs_det,
        image_volume: est.volume,
        image_inner_radius: target.r_in,
        image_outer_radius: target.r_out,
        relative_stderr: est.relative_stderr,
        rounding_phases: rb.rounded.trace.phases.clone(),
        annealing_phases: est.ratios,
        queries: QueryCounts {
            rounding: rb.queries,
            volume: est.queries,
            total: rb.queries + est.queries,
        },
        timing: Timing {
            rounding_secs,
            volume_secs,
            total_secs: start.elapsed().as_secs_f64(),
        },
    };
    Ok((report, rb.rounded.trace))
}

/// Approximately uniform points from the body: round, sample the image,
/// map back.
pub fn sample_body(
    body: &Arc<Body>,
    count: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<nalgebra::DVector<f64>>> {
    let rb = round_body(body, cfg, seed)?;
    let target = AnnealingTarget::new(&rb.image)
        .and_then(|t| t.with_outer_radius(rounded_outer_radius(&rb.image).max(t.r_in)))
        .map_err(|e| e.in_stage("sampling"))?;
    let mut rng = RngStream::new(seed, 0).fork(stage::SAMPLING);
    let pts = sample_well_rounded(target, count, &cfg.annealing, &mut rng)
        .map_err(|e| e.in_stage("sampling"))?;
    Ok(pts
        .iter()
        .map(|y| rb.rounded.map.pull_back(y.as_slice()))
        .collect())
}
