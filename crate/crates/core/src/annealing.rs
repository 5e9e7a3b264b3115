//! Gaussian cooling: sampling and volume for bodies that contain a ball about
//! the origin and are not too far from isotropic.
//!
//! Phase `i` targets `N(0, σ_i² I)` restricted to the body. The first Gaussian
//! is narrow enough that almost all of its mass lies in the inscribed ball,
//! so its integral over the body is known up to a directly counted fraction.
//! Each later integral follows from the previous one through the ratio
//! `E_i[exp(‖x‖²/2 · (1/σ_i² − 1/σ_{i+1}²))]`, and the last target is uniform.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bodies::Body;
use crate::error::{Error, Result};
use crate::linalg;
use crate::walks::{BallWalk, GaussianBallWalk, RngStream, WalkState};

/// Schedules longer than this indicate a degenerate inner radius.
const MAX_PHASES: usize = 100_000;

#[derive(Clone, Debug)]
pub struct AnnealingConfig {
    /// Independent chains per phase.
    pub chains: usize,
    /// Step size is `c_delta · min(σ, 1) / √n`.
    pub c_delta: f64,
    /// Burn-in per phase, in units of `n² max(1, σ²)` steps; the uniform
    /// stage uses `σ = r_out`.
    pub burn_in: f64,
    /// Steps between recorded points during ratio estimation, in units of `n`.
    pub thin: f64,
    /// Initial points per phase are `base_samples · √n / ε²`.
    pub base_samples: f64,
    pub max_phase_samples: usize,
    /// A phase whose relative variance still exceeds this multiple of its
    /// budget after doubling up to the cap is reported as a failure.
    pub failure_factor: f64,
    /// Gaussian draws used to count the first phase's mass inside the body.
    pub z0_draws: usize,
    /// Steps between points returned by [`sample_well_rounded`], in units of
    /// `n² max(1, r_out²)`.
    pub sample_thin: f64,
    /// Split every growth step into this many geometric sub-steps.
    pub refinement: usize,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        AnnealingConfig {
            chains: 16,
            c_delta: 1.0,
            burn_in: 1.0,
            thin: 4.0,
            base_samples: 8.0,
            max_phase_samples: 200_000,
            failure_factor: 16.0,
            z0_draws: 10_000,
            sample_thin: 1.0,
            refinement: 1,
        }
    }
}

/// A body with certified origin-centred radii `B(0, r_in) ⊆ K ⊆ B(0, r_out)`.
#[derive(Clone, Copy, Debug)]
pub struct AnnealingTarget<'a> {
    pub body: &'a Body,
    pub r_in: f64,
    pub r_out: f64,
}

impl<'a> AnnealingTarget<'a> {
    pub fn new(body: &'a Body) -> Result<Self> {
        AnnealingTarget {
            body,
            r_in: body.origin_inner_radius(),
            r_out: body.origin_outer_radius(),
        }
        .validated()
    }

    /// Replace the enclosing radius with a tighter bound known to the caller.
    pub fn with_outer_radius(self, r_out: f64) -> Result<Self> {
        AnnealingTarget { r_out, ..self }.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.r_in > 0.0) {
            return Err(Error::InvalidInput(
                "body must contain a ball about the origin".into(),
            ));
        }
        if !(self.r_out >= self.r_in && self.r_out.is_finite()) {
            return Err(Error::InvalidInput("enclosing radius must be finite and ≥ r_in".into()));
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianPhase {
    pub sigma_sq: f64,
    pub delta: f64,
    /// Burn-in steps per chain on entering the phase.
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoolingSchedule {
    pub phases: Vec<GaussianPhase>,
    /// Step size for the terminal uniform target.
    pub uniform_delta: f64,
    pub uniform_steps: u64,
}

/// `r_in² / max(4n, χ²_n(0.999))`: at most `r_in²/(4n)`, and at least 99.9%
/// of the Gaussian mass lies in `B(0, r_in)`.
pub fn initial_variance(n: usize, r_in: f64) -> f64 {
    let q = ChiSquared::new(n as f64)
        .map(|d| d.inverse_cdf(0.999))
        .unwrap_or(f64::INFINITY);
    r_in * r_in / q.max(4.0 * n as f64)
}

impl CoolingSchedule {
    /// `σ²_{i+1} = σ²_i (1 + min(1, σ_i/√n))` until `σ² ≥ 4 r_out²`.
    pub fn new(n: usize, r_in: f64, r_out: f64, cfg: &AnnealingConfig) -> Result<Self> {
        let sqrt_n = (n as f64).sqrt();
        let delta = |sigma: f64| cfg.c_delta * sigma.min(1.0) / sqrt_n;
        let steps = |s2: f64| (cfg.burn_in * (n * n) as f64 * s2.max(1.0)).ceil().max(1.0) as u64;
        let stop = 4.0 * r_out * r_out;
        let k = cfg.refinement.max(1) as f64;
        let mut phases = Vec::new();
        let mut s2 = initial_variance(n, r_in);
        while s2 < stop {
            if phases.len() >= MAX_PHASES {
                return Err(Error::Sampler {
                    message: format!("cooling schedule exceeds {MAX_PHASES} phases"),
                    phase_log: String::new(),
                });
            }
            let sigma = s2.sqrt();
            phases.push(GaussianPhase {
                sigma_sq: s2,
                delta: delta(sigma),
                steps: steps(s2),
            });
            s2 *= (1.0 + (sigma / sqrt_n).min(1.0)).powf(1.0 / k);
        }
        Ok(CoolingSchedule {
            phases,
            uniform_delta: delta(f64::INFINITY),
            uniform_steps: steps(r_out * r_out),
        })
    }

    fn inv_var(&self, i: usize) -> f64 {
        self.phases.get(i).map_or(0.0, |p| 1.0 / p.sigma_sq)
    }
}

/// One phase of the telescoping product.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub phase: usize,
    pub sigma_sq: f64,
    pub ratio: f64,
    pub log_ratio: f64,
    pub samples: usize,
    /// Standard error of `ratio`, from the spread of per-chain means.
    pub stderr: f64,
    pub relative_variance: f64,
    /// Cumulative membership queries at the end of the phase.
    pub queries: u64,
}

/// Phase log rows `phase σ² samples ratio stderr queries`.
pub fn format_phase_log(rows: &[RatioEstimate]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            r.phase, r.sigma_sq, r.samples, r.ratio, r.stderr, r.queries
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub log_volume: f64,
    /// Log of the first phase's Gaussian integral over the body.
    pub log_z0: f64,
    pub inside_fraction: f64,
    pub ratios: Vec<RatioEstimate>,
    /// Estimated relative standard deviation of `volume`.
    pub relative_stderr: f64,
    pub queries: u64,
}

/// Exact draws from phase 0: Gaussian samples rejected against the body.
/// Returns the inside fraction and the first `keep` accepted points.
fn gaussian_rejection(
    body: &Body,
    sigma: f64,
    draws: usize,
    keep: usize,
    rng: &mut RngStream,
) -> Result<(f64, Vec<DVector<f64>>)> {
    let n = body.dim();
    let mut x = vec![0.0; n];
    let mut inside = 0usize;
    let mut kept = Vec::with_capacity(keep);
    let mut total = 0usize;
    while total < draws || kept.len() < keep {
        rng.gaussian(sigma, &mut x);
        total += 1;
        if body.contains_fast(&x) {
            inside += 1;
            if kept.len() < keep {
                kept.push(DVector::from_column_slice(&x));
            }
        }
        if total >= 100 * draws.max(keep) && inside == 0 {
            return Err(Error::NoAcceptances {
                trials: total as u64,
            });
        }
    }
    Ok((inside as f64 / total as f64, kept))
}

struct Chain {
    state: WalkState,
    rng: RngStream,
    values: Vec<f64>,
}

/// `exp(m) · mean`, relative stderr over equal-sized chains.
fn combine(chains: &[Chain]) -> (f64, f64, usize) {
    let m = chains
        .iter()
        .flat_map(|c| c.values.iter())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.values.iter().map(|v| (v - m).exp()).sum::<f64>() / c.values.len() as f64)
        .collect();
    let c = means.len() as f64;
    let mean = means.iter().sum::<f64>() / c;
    let var = if means.len() > 1 {
        means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (c - 1.0)
    } else {
        0.0
    };
    let rel = (var / c).sqrt() / mean;
    let samples = chains.iter().map(|c| c.values.len()).sum();
    (m + mean.ln(), rel, samples)
}

/// Volume of a well-rounded body with targeted relative standard deviation `ε/2`.
pub fn volume_well_rounded(
    target: AnnealingTarget<'_>,
    eps: f64,
    cfg: &AnnealingConfig,
    rng: &RngStream,
) -> Result<VolumeEstimate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("ε must lie in (0, 1), got {eps}")));
    }
    let body = target.body;
    let n = body.dim();
    let schedule = CoolingSchedule::new(n, target.r_in, target.r_out, cfg)?;
    let start_queries = body.queries();
    let chains_n = cfg.chains.max(2);
    let sigma0 = schedule.phases[0].sigma_sq.sqrt();
    let (fraction, starts) =
        gaussian_rejection(body, sigma0, cfg.z0_draws, chains_n, &mut rng.fork(0))?;
    let log_z0 = 0.5 * n as f64 * (2.0 * std::f64::consts::PI * sigma0 * sigma0).ln() + fraction.ln();

    let mut chains: Vec<Chain> = starts
        .into_iter()
        .enumerate()
        .map(|(c, x)| Chain {
            state: WalkState::new(x, schedule.phases[0].delta),
            rng: rng.fork(1 + c as u64),
            values: Vec::new(),
        })
        .collect();

    let p = schedule.phases.len();
    let budget = (0.5 * eps).powi(2) / p as f64;
    let base = (cfg.base_samples * (n as f64).sqrt() / (eps * eps)).ceil() as usize;
    let thin = (cfg.thin * n as f64).ceil().max(1.0) as u64;
    let mut ratios = Vec::with_capacity(p);

    for (i, phase) in schedule.phases.iter().enumerate() {
        let coef = 0.5 * (schedule.inv_var(i) - schedule.inv_var(i + 1));
        let walk = GaussianBallWalk::new(body, phase.delta, phase.sigma_sq)?;
        let cap = cfg.max_phase_samples.div_ceil(chains_n).max(2);
        let mut per_chain = base.div_ceil(chains_n).clamp(2, cap);
        let collect = |chains: &mut Vec<Chain>, count: usize| {
            chains.par_iter_mut().for_each(|c| {
                c.values.clear();
                for _ in 0..count {
                    walk.advance(&mut c.state, thin, &mut c.rng);
                    c.values.push(coef * linalg::norm_sq(c.state.x.as_slice()));
                }
            });
            combine(chains)
        };
        chains.par_iter_mut().for_each(|c| {
            c.state.delta = phase.delta;
            walk.advance(&mut c.state, phase.steps, &mut c.rng);
        });
        // Pilot batches only choose the size; the estimate comes from a fresh
        // batch so that stopping on a small variance does not bias the ratio.
        loop {
            let (_, rel, _) = collect(&mut chains, per_chain);
            if rel * rel <= budget || per_chain >= cap {
                break;
            }
            per_chain = (2 * per_chain).min(cap);
        }
        let (log_ratio, rel, samples) = collect(&mut chains, per_chain);
        let ratio = log_ratio.exp();
        ratios.push(RatioEstimate {
            phase: i,
            sigma_sq: phase.sigma_sq,
            ratio,
            log_ratio,
            samples,
            stderr: rel * ratio,
            relative_variance: rel * rel,
            queries: body.queries() - start_queries,
        });
        if rel * rel > cfg.failure_factor * budget {
            return Err(Error::Sampler {
                message: format!(
                    "phase {i} relative variance {:.3e} exceeds {}× its budget {:.3e} after {samples} samples",
                    rel * rel,
                    cfg.failure_factor,
                    budget
                ),
                phase_log: format_phase_log(&ratios),
            });
        }
    }

    let log_volume = log_z0 + ratios.iter().map(|r| r.log_ratio).sum::<f64>();
    let z0_relvar = (1.0 - fraction) / (fraction * cfg.z0_draws.max(1) as f64);
    let relative_stderr = (ratios.iter().map(|r| r.relative_variance).sum::<f64>() + z0_relvar).sqrt();
    Ok(VolumeEstimate {
        volume: log_volume.exp(),
        log_volume,
        log_z0,
        inside_fraction: fraction,
        ratios,
        relative_stderr,
        queries: body.queries() - start_queries,
    })
}

/// Points approximately uniform on a well-rounded body.
///
/// Up to `cfg.chains` independent chains each walk the whole cooling
/// schedule, then emit points with thinning; outputs are interleaved in
/// chain order.
pub fn sample_well_rounded(
    target: AnnealingTarget<'_>,
    n_samples: usize,
    cfg: &AnnealingConfig,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let body = target.body;
    let n = body.dim();
    let schedule = CoolingSchedule::new(n, target.r_in, target.r_out, cfg)?;
    let sigma0 = schedule.phases[0].sigma_sq.sqrt();
    let chains = cfg.chains.max(1).min(n_samples.max(1));
    let per_chain = n_samples.div_ceil(chains);
    let thin = (cfg.sample_thin * (n * n) as f64 * target.r_out.powi(2).max(1.0))
        .ceil()
        .max(1.0) as u64;
    let uniform = BallWalk::new(body, schedule.uniform_delta)?;
    let runs: Vec<Vec<DVector<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng.fork(c as u64);
            let (_, mut start) = gaussian_rejection(body, sigma0, 1, 1, &mut rng)?;
            let mut state = WalkState::new(start.remove(0), schedule.phases[0].delta);
            for phase in &schedule.phases {
                state.delta = phase.delta;
                GaussianBallWalk::new(body, phase.delta, phase.sigma_sq)?
                    .advance(&mut state, phase.steps, &mut rng);
            }
            state.delta = schedule.uniform_delta;
            uniform.advance(&mut state, schedule.uniform_steps, &mut rng);
            let mut out = Vec::with_capacity(per_chain);
            for i in 0..per_chain {
                if i > 0 {
                    uniform.advance(&mut state, thin, &mut rng);
                }
                out.push(state.x.clone());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..per_chain {
        for run in &runs {
            if out.len() < n_samples {
                out.push(run[i].clone());
            }
        }
    }
    Ok(out)
}
