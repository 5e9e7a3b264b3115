//! Rounding a convex body to near-isotropic position.
//!
//! [`isotropize`] grows an origin-centred inscribed ball: every iteration
//! estimates the covariance of the current image, doubles the directions
//! whose variance is at most `λ`, and enlarges the certified radius by a
//! near-2 factor. A final whitening step maps the image covariance to
//! about `√2 · I`, the middle of the 2-isotropic band `[I, 2I]`. [`iterative_isotropization`] applies this to `K ∩ B(c, t)` for
//! `t = r, 2r, 4r, …` so that each stage starts from a well-rounded body.
//!
//! All transforms are accumulated in one [`AffineMap`] from original to
//! working coordinates.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::annealing::{sample_well_rounded, AnnealingConfig, AnnealingTarget};
use crate::bodies::{AffineMap, Body, Shape};
use crate::covariance::{
    final_isotropy_estimate, final_sample_count, low_eigenspace_projection,
    split_sample_covariance, IsotropyEstimate,
};
use crate::error::{Error, Result};
use crate::walks::{BallWalk, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Literal schedules; at desk-scale dimensions the growth loop is empty.
    Paper,
    /// Small-dimension clamps and tuned constants.
    Practical,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Paper => "paper",
            Mode::Practical => "practical",
        })
    }
}

/// Eigenvalue threshold `λ = n / r^α`; valid for `α ∈ [0, 2/(p−1)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralizedThreshold {
    pub alpha: f64,
    pub p: f64,
}

#[derive(Clone, Debug)]
pub struct IsotropizeConfig {
    pub mode: Mode,
    /// `k = c · r² · log^e n` samples per half.
    pub c: f64,
    pub log_exponent: f64,
    /// Loop while `c_stop · r² · log² n ≤ n`.
    pub c_stop: f64,
    /// Replace `log n` by `log max(n, 16)` and clamp the growth factor to `[1.5, 2)`.
    pub small_n_clamp: bool,
    pub generalized: Option<GeneralizedThreshold>,
    pub initial_radius: f64,
    /// Ball-walk step is `c_delta · r / √n`.
    pub c_delta: f64,
    /// Steps between samples are `c_mix · n² · (tr Â / n) / r²`.
    pub c_mix: f64,
    pub initial_trace_proxy: f64,
    pub max_steps_per_sample: u64,
    /// Final whitening uses `⌈c_n · n · log max(n,16)⌉` samples.
    pub c_n: f64,
    /// Covariance the final whitening aims for, as a multiple of `I`.
    pub target_variance: f64,
    pub chains: usize,
    /// Return an error when a polytope's certified inner radius drops below
    /// the claimed one.
    pub strict_invariant: bool,
    pub annealing: AnnealingConfig,
}

impl IsotropizeConfig {
    pub fn practical() -> Self {
        IsotropizeConfig {
            mode: Mode::Practical,
            c: 64.0,
            log_exponent: 3.0,
            c_stop: 1.0,
            small_n_clamp: true,
            generalized: None,
            initial_radius: 0.25,
            c_delta: 1.0,
            c_mix: 2.0,
            initial_trace_proxy: 2.0,
            max_steps_per_sample: 1_000_000,
            c_n: 50.0,
            target_variance: std::f64::consts::SQRT_2,
            chains: 8,
            strict_invariant: true,
            annealing: AnnealingConfig::default(),
        }
    }

    pub fn paper() -> Self {
        IsotropizeConfig {
            mode: Mode::Paper,
            c: 1.0,
            log_exponent: 5.0,
            c_stop: 1024.0,
            small_n_clamp: false,
            ..IsotropizeConfig::practical()
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Paper => IsotropizeConfig::paper(),
            Mode::Practical => IsotropizeConfig::practical(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0
            && self.c_mix > 0.0
            && self.c_delta > 0.0
            && self.c_n > 0.0
            && self.target_variance > 0.0)
        {
            return Err(Error::InvalidInput("rounding constants must be positive".into()));
        }
        if !(self.initial_radius > 0.0) {
            return Err(Error::InvalidInput("initial radius must be positive".into()));
        }
        if let Some(g) = self.generalized {
            if !(g.p > 1.0 && g.alpha >= 0.0 && g.alpha <= 2.0 / (g.p - 1.0)) {
                return Err(Error::InvalidInput(format!(
                    "α must lie in [0, 2/(p−1)], got α={} p={}",
                    g.alpha, g.p
                )));
            }
        }
        Ok(())
    }

    pub fn log_n(&self, n: usize) -> f64 {
        if self.small_n_clamp {
            (n.max(16) as f64).ln()
        } else {
            (n as f64).ln()
        }
    }

    pub fn keep_growing(&self, n: usize, r: f64) -> bool {
        let l = self.log_n(n);
        self.c_stop * r * r * l * l <= n as f64
    }

    pub fn growth_factor(&self, n: usize) -> f64 {
        let g = 2.0 * (1.0 - 1.0 / self.log_n(n));
        if self.small_n_clamp {
            g.clamp(1.5, 2.0 - 1e-9)
        } else {
            g
        }
    }

    pub fn samples_per_half(&self, n: usize, r: f64) -> usize {
        let k = self.c * r * r * self.log_n(n).powf(self.log_exponent);
        (k.ceil() as usize).max(2)
    }

    pub fn threshold(&self, n: usize, r: f64) -> f64 {
        match self.generalized {
            Some(g) => n as f64 / r.powf(g.alpha),
            None => n as f64,
        }
    }

    fn steps_per_sample(&self, n: usize, trace_proxy: f64, r: f64) -> u64 {
        let s = self.c_mix * (n * n) as f64 * trace_proxy / (r * r);
        (s.ceil() as u64).clamp(1, self.max_steps_per_sample)
    }
}

/// One growth iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub phase: usize,
    pub t: f64,
    pub iter: usize,
    pub r: f64,
    pub k: usize,
    pub rank: usize,
    pub trace: f64,
    /// Certified inner radius of the image after the update.
    pub inner_radius: f64,
    /// Radius the algorithm claims after the update.
    pub claimed_radius: f64,
    pub queries: u64,
}

/// One call of [`isotropize`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub t: f64,
    pub initial_inner_radius: f64,
    pub log_det_before: f64,
    pub log_det_whitening: f64,
    pub log_det_after: f64,
    pub iterations: usize,
    pub final_samples: usize,
    pub queries: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoundingTrace {
    pub iterations: Vec<IterationRecord>,
    pub phases: Vec<PhaseRecord>,
    pub queries: u64,
}

impl RoundingTrace {
    pub fn t_values(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.t).collect()
    }

    /// Rows `phase t iter r k rankP trace queries`.
    pub fn format_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.iterations {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                r.phase, r.t, r.iter, r.r, r.k, r.rank, r.trace, r.queries
            );
        }
        out
    }
}

/// Result of rounding: the accumulated map and the last whitening estimate.
#[derive(Clone, Debug)]
pub struct Rounded {
    pub map: AffineMap,
    /// Mean of the last image before recentering, in working coordinates.
    pub mean: DVector<f64>,
    pub estimate: IsotropyEstimate,
    pub trace: RoundingTrace,
}

fn take_queries(body: &Body) -> u64 {
    let q = body.queries();
    body.reset_queries();
    q
}

fn polyhedral(body: &Body) -> bool {
    match body.shape() {
        Shape::Polytope { .. } => true,
        Shape::Ball { .. } => false,
        Shape::BallIntersection { base, .. } | Shape::Transformed { base, .. } => polyhedral(base),
    }
}

type Points = Vec<DVector<f64>>;

/// `count` points from one ball walk per start, concatenated in chain
/// order; also returns each chain's final point.
fn draw_samples(
    image: &Body,
    starts: &[DVector<f64>],
    count: usize,
    delta: f64,
    steps_per_sample: u64,
    rng: &RngStream,
) -> Result<(Points, Points)> {
    let walk = BallWalk::new(image, delta)?;
    let per_chain = count.div_ceil(starts.len());
    let runs: Vec<(Points, DVector<f64>)> = starts
        .par_iter()
        .enumerate()
        .map(|(c, start)| {
            let mut rng = rng.fork(c as u64);
            let start = if image.membership(start.as_slice()) {
                start.clone()
            } else {
                // round-off pushed a boundary point out; the origin is always inside
                DVector::zeros(image.dim())
            };
            let mut state = walk.start(start.as_slice())?;
            let mut pts = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                walk.advance(&mut state, steps_per_sample, &mut rng);
                pts.push(state.x.clone());
            }
            Ok((pts, state.x))
        })
        .collect::<Result<_>>()?;
    let (pts, last): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let mut all: Vec<_> = pts.into_iter().flatten().collect();
    all.truncate(count);
    Ok((all, last))
}

fn run_isotropize(
    body: &Arc<Body>,
    phi0: &AffineMap,
    cfg: &IsotropizeConfig,
    rng: &RngStream,
    trace: &mut RoundingTrace,
    phase: usize,
    t: f64,
) -> Result<(AffineMap, DVector<f64>, IsotropyEstimate)> {
    let n = body.dim();
    let strict = cfg.strict_invariant && polyhedral(body);
    let mut phi = phi0.clone();
    let mut r = cfg.initial_radius;
    let growth = cfg.growth_factor(n);
    if cfg.keep_growing(n, r) && !(growth > 1.0) {
        return Err(Error::InvalidInput(format!(
            "radius growth factor {growth} does not exceed 1 at n = {n}"
        )));
    }
    let initial_inner = body.image_inner_radius(&phi);
    let violation = |iteration: usize, exact: f64, claimed: f64, trace: &RoundingTrace| {
        Error::InvariantViolation {
            iteration,
            exact,
            claimed,
            trace: Box::new(trace.clone()),
        }
    };
    if strict && initial_inner < r {
        return Err(violation(0, initial_inner, r, trace));
    }

    let mut image = Body::transformed(body.clone(), phi.clone())?;
    let target = AnnealingTarget::new(&image)?;
    let chains = cfg.chains.max(1);
    let mut xs = sample_well_rounded(target, chains, &cfg.annealing, &mut rng.fork(0))?;
    let mut queries = take_queries(&image);
    let mut proxy = cfg.initial_trace_proxy;
    let mut iter = 0;

    while cfg.keep_growing(n, r) {
        let k = cfg.samples_per_half(n, r);
        let delta = cfg.c_delta * r / (n as f64).sqrt();
        let steps = cfg.steps_per_sample(n, proxy, r);
        let (samples, last) =
            draw_samples(&image, &xs, 2 * k, delta, steps, &rng.fork(1 + iter as u64))?;
        queries += take_queries(&image);
        let est = split_sample_covariance(&samples)?;
        let proj = low_eigenspace_projection(&est.a_hat, cfg.threshold(n, r))?;
        let m = DMatrix::identity(n, n) + &proj.p;
        phi = phi.compose(&m)?;
        xs = last.iter().map(|x| &m * x).collect();
        proxy = (&m * &est.a_hat * &m).trace() / n as f64;
        let r_next = growth * r;
        let inner = body.image_inner_radius(&phi);
        trace.iterations.push(IterationRecord {
            phase,
            t,
            iter,
            r,
            k,
            rank: proj.rank,
            trace: est.trace(),
            inner_radius: inner,
            claimed_radius: r_next,
            queries: trace.queries + queries,
        });
        if strict && inner < r_next {
            return Err(violation(iter + 1, inner, r_next, trace));
        }
        image = Body::transformed(body.clone(), phi.clone())?;
        r = r_next;
        iter += 1;
    }

    let count = final_sample_count(n, cfg.c_n);
    let delta = cfg.c_delta * r / (n as f64).sqrt();
    let steps = cfg.steps_per_sample(n, proxy, r);
    let (samples, _) = draw_samples(&image, &xs, count, delta, steps, &rng.fork(u64::MAX))?;
    queries += take_queries(&image);
    let iso = final_isotropy_estimate(&samples)?;
    let before = phi.log_abs_det();
    let whitened = phi
        .recentered(&iso.mean)?
        .compose(&(&iso.w * cfg.target_variance.sqrt()))?;
    trace.queries += queries;
    trace.phases.push(PhaseRecord {
        phase,
        t,
        initial_inner_radius: initial_inner,
        log_det_before: phi0.log_abs_det(),
        log_det_whitening: whitened.log_abs_det() - before,
        log_det_after: whitened.log_abs_det(),
        iterations: iter,
        final_samples: count,
        queries,
    });
    Ok((whitened, iso.mean.clone(), iso))
}

/// Map `phi0 · body`, which must contain `B(0, 1/4)`, to 2-isotropic position.
pub fn isotropize(
    body: &Arc<Body>,
    phi0: &AffineMap,
    cfg: &IsotropizeConfig,
    rng: &RngStream,
) -> Result<Rounded> {
    cfg.validate()?;
    crate::error::check_dim(body.dim(), phi0.dim())?;
    let mut trace = RoundingTrace::default();
    let (map, mean, estimate) = run_isotropize(body, phi0, cfg, rng, &mut trace, 0, f64::NAN)?;
    Ok(Rounded {
        map,
        mean,
        estimate,
        trace,
    })
}

/// Round a body with `B(c, r) ⊆ K ⊆ B(c, R)`, where `c` is the body's
/// declared inner centre.
pub fn iterative_isotropization(
    body: &Arc<Body>,
    r: f64,
    big_r: f64,
    cfg: &IsotropizeConfig,
    rng: &RngStream,
) -> Result<Rounded> {
    cfg.validate()?;
    if !(r > 0.0 && big_r >= r && big_r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need 0 < r ≤ R < ∞, got r={r} R={big_r}"
        )));
    }
    let n = body.dim();
    let center = body.inner_ball().center.clone();
    let certified = body.image_inner_radius(&AffineMap::translation(center.clone()));
    if certified < r * (1.0 - 1e-9) {
        return Err(Error::InvalidInput(format!(
            "body does not contain the declared ball of radius {r} (certified {certified})"
        )));
    }
    let mut phi = AffineMap::new(DMatrix::identity(n, n) / r, center.clone())?;
    let mut trace = RoundingTrace::default();
    let mut t = r;
    let mut phase = 0;
    loop {
        let k_t = Arc::new(Body::intersect_ball(body.clone(), center.clone(), t)?);
        let (next, mean, estimate) =
            run_isotropize(&k_t, &phi, cfg, &rng.fork(phase as u64), &mut trace, phase, t)?;
        phi = next;
        if t >= big_r {
            return Ok(Rounded {
                map: phi,
                mean,
                estimate,
                trace,
            });
        }
        t *= 2.0;
        phase += 1;
    }
}

/// `E‖x − x̄‖²` from the given samples and whether it is at most `c_wr · n`.
pub fn well_roundedness_check(samples: &[DVector<f64>], c_wr: f64) -> Result<(f64, bool)> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("no samples".into()));
    };
    let n = first.len();
    let mut mean = DVector::zeros(n);
    for s in samples {
        mean += s;
    }
    mean /= samples.len() as f64;
    let r2 = samples.iter().map(|s| (s - &mean).norm_squared()).sum::<f64>() / samples.len() as f64;
    Ok((r2, r2 <= c_wr * n as f64))
}

/// Default sample count for [`well_roundedness_check`].
pub fn well_roundedness_samples(n: usize) -> usize {
    10 * n
}
