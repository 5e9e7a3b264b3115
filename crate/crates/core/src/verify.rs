//! Ground-truth oracles and statistical checks.
//!
//! The rejection oracle draws exactly uniform points from a bounding box, so
//! it is independent of every Markov chain in the crate. It is meant for
//! `n ≤ 8`, where acceptance rates stay reasonable.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::bodies::{Body, Polytope, Shape};
use crate::covariance::median;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::walks::RngStream;

/// Uniform sampler by rejection from an axis-aligned box.
#[derive(Debug)]
pub struct RejectionOracle<'a> {
    body: &'a Body,
    lo: DVector<f64>,
    hi: DVector<f64>,
    /// Maximum box draws per returned point.
    pub budget: u64,
    trials: u64,
    accepted: u64,
}

impl<'a> RejectionOracle<'a> {
    pub fn new(body: &'a Body, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(body.dim(), lo.len())?;
        check_dim(body.dim(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidInput("box must have positive side lengths".into()));
        }
        Ok(RejectionOracle {
            body,
            lo,
            hi,
            budget: 100_000_000,
            trials: 0,
            accepted: 0,
        })
    }

    /// Box from the body's geometry: LP bounds for polytopes, otherwise the
    /// enclosing ball.
    pub fn for_body(body: &'a Body) -> Result<Self> {
        let (lo, hi) = bounding_box(body)?;
        RejectionOracle::new(body, lo, hi)
    }

    pub fn box_volume(&self) -> f64 {
        (&self.hi - &self.lo).iter().product()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.trials as f64
        }
    }

    pub fn sample(&mut self, rng: &mut RngStream) -> Result<DVector<f64>> {
        let n = self.lo.len();
        let mut x = DVector::zeros(n);
        for _ in 0..self.budget {
            for i in 0..n {
                x[i] = self.lo[i] + (self.hi[i] - self.lo[i]) * rng.uniform();
            }
            self.trials += 1;
            if self.body.membership(x.as_slice()) {
                self.accepted += 1;
                return Ok(x);
            }
        }
        Err(Error::NoAcceptances {
            trials: self.budget,
        })
    }

    pub fn samples(&mut self, count: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

/// Box containing the body.
pub fn bounding_box(body: &Body) -> Result<(DVector<f64>, DVector<f64>)> {
    if let Shape::Polytope { poly, .. } = body.shape() {
        return poly.bounding_box();
    }
    let c = &body.inner_ball().center;
    let r = body.outer_radius();
    Ok((c.add_scalar(-r), c.add_scalar(r)))
}

/// `box volume × acceptance fraction` and its binomial standard error.
pub fn brute_force_volume(
    body: &Body,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    trials: u64,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if trials < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 trials, got {trials}")));
    }
    let oracle = RejectionOracle::new(body, lo.clone(), hi.clone())?;
    let n = body.dim();
    let mut x = vec![0.0; n];
    let mut hits = 0u64;
    for _ in 0..trials {
        for i in 0..n {
            x[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
        }
        if body.membership(&x) {
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::NoAcceptances { trials });
    }
    let p = hits as f64 / trials as f64;
    let vol = oracle.box_volume();
    Ok((vol * p, vol * (p * (1.0 - p) / trials as f64).sqrt()))
}

pub fn log_ball_volume(n: usize, radius: f64) -> f64 {
    let h = 0.5 * n as f64;
    h * std::f64::consts::PI.ln() + n as f64 * radius.ln() - ln_gamma(h + 1.0)
}

pub fn ball_volume(n: usize, radius: f64) -> f64 {
    log_ball_volume(n, radius).exp()
}

pub fn log_simplex_volume(n: usize) -> f64 {
    -ln_gamma(n as f64 + 1.0)
}

pub fn simplex_volume(n: usize) -> f64 {
    log_simplex_volume(n).exp()
}

pub fn cube_volume(n: usize, half_width: f64) -> f64 {
    (2.0 * half_width).powi(n as i32)
}

/// Polytope whose facets are all tangent to `B(center, radius)`, which is
/// therefore its largest inscribed ball.
#[derive(Clone, Debug)]
pub struct RandomPolytope {
    pub poly: Polytope,
    pub center: DVector<f64>,
    pub radius: f64,
}

impl RandomPolytope {
    pub fn body(&self) -> Result<Body> {
        Body::polytope_with_inner(self.poly.clone(), self.center.clone(), self.radius)
    }
}

/// `m ∈ [2n, 8n]` uniformly random unit normals, facets tangent to a ball of
/// radius in `[0.5, 2]` centred in `[−1, 1]ⁿ`; redrawn until bounded.
pub fn random_polytope(n: usize, rng: &mut RngStream) -> Result<RandomPolytope> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    loop {
        let m = 2 * n + (rng.uniform() * (6 * n + 1) as f64) as usize;
        let radius = 0.5 + 1.5 * rng.uniform();
        let center = DVector::from_fn(n, |_, _| 2.0 * rng.uniform() - 1.0);
        let mut rows = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut a = vec![0.0; n];
        for _ in 0..m {
            rng.unit_direction(&mut a);
            b.push(linalg::dot(&a, center.as_slice()) + radius);
            rows.push(a.clone());
        }
        let poly = Polytope::from_rows(&rows, &b)?;
        match poly.bounding_box() {
            Ok(_) => {
                return Ok(RandomPolytope {
                    poly,
                    center,
                    radius,
                })
            }
            Err(Error::InvalidInput(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// One row of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub test: String,
    pub name: String,
    pub n: usize,
    pub seed: u64,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Rows `test name n seed statistic bound verdict`.
pub fn format_rows(rows: &[VerifyRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            r.test,
            r.name,
            r.n,
            r.seed,
            r.statistic,
            r.bound,
            if r.pass { "pass" } else { "fail" }
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AntiConcentrationRow {
    pub eps: f64,
    pub p_hat: f64,
    pub bound: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AntiConcentrationReport {
    pub rows: Vec<AntiConcentrationRow>,
    pub pass: bool,
    /// Every bound `2ε/σ` was at least 1.
    pub vacuous: bool,
}

/// `P̂(|aᵀX − b| ≤ ε) ≤ 2ε/σ_floor + 3·stderr` for every `ε` in the grid.
pub fn anti_concentration_test(
    samples: &[DVector<f64>],
    a: &DVector<f64>,
    b: f64,
    sigma_floor: f64,
    eps_grid: &[f64],
) -> Result<AntiConcentrationReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if (a.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("hyperplane normal must be a unit vector".into()));
    }
    let d: Vec<f64> = samples.iter().map(|x| (a.dot(x) - b).abs()).collect();
    let n = d.len() as f64;
    let rows: Vec<AntiConcentrationRow> = eps_grid
        .iter()
        .map(|&eps| {
            let p_hat = d.iter().filter(|&&v| v <= eps).count() as f64 / n;
            let bound = 2.0 * eps / sigma_floor;
            let stderr = (p_hat * (1.0 - p_hat) / n).sqrt();
            AntiConcentrationRow {
                eps,
                p_hat,
                bound,
                stderr,
                pass: p_hat <= bound + 3.0 * stderr,
            }
        })
        .collect();
    Ok(AntiConcentrationReport {
        pass: rows.iter().all(|r| r.pass),
        vacuous: rows.iter().all(|r| r.bound >= 1.0),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinEigenvalueReport {
    pub lambda_min: f64,
    pub bound: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// `λ_min(Â) ≥ r²/(n+1)² − 3·stderr`, with the standard error of the variance
/// along the minimizing eigenvector.
pub fn min_eigenvalue_test(samples: &[DVector<f64>], inner_radius: f64) -> Result<MinEigenvalueReport> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("no samples".into()));
    };
    let n = first.len();
    let count = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(n), |acc, x| acc + x) / count;
    let mut cov = DMatrix::zeros(n, n);
    for x in samples {
        let d = x - &mean;
        cov.ger(1.0 / count, &d, &d, 1.0);
    }
    let eig = linalg::sym_eigen(&linalg::symmetrize(&cov))?;
    let (i, &lambda_min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let v = eig.eigenvectors.column(i);
    let sq: Vec<f64> = samples.iter().map(|x| (x - &mean).dot(&v).powi(2)).collect();
    let m2 = sq.iter().sum::<f64>() / count;
    let var = sq.iter().map(|s| (s - m2).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    let stderr = (var / count).sqrt();
    let bound = inner_radius * inner_radius / ((n + 1) as f64).powi(2);
    Ok(MinEigenvalueReport {
        lambda_min,
        bound,
        stderr,
        pass: lambda_min >= bound - 3.0 * stderr,
    })
}

/// Deviations of a sample from known moments, each with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodnessReport {
    pub samples: usize,
    pub mean_error: f64,
    /// Largest `|x̄_i − μ_i| / se_i`.
    pub mean_z: f64,
    pub cov_max_error: f64,
    /// Largest `|Ĉ_ij − C_ij| / se_ij`.
    pub cov_z: f64,
    /// Largest Kolmogorov distance over axes with a known marginal.
    pub cdf_max_dev: Option<f64>,
    /// 99% critical value `1.63/√N` for `cdf_max_dev`.
    pub cdf_bound: f64,
}

impl GoodnessReport {
    pub fn within_3_stderr(&self) -> bool {
        self.mean_z <= 3.0 && self.cov_z <= 3.0
    }

    pub fn cdf_pass(&self) -> bool {
        self.cdf_max_dev.is_none_or(|d| d <= self.cdf_bound)
    }
}

pub type Marginal<'a> = &'a dyn Fn(usize, f64) -> f64;

pub fn sampler_goodness(
    samples: &[DVector<f64>],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    marginal_cdf: Option<Marginal<'_>>,
) -> Result<GoodnessReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let n = mean.len();
    for s in samples {
        check_dim(n, s.len())?;
    }
    let count = samples.len() as f64;
    let xbar = samples.iter().fold(DVector::zeros(n), |acc, x| acc + x) / count;
    let mut mean_z: f64 = 0.0;
    for i in 0..n {
        let se = (cov[(i, i)] / count).sqrt();
        mean_z = mean_z.max((xbar[i] - mean[i]).abs() / se);
    }
    // moments about the known mean, so each entry is a plain average
    let mut cov_z: f64 = 0.0;
    let mut cov_max_error: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let prods: Vec<f64> = samples
                .iter()
                .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / count;
            let var = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (count - 1.0);
            let se = (var / count).sqrt();
            let err = (c - cov[(i, j)]).abs();
            cov_max_error = cov_max_error.max(err);
            cov_z = cov_z.max(if se > 0.0 { err / se } else if err > 0.0 { f64::INFINITY } else { 0.0 });
        }
    }
    let cdf_max_dev = marginal_cdf.map(|f| {
        (0..n)
            .map(|i| {
                let mut v: Vec<f64> = samples.iter().map(|x| x[i]).collect();
                v.sort_by(f64::total_cmp);
                v.iter()
                    .enumerate()
                    .map(|(k, &x)| {
                        let fx = f(i, x);
                        (fx - k as f64 / count).abs().max(((k + 1) as f64 / count - fx).abs())
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    });
    Ok(GoodnessReport {
        samples: samples.len(),
        mean_error: (&xbar - mean).norm(),
        mean_z,
        cov_max_error,
        cov_z,
        cdf_max_dev,
        cdf_bound: 1.63 / count.sqrt(),
    })
}

/// Median relative error helper for seed sweeps.
pub fn median_relative_error(estimates: &[f64], truth: f64) -> f64 {
    let errs: Vec<f64> = estimates.iter().map(|e| (e / truth - 1.0).abs()).collect();
    median(&errs)
}
