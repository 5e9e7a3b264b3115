//! Split-sample mean and covariance, and projections onto low eigenspaces.
//!
//! The mean comes from the second half of the sample and the covariance from
//! the first half centred at that mean, so the two are independent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub mean: DVector<f64>,
    pub a_hat: DMatrix<f64>,
    /// Samples per half.
    pub k: usize,
}

impl CovarianceEstimate {
    pub fn trace(&self) -> f64 {
        self.a_hat.trace()
    }
}

/// `x̂ = (1/k) Σ x_{k+i}`, `Â = (1/k) Σ (x_i − x̂)(x_i − x̂)ᵀ` over `i ≤ k`.
pub fn split_sample_covariance(samples: &[DVector<f64>]) -> Result<CovarianceEstimate> {
    if samples.is_empty() || !samples.len().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "split-sample estimate needs an even, positive sample count, got {}",
            samples.len()
        )));
    }
    let k = samples.len() / 2;
    let n = samples[0].len();
    for s in samples {
        crate::error::check_dim(n, s.len())?;
    }
    let mut mean = DVector::zeros(n);
    for s in &samples[k..] {
        mean += s;
    }
    mean /= k as f64;
    let mut a_hat = DMatrix::zeros(n, n);
    let mut d = DVector::zeros(n);
    for s in &samples[..k] {
        d.copy_from(s);
        d -= &mean;
        a_hat.ger(1.0, &d, &d, 1.0);
    }
    a_hat /= k as f64;
    let a_hat = clamp_psd(linalg::symmetrize(&a_hat))?;
    Ok(CovarianceEstimate { mean, a_hat, k })
}

/// Round-off can push eigenvalues of a Gram matrix slightly below zero.
fn clamp_psd(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = linalg::sym_eigen(&a)?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(a);
    }
    Ok(linalg::symmetrize(&linalg::spectral_map(&eig, |l| l.max(0.0))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenProjection {
    pub p: DMatrix<f64>,
    pub rank: usize,
    pub threshold: f64,
}

/// Orthogonal projection onto eigenvectors of `a` with eigenvalue `≤ λ`.
pub fn low_eigenspace_projection(a: &DMatrix<f64>, lambda: f64) -> Result<EigenProjection> {
    let eig = linalg::sym_eigen(a)?;
    let cut = lambda + 1e-12 * lambda.abs().max(1.0);
    let rank = eig.eigenvalues.iter().filter(|&&l| l <= cut).count();
    let p = linalg::symmetrize(&linalg::spectral_map(&eig, |l| if l <= cut { 1.0 } else { 0.0 }));
    Ok(EigenProjection {
        p,
        rank,
        threshold: lambda,
    })
}

/// Largest amount by which `Â` leaves the band `[(1−ε)A, (1+ε)A]`.
pub fn additive_violation(a_true: &DMatrix<f64>, a_hat: &DMatrix<f64>, eps: f64) -> Result<f64> {
    let upper = linalg::symmetrize(&(a_hat - a_true * (1.0 + eps)));
    let lower = linalg::symmetrize(&(a_true * (1.0 - eps) - a_hat));
    let top = |m: &DMatrix<f64>| -> Result<f64> {
        Ok(linalg::sym_eigenvalues(m)?.last().copied().unwrap_or(0.0))
    };
    Ok(top(&upper)?.max(top(&lower)?).max(0.0))
}

/// Per-`k` violation statistics and their log-log trend.
#[derive(Clone, Debug)]
pub struct TrendReport {
    pub ks: Vec<usize>,
    /// `violations[i][t]`: trial `t` at `ks[i]`.
    pub violations: Vec<Vec<f64>>,
    pub median_violation: Vec<f64>,
    /// Slope of `log median v` against `log k`; `None` when fewer than two
    /// medians are positive.
    pub slope: Option<f64>,
    /// Median of `‖Â − A‖_op` per `k`, a threshold-free companion statistic.
    pub median_op_error: Vec<f64>,
    pub op_error_slope: Option<f64>,
}

/// Diagnostic only: compares estimates at several sample sizes to a known covariance.
pub fn bernstein_error_check(
    a_true: &DMatrix<f64>,
    estimates: &[(usize, Vec<DMatrix<f64>>)],
    eps: f64,
) -> Result<TrendReport> {
    let mut ks = Vec::new();
    let mut violations = Vec::new();
    let mut median_violation = Vec::new();
    let mut median_op_error = Vec::new();
    for (k, mats) in estimates {
        let v = mats
            .iter()
            .map(|m| additive_violation(a_true, m, eps))
            .collect::<Result<Vec<_>>>()?;
        let op: Vec<f64> = mats.iter().map(|m| linalg::op_norm(&(m - a_true))).collect();
        ks.push(*k);
        median_violation.push(median(&v));
        median_op_error.push(median(&op));
        violations.push(v);
    }
    let slope = log_log_slope(&ks, &median_violation);
    let op_error_slope = log_log_slope(&ks, &median_op_error);
    Ok(TrendReport {
        ks,
        violations,
        median_violation,
        slope,
        median_op_error,
        op_error_slope,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// Least-squares slope of `log y` on `log x` over points with `y > 0`.
pub fn log_log_slope(xs: &[usize], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&x, &y)| ((x as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `⌈c_N · n · log max(n, 16)⌉`, rounded up to even for the split.
pub fn final_sample_count(n: usize, c_n: f64) -> usize {
    let raw = (c_n * n as f64 * (n.max(16) as f64).ln()).ceil() as usize;
    raw.max(2).div_ceil(2) * 2
}

/// Mean, covariance and whitening matrix `W = Â^{−1/2}`.
#[derive(Clone, Debug)]
pub struct IsotropyEstimate {
    pub mean: DVector<f64>,
    pub a_hat: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

pub fn final_isotropy_estimate(samples: &[DVector<f64>]) -> Result<IsotropyEstimate> {
    let est = split_sample_covariance(samples)?;
    let eig = linalg::sym_eigen(&est.a_hat)?;
    let floor = 1e-12 * est.a_hat.trace().max(f64::MIN_POSITIVE);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    if !(lmin > floor) {
        return Err(Error::DegenerateCovariance {
            direction: eig.eigenvectors.column(imin).iter().copied().collect(),
        });
    }
    let w = linalg::symmetrize(&linalg::spectral_map(&eig, |l| 1.0 / l.max(floor).sqrt()));
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(IsotropyEstimate {
        mean: est.mean,
        a_hat: est.a_hat,
        w,
        eigenvalues,
    })
}
