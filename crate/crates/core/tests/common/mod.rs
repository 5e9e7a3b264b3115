#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use volumetrica::bodies::Polytope;
use volumetrica::walks::RngStream;

/// Naive polytope ball walk written against the raw stream: one `ball_step`
/// per proposal, optional origin-centred cap, then every row in order.
pub fn naive_walk(
    poly: &Polytope,
    x0: &[f64],
    delta: f64,
    cap: Option<f64>,
    steps: u64,
    rng: &mut RngStream,
) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    for _ in 0..steps {
        rng.ball_step(delta, &mut z);
        for i in 0..n {
            y[i] = x[i] + z[i];
        }
        if let Some(rho) = cap {
            if y.iter().map(|v| v * v).sum::<f64>().sqrt() > rho {
                continue;
            }
        }
        if (0..poly.num_constraints()).all(|j| poly.row_dot(j, &y) <= poly.b()[j]) {
            x.copy_from_slice(&y);
        }
    }
    x
}

/// Exact uniform points in the axis box `[lo, hi]`.
pub fn box_points(lo: &[f64], hi: &[f64], count: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.uniform())))
        .collect()
}

/// Plain mean and `1/N` covariance.
pub fn moments(pts: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = pts[0].len();
    let count = pts.len() as f64;
    let mean = pts.iter().fold(DVector::zeros(n), |a, p| a + p) / count;
    let mut cov = DMatrix::zeros(n, n);
    for p in pts {
        let d = p - &mean;
        cov += &d * d.transpose();
    }
    (mean, cov / count)
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}
