use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Condition numbers above this are treated as singular.
const MAX_CONDITION: f64 = 1e13;

/// Invertible affine map `y = T (x - shift)`.
///
/// The inverse is refactored from scratch on every composition and the
/// accumulated `log|det T|` is carried separately so that volumes of images
/// can be mapped back without overflow.
#[derive(Clone, Debug)]
pub struct AffineMap {
    t: DMatrix<f64>,
    t_inv: DMatrix<f64>,
    shift: DVector<f64>,
    log_abs_det: f64,
    min_singular: f64,
    max_singular: f64,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap {
            t: DMatrix::identity(n, n),
            t_inv: DMatrix::identity(n, n),
            shift: DVector::zeros(n),
            log_abs_det: 0.0,
            min_singular: 1.0,
            max_singular: 1.0,
        }
    }

    /// `y = factor * x`.
    pub fn scaling(n: usize, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor != 0.0) {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let a = factor.abs();
        Ok(AffineMap {
            t: DMatrix::identity(n, n) * factor,
            t_inv: DMatrix::identity(n, n) / factor,
            shift: DVector::zeros(n),
            log_abs_det: n as f64 * a.ln(),
            min_singular: a,
            max_singular: a,
        })
    }

    pub fn new(t: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::InvalidInput(format!(
                "affine matrix must be square, got {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        check_dim(t.nrows(), shift.len())?;
        let (t_inv, log_abs_det) = invert(&t)?;
        Ok(Self::assemble(t, t_inv, shift, log_abs_det))
    }

    /// Pure translation `y = x - shift`.
    pub fn translation(shift: DVector<f64>) -> Self {
        let n = shift.len();
        AffineMap {
            shift,
            ..AffineMap::identity(n)
        }
    }

    fn assemble(t: DMatrix<f64>, t_inv: DMatrix<f64>, shift: DVector<f64>, log_abs_det: f64) -> Self {
        let sv = t.clone().singular_values();
        let min_singular = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let max_singular = sv.iter().copied().fold(0.0, f64::max);
        AffineMap {
            t,
            t_inv,
            shift,
            log_abs_det,
            min_singular,
            max_singular,
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.t_inv
    }

    /// Preimage of the origin.
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det
    }

    pub fn min_singular_value(&self) -> f64 {
        self.min_singular
    }

    pub fn max_singular_value(&self) -> f64 {
        self.max_singular
    }

    /// Left-multiply the linear part: `T' = M T`, same shift.
    pub fn compose(&self, m: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), m.nrows())?;
        check_dim(self.dim(), m.ncols())?;
        let (_, log_det_m) = invert(m)?;
        let t = m * &self.t;
        let (t_inv, _) = invert(&t)?;
        Ok(Self::assemble(
            t,
            t_inv,
            self.shift.clone(),
            self.log_abs_det + log_det_m,
        ))
    }

    /// The map `x ↦ next(self(x))`.
    pub fn then(&self, next: &AffineMap) -> Result<Self> {
        check_dim(self.dim(), next.dim())?;
        let t = &next.t * &self.t;
        let shift = &self.shift + &self.t_inv * &next.shift;
        let (t_inv, _) = invert(&t)?;
        Ok(Self::assemble(
            t,
            t_inv,
            shift,
            self.log_abs_det + next.log_abs_det,
        ))
    }

    /// Shift the image so that `center` (in image coordinates) becomes the origin.
    pub fn recentered(&self, center: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), center.len())?;
        Ok(AffineMap {
            shift: &self.shift + &self.t_inv * center,
            ..self.clone()
        })
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        &self.t * (x - &self.shift)
    }

    pub fn pull_back(&self, y: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.pull_back_into(y, out.as_mut_slice());
        out
    }

    /// `out = T⁻¹ y + shift`, written without allocating.
    pub fn pull_back_into(&self, y: &[f64], out: &mut [f64]) {
        let n = self.dim();
        out.copy_from_slice(self.shift.as_slice());
        for (j, &yj) in y.iter().enumerate().take(n) {
            if yj == 0.0 {
                continue;
            }
            let col = self.t_inv.column(j);
            for (o, c) in out.iter_mut().zip(col.iter()) {
                *o += c * yj;
            }
        }
    }

    /// `‖T T⁻¹ − I‖_op`.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.dim();
        linalg::op_norm(&(&self.t * &self.t_inv - DMatrix::identity(n, n)))
    }
}

/// Inverse and `log|det|` via LU, rejecting ill-conditioned input.
pub(crate) fn invert(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let mut log_abs_det = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        log_abs_det += d.ln();
    }
    let inv = lu.try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let condition = linalg::op_norm(m) * linalg::op_norm(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    Ok((inv, log_abs_det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn scalar_scaling_log_det() {
        let map = AffineMap::identity(3);
        let m = DMatrix::identity(3, 3) * 2.0;
        let out = map.compose(&m).unwrap();
        assert!((out.matrix() - &m).abs().max() < 1e-15);
        assert!((out.log_abs_det() - 3.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn identity_plus_projection_doubles_rank() {
        // P projects onto span{(1,1,0)/√2, e3}
        let u = DVector::from_vec(vec![1.0, 1.0, 0.0]).normalize();
        let w = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let p = &u * u.transpose() + &w * w.transpose();
        let m = DMatrix::identity(3, 3) + p;
        let out = AffineMap::identity(3).compose(&m).unwrap();
        assert!((out.log_abs_det() - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn initial_inverse_radius_scaling() {
        let map = AffineMap::scaling(2, 1.0 / 0.5).unwrap();
        assert!((map.log_abs_det() - 2.0 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn singular_factor_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = AffineMap::identity(2).compose(&m).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn then_matches_sequential_application() {
        let a = AffineMap::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.5, -1.0]),
        )
        .unwrap();
        let b = AffineMap::new(
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 3.0, 0.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        let ab = a.then(&b).unwrap();
        let x = [0.3, -0.7];
        let direct = b.apply(a.apply(&x).as_slice());
        assert!((ab.apply(&x) - &direct).norm() < 1e-12);
        assert!((ab.pull_back(direct.as_slice()) - DVector::from_column_slice(&x)).norm() < 1e-12);
        assert!((ab.log_abs_det() - (a.log_abs_det() + b.log_abs_det())).abs() < 1e-12);
    }

    #[test]
    fn recentering_moves_origin() {
        let a = AffineMap::scaling(2, 3.0).unwrap();
        let c = DVector::from_vec(vec![1.5, 0.0]);
        let r = a.recentered(&c).unwrap();
        // the point that used to map to c now maps to 0
        let x = a.pull_back(c.as_slice());
        assert!(r.apply(x.as_slice()).norm() < 1e-14);
    }
}
