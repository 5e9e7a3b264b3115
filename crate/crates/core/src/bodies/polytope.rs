use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use super::AffineMap;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Polytope `{x : A x ≤ b}` in halfspace form.
///
/// Rows are kept in row-major order next to the matrix so that single-row
/// dot products (the hot path of every walk) read contiguous memory.
#[derive(Clone, Debug)]
pub struct Polytope {
    a: DMatrix<f64>,
    rows: Vec<f64>,
    b: DVector<f64>,
    row_norms: DVector<f64>,
}

impl PartialEq for Polytope {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b
    }
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.ncols() == 0 {
            return Err(Error::InvalidInput("polytope dimension must be positive".into()));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("polytope coefficients must be finite".into()));
        }
        let m = a.nrows();
        let n = a.ncols();
        let mut rows = Vec::with_capacity(m * n);
        let mut norms = Vec::with_capacity(m);
        for j in 0..m {
            let r: Vec<f64> = a.row(j).iter().copied().collect();
            let norm = linalg::norm_sq(&r).sqrt();
            if norm <= 0.0 {
                return Err(Error::InvalidInput(format!("constraint {j} has a zero normal")));
            }
            norms.push(norm);
            rows.extend(r);
        }
        Ok(Polytope {
            a,
            rows,
            b,
            row_norms: DVector::from_vec(norms),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("ragged constraint rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Polytope::new(
            DMatrix::from_row_slice(rows.len(), n, &flat),
            DVector::from_column_slice(b),
        )
    }

    /// Axis-aligned box `|x_i| ≤ half_widths[i]`.
    pub fn axis_box(half_widths: &[f64]) -> Result<Self> {
        let n = half_widths.len();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for (i, &h) in half_widths.iter().enumerate() {
            if !(h > 0.0) {
                return Err(Error::InvalidInput("box half-widths must be positive".into()));
            }
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i] = h;
            b[2 * i + 1] = h;
        }
        Polytope::new(a, b)
    }

    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        Polytope::axis_box(&vec![half_width; n])
    }

    /// `{x ≥ 0, Σ x_i ≤ 1}`.
    pub fn standard_simplex(n: usize) -> Result<Self> {
        let mut a = DMatrix::zeros(n + 1, n);
        let mut b = DVector::zeros(n + 1);
        for i in 0..n {
            a[(i, i)] = -1.0;
            a[(n, i)] = 1.0;
        }
        b[n] = 1.0;
        Polytope::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn row_norms(&self) -> &DVector<f64> {
        &self.row_norms
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.rows[j * n..(j + 1) * n]
    }

    /// `a_jᵀ x`, the one expression every membership decision uses.
    #[inline]
    pub fn row_dot(&self, j: usize, x: &[f64]) -> f64 {
        linalg::dot(self.row(j), x)
    }

    #[inline]
    pub fn satisfies(&self, j: usize, x: &[f64]) -> bool {
        self.row_dot(j, x) <= self.b[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.num_constraints()).all(|j| self.satisfies(j, x))
    }

    pub fn slack(&self, j: usize, x: &[f64]) -> f64 {
        self.b[j] - self.row_dot(j, x)
    }

    /// Signed Euclidean distance from `x` to facet `j` (positive inside).
    pub fn distance(&self, j: usize, x: &[f64]) -> f64 {
        self.slack(j, x) / self.row_norms[j]
    }

    /// Radius of the largest origin-centred ball inside `map(P)`.
    ///
    /// Negative when the origin's preimage lies outside `P`.
    pub fn image_inner_radius(&self, map: &AffineMap) -> f64 {
        let s = map.shift().as_slice();
        let at_inv = &self.a * map.inverse_matrix();
        (0..self.num_constraints())
            .map(|j| {
                let den = at_inv.row(j).norm();
                self.slack(j, s) / den
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `{M x : x ∈ P}` for invertible `M`.
    pub fn linear_image(&self, m: &DMatrix<f64>) -> Result<Polytope> {
        check_dim(self.dim(), m.ncols())?;
        let (m_inv, _) = super::affine::invert(m)?;
        Polytope::new(&self.a * m_inv, self.b.clone())
    }

    /// Variable bound standing in for infinity; the LP solver stalls on free
    /// variables. Optima beyond half of it are reported as unbounded.
    fn lp_bound(&self) -> f64 {
        let scale = (0..self.num_constraints())
            .map(|j| self.b[j].abs() / self.row_norms[j])
            .fold(1.0, f64::max);
        1e6 * scale
    }

    /// Centre and radius of the largest inscribed ball.
    pub fn chebyshev_ball(&self) -> Result<(DVector<f64>, f64)> {
        let n = self.dim();
        let big = self.lp_bound();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xs: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (-big, big))).collect();
        let r = lp.add_var(1.0, (0.0, big));
        for j in 0..self.num_constraints() {
            let mut terms: Vec<_> = xs.iter().zip(self.row(j)).map(|(&v, &c)| (v, c)).collect();
            terms.push((r, self.row_norms[j]));
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, self.b[j]);
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::LinearProgram(e.to_string()))?
            .into_solution()
            .map_err(|_| Error::LinearProgram("solve interrupted".into()))?;
        if sol.objective() > 0.5 * big {
            return Err(Error::InvalidInput("polytope is unbounded".into()));
        }
        let center = DVector::from_iterator(n, xs.iter().map(|&v| sol.var_value(v)));
        // recompute from the constraints rather than trusting solver tolerance
        let radius = (0..self.num_constraints())
            .map(|j| self.distance(j, center.as_slice()))
            .fold(f64::INFINITY, f64::min);
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("polytope has empty interior".into()));
        }
        Ok((center, radius))
    }

    /// Tight axis-aligned bounding box `(lo, hi)`; errors if unbounded.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let big = self.lp_bound();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            for (dir, out) in [
                (OptimizationDirection::Maximize, &mut hi),
                (OptimizationDirection::Minimize, &mut lo),
            ] {
                let mut lp = Problem::new(dir);
                let xs: Vec<_> = (0..n)
                    .map(|k| {
                        let c = if k == i { 1.0 } else { 0.0 };
                        lp.add_var(c, (-big, big))
                    })
                    .collect();
                for j in 0..self.num_constraints() {
                    let terms: Vec<_> = xs.iter().zip(self.row(j)).map(|(&v, &c)| (v, c)).collect();
                    lp.add_constraint(terms.as_slice(), ComparisonOp::Le, self.b[j]);
                }
                let sol = lp
                    .solve()
                    .map_err(|e| Error::LinearProgram(e.to_string()))?
                    .into_solution()
                    .map_err(|_| Error::LinearProgram("solve interrupted".into()))?;
                if sol.objective().abs() > 0.5 * big {
                    return Err(Error::InvalidInput("polytope is unbounded".into()));
                }
                out[i] = sol.objective();
            }
        }
        // pad by a relative hair so LP round-off cannot cut off the body
        let pad = 1e-9 * (&hi - &lo).amax().max(1.0);
        lo.add_scalar_mut(-pad);
        hi.add_scalar_mut(pad);
        Ok((lo, hi))
    }
}
