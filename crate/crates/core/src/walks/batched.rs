use nalgebra::{DMatrix, DVector};

use super::{outside_cap, validate_cap, validate_step, RngStream, WalkState};
use crate::bodies::Polytope;
use crate::error::{check_dim, Error, Result};

/// Largest number of steps whose proposals are materialized at once.
pub const MAX_BLOCK: usize = 4096;

/// Polytope ball walk that draws a block of proposals up front and tests them
/// through one matrix product `Y = A Z`.
///
/// The running image `y = A x` is recomputed exactly at each block start. A
/// constraint whose batched value lands within round-off of its bound is
/// re-evaluated with [`Polytope::row_dot`], so decisions match the oracle walk.
#[derive(Clone, Debug)]
pub struct BatchedWalk<'a> {
    poly: &'a Polytope,
    delta: f64,
    cap: Option<f64>,
    block: usize,
}

impl<'a> BatchedWalk<'a> {
    pub fn new(poly: &'a Polytope, delta: f64) -> Result<Self> {
        validate_step(delta)?;
        Ok(BatchedWalk {
            poly,
            delta,
            cap: None,
            block: MAX_BLOCK,
        })
    }

    pub fn with_radius_cap(mut self, rho: f64) -> Self {
        self.cap = Some(rho);
        self
    }

    pub fn with_block(mut self, block: usize) -> Self {
        self.block = block.clamp(1, MAX_BLOCK);
        self
    }

    pub fn start(&self, x0: &[f64]) -> Result<WalkState> {
        check_dim(self.poly.dim(), x0.len())?;
        validate_cap(self.cap, x0)?;
        if !self.poly.contains(x0) {
            return Err(Error::InvalidInput("starting point is outside the polytope".into()));
        }
        Ok(WalkState::new(DVector::from_column_slice(x0), self.delta))
    }

    pub fn advance(&self, state: &mut WalkState, steps: u64, rng: &mut RngStream) {
        let n = self.poly.dim();
        let m = self.poly.num_constraints();
        let a = self.poly.a();
        let b = self.poly.b();
        let tol: Vec<f64> = (0..m)
            .map(|j| 1e-9 * (1.0 + b[j].abs() + self.poly.row_norms()[j] * (1.0 + state.x.amax())))
            .collect();
        let mut prop = vec![0.0; n];
        let mut remaining = steps;
        while remaining > 0 {
            let kb = remaining.min(self.block as u64) as usize;
            let mut z = DMatrix::<f64>::zeros(n, kb);
            for col in z.as_mut_slice().chunks_exact_mut(n) {
                rng.ball_step(self.delta, col);
            }
            let big_y = a * &z;
            let mut y = a * &state.x;
            for i in 0..kb {
                let zi = &z.as_slice()[i * n..(i + 1) * n];
                for ((p, xi), zv) in prop.iter_mut().zip(state.x.iter()).zip(zi) {
                    *p = xi + zv;
                }
                state.steps_taken += 1;
                if outside_cap(self.cap, &prop) {
                    state.rejected += 1;
                    continue;
                }
                let yi = &big_y.as_slice()[i * m..(i + 1) * m];
                let inside = (0..m).all(|j| {
                    let v = y[j] + yi[j];
                    if (v - b[j]).abs() <= tol[j] {
                        self.poly.satisfies(j, &prop)
                    } else {
                        v <= b[j]
                    }
                });
                if inside {
                    state.x.as_mut_slice().copy_from_slice(&prop);
                    for (yj, d) in y.iter_mut().zip(yi) {
                        *yj += d;
                    }
                } else {
                    state.rejected += 1;
                }
            }
            remaining -= kb as u64;
        }
    }
}

/// Run `k` batched polytope ball-walk steps from `x0`.
pub fn polytope_ball_walk_batched(
    poly: &Polytope,
    x0: &[f64],
    delta: f64,
    k: u64,
    rng: &mut RngStream,
) -> Result<WalkState> {
    let walk = BatchedWalk::new(poly, delta)?;
    let mut state = walk.start(x0)?;
    walk.advance(&mut state, k, rng);
    Ok(state)
}
