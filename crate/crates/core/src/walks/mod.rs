//! Ball-walk Markov chains.
//!
//! Every variant draws randomness in the same order per step (n standard
//! normals for the direction, then one uniform for the radius), so the naive
//! oracle walk, the batched polytope walk and the amortized polytope walk
//! trace identical trajectories from the same [`RngStream`].

mod amortized;
mod batched;
mod rng;

use std::io::Write;

use nalgebra::DVector;

pub use amortized::{
    default_alpha, polytope_ball_walk_amortized, AmortizedStats, AmortizedWalk, ConstraintLedger,
    SlackMode,
};
pub use batched::{polytope_ball_walk_batched, BatchedWalk, MAX_BLOCK};
pub use rng::{stream_id_for, RngStream};

use crate::bodies::Body;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Position and counters of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    pub x: DVector<f64>,
    pub delta: f64,
    pub steps_taken: u64,
    pub rejected: u64,
}

impl WalkState {
    pub fn new(x: DVector<f64>, delta: f64) -> Self {
        WalkState {
            x,
            delta,
            steps_taken: 0,
            rejected: 0,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps_taken == 0 {
            return 1.0;
        }
        1.0 - self.rejected as f64 / self.steps_taken as f64
    }
}

/// `c / √n`.
pub fn default_step_size(n: usize) -> f64 {
    scaled_step_size(n, 1.0)
}

pub fn scaled_step_size(n: usize, c_delta: f64) -> f64 {
    assert!(n >= 1, "dimension must be positive");
    c_delta / (n as f64).sqrt()
}

pub(crate) fn validate_step(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("step size must be positive, got {delta}")))
    }
}

pub(crate) fn validate_cap(cap: Option<f64>, x0: &[f64]) -> Result<()> {
    if let Some(rho) = cap {
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("radius cap must be positive, got {rho}")));
        }
        if linalg::norm_sq(x0) >= rho * rho {
            return Err(Error::InvalidInput(
                "starting point must lie strictly inside the radius cap".into(),
            ));
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn outside_cap(cap: Option<f64>, y: &[f64]) -> bool {
    match cap {
        Some(rho) => linalg::norm_sq(y) > rho * rho,
        None => false,
    }
}

/// Oracle ball walk: propose uniformly in `B(x, δ)`, move if the proposal is
/// in the body (and inside the optional origin-centred cap).
#[derive(Clone, Debug)]
pub struct BallWalk<'a> {
    body: &'a Body,
    delta: f64,
    cap: Option<f64>,
}

impl<'a> BallWalk<'a> {
    pub fn new(body: &'a Body, delta: f64) -> Result<Self> {
        validate_step(delta)?;
        Ok(BallWalk {
            body,
            delta,
            cap: None,
        })
    }

    pub fn with_radius_cap(mut self, rho: f64) -> Self {
        self.cap = Some(rho);
        self
    }

    pub fn start(&self, x0: &[f64]) -> Result<WalkState> {
        check_dim(self.body.dim(), x0.len())?;
        validate_cap(self.cap, x0)?;
        if !self.body.membership(x0) {
            return Err(Error::InvalidInput("starting point is outside the body".into()));
        }
        Ok(WalkState::new(DVector::from_column_slice(x0), self.delta))
    }

    pub fn advance(&self, state: &mut WalkState, steps: u64, rng: &mut RngStream) {
        let n = self.body.dim();
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        for _ in 0..steps {
            self.step(state, rng, &mut z, &mut y);
        }
    }

    /// As [`advance`](Self::advance), writing `i accepted|rejected x_1 .. x_n` per step.
    pub fn advance_traced(
        &self,
        state: &mut WalkState,
        steps: u64,
        rng: &mut RngStream,
        out: &mut dyn Write,
    ) -> std::io::Result<()> {
        let n = self.body.dim();
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        for _ in 0..steps {
            let accepted = self.step(state, rng, &mut z, &mut y);
            write!(
                out,
                "{} {}",
                state.steps_taken,
                if accepted { "accepted" } else { "rejected" }
            )?;
            for v in state.x.iter() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    #[inline]
    fn step(&self, state: &mut WalkState, rng: &mut RngStream, z: &mut [f64], y: &mut [f64]) -> bool {
        rng.ball_step(self.delta, z);
        for ((yi, xi), zi) in y.iter_mut().zip(state.x.iter()).zip(z.iter()) {
            *yi = xi + zi;
        }
        state.steps_taken += 1;
        if outside_cap(self.cap, y) || !self.body.contains_fast(y) {
            state.rejected += 1;
            return false;
        }
        state.x.as_mut_slice().copy_from_slice(y);
        true
    }
}

/// Run `steps` oracle ball-walk steps from `x0`.
pub fn ball_walk(
    body: &Body,
    x0: &[f64],
    delta: f64,
    steps: u64,
    rng: &mut RngStream,
) -> Result<WalkState> {
    let walk = BallWalk::new(body, delta)?;
    let mut state = walk.start(x0)?;
    walk.advance(&mut state, steps, rng);
    Ok(state)
}

/// Ball walk with a Metropolis filter targeting `N(0, σ² I)` restricted to
/// the body. Draws n normals, a radius uniform and a filter uniform per step.
#[derive(Clone, Debug)]
pub struct GaussianBallWalk<'a> {
    body: &'a Body,
    delta: f64,
    inv_two_var: f64,
}

impl<'a> GaussianBallWalk<'a> {
    pub fn new(body: &'a Body, delta: f64, sigma_sq: f64) -> Result<Self> {
        validate_step(delta)?;
        if !(sigma_sq > 0.0) {
            return Err(Error::InvalidInput("Gaussian variance must be positive".into()));
        }
        Ok(GaussianBallWalk {
            body,
            delta,
            inv_two_var: 0.5 / sigma_sq,
        })
    }

    pub fn advance(&self, state: &mut WalkState, steps: u64, rng: &mut RngStream) {
        let n = self.body.dim();
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut x_sq = linalg::norm_sq(state.x.as_slice());
        for _ in 0..steps {
            rng.ball_step(self.delta, &mut z);
            let u = rng.uniform();
            for ((yi, xi), zi) in y.iter_mut().zip(state.x.iter()).zip(z.iter()) {
                *yi = xi + zi;
            }
            state.steps_taken += 1;
            if !self.body.contains_fast(&y) {
                state.rejected += 1;
                continue;
            }
            let y_sq = linalg::norm_sq(&y);
            let log_ratio = (x_sq - y_sq) * self.inv_two_var;
            if log_ratio < 0.0 && u >= log_ratio.exp() {
                state.rejected += 1;
                continue;
            }
            state.x.as_mut_slice().copy_from_slice(&y);
            x_sq = y_sq;
        }
    }
}
