use std::collections::BTreeMap;

use nalgebra::DVector;

use super::{outside_cap, validate_cap, validate_step, RngStream, WalkState};
use crate::bodies::Polytope;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// How far ahead a constraint may be skipped after it was last measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlackMode {
    /// Each step moves at most `δ`, so a facet at distance `D` cannot be
    /// reached for `⌈D/δ⌉` steps.
    Deterministic,
    /// Schedule at the high-probability rate `α δ / √n`. Whenever that rate is
    /// slower than the worst case, the deterministic bound still forces a
    /// recheck, so the trajectory stays exact.
    Probabilistic { alpha: f64 },
}

/// `4 ln(2 m N / 10⁻⁶)`.
pub fn default_alpha(m: usize, steps: u64) -> f64 {
    4.0 * (2.0 * m as f64 * steps.max(1) as f64 / 1e-6).ln()
}

/// Per-constraint lower bounds on the distance to each facet, with a bucket
/// queue keyed by the first step at which the bound stops certifying.
#[derive(Clone, Debug)]
pub struct ConstraintLedger {
    anchor_step: Vec<u64>,
    anchor_dist: Vec<f64>,
    queue: BTreeMap<u64, Vec<(usize, bool)>>,
    delta: f64,
    prob_rate: Option<f64>,
    margin: f64,
}

impl ConstraintLedger {
    fn new(
        poly: &Polytope,
        x0: &[f64],
        delta: f64,
        prob_rate: Option<f64>,
        margin: f64,
    ) -> Self {
        let m = poly.num_constraints();
        let mut ledger = ConstraintLedger {
            anchor_step: vec![0; m],
            anchor_dist: vec![0.0; m],
            queue: BTreeMap::new(),
            delta,
            prob_rate,
            margin,
        };
        for j in 0..m {
            ledger.refresh(j, 0, poly.distance(j, x0));
        }
        ledger
    }

    fn steps_until(&self, dist: f64, rate: f64) -> u64 {
        let s = ((dist - self.margin) / rate).ceil();
        if s.is_nan() || s < 1.0 {
            1
        } else {
            s as u64
        }
    }

    /// Record that the current point is at distance at least `dist` from facet `j`.
    pub fn refresh(&mut self, j: usize, step: u64, dist: f64) {
        self.anchor_step[j] = step;
        self.anchor_dist[j] = dist;
        let det = self.steps_until(dist, self.delta);
        let (due, forced) = match self.prob_rate {
            Some(rate) => {
                let prob = self.steps_until(dist, rate);
                (det.min(prob), det < prob)
            }
            None => (det, false),
        };
        self.queue
            .entry(step.saturating_add(due))
            .or_default()
            .push((j, forced));
    }

    fn take(&mut self, step: u64) -> Vec<(usize, bool)> {
        self.queue.remove(&step).unwrap_or_default()
    }

    fn defer(&mut self, entries: Vec<(usize, bool)>, step: u64) {
        if !entries.is_empty() {
            self.queue.entry(step).or_default().extend(entries);
        }
    }

    /// Certified lower bound on the distance from the chain's point after
    /// `step` steps to facet `j`.
    pub fn implied_bound(&self, j: usize, step: u64) -> f64 {
        self.anchor_dist[j] - (step - self.anchor_step[j]) as f64 * self.delta
    }
}

/// Constraint-evaluation counts of one amortized run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AmortizedStats {
    pub steps: u64,
    pub checks_per_constraint: Vec<u64>,
    /// Checks that the probabilistic schedule alone would have made.
    pub scheduled_checks: u64,
    /// Checks forced by the deterministic bound under probabilistic mode.
    pub forced_rechecks: u64,
}

impl AmortizedStats {
    pub fn total_checks(&self) -> u64 {
        self.checks_per_constraint.iter().sum()
    }

    /// `F_j`: checks of constraint `j` per walk step.
    pub fn check_frequency(&self) -> Vec<f64> {
        let steps = self.steps.max(1) as f64;
        self.checks_per_constraint
            .iter()
            .map(|&c| c as f64 / steps)
            .collect()
    }

    /// Mean over constraints of `F_j`.
    pub fn mean_check_frequency(&self) -> f64 {
        let f = self.check_frequency();
        if f.is_empty() {
            0.0
        } else {
            f.iter().sum::<f64>() / f.len() as f64
        }
    }
}

/// Polytope ball walk that only evaluates constraints whose facet could be
/// within reach. Trajectories are identical to the oracle walk with the same
/// radius cap.
#[derive(Clone, Debug)]
pub struct AmortizedWalk<'a> {
    poly: &'a Polytope,
    delta: f64,
    cap: Option<f64>,
    mode: SlackMode,
}

impl<'a> AmortizedWalk<'a> {
    /// `rho` is the origin-centred radius cap; pass `f64::INFINITY` for none.
    pub fn new(poly: &'a Polytope, delta: f64, rho: f64, mode: SlackMode) -> Result<Self> {
        validate_step(delta)?;
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("radius cap must be positive, got {rho}")));
        }
        if let SlackMode::Probabilistic { alpha } = mode {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidInput("alpha must be positive".into()));
            }
        }
        Ok(AmortizedWalk {
            poly,
            delta,
            cap: rho.is_finite().then_some(rho),
            mode,
        })
    }

    pub fn run(
        &self,
        x0: &[f64],
        steps: u64,
        rng: &mut RngStream,
    ) -> Result<(WalkState, AmortizedStats)> {
        let poly = self.poly;
        let n = poly.dim();
        check_dim(n, x0.len())?;
        validate_cap(self.cap, x0)?;
        if !poly.contains(x0) {
            return Err(Error::InvalidInput("starting point is outside the polytope".into()));
        }
        let m = poly.num_constraints();
        let reach = self
            .cap
            .unwrap_or(linalg::norm_sq(x0).sqrt() + steps as f64 * self.delta);
        let offset = (0..m)
            .map(|j| poly.b()[j].abs() / poly.row_norms()[j])
            .fold(0.0, f64::max);
        let margin = 1e-9 * (1.0 + offset + reach);
        let prob_rate = match self.mode {
            SlackMode::Deterministic => None,
            SlackMode::Probabilistic { alpha } => Some(alpha * self.delta / (n as f64).sqrt()),
        };
        let mut ledger = ConstraintLedger::new(poly, x0, self.delta, prob_rate, margin);
        let mut stats = AmortizedStats {
            steps,
            checks_per_constraint: vec![0; m],
            ..Default::default()
        };

        let mut state = WalkState::new(DVector::from_column_slice(x0), self.delta);
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut dists = Vec::new();
        for i in 1..=steps {
            rng.ball_step(self.delta, &mut z);
            for ((yi, xi), zi) in y.iter_mut().zip(state.x.iter()).zip(&z) {
                *yi = xi + zi;
            }
            state.steps_taken += 1;
            let due = ledger.take(i);
            if outside_cap(self.cap, &y) {
                state.rejected += 1;
                ledger.defer(due, i + 1);
                continue;
            }
            dists.clear();
            let mut inside = true;
            for &(j, forced) in &due {
                stats.checks_per_constraint[j] += 1;
                if forced {
                    stats.forced_rechecks += 1;
                } else if prob_rate.is_some() {
                    stats.scheduled_checks += 1;
                }
                inside &= poly.satisfies(j, &y);
                dists.push(poly.distance(j, &y));
            }
            let step_len = if inside { 0.0 } else { linalg::norm_sq(&z).sqrt() };
            for (&(j, _), &d) in due.iter().zip(&dists) {
                debug_assert!(
                    ledger.implied_bound(j, i - 1) <= poly.distance(j, state.x.as_slice()) + margin,
                    "ledger bound for constraint {j} exceeds the true distance"
                );
                ledger.refresh(j, i, d - step_len);
            }
            if inside {
                state.x.as_mut_slice().copy_from_slice(&y);
            } else {
                state.rejected += 1;
            }
        }
        Ok((state, stats))
    }
}

/// Run `steps` amortized polytope ball-walk steps from `x0` with radius cap `rho`.
pub fn polytope_ball_walk_amortized(
    poly: &Polytope,
    x0: &[f64],
    delta: f64,
    rho: f64,
    steps: u64,
    rng: &mut RngStream,
    mode: SlackMode,
) -> Result<(WalkState, AmortizedStats)> {
    AmortizedWalk::new(poly, delta, rho, mode)?.run(x0, steps, rng)
}
