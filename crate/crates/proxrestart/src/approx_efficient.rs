//! Production coordinate-descent engine with restart support.
//!
//! Instead of materializing `x` and `y` every iteration, the state keeps
//! `z` together with `w = θ_prev⁻²(x − z)`, so a step touches only the
//! sampled coordinates. The restart point, which is a convex combination of
//! the whole iterate history, is recovered from four cumulative aggregates:
//! per-coordinate sums `g` and `h` and scalars `a` and `b` built from the
//! running coefficient `r`. All of them reset to zero at every restart.
//!
//! Call order per iteration: [`efficient_step`], then exactly one of
//! [`finalize_schedule`] (no restart) or [`apply_restart_efficient`].

use crate::problems::CompositeProblem;
use crate::schedule::{theta_next, ScheduleError};
use crate::solvers::Sampling;

/// State of the aggregate-based engine.
///
/// `x` is never stored; it materializes as `z + θ_prev²·w` on demand. Row
/// products `A·z` and `A·w` are cached so partial derivatives cost only the
/// nonzeros of the touched column.
#[derive(Debug, Clone)]
pub struct EfficientState {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub r: f64,
    /// θ for the upcoming iteration.
    pub theta: f64,
    /// θ used by the last completed iteration.
    pub theta_prev: f64,
    theta0: f64,
    ratio: f64,
    products_z: Vec<f64>,
    products_w: Vec<f64>,
}

impl EfficientState {
    pub fn new(problem: &CompositeProblem, x0: &[f64], theta0: f64, ratio: f64) -> Self {
        let n = x0.len();
        let rows = problem.design().rows();
        Self {
            z: x0.to_vec(),
            w: vec![0.0; n],
            g: vec![0.0; n],
            h: vec![0.0; n],
            a: 0.0,
            b: 0.0,
            r: 0.0,
            theta: theta0,
            theta_prev: theta0,
            theta0,
            ratio,
            products_z: problem.row_products(x0),
            products_w: vec![0.0; rows],
        }
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// The current iterate `x = z + θ_prev²·w`.
    pub fn materialize_x(&self) -> Vec<f64> {
        let t2 = self.theta_prev * self.theta_prev;
        self.z
            .iter()
            .zip(&self.w)
            .map(|(&z, &w)| z + t2 * w)
            .collect()
    }
}

/// One iteration body: scalar aggregate updates, then the sampled coordinate
/// updates of `z`, `w`, `g`, `h` and the row-product caches. Leaves the θ/r
/// bookkeeping to [`finalize_schedule`] or [`apply_restart_efficient`].
pub fn efficient_step(
    problem: &CompositeProblem,
    weights: &[f64],
    state: &mut EfficientState,
    sampling: &mut Sampling,
) -> Result<(), ScheduleError> {
    let th = state.theta;
    let th2 = th * th;
    let rho = state.ratio;
    state.a += state.r * (1.0 - th) / (th2 * th2);
    state.b += state.r / th2;
    let shrink = (1.0 - rho * th) / th2;
    // all sampled partial derivatives are taken at the same iterate, so the
    // increments are gathered before any cache is touched
    let increments: Vec<(usize, f64, f64)> = sampling
        .draw_sorted()
        .iter()
        .map(|&i| {
            let grad = problem.partial_from_blended_products(
                &state.products_z,
                &state.products_w,
                th2,
                i,
            );
            let z_new = problem.prox_1d(grad, state.z[i], rho * th * weights[i]);
            (i, z_new, z_new - state.z[i])
        })
        .collect();
    for (i, z_new, t) in increments {
        if t == 0.0 {
            continue;
        }
        let w_delta = -shrink * t;
        state.z[i] = z_new;
        state.w[i] += w_delta;
        state.g[i] += state.a * t;
        state.h[i] += state.b * w_delta;
        problem.update_products(&mut state.products_z, i, t);
        problem.update_products(&mut state.products_w, i, w_delta);
    }
    state.theta_prev = th;
    Ok(())
}

/// θ and coefficient bookkeeping for an iteration without a restart:
/// `θ ← θ⁺` and `r ← θ⁺(1 − (n/τ)θ) + (n/τ)(θ − θ⁺)`.
pub fn finalize_schedule(state: &mut EfficientState) -> Result<(), ScheduleError> {
    let th = state.theta;
    let next = theta_next(th)?;
    state.r = next * (1.0 - state.ratio * th) + state.ratio * (th - next);
    state.theta = next;
    Ok(())
}

/// Closed-form restart point from the aggregates:
/// `x̄ = z + θ²w + ((1−σ)θ²(−g−h) + (1−σ)(θ²b − θ⁴a)w) / (θ²a + (n/τ)(1/θ − n/τ + 1))`
/// with θ the momentum of the just-finished iteration.
pub fn efficient_restart_point(state: &EfficientState, sigma: f64) -> Vec<f64> {
    let th = state.theta_prev;
    let th2 = th * th;
    let rho = state.ratio;
    let denom = th2 * state.a + rho * (1.0 / th - rho + 1.0);
    assert!(
        denom > 0.0,
        "restart denominator must stay positive while theta <= tau/n"
    );
    let co = 1.0 - sigma;
    let w_coeff = co * (th2 * state.b - th2 * th2 * state.a);
    (0..state.z.len())
        .map(|i| {
            let correction = (co * th2 * (-state.g[i] - state.h[i]) + w_coeff * state.w[i]) / denom;
            state.z[i] + th2 * state.w[i] + correction
        })
        .collect()
}

/// Reseeds the engine at `point`: `z ← point`, every aggregate zeroed,
/// momentum back to θ_0, row-product caches rebuilt.
pub fn apply_restart_efficient(
    problem: &CompositeProblem,
    state: &mut EfficientState,
    point: &[f64],
) {
    state.z.copy_from_slice(point);
    state.w.fill(0.0);
    state.g.fill(0.0);
    state.h.fill(0.0);
    state.a = 0.0;
    state.b = 0.0;
    state.r = 0.0;
    state.theta = state.theta0;
    state.theta_prev = state.theta0;
    state.products_z = problem.row_products(point);
    state.products_w.fill(0.0);
}
