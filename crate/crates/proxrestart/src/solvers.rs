//! Iteration engines for the composite solvers and the trace-producing
//! driver that wires them to a restart policy.
//!
//! Four engines are available: plain proximal gradient (the non-accelerated
//! baseline), two accelerated full-gradient methods that differ in where the
//! proximal step is centered, and randomized block coordinate descent in a
//! naive full-vector form. The aggregate-based coordinate engine lives in
//! [`crate::approx_efficient`] and is driven through the same [`run`] entry
//! point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::approx_efficient::{self, EfficientState};
use crate::problems::{weighted_norm_sq, CompositeProblem, ProblemError, Reference};
use crate::restart::{
    restart_point_approx_naive, restart_point_full, PointRule, PolicyContext, RestartError,
    RestartEvent, RestartPolicy,
};
use crate::schedule::{theta_next, ScheduleError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: u64 },
    #[error("a gap-based stop rule needs a reference optimum on the problem")]
    MissingReference,
    #[error("restart policy {policy} cannot drive solver {solver}")]
    PolicyUnsupported { policy: String, solver: String },
    #[error("tau must satisfy 1 <= tau <= n, got tau {tau} for n {n}")]
    InvalidTau { tau: usize, n: usize },
    #[error(
        "restart period {period} exceeds the safe cap {cap} for theta0 {theta0}; \
         the aggregate coefficients would overrun double precision"
    )]
    PeriodTooLong { period: u64, cap: u64, theta0: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Restart(#[from] RestartError),
}

/// Which engine drives the coordinate-descent solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxEngine {
    /// Full-vector reference implementation; keeps the iterate history so
    /// restart points can be formed by the literal weighted sum.
    Naive,
    /// Aggregate-based production implementation with sparse per-iteration
    /// work.
    Efficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Non-accelerated proximal gradient.
    Ista,
    /// Accelerated proximal gradient with the prox centered at `y`.
    Fista,
    /// Accelerated proximal gradient with the prox centered at `z`.
    Apg,
    /// Randomized accelerated proximal coordinate descent.
    Approx { tau: usize, engine: ApproxEngine },
}

impl SolverKind {
    pub fn label(&self) -> &'static str {
        match self {
            SolverKind::Ista => "ista",
            SolverKind::Fista => "fista",
            SolverKind::Apg => "apg",
            SolverKind::Approx { .. } => "approx",
        }
    }

    /// Initial momentum for a problem of dimension `n`.
    pub fn theta0(&self, n: usize) -> f64 {
        match self {
            SolverKind::Approx { tau, .. } => *tau as f64 / n as f64,
            _ => 1.0,
        }
    }

    fn has_z_iterate(&self) -> bool {
        matches!(self, SolverKind::Fista | SolverKind::Apg)
    }
}

/// Uniform random subsets of expected size `tau` where every subset of that
/// size is equally likely. Draws are reproducible given the seed.
#[derive(Debug, Clone)]
pub struct Sampling {
    n: usize,
    tau: usize,
    rng: ChaCha8Rng,
    pool: Vec<usize>,
    draw: Vec<usize>,
}

impl Sampling {
    pub fn new(n: usize, tau: usize, seed: u64) -> Result<Self, SolverError> {
        if tau == 0 || tau > n {
            return Err(SolverError::InvalidTau { tau, n });
        }
        Ok(Self {
            n,
            tau,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pool: (0..n).collect(),
            draw: vec![0; tau],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn ratio(&self) -> f64 {
        self.n as f64 / self.tau as f64
    }

    /// Draws the next subset, sorted ascending. A partial shuffle of the
    /// persistent pool keeps every size-`tau` subset equally likely.
    pub fn draw_sorted(&mut self) -> &[usize] {
        for i in 0..self.tau {
            let j = self.rng.random_range(i..self.n);
            self.pool.swap(i, j);
        }
        self.draw.copy_from_slice(&self.pool[..self.tau]);
        self.draw.sort_unstable();
        &self.draw
    }
}

/// Iterate pair `(x, z)` with the momentum scalar, shared by the
/// full-gradient engines.
#[derive(Debug, Clone)]
pub struct FullGradientState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// θ to be used by the next iteration.
    pub theta: f64,
    /// θ used by the last completed iteration.
    pub theta_prev: f64,
}

impl FullGradientState {
    pub fn new(x0: &[f64], theta0: f64) -> Self {
        Self {
            x: x0.to_vec(),
            z: x0.to_vec(),
            theta: theta0,
            theta_prev: theta0,
        }
    }

    pub fn reset_to(&mut self, point: &[f64], theta0: f64) {
        self.x.copy_from_slice(point);
        self.z.copy_from_slice(point);
        self.theta = theta0;
        self.theta_prev = theta0;
    }
}

/// One proximal-gradient iteration (no momentum): `x⁺ = prox step from x`.
pub fn prox_grad_step(
    problem: &CompositeProblem,
    weights: &[f64],
    state: &mut FullGradientState,
) -> Result<(), SolverError> {
    let g = problem.gradient(&state.x);
    for i in 0..state.x.len() {
        state.x[i] = problem.prox_1d(g[i], state.x[i], weights[i]);
    }
    state.z.copy_from_slice(&state.x);
    state.theta_prev = state.theta;
    Ok(())
}

/// One accelerated iteration with the prox centered at `y`:
/// `y = (1−θ)x + θz`, full prox-gradient step at `y` with unit weight on
/// `‖·‖_v`, then `z ← z + (x⁺ − y)/θ` and the θ update.
pub fn fista_step(
    problem: &CompositeProblem,
    weights: &[f64],
    state: &mut FullGradientState,
) -> Result<(), SolverError> {
    let th = state.theta;
    let n = state.x.len();
    let y: Vec<f64> = state
        .x
        .iter()
        .zip(&state.z)
        .map(|(&x, &z)| (1.0 - th) * x + th * z)
        .collect();
    let g = problem.gradient(&y);
    for i in 0..n {
        let xi = problem.prox_1d(g[i], y[i], weights[i]);
        state.z[i] += (xi - y[i]) / th;
        state.x[i] = xi;
    }
    state.theta_prev = th;
    state.theta = theta_next(th)?;
    Ok(())
}

/// One accelerated iteration with the prox centered at `z`:
/// `z⁺ = argmin ⟨∇f(y), z−y⟩ + (θ/2)‖z−z_k‖²_v + ψ(z)`, then
/// `x⁺ = y + θ(z⁺ − z)`.
pub fn apg_step(
    problem: &CompositeProblem,
    weights: &[f64],
    state: &mut FullGradientState,
) -> Result<(), SolverError> {
    let th = state.theta;
    let n = state.x.len();
    let y: Vec<f64> = state
        .x
        .iter()
        .zip(&state.z)
        .map(|(&x, &z)| (1.0 - th) * x + th * z)
        .collect();
    let g = problem.gradient(&y);
    for i in 0..n {
        let zi = problem.prox_1d(g[i], state.z[i], th * weights[i]);
        state.x[i] = y[i] + th * (zi - state.z[i]);
        state.z[i] = zi;
    }
    state.theta_prev = th;
    state.theta = theta_next(th)?;
    Ok(())
}

/// Full-vector coordinate-descent state. Keeps the iterate history since the
/// last restart so the history-weighted restart point can be evaluated
/// literally; this is the reference path, not the production one.
#[derive(Debug, Clone)]
pub struct ApproxNaiveState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub theta: f64,
    pub theta_prev: f64,
    theta0: f64,
    pub history: Vec<Vec<f64>>,
}

impl ApproxNaiveState {
    pub fn new(x0: &[f64], theta0: f64) -> Self {
        Self {
            x: x0.to_vec(),
            z: x0.to_vec(),
            theta: theta0,
            theta_prev: theta0,
            theta0,
            history: vec![x0.to_vec()],
        }
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn reset_to(&mut self, point: &[f64], theta0: f64) {
        self.x.copy_from_slice(point);
        self.z.copy_from_slice(point);
        self.theta = theta0;
        self.theta_prev = theta0;
        self.theta0 = theta0;
        self.history.clear();
        self.history.push(point.to_vec());
    }
}

/// One randomized coordinate iteration: draws a subset, updates the sampled
/// coordinates of `z` with weight `θ·(n/τ)·v_i` around the old `z`, then
/// `x⁺ = y + (n/τ)θ(z⁺ − z)` and the θ update.
pub fn approx_step(
    problem: &CompositeProblem,
    weights: &[f64],
    state: &mut ApproxNaiveState,
    sampling: &mut Sampling,
) -> Result<(), SolverError> {
    let th = state.theta;
    let rho = sampling.ratio();
    let y: Vec<f64> = state
        .x
        .iter()
        .zip(&state.z)
        .map(|(&x, &z)| (1.0 - th) * x + th * z)
        .collect();
    let products = problem.row_products(&y);
    let picks = sampling.draw_sorted().to_vec();
    state.x.copy_from_slice(&y);
    for i in picks {
        let g = problem.partial_from_products(&products, i);
        let zi = problem.prox_1d(g, state.z[i], th * rho * weights[i]);
        state.x[i] = y[i] + rho * th * (zi - state.z[i]);
        state.z[i] = zi;
    }
    state.theta_prev = th;
    state.theta = theta_next(th)?;
    state.history.push(state.x.clone());
    Ok(())
}

/// One per-iteration row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub epoch: f64,
    pub objective: f64,
    pub gap: Option<f64>,
    pub dist_v: Option<f64>,
    pub restarted: bool,
}

/// Per-iteration records of one solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always has a record")
    }

    /// First iteration whose recorded gap is at most `tol`.
    pub fn iterations_to_gap(&self, tol: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.gap.is_some_and(|g| g <= tol))
            .map(|r| r.iteration)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.last().gap
    }

    pub fn restarts(&self) -> usize {
        self.records.iter().filter(|r| r.restarted).count()
    }
}

/// Additional stop condition on top of the iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    BudgetOnly,
    /// Stop once `F(x_k) − F(x*) ≤ tol`; requires a reference optimum.
    GapBelow(f64),
    /// Stop once `k·τ/n` reaches the given epoch count.
    EpochCap(f64),
}

enum Engine {
    FullGrad {
        kind: SolverKind,
        state: FullGradientState,
    },
    Naive {
        state: ApproxNaiveState,
        sampling: Sampling,
    },
    Efficient {
        state: EfficientState,
        sampling: Sampling,
    },
}

impl Engine {
    fn step(&mut self, problem: &CompositeProblem, weights: &[f64]) -> Result<(), SolverError> {
        match self {
            Engine::FullGrad { kind, state } => match kind {
                SolverKind::Ista => prox_grad_step(problem, weights, state),
                SolverKind::Fista => fista_step(problem, weights, state),
                SolverKind::Apg => apg_step(problem, weights, state),
                SolverKind::Approx { .. } => unreachable!("approx runs its own engines"),
            },
            Engine::Naive { state, sampling } => approx_step(problem, weights, state, sampling),
            Engine::Efficient { state, sampling } => {
                Ok(approx_efficient::efficient_step(problem, weights, state, sampling)?)
            }
        }
    }

    /// θ/r bookkeeping for iterations that did not restart.
    fn finalize_schedule(&mut self) -> Result<(), SolverError> {
        if let Engine::Efficient { state, .. } = self {
            approx_efficient::finalize_schedule(state)?;
        }
        Ok(())
    }

    fn current_x(&self) -> Vec<f64> {
        match self {
            Engine::FullGrad { state, .. } => state.x.clone(),
            Engine::Naive { state, .. } => state.x.clone(),
            Engine::Efficient { state, .. } => state.materialize_x(),
        }
    }

    fn current_z(&self) -> Option<&[f64]> {
        match self {
            Engine::FullGrad { state, .. } => Some(&state.z),
            _ => None,
        }
    }

    fn restart_point(&mut self, rule: &PointRule) -> Result<Vec<f64>, SolverError> {
        match rule {
            PointRule::AtX => Ok(self.current_x()),
            PointRule::AtZ => match self {
                Engine::FullGrad { state, .. } => Ok(state.z.clone()),
                _ => unreachable!("policy validation rejects z-restarts here"),
            },
            PointRule::FullCombination(sigma) => match self {
                Engine::FullGrad { state, .. } => {
                    Ok(restart_point_full(&state.x, &state.z, *sigma)?)
                }
                _ => unreachable!("policy validation rejects x/z blends here"),
            },
            PointRule::ApproxCombination(sigma) => match self {
                Engine::Naive { state, sampling } => Ok(restart_point_approx_naive(
                    &state.history,
                    state.theta0(),
                    sampling.ratio(),
                    *sigma,
                )?),
                Engine::Efficient { state, .. } => {
                    Ok(approx_efficient::efficient_restart_point(state, *sigma))
                }
                Engine::FullGrad { .. } => {
                    unreachable!("policy validation rejects history blends here")
                }
            },
        }
    }

    fn apply_restart(
        &mut self,
        problem: &CompositeProblem,
        point: Vec<f64>,
        theta0: f64,
        at_iteration: u64,
    ) -> RestartEvent {
        match self {
            Engine::FullGrad { state, .. } => state.reset_to(&point, theta0),
            Engine::Naive { state, .. } => state.reset_to(&point, theta0),
            Engine::Efficient { state, .. } => {
                approx_efficient::apply_restart_efficient(problem, state, &point)
            }
        }
        RestartEvent {
            at_iteration,
            point,
            theta_reset: theta0,
        }
    }
}

fn validate_policy(policy: &RestartPolicy, kind: SolverKind) -> Result<(), SolverError> {
    let reject = |why: &RestartPolicy| SolverError::PolicyUnsupported {
        policy: why.label().to_string(),
        solver: kind.label().to_string(),
    };
    match policy {
        RestartPolicy::None => Ok(()),
        RestartPolicy::ConditionalAtX { .. } | RestartPolicy::FunctionValueAdaptive => {
            if matches!(kind, SolverKind::Ista) {
                Err(reject(policy))
            } else {
                Ok(())
            }
        }
        RestartPolicy::ConditionalAtZ => {
            if kind.has_z_iterate() {
                Ok(())
            } else {
                Err(reject(policy))
            }
        }
        RestartPolicy::FixedCombination { .. } => {
            if kind.has_z_iterate() {
                Ok(())
            } else {
                Err(reject(policy))
            }
        }
        RestartPolicy::ApproxCombination { .. } => {
            if matches!(kind, SolverKind::Approx { .. }) {
                Ok(())
            } else {
                Err(reject(policy))
            }
        }
        RestartPolicy::IntervalAdaptive { inner, .. } => {
            if !inner.is_adaptive() {
                return Err(SolverError::Restart(RestartError::InnerNotAdaptive));
            }
            validate_policy(inner, kind)
        }
    }
}

/// Runs a solver from the zero vector under a restart policy until the
/// budget or the stop rule is hit, recording one trace row per iteration.
pub fn run(
    problem: &CompositeProblem,
    kind: SolverKind,
    policy: &RestartPolicy,
    budget: u64,
    stop: StopRule,
    seed: u64,
) -> Result<RunTrace, SolverError> {
    policy.validate_parameters()?;
    validate_policy(policy, kind)?;
    if matches!(stop, StopRule::GapBelow(_)) && problem.reference().is_none() {
        return Err(SolverError::MissingReference);
    }
    let n = problem.dim();
    let theta0 = kind.theta0(n);
    let (weights, epoch_scale): (Vec<f64>, f64) = match kind {
        SolverKind::Approx { tau, .. } => (problem.v_for_tau(tau), tau as f64 / n as f64),
        _ => (problem.v_gradient().to_vec(), 1.0),
    };
    let weights = &weights[..];
    if let RestartPolicy::ApproxCombination { period, .. } = policy {
        if let SolverKind::Approx {
            engine: ApproxEngine::Efficient,
            ..
        } = kind
        {
            let cap = (1e6 / theta0) as u64;
            if *period > cap {
                return Err(SolverError::PeriodTooLong {
                    period: *period,
                    cap,
                    theta0,
                });
            }
        }
    }

    let x0 = vec![0.0; n];
    let mut engine = match kind {
        SolverKind::Approx { tau, engine } => {
            let sampling = Sampling::new(n, tau, seed)?;
            match engine {
                ApproxEngine::Naive => Engine::Naive {
                    state: ApproxNaiveState::new(&x0, theta0),
                    sampling,
                },
                ApproxEngine::Efficient => Engine::Efficient {
                    state: EfficientState::new(problem, &x0, theta0, sampling.ratio()),
                    sampling,
                },
            }
        }
        _ => Engine::FullGrad {
            kind,
            state: FullGradientState::new(&x0, theta0),
        },
    };

    let mut trace = RunTrace::default();
    let mut counter: u64 = 0;

    let record = |trace: &mut RunTrace,
                  iteration: u64,
                  x: &[f64],
                  objective: f64,
                  restarted: bool|
     -> Result<(), SolverError> {
        let (gap, dist_v) = match problem.reference() {
            Some(reference) => {
                let diff: Vec<f64> = x
                    .iter()
                    .zip(reference.x.iter())
                    .map(|(a, b)| a - b)
                    .collect();
                (
                    Some(objective - reference.objective),
                    Some(weighted_norm_sq(&diff, weights)?.sqrt()),
                )
            }
            None => (None, None),
        };
        trace.records.push(TraceRecord {
            iteration,
            epoch: iteration as f64 * epoch_scale,
            objective,
            gap,
            dist_v,
            restarted,
        });
        Ok(())
    };

    let f0 = problem.objective_value(&x0);
    if !f0.is_finite() {
        return Err(SolverError::NonFinite { iteration: 0 });
    }
    record(&mut trace, 0, &x0, f0, false)?;
    let mut last_f = Some(f0);
    if stopped(&trace, stop) {
        return Ok(trace);
    }

    for k in 1..=budget {
        engine.step(problem, weights)?;
        counter += 1;

        let mut x_now = engine.current_x();
        let mut f_now = problem.objective_value(&x_now);
        if !f_now.is_finite() {
            return Err(SolverError::NonFinite { iteration: k });
        }

        let mut f_at_z = || {
            engine
                .current_z()
                .map(|z| problem.objective_value(z))
                .expect("validated policies only ask for z where it exists")
        };
        let ctx = PolicyContext {
            theta0,
            counter,
            objective: f_now,
            previous_objective: last_f,
        };
        let action = policy.decide(&ctx, &mut f_at_z)?;

        let restarted = if let Some(rule) = action {
            let point = engine.restart_point(&rule)?;
            engine.apply_restart(problem, point, theta0, k);
            counter = 0;
            x_now = engine.current_x();
            f_now = problem.objective_value(&x_now);
            if !f_now.is_finite() {
                return Err(SolverError::NonFinite { iteration: k });
            }
            true
        } else {
            engine.finalize_schedule()?;
            false
        };

        record(&mut trace, k, &x_now, f_now, restarted)?;
        last_f = Some(f_now);
        if stopped(&trace, stop) {
            break;
        }
    }
    Ok(trace)
}

fn stopped(trace: &RunTrace, stop: StopRule) -> bool {
    let last = trace.last();
    match stop {
        StopRule::BudgetOnly => false,
        StopRule::GapBelow(tol) => last.gap.is_some_and(|g| g <= tol),
        StopRule::EpochCap(cap) => last.epoch >= cap,
    }
}

/// Produces a high-accuracy optimum by a long adaptive-restart run followed
/// by a monotone polish, suitable as the `(x*, F*)` reference for gap
/// reporting.
pub fn compute_reference(
    problem: &CompositeProblem,
    budget: u64,
    residual_tol: f64,
) -> Result<Reference, SolverError> {
    let weights = problem.v_gradient().to_vec();
    let n = problem.dim();
    let mut state = FullGradientState::new(&vec![0.0; n], 1.0);
    let mut best_x = state.x.clone();
    let mut best_f = problem.objective_value(&state.x);
    let mut last_f = best_f;
    let mut stale: u32 = 0;

    let residual_small = |x: &[f64]| {
        let g = problem.gradient(x);
        let mut worst = 0.0f64;
        for i in 0..n {
            let next = problem.prox_1d(g[i], x[i], weights[i]);
            worst = worst.max((next - x[i]).abs());
        }
        worst <= residual_tol
    };

    for k in 0..budget {
        fista_step(problem, &weights, &mut state)?;
        let f = problem.objective_value(&state.x);
        if !f.is_finite() {
            return Err(SolverError::NonFinite { iteration: k });
        }
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&state.x);
            stale = 0;
        } else {
            stale += 1;
        }
        if f > last_f {
            let point = state.x.clone();
            state.reset_to(&point, 1.0);
        }
        last_f = f;
        if stale >= 400 || (k % 16 == 0 && residual_small(&best_x)) {
            break;
        }
    }

    // monotone polish from the best point seen
    let mut state = FullGradientState::new(&best_x, 1.0);
    let mut stale = 0u32;
    for _ in 0..budget {
        prox_grad_step(problem, &weights, &mut state)?;
        let f = problem.objective_value(&state.x);
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&state.x);
            stale = 0;
        } else {
            stale += 1;
            if stale >= 50 {
                break;
            }
        }
    }

    Ok(Reference {
        x: best_x,
        objective: best_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::synth_lasso;
    use crate::problems::{elastic_lasso_problem, lasso_problem, quadratic_problem, SparseDesign};
    use crate::schedule::xi_at;

    fn scalar_quadratic() -> CompositeProblem {
        // f(x) = ½x², ψ = 0
        quadratic_problem(SparseDesign::identity(vec![0.0]).unwrap()).unwrap()
    }

    fn thresholded_identity() -> CompositeProblem {
        // optimum soft-thresholds b = (1, 0) at weight 0.1, so x* = (0.9, 0)
        lasso_problem(SparseDesign::identity(vec![1.0, 0.0]).unwrap(), 0.1).unwrap()
    }

    fn random_elastic(seed: u64, n: usize, m: usize) -> CompositeProblem {
        let (design, _) = synth_lasso(n, m, 0.6, 3.0, seed).unwrap();
        elastic_lasso_problem(design, 0.05, 0.05).unwrap()
    }

    #[test]
    fn fista_hand_iteration_on_scalar_quadratic() {
        let p = scalar_quadratic();
        let mut state = FullGradientState::new(&[1.0], 1.0);
        fista_step(&p, &[1.0], &mut state).unwrap();
        assert_eq!(state.x, vec![0.0]);
        assert_eq!(state.z, vec![0.0]);
        assert_eq!(state.theta_prev, 1.0);
        assert!((state.theta - (5.0f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn steps_preserve_the_fixed_point() {
        let p = thresholded_identity();
        let star = [0.9, 0.0];
        let w = p.v_gradient().to_vec();
        for step in [fista_step, apg_step, prox_grad_step] {
            let mut state = FullGradientState::new(&star, 1.0);
            step(&p, &w, &mut state).unwrap();
            assert!((state.x[0] - star[0]).abs() < 1e-15);
            assert_eq!(state.x[1], star[1]);
        }
    }

    #[test]
    fn apg_and_fista_agree_on_the_first_step() {
        let p = random_elastic(40, 6, 10);
        let w = p.v_gradient().to_vec();
        let x0 = vec![0.4, -0.2, 0.0, 1.0, -0.7, 0.3];
        let mut fista = FullGradientState::new(&x0, 1.0);
        let mut apg = FullGradientState::new(&x0, 1.0);
        fista_step(&p, &w, &mut fista).unwrap();
        apg_step(&p, &w, &mut apg).unwrap();
        for (a, b) in fista.x.iter().zip(&apg.x) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in fista.z.iter().zip(&apg.z) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ista_is_monotone_and_matches_plain_gradient_descent() {
        let p = random_elastic(41, 8, 12);
        let w = p.v_gradient().to_vec();
        let mut state = FullGradientState::new(&[0.5; 8], 1.0);
        let mut last = p.objective_value(&state.x);
        for _ in 0..50 {
            prox_grad_step(&p, &w, &mut state).unwrap();
            let f = p.objective_value(&state.x);
            assert!(f <= last + 1e-12 * last.abs());
            last = f;
        }

        let q = scalar_quadratic();
        let mut state = FullGradientState::new(&[2.0], 1.0);
        prox_grad_step(&q, &[1.0], &mut state).unwrap();
        // gradient step with rate 1/L from x = 2: x − x/L = 0
        assert_eq!(state.x, vec![0.0]);
    }

    #[test]
    fn ista_equals_fista_with_momentum_surgically_removed() {
        let p = random_elastic(42, 6, 9);
        let w = p.v_gradient().to_vec();
        let mut ista = FullGradientState::new(&[0.3; 6], 1.0);
        let mut fista = FullGradientState::new(&[0.3; 6], 1.0);
        for _ in 0..20 {
            prox_grad_step(&p, &w, &mut ista).unwrap();
            fista_step(&p, &w, &mut fista).unwrap();
            // forcing z back to x and the momentum to one reduces the
            // accelerated step to the plain one
            let x = fista.x.clone();
            fista.reset_to(&x, 1.0);
            for (a, b) in ista.x.iter().zip(&fista.x) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn coordinate_updates_leave_unsampled_z_untouched() {
        let p = random_elastic(43, 10, 14);
        let w = p.v_coordinate().to_vec();
        let mut probe = Sampling::new(10, 3, 5).unwrap();
        let mut sampling = Sampling::new(10, 3, 5).unwrap();
        let mut state = ApproxNaiveState::new(&[0.0; 10], 0.3);
        for _ in 0..20 {
            let touched = probe.draw_sorted().to_vec();
            let before = state.z.clone();
            approx_step(&p, &w, &mut state, &mut sampling).unwrap();
            for (i, &old_z) in before.iter().enumerate() {
                if !touched.contains(&i) {
                    assert_eq!(state.z[i].to_bits(), old_z.to_bits());
                }
            }
        }
    }

    #[test]
    fn full_sampling_reduces_to_apg() {
        for seed in 0..3u64 {
            let p = random_elastic(50 + seed, 7, 11);
            let trace_apg = run(
                &p,
                SolverKind::Apg,
                &RestartPolicy::None,
                40,
                StopRule::BudgetOnly,
                seed,
            )
            .unwrap();
            let trace_approx = run(
                &p,
                SolverKind::Approx {
                    tau: 7,
                    engine: ApproxEngine::Naive,
                },
                &RestartPolicy::None,
                40,
                StopRule::BudgetOnly,
                seed,
            )
            .unwrap();
            for (a, b) in trace_apg.records.iter().zip(&trace_approx.records) {
                let scale = a.objective.abs().max(1.0);
                assert!(
                    (a.objective - b.objective).abs() <= 1e-12 * scale,
                    "iter={} apg={} approx={}",
                    a.iteration,
                    a.objective,
                    b.objective
                );
            }
        }
    }

    #[test]
    fn identical_seeds_produce_identical_traces() {
        let p = random_elastic(60, 9, 13);
        let kind = SolverKind::Approx {
            tau: 2,
            engine: ApproxEngine::Efficient,
        };
        let policy = RestartPolicy::ApproxCombination {
            sigma: 0.5,
            period: 6,
        };
        let a = run(&p, kind, &policy, 100, StopRule::BudgetOnly, 7).unwrap();
        let b = run(&p, kind, &policy, 100, StopRule::BudgetOnly, 7).unwrap();
        assert_eq!(a, b);
        let c = run(&p, kind, &policy, 100, StopRule::BudgetOnly, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_budget_records_only_the_start() {
        let p = random_elastic(61, 5, 8);
        let trace = run(
            &p,
            SolverKind::Fista,
            &RestartPolicy::None,
            0,
            StopRule::BudgetOnly,
            0,
        )
        .unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.last().iteration, 0);
    }

    #[test]
    fn epoch_cap_counts_fractional_passes() {
        let p = random_elastic(66, 8, 12);
        let trace = run(
            &p,
            SolverKind::Approx {
                tau: 1,
                engine: ApproxEngine::Efficient,
            },
            &RestartPolicy::None,
            1000,
            StopRule::EpochCap(2.0),
            0,
        )
        .unwrap();
        // one epoch is n iterations at tau = 1
        assert_eq!(trace.last().iteration, 16);
        assert!((trace.last().epoch - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_includes_every_coordinate_with_equal_frequency() {
        let n = 10usize;
        let tau = 3usize;
        let mut sampling = Sampling::new(n, tau, 99).unwrap();
        let mut hits = vec![0usize; n];
        let draws = 20_000usize;
        for _ in 0..draws {
            for &i in sampling.draw_sorted() {
                hits[i] += 1;
            }
        }
        let expected = draws as f64 * tau as f64 / n as f64;
        for (i, &h) in hits.iter().enumerate() {
            let deviation = (h as f64 - expected).abs() / expected;
            assert!(deviation < 0.05, "coordinate {i}: {h} vs expected {expected}");
        }
    }

    #[test]
    fn gap_stop_requires_a_reference() {
        let p = random_elastic(62, 5, 8);
        match run(
            &p,
            SolverKind::Fista,
            &RestartPolicy::None,
            10,
            StopRule::GapBelow(1e-6),
            0,
        ) {
            Err(SolverError::MissingReference) => {}
            other => panic!("expected MissingReference, got {other:?}"),
        }
    }

    #[test]
    fn policy_solver_mismatches_are_rejected() {
        let p = random_elastic(63, 5, 8);
        let cases: Vec<(SolverKind, RestartPolicy)> = vec![
            (SolverKind::Ista, RestartPolicy::FunctionValueAdaptive),
            (SolverKind::Ista, RestartPolicy::ConditionalAtZ),
            (
                SolverKind::Approx {
                    tau: 1,
                    engine: ApproxEngine::Efficient,
                },
                RestartPolicy::ConditionalAtZ,
            ),
            (
                SolverKind::Approx {
                    tau: 1,
                    engine: ApproxEngine::Naive,
                },
                RestartPolicy::FixedCombination {
                    sigma: 0.5,
                    period: 4,
                },
            ),
            (
                SolverKind::Fista,
                RestartPolicy::ApproxCombination {
                    sigma: 0.5,
                    period: 4,
                },
            ),
        ];
        for (kind, policy) in cases {
            match run(&p, kind, &policy, 10, StopRule::BudgetOnly, 0) {
                Err(SolverError::PolicyUnsupported { .. }) => {}
                other => panic!("expected rejection for {policy:?} on {kind:?}, got {other:?}"),
            }
        }
        // the interval policy insists on an adaptive inner rule
        let bad = RestartPolicy::IntervalAdaptive {
            period_low: 2,
            period_high: 9,
            inner: Box::new(RestartPolicy::FixedCombination {
                sigma: 0.5,
                period: 3,
            }),
        };
        assert!(run(&p, SolverKind::Fista, &bad, 10, StopRule::BudgetOnly, 0).is_err());
    }

    #[test]
    fn oversized_restart_period_is_rejected_for_the_efficient_engine() {
        let p = random_elastic(64, 5, 8);
        let kind = SolverKind::Approx {
            tau: 1,
            engine: ApproxEngine::Efficient,
        };
        let policy = RestartPolicy::ApproxCombination {
            sigma: 0.5,
            period: 10_000_001,
        };
        match run(&p, kind, &policy, 10, StopRule::BudgetOnly, 0) {
            Err(SolverError::PeriodTooLong { .. }) => {}
            other => panic!("expected period cap, got {other:?}"),
        }
    }

    #[test]
    fn accelerated_iterates_are_convex_combinations_of_z_history() {
        let p = random_elastic(65, 6, 10);
        let w = p.v_gradient().to_vec();
        let mut state = FullGradientState::new(&[0.0; 6], 1.0);
        let mut zs = vec![state.z.clone()];
        let table = crate::oracle::gamma_table(1.0, 1.0, 60).unwrap();
        for k in 1..=60usize {
            fista_step(&p, &w, &mut state).unwrap();
            zs.push(state.z.clone());
            let mut combo = [0.0; 6];
            for (i, z) in zs.iter().enumerate() {
                let g = table.row(k)[i];
                for (slot, &v) in combo.iter_mut().zip(z) {
                    *slot += g * v;
                }
            }
            for (c, x) in combo.iter().zip(&state.x) {
                assert!(
                    (c - x).abs() <= 1e-8 * x.abs().max(1.0),
                    "k={k} combo={c} x={x}"
                );
            }
        }
    }

    #[test]
    fn coordinate_iterates_are_convex_combinations_of_z_history() {
        let p = random_elastic(67, 6, 10);
        let w = p.v_coordinate().to_vec();
        let theta0 = 1.0 / 6.0;
        let mut sampling = Sampling::new(6, 1, 3).unwrap();
        let mut state = ApproxNaiveState::new(&vec![0.0; 6], theta0);
        let mut zs = vec![state.z.clone()];
        let mut table = crate::oracle::gamma_table(theta0, 6.0, 80).unwrap();
        for k in 1..=80usize {
            approx_step(&p, &w, &mut state, &mut sampling).unwrap();
            zs.push(state.z.clone());
            let mut combo = vec![0.0; 6];
            for (i, z) in zs.iter().enumerate() {
                let g = table.row(k)[i];
                for (slot, &v) in combo.iter_mut().zip(z) {
                    *slot += g * v;
                }
            }
            let _ = table.theta(k);
            for (c, x) in combo.iter().zip(&state.x) {
                assert!(
                    (c - x).abs() <= 1e-8 * x.abs().max(1.0),
                    "k={k} combo={c} x={x}"
                );
            }
        }
    }

    #[test]
    fn coordinate_certificate_holds_in_seed_average() {
        // the accelerated coordinate bound, averaged over 200 seeds with
        // Monte-Carlo slack 1 + 3/sqrt(200)
        let n = 10usize;
        let (design, _) = synth_lasso(n, 16, 0.7, 2.0, 77).unwrap();
        let mut problem = elastic_lasso_problem(design, 0.05, 0.08).unwrap();
        let reference = compute_reference(&problem, 200_000, 1e-13).unwrap();
        problem.set_reference(reference).unwrap();
        let reference = problem.reference().unwrap().clone();

        let v = problem.v_coordinate().to_vec();
        let theta0 = 1.0 / n as f64;
        let k_check = 25usize;
        let seeds = 200u64;
        let f0 = problem.objective_value(&vec![0.0; n]);
        let gap0 = f0 - reference.objective;
        let dist0 = weighted_norm_sq(
            &reference.x.iter().map(|v| -v).collect::<Vec<f64>>(),
            &v,
        )
        .unwrap();

        let mut mean_gap = 0.0;
        let mut mean_dist = 0.0;
        let mut theta_prev = theta0;
        for seed in 0..seeds {
            let mut sampling = Sampling::new(n, 1, seed).unwrap();
            let mut state = ApproxNaiveState::new(&vec![0.0; n], theta0);
            for _ in 0..k_check {
                approx_step(&problem, &v, &mut state, &mut sampling).unwrap();
            }
            theta_prev = state.theta_prev;
            mean_gap += problem.objective_value(&state.x) - reference.objective;
            let diff: Vec<f64> = state
                .z
                .iter()
                .zip(&reference.x)
                .map(|(a, b)| a - b)
                .collect();
            mean_dist += weighted_norm_sq(&diff, &v).unwrap();
        }
        mean_gap /= seeds as f64;
        mean_dist /= seeds as f64;

        let t0sq = theta0 * theta0;
        let lhs = mean_gap / (theta_prev * theta_prev) + mean_dist / (2.0 * t0sq);
        let rhs = (1.0 - theta0) / t0sq * gap0 + dist0 / (2.0 * t0sq);
        let slack = 1.0 + 3.0 / (seeds as f64).sqrt();
        assert!(
            lhs <= rhs * slack,
            "certificate violated: lhs={lhs} rhs={rhs} slack={slack}"
        );
        // sanity: xi bookkeeping matches the iteration count we used
        assert!(xi_at(theta0, n as f64, k_check as u64).unwrap() > 0.0);
    }
}
