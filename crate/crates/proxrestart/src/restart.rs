//! Restart policies: when to restart an accelerated run and where to
//! restart it from.
//!
//! Two families coexist. Conditional rules wait for a measurable event (an
//! iteration-count threshold derived from a strong-convexity estimate, an
//! objective comparison between the two iterate sequences, or a plain
//! objective increase). Combination rules restart unconditionally every `K`
//! iterations from a blend of the current iterates; these are the ones with
//! a guaranteed geometric rate for any `K`. The interval rule sandwiches an
//! adaptive trigger between two period bounds and forces the restart at the
//! upper one.

use thiserror::Error;

use crate::oracle::{gamma_table, naive_center, OracleError};
use crate::problems::{weighted_norm_sq, CompositeProblem, ProblemError};
use crate::schedule::{
    choose_restart_period, choose_sigma, conditional_restart_threshold, RestartParameterChoice,
    ScheduleError,
};

#[derive(Debug, Error)]
pub enum RestartError {
    #[error("sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),
    #[error("restart period must be at least 1")]
    InvalidPeriod,
    #[error("interval bounds must satisfy 1 <= low <= high, got [{low}, {high}]")]
    InvalidInterval { low: u64, high: u64 },
    #[error("the inner rule of an interval policy must be adaptive")]
    InnerNotAdaptive,
    #[error("mixing weight outside [0, 1]: {0}")]
    SigmaOutOfRange(f64),
    #[error("restart point needs at least one completed iteration")]
    EmptyHistory,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// When and from where to restart.
#[derive(Debug, Clone, PartialEq)]
pub enum RestartPolicy {
    /// Never restart.
    None,
    /// Restart at the current iterate once enough iterations have passed to
    /// contract the objective gap by `alpha`, assuming strong convexity at
    /// least `mu`.
    ConditionalAtX { mu: f64, alpha: f64 },
    /// Restart at `z` whenever `F(z) ≤ F(x)`; needs no strong-convexity
    /// estimate but may never trigger.
    ConditionalAtZ,
    /// Every `period` iterations restart the full-gradient methods from
    /// `(1−σ)x + σz`.
    FixedCombination { sigma: f64, period: u64 },
    /// Every `period` iterations restart the coordinate method from
    /// `σx + (1−σ)x̊`, where `x̊` is the history-weighted center.
    ApproxCombination { sigma: f64, period: u64 },
    /// Restart at the current iterate whenever the objective increases.
    FunctionValueAdaptive,
    /// Let `inner` fire anywhere in `[period_low, period_high)`; force the
    /// restart at `period_high`.
    IntervalAdaptive {
        period_low: u64,
        period_high: u64,
        inner: Box<RestartPolicy>,
    },
}

/// Where the restart point comes from, once a trigger has fired.
#[derive(Debug, Clone, PartialEq)]
pub enum PointRule {
    AtX,
    AtZ,
    FullCombination(f64),
    ApproxCombination(f64),
}

/// Everything a policy may consult when deciding.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext {
    pub theta0: f64,
    /// Iterations since the last restart (>= 1 when deciding).
    pub counter: u64,
    /// Objective at the iterate just produced.
    pub objective: f64,
    /// Objective recorded for the previous iterate, if any.
    pub previous_objective: Option<f64>,
}

/// A restart that actually happened.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartEvent {
    pub at_iteration: u64,
    pub point: Vec<f64>,
    pub theta_reset: f64,
}

impl RestartPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            RestartPolicy::None => "none",
            RestartPolicy::ConditionalAtX { .. } => "at-x",
            RestartPolicy::ConditionalAtZ => "at-z",
            RestartPolicy::FixedCombination { .. } => "combination",
            RestartPolicy::ApproxCombination { .. } => "approx-combination",
            RestartPolicy::FunctionValueAdaptive => "function-value",
            RestartPolicy::IntervalAdaptive { .. } => "interval",
        }
    }

    /// Conditional rules that can sit inside an interval policy.
    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            RestartPolicy::ConditionalAtX { .. }
                | RestartPolicy::ConditionalAtZ
                | RestartPolicy::FunctionValueAdaptive
        )
    }

    pub fn validate_parameters(&self) -> Result<(), RestartError> {
        match self {
            RestartPolicy::FixedCombination { sigma, period }
            | RestartPolicy::ApproxCombination { sigma, period } => {
                if !(*sigma > 0.0 && *sigma < 1.0) {
                    return Err(RestartError::InvalidSigma(*sigma));
                }
                if *period == 0 {
                    return Err(RestartError::InvalidPeriod);
                }
                Ok(())
            }
            RestartPolicy::ConditionalAtX { mu, alpha } => {
                // surfaces parameter problems before a run starts
                conditional_restart_threshold(*mu, *alpha, 1.0)?;
                Ok(())
            }
            RestartPolicy::IntervalAdaptive {
                period_low,
                period_high,
                inner,
            } => {
                if *period_low == 0 || period_low > period_high {
                    return Err(RestartError::InvalidInterval {
                        low: *period_low,
                        high: *period_high,
                    });
                }
                if !inner.is_adaptive() {
                    return Err(RestartError::InnerNotAdaptive);
                }
                inner.validate_parameters()
            }
            _ => Ok(()),
        }
    }

    /// Fixed-period policy for the full-gradient methods with `K` and `σ`
    /// derived from a strong-convexity estimate.
    pub fn full_combination_from_mu(mu: f64, theta0: f64, ratio: f64) -> Result<Self, RestartError> {
        let choice = RestartParameterChoice::main(mu, theta0, ratio)?;
        Ok(RestartPolicy::FixedCombination {
            sigma: choice.sigma,
            period: choice.period,
        })
    }

    /// Fixed-period policy for the coordinate method with `K` and `σ`
    /// derived from a strong-convexity estimate.
    pub fn approx_combination_from_mu(
        mu: f64,
        theta0: f64,
        ratio: f64,
    ) -> Result<Self, RestartError> {
        let choice = RestartParameterChoice::main(mu, theta0, ratio)?;
        Ok(RestartPolicy::ApproxCombination {
            sigma: choice.sigma,
            period: choice.period,
        })
    }

    /// Decides whether to restart now and from which point. `f_at_z` is
    /// consulted only by the `z`-comparison rule, so other policies never
    /// pay for the extra objective evaluation.
    pub fn decide(
        &self,
        ctx: &PolicyContext,
        f_at_z: &mut dyn FnMut() -> f64,
    ) -> Result<Option<PointRule>, RestartError> {
        match self {
            RestartPolicy::None => Ok(None),
            RestartPolicy::ConditionalAtX { mu, alpha } => {
                let threshold = conditional_restart_threshold(*mu, *alpha, ctx.theta0)?;
                Ok((ctx.counter as f64 >= threshold).then_some(PointRule::AtX))
            }
            RestartPolicy::ConditionalAtZ => {
                Ok((f_at_z() <= ctx.objective).then_some(PointRule::AtZ))
            }
            RestartPolicy::FixedCombination { sigma, period } => Ok((ctx.counter > 0
                && ctx.counter.is_multiple_of(*period))
                .then_some(PointRule::FullCombination(*sigma))),
            RestartPolicy::ApproxCombination { sigma, period } => Ok((ctx.counter > 0
                && ctx.counter.is_multiple_of(*period))
                .then_some(PointRule::ApproxCombination(*sigma))),
            RestartPolicy::FunctionValueAdaptive => Ok(ctx
                .previous_objective
                .is_some_and(|prev| ctx.objective > prev)
                .then_some(PointRule::AtX)),
            RestartPolicy::IntervalAdaptive {
                period_low,
                period_high,
                inner,
            } => {
                if ctx.counter >= *period_high {
                    // the forced restart reseeds from the current iterate
                    Ok(Some(PointRule::AtX))
                } else if ctx.counter >= *period_low {
                    inner.decide(ctx, f_at_z)
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// True when the policy would restart now.
    pub fn should_restart(
        &self,
        ctx: &PolicyContext,
        f_at_z: &mut dyn FnMut() -> f64,
    ) -> Result<bool, RestartError> {
        Ok(self.decide(ctx, f_at_z)?.is_some())
    }
}

/// Componentwise blend `(1−σ)x + σz` used by the full-gradient restarts.
pub fn restart_point_full(x: &[f64], z: &[f64], sigma: f64) -> Result<Vec<f64>, RestartError> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(RestartError::SigmaOutOfRange(sigma));
    }
    if x.len() != z.len() {
        return Err(RestartError::Problem(ProblemError::DimensionMismatch {
            left: x.len(),
            right: z.len(),
        }));
    }
    Ok(x.iter()
        .zip(z)
        .map(|(&xi, &zi)| (1.0 - sigma) * xi + sigma * zi)
        .collect())
}

/// History-weighted restart point `σx_k + (1−σ)x̊_k` where `x̊_k` is the
/// normalized weighted sum of the iterates since the last restart. This is
/// the literal evaluation used as an oracle; the production path keeps only
/// aggregates.
pub fn restart_point_approx_naive(
    history: &[Vec<f64>],
    theta0: f64,
    ratio: f64,
    sigma: f64,
) -> Result<Vec<f64>, RestartError> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(RestartError::SigmaOutOfRange(sigma));
    }
    if history.len() < 2 {
        return Err(RestartError::EmptyHistory);
    }
    let k = history.len() - 1;
    let mut table = gamma_table(theta0, ratio, k)?;
    let center = naive_center(history, &mut table)?;
    let latest = &history[k];
    Ok(latest
        .iter()
        .zip(&center)
        .map(|(&xk, &ck)| sigma * xk + (1.0 - sigma) * ck)
        .collect())
}

/// The Lyapunov measure contracted by the combination restarts:
/// `Δ(x) = ((1−θ_0)/θ_0²)(F(x) − F*) + (1/(2θ_0²))‖x − x*‖_v²`.
pub fn lyapunov(
    problem: &CompositeProblem,
    weights: &[f64],
    theta0: f64,
    x: &[f64],
) -> Result<f64, RestartError> {
    let reference = problem
        .reference()
        .expect("the Lyapunov measure needs a reference optimum");
    let gap = problem.objective_value(x) - reference.objective;
    let diff: Vec<f64> = x.iter().zip(&reference.x).map(|(a, b)| a - b).collect();
    let dist = weighted_norm_sq(&diff, weights)?;
    let t2 = theta0 * theta0;
    Ok((1.0 - theta0) / t2 * gap + dist / (2.0 * t2))
}

/// `σ` and `K` resolved from explicit overrides or a strong-convexity
/// estimate; explicit values win.
pub fn resolve_combination(
    mu: Option<f64>,
    sigma: Option<f64>,
    period: Option<u64>,
    theta0: f64,
    ratio: f64,
) -> Result<(f64, u64), RestartError> {
    match (sigma, period) {
        (Some(s), Some(k)) => Ok((s, k)),
        _ => {
            let mu = mu.ok_or(RestartError::InvalidPeriod)?;
            let k = match period {
                Some(k) => k,
                None => choose_restart_period(mu, theta0)?,
            };
            let s = match sigma {
                Some(s) => s,
                None => choose_sigma(mu, k, theta0, ratio)?,
            };
            Ok((s, k))
        }
    }
}
