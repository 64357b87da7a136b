//! Scalar recursions behind the accelerated methods and their restarts.
//!
//! The θ-sequence drives the momentum of every solver in this crate. The ξ
//! aggregate summarizes the convex-combination weights of past iterates in a
//! single scalar, which is what makes the restart-parameter formulas cheap to
//! evaluate: `m_k(μ)` measures how much contraction a restart after `k`
//! iterations buys for a strong-convexity estimate `μ`, and the `(K, σ)`
//! choosers balance it against the per-cycle cost.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("theta must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("mu must lie in (0, 1], got {0}")]
    InvalidMu(f64),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("lambda must be >= mu and finite, got lambda {lambda} with mu {mu}")]
    InvalidLambda { lambda: f64, mu: f64 },
    #[error("ratio n/tau must be >= 1, got {0}")]
    InvalidRatio(f64),
    #[error("sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

fn check_theta(theta: f64) -> Result<(), ScheduleError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(ScheduleError::InvalidTheta(theta));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<(), ScheduleError> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(ScheduleError::InvalidMu(mu));
    }
    Ok(())
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ScheduleError> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(ScheduleError::NonPositive { name, value });
    }
    Ok(())
}

/// One momentum update: the unique positive root of `X² + θ²X − θ² = 0`.
///
/// Evaluated as `2θ² / (√(θ⁴ + 4θ²) + θ²)`, which is algebraically equal to
/// the textbook `(√(θ⁴ + 4θ²) − θ²)/2` but avoids the subtractive
/// cancellation that loses digits once θ ~ 1/k becomes small.
///
/// The result `θ'` satisfies `(1 − θ')/θ'² = 1/θ²` exactly in real
/// arithmetic.
pub fn theta_next(theta: f64) -> Result<f64, ScheduleError> {
    check_theta(theta)?;
    let t2 = theta * theta;
    Ok(2.0 * t2 / ((t2 * t2 + 4.0 * t2).sqrt() + t2))
}

/// The θ-sequence starting from a given `θ_0`, grown on demand.
///
/// Index `k` holds `θ_k`. The sequence is strictly decreasing and pinched
/// between `1/(k + 1/θ_0)` and `2/(k + 2/θ_0)`.
#[derive(Debug, Clone)]
pub struct ThetaSequence {
    values: Vec<f64>,
}

impl ThetaSequence {
    pub fn new(theta0: f64) -> Result<Self, ScheduleError> {
        check_theta(theta0)?;
        Ok(Self {
            values: vec![theta0],
        })
    }

    pub fn theta0(&self) -> f64 {
        self.values[0]
    }

    /// `θ_k`, extending the sequence if it has not been computed yet.
    pub fn theta(&mut self, k: usize) -> f64 {
        while self.values.len() <= k {
            let last = *self.values.last().expect("sequence is never empty");
            let next = theta_next(last).expect("thetas stay inside (0, 1]");
            self.values.push(next);
        }
        self.values[k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// One step of the ξ recursion: `ξ_{k+1} = (1−θ_k)ξ_k + (1 + (n/τ − 1)θ_k)/θ_k`.
///
/// The sequence is seeded with `ξ_1 = 1/θ_0²`.
pub fn xi_next(xi: f64, theta_k: f64, ratio: f64) -> Result<f64, ScheduleError> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(ScheduleError::NonPositive {
            name: "xi",
            value: xi,
        });
    }
    check_theta(theta_k)?;
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(ScheduleError::InvalidRatio(ratio));
    }
    Ok((1.0 - theta_k) * xi + (1.0 + (ratio - 1.0) * theta_k) / theta_k)
}

/// Running state of the ξ recursion, advanced jointly with the θ-sequence.
#[derive(Debug, Clone)]
pub struct XiAggregate {
    k: usize,
    xi: f64,
    ratio: f64,
    theta0: f64,
    theta_k: f64,
}

impl XiAggregate {
    /// State at `k = 1`, where `ξ_1 = 1/θ_0²`.
    pub fn start(theta0: f64, ratio: f64) -> Result<Self, ScheduleError> {
        check_theta(theta0)?;
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(ScheduleError::InvalidRatio(ratio));
        }
        Ok(Self {
            k: 1,
            xi: 1.0 / (theta0 * theta0),
            ratio,
            theta0,
            theta_k: theta_next(theta0)?,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Advances from `ξ_k` to `ξ_{k+1}`.
    pub fn advance(&mut self) {
        self.xi = xi_next(self.xi, self.theta_k, self.ratio).expect("state stays valid");
        self.theta_k = theta_next(self.theta_k).expect("thetas stay inside (0, 1]");
        self.k += 1;
    }
}

/// `ξ_k` for a given schedule, by running the recursion from `ξ_1`.
pub fn xi_at(theta0: f64, ratio: f64, k: u64) -> Result<f64, ScheduleError> {
    if k == 0 {
        return Err(ScheduleError::NonPositive {
            name: "k",
            value: 0.0,
        });
    }
    let mut agg = XiAggregate::start(theta0, ratio)?;
    for _ in 1..k {
        agg.advance();
    }
    Ok(agg.xi())
}

/// Contraction modulus `m_k(μ) = μθ_0²/(1 + μ(1 − θ_0)) · (ξ_k − (1 − θ_0)/θ_0²)`.
pub fn m_k(mu: f64, xi_k: f64, theta0: f64) -> Result<f64, ScheduleError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ScheduleError::InvalidMu(mu));
    }
    check_theta(theta0)?;
    let head = (1.0 - theta0) / (theta0 * theta0);
    Ok(mu * theta0 * theta0 / (1.0 + mu * (1.0 - theta0)) * (xi_k - head))
}

/// Restart period `K = ⌈(2√3/θ_0)√(1 + 1/μ) − 2/θ_0 + 1⌉`.
///
/// This is the default choice, the `λ = 1 + μ` case of
/// [`choose_restart_period_general`] with an extra `+1` inside the ceiling.
pub fn choose_restart_period(mu: f64, theta0: f64) -> Result<u64, ScheduleError> {
    check_mu(mu)?;
    check_theta(theta0)?;
    let raw = 2.0 * 3.0f64.sqrt() / theta0 * (1.0 + 1.0 / mu).sqrt() - 2.0 / theta0 + 1.0;
    Ok(raw.ceil().max(1.0) as u64)
}

/// Restart period `K = ⌈(2√3/θ_0)√(λ/μ) − 2/θ_0⌉` for a free tradeoff `λ ≥ μ`.
///
/// With this `K`, the aggregate satisfies `λ ≤ μθ_0²ξ_K ≤ 9λ` and
/// `K ≤ (2√3/θ_0)√(λ/μ)`.
pub fn choose_restart_period_general(
    mu: f64,
    theta0: f64,
    lambda: f64,
) -> Result<u64, ScheduleError> {
    check_mu(mu)?;
    check_theta(theta0)?;
    if !(lambda >= mu && lambda.is_finite()) {
        return Err(ScheduleError::InvalidLambda { lambda, mu });
    }
    let raw = 2.0 * 3.0f64.sqrt() / theta0 * (lambda / mu).sqrt() - 2.0 / theta0;
    Ok(raw.ceil().max(1.0) as u64)
}

/// Mixing weight `σ = 1/(1 + m_K(μ))` for a restart every `K` iterations.
pub fn choose_sigma(mu: f64, period: u64, theta0: f64, ratio: f64) -> Result<f64, ScheduleError> {
    let xi = xi_at(theta0, ratio, period)?;
    let m = m_k(mu, xi, theta0)?;
    Ok(1.0 / (1.0 + m))
}

/// Per-cycle contraction factor `max(σ, 1 − σ·m_K(μ_F))`.
///
/// Raising this to the power `1/K` gives the per-iteration rate.
pub fn contraction_factor(sigma: f64, m_at_mu_f: f64) -> Result<f64, ScheduleError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(ScheduleError::InvalidSigma(sigma));
    }
    if !(m_at_mu_f >= 0.0 && m_at_mu_f.is_finite()) {
        return Err(ScheduleError::NonPositive {
            name: "m_at_mu_f",
            value: m_at_mu_f,
        });
    }
    Ok(sigma.max(1.0 - sigma * m_at_mu_f))
}

/// Per-iteration geometric factor of a per-cycle contraction.
pub fn per_iteration_rate(factor: f64, period: u64) -> f64 {
    factor.powf(1.0 / period as f64)
}

/// Per-iteration rate of plain proximal coordinate descent, `1 − θ_0·μ_F`.
pub fn cd_rate(mu_f: f64, theta0: f64) -> f64 {
    1.0 - theta0 * mu_f
}

/// Simplified per-iteration rate bound of the restarted method:
/// `(1 − min(μ_F/μ, 1)·(λ − μ(1 − θ_0))/(λ + 1))^(θ_0√μ/(2√3√λ))`.
pub fn rate_bound(
    mu: f64,
    mu_f: f64,
    theta0: f64,
    tradeoff_lambda: f64,
) -> Result<f64, ScheduleError> {
    check_mu(mu)?;
    check_theta(theta0)?;
    check_positive("mu_f", mu_f)?;
    if !(tradeoff_lambda >= mu && tradeoff_lambda.is_finite()) {
        return Err(ScheduleError::InvalidLambda {
            lambda: tradeoff_lambda,
            mu,
        });
    }
    let base = 1.0
        - (mu_f / mu).min(1.0) * (tradeoff_lambda - mu * (1.0 - theta0)) / (tradeoff_lambda + 1.0);
    let exponent = theta0 * mu.sqrt() / (2.0 * 3.0f64.sqrt() * tradeoff_lambda.sqrt());
    Ok(base.powf(exponent))
}

/// Iteration count sufficient to drive the restart Lyapunov measure below
/// `eps` from an initial value `d0`:
/// `(1/θ_0)·(6√6·max(1/√μ, √μ/μ_F)·log(d0/eps) + 2√3·√(1 + 1/μ))`.
pub fn iteration_complexity(
    mu: f64,
    mu_f: f64,
    theta0: f64,
    eps: f64,
    d0: f64,
) -> Result<f64, ScheduleError> {
    check_mu(mu)?;
    check_theta(theta0)?;
    check_positive("mu_f", mu_f)?;
    check_positive("eps", eps)?;
    check_positive("d0", d0)?;
    let grow = (1.0 / mu.sqrt()).max(mu.sqrt() / mu_f);
    Ok((6.0 * 6.0f64.sqrt() * grow * (d0 / eps).ln() + 2.0 * 3.0f64.sqrt() * (1.0 + 1.0 / mu).sqrt())
        / theta0)
}

/// Iteration threshold after which restarting at the current iterate
/// contracts the objective gap by at least `α`:
/// `(2/θ_0)(√((1 + μ)/(αμ)) − 1) + 1`.
pub fn conditional_restart_threshold(
    mu: f64,
    alpha: f64,
    theta0: f64,
) -> Result<f64, ScheduleError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ScheduleError::InvalidMu(mu));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ScheduleError::InvalidAlpha(alpha));
    }
    check_theta(theta0)?;
    Ok(2.0 / theta0 * (((1.0 + mu) / (alpha * mu)).sqrt() - 1.0) + 1.0)
}

/// A fully resolved restart parameterization: the period `K`, the mixing
/// weight `σ = 1/(1 + m_K(μ))` and the modulus `m_K(μ)` they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartParameterChoice {
    pub mu: f64,
    pub tradeoff_lambda: f64,
    pub period: u64,
    pub sigma: f64,
    pub m_at_period: f64,
}

impl RestartParameterChoice {
    /// Default parameterization: `λ = 1 + μ` and the `+1` ceiling for `K`.
    pub fn main(mu: f64, theta0: f64, ratio: f64) -> Result<Self, ScheduleError> {
        let period = choose_restart_period(mu, theta0)?;
        Self::finish(mu, 1.0 + mu, period, theta0, ratio)
    }

    /// Expert knob: a free tradeoff `λ ≥ μ` with the shorter ceiling for `K`.
    pub fn with_lambda(
        mu: f64,
        theta0: f64,
        ratio: f64,
        lambda: f64,
    ) -> Result<Self, ScheduleError> {
        let period = choose_restart_period_general(mu, theta0, lambda)?;
        Self::finish(mu, lambda, period, theta0, ratio)
    }

    fn finish(
        mu: f64,
        lambda: f64,
        period: u64,
        theta0: f64,
        ratio: f64,
    ) -> Result<Self, ScheduleError> {
        let xi = xi_at(theta0, ratio, period)?;
        let m = m_k(mu, xi, theta0)?;
        Ok(Self {
            mu,
            tradeoff_lambda: lambda,
            period,
            sigma: 1.0 / (1.0 + m),
            m_at_period: m,
        })
    }
}
