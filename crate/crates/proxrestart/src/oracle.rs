//! Slow, obviously-correct reference implementations.
//!
//! Nothing here is meant for production runs: the γ-table stores the full
//! triangular array of convex-combination weights that the solvers only ever
//! keep in aggregated form, and the gradient check uses central differences.
//! The test suites use these as independent oracles.

use thiserror::Error;

use crate::problems::CompositeProblem;
use crate::schedule::{ScheduleError, ThetaSequence};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("k_max {0} exceeds the gamma table guard of {MAX_TABLE_ROWS}")]
    TableTooLarge(usize),
    #[error("history must contain at least two iterates, got {0}")]
    HistoryTooShort(usize),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

pub const MAX_TABLE_ROWS: usize = 5000;

/// Triangular array of the weights expressing `x_k` as a convex combination
/// of `z_0, …, z_k`. Row `k` holds `γ_k^0 … γ_k^k`.
#[derive(Debug, Clone)]
pub struct GammaTable {
    rows: Vec<Vec<f64>>,
    thetas: ThetaSequence,
    ratio: f64,
}

/// Builds the table by the exact recursion: for `k ≥ 1`,
/// `γ_{k+1}^i = (1−θ_k)γ_k^i` for `i < k`,
/// `γ_{k+1}^k = θ_k(1 − (n/τ)θ_{k−1}) + (n/τ)(θ_{k−1} − θ_k)`,
/// `γ_{k+1}^{k+1} = (n/τ)θ_k`,
/// seeded with rows `(1)` and `(0, 1)`.
pub fn gamma_table(theta0: f64, ratio: f64, k_max: usize) -> Result<GammaTable, OracleError> {
    if k_max > MAX_TABLE_ROWS {
        return Err(OracleError::TableTooLarge(k_max));
    }
    let mut thetas = ThetaSequence::new(theta0)?;
    let mut rows = Vec::with_capacity(k_max + 1);
    rows.push(vec![1.0]);
    if k_max >= 1 {
        rows.push(vec![0.0, 1.0]);
    }
    for k in 1..k_max {
        let theta_prev = thetas.theta(k - 1);
        let theta = thetas.theta(k);
        let last = &rows[k];
        let mut row = Vec::with_capacity(k + 2);
        for &g in last.iter().take(k) {
            row.push((1.0 - theta) * g);
        }
        row.push(theta * (1.0 - ratio * theta_prev) + ratio * (theta_prev - theta));
        row.push(ratio * theta);
        rows.push(row);
    }
    thetas.theta(k_max);
    Ok(GammaTable {
        rows,
        thetas,
        ratio,
    })
}

impl GammaTable {
    pub fn max_row(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn theta(&mut self, k: usize) -> f64 {
        self.thetas.theta(k)
    }

    pub fn theta0(&self) -> f64 {
        self.thetas.theta0()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// `1/θ_{i−1}²` with the convention `1/θ_{−1}² := (1 − θ_0)/θ_0²`.
    pub fn inv_theta_prev_sq(&mut self, i: usize) -> f64 {
        let theta0 = self.theta0();
        if i == 0 {
            (1.0 - theta0) / (theta0 * theta0)
        } else {
            let th = self.theta(i - 1);
            1.0 / (th * th)
        }
    }

    /// Direct evaluation of `ξ_k = Σ_i γ_k^i/θ_{i−1}²` from the stored rows.
    pub fn xi(&mut self, k: usize) -> f64 {
        let mut sum = 0.0;
        for i in 0..=k {
            sum += self.rows[k][i] * self.inv_theta_prev_sq(i);
        }
        sum
    }
}

/// The history-weighted center of the restart point, evaluated literally:
/// the normalized sum of `γ_k^i/θ_{i−1}²`-weighted iterates with the final
/// iterate carrying weight `1/(θ_0θ_{k−1}) − (1−θ_0)/θ_0²`.
pub fn naive_center(history: &[Vec<f64>], table: &mut GammaTable) -> Result<Vec<f64>, OracleError> {
    if history.len() < 2 {
        return Err(OracleError::HistoryTooShort(history.len()));
    }
    let k = history.len() - 1;
    let theta0 = table.theta0();
    let n = history[0].len();
    let mut acc = vec![0.0; n];
    let mut denom = 0.0;
    for (i, iterate) in history.iter().take(k).enumerate() {
        let coeff = table.row(k)[i] * table.inv_theta_prev_sq(i);
        denom += coeff;
        for (slot, &value) in acc.iter_mut().zip(iterate.iter()) {
            *slot += coeff * value;
        }
    }
    let theta_last = table.theta(k - 1);
    let last_coeff = 1.0 / (theta0 * theta_last) - (1.0 - theta0) / (theta0 * theta0);
    denom += last_coeff;
    for (slot, &value) in acc.iter_mut().zip(history[k].iter()) {
        *slot += last_coeff * value;
    }
    for slot in acc.iter_mut() {
        *slot /= denom;
    }
    Ok(acc)
}

/// Central finite differences of the smooth part only.
pub fn fd_gradient(problem: &CompositeProblem, x: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = problem.smooth_value(&probe);
        probe[i] = x[i] - step;
        let down = problem.smooth_value(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}
