//! Composite objectives `F = f + ψ` with the oracles the solvers need.
//!
//! A problem bundles a smooth data-fitting term backed by a sparse design
//! matrix, a separable regularizer with a closed-form one-dimensional
//! proximal map, and two step-weight vectors: the coordinatewise one used by
//! coordinate descent and a scalar Lipschitz bound used by the full-gradient
//! methods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("design matrix has no rows or no columns")]
    EmptyDesign,
    #[error("column {0} of the design matrix is identically zero")]
    ZeroColumn(usize),
    #[error("vector lengths differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("label vector must have one entry per row: {labels} labels for {rows} rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("infinity norm of A^T b is zero; the label/design pair is degenerate")]
    DegenerateLabels,
    #[error("row index {row} out of range for {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
}

/// Sparse design matrix in compressed-column form, together with the target
/// vector `b`. Column access is proportional to the nonzeros of the column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDesign {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    b: Vec<f64>,
}

impl SparseDesign {
    /// Builds the compressed-column form from unsorted triplets.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: &[(usize, usize, f64)],
        b: Vec<f64>,
    ) -> Result<Self, ProblemError> {
        if rows == 0 || cols == 0 {
            return Err(ProblemError::EmptyDesign);
        }
        if b.len() != rows {
            return Err(ProblemError::LabelMismatch {
                labels: b.len(),
                rows,
            });
        }
        let mut counts = vec![0usize; cols];
        for &(r, c, _) in entries {
            if r >= rows {
                return Err(ProblemError::RowOutOfRange { row: r, rows });
            }
            if c >= cols {
                return Err(ProblemError::RowOutOfRange { row: c, rows: cols });
            }
            counts[c] += 1;
        }
        let mut col_ptr = vec![0usize; cols + 1];
        for c in 0..cols {
            col_ptr[c + 1] = col_ptr[c] + counts[c];
        }
        let nnz = col_ptr[cols];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut cursor = col_ptr.clone();
        for &(r, c, v) in entries {
            row_idx[cursor[c]] = r;
            values[cursor[c]] = v;
            cursor[c] += 1;
        }
        // keep rows sorted inside each column for reproducible iteration
        for c in 0..cols {
            let span = col_ptr[c]..col_ptr[c + 1];
            let mut paired: Vec<(usize, f64)> = row_idx[span.clone()]
                .iter()
                .copied()
                .zip(values[span.clone()].iter().copied())
                .collect();
            paired.sort_unstable_by_key(|&(r, _)| r);
            for (offset, (r, v)) in paired.into_iter().enumerate() {
                row_idx[col_ptr[c] + offset] = r;
                values[col_ptr[c] + offset] = v;
            }
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
            b,
        })
    }

    /// Identity-like design: `A = I`, useful for separable test objectives.
    pub fn identity(b: Vec<f64>) -> Result<Self, ProblemError> {
        let n = b.len();
        let entries: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &entries, b)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[span.clone()], &self.values[span])
    }

    pub fn column_norm_sq(&self, j: usize) -> f64 {
        let (_, vals) = self.column(j);
        vals.iter().map(|v| v * v).sum()
    }

    /// `u = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.column(j);
            for (&r, &v) in rows.iter().zip(vals) {
                u[r] += v * xj;
            }
        }
        u
    }

    /// `A^T u`, one entry per column.
    pub fn t_matvec(&self, u: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).map(|(&r, &v)| v * u[r]).sum()
            })
            .collect()
    }

    /// `‖A^T b‖_∞`.
    pub fn inf_norm_at_b(&self) -> f64 {
        self.t_matvec(&self.b)
            .into_iter()
            .fold(0.0f64, |acc, g| acc.max(g.abs()))
    }

    /// Number of stored entries in each row.
    pub fn row_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.rows];
        for &r in &self.row_idx {
            counts[r] += 1;
        }
        counts
    }

    /// Largest eigenvalue of `A^T A` by power iteration: 200 rounds or a
    /// relative change below 1e-9, whichever comes first.
    pub fn spectral_norm_sq(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xE50);
        let mut x: Vec<f64> = (0..self.cols).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut lambda = 0.0f64;
        for _ in 0..200 {
            let u = self.matvec(&x);
            let y = self.t_matvec(&u);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let done = (next - lambda).abs() <= 1e-9 * next.abs();
            lambda = next;
            let inv = 1.0 / norm;
            x = y.into_iter().map(|v| v * inv).collect();
            if done {
                break;
            }
        }
        lambda
    }
}

/// `‖x‖_v² = Σ v_i x_i²`.
pub fn weighted_norm_sq(x: &[f64], v: &[f64]) -> Result<f64, ProblemError> {
    if x.len() != v.len() {
        return Err(ProblemError::DimensionMismatch {
            left: x.len(),
            right: v.len(),
        });
    }
    Ok(x.iter().zip(v).map(|(&xi, &vi)| vi * xi * xi).sum())
}

/// Separable regularizer `ψ(x) = Σ_i ψ^i(x^i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `ψ = 0`.
    Zero,
    /// `ψ(x) = weight·‖x‖_1`.
    L1 { weight: f64 },
    /// `ψ(x) = l1·‖x‖_1 + (l2/2)·‖x‖²`.
    ElasticNet { l1: f64, l2: f64 },
}

impl Regularizer {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::ElasticNet { l1, l2 } => {
                l1 * x.iter().map(|v| v.abs()).sum::<f64>()
                    + 0.5 * l2 * x.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    fn l2(&self) -> f64 {
        match *self {
            Regularizer::ElasticNet { l2, .. } => l2,
            _ => 0.0,
        }
    }
}

fn soft_threshold(t: f64, threshold: f64) -> f64 {
    if t > threshold {
        t - threshold
    } else if t < -threshold {
        t + threshold
    } else {
        0.0
    }
}

/// High-accuracy optimum attached to a problem for gap reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
enum SmoothPart {
    /// `f(x) = ½‖Ax − b‖²`.
    LeastSquares,
    /// `f(x) = scale · Σ_j log(1 + exp(b_j · (Ax)_j))`.
    Logistic { scale: f64 },
}

/// Row `r`'s contribution to the coordinatewise curvature bound of the
/// column containing entry `v`.
fn curvature_contribution(smooth: &SmoothPart, design: &SparseDesign, r: usize, v: f64) -> f64 {
    match smooth {
        SmoothPart::LeastSquares => v * v,
        SmoothPart::Logistic { scale } => {
            let t = design.b()[r] * v;
            scale / 4.0 * t * t
        }
    }
}

/// A composite objective with its design, regularizer and step weights.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    design: SparseDesign,
    smooth: SmoothPart,
    regularizer: Regularizer,
    v_coordinate: Vec<f64>,
    v_gradient: Vec<f64>,
    reference: Option<Reference>,
}

/// The regularization weight used throughout the experiments:
/// `‖A^T b‖_∞ / 10`.
pub fn lasso_default_weight(design: &SparseDesign) -> f64 {
    design.inf_norm_at_b() / 10.0
}

/// `½‖Ax − b‖² + reg_weight·‖x‖_1`.
pub fn lasso_problem(
    design: SparseDesign,
    reg_weight: f64,
) -> Result<CompositeProblem, ProblemError> {
    elastic_lasso_problem(design, reg_weight, 0.0)
}

/// `½‖Ax − b‖² + l1·‖x‖_1 + (l2/2)‖x‖²`; `l2 > 0` makes the objective
/// strongly convex with certificate `l2 / max_i v_i`.
pub fn elastic_lasso_problem(
    design: SparseDesign,
    l1: f64,
    l2: f64,
) -> Result<CompositeProblem, ProblemError> {
    if l1.is_nan() || l1 <= 0.0 {
        return Err(ProblemError::NonPositive {
            name: "l1",
            value: l1,
        });
    }
    if l2.is_nan() || l2 < 0.0 {
        return Err(ProblemError::Negative {
            name: "l2",
            value: l2,
        });
    }
    let regularizer = if l2 == 0.0 {
        Regularizer::L1 { weight: l1 }
    } else {
        Regularizer::ElasticNet { l1, l2 }
    };
    CompositeProblem::build(design, SmoothPart::LeastSquares, regularizer)
}

/// Unregularized smooth objective `½‖Ax − b‖²`, for baseline tests.
pub fn quadratic_problem(design: SparseDesign) -> Result<CompositeProblem, ProblemError> {
    CompositeProblem::build(design, SmoothPart::LeastSquares, Regularizer::Zero)
}

/// Regularized logistic regression:
/// `f(x) = λ₁/(2‖A^Tb‖_∞) Σ_j log(1 + exp(b_j a_j^T x))`,
/// `ψ(x) = ‖x‖_1 + (λ₂/2)‖x‖²`.
pub fn logistic_problem(
    design: SparseDesign,
    lambda1: f64,
    lambda2: f64,
) -> Result<CompositeProblem, ProblemError> {
    if lambda1.is_nan() || lambda1 <= 0.0 {
        return Err(ProblemError::NonPositive {
            name: "lambda1",
            value: lambda1,
        });
    }
    if lambda2.is_nan() || lambda2 < 0.0 {
        return Err(ProblemError::Negative {
            name: "lambda2",
            value: lambda2,
        });
    }
    let norm = design.inf_norm_at_b();
    if norm == 0.0 {
        return Err(ProblemError::DegenerateLabels);
    }
    let scale = lambda1 / (2.0 * norm);
    CompositeProblem::build(
        design,
        SmoothPart::Logistic { scale },
        Regularizer::ElasticNet {
            l1: 1.0,
            l2: lambda2,
        },
    )
}

impl CompositeProblem {
    fn build(
        design: SparseDesign,
        smooth: SmoothPart,
        regularizer: Regularizer,
    ) -> Result<Self, ProblemError> {
        if design.rows() == 0 || design.cols() == 0 {
            return Err(ProblemError::EmptyDesign);
        }
        let v_coordinate: Vec<f64> = (0..design.cols())
            .map(|j| {
                let (rows, vals) = design.column(j);
                rows.iter()
                    .zip(vals)
                    .map(|(&r, &v)| curvature_contribution(&smooth, &design, r, v))
                    .sum()
            })
            .collect();
        if let Some(j) = v_coordinate.iter().position(|&v| v <= 0.0) {
            return Err(ProblemError::ZeroColumn(j));
        }
        let spectral = design.spectral_norm_sq();
        let lipschitz = match smooth {
            SmoothPart::LeastSquares => spectral,
            SmoothPart::Logistic { scale } => scale / 2.0 * spectral,
        };
        let v_gradient = vec![lipschitz; design.cols()];
        Ok(Self {
            design,
            smooth,
            regularizer,
            v_coordinate,
            v_gradient,
            reference: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    pub fn design(&self) -> &SparseDesign {
        &self.design
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// Coordinatewise step weights (one per column).
    pub fn v_coordinate(&self) -> &[f64] {
        &self.v_coordinate
    }

    /// Scalar Lipschitz weights for the full-gradient methods.
    pub fn v_gradient(&self) -> &[f64] {
        &self.v_gradient
    }

    /// Step weights admissible for a uniform sampling of expected size
    /// `tau`: the serial weights at `tau = 1`, the gradient Lipschitz
    /// weights at `tau = n`, and in between the row-overlap blend
    /// `v_i = Σ_j (1 + (ω_j − 1)(τ − 1)/(n − 1))·c_{ji}` where `ω_j` counts
    /// the nonzeros of row `j` and `c_{ji}` is the row's curvature
    /// contribution.
    pub fn v_for_tau(&self, tau: usize) -> Vec<f64> {
        let n = self.dim();
        if tau >= n {
            return self.v_gradient.clone();
        }
        if tau <= 1 {
            return self.v_coordinate.clone();
        }
        let omega = self.design.row_nnz();
        let blend = (tau - 1) as f64 / (n - 1) as f64;
        (0..n)
            .map(|j| {
                let (rows, vals) = self.design.column(j);
                rows.iter()
                    .zip(vals)
                    .map(|(&r, &v)| {
                        (1.0 + (omega[r] as f64 - 1.0) * blend)
                            * curvature_contribution(&self.smooth, &self.design, r, v)
                    })
                    .sum()
            })
            .collect()
    }

    /// Strong-convexity certificate with respect to `‖·‖_v`: `l2 / max_i v_i`.
    pub fn mu_f(&self, weights: &[f64]) -> f64 {
        let l2 = self.regularizer.l2();
        if l2 == 0.0 {
            return 0.0;
        }
        let max = weights.iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 {
            l2 / max
        } else {
            0.0
        }
    }

    pub fn reference(&self) -> Option<&Reference> {
        self.reference.as_ref()
    }

    pub fn set_reference(&mut self, reference: Reference) -> Result<(), ProblemError> {
        if reference.x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                left: reference.x.len(),
                right: self.dim(),
            });
        }
        self.reference = Some(reference);
        Ok(())
    }

    /// Row products `u = A x`, the cacheable part of every oracle.
    pub fn row_products(&self, x: &[f64]) -> Vec<f64> {
        self.design.matvec(x)
    }

    /// Adds `delta · A_{:,j}` to a row-product cache.
    pub fn update_products(&self, products: &mut [f64], j: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        let (rows, vals) = self.design.column(j);
        for (&r, &v) in rows.iter().zip(vals) {
            products[r] += v * delta;
        }
    }

    fn residual(&self, row: usize, u: f64) -> f64 {
        match self.smooth {
            SmoothPart::LeastSquares => u - self.design.b()[row],
            SmoothPart::Logistic { scale } => {
                let b = self.design.b()[row];
                let t = b * u;
                scale * b / (1.0 + (-t).exp())
            }
        }
    }

    /// `f` evaluated from cached row products.
    pub fn smooth_value_from_products(&self, products: &[f64]) -> f64 {
        match self.smooth {
            SmoothPart::LeastSquares => {
                0.5 * products
                    .iter()
                    .zip(self.design.b())
                    .map(|(&u, &b)| (u - b) * (u - b))
                    .sum::<f64>()
            }
            SmoothPart::Logistic { scale } => {
                scale
                    * products
                        .iter()
                        .zip(self.design.b())
                        .map(|(&u, &b)| {
                            let t = b * u;
                            if t > 0.0 {
                                t + (-t).exp().ln_1p()
                            } else {
                                t.exp().ln_1p()
                            }
                        })
                        .sum::<f64>()
            }
        }
    }

    pub fn smooth_value(&self, x: &[f64]) -> f64 {
        self.smooth_value_from_products(&self.row_products(x))
    }

    pub fn psi_value(&self, x: &[f64]) -> f64 {
        self.regularizer.value(x)
    }

    /// `F(x) = f(x) + ψ(x)`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.smooth_value(x) + self.psi_value(x)
    }

    /// Objective gap against the stored reference, if any.
    pub fn gap(&self, x: &[f64]) -> Option<f64> {
        self.reference
            .as_ref()
            .map(|r| self.objective_value(x) - r.objective)
    }

    /// Full gradient of the smooth part.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let products = self.row_products(x);
        self.gradient_from_products(&products)
    }

    pub fn gradient_from_products(&self, products: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.partial_from_products(products, j))
            .collect()
    }

    /// `∇_i f(x)` recomputed from scratch.
    pub fn partial_derivative(&self, x: &[f64], i: usize) -> f64 {
        self.partial_from_products(&self.row_products(x), i)
    }

    /// `∇_i f` from a row-product cache; touches only the column's nonzeros.
    pub fn partial_from_products(&self, products: &[f64], i: usize) -> f64 {
        let (rows, vals) = self.design.column(i);
        rows.iter()
            .zip(vals)
            .map(|(&r, &v)| v * self.residual(r, products[r]))
            .sum()
    }

    /// `∇_i f` at the point whose row products are `base + factor·extra`.
    pub fn partial_from_blended_products(
        &self,
        base: &[f64],
        extra: &[f64],
        factor: f64,
        i: usize,
    ) -> f64 {
        let (rows, vals) = self.design.column(i);
        rows.iter()
            .zip(vals)
            .map(|(&r, &v)| v * self.residual(r, base[r] + factor * extra[r]))
            .sum()
    }

    /// The unique minimizer of `g·z + (weight/2)(z − center)² + ψ^i(z)`.
    pub fn prox_coordinate(
        &self,
        i: usize,
        g: f64,
        center: f64,
        weight: f64,
    ) -> Result<f64, ProblemError> {
        if i >= self.dim() {
            return Err(ProblemError::RowOutOfRange {
                row: i,
                rows: self.dim(),
            });
        }
        if weight.is_nan() || weight <= 0.0 {
            return Err(ProblemError::NonPositive {
                name: "weight",
                value: weight,
            });
        }
        Ok(self.prox_1d(g, center, weight))
    }

    /// Closed-form coordinate prox; `weight` must be positive.
    #[inline]
    pub(crate) fn prox_1d(&self, g: f64, center: f64, weight: f64) -> f64 {
        match self.regularizer {
            Regularizer::Zero => center - g / weight,
            Regularizer::L1 { weight: l1 } => soft_threshold(center - g / weight, l1 / weight),
            Regularizer::ElasticNet { l1, l2 } => {
                soft_threshold((weight * center - g) / (weight + l2), l1 / (weight + l2))
            }
        }
    }
}
