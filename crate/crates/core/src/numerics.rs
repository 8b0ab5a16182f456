//! Dense numerical kernels shared by the solvers: standardization,
//! spectral-norm bounds for gradient Lipschitz constants, and minimum-norm
//! least squares.
//!
//! All routines are pure functions on immutable inputs and are safe to call
//! concurrently. Scaling follows the 1/n (population) convention throughout
//! so that downstream quantities (spectral norms, Lasso lambda grids) are on
//! the same scale as the standardized data.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

/// Errors from the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    /// A design column has (numerically) zero variance; the caller must drop it.
    #[error("column {index} is constant; drop it before fitting")]
    ConstantColumn { index: usize },
    /// The response has (numerically) zero variance.
    #[error("response is constant")]
    ConstantResponse,
    /// Power iteration failed to reach the relative tolerance.
    #[error("power iteration did not converge within {max_iters} iterations")]
    NoConvergence { max_iters: usize },
}

/// The rescaling statistics recorded by [`standardize`], kept so that fits on
/// the standardized scale can be mapped back to raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub col_means: Array1<f64>,
    pub col_scales: Array1<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Standardization {
    pub fn p(&self) -> usize {
        self.col_means.len()
    }

    /// Applies the stored column statistics to new raw rows.
    pub fn standardize_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for j in 0..self.p() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            out.column_mut(j).mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    /// Maps standardized-scale predictions back to the raw response scale.
    pub fn unstandardize_y(&self, y_std: ArrayView1<f64>) -> Array1<f64> {
        y_std.mapv(|v| v * self.y_scale + self.y_mean)
    }
}

/// A centered and scaled regression dataset.
///
/// Every column of `x_std` and the response `y_std` have zero mean and unit
/// second moment under the 1/n convention, so the intercept can be omitted
/// from all model fits.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    pub x_std: Array2<f64>,
    pub y_std: Array1<f64>,
    pub col_means: Array1<f64>,
    pub col_scales: Array1<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl StandardizedDataset {
    pub fn n(&self) -> usize {
        self.x_std.nrows()
    }

    pub fn p(&self) -> usize {
        self.x_std.ncols()
    }

    pub fn stats(&self) -> Standardization {
        Standardization {
            col_means: self.col_means.clone(),
            col_scales: self.col_scales.clone(),
            y_mean: self.y_mean,
            y_scale: self.y_scale,
        }
    }
}

/// Columns are considered constant when their population standard deviation
/// falls below this relative threshold.
const CONSTANT_TOL: f64 = 1e-12;

/// Centers and scales the design matrix and response to zero mean and unit
/// second moment (1/n convention), recording the statistics for inversion.
pub fn standardize(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<StandardizedDataset, NumericsError> {
    let n = x.nrows();
    let p = x.ncols();
    assert_eq!(n, y.len(), "design matrix and response lengths differ");
    assert!(n >= 1, "empty dataset");
    let nf = n as f64;

    let mut col_means = Array1::zeros(p);
    let mut col_scales = Array1::zeros(p);
    let mut x_std = x.to_owned();
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / nf;
        let var = col.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / nf;
        let scale = var.sqrt();
        if scale <= CONSTANT_TOL * (1.0 + mean.abs()) {
            return Err(NumericsError::ConstantColumn { index: j });
        }
        col_means[j] = mean;
        col_scales[j] = scale;
        x_std.column_mut(j).mapv_inplace(|v| (v - mean) / scale);
    }

    let y_mean = y.sum() / nf;
    let y_var = y.fold(0.0, |acc, &v| acc + (v - y_mean) * (v - y_mean)) / nf;
    let y_scale = y_var.sqrt();
    if y_scale <= CONSTANT_TOL * (1.0 + y_mean.abs()) {
        return Err(NumericsError::ConstantResponse);
    }
    let y_std = y.mapv(|v| (v - y_mean) / y_scale);

    Ok(StandardizedDataset {
        x_std,
        y_std,
        col_means,
        col_scales,
        y_mean,
        y_scale,
    })
}

/// Copies the columns of `x` indexed by `idx` into a dense submatrix.
pub fn gather_columns(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), idx.len()));
    for (pos, &j) in idx.iter().enumerate() {
        out.column_mut(pos).assign(&x.column(j));
    }
    out
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-8;
/// Safety inflation so the returned bound dominates the true constant even
/// when power iteration stops just short of the top eigenvalue.
const POWER_INFLATION: f64 = 1.01;

/// Upper bound on the gradient Lipschitz constant `2 * ||X'X||_2` of the
/// squared-error loss restricted to the columns of `x_sub`.
///
/// The spectral norm is estimated by power iteration on the Gram matrix to
/// relative tolerance 1e-8, starting deterministically from the all-ones
/// vector, and inflated by 1.01.
pub fn gradient_lipschitz_bound(x_sub: ArrayView2<f64>) -> Result<f64, NumericsError> {
    let k = x_sub.ncols();
    assert!(k >= 1, "empty submatrix");
    assert!(x_sub.nrows() >= 1, "empty submatrix");

    let mut v = Array1::from_elem(k, 1.0 / (k as f64).sqrt());
    let mut lambda_prev = f64::NEG_INFINITY;
    let mut restarted = false;
    for _ in 0..POWER_MAX_ITERS {
        let xv = x_sub.dot(&v);
        let lambda = xv.dot(&xv);
        let w = x_sub.t().dot(&xv);
        let w_norm = w.dot(&w).sqrt();
        if w_norm == 0.0 {
            if restarted {
                // Zero Gram matrix: the loss gradient is constant.
                return Ok(0.0);
            }
            // The all-ones start lies in the nullspace (e.g. exactly
            // anti-correlated column pairs); restart from a tilted vector.
            restarted = true;
            v = Array1::from_shape_fn(k, |i| 1.0 + (i as f64 + 1.0) * 1e-4);
            let norm = v.dot(&v).sqrt();
            v /= norm;
            lambda_prev = f64::NEG_INFINITY;
            continue;
        }
        if (lambda - lambda_prev).abs() <= POWER_REL_TOL * lambda.max(f64::MIN_POSITIVE) {
            return Ok(2.0 * POWER_INFLATION * lambda);
        }
        lambda_prev = lambda;
        v = w / w_norm;
    }
    Err(NumericsError::NoConvergence {
        max_iters: POWER_MAX_ITERS,
    })
}

/// One Householder reflector `H = I - tau * u u'` with `u[0] = 1` chosen so
/// that `H x = (beta, 0, ..., 0)`. Returns `(tau, beta, u_tail)`.
fn householder(x: &[f64]) -> (f64, f64, Vec<f64>) {
    let alpha = x[0];
    let tail_norm_sq: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail_norm_sq == 0.0 {
        return (0.0, alpha, vec![0.0; x.len() - 1]);
    }
    let norm = (alpha * alpha + tail_norm_sq).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    let u_tail: Vec<f64> = x[1..].iter().map(|v| v * scale).collect();
    (tau, beta, u_tail)
}

/// Minimum-Euclidean-norm minimizer of `||y - x_sub * beta||^2`.
///
/// Uses Householder QR with column pivoting to expose the numerical rank,
/// followed by a complete orthogonal decomposition so that rank-deficient
/// systems (duplicated predictors, supports close to n) yield the
/// minimum-norm solution rather than an arbitrary basic one.
pub fn min_norm_least_squares(x_sub: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let n = x_sub.nrows();
    let k = x_sub.ncols();
    assert!(k >= 1, "empty submatrix");
    assert_eq!(n, y.len(), "matrix and response lengths differ");

    let mut r = x_sub.to_owned();
    let mut qty = y.to_owned();
    let mut perm: Vec<usize> = (0..k).collect();
    let steps = n.min(k);

    // Householder QR with column pivoting; reflectors are applied to y on
    // the fly so Q never needs to be formed.
    let mut rank = 0;
    for j in 0..steps {
        // Pivot on the largest residual column norm (ties: lowest index).
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..k {
            let norm_sq: f64 = (j..n).map(|i| r[[i, c]] * r[[i, c]]).sum();
            if norm_sq > best_norm {
                best_norm = norm_sq;
                best = c;
            }
        }
        if best != j {
            perm.swap(j, best);
            for i in 0..n {
                let tmp = r[[i, j]];
                r[[i, j]] = r[[i, best]];
                r[[i, best]] = tmp;
            }
        }

        let col: Vec<f64> = (j..n).map(|i| r[[i, j]]).collect();
        let (tau, beta, u_tail) = householder(&col);
        r[[j, j]] = beta;
        for i in j + 1..n {
            r[[i, j]] = 0.0;
        }
        if tau != 0.0 {
            // Apply H to the remaining columns and to y.
            for c in j + 1..k {
                let mut dot = r[[j, c]];
                for (off, u) in u_tail.iter().enumerate() {
                    dot += u * r[[j + 1 + off, c]];
                }
                let f = tau * dot;
                r[[j, c]] -= f;
                for (off, u) in u_tail.iter().enumerate() {
                    r[[j + 1 + off, c]] -= f * u;
                }
            }
            let mut dot = qty[j];
            for (off, u) in u_tail.iter().enumerate() {
                dot += u * qty[j + 1 + off];
            }
            let f = tau * dot;
            qty[j] -= f;
            for (off, u) in u_tail.iter().enumerate() {
                qty[j + 1 + off] -= f * u;
            }
        }
        rank = j + 1;
    }

    // Numerical rank from the pivoted diagonal.
    let r00 = r[[0, 0]].abs();
    let rank_tol = f64::EPSILON * (n.max(k) as f64) * r00;
    let mut numerical_rank = 0;
    for j in 0..rank {
        if r[[j, j]].abs() > rank_tol {
            numerical_rank = j + 1;
        } else {
            break;
        }
    }
    if numerical_rank == 0 {
        return Array1::zeros(k);
    }
    let nr = numerical_rank;

    // Complete orthogonal decomposition: annihilate the trailing block
    // [R11 R12] -> [T 0] with reflectors acting on columns {i} U {nr..k},
    // processed bottom row first.
    let mut z_reflectors: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    if nr < k {
        for i in (0..nr).rev() {
            let mut vec = Vec::with_capacity(1 + k - nr);
            vec.push(r[[i, i]]);
            for c in nr..k {
                vec.push(r[[i, c]]);
            }
            let (tau, beta, u_tail) = householder(&vec);
            r[[i, i]] = beta;
            for c in nr..k {
                r[[i, c]] = 0.0;
            }
            if tau != 0.0 {
                // Update the rows above in the touched columns.
                for m in 0..i {
                    let mut dot = r[[m, i]];
                    for (off, u) in u_tail.iter().enumerate() {
                        dot += u * r[[m, nr + off]];
                    }
                    let f = tau * dot;
                    r[[m, i]] -= f;
                    for (off, u) in u_tail.iter().enumerate() {
                        r[[m, nr + off]] -= f * u;
                    }
                }
            }
            z_reflectors.push((i, tau, u_tail));
        }
    }

    // Back-substitute T w1 = c1.
    let mut w = vec![0.0; k];
    for i in (0..nr).rev() {
        let mut acc = qty[i];
        for c in i + 1..nr {
            acc -= r[[i, c]] * w[c];
        }
        w[i] = acc / r[[i, i]];
    }

    // z = Z' w: apply the reflectors in reverse recording order.
    for &(i, tau, ref u_tail) in z_reflectors.iter().rev() {
        if tau == 0.0 {
            continue;
        }
        let mut dot = w[i];
        for (off, u) in u_tail.iter().enumerate() {
            dot += u * w[nr + off];
        }
        let f = tau * dot;
        w[i] -= f;
        for (off, u) in u_tail.iter().enumerate() {
            w[nr + off] -= f * u;
        }
    }

    // Undo the column permutation.
    let mut beta = Array1::zeros(k);
    for (pos, &orig) in perm.iter().enumerate() {
        beta[orig] = w[pos];
    }
    beta
}
