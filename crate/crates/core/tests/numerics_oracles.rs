//! Oracle checks for the dense kernels: the power-iteration bound against
//! independent eigensolvers, and minimum-norm least squares against a
//! normal-equations solve.

use bsps::numerics::{gather_columns, gradient_lipschitz_bound, min_norm_least_squares, standardize};
use bsps::rng;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

/// Largest eigenvalue of a symmetric 3x3 matrix via the trigonometric
/// solution of the characteristic polynomial.
fn max_eigenvalue_3x3(a: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), (3, 3));
    let p1 = a[[0, 1]] * a[[0, 1]] + a[[0, 2]] * a[[0, 2]] + a[[1, 2]] * a[[1, 2]];
    if p1 == 0.0 {
        return a[[0, 0]].max(a[[1, 1]]).max(a[[2, 2]]);
    }
    let q = (a[[0, 0]] + a[[1, 1]] + a[[2, 2]]) / 3.0;
    let p2 = (a[[0, 0]] - q).powi(2) + (a[[1, 1]] - q).powi(2) + (a[[2, 2]] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = a.clone();
    for i in 0..3 {
        b[[i, i]] -= q;
    }
    b.mapv_inplace(|v| v / p);
    let det_b = b[[0, 0]] * (b[[1, 1]] * b[[2, 2]] - b[[1, 2]] * b[[2, 1]])
        - b[[0, 1]] * (b[[1, 0]] * b[[2, 2]] - b[[1, 2]] * b[[2, 0]])
        + b[[0, 2]] * (b[[1, 0]] * b[[2, 1]] - b[[1, 1]] * b[[2, 0]]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * phi.cos()
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let k = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for i in 0..k {
                    let mpi = m[[p, i]];
                    let mqi = m[[q, i]];
                    m[[p, i]] = c * mpi - s * mqi;
                    m[[q, i]] = s * mpi + c * mqi;
                }
            }
        }
    }
    (0..k).map(|i| m[[i, i]]).collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let k = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if pivot != col {
            for c in 0..k {
                let tmp = m[[col, c]];
                m[[col, c]] = m[[pivot, c]];
                m[[pivot, c]] = tmp;
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..k {
            let f = m[[row, col]] / m[[col, col]];
            for c in col..k {
                m[[row, c]] -= f * m[[col, c]];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = Array1::zeros(k);
    for row in (0..k).rev() {
        let mut acc = rhs[row];
        for c in row + 1..k {
            acc -= m[[row, c]] * x[c];
        }
        x[row] = acc / m[[row, row]];
    }
    x
}

fn random_matrix(n: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, &[101]);
    Array2::from_shape_fn((n, k), |_| r.random::<f64>() * 2.0 - 1.0)
}

#[test]
fn lipschitz_matches_characteristic_polynomial_oracle() {
    for seed in 0..20 {
        let x = random_matrix(5, 3, seed);
        let gram = x.t().dot(&x);
        let expected = 2.0 * 1.01 * max_eigenvalue_3x3(&gram);
        let bound = gradient_lipschitz_bound(x.view()).unwrap();
        let rel = (bound - expected).abs() / expected;
        assert!(rel < 1e-6, "seed {seed}: bound {bound} vs oracle {expected}");
    }
}

#[test]
fn lipschitz_dominates_the_jacobi_oracle() {
    for seed in 0..50 {
        let n = 4 + (seed as usize % 10);
        let k = 1 + (seed as usize % 6);
        let x = random_matrix(n, k, 1000 + seed);
        let gram = x.t().dot(&x);
        let lambda_max = jacobi_eigenvalues(&gram)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = gradient_lipschitz_bound(x.view()).unwrap();
        assert!(
            bound >= 2.0 * lambda_max * (1.0 - 1e-9),
            "seed {seed}: bound {bound} below 2*lambda_max {}",
            2.0 * lambda_max
        );
    }
}

#[test]
fn min_norm_matches_normal_equations_on_well_conditioned_data() {
    for seed in 0..20 {
        let x = random_matrix(20, 4, 2000 + seed);
        let mut r = rng::stream(seed, &[55]);
        let y = Array1::from_shape_fn(20, |_| r.random::<f64>() * 2.0 - 1.0);
        let beta = min_norm_least_squares(x.view(), y.view());
        let gram = x.t().dot(&x);
        let rhs = x.t().dot(&y);
        let oracle = gauss_solve(&gram, &rhs);
        for j in 0..4 {
            assert!(
                (beta[j] - oracle[j]).abs() < 1e-8,
                "seed {seed}, coord {j}: {} vs {}",
                beta[j],
                oracle[j]
            );
        }
    }
}

#[test]
fn min_norm_residual_is_orthogonal_to_column_space() {
    for seed in 0..30 {
        let n = 12 + (seed as usize % 8);
        let k = 2 + (seed as usize % 5);
        let mut x = random_matrix(n, k, 3000 + seed);
        if seed % 3 == 0 && k >= 2 {
            // Force rank deficiency with a duplicated column.
            let col0 = x.column(0).to_owned();
            x.column_mut(k - 1).assign(&col0);
        }
        let mut r = rng::stream(seed, &[56]);
        let y = Array1::from_shape_fn(n, |_| r.random::<f64>() * 2.0 - 1.0);
        let beta = min_norm_least_squares(x.view(), y.view());
        let residual = &y - &x.dot(&beta);
        let y_norm = y.dot(&y).sqrt();
        for j in 0..k {
            let dot = x.column(j).dot(&residual).abs();
            assert!(
                dot <= 1e-8 * y_norm,
                "seed {seed}, col {j}: X'r = {dot} exceeds 1e-8 * ||y||"
            );
        }
    }
}

#[test]
fn min_norm_beats_any_other_least_squares_solution_in_norm() {
    // On a rank-deficient system, adding any null-space direction should not
    // shrink the norm.
    let x0 = random_matrix(10, 3, 77);
    let mut x = Array2::zeros((10, 4));
    for j in 0..3 {
        x.column_mut(j).assign(&x0.column(j));
    }
    let col1 = x0.column(1).to_owned();
    x.column_mut(3).assign(&col1); // duplicate: null direction (0,1,0,-1)
    let mut r = rng::stream(9, &[57]);
    let y = Array1::from_shape_fn(10, |_| r.random::<f64>() * 2.0 - 1.0);
    let beta = min_norm_least_squares(x.view(), y.view());
    let base = beta.dot(&beta);
    for &eps in &[-0.1, -0.01, 0.01, 0.1] {
        let mut shifted = beta.clone();
        shifted[1] += eps;
        shifted[3] -= eps;
        assert!(shifted.dot(&shifted) >= base - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_round_trips_the_raw_data(
        seed in 0u64..1000,
        n in 3usize..25,
        p in 1usize..6,
    ) {
        let x = random_matrix(n, p, 40_000 + seed);
        let mut r = rng::stream(seed, &[58]);
        let y = Array1::from_shape_fn(n, |_| r.random::<f64>() * 4.0 - 2.0);
        if let Ok(ds) = standardize(x.view(), y.view()) {
            for i in 0..n {
                for j in 0..p {
                    let back = ds.x_std[[i, j]] * ds.col_scales[j] + ds.col_means[j];
                    prop_assert!((back - x[[i, j]]).abs() <= 1e-10);
                }
                let back_y = ds.y_std[i] * ds.y_scale + ds.y_mean;
                prop_assert!((back_y - y[i]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn gather_columns_picks_the_requested_columns() {
    let x = random_matrix(6, 5, 123);
    let sub = gather_columns(x.view(), &[4, 0, 2]);
    for i in 0..6 {
        assert_eq!(sub[[i, 0]], x[[i, 4]]);
        assert_eq!(sub[[i, 1]], x[[i, 0]]);
        assert_eq!(sub[[i, 2]], x[[i, 2]]);
    }
}
