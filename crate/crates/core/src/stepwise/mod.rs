//! Greedy multi-model forward selection: the initializer that allocates
//! predictors to G disjoint models.
//!
//! All models start empty. Each round, every unsaturated model identifies
//! the pool predictor that most decreases its residual sum of squares and
//! the improvement is priced by the nested-model F-test; the model with the
//! smallest p-value (ties: lowest model index) claims its predictor, which
//! then leaves the global pool for good. A model saturates when it holds
//! n-1 predictors or its best remaining candidate fails the significance
//! threshold. A per-model cross-validated Lasso refit produces the final
//! initializer coefficients.
//!
//! Hat matrices are never materialized: each model keeps an incrementally
//! grown orthonormal basis of its selected columns, so projections cost
//! O(n |J|) per product.

mod lasso;

pub use lasso::{lambda_grid, lasso_coordinate_descent, lasso_cv, lasso_refit};

use ndarray::{Array1, Array2};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::numerics::StandardizedDataset;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepwiseError {
    /// Every remaining candidate lies (numerically) in the model's span.
    #[error("all candidate predictors are degenerate for this model")]
    AllCandidatesDegenerate,
    /// The nested F-test has no residual degrees of freedom.
    #[error("insufficient degrees of freedom: n={n}, model size={model_size}")]
    InsufficientDf { n: usize, model_size: usize },
}

/// Candidates whose residual variation falls at or below this absolute
/// threshold are treated as lying in the current column span.
const DEGENERATE_TOL: f64 = 1e-12;

/// One growing model: its ordered support, saturation flag, residual sum of
/// squares, and the orthonormal basis standing in for the hat matrix.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Selected predictors in insertion order.
    pub support: Vec<usize>,
    pub saturated: bool,
    /// Current residual sum of squares `||(I - H) y||^2`.
    pub rss: f64,
    /// Orthonormal columns spanning the selected predictors.
    basis: Vec<Array1<f64>>,
    /// Cached residual `(I - H) y`.
    residual: Array1<f64>,
}

impl ModelState {
    pub fn new(data: &StandardizedDataset) -> Self {
        let residual = data.y_std.clone();
        let rss = residual.dot(&residual);
        Self {
            support: Vec::new(),
            saturated: false,
            rss,
            basis: Vec::new(),
            residual,
        }
    }

    /// Component of `v` orthogonal to the selected columns, reorthogonalized
    /// once for stability.
    fn orthogonal_component(&self, v: &Array1<f64>) -> Array1<f64> {
        let mut d = v.clone();
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&d);
                d.scaled_add(-c, q);
            }
        }
        d
    }

    /// Adds predictor `j`, growing the basis and updating the residual.
    /// Returns the realized decrease in residual sum of squares.
    pub fn add_predictor(&mut self, j: usize, data: &StandardizedDataset) -> f64 {
        let x_j = data.x_std.column(j).to_owned();
        let mut d = self.orthogonal_component(&x_j);
        let norm = d.dot(&d).sqrt();
        assert!(
            norm > 0.0,
            "degenerate predictor {j} slipped past the candidate screen"
        );
        d /= norm;
        let coef = d.dot(&self.residual);
        self.residual.scaled_add(-coef, &d);
        self.basis.push(d);
        self.support.push(j);
        let new_rss = self.residual.dot(&self.residual);
        let decrease = self.rss - new_rss;
        self.rss = new_rss;
        decrease
    }
}

/// Finds the candidate predictor maximizing the residual-sum-of-squares
/// decrease `(x_j' (I-H) y)^2 / (x_j' (I-H) x_j)` for the given model.
/// Ties resolve to the lowest index.
pub fn best_candidate(
    state: &ModelState,
    candidates: &[usize],
    data: &StandardizedDataset,
) -> Result<(usize, f64), StepwiseError> {
    assert!(!candidates.is_empty(), "candidate pool is empty");
    assert!(!state.saturated, "model is saturated");
    let mut best: Option<(usize, f64)> = None;
    for &j in candidates {
        let x_j = data.x_std.column(j).to_owned();
        let d = state.orthogonal_component(&x_j);
        let denom = d.dot(&d);
        if denom <= DEGENERATE_TOL {
            continue;
        }
        let numer = x_j.dot(&state.residual);
        let decrease = numer * numer / denom;
        match best {
            Some((_, best_decrease)) if decrease <= best_decrease => {}
            _ => best = Some((j, decrease)),
        }
    }
    best.ok_or(StepwiseError::AllCandidatesDegenerate)
}

/// The p-value of the standard nested-model F-test for adding one predictor
/// to a model of `model_size` predictors (intercept accounted for by the
/// centering), evaluated through the regularized incomplete beta function.
pub fn f_test_pvalue(
    rss_before: f64,
    rss_decrease: f64,
    n: usize,
    model_size: usize,
) -> Result<f64, StepwiseError> {
    assert!(rss_before > 0.0, "rss_before must be positive");
    if n <= model_size + 2 {
        return Err(StepwiseError::InsufficientDf { n, model_size });
    }
    let decrease = rss_decrease.clamp(0.0, rss_before);
    if decrease == 0.0 {
        return Ok(1.0);
    }
    let df2 = (n - model_size - 2) as f64;
    let rss_after = rss_before - decrease;
    if rss_after <= 0.0 {
        return Ok(0.0);
    }
    let f_stat = decrease / (rss_after / df2);
    // Survival function of F(1, df2) via I_{df2/(df2+F)}(df2/2, 1/2).
    Ok(beta_reg(df2 / 2.0, 0.5, df2 / (df2 + f_stat)))
}

/// One predictor addition, recorded for replay and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Addition {
    pub model: usize,
    pub predictor: usize,
    pub p_value: f64,
    pub rss_before: f64,
    pub rss_decrease: f64,
    pub size_before: usize,
    /// True when the addition was gated by the exhausted-df convention
    /// rather than a proper F-test (only possible at size n-2).
    pub df_exhausted: bool,
}

/// Output of the forward-selection pass.
#[derive(Debug, Clone)]
pub struct StepwiseFit {
    pub models: Vec<ModelState>,
    pub additions: Vec<Addition>,
}

/// Relative improvement required to pass the gate once the F-test runs out
/// of residual degrees of freedom (model size n-2, the last addition the
/// n-1 saturation cap permits).
const DF_EXHAUSTED_REL_TOL: f64 = 1e-10;

fn gate_pvalue(
    rss: f64,
    decrease: f64,
    n: usize,
    model_size: usize,
) -> (f64, bool) {
    match f_test_pvalue(rss, decrease, n, model_size) {
        Ok(p) => (p, false),
        Err(StepwiseError::InsufficientDf { .. }) => {
            // No residual df left: any real improvement passes, since a
            // model of n-1 predictors can interpolate the centered response.
            let passes = decrease > DF_EXHAUSTED_REL_TOL * rss.max(f64::MIN_POSITIVE);
            (if passes { 0.0 } else { 1.0 }, true)
        }
        Err(e) => unreachable!("unexpected gate error: {e}"),
    }
}

/// Runs the greedy disjoint allocation of predictors to `groups` models with
/// significance threshold `gamma`.
pub fn step_split_fit(
    data: &StandardizedDataset,
    groups: usize,
    gamma: f64,
) -> Result<StepwiseFit, StepwiseError> {
    assert!(groups >= 2, "need at least two models");
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    let n = data.n();
    let p = data.p();
    let mut pool: Vec<usize> = (0..p).collect();
    let mut models: Vec<ModelState> = (0..groups).map(|_| ModelState::new(data)).collect();
    let mut additions = Vec::new();

    loop {
        if pool.is_empty() {
            for state in models.iter_mut() {
                state.saturated = true;
            }
            break;
        }
        // Step 1.1: each unsaturated model proposes its best candidate.
        let mut proposals: Vec<(usize, usize, f64, f64, bool)> = Vec::new();
        for (g, state) in models.iter_mut().enumerate() {
            if state.saturated {
                continue;
            }
            match best_candidate(state, &pool, data) {
                Ok((j, decrease)) => {
                    let (p_value, df_exhausted) =
                        gate_pvalue(state.rss, decrease, n, state.support.len());
                    if p_value >= gamma {
                        state.saturated = true;
                    } else {
                        proposals.push((g, j, decrease, p_value, df_exhausted));
                    }
                }
                Err(StepwiseError::AllCandidatesDegenerate) => {
                    state.saturated = true;
                }
                Err(e) => return Err(e),
            }
        }
        // Step 1.2: smallest p-value wins; ties go to the lowest model index.
        let Some(&(g_star, j_star, decrease, p_value, df_exhausted)) = proposals
            .iter()
            .min_by(|a, b| a.3.total_cmp(&b.3).then(a.0.cmp(&b.0)))
        else {
            break;
        };
        // Step 1.3: update the winning model and retire the predictor.
        let state = &mut models[g_star];
        let size_before = state.support.len();
        let rss_before = state.rss;
        let realized = state.add_predictor(j_star, data);
        debug_assert!((realized - decrease).abs() <= 1e-8 * rss_before.max(1.0));
        pool.retain(|&j| j != j_star);
        additions.push(Addition {
            model: g_star,
            predictor: j_star,
            p_value,
            rss_before,
            rss_decrease: realized,
            size_before,
            df_exhausted,
        });
        if state.support.len() == n - 1 {
            state.saturated = true;
        }
        if models.iter().all(|m| m.saturated) {
            break;
        }
    }

    Ok(StepwiseFit { models, additions })
}

/// Full initializer: forward selection followed by a per-model Lasso refit
/// with fold assignments seeded per model. Returns the p x G coefficient
/// matrix; models with empty supports keep the zero vector.
pub fn step_split_reg(
    data: &StandardizedDataset,
    groups: usize,
    gamma: f64,
    folds: usize,
    seed: u64,
) -> Result<Array2<f64>, StepwiseError> {
    let fit = step_split_fit(data, groups, gamma)?;
    let mut beta = Array2::zeros((data.p(), groups));
    for (g, state) in fit.models.iter().enumerate() {
        if state.support.is_empty() {
            continue;
        }
        let model_seed = rng::derive_seed(seed, &[g as u64]);
        let coefs = lasso_refit(data, &state.support, folds, model_seed)?;
        for (pos, &j) in state.support.iter().enumerate() {
            beta[[j, g]] = coefs[pos];
        }
    }
    Ok(beta)
}
