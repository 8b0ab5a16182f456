//! Tuning pipeline: decrementing-diversity warm starts, the k-fold
//! cross-validation driver over `(t, u)` grids, prediction, and
//! importance-set extraction.
//!
//! Solving proceeds from the fully diverse case upward: `u = 1` is
//! initialized by the stepwise allocator and refined by PSGD, and each
//! subsequent diversity level warm-starts from the previous solution. Since
//! the feasible sets nest, the objective is non-increasing in `u`, and one
//! chain prices an entire grid of `u` candidates.

mod serialize;

pub use serialize::{model_from_json, model_to_json};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::{standardize, NumericsError, Standardization, StandardizedDataset};
use crate::psgd::{psgd_fit, Constraints, ConstraintsError, PsgdError, PsgdOptions, SplitEnsemble};
use crate::rng;
use crate::stepwise::{step_split_reg, StepwiseError};

#[derive(Debug, Error)]
pub enum TuningError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Stepwise(#[from] StepwiseError),
    #[error(transparent)]
    Psgd(#[from] PsgdError),
    #[error(transparent)]
    Constraints(#[from] ConstraintsError),
    #[error("training fold {fold} has n_train={n_train}, too small for t={t}")]
    FoldTooSmall { fold: usize, n_train: usize, t: usize },
    #[error("expected {expected} predictor columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("model JSON error: {0}")]
    Json(String),
}

/// Knobs shared by the fitting pipeline. All randomized behavior below the
/// entry points derives from `seed`.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Significance threshold for the stepwise initializer.
    pub gamma: f64,
    /// Convergence tolerance for the PSGD solver.
    pub epsilon: f64,
    /// Random-permutation local searches per PSGD solve (0 disables).
    pub searches: usize,
    /// Folds for the initializer's internal Lasso CV.
    pub lasso_folds: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            epsilon: 1e-6,
            searches: 0,
            lasso_folds: 5,
            seed: 0,
        }
    }
}

/// Cross-validation summary over the `(t, u)` grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CvReport {
    /// Grid pairs in evaluation order (t-major, then u).
    pub grid: Vec<(usize, usize)>,
    /// Per-pair validation MSPEs, one entry per fold.
    pub fold_mspe: Vec<Vec<f64>>,
    /// Per-pair mean validation MSPE.
    pub mean_mspe: Vec<f64>,
    /// The winning `(t, u)` pair.
    pub selected: (usize, usize),
    pub folds: usize,
    pub seed: u64,
}

/// A complete fitted pipeline: the ensemble, its averaged coefficients,
/// the training standardization, and the CV report when tuning ran.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub ensemble: SplitEnsemble,
    /// `(1/G) * sum_g beta^g`, on the standardized scale.
    pub ensemble_beta: Array1<f64>,
    pub standardization: Standardization,
    pub cv: Option<CvReport>,
}

impl FittedModel {
    fn from_ensemble(ensemble: SplitEnsemble, standardization: Standardization) -> Self {
        let ensemble_beta = ensemble.ensemble_beta();
        Self {
            ensemble,
            ensemble_beta,
            standardization,
            cv: None,
        }
    }

    pub fn p(&self) -> usize {
        self.ensemble.p()
    }

    pub fn groups(&self) -> usize {
        self.ensemble.groups()
    }

    /// Per-model predictions on the raw response scale, one column per model.
    pub fn predict_per_model(&self, x_new: ArrayView2<f64>) -> Result<Array2<f64>, TuningError> {
        if x_new.ncols() != self.p() {
            return Err(TuningError::DimensionMismatch {
                expected: self.p(),
                got: x_new.ncols(),
            });
        }
        let x_std = self.standardization.standardize_x(x_new);
        let mut out = Array2::zeros((x_new.nrows(), self.groups()));
        for g in 0..self.groups() {
            let pred_std = x_std.dot(&self.ensemble.beta.column(g));
            out.column_mut(g)
                .assign(&self.standardization.unstandardize_y(pred_std.view()));
        }
        Ok(out)
    }

    /// Ensemble predictions: exactly the row-mean of the per-model
    /// predictions, so averaging and predicting commute bit for bit.
    pub fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>, TuningError> {
        let per_model = self.predict_per_model(x_new)?;
        let g = self.groups() as f64;
        Ok(per_model.sum_axis(Axis(1)) / g)
    }
}

/// The chain of constraint levels walked by the warm-start schedule: level
/// `l` caps every predictor budget at `min(l, u_j)`. For a scalar budget
/// `u` this is exactly `u = 1, 2, ..` up to the target.
fn level_constraints(target: &Constraints, level: usize) -> Constraints {
    let capped: Vec<usize> = target
        .diversity()
        .iter()
        .map(|&u| u.min(level))
        .collect();
    Constraints::with_per_predictor(target.groups(), target.sparsity(), capped)
        .expect("capped budgets remain valid")
}

/// Runs the decrementing-diversity schedule against `target`: the level-1
/// solution is initialized by the stepwise allocator and refined by PSGD,
/// then each level warm-starts from the previous one. Returns one ensemble
/// per level, `1..=max(u_j)`.
fn chain_levels(
    data: &StandardizedDataset,
    target: &Constraints,
    opts: &FitOptions,
) -> Result<Vec<SplitEnsemble>, TuningError> {
    target.validate_for(data.n(), data.p())?;
    assert!(target.groups() >= 2, "the pipeline requires G >= 2");
    let max_level = target.diversity().iter().copied().max().unwrap_or(0).max(1);

    let init_beta = step_split_reg(
        data,
        target.groups(),
        opts.gamma,
        opts.lasso_folds,
        opts.seed,
    )?;

    let mut levels = Vec::with_capacity(max_level);
    for level in 1..=max_level {
        let constraints = level_constraints(target, level);
        let psgd_opts = PsgdOptions {
            epsilon: opts.epsilon,
            searches: opts.searches,
            seed: rng::derive_seed(opts.seed, &[rng::role::PSGD_PERMUTATION, level as u64]),
        };
        let init = match levels.last() {
            Some(prev) => psgd_fit(data, prev, &constraints, &psgd_opts)?,
            None => {
                let start = SplitEnsemble::from_beta(init_beta.clone(), constraints.clone(), data);
                psgd_fit(data, &start, &constraints, &psgd_opts)?
            }
        };
        levels.push(init);
    }
    Ok(levels)
}

/// The decrementing-diversity solver: returns the solution for every scalar
/// diversity level `u = 1..=G`, each warm-started from the previous level.
/// Index `u - 1` holds the level-`u` ensemble.
pub fn decrementing_psgd(
    data: &StandardizedDataset,
    groups: usize,
    t: usize,
    opts: &FitOptions,
) -> Result<Vec<SplitEnsemble>, TuningError> {
    let target = Constraints::new(groups, t, groups, data.p())?;
    chain_levels(data, &target, opts)
}

/// Fits raw data at fixed constraints by running the warm-start chain up to
/// the target diversity.
pub fn fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    constraints: &Constraints,
    opts: &FitOptions,
) -> Result<FittedModel, TuningError> {
    let data = standardize(x, y)?;
    let levels = chain_levels(&data, constraints, opts)?;
    let ensemble = levels.into_iter().last().expect("chain has >= 1 level");
    Ok(FittedModel::from_ensemble(ensemble, data.stats()))
}

/// Near-equal fold assignment from a seeded shuffle: `fold_of[row]` for
/// every row, fold sizes differing by at most one.
fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let order = rng::shuffled_indices(n, seed, &[rng::role::CV_FOLDS]);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }
    fold_of
}

/// Selects the grid index minimizing mean MSPE; ties prefer smaller `t`,
/// then smaller `u`.
fn select_best(grid: &[(usize, usize)], mean_mspe: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..grid.len() {
        let better = mean_mspe[i] < mean_mspe[best]
            || (mean_mspe[i] == mean_mspe[best]
                && (grid[i].0 < grid[best].0
                    || (grid[i].0 == grid[best].0 && grid[i].1 < grid[best].1)));
        if better {
            best = i;
        }
    }
    best
}

/// 5-fold-style cross-validation over the `(t, u)` grid.
///
/// Rows are partitioned by a seeded shuffle. Each `(fold, t)` cell runs one
/// decrementing-diversity chain on the training part, pricing every `u` in
/// the grid via warm starts; validation MSPE is computed on the held-out
/// rows on the raw response scale using training-fold statistics only. The
/// final model refits on all rows by the same chain up to the selected `u`.
/// Cells are independent and may run in parallel; per-cell seeds derive from
/// `(seed, fold, t)` so the report is identical at any thread count.
pub fn cross_validate(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    groups: usize,
    t_grid: &[usize],
    u_grid: &[usize],
    folds: usize,
    opts: &FitOptions,
) -> Result<FittedModel, TuningError> {
    let n = x.nrows();
    if t_grid.is_empty() || u_grid.is_empty() {
        return Err(TuningError::InvalidGrid("empty t or u grid".into()));
    }
    if folds < 2 || folds > n {
        return Err(TuningError::InvalidGrid(format!(
            "folds must lie in 2..=n, got {folds} with n={n}"
        )));
    }
    for &u in u_grid {
        if u < 1 || u > groups {
            return Err(TuningError::InvalidGrid(format!(
                "u={u} outside 1..=G for G={groups}"
            )));
        }
    }
    let max_u = *u_grid.iter().max().expect("non-empty u grid");

    let fold_of = fold_assignment(n, folds, opts.seed);
    let mut fold_sizes = vec![0usize; folds];
    for &f in &fold_of {
        fold_sizes[f] += 1;
    }
    for (fold, &size) in fold_sizes.iter().enumerate() {
        let n_train = n - size;
        for &t in t_grid {
            if n_train <= t + 2 {
                return Err(TuningError::FoldTooSmall { fold, n_train, t });
            }
        }
    }

    // Independent (fold, t) cells, reduced in deterministic grid order.
    let cells: Vec<(usize, usize)> = (0..folds)
        .flat_map(|fold| t_grid.iter().map(move |&t| (fold, t)))
        .collect();
    let cell_results: Vec<Result<Vec<f64>, TuningError>> = cells
        .par_iter()
        .map(|&(fold, t)| {
            let train_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let val_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let x_tr = x.select(Axis(0), &train_rows);
            let y_tr = y.select(Axis(0), &train_rows);
            let train_std = standardize(x_tr.view(), y_tr.view())?;
            let cell_opts = FitOptions {
                seed: rng::derive_seed(opts.seed, &[rng::role::CV_CELL, fold as u64, t as u64]),
                ..opts.clone()
            };
            let target = Constraints::new(groups, t, max_u, x.ncols())?;
            let chain = chain_levels(&train_std, &target, &cell_opts)?;
            let x_val = x.select(Axis(0), &val_rows);
            let y_val = y.select(Axis(0), &val_rows);
            let stats = train_std.stats();
            let mspes: Vec<f64> = u_grid
                .iter()
                .map(|&u| {
                    let ensemble = &chain[u - 1];
                    let model =
                        FittedModel::from_ensemble(ensemble.clone(), stats.clone());
                    let pred = model
                        .predict(x_val.view())
                        .expect("validation dimensions match");
                    y_val
                        .iter()
                        .zip(pred.iter())
                        .map(|(&yv, &pv)| (yv - pv) * (yv - pv))
                        .sum::<f64>()
                        / val_rows.len() as f64
                })
                .collect();
            Ok(mspes)
        })
        .collect();

    let grid: Vec<(usize, usize)> = t_grid
        .iter()
        .flat_map(|&t| u_grid.iter().map(move |&u| (t, u)))
        .collect();
    let mut fold_mspe: Vec<Vec<f64>> = vec![vec![0.0; folds]; grid.len()];
    for (cell_idx, result) in cell_results.into_iter().enumerate() {
        let (fold, t) = cells[cell_idx];
        let mspes = result?;
        let t_idx = t_grid.iter().position(|&tv| tv == t).expect("t in grid");
        for (u_idx, &mspe) in mspes.iter().enumerate() {
            fold_mspe[t_idx * u_grid.len() + u_idx][fold] = mspe;
        }
    }
    let mean_mspe: Vec<f64> = fold_mspe
        .iter()
        .map(|per_fold| per_fold.iter().sum::<f64>() / folds as f64)
        .collect();

    let best = select_best(&grid, &mean_mspe);
    let (t_sel, u_sel) = grid[best];

    // Final refit on all rows, reusing the warm-start chain up to u_sel.
    let data = standardize(x, y)?;
    let final_opts = FitOptions {
        seed: rng::derive_seed(opts.seed, &[rng::role::CV_FINAL, t_sel as u64]),
        ..opts.clone()
    };
    let target = Constraints::new(groups, t_sel, u_sel, x.ncols())?;
    let chain = chain_levels(&data, &target, &final_opts)?;
    let ensemble = chain.into_iter().last().expect("chain has >= 1 level");
    let mut model = FittedModel::from_ensemble(ensemble, data.stats());
    model.cv = Some(CvReport {
        grid,
        fold_mspe,
        mean_mspe,
        selected: (t_sel, u_sel),
        folds,
        seed: opts.seed,
    });
    Ok(model)
}

/// Importance sets `A_k = { j : predictor j appears in at least k supports }`
/// for `k = 1..=G`; nested by construction.
pub fn importance_sets(ensemble: &SplitEnsemble) -> Vec<Vec<usize>> {
    let counts = ensemble.usage_counts();
    (1..=ensemble.groups())
        .map(|k| {
            (0..ensemble.p())
                .filter(|&j| counts[j] >= k)
                .collect::<Vec<usize>>()
        })
        .collect()
}
