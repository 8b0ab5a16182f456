//! Best Split Selection (BSpS): ensembles of sparse, diverse linear models.
//!
//! BSpS fits `G` linear models simultaneously by minimizing the sum of their
//! squared-error losses subject to two l0 constraints: each model may use at
//! most `t` predictors, and each predictor may appear in at most `u` of the
//! models (optionally a per-predictor budget `u_j`). The ensemble prediction
//! is the plain average of the individual model predictions, so it stays a
//! sparse, interpretable linear model while the diversity constraint keeps
//! the models complementary.
//!
//! The crate provides:
//!
//! - [`numerics`]: standardization, spectral-norm bounds, minimum-norm least
//!   squares — the dense kernels everything else builds on.
//! - [`stepwise`]: a greedy multi-model forward-selection initializer that
//!   allocates predictors to disjoint models gated by nested-model F-tests,
//!   followed by per-model cross-validated Lasso refits.
//! - [`psgd`]: the projected subsets gradient descent solver for fixed
//!   `(t, u)`, cycling over models with restricted least-squares refits and
//!   an optional permutation-based local search.
//! - [`tuning`]: decrementing-diversity warm starts over `u = 1..G`, the
//!   k-fold cross-validation driver over `(t, u)` grids, prediction, and
//!   importance-set extraction, plus model JSON serialization.
//! - [`combinatorics`]: exact subset/split counters and an exhaustive
//!   brute-force solver for small instances, used as ground truth.
//! - [`simulation`]: a Monte-Carlo problem generator and the evaluation
//!   metrics (relative MSPE, recall/precision, per-model diagnostics).

pub mod combinatorics;
pub mod numerics;
pub mod psgd;
pub mod rng;
pub mod simulation;
pub mod stepwise;
pub mod tuning;

pub use combinatorics::{count_splits, count_subsets, exhaustive_bsps, BigCount, OracleError};
pub use numerics::{standardize, NumericsError, StandardizedDataset, Standardization};
pub use psgd::{
    allowed_set, pgd_model, project_subset, psgd_fit, Constraints, ConstraintsError, PsgdError,
    PsgdOptions, SplitEnsemble,
};
pub use simulation::{
    evaluate, generate, run_study, GeneratedProblem, MetricsReport, Scenario, SimulationConfig,
    SimulationError, StudyMethod, StudyRow,
};
pub use stepwise::{
    best_candidate, f_test_pvalue, step_split_fit, step_split_reg, ModelState, StepwiseError,
    StepwiseFit,
};
pub use tuning::{
    cross_validate, decrementing_psgd, importance_sets, CvReport, FitOptions, FittedModel,
    TuningError,
};
