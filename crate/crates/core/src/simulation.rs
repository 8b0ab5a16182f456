//! Monte-Carlo problem generator and evaluation metrics.
//!
//! Problems follow a Gaussian linear model `y = x'b0 + sigma*eps` with an
//! equicorrelated design (everywhere, or only within the active block) and
//! sparse coefficients drawn as `(-1)^u (a + |z|)` with `a = 5 log(n)/sqrt(n)`.
//! The noise scale is calibrated to a requested signal-to-noise ratio
//! `snr = b0' Sigma b0 / sigma^2`. Metrics are reported relative to the
//! irreducible error, so a perfect model scores 1.
//!
//! Generation is a pure function of the config: train rows, test rows,
//! coefficients, and noise each draw from their own stream keyed by
//! `(seed, role)`, so enabling or reordering one consumer never perturbs
//! another.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psgd::Constraints;
use crate::rng::{self, role};
use crate::tuning::{cross_validate, fit, FitOptions, FittedModel, TuningError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    /// Cannot occur for rho in [0, 1); asserted defensively.
    #[error("correlation matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Correlation layout of the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    /// Equicorrelated: every pair of predictors has correlation rho.
    One,
    /// Block: only the active predictors (the first p0) are correlated.
    Two,
}

impl TryFrom<u8> for Scenario {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Scenario::One),
            2 => Ok(Scenario::Two),
            other => Err(format!("scenario must be 1 or 2, got {other}")),
        }
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        match s {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

/// Design of one Monte-Carlo configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub p: usize,
    pub n: usize,
    /// Test-set size.
    pub m: usize,
    /// Proportion of active predictors, in (0, 1].
    pub zeta: f64,
    /// Correlation, in [0, 1).
    pub rho: f64,
    /// Signal-to-noise ratio, positive.
    pub snr: f64,
    pub seed: u64,
}

impl SimulationConfig {
    /// Number of active predictors `floor(p * zeta)`.
    pub fn p0(&self) -> usize {
        (self.p as f64 * self.zeta).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.n < 2 || self.m < 1 || self.p < 1 {
            return Err(SimulationError::InvalidConfig(
                "need n >= 2, m >= 1, p >= 1".into(),
            ));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(SimulationError::InvalidConfig(format!(
                "zeta must lie in (0, 1], got {}",
                self.zeta
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(SimulationError::InvalidConfig(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(self.snr > 0.0) {
            return Err(SimulationError::InvalidConfig(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        if self.p0() < 1 {
            return Err(SimulationError::InvalidConfig(
                "floor(p * zeta) must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One generated train/test problem with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub x_train: Array2<f64>,
    pub y_train: Array1<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array1<f64>,
    pub beta_true: Array1<f64>,
    pub sigma: f64,
    pub active_set: Vec<usize>,
}

/// Support-recovery and prediction metrics, all relative quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Ensemble test MSPE divided by the irreducible error sigma^2.
    pub mspe_rel: f64,
    /// None when the true support is empty (undefined denominator).
    pub recall: Option<f64>,
    /// None when the estimated ensemble support is empty.
    pub precision: Option<f64>,
    /// Mean per-model relative MSPE.
    pub mspe_bar: f64,
    /// Mean pairwise Pearson correlation of per-model test predictions.
    pub cor_bar: f64,
}

/// Lower Cholesky factor of the scenario correlation matrix.
fn correlation_cholesky(config: &SimulationConfig) -> Result<Array2<f64>, SimulationError> {
    let p = config.p;
    let p0 = config.p0();
    let rho = config.rho;
    let mut sigma = Array2::eye(p);
    match config.scenario {
        Scenario::One => {
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        sigma[[i, j]] = rho;
                    }
                }
            }
        }
        Scenario::Two => {
            for i in 0..p0 {
                for j in 0..p0 {
                    if i != j {
                        sigma[[i, j]] = rho;
                    }
                }
            }
        }
    }
    // In-place lower Cholesky.
    let mut l = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut acc = sigma[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(SimulationError::NotPositiveDefinite);
                }
                l[[i, j]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// `b' Sigma b` in closed form for the scenario correlation structure.
fn quadratic_form(config: &SimulationConfig, beta: &Array1<f64>) -> f64 {
    let rho = config.rho;
    let norm_sq: f64 = beta.iter().map(|b| b * b).sum();
    match config.scenario {
        Scenario::One => {
            let total: f64 = beta.sum();
            (1.0 - rho) * norm_sq + rho * total * total
        }
        Scenario::Two => {
            let p0 = config.p0();
            let block_sum: f64 = beta.iter().take(p0).sum();
            let block_norm_sq: f64 = beta.iter().take(p0).map(|b| b * b).sum();
            norm_sq + rho * (block_sum * block_sum - block_norm_sq)
        }
    }
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, tag: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, &[tag]);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
}

/// Draws the sparse coefficient vector: the first `p0` coordinates are
/// active with values `(-1)^u (a + |z|)`, `u ~ Bernoulli(0.2)`,
/// `z ~ N(0, 1)`, and `a = 5 log(n) / sqrt(n)`.
pub fn draw_coefficients(config: &SimulationConfig) -> Array1<f64> {
    let p0 = config.p0();
    let a = 5.0 * (config.n as f64).ln() / (config.n as f64).sqrt();
    let mut r = rng::stream(config.seed, &[role::COEF]);
    let mut beta = Array1::zeros(config.p);
    for j in 0..p0 {
        let negative: bool = r.random::<f64>() < 0.2;
        let z: f64 = StandardNormal.sample(&mut r);
        let magnitude = a + z.abs();
        beta[j] = if negative { -magnitude } else { magnitude };
    }
    beta
}

/// Generates one problem from the config, drawing the coefficients from the
/// config's coefficient stream.
pub fn generate(config: &SimulationConfig) -> Result<GeneratedProblem, SimulationError> {
    config.validate()?;
    let beta = draw_coefficients(config);
    generate_with_beta(config, beta)
}

/// Generates one problem with externally supplied coefficients (the fixed
/// coefficient mode; also used to force specific signals in tests). The
/// noise scale is still calibrated to the configured SNR.
pub fn generate_with_beta(
    config: &SimulationConfig,
    beta_true: Array1<f64>,
) -> Result<GeneratedProblem, SimulationError> {
    config.validate()?;
    if beta_true.len() != config.p {
        return Err(SimulationError::InvalidConfig(format!(
            "coefficient vector has {} entries, expected p = {}",
            beta_true.len(),
            config.p
        )));
    }
    let chol = correlation_cholesky(config)?;
    let z_train = gaussian_matrix(config.n, config.p, config.seed, role::TRAIN_X);
    let z_test = gaussian_matrix(config.m, config.p, config.seed, role::TEST_X);
    let x_train = z_train.dot(&chol.t());
    let x_test = z_test.dot(&chol.t());

    let signal = quadratic_form(config, &beta_true);
    let sigma = (signal / config.snr).sqrt();

    // One noise stream: the n train draws first, then the m test draws.
    let mut noise = rng::stream(config.seed, &[role::NOISE]);
    let eps_train = Array1::from_shape_fn(config.n, |_| -> f64 { StandardNormal.sample(&mut noise) });
    let eps_test = Array1::from_shape_fn(config.m, |_| -> f64 { StandardNormal.sample(&mut noise) });

    let y_train = x_train.dot(&beta_true) + &(eps_train * sigma);
    let y_test = x_test.dot(&beta_true) + &(eps_test * sigma);
    let active_set: Vec<usize> = beta_true
        .iter()
        .enumerate()
        .filter_map(|(j, &b)| (b != 0.0).then_some(j))
        .collect();

    Ok(GeneratedProblem {
        x_train,
        y_train,
        x_test,
        y_test,
        beta_true,
        sigma,
        active_set,
    })
}

/// Pearson correlation with deterministic conventions for degenerate pairs:
/// bitwise-equal vectors correlate at exactly 1, and a constant vector
/// paired with a non-constant one scores 0.
fn pairwise_correlation(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    if a == b {
        return 1.0;
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

fn mean_sq_error(truth: &Array1<f64>, pred: &Array1<f64>) -> f64 {
    truth
        .iter()
        .zip(pred.iter())
        .map(|(&t, &p)| (t - p) * (t - p))
        .sum::<f64>()
        / truth.len() as f64
}

/// Evaluates a fitted model on a generated problem: relative ensemble and
/// per-model MSPEs, support recovery of the averaged coefficients, and the
/// mean pairwise correlation of per-model predictions.
pub fn evaluate(
    model: &FittedModel,
    problem: &GeneratedProblem,
) -> Result<MetricsReport, TuningError> {
    let per_model = model.predict_per_model(problem.x_test.view())?;
    let groups = model.groups();
    let sigma_sq = problem.sigma * problem.sigma;

    let ensemble_pred = per_model.sum_axis(Axis(1)) / groups as f64;
    let mspe_rel = mean_sq_error(&problem.y_test, &ensemble_pred) / sigma_sq;

    let mspe_bar = (0..groups)
        .map(|g| mean_sq_error(&problem.y_test, &per_model.column(g).to_owned()) / sigma_sq)
        .sum::<f64>()
        / groups as f64;

    let mut cor_sum = 0.0;
    let mut pairs = 0usize;
    for g in 0..groups {
        for h in g + 1..groups {
            cor_sum += pairwise_correlation(per_model.column(g), per_model.column(h));
            pairs += 1;
        }
    }
    let cor_bar = if pairs > 0 { cor_sum / pairs as f64 } else { 1.0 };

    let true_active: Vec<bool> = problem.beta_true.iter().map(|&b| b != 0.0).collect();
    let est_active: Vec<bool> = model.ensemble_beta.iter().map(|&b| b != 0.0).collect();
    let hits = true_active
        .iter()
        .zip(est_active.iter())
        .filter(|(&t, &e)| t && e)
        .count();
    let n_true = true_active.iter().filter(|&&t| t).count();
    let n_est = est_active.iter().filter(|&&e| e).count();
    let recall = (n_true > 0).then(|| hits as f64 / n_true as f64);
    let precision = (n_est > 0).then(|| hits as f64 / n_est as f64);

    Ok(MetricsReport {
        mspe_rel,
        recall,
        precision,
        mspe_bar,
        cor_bar,
    })
}

/// Relative test MSPE of the ground-truth coefficients: the oracle floor,
/// which concentrates near 1 for large test sets.
pub fn evaluate_true_model(problem: &GeneratedProblem) -> f64 {
    let pred = problem.x_test.dot(&problem.beta_true);
    mean_sq_error(&problem.y_test, &pred) / (problem.sigma * problem.sigma)
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error(transparent)]
    Constraints(#[from] crate::psgd::ConstraintsError),
}

/// How each replication is fitted.
#[derive(Debug, Clone)]
pub enum StudyMethod {
    /// Direct fit at a fixed `(t, u)`; `u` is clamped to the group count.
    Fixed { t: usize, u: usize },
    /// Tuned fit; `u` grid entries above the group count are dropped.
    CrossValidated {
        t_grid: Vec<usize>,
        u_grid: Vec<usize>,
        folds: usize,
    },
}

/// One study result row: the configuration, the fitted budgets, the
/// evaluation metrics, and the wall-clock fitting time.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub rep: usize,
    pub scenario: u8,
    pub p: usize,
    pub n: usize,
    pub zeta: f64,
    pub rho: f64,
    pub snr: f64,
    pub groups: usize,
    pub t: usize,
    pub u: usize,
    pub metrics: MetricsReport,
    pub fit_seconds: f64,
}

/// Runs `reps` Monte-Carlo replications for every requested ensemble size.
///
/// Each `(rep, G)` cell derives its own streams from the config seed, so
/// cells are independent units of work: any execution order (or thread
/// count) produces the identical table. With `fixed_coefficients` the
/// coefficient vector is drawn once from the config's coefficient stream
/// and shared across replications.
pub fn run_study(
    config: &SimulationConfig,
    reps: usize,
    group_sizes: &[usize],
    method: &StudyMethod,
    opts: &FitOptions,
    fixed_coefficients: bool,
) -> Result<Vec<StudyRow>, StudyError> {
    config.validate()?;
    let shared_beta = fixed_coefficients.then(|| draw_coefficients(config));
    let cells: Vec<(usize, usize)> = (0..reps)
        .flat_map(|rep| group_sizes.iter().map(move |&g| (rep, g)))
        .collect();
    let rows: Vec<Result<StudyRow, StudyError>> = cells
        .par_iter()
        .map(|&(rep, groups)| {
            let rep_cfg = SimulationConfig {
                seed: rng::derive_seed(config.seed, &[role::REPLICATION, rep as u64]),
                ..config.clone()
            };
            let problem = match &shared_beta {
                Some(beta) => generate_with_beta(&rep_cfg, beta.clone())?,
                None => generate(&rep_cfg)?,
            };
            let fit_opts = FitOptions {
                seed: rng::derive_seed(config.seed, &[role::REPLICATION, rep as u64, groups as u64]),
                ..opts.clone()
            };
            let started = Instant::now();
            let (model, t_used, u_used) = match method {
                StudyMethod::Fixed { t, u } => {
                    let u_eff = (*u).min(groups).max(1);
                    let constraints = Constraints::new(groups, *t, u_eff, config.p)?;
                    let model = fit(
                        problem.x_train.view(),
                        problem.y_train.view(),
                        &constraints,
                        &fit_opts,
                    )?;
                    (model, *t, u_eff)
                }
                StudyMethod::CrossValidated {
                    t_grid,
                    u_grid,
                    folds,
                } => {
                    let u_grid_g: Vec<usize> =
                        u_grid.iter().copied().filter(|&u| u <= groups).collect();
                    let model = cross_validate(
                        problem.x_train.view(),
                        problem.y_train.view(),
                        groups,
                        t_grid,
                        &u_grid_g,
                        *folds,
                        &fit_opts,
                    )?;
                    let (t_sel, u_sel) = model.cv.as_ref().expect("cv ran").selected;
                    (model, t_sel, u_sel)
                }
            };
            let fit_seconds = started.elapsed().as_secs_f64();
            let metrics = evaluate(&model, &problem)?;
            Ok(StudyRow {
                rep,
                scenario: config.scenario.into(),
                p: config.p,
                n: config.n,
                zeta: config.zeta,
                rho: config.rho,
                snr: config.snr,
                groups,
                t: t_used,
                u: u_used,
                metrics,
                fit_seconds,
            })
        })
        .collect();
    rows.into_iter().collect()
}
