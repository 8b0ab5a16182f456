//! Projected subsets gradient descent (PSGD) for fitting G sparse models
//! under per-model sparsity and per-predictor sharing constraints.
//!
//! For fixed budgets `(t, u)` the solver cycles over the models. Each model
//! first recomputes its allowed predictor set (those used by fewer than `u_j`
//! of the other models), then runs projected gradient descent with a step
//! size from the spectral-norm Lipschitz bound, and finally refits exactly on
//! the support found. Cycling stops when a full pass no longer decreases the
//! total objective. An optional local search reruns the cycle under random
//! model-order permutations and keeps strict improvements.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::numerics::{
    gather_columns, gradient_lipschitz_bound, min_norm_least_squares, NumericsError,
    StandardizedDataset,
};
use crate::rng;

/// Maximum projected-gradient iterations per model visit.
pub const PGD_MAX_ITERS: usize = 10_000;
/// Maximum full cycles over the models.
pub const MAX_CYCLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintsError {
    #[error("number of models must be at least 1, got {0}")]
    TooFewModels(usize),
    #[error("sparsity budget must satisfy 1 <= t <= min(n-1, p); got t={t}, n={n}, p={p}")]
    SparsityOutOfRange { t: usize, n: usize, p: usize },
    #[error("scalar diversity budget must satisfy 1 <= u <= G; got u={u}, G={groups}")]
    ScalarDiversityOutOfRange { u: usize, groups: usize },
    #[error("per-predictor budget u[{index}]={value} exceeds G={groups}")]
    DiversityOutOfRange {
        index: usize,
        value: usize,
        groups: usize,
    },
    #[error("diversity vector length {len} does not match p={p}")]
    DiversityLengthMismatch { len: usize, p: usize },
}

#[derive(Debug, Error)]
pub enum PsgdError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Constraints(#[from] ConstraintsError),
}

/// Sparsity and diversity budgets for a split ensemble.
///
/// `diversity[j]` is the maximum number of models that may share predictor
/// `j`; a scalar budget is broadcast to every predictor. `diversity[j] = 0`
/// permanently excludes the predictor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraints {
    groups: usize,
    sparsity: usize,
    diversity: Vec<usize>,
}

impl Constraints {
    /// Scalar diversity budget broadcast over `p` predictors.
    ///
    /// The ensemble pipeline works with `G >= 2`; `G = 1` is accepted so the
    /// brute-force oracle can express plain best subset selection.
    pub fn new(groups: usize, sparsity: usize, u: usize, p: usize) -> Result<Self, ConstraintsError> {
        if groups < 1 {
            return Err(ConstraintsError::TooFewModels(groups));
        }
        if u < 1 || u > groups {
            return Err(ConstraintsError::ScalarDiversityOutOfRange { u, groups });
        }
        Ok(Self {
            groups,
            sparsity,
            diversity: vec![u; p],
        })
    }

    /// Per-predictor diversity budgets (entries in `0..=G`).
    pub fn with_per_predictor(
        groups: usize,
        sparsity: usize,
        diversity: Vec<usize>,
    ) -> Result<Self, ConstraintsError> {
        if groups < 1 {
            return Err(ConstraintsError::TooFewModels(groups));
        }
        for (index, &value) in diversity.iter().enumerate() {
            if value > groups {
                return Err(ConstraintsError::DiversityOutOfRange {
                    index,
                    value,
                    groups,
                });
            }
        }
        Ok(Self {
            groups,
            sparsity,
            diversity,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn diversity(&self) -> &[usize] {
        &self.diversity
    }

    /// The common scalar budget, when all predictors share one.
    pub fn scalar_u(&self) -> Option<usize> {
        let first = *self.diversity.first()?;
        self.diversity.iter().all(|&u| u == first).then_some(first)
    }

    /// Checks the data-dependent part of the invariants.
    pub fn validate_for(&self, n: usize, p: usize) -> Result<(), ConstraintsError> {
        if self.diversity.len() != p {
            return Err(ConstraintsError::DiversityLengthMismatch {
                len: self.diversity.len(),
                p,
            });
        }
        let t_max = (n - 1).min(p);
        if self.sparsity < 1 || self.sparsity > t_max {
            return Err(ConstraintsError::SparsityOutOfRange {
                t: self.sparsity,
                n,
                p,
            });
        }
        Ok(())
    }
}

/// A fitted collection of G sparse coefficient vectors.
#[derive(Debug, Clone)]
pub struct SplitEnsemble {
    /// p x G coefficient matrix; column g holds model g.
    pub beta: Array2<f64>,
    /// Sorted nonzero indices per model, consistent with `beta`.
    pub supports: Vec<Vec<usize>>,
    pub constraints: Constraints,
    /// Sum over models of the squared-error losses.
    pub objective: f64,
    /// Total objective before the first cycle and after each cycle.
    pub trace: Vec<f64>,
    /// Total objective after every inner gradient iteration and every
    /// restricted refit, in execution order.
    pub inner_trace: Vec<f64>,
    /// Number of inner solves that hit the iteration cap (warning, not error).
    pub iteration_cap_hits: usize,
}

impl SplitEnsemble {
    /// Builds an ensemble from a coefficient matrix, deriving supports and
    /// recomputing the objective on `data`.
    pub fn from_beta(
        beta: Array2<f64>,
        constraints: Constraints,
        data: &StandardizedDataset,
    ) -> Self {
        let supports: Vec<Vec<usize>> = (0..beta.ncols())
            .map(|g| nonzero_indices(beta.column(g)))
            .collect();
        let objective = (0..beta.ncols())
            .map(|g| loss(data, beta.column(g)))
            .sum();
        Self {
            beta,
            supports,
            constraints,
            objective,
            trace: Vec::new(),
            inner_trace: Vec::new(),
            iteration_cap_hits: 0,
        }
    }

    /// The all-zero ensemble (feasible for any constraints).
    pub fn zeros(constraints: Constraints, data: &StandardizedDataset) -> Self {
        let beta = Array2::zeros((data.p(), constraints.groups()));
        Self::from_beta(beta, constraints, data)
    }

    pub fn p(&self) -> usize {
        self.beta.nrows()
    }

    pub fn groups(&self) -> usize {
        self.beta.ncols()
    }

    /// The averaged ensemble coefficients `(1/G) * sum_g beta^g`.
    pub fn ensemble_beta(&self) -> Array1<f64> {
        let g = self.groups() as f64;
        self.beta.sum_axis(ndarray::Axis(1)) / g
    }

    /// How many models use each predictor.
    pub fn usage_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.p()];
        for support in &self.supports {
            for &j in support {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Structural verification of the ensemble invariants: supports match
    /// nonzeros exactly, every budget holds, and the stored objective agrees
    /// with a recomputation on `data` to 1e-6 relative.
    pub fn check_constraints(&self, data: &StandardizedDataset) -> Result<(), String> {
        let t = self.constraints.sparsity();
        for (g, support) in self.supports.iter().enumerate() {
            let derived = nonzero_indices(self.beta.column(g));
            if *support != derived {
                return Err(format!("model {g}: stored support does not match nonzeros"));
            }
            if support.len() > t {
                return Err(format!(
                    "model {g}: support size {} exceeds t={t}",
                    support.len()
                ));
            }
        }
        for (j, (&used, &budget)) in self
            .usage_counts()
            .iter()
            .zip(self.constraints.diversity())
            .enumerate()
        {
            if used > budget {
                return Err(format!("predictor {j}: used by {used} models, budget {budget}"));
            }
        }
        let recomputed: f64 = (0..self.groups())
            .map(|g| loss(data, self.beta.column(g)))
            .sum();
        let denom = recomputed.abs().max(1.0);
        if (recomputed - self.objective).abs() > 1e-6 * denom {
            return Err(format!(
                "stored objective {} differs from recomputed {}",
                self.objective, recomputed
            ));
        }
        Ok(())
    }
}

/// Squared-error loss `||y - X beta||^2` on the standardized data.
pub fn loss(data: &StandardizedDataset, beta: ArrayView1<f64>) -> f64 {
    let fitted = data.x_std.dot(&beta);
    data.y_std
        .iter()
        .zip(fitted.iter())
        .map(|(&y, &f)| (y - f) * (y - f))
        .sum()
}

/// Gradient `2 X'(X beta - y)` of the squared-error loss.
pub fn loss_gradient(data: &StandardizedDataset, beta: ArrayView1<f64>) -> Array1<f64> {
    let residual = data.x_std.dot(&beta) - &data.y_std;
    2.0 * data.x_std.t().dot(&residual)
}

fn nonzero_indices(col: ArrayView1<f64>) -> Vec<usize> {
    col.iter()
        .enumerate()
        .filter_map(|(j, &v)| (v != 0.0).then_some(j))
        .collect()
}

/// Predictors still open to model `g`: those used by at most `u_j - 1` of
/// the other models. A budget of zero excludes the predictor outright.
pub fn allowed_set(supports: &[Vec<usize>], g: usize, diversity: &[usize]) -> Vec<usize> {
    assert!(g < supports.len(), "model index out of range");
    let p = diversity.len();
    let mut other_usage = vec![0usize; p];
    for (h, support) in supports.iter().enumerate() {
        if h == g {
            continue;
        }
        for &j in support {
            other_usage[j] += 1;
        }
    }
    (0..p)
        .filter(|&j| other_usage[j] + 1 <= diversity[j])
        .collect()
}

/// Keeps the `min(t, |S|)` entries of `v` largest in absolute value among
/// the indices in `s` (ties: lowest index) and zeroes everything else.
///
/// The output minimizes `||w - v||^2` over all `w` with at most `t` nonzeros
/// supported inside `s`.
pub fn project_subset(v: ArrayView1<f64>, s: &[usize], t: usize) -> Array1<f64> {
    assert!(t >= 1, "sparsity budget must be positive");
    let mut out = Array1::zeros(v.len());
    if s.is_empty() {
        return out;
    }
    let keep = t.min(s.len());
    let mut ranked: Vec<usize> = s.to_vec();
    ranked.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &j in &ranked[..keep] {
        out[j] = v[j];
    }
    out
}

/// Result of one projected-gradient solve.
#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub beta: Array1<f64>,
    /// Loss at the starting point and after every iteration.
    pub loss_trace: Vec<f64>,
    /// True when the iteration cap was reached before the epsilon criterion.
    pub hit_iteration_cap: bool,
}

/// Projected gradient descent for one model over the allowed set `s` with
/// sparsity budget `t`, stepping with the spectral Lipschitz bound and
/// stopping once the per-iteration loss decrease drops to `epsilon`.
pub fn pgd_model(
    beta_init: ArrayView1<f64>,
    s: &[usize],
    t: usize,
    data: &StandardizedDataset,
    epsilon: f64,
) -> Result<PgdOutcome, PsgdError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    if s.is_empty() {
        let beta = Array1::zeros(data.p());
        let l0 = loss(data, beta.view());
        return Ok(PgdOutcome {
            beta,
            loss_trace: vec![l0],
            hit_iteration_cap: false,
        });
    }
    let x_s = gather_columns(data.x_std.view(), s);
    let lipschitz = gradient_lipschitz_bound(x_s.view())?;
    Ok(pgd_core(beta_init, s, &x_s, lipschitz, t, data, epsilon))
}

/// Inner solve with a precomputed submatrix and Lipschitz bound. The init
/// must be supported inside `s`; `psgd_fit` guarantees this by repairing
/// warm starts first.
fn pgd_core(
    beta_init: ArrayView1<f64>,
    s: &[usize],
    x_s: &Array2<f64>,
    lipschitz: f64,
    t: usize,
    data: &StandardizedDataset,
    epsilon: f64,
) -> PgdOutcome {
    debug_assert!(
        beta_init
            .iter()
            .enumerate()
            .all(|(j, &v)| v == 0.0 || s.binary_search(&j).is_ok()),
        "initial support escapes the allowed set"
    );
    let k = s.len();
    let mut b = Array1::zeros(k);
    for (pos, &j) in s.iter().enumerate() {
        b[pos] = beta_init[j];
    }

    let mut residual = x_s.dot(&b) - &data.y_std;
    let mut current = residual.dot(&residual);
    let mut trace = vec![current];
    let mut hit_cap = true;
    let keep = t.min(k);

    for _ in 0..PGD_MAX_ITERS {
        if lipschitz == 0.0 {
            // Zero design block: the gradient vanishes, b is stationary.
            hit_cap = false;
            break;
        }
        let grad = x_s.t().dot(&residual) * 2.0;
        let step = &b - &(grad / lipschitz);
        // Subspace projection; positions map to ascending original indices,
        // so position order preserves the lowest-index tie rule.
        let mut ranked: Vec<usize> = (0..k).collect();
        ranked.sort_by(|&a, &c| step[c].abs().total_cmp(&step[a].abs()).then(a.cmp(&c)));
        let mut b_new = Array1::zeros(k);
        for &pos in &ranked[..keep] {
            b_new[pos] = step[pos];
        }
        let residual_new = x_s.dot(&b_new) - &data.y_std;
        let next = residual_new.dot(&residual_new);
        trace.push(next);
        let decrease = current - next;
        b = b_new;
        residual = residual_new;
        current = next;
        if decrease <= epsilon {
            hit_cap = false;
            break;
        }
    }

    let mut beta = Array1::zeros(data.p());
    for (pos, &j) in s.iter().enumerate() {
        beta[j] = b[pos];
    }
    PgdOutcome {
        beta,
        loss_trace: trace,
        hit_iteration_cap: hit_cap,
    }
}

/// Options for [`psgd_fit`].
#[derive(Debug, Clone)]
pub struct PsgdOptions {
    /// Convergence tolerance on loss decreases (standardized scale).
    pub epsilon: f64,
    /// Number of random-permutation local searches (0 disables them).
    pub searches: usize,
    /// Seed for the dedicated permutation stream; unused when `searches` is 0.
    pub seed: u64,
}

impl Default for PsgdOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            searches: 0,
            seed: 0,
        }
    }
}

struct CycleRun {
    beta: Array2<f64>,
    supports: Vec<Vec<usize>>,
    losses: Vec<f64>,
    trace: Vec<f64>,
    inner_trace: Vec<f64>,
    cap_hits: usize,
}

/// Fits the split ensemble by cyclic projected subset gradient descent.
///
/// Infeasible warm starts are first repaired by projecting each model onto
/// its own allowed set (magnitude-ranked, lowest-index ties). When
/// `options.searches > 0`, the cyclic solve is rerun from the repaired
/// initial solutions under random model-order permutations, keeping a new
/// solution only when it strictly improves the incumbent objective.
pub fn psgd_fit(
    data: &StandardizedDataset,
    init: &SplitEnsemble,
    constraints: &Constraints,
    options: &PsgdOptions,
) -> Result<SplitEnsemble, PsgdError> {
    let p = data.p();
    constraints.validate_for(data.n(), p)?;
    let groups = constraints.groups();
    assert_eq!(init.beta.nrows(), p, "init coefficient rows must equal p");
    assert_eq!(
        init.beta.ncols(),
        groups,
        "init coefficient columns must equal G"
    );
    let t = constraints.sparsity();

    // Feasibility repair in model order.
    let mut beta = init.beta.clone();
    let mut supports: Vec<Vec<usize>> = (0..groups)
        .map(|g| nonzero_indices(beta.column(g)))
        .collect();
    for g in 0..groups {
        let allowed = allowed_set(&supports, g, constraints.diversity());
        let repaired = if allowed.is_empty() {
            Array1::zeros(p)
        } else {
            project_subset(beta.column(g), &allowed, t)
        };
        supports[g] = nonzero_indices(repaired.view());
        beta.column_mut(g).assign(&repaired);
    }

    let mut lipschitz_cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let identity_order: Vec<usize> = (0..groups).collect();
    let first = run_cycles(
        data,
        beta.clone(),
        supports.clone(),
        constraints,
        options.epsilon,
        &identity_order,
        &mut lipschitz_cache,
    )?;

    let mut best = first;
    let mut total_cap_hits = best.cap_hits;
    if options.searches > 0 {
        let mut perm_rng = rng::stream(options.seed, &[rng::role::PSGD_PERMUTATION]);
        for _ in 0..options.searches {
            let mut order = identity_order.clone();
            order.shuffle(&mut perm_rng);
            let candidate = run_cycles(
                data,
                beta.clone(),
                supports.clone(),
                constraints,
                options.epsilon,
                &order,
                &mut lipschitz_cache,
            )?;
            total_cap_hits += candidate.cap_hits;
            let best_objective: f64 = best.losses.iter().sum();
            let cand_objective: f64 = candidate.losses.iter().sum();
            if cand_objective < best_objective {
                best = candidate;
            }
        }
    }

    let objective: f64 = best.losses.iter().sum();
    let fitted = SplitEnsemble {
        beta: best.beta,
        supports: best.supports,
        constraints: constraints.clone(),
        objective,
        trace: best.trace,
        inner_trace: best.inner_trace,
        iteration_cap_hits: total_cap_hits,
    };
    debug_assert_eq!(fitted.check_constraints(data), Ok(()));
    Ok(fitted)
}

fn run_cycles(
    data: &StandardizedDataset,
    mut beta: Array2<f64>,
    mut supports: Vec<Vec<usize>>,
    constraints: &Constraints,
    epsilon: f64,
    order: &[usize],
    lipschitz_cache: &mut HashMap<Vec<usize>, f64>,
) -> Result<CycleRun, PsgdError> {
    let groups = constraints.groups();
    let t = constraints.sparsity();
    let mut losses: Vec<f64> = (0..groups).map(|g| loss(data, beta.column(g))).collect();
    let mut total: f64 = losses.iter().sum();
    let mut trace = vec![total];
    let mut inner_trace = vec![total];
    let mut cap_hits = 0usize;

    for _ in 0..MAX_CYCLES {
        for &g in order {
            let allowed = allowed_set(&supports, g, constraints.diversity());
            let others: f64 = losses
                .iter()
                .enumerate()
                .filter_map(|(h, &l)| (h != g).then_some(l))
                .sum();
            if allowed.is_empty() {
                beta.column_mut(g).fill(0.0);
                supports[g] = Vec::new();
                losses[g] = loss(data, beta.column(g));
                inner_trace.push(others + losses[g]);
                continue;
            }
            let lipschitz = match lipschitz_cache.get(&allowed) {
                Some(&l) => l,
                None => {
                    let x_s = gather_columns(data.x_std.view(), &allowed);
                    let l = gradient_lipschitz_bound(x_s.view())?;
                    lipschitz_cache.insert(allowed.clone(), l);
                    l
                }
            };
            let x_s = gather_columns(data.x_std.view(), &allowed);
            let outcome = pgd_core(
                beta.column(g),
                &allowed,
                &x_s,
                lipschitz,
                t,
                data,
                epsilon,
            );
            if outcome.hit_iteration_cap {
                cap_hits += 1;
            }
            for &inner_loss in &outcome.loss_trace[1..] {
                inner_trace.push(others + inner_loss);
            }
            let descent_support = nonzero_indices(outcome.beta.view());
            if descent_support.is_empty() {
                beta.column_mut(g).fill(0.0);
                supports[g] = Vec::new();
            } else {
                // Exact restricted refit on the discovered support.
                let x_j = gather_columns(data.x_std.view(), &descent_support);
                let coefs = min_norm_least_squares(x_j.view(), data.y_std.view());
                let mut col = Array1::zeros(data.p());
                for (pos, &j) in descent_support.iter().enumerate() {
                    col[j] = coefs[pos];
                }
                supports[g] = nonzero_indices(col.view());
                beta.column_mut(g).assign(&col);
            }
            losses[g] = loss(data, beta.column(g));
            inner_trace.push(others + losses[g]);
        }
        let new_total: f64 = losses.iter().sum();
        trace.push(new_total);
        let decrease = total - new_total;
        total = new_total;
        if decrease <= epsilon {
            break;
        }
    }

    Ok(CycleRun {
        beta,
        supports,
        losses,
        trace,
        inner_trace,
        cap_hits,
    })
}
