//! Shared problem builders for the benchmark suite.

use bsps::numerics::{standardize, StandardizedDataset};
use bsps::simulation::{generate, Scenario, SimulationConfig};

/// A standardized planted-signal instance of the given shape.
pub fn instance(n: usize, p: usize, seed: u64) -> StandardizedDataset {
    let cfg = SimulationConfig {
        scenario: Scenario::Two,
        p,
        n,
        m: 1,
        zeta: 0.2,
        rho: 0.5,
        snr: 3.0,
        seed,
    };
    let problem = generate(&cfg).expect("benchmark instance");
    standardize(problem.x_train.view(), problem.y_train.view()).expect("standardize")
}
