//! Shared fixtures for the criterion benches.

use symdl::{Activation, DiscreteLagrangianModel, SystemSpec, Trajectory};

/// Cart-pendulum reference trajectory of `n` steps at `dt = 0.01`.
pub fn cartpend_trajectory(n: usize) -> Trajectory {
    let q0 = [0.0, std::f64::consts::PI - 0.5];
    symdl::systems::generate(&SystemSpec::cartpend(), &q0, &[0.5, 0.0], 1e-3, 0.01, n, 0).expect("reference trajectory")
}

pub fn network(hidden: &[usize]) -> DiscreteLagrangianModel {
    DiscreteLagrangianModel::init(42, 2, 0.01, Activation::Tanh, hidden).expect("network init")
}
