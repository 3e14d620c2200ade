//! Variational integration: discrete Euler–Lagrange residuals, Newton
//! steps, momentum initialization and rollouts.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lagrangian::DiscreteLagrangian;
use crate::linalg;
use crate::systems::Trajectory;

/// Newton solver settings.
///
/// A solve has converged when `‖r‖ ≤ tolerance · max(1, ‖p‖)`, where `p` is
/// the momentum being matched. For momenta of order one or below this is an
/// absolute test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 50, damping: 1.0 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!(
                "newton needs tolerance > 0, max_iterations ≥ 1, damping in (0, 1]; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Result of one converged Newton solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Solve {
    pub q: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `D2 L_d(q_prev, q) + D1 L_d(q, q_next)`.
pub fn del_residual<L: DiscreteLagrangian>(ld: &L, q_prev: &[f64], q: &[f64], q_next: &[f64]) -> Result<Vec<f64>> {
    check_dim(ld.n_q(), q_next.len())?;
    let a = ld.jet(q_prev, q)?;
    let b = ld.jet(q, q_next)?;
    Ok(a.d2.iter().zip(&b.d1).map(|(x, y)| x + y).collect())
}

/// `p_k = −D1 L_d(q_k, q_{k+1})`.
pub fn discrete_momentum<L: DiscreteLagrangian>(ld: &L, qk: &[f64], qk1: &[f64]) -> Result<Vec<f64>> {
    Ok(ld.jet(qk, qk1)?.d1.iter().map(|x| -x).collect())
}

/// Solves `p + D1 L_d(q, x) = 0` for `x` by Newton's method from `guess`.
pub fn solve_momentum<L: DiscreteLagrangian>(
    ld: &L,
    q: &[f64],
    p: &[f64],
    guess: Vec<f64>,
    cfg: &NewtonConfig,
) -> Result<Solve> {
    cfg.validate()?;
    let n = ld.n_q();
    check_dim(n, q.len())?;
    check_dim(n, p.len())?;
    check_dim(n, guess.len())?;
    let threshold = cfg.tolerance * linalg::norm(p).max(1.0);
    let mut x = guess;
    let mut residual = f64::INFINITY;
    for iteration in 0..=cfg.max_iterations {
        let jet = ld.jet(q, &x)?;
        let r: Vec<f64> = p.iter().zip(&jet.d1).map(|(a, b)| a + b).collect();
        residual = linalg::norm(&r);
        if !residual.is_finite() {
            break;
        }
        // a singular Jacobian means the solution is not locally unique, even
        // when the residual already vanishes (constant L_d)
        let scale = jet.d2d1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let det = linalg::det(&jet.d2d1, n);
        if !(det.abs() > 1e-12 * scale.powi(n as i32)) {
            return Err(Error::SingularJacobian { det });
        }
        if residual <= threshold {
            return Ok(Solve { q: x, iterations: iteration, residual });
        }
        if iteration == cfg.max_iterations {
            break;
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = linalg::solve(&jet.d2d1, &neg_r).ok_or(Error::SingularJacobian { det })?;
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += cfg.damping * di;
        }
    }
    Err(Error::NewtonDiverged { iterations: cfg.max_iterations, residual })
}

/// One DEL step: `q_next` with `D2 L_d(q_prev, q) + D1 L_d(q, q_next) = 0`,
/// starting from `2q − q_prev`.
pub fn step<L: DiscreteLagrangian>(ld: &L, q_prev: &[f64], q: &[f64], cfg: &NewtonConfig) -> Result<Vec<f64>> {
    step_solve(ld, q_prev, q, cfg).map(|s| s.q)
}

pub fn step_solve<L: DiscreteLagrangian>(ld: &L, q_prev: &[f64], q: &[f64], cfg: &NewtonConfig) -> Result<Solve> {
    check_dim(ld.n_q(), q_prev.len())?;
    let p = ld.jet(q_prev, q)?.d2;
    let guess = q.iter().zip(q_prev).map(|(a, b)| 2.0 * a - b).collect();
    solve_momentum(ld, q, &p, guess, cfg)
}

/// `q1` with `p0 = −D1 L_d(q0, q1)`, starting from `q0 + dt · p0`.
pub fn initialize<L: DiscreteLagrangian>(ld: &L, q0: &[f64], p0: &[f64], cfg: &NewtonConfig) -> Result<Vec<f64>> {
    check_dim(ld.n_q(), q0.len())?;
    check_dim(ld.n_q(), p0.len())?;
    let guess = q0.iter().zip(p0).map(|(q, p)| q + ld.dt() * p).collect();
    initialize_from(ld, q0, p0, guess, cfg)
}

/// As [`initialize`] with an explicit starting guess.
pub fn initialize_from<L: DiscreteLagrangian>(
    ld: &L,
    q0: &[f64],
    p0: &[f64],
    guess: Vec<f64>,
    cfg: &NewtonConfig,
) -> Result<Vec<f64>> {
    Ok(solve_momentum(ld, q0, p0, guess, cfg)?.q)
}

/// A rollout that may have stopped early.
#[derive(Debug)]
pub struct Rollout {
    /// Every point computed before a failure (at least `q0`, `q1`).
    pub trajectory: Trajectory,
    /// [`Error::Rollout`] carrying the index `k` of the failed step
    /// `(q_{k−1}, q_k) ↦ q_{k+1}`.
    pub failure: Option<Error>,
}

impl Rollout {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn into_result(self) -> Result<Trajectory> {
        match self.failure {
            None => Ok(self.trajectory),
            Some(e) => Err(e),
        }
    }
}

/// `N + 1` points starting from `(q0, q1)`. Invalid arguments are an
/// error; solver failures are reported inside the returned [`Rollout`].
pub fn rollout<L: DiscreteLagrangian>(ld: &L, q0: &[f64], q1: &[f64], n: usize, cfg: &NewtonConfig) -> Result<Rollout> {
    check_dim(ld.n_q(), q0.len())?;
    check_dim(ld.n_q(), q1.len())?;
    cfg.validate()?;
    if n == 0 {
        return Err(Error::invalid("rollout needs N ≥ 1"));
    }
    let mut traj = Trajectory::new(ld.dt(), 0.0, vec![q0.to_vec(), q1.to_vec()])?;
    for k in 1..n {
        match step(ld, traj.point(k - 1), traj.point(k), cfg) {
            Ok(q) => traj.push(q),
            Err(e) => {
                let failure = Error::Rollout { index: k, source: Box::new(e) };
                return Ok(Rollout { trajectory: traj, failure: Some(failure) });
            }
        }
    }
    Ok(Rollout { trajectory: traj, failure: None })
}
