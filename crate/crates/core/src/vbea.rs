//! Continuous Lagrangians and energies recovered from a discrete Lagrangian.
//!
//! For a discrete Lagrangian built on the midpoint rule the inverse modified
//! Lagrangian is
//!
//! ```text
//! L_inv(q, v) = L_d(q − dt v/2, q + dt v/2)
//! ```
//!
//! and the backward error corrected Lagrangian, truncated at `dt²`, is
//!
//! ```text
//! L_vbea = L_inv + dt²/24 · [ gᵀ H_vv⁻¹ g − vᵀ H_qq v ],   g = ∇_q L_inv − H_qv v
//! ```
//!
//! In one dimension this is the familiar scalar expression; for `n_q > 1` it
//! is its matrix generalization. Both carry the factor `dt` of `L_d ≈ ∫ L dt`;
//! [`Scaled`] divides it out so energies come in physical units.

use crate::diffcore::real::{value_grad, value_grad_hessian};
use crate::diffcore::{Dual, Real};
use crate::error::{check_dim, Error, Result};
use crate::lagrangian::{DiscreteLagrangian, Lagrangian};
use crate::linalg;
use crate::systems::Trajectory;

/// `L_d(q − dt v/2, q + dt v/2)`.
pub struct InverseModified<'a, L>(pub &'a L);

impl<L: DiscreteLagrangian> Lagrangian for InverseModified<'_, L> {
    fn n_q(&self) -> usize {
        self.0.n_q()
    }

    fn eval<S: Real>(&self, q: &[S], v: &[S]) -> S {
        let h = 0.5 * self.0.dt();
        let q0: Vec<S> = q.iter().zip(v).map(|(&a, &b)| a - b.scale(h)).collect();
        let q1: Vec<S> = q.iter().zip(v).map(|(&a, &b)| a + b.scale(h)).collect();
        self.0.eval(&q0, &q1)
    }
}

/// Backward error corrected Lagrangian of a discrete Lagrangian.
pub struct Vbea<'a, L>(pub &'a L);

impl<L: DiscreteLagrangian> Vbea<'_, L> {
    fn correction<S: Real>(&self, q: &[S], v: &[S]) -> Option<(S, S)> {
        let n = self.0.n_q();
        let inv = InverseModified(self.0);
        let x: Vec<S> = q.iter().chain(v).copied().collect();
        let (value, grad, hess) = value_grad_hessian(&x, |y| inv.eval(&y[..n], &y[n..]));
        let m = 2 * n;
        let g: Vec<S> = (0..n)
            .map(|i| (0..n).fold(grad[i], |acc, j| acc - hess[i * m + n + j] * v[j]))
            .collect();
        let hvv: Vec<S> = (0..n * n).map(|k| hess[(n + k / n) * m + n + k % n]).collect();
        let scale = hvv.iter().fold(0.0f64, |a, h| a.max(h.re().abs()));
        if !(linalg::det(&hvv, n).re().abs() > 1e-14 * scale.powi(n as i32)) {
            return None;
        }
        let sol = linalg::solve(&hvv, &g)?;
        let gsg = g.iter().zip(&sol).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        let vqv = (0..n).fold(S::zero(), |acc, i| {
            (0..n).fold(acc, |acc, j| acc + v[i] * hess[i * m + j] * v[j])
        });
        let dt = self.0.dt();
        Some((value, (gsg - vqv).scale(dt * dt / 24.0)))
    }
}

impl<L: DiscreteLagrangian> Lagrangian for Vbea<'_, L> {
    fn n_q(&self) -> usize {
        self.0.n_q()
    }

    /// NaN where the velocity Hessian is singular; [`Lagrangian::value`]
    /// reports that case as [`Error::SingularVelocityHessian`].
    fn eval<S: Real>(&self, q: &[S], v: &[S]) -> S {
        match self.correction(q, v) {
            Some((l, c)) => l + c,
            None => S::from_f64(f64::NAN),
        }
    }

    fn value(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.n_q(), q.len())?;
        check_dim(self.n_q(), v.len())?;
        let (l, c) = self.correction(q, v).ok_or(Error::SingularVelocityHessian)?;
        let x = l + c;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::NonFinite("VBEA Lagrangian".into()))
        }
    }
}

/// `factor · L`.
pub struct Scaled<L> {
    pub inner: L,
    pub factor: f64,
}

impl<L: Lagrangian> Lagrangian for Scaled<L> {
    fn n_q(&self) -> usize {
        self.inner.n_q()
    }

    fn eval<S: Real>(&self, q: &[S], v: &[S]) -> S {
        self.inner.eval(q, v).scale(self.factor)
    }

    fn value(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.factor * self.inner.value(q, v)?)
    }
}

pub fn inverse_modified<L: DiscreteLagrangian>(ld: &L, q: &[f64], v: &[f64]) -> Result<f64> {
    InverseModified(ld).value(q, v)
}

/// `L_vbea(q, v)` in the units of `L_d` (carrying one factor of `dt`).
pub fn vbea_lagrangian<L: DiscreteLagrangian>(ld: &L, q: &[f64], v: &[f64]) -> Result<f64> {
    Vbea(ld).value(q, v)
}

/// Legendre transform `H = vᵀ ∇_v L − L`.
pub fn hamiltonian<L: Lagrangian>(l: &L, q: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(l.n_q(), q.len())?;
    check_dim(l.n_q(), v.len())?;
    let qd: Vec<Dual<f64>> = q.iter().map(|&x| Dual::constant(x)).collect();
    let (value, grad) = value_grad(v, |vd| l.eval(&qd, vd));
    let h = v.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() - value;
    if h.is_finite() {
        Ok(h)
    } else {
        Err(Error::NonFinite("Hamiltonian".into()))
    }
}

/// Canonical momentum `∇_v L`.
pub fn momentum<L: Lagrangian>(l: &L, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.n_q(), q.len())?;
    check_dim(l.n_q(), v.len())?;
    let qd: Vec<Dual<f64>> = q.iter().map(|&x| Dual::constant(x)).collect();
    Ok(value_grad(v, |vd| l.eval(&qd, vd)).1)
}

/// `H_vbea` in energy units: the Legendre transform of `L_vbea / dt`.
pub fn vbea_energy<L: DiscreteLagrangian>(ld: &L, q: &[f64], v: &[f64]) -> Result<f64> {
    let l = Scaled { inner: Vbea(ld), factor: 1.0 / ld.dt() };
    l.value(q, v)?;
    hamiltonian(&l, q, v)
}

/// `L_inv`, `L_vbea` (both in `L_d` units) and `H_vbea` at one `(q, v)`;
/// `None` where a value is undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct VbeaSample {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub l_invmod: Option<f64>,
    pub l_vbea: Option<f64>,
    pub h_vbea: Option<f64>,
}

/// Evaluates [`VbeaSample`]s at points `(q ‖ v)` of length `2 n_q`.
pub fn tabulate<L: DiscreteLagrangian>(ld: &L, points: &[Vec<f64>]) -> Result<Vec<VbeaSample>> {
    use rayon::prelude::*;
    let n = ld.n_q();
    for p in points {
        check_dim(2 * n, p.len())?;
    }
    Ok(points
        .par_iter()
        .map(|p| {
            let (q, v) = p.split_at(n);
            VbeaSample {
                q: q.to_vec(),
                v: v.to_vec(),
                l_invmod: inverse_modified(ld, q, v).ok(),
                l_vbea: vbea_lagrangian(ld, q, v).ok(),
                h_vbea: vbea_energy(ld, q, v).ok(),
            }
        })
        .collect())
}

/// Finite-difference velocity estimate from positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityEstimator {
    /// `(q_{k+1} − q_{k−1}) / (2 dt)`, second order.
    #[default]
    CentralDifference,
    /// `(−q_{k+2} + 8 q_{k+1} − 8 q_{k−1} + q_{k−2}) / (12 dt)`, fourth order.
    FivePoint,
}

impl VelocityEstimator {
    /// Points needed on each side of `k`.
    pub fn reach(self) -> usize {
        match self {
            VelocityEstimator::CentralDifference => 1,
            VelocityEstimator::FivePoint => 2,
        }
    }

    /// Indices with a defined estimate in a trajectory of `len` points.
    pub fn valid_range(self, len: usize) -> std::ops::Range<usize> {
        let r = self.reach();
        r..len.saturating_sub(r).max(r)
    }
}

/// Central-difference velocity at interior index `k`.
pub fn recover_velocity(traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
    recover_velocity_with(traj, k, VelocityEstimator::CentralDifference)
}

pub fn recover_velocity_with(traj: &Trajectory, k: usize, est: VelocityEstimator) -> Result<Vec<f64>> {
    let range = est.valid_range(traj.len());
    if !range.contains(&k) {
        let hi = traj.len().saturating_sub(est.reach() + 1);
        return Err(Error::BoundaryIndex { index: k, lo: est.reach(), hi });
    }
    let dt = traj.dt();
    let p = |j: usize| traj.point(j);
    Ok((0..traj.n_q())
        .map(|i| match est {
            VelocityEstimator::CentralDifference => (p(k + 1)[i] - p(k - 1)[i]) / (2.0 * dt),
            VelocityEstimator::FivePoint => {
                (-p(k + 2)[i] + 8.0 * p(k + 1)[i] - 8.0 * p(k - 1)[i] + p(k - 2)[i]) / (12.0 * dt)
            }
        })
        .collect())
}
