//! Continuous and discrete Lagrangians as generic smooth functions.

use crate::diffcore::real::{seed_hyper, Real};
use crate::diffcore::Jet;
use crate::error::{check_dim, Error, Result};

/// `L(q, q̇)` on the tangent bundle.
pub trait Lagrangian: Sync {
    fn n_q(&self) -> usize;
    fn eval<S: Real>(&self, q: &[S], v: &[S]) -> S;

    fn value(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.n_q(), q.len())?;
        check_dim(self.n_q(), v.len())?;
        let x = self.eval(q, v);
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::NonFinite("Lagrangian value".into()))
        }
    }
}

/// `L_d(q0, q1)` on `Q × Q` for a fixed step `dt`.
pub trait DiscreteLagrangian: Sync {
    fn n_q(&self) -> usize;
    fn dt(&self) -> f64;
    fn eval<S: Real>(&self, q0: &[S], q1: &[S]) -> S;

    fn value(&self, q0: &[f64], q1: &[f64]) -> Result<f64> {
        check_dim(self.n_q(), q0.len())?;
        check_dim(self.n_q(), q1.len())?;
        let x = self.eval(q0, q1);
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::NonFinite("discrete Lagrangian value".into()))
        }
    }

    /// Value, `D1`, `D2` and `D2 D1` at one pair.
    fn jet(&self, q0: &[f64], q1: &[f64]) -> Result<Jet> {
        jet_by_duals(self, q0, q1)
    }
}

/// Exact jet of any [`DiscreteLagrangian`] through hyper-dual evaluation,
/// one pass per entry of the mixed block.
pub fn jet_by_duals<L: DiscreteLagrangian + ?Sized>(l: &L, q0: &[f64], q1: &[f64]) -> Result<Jet> {
    let n = l.n_q();
    check_dim(n, q0.len())?;
    check_dim(n, q1.len())?;
    let mut jet = Jet::zeros(n);
    if n == 0 {
        jet.value = l.eval::<f64>(q0, q1);
    }
    let x: Vec<f64> = q0.iter().chain(q1).copied().collect();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (i, n + j);
            let seeded: Vec<_> = x.iter().enumerate().map(|(k, &xk)| seed_hyper(xk, k, a, b)).collect();
            let r = l.eval(&seeded[..n], &seeded[n..]);
            jet.value = r.re.re;
            jet.d1[i] = r.eps.re;
            jet.d2[j] = r.re.eps;
            jet.d2d1[i * n + j] = r.eps.eps;
        }
    }
    if jet.is_finite() {
        Ok(jet)
    } else {
        Err(Error::NonFinite("discrete Lagrangian jet".into()))
    }
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn bilinear_jet() {
        let l = BilinearLd { a: vec![1.0, 0.0, 0.0, 1.0], n_q: 2 };
        let j = l.jet(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(j.value, 11.0);
        assert_eq!(j.d1, vec![3.0, 4.0]);
        assert_eq!(j.d2, vec![1.0, 2.0]);
        assert_eq!(j.d2d1, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_jet_is_zero() {
        let l = ConstantLd { c: 4.2, n_q: 2 };
        let j = l.jet(&[0.3, -1.0], &[2.0, 0.1]).unwrap();
        assert_eq!(j.value, 4.2);
        assert!(j.d1.iter().chain(&j.d2).chain(&j.d2d1).all(|&x| x == 0.0));
    }

    #[test]
    fn jet_rejects_wrong_dimension() {
        let l = FreeParticleLd { n_q: 2, dt: 0.1 };
        assert!(matches!(l.jet(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }
}
