//! Scalar abstraction for forward-mode differentiation.
//!
//! Every smooth function in the crate (true Lagrangians, the MLP, the
//! backward error formulas) is written once over [`Real`]. Evaluating it
//! with `f64` gives values; evaluating it with nested [`Dual`] numbers gives
//! exact directional derivatives of any order.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// The underlying real part, stripping every infinitesimal.
    fn re(&self) -> f64;
    /// Multiplication by a plain scalar.
    fn scale(self, k: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sigmoid(self) -> Self;
    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }

    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus(self)
    }
    #[inline]
    fn powi(self, n: u32) -> Self {
        f64::powi(self, n as i32)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
///
/// Nesting (`Dual<Dual<f64>>`, ...) yields mixed higher derivatives along
/// one seeded direction per nesting level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Self { re, eps: T::one() }
    }

    /// Chain rule through a scalar function with value `f` and derivative `df`.
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Self { re: f, eps: df * self.eps }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = o.re.recip();
        let re = self.re * inv;
        Self { re, eps: (self.eps - re * o.eps) * inv }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { re: -self.re, eps: -self.eps }
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Self::constant(T::from_f64(x))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self { re: self.re.scale(k), eps: self.eps.scale(k) }
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, T::one() - t * t)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, s.recip().scale(0.5))
    }
    fn sigmoid(self) -> Self {
        let s = self.re.sigmoid();
        self.chain(s, s * (T::one() - s))
    }
    fn softplus(self) -> Self {
        self.chain(self.re.softplus(), self.re.sigmoid())
    }
}

/// Second-order dual used for Hessian entries: `∂_a`, `∂_b` and `∂_ab` of a
/// function in one evaluation.
pub type HyperDual<T> = Dual<Dual<T>>;

/// Seeds coordinate `i` of a point for a hyper-dual evaluation along
/// directions `a` (outer) and `b` (inner).
pub fn seed_hyper<T: Real>(x: T, i: usize, a: usize, b: usize) -> HyperDual<T> {
    let inner = Dual::new(x, if i == b { T::one() } else { T::zero() });
    let outer_eps = Dual::constant(if i == a { T::one() } else { T::zero() });
    Dual::new(inner, outer_eps)
}

/// Value, gradient and (symmetric) Hessian of a scalar function of `x`,
/// computed exactly with hyper-dual numbers.
pub fn value_grad_hessian<T, F>(x: &[T], f: F) -> (T, Vec<T>, Vec<T>)
where
    T: Real,
    F: Fn(&[HyperDual<T>]) -> HyperDual<T>,
{
    let n = x.len();
    let mut grad = vec![T::zero(); n];
    let mut hess = vec![T::zero(); n * n];
    let mut value = T::zero();
    let mut seeded = Vec::with_capacity(n);
    for a in 0..n {
        for b in a..n {
            seeded.clear();
            seeded.extend(x.iter().enumerate().map(|(i, &xi)| seed_hyper(xi, i, a, b)));
            let r = f(&seeded);
            value = r.re.re;
            grad[b] = r.re.eps;
            grad[a] = r.eps.re;
            hess[a * n + b] = r.eps.eps;
            hess[b * n + a] = r.eps.eps;
        }
    }
    if n == 0 {
        let plain: Vec<HyperDual<T>> = Vec::new();
        value = f(&plain).re.re;
    }
    (value, grad, hess)
}

/// Gradient of a scalar function by one forward pass per coordinate.
pub fn value_grad<T, F>(x: &[T], f: F) -> (T, Vec<T>)
where
    T: Real,
    F: Fn(&[Dual<T>]) -> Dual<T>,
{
    let n = x.len();
    let mut grad = vec![T::zero(); n];
    let mut value = T::zero();
    for (a, g) in grad.iter_mut().enumerate() {
        let seeded: Vec<Dual<T>> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| if i == a { Dual::variable(xi) } else { Dual::constant(xi) })
            .collect();
        let r = f(&seeded);
        value = r.re;
        *g = r.eps;
    }
    if n == 0 {
        let plain: Vec<Dual<T>> = Vec::new();
        value = f(&plain).re;
    }
    (value, grad)
}
