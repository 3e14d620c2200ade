//! Scalar reverse-mode tape.
//!
//! Loss terms are small scalar compositions of jet outputs (a few thousand
//! nodes per epoch), so every node stores its local partials at construction
//! and the backward sweep is a single reverse pass over a flat arena.

use crate::diffcore::real::sigmoid;
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct Span {
    start: usize,
    len: usize,
}

#[derive(Default, Debug, Clone)]
pub struct Tape {
    values: Vec<f64>,
    spans: Vec<Span>,
    partials: Vec<(usize, f64)>,
    first_non_finite: Option<usize>,
}

/// Adjoints of every tape node with respect to one output.
#[derive(Debug, Clone)]
pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn get(&self, v: Var) -> f64 {
        self.0[v.0]
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    /// Index of the first node whose value was NaN or infinite.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.first_non_finite
    }

    fn push(&mut self, value: f64, parents: &[(Var, f64)]) -> Var {
        let start = self.partials.len();
        self.partials.extend(parents.iter().map(|&(v, d)| (v.0, d)));
        let idx = self.values.len();
        if !value.is_finite() && self.first_non_finite.is_none() {
            self.first_non_finite = Some(idx);
        }
        self.values.push(value);
        self.spans.push(Span { start, len: parents.len() });
        Var(idx)
    }

    /// Independent input.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, &[])
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, &[])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, &[(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let q = x / y;
        self.push(q, &[(a, 1.0 / y), (b, -q / y)])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(v, &[(a, -1.0)])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, &[(a, k)])
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, &[(a, 1.0)])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x * x, &[(a, 2.0 * x)])
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        let x = self.value(a);
        let d = if n == 0 { 0.0 } else { n as f64 * x.powi(n - 1) };
        self.push(x.powi(n), &[(a, d)])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.push(e, &[(a, e)])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x.ln(), &[(a, 1.0 / x)])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let s = self.value(a).sqrt();
        self.push(s, &[(a, 0.5 / s)])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.value(a));
        self.push(s, &[(a, s * (1.0 - s))])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.value(x)).sum();
        let parents: Vec<(Var, f64)> = xs.iter().map(|&x| (x, 1.0)).collect();
        self.push(v, &parents)
    }

    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        debug_assert_eq!(a.len(), b.len());
        let mut v = 0.0;
        let mut parents = Vec::with_capacity(2 * a.len());
        for (&x, &y) in a.iter().zip(b) {
            let (xv, yv) = (self.value(x), self.value(y));
            v += xv * yv;
            parents.push((x, yv));
            parents.push((y, xv));
        }
        self.push(v, &parents)
    }

    /// Dot product against constant coefficients.
    pub fn dot_const(&mut self, a: &[Var], k: &[f64]) -> Var {
        debug_assert_eq!(a.len(), k.len());
        let v = a.iter().zip(k).map(|(&x, &c)| self.value(x) * c).sum();
        let parents: Vec<(Var, f64)> = a.iter().zip(k).map(|(&x, &c)| (x, c)).collect();
        self.push(v, &parents)
    }

    /// Determinant of a row-major `n × n` matrix of tape variables.
    ///
    /// The partials are the cofactors, computed from explicit minors, so the
    /// node is exact for singular matrices too (the constant-Lagrangian case
    /// has `D2D1 = 0`).
    pub fn det(&mut self, a: &[Var], n: usize) -> Var {
        debug_assert_eq!(a.len(), n * n);
        let m: Vec<f64> = a.iter().map(|&x| self.value(x)).collect();
        let value = linalg::det(&m, n);
        let mut parents = Vec::with_capacity(n * n);
        let mut minor = Vec::with_capacity((n.max(1) - 1).pow(2));
        for i in 0..n {
            for j in 0..n {
                minor.clear();
                for r in (0..n).filter(|&r| r != i) {
                    for c in (0..n).filter(|&c| c != j) {
                        minor.push(m[r * n + c]);
                    }
                }
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                parents.push((a[i * n + j], sign * linalg::det(&minor, n - 1)));
            }
        }
        self.push(value, &parents)
    }

    /// Reverse sweep from `output`.
    pub fn backward(&self, output: Var) -> Adjoints {
        let mut adj = vec![0.0; self.values.len()];
        adj[output.0] = 1.0;
        for idx in (0..=output.0).rev() {
            let g = adj[idx];
            if g == 0.0 {
                continue;
            }
            let Span { start, len } = self.spans[idx];
            for &(parent, d) in &self.partials[start..start + len] {
                adj[parent] += g * d;
            }
        }
        Adjoints(adj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.leaf(-2.0);
        let xy = t.mul(x, y);
        let z = t.add(xy, x);
        let g = t.backward(z);
        assert_eq!(t.value(z), -3.0);
        assert_eq!(g.get(x), -1.0);
        assert_eq!(g.get(y), 3.0);
    }

    #[test]
    fn det_of_diag_has_unit_derivative_in_first_entry() {
        // det(diag(a, 1)) = a
        let mut t = Tape::new();
        let vals = [2.5, 0.0, 0.0, 1.0];
        let m: Vec<Var> = vals.iter().map(|&v| t.leaf(v)).collect();
        let d = t.det(&m, 2);
        let g = t.backward(d);
        assert_eq!(t.value(d), 2.5);
        assert_eq!(g.get(m[0]), 1.0);
        assert_eq!(g.get(m[3]), 2.5);
    }

    #[test]
    fn det_gradient_matches_finite_differences_on_singular_matrix() {
        let vals = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.5, -1.0, 2.0];
        let mut t = Tape::new();
        let m: Vec<Var> = vals.iter().map(|&v| t.leaf(v)).collect();
        let d = t.det(&m, 3);
        let g = t.backward(d);
        for k in 0..9 {
            let h = 1e-6;
            let mut p = vals;
            p[k] += h;
            let mut q = vals;
            q[k] -= h;
            let fd = (linalg::det(&p, 3) - linalg::det(&q, 3)) / (2.0 * h);
            assert!((g.get(m[k]) - fd).abs() < 1e-8, "entry {k}");
        }
    }

    #[test]
    fn records_first_non_finite_node() {
        let mut t = Tape::new();
        let z = t.leaf(0.0);
        let l = t.ln(z);
        assert_eq!(t.first_non_finite(), Some(l.index()));
    }
}
