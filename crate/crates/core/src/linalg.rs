//! Dense helpers for the tiny (n_q ≤ 4 in practice) systems that appear in
//! Newton steps and backward error formulas. Matrices are row-major slices.

use crate::diffcore::Real;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Pivots are chosen on the real part, so the routine is usable with dual
/// numbers. Returns `None` for an exactly singular pivot.
pub fn solve<S: Real>(a: &[S], b: &[S]) -> Option<Vec<S>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].re().abs().total_cmp(&m[j * n + col].re().abs()))?;
        if m[pivot * n + col].re() == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let inv = m[col * n + col].recip();
        for row in col + 1..n {
            let f = m[row * n + col] * inv;
            if f.re() == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] = m[row * n + k] - f * m[col * n + k];
            }
            x[row] = x[row] - f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in row + 1..n {
            acc = acc - m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

/// Determinant by cofactor expansion for n ≤ 3, LU otherwise.
pub fn det<S: Real>(a: &[S], n: usize) -> S {
    debug_assert_eq!(a.len(), n * n);
    match n {
        0 => S::one(),
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => det_lu(a, n),
    }
}

fn det_lu<S: Real>(a: &[S], n: usize) -> S {
    let mut m = a.to_vec();
    let mut acc = S::one();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].re().abs().total_cmp(&m[j * n + col].re().abs()))
            .expect("non-empty range");
        if m[pivot * n + col].re() == 0.0 {
            return S::zero();
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            acc = -acc;
        }
        let p = m[col * n + col];
        acc = acc * p;
        for row in col + 1..n {
            let f = m[row * n + col] / p;
            for k in col..n {
                m[row * n + k] = m[row * n + k] - f * m[col * n + k];
            }
        }
    }
    acc
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y = a x` for a row-major `n × n` matrix.
pub fn matvec<S: Real>(a: &[S], x: &[S]) -> Vec<S> {
    let n = x.len();
    (0..n).map(|i| dot(&a[i * n..(i + 1) * n], x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_with_pivoting() {
        let a = [0.0, 2.0, 1.0, 1.0];
        let x = solve(&a, &[4.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert!(solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn determinants_agree_between_expansion_and_lu() {
        let a = [2.0, -1.0, 0.5, 0.3, 4.0, 1.0, -2.0, 0.7, 3.0];
        assert!((det(&a, 3) - det_lu(&a, 3)).abs() < 1e-12);
        let b: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        // reference value from cofactor expansion along the first row
        let minor = |c: usize| -> f64 {
            let m: Vec<f64> = (1..4)
                .flat_map(|r| (0..4).filter(move |&k| k != c).map(move |k| (r, k)))
                .map(|(r, k)| b[r * 4 + k])
                .collect();
            det(&m, 3)
        };
        let expected: f64 = (0..4).map(|c| if c % 2 == 0 { 1.0 } else { -1.0 } * b[c] * minor(c)).sum();
        assert!((det(&b, 4) - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }
}
