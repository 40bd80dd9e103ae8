//! Dense LU factorisation with partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square matrix factorised in place.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Shape { expected: n * n, got: a.len() });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(T::zero(), |m, x| m.max(x.abs())).max(T::one());
        let tiny = scale * T::epsilon() * T::lit(n.max(1) as f64);
        for k in 0..n {
            let (pivot_row, pivot) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > tiny) {
                return Err(Error::Singular { column: k, pivot: pivot.as_f64() });
            }
            if pivot_row != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let diag = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / diag;
                a[r * n + k] = f;
                if f != T::zero() {
                    for c in k + 1..n {
                        let v = a[k * n + c];
                        a[r * n + c] -= f * v;
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::Shape { expected: n, got: b.len() });
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        Ok(x)
    }
}

/// Solves `a x = b` once.
pub fn solve<T: Real>(n: usize, a: Vec<T>, b: &[T]) -> Result<Vec<T>> {
    Lu::factor(n, a)?.solve(b)
}
