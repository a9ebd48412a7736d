//! Dense LU factorization with partial pivoting. The factors are stored
//! as sparse rows, since the nodal matrices of transformer circuits stay
//! sparse after elimination and the triangular solves dominate run time.

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest matrix entry are
/// treated as zero.
const PIVOT_TOLERANCE: f64 = 1e-18;

#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    perm: Vec<usize>,
    /// Strictly lower part of L (unit diagonal), per row: (col, value).
    lower: Vec<Vec<(usize, f64)>>,
    /// Strictly upper part of U, per row.
    upper: Vec<Vec<(usize, f64)>>,
    inv_diag: Vec<f64>,
}

impl SparseLu {
    /// Factors the row-major `n x n` matrix `a`. `labels` name the unknowns
    /// for the error message.
    pub fn factor(mut a: Vec<f64>, n: usize, labels: &dyn Fn(usize) -> String) -> Result<Self> {
        debug_assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = scale * PIVOT_TOLERANCE;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pv <= tol || !pv.is_finite() {
                return Err(Error::Topology(format!(
                    "singular nodal matrix at unknown {} (floating subnetwork or source loop)",
                    labels(perm[k])
                )));
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k];
                if f == 0.0 {
                    continue;
                }
                let f = f / d;
                a[r * n + k] = f;
                for c in k + 1..n {
                    let u = a[k * n + c];
                    if u != 0.0 {
                        a[r * n + c] -= f * u;
                    }
                }
            }
        }
        let mut lower = vec![Vec::new(); n];
        let mut upper = vec![Vec::new(); n];
        let mut inv_diag = vec![0.0; n];
        for r in 0..n {
            for c in 0..n {
                let v = a[r * n + c];
                if v == 0.0 {
                    continue;
                }
                match c.cmp(&r) {
                    std::cmp::Ordering::Less => lower[r].push((c, v)),
                    std::cmp::Ordering::Greater => upper[r].push((c, v)),
                    std::cmp::Ordering::Equal => inv_diag[r] = 1.0 / v,
                }
            }
        }
        Ok(Self {
            n,
            perm,
            lower,
            upper,
            inv_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`; `work` must have length n and receives x.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        for (r, &p) in self.perm.iter().enumerate() {
            x[r] = b[p];
        }
        for r in 0..self.n {
            let mut s = x[r];
            for &(c, v) in &self.lower[r] {
                s -= v * x[c];
            }
            x[r] = s;
        }
        for r in (0..self.n).rev() {
            let mut s = x[r];
            for &(c, v) in &self.upper[r] {
                s -= v * x[c];
            }
            x[r] = s * self.inv_diag[r];
        }
    }

    /// Number of stored off-diagonal factor entries.
    pub fn fill(&self) -> usize {
        self.lower.iter().chain(&self.upper).map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0, 3.0];
        let lu = SparseLu::factor(a.clone(), 3, &|k| k.to_string()).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|r| (0..3).map(|c| a[r * 3 + c] * x_true[c]).sum()).collect();
        let mut x = [0.0; 3];
        lu.solve(&b, &mut x);
        for k in 0..3 {
            assert!((x[k] - x_true[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_rejected() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            SparseLu::factor(a, 2, &|k| k.to_string()),
            Err(Error::Topology(_))
        ));
    }
}
