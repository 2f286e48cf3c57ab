//! Dense symmetric factorization and the small linear-algebra helpers the
//! simulator and the estimators need.

use crate::error::{Error, Result};

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

/// How pivots that vanish to rounding level are treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PivotPolicy {
    /// Every pivot must be strictly positive.
    Strict,
    /// Pivots within `tolerance * max_diagonal` of zero are accepted and the
    /// corresponding column of the factor is set to zero.
    Semidefinite { tolerance: f64 },
}

/// Lower-triangular factor `L` with `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    zero_pivots: usize,
    jitter: f64,
}

impl Cholesky {
    /// Factor the symmetric `n × n` row-major matrix `a` (only the lower
    /// triangle is read).
    pub fn factor(a: &[f64], n: usize, policy: PivotPolicy) -> Result<Self> {
        Self::factor_jittered(a, n, policy, 0.0)
    }

    /// Factor `a + jitter * I`.
    pub fn factor_jittered(a: &[f64], n: usize, policy: PivotPolicy, jitter: f64) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                a.len()
            )));
        }
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
        let tol = match policy {
            PivotPolicy::Strict => 0.0,
            PivotPolicy::Semidefinite { tolerance } => tolerance * max_diag.max(f64::MIN_POSITIVE),
        };
        let mut l = vec![0.0; n * n];
        let mut zero_pivots = 0;
        for j in 0..n {
            // Off-diagonal entries of row j.
            for k in 0..j {
                let lkk = l[k * n + k];
                let v = if lkk == 0.0 {
                    0.0
                } else {
                    let s = dot(&l[j * n..j * n + k], &l[k * n..k * n + k]);
                    (a[j * n + k] - s) / lkk
                };
                l[j * n + k] = v;
            }
            let row = &l[j * n..j * n + j];
            let d = a[j * n + j] + jitter - dot(row, row);
            if !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            match policy {
                PivotPolicy::Strict if d <= 0.0 => {
                    return Err(Error::NotPositiveDefinite { pivot: j, value: d });
                }
                PivotPolicy::Semidefinite { .. } if d < -tol => {
                    return Err(Error::NotPositiveDefinite { pivot: j, value: d });
                }
                PivotPolicy::Semidefinite { .. } if d <= tol => {
                    zero_pivots += 1;
                    l[j * n + j] = 0.0;
                }
                _ => l[j * n + j] = d.sqrt(),
            }
        }
        Ok(Self { n, l, zero_pivots, jitter })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of pivots treated as exact zeros (semidefinite policy only).
    pub fn zero_pivots(&self) -> usize {
        self.zero_pivots
    }

    /// Diagonal jitter added before factoring.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Entry `(i, j)` of the factor.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.l[i * self.n + j]
        }
    }

    /// `L z`.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| dot(&self.l[i * n..i * n + i + 1], &z[..i + 1])).collect()
    }

    /// `ln det A = 2 Σ ln L_ii`; `-inf` when a pivot was zeroed.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }

    /// Solve `L y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            let lii = self.l[i * n + i];
            if lii == 0.0 {
                return Err(Error::Degenerate("singular factor in forward substitution".into()));
            }
            let s = dot(&self.l[i * n..i * n + i], &b[..i]);
            b[i] = (b[i] - s) / lii;
        }
        Ok(())
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn back_substitute(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        for i in (0..n).rev() {
            let lii = self.l[i * n + i];
            if lii == 0.0 {
                return Err(Error::Degenerate("singular factor in back substitution".into()));
            }
            b[i] /= lii;
            let bi = b[i];
            for k in 0..i {
                b[k] -= self.l[i * n + k] * bi;
            }
        }
        Ok(())
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x)?;
        self.back_substitute(&mut x)?;
        Ok(x)
    }

    /// Dense inverse of `A`, row-major.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // Symmetrize away rounding asymmetry.
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = v;
                inv[j * n + i] = v;
            }
        }
        Ok(inv)
    }
}

/// Quadratic form `gᵀ M g` for a row-major `n × n` matrix.
pub fn quadratic_form(g: &[f64], m: &[f64]) -> f64 {
    let n = g.len();
    (0..n).map(|i| g[i] * dot(&m[i * n..(i + 1) * n], g)).sum()
}

/// Solve a small dense system `A x = b` by Gaussian elimination with
/// partial pivoting. `a` is row-major `n × n`.
pub fn solve_dense(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))
            .unwrap();
        if m[p * n + c].abs() < 1e-300 {
            return Err(Error::Degenerate("singular linear system".into()));
        }
        if p != c {
            for k in 0..n {
                m.swap(c * n + k, p * n + k);
            }
            x.swap(c, p);
        }
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            if f != 0.0 {
                for k in c..n {
                    m[r * n + k] -= f * m[c * n + k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c * n + k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c * n + c];
    }
    Ok(x)
}
