//! Sparse matrices and an ILU(0)-preconditioned BiCGSTAB solver.

use rayon::prelude::*;

/// Compressed sparse rows with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds the structure from per-row column lists; values start at zero.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows {
            let mut r = r.clone();
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        Csr {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    /// Position of `(row, col)` in `vals`.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let s = self.row_ptr[row];
        let e = self.row_ptr[row + 1];
        self.cols[s..e].binary_search(&col).ok().map(|k| s + k)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let row = |r: usize| -> f64 {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|k| self.vals[k] * x[self.cols[k]])
                .sum()
        };
        if self.n < 4096 {
            for (r, out) in y.iter_mut().enumerate().take(self.n) {
                *out = row(r);
            }
        } else {
            y[..self.n]
                .par_chunks_mut(1024)
                .enumerate()
                .for_each(|(b, ys)| {
                    for (i, out) in ys.iter_mut().enumerate() {
                        *out = row(b * 1024 + i);
                    }
                });
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.find(r, r).map(|k| self.vals[k]).unwrap_or(0.0))
            .collect()
    }
}

/// Incomplete LU factorisation with the sparsity of the matrix itself.
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    /// Returns `None` on a zero pivot.
    pub fn new(a: &Csr) -> Option<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            diag[r] = lu.find(r, r)?;
        }
        // Scratch map column -> position in the current row.
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in s..e {
                pos[lu.cols[k]] = k;
            }
            for k in s..e {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let piv = lu.vals[diag[j]];
                if piv == 0.0 || !piv.is_finite() {
                    return None;
                }
                let f = lu.vals[k] / piv;
                lu.vals[k] = f;
                for kk in diag[j] + 1..lu.row_ptr[j + 1] {
                    let p = pos[lu.cols[kk]];
                    if p != usize::MAX {
                        lu.vals[p] -= f * lu.vals[kk];
                    }
                }
            }
            for k in s..e {
                pos[lu.cols[k]] = usize::MAX;
            }
            if lu.vals[diag[i]] == 0.0 {
                return None;
            }
        }
        Some(Ilu0 { lu, diag })
    }

    /// Solves `LU z = r` in place.
    pub fn apply(&self, z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = z[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s / lu.vals[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB for `A x = b`, starting from `x`.
pub fn bicgstab(a: &Csr, pre: &Ilu0, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> LinearStats {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return LinearStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = norm(&r) / bn;
    if rel <= rtol {
        return LinearStats {
            iterations: 0,
            relative_residual: rel,
            converged: true,
        };
    }
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        phat.copy_from_slice(&p);
        pre.apply(&mut phat);
        a.matvec(&phat, &mut v);
        let den = dot(&r0, &v);
        if den == 0.0 || !den.is_finite() {
            break;
        }
        alpha = rho / den;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= rtol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            rel = norm(&s) / bn;
            return LinearStats {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        shat.copy_from_slice(&s);
        pre.apply(&mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bn;
        if rel <= rtol {
            return LinearStats {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        if omega == 0.0 {
            break;
        }
    }
    LinearStats {
        iterations: max_iter,
        relative_residual: rel,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 50;
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut a = Csr::from_pattern(&rows);
        for i in 0..n {
            let k = a.find(i, i).unwrap();
            a.vals[k] = 4.0;
            if i > 0 {
                let k = a.find(i, i - 1).unwrap();
                a.vals[k] = -1.0;
            }
            if i + 1 < n {
                let k = a.find(i, i + 1).unwrap();
                a.vals[k] = -1.5;
            }
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xs, &mut b);
        let pre = Ilu0::new(&a).unwrap();
        let mut x = vec![0.0; n];
        let st = bicgstab(&a, &pre, &b, &mut x, 1e-13, 100);
        assert!(st.converged);
        // ILU(0) of a tridiagonal matrix is exact.
        assert!(st.iterations <= 2);
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-11);
        }
    }
}
