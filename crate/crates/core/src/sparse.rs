//! Sparse symmetric matrices in CSR form and a conjugate gradient solver.
//!
//! Everything downstream (eigensolver, implicit diffusion steps) leans on two
//! properties enforced here: assembly produces exactly symmetric storage, and
//! solves are deterministic — fixed iteration order, no threading inside a
//! solve, no randomness.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an n×n matrix from (row, col, value) triplets. Duplicates are
    /// summed; columns are sorted within each row.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Assembly(format!(
                    "triplet ({i}, {j}) outside {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Assembly(format!("non-finite entry at ({i}, {j})")));
            }
            counts[i + 1] += 1;
        }
        let mut row_ptr = counts;
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut cursor = row_ptr.clone();
        for &(i, j, v) in triplets {
            let k = cursor[i];
            cols[k] = j;
            vals[k] = v;
            cursor[i] += 1;
        }
        // Sort each row by column and merge duplicates in place.
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        let mut out_ptr = vec![0usize; n + 1];
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            for k in row_ptr[i]..row_ptr[i + 1] {
                scratch.push((cols[k], vals[k]));
            }
            scratch.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < scratch.len() {
                let col = scratch[k].0;
                let mut sum = 0.0;
                while k < scratch.len() && scratch[k].0 == col {
                    sum += scratch[k].1;
                    k += 1;
                }
                out_cols.push(col);
                out_vals.push(sum);
            }
            out_ptr[i + 1] = out_cols.len();
        }
        Ok(CsrMatrix {
            n,
            row_ptr: out_ptr,
            col_idx: out_cols,
            values: out_vals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let (_, vals) = self.row(i);
        vals.iter().sum()
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// Returns scale·A + diag(d), preserving the sparsity pattern. Every row
    /// must already store its diagonal entry (grid assembly guarantees this).
    pub fn scaled_add_diag(&self, scale: f64, diag: &[f64]) -> CsrMatrix {
        debug_assert_eq!(diag.len(), self.n);
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= scale;
        }
        for i in 0..self.n {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            let k = out.col_idx[lo..hi]
                .binary_search(&i)
                .expect("diagonal entry must be stored");
            out.values[lo + k] += diag[i];
        }
        out
    }

    /// Returns μI − A (the spectral shift: SPD whenever μ exceeds the top
    /// eigenvalue of A).
    pub fn shift_negate(&self, mu: f64) -> CsrMatrix {
        self.scaled_add_diag(-1.0, &vec![mu; self.n])
    }

    /// True when every stored entry (i, j, v) has a stored mirror (j, i)
    /// with the bitwise-identical value.
    pub fn is_exactly_symmetric(&self) -> bool {
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            for k in lo..hi {
                let j = self.col_idx[k];
                if self.get(j, i).to_bits() != self.values[k].to_bits() {
                    return false;
                }
            }
        }
        true
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves A x = b for symmetric positive definite A by conjugate gradients,
/// starting from the value already in `x`. Converged when the true residual
/// satisfies ‖b − Ax‖₂ ≤ rel_tol·‖b‖₂ (b = 0 returns x = 0 exactly).
///
/// The recurrence residual drifts from the true one over many iterations, so
/// on hitting the target the residual is recomputed from scratch and the
/// iteration continues if the check fails.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = a.n();
    debug_assert_eq!(b.len(), n);
    debug_assert_eq!(x.len(), n);
    let nb = norm2(b);
    if nb == 0.0 {
        x.fill(0.0);
        return Ok(CgReport {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let target = rel_tol * nb;

    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    if rs.sqrt() <= target {
        return Ok(CgReport {
            iterations: 0,
            rel_residual: rs.sqrt() / nb,
        });
    }

    for iter in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::CgStall(format!(
                "matrix not positive definite along search direction (p·Ap = {pap:e})"
            )));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= target {
            // Confirm with a freshly computed residual before declaring done.
            a.mul_vec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            let true_rs = dot(&r, &r);
            if true_rs.sqrt() <= target * 1.25 {
                return Ok(CgReport {
                    iterations: iter,
                    rel_residual: true_rs.sqrt() / nb,
                });
            }
            p.copy_from_slice(&r);
            rs = true_rs;
            continue;
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::CgStall(format!(
        "no convergence in {max_iter} iterations (rel residual {:e}, target {rel_tol:e})",
        rs.sqrt() / nb
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, sub: f64, diag: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, sub));
                t.push((i + 1, i, sub));
            }
        }
        CsrMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn triplets_merge_duplicates_and_sort_columns() {
        let m = CsrMatrix::from_triplets(3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, 1.0), (2, 2, 1.0)])
            .unwrap();
        let (cols, vals) = m.row(0);
        assert_eq!(cols, &[0, 2]);
        assert_eq!(vals, &[2.0, 1.5]);
        assert_eq!(m.nnz(), 4);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, &[(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn mul_vec_matches_dense() {
        let m = tridiag(4, -1.0, 2.0);
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut y = [0.0; 4];
        m.mul_vec(&x, &mut y);
        assert_eq!(y, [0.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn cg_solves_spd_system_to_tolerance() {
        let n = 50;
        let m = tridiag(n, -1.0, 2.1);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; n];
        let rep = cg(&m, &b, &mut x, 1e-13, 10 * n).unwrap();
        let mut ax = vec![0.0; n];
        m.mul_vec(&x, &mut ax);
        let res: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(res <= 1e-13 * norm2(&b) * 1.3, "residual {res:e}");
        assert!(rep.iterations > 0);
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let m = tridiag(5, -1.0, 2.0);
        let mut x = vec![1.0; 5];
        let rep = cg(&m, &[0.0; 5], &mut x, 1e-12, 100).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn cg_rejects_indefinite_matrix() {
        let m = tridiag(3, 0.0, -1.0);
        let mut x = vec![0.0; 3];
        assert!(matches!(cg(&m, &[1.0, 0.0, 0.0], &mut x, 1e-12, 10), Err(Error::CgStall(_))));
    }

    #[test]
    fn symmetry_detector_sees_asymmetric_entry() {
        let sym = tridiag(3, -1.0, 2.0);
        assert!(sym.is_exactly_symmetric());
        let asym = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 0.5), (1, 0, 0.25), (1, 1, 1.0)])
            .unwrap();
        assert!(!asym.is_exactly_symmetric());
    }
}
