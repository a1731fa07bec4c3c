//! Shared helpers for the integration suites: an independent dense
//! eigensolver used as an oracle against the sparse iterative solver, a
//! tiny deterministic random generator, and preset shortcuts.

#![allow(dead_code)]

use phenokpp::landscape::{make_preset, Landscape};
use phenokpp::operator::LinearOperator;
use std::collections::BTreeMap;

pub fn preset(kind: &str, params: &[(&str, f64)], space_dim: usize, pheno_dim: usize) -> Landscape {
    let map: BTreeMap<String, f64> = params
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    make_preset(kind, &map, space_dim, pheno_dim).expect("preset parameters are valid")
}

/// Dense copy of the operator's sparse matrix.
pub fn dense_of(op: &LinearOperator) -> Vec<Vec<f64>> {
    let n = op.matrix.n();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        let (cols, vals) = op.matrix.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            row[j] = v;
        }
    }
    a
}

/// All eigenvalues of a dense symmetric matrix, ascending, via the cyclic
/// Jacobi method — independent of the crate's solver stack. O(n³) per sweep;
/// meant for oracle sizes (n ≲ 200).
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    assert!(n > 0, "empty matrix");
    let norm: f64 = a
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= 1e-14 * norm {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Rotation angle chosen to zero a[p][q] (stable form).
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

pub fn jacobi_max_eigenvalue(a: Vec<Vec<f64>>) -> f64 {
    *jacobi_eigenvalues(a).last().expect("nonempty spectrum")
}

/// SplitMix64: deterministic, dependency-free randomness for test vectors.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [−1, 1).
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}
