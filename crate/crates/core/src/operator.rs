//! Assembly of the discrete generator d·Δx + Δθ + r(x, θ).
//!
//! Each axis contributes a second-difference stencil scaled by 1/h² (times
//! the diffusivity d on space axes):
//!
//! * Periodic: (1, −2, 1) with wraparound;
//! * Neumann: (1, −2, 1) inside, folded to (−1, 1) at the two boundary
//!   nodes. This is the symmetric form of the ghost-point reflection: it
//!   keeps the assembled matrix exactly symmetric, keeps all row sums of the
//!   Laplacian part at zero (constants stay in the kernel), and agrees with
//!   the reflected stencil up to the half-weight of the boundary node;
//! * DirichletZero: (1, −2, 1) with the outside neighbor dropped (implicit
//!   zero boundary value), diagonal −2 kept.
//!
//! The Kronecker-sum structure makes eigenvalues of separable problems add
//! exactly, which the spectral tests exploit.

use crate::error::{Error, Result};
use crate::grid::{Bc, Grid};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct LinearOperator {
    /// d·Lx + Lθ + diag(r), exactly symmetric.
    pub matrix: CsrMatrix,
    /// Fitness samples on the grid (diagonal part).
    pub r_values: Vec<f64>,
    pub diffusivity: f64,
    /// max over the sampled r values; the eigensolver shifts by r_max + 1.
    pub r_max: f64,
}

/// Assembles the generator on `grid` with fitness samples `r_values`
/// (phenotype index fastest) and space diffusivity `d`.
pub fn assemble_operator(grid: &Grid, r_values: &[f64], d: f64) -> Result<LinearOperator> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::Assembly(format!("diffusivity {d} must be finite and positive")));
    }
    let n = grid.total_nodes();
    if r_values.len() != n {
        return Err(Error::Assembly(format!(
            "r has {} samples, grid has {} nodes",
            r_values.len(),
            n
        )));
    }
    let mut r_max = f64::NEG_INFINITY;
    for (i, &r) in r_values.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFiniteSample(format!("r at node {i} is {r}")));
        }
        r_max = r_max.max(r);
    }

    let axes: Vec<_> = grid.axes().copied().collect();
    let n_space = grid.space().len();
    // Triplet count: diagonal + up to 2 neighbors per axis per node.
    let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(n * (1 + 2 * axes.len()));
    for idx in 0..n {
        let multi = grid.decompose(idx);
        let mut diag = r_values[idx];
        for (k, ax) in axes.iter().enumerate() {
            let h = ax.spacing();
            let scale = if k < n_space { d / (h * h) } else { 1.0 / (h * h) };
            let i = multi[k];
            let m = ax.points();
            let stride = grid.stride(k);
            match ax.bc() {
                Bc::Periodic => {
                    let left = if i == 0 { m - 1 } else { i - 1 };
                    let right = if i + 1 == m { 0 } else { i + 1 };
                    let base = idx - i * stride;
                    trips.push((idx, base + left * stride, scale));
                    trips.push((idx, base + right * stride, scale));
                    diag += -2.0 * scale;
                }
                Bc::Neumann => {
                    let base = idx - i * stride;
                    if i > 0 {
                        trips.push((idx, base + (i - 1) * stride, scale));
                    }
                    if i + 1 < m {
                        trips.push((idx, base + (i + 1) * stride, scale));
                    }
                    let neighbors = (i > 0) as i32 + (i + 1 < m) as i32;
                    diag += -(neighbors as f64) * scale;
                }
                Bc::DirichletZero => {
                    let base = idx - i * stride;
                    if i > 0 {
                        trips.push((idx, base + (i - 1) * stride, scale));
                    }
                    if i + 1 < m {
                        trips.push((idx, base + (i + 1) * stride, scale));
                    }
                    diag += -2.0 * scale;
                }
            }
        }
        trips.push((idx, idx, diag));
    }
    let matrix = CsrMatrix::from_triplets(n, &trips)?;
    debug_assert!(matrix.is_exactly_symmetric());
    Ok(LinearOperator {
        matrix,
        r_values: r_values.to_vec(),
        diffusivity: d,
        r_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn grid_1d(bc: Bc, points: usize, len: f64) -> Grid {
        match bc {
            Bc::Periodic | Bc::DirichletZero => {
                Grid::new(vec![Axis::new(len, points, bc).unwrap()], vec![]).unwrap()
            }
            Bc::Neumann => Grid::new(vec![], vec![Axis::new(len, points, bc).unwrap()]).unwrap(),
        }
    }

    #[test]
    fn periodic_row_is_wrapped_second_difference() {
        let g = grid_1d(Bc::Periodic, 4, 1.0);
        let op = assemble_operator(&g, &[0.0; 4], 1.0).unwrap();
        let s = 16.0; // 1/h² with h = 1/4
        assert_eq!(op.matrix.get(0, 0), -2.0 * s);
        assert_eq!(op.matrix.get(0, 1), s);
        assert_eq!(op.matrix.get(0, 3), s);
        assert_eq!(op.matrix.get(2, 1), s);
    }

    #[test]
    fn neumann_boundary_row_is_folded_and_conservative() {
        let g = grid_1d(Bc::Neumann, 5, 1.0);
        let op = assemble_operator(&g, &[0.0; 5], 1.0).unwrap();
        let s = 16.0; // 1/h² with h = 1/4
        assert_eq!(op.matrix.get(0, 0), -s);
        assert_eq!(op.matrix.get(0, 1), s);
        assert_eq!(op.matrix.get(1, 0), s);
        for i in 0..5 {
            assert_eq!(op.matrix.row_sum(i), 0.0, "row {i} must sum to zero");
        }
    }

    #[test]
    fn dirichlet_keeps_full_diagonal_at_boundary() {
        let g = grid_1d(Bc::DirichletZero, 3, 1.0);
        let op = assemble_operator(&g, &[0.0; 3], 1.0).unwrap();
        let s = 16.0; // 1/h² with h = 1/4
        assert_eq!(op.matrix.get(0, 0), -2.0 * s);
        assert_eq!(op.matrix.get(0, 1), s);
        assert_eq!(op.matrix.get(0, 2), 0.0);
    }

    #[test]
    fn diffusivity_scales_space_part_only() {
        let g = Grid::new(
            vec![Axis::new(1.0, 4, Bc::Periodic).unwrap()],
            vec![Axis::new(1.0, 5, Bc::Neumann).unwrap()],
        )
        .unwrap();
        let n = g.total_nodes();
        let op1 = assemble_operator(&g, &vec![0.0; n], 1.0).unwrap();
        let op4 = assemble_operator(&g, &vec![0.0; n], 4.0).unwrap();
        // Space neighbor of node (0,0) is (1,0) = linear index 5.
        assert_eq!(op4.matrix.get(0, 5), 4.0 * op1.matrix.get(0, 5));
        // Phenotype neighbor (0,1) = linear index 1 is unscaled.
        assert_eq!(op4.matrix.get(0, 1), op1.matrix.get(0, 1));
    }

    #[test]
    fn r_lands_on_diagonal() {
        let g = grid_1d(Bc::Periodic, 4, 1.0);
        let r = [1.0, 2.0, 3.0, 4.0];
        let op = assemble_operator(&g, &r, 1.0).unwrap();
        for i in 0..4 {
            assert_eq!(op.matrix.get(i, i), -32.0 + r[i]);
        }
        assert_eq!(op.r_max, 4.0);
    }

    #[test]
    fn nan_fitness_rejected() {
        let g = grid_1d(Bc::Periodic, 4, 1.0);
        let r = [0.0, f64::NAN, 0.0, 0.0];
        assert!(matches!(
            assemble_operator(&g, &r, 1.0),
            Err(Error::NonFiniteSample(_))
        ));
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric_on_mixed_grid() {
        let g = Grid::new(
            vec![
                Axis::new(1.0, 4, Bc::Periodic).unwrap(),
                Axis::new(1.5, 5, Bc::DirichletZero).unwrap(),
            ],
            vec![
                Axis::new(2.0, 4, Bc::Neumann).unwrap(),
                Axis::new(1.0, 3, Bc::DirichletZero).unwrap(),
            ],
        )
        .unwrap();
        let n = g.total_nodes();
        let r: Vec<f64> = (0..n).map(|i| (i as f64 * 0.71).sin()).collect();
        let op = assemble_operator(&g, &r, 2.5).unwrap();
        assert!(op.matrix.is_exactly_symmetric());
    }
}
