//! Tensor-product grids over space × phenotype.
//!
//! Node ordering: the phenotype index varies fastest, so the phenotype block
//! of one spatial node is contiguous and ρ-integration walks unit strides.
//!
//! Spacing conventions per boundary condition (axis length ℓ, n nodes):
//!
//! | bc            | h         | node coordinates        |
//! |---------------|-----------|-------------------------|
//! | Periodic      | ℓ/n       | 0, h, …, ℓ−h            |
//! | Neumann       | ℓ/(n−1)   | 0, h, …, ℓ (on boundary)|
//! | DirichletZero | ℓ/(n+1)   | h, …, ℓ−h (interior)    |
//!
//! Phenotype axes are always centered on 0 (a box [−ℓ/2, ℓ/2]); space axes
//! start at 0 and experiments shift Dirichlet windows with an explicit
//! offset.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bc {
    Periodic,
    Neumann,
    DirichletZero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    length: f64,
    points: usize,
    bc: Bc,
}

impl Axis {
    pub fn new(length: f64, points: usize, bc: Bc) -> Result<Axis> {
        if !length.is_finite() || length <= 0.0 {
            return Err(Error::InvalidAxis(format!("length {length} must be finite and positive")));
        }
        if points < 3 {
            return Err(Error::InvalidAxis(format!("{points} points (need at least 3)")));
        }
        Ok(Axis { length, points, bc })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn bc(&self) -> Bc {
        self.bc
    }

    pub fn spacing(&self) -> f64 {
        match self.bc {
            Bc::Periodic => self.length / self.points as f64,
            Bc::Neumann => self.length / (self.points - 1) as f64,
            Bc::DirichletZero => self.length / (self.points + 1) as f64,
        }
    }

    /// Local coordinate of node i in [0, length].
    pub fn coord(&self, i: usize) -> f64 {
        debug_assert!(i < self.points);
        match self.bc {
            Bc::Periodic | Bc::Neumann => i as f64 * self.spacing(),
            Bc::DirichletZero => (i + 1) as f64 * self.spacing(),
        }
    }

    /// Trapezoid quadrature weight of node i. Neumann boundary nodes carry
    /// half weight; DirichletZero endpoints are implicit zeros so every
    /// stored node weighs a full h; periodic axes are uniform.
    pub fn quad_weight(&self, i: usize) -> f64 {
        debug_assert!(i < self.points);
        let h = self.spacing();
        match self.bc {
            Bc::Periodic | Bc::DirichletZero => h,
            Bc::Neumann => {
                if i == 0 || i + 1 == self.points {
                    0.5 * h
                } else {
                    h
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    space: Vec<Axis>,
    pheno: Vec<Axis>,
    /// Strides per axis (space axes first, phenotype last and fastest).
    strides: Vec<usize>,
    space_nodes: usize,
    pheno_nodes: usize,
}

impl Grid {
    /// Builds a grid from space axes and phenotype axes. At most two of
    /// each; at least one axis in total. Space axes must be Periodic or
    /// DirichletZero (truncation windows); phenotype axes Neumann or
    /// DirichletZero. Degenerate grids with zero space or zero phenotype
    /// axes are allowed — factor problems of separable landscapes use them.
    pub fn new(space: Vec<Axis>, pheno: Vec<Axis>) -> Result<Grid> {
        if space.len() > 2 || pheno.len() > 2 {
            return Err(Error::Dimension(format!(
                "{} space and {} phenotype axes (at most 2 of each)",
                space.len(),
                pheno.len()
            )));
        }
        if space.is_empty() && pheno.is_empty() {
            return Err(Error::Dimension("grid needs at least one axis".into()));
        }
        for ax in &space {
            if ax.bc == Bc::Neumann {
                return Err(Error::InvalidAxis(
                    "space axes are Periodic or DirichletZero, not Neumann".into(),
                ));
            }
        }
        for ax in &pheno {
            if ax.bc == Bc::Periodic {
                return Err(Error::InvalidAxis(
                    "phenotype axes are Neumann or DirichletZero, not Periodic".into(),
                ));
            }
        }
        let mut total: usize = 1;
        for ax in space.iter().chain(&pheno) {
            total = total
                .checked_mul(ax.points)
                .ok_or_else(|| Error::Dimension("node count overflow".into()))?;
        }
        let pheno_nodes: usize = pheno.iter().map(|a| a.points).product();
        let space_nodes: usize = space.iter().map(|a| a.points).product();
        let n_axes = space.len() + pheno.len();
        let mut strides = vec![1usize; n_axes];
        let sizes: Vec<usize> = space.iter().chain(&pheno).map(|a| a.points).collect();
        for k in (0..n_axes.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        Ok(Grid {
            space,
            pheno,
            strides,
            space_nodes,
            pheno_nodes,
        })
    }

    pub fn space(&self) -> &[Axis] {
        &self.space
    }

    pub fn pheno(&self) -> &[Axis] {
        &self.pheno
    }

    /// All axes, space first, phenotype last (= fastest varying).
    pub fn axes(&self) -> impl Iterator<Item = &Axis> {
        self.space.iter().chain(&self.pheno)
    }

    pub fn n_axes(&self) -> usize {
        self.space.len() + self.pheno.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.space_nodes * self.pheno_nodes
    }

    pub fn space_nodes(&self) -> usize {
        self.space_nodes
    }

    pub fn pheno_nodes(&self) -> usize {
        self.pheno_nodes
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Spatial node owning a linear node index.
    pub fn space_of(&self, idx: usize) -> usize {
        idx / self.pheno_nodes
    }

    /// Multi-index (one entry per axis, space first) of a linear index.
    pub fn decompose(&self, idx: usize) -> Vec<usize> {
        debug_assert!(idx < self.total_nodes());
        let mut rest = idx;
        let mut multi = vec![0usize; self.n_axes()];
        for k in 0..self.n_axes() {
            multi[k] = rest / self.strides[k];
            rest %= self.strides[k];
        }
        multi
    }

    pub fn compose(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.n_axes());
        multi.iter().zip(&self.strides).map(|(m, s)| m * s).sum()
    }

    /// Physical coordinates (x, θ) of a node. Space coordinates are the
    /// local axis coordinate plus the per-axis offset (windows centered on 0
    /// pass offset −R); phenotype coordinates are centered so the box is
    /// [−ℓ/2, ℓ/2].
    pub fn position(&self, idx: usize, space_offset: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(space_offset.len(), self.space.len());
        let multi = self.decompose(idx);
        let x = self
            .space
            .iter()
            .enumerate()
            .map(|(k, ax)| ax.coord(multi[k]) + space_offset[k])
            .collect();
        let th = self
            .pheno
            .iter()
            .enumerate()
            .map(|(k, ax)| ax.coord(multi[self.space.len() + k]) - 0.5 * ax.length)
            .collect();
        (x, th)
    }

    /// Tensor trapezoid weights over the phenotype block (length
    /// `pheno_nodes`). ρ(x) = Σ_p w_p · u[x·P + p].
    pub fn pheno_weights(&self) -> Vec<f64> {
        tensor_weights(&self.pheno)
    }

    /// Tensor trapezoid weights over the spatial block (length
    /// `space_nodes`); uniform h on periodic axes.
    pub fn space_weights(&self) -> Vec<f64> {
        tensor_weights(&self.space)
    }

    /// Per-node tensor weight over all axes (length `total_nodes`).
    pub fn node_weights(&self) -> Vec<f64> {
        let ws = self.space_weights();
        let wp = self.pheno_weights();
        let mut w = Vec::with_capacity(self.total_nodes());
        for s in &ws {
            for p in &wp {
                w.push(s * p);
            }
        }
        w
    }
}

fn tensor_weights(axes: &[Axis]) -> Vec<f64> {
    let mut w = vec![1.0];
    for ax in axes {
        let mut next = Vec::with_capacity(w.len() * ax.points);
        for base in &w {
            for i in 0..ax.points {
                next.push(base * ax.quad_weight(i));
            }
        }
        w = next;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_follows_bc_convention() {
        let per = Axis::new(1.0, 8, Bc::Periodic).unwrap();
        let neu = Axis::new(1.0, 9, Bc::Neumann).unwrap();
        let dir = Axis::new(1.0, 7, Bc::DirichletZero).unwrap();
        assert_eq!(per.spacing(), 0.125);
        assert_eq!(neu.spacing(), 0.125);
        assert_eq!(dir.spacing(), 0.125);
        assert_eq!(per.coord(3), 0.375);
        assert_eq!(neu.coord(8), 1.0);
        assert_eq!(dir.coord(0), 0.125);
        assert_eq!(dir.coord(6), 0.875);
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(Axis::new(1.0, 2, Bc::Neumann).is_err());
        assert!(Axis::new(0.0, 8, Bc::Periodic).is_err());
        assert!(Axis::new(f64::NAN, 8, Bc::Periodic).is_err());
    }

    #[test]
    fn node_counts_multiply() {
        let g = Grid::new(
            vec![Axis::new(1.0, 8, Bc::Periodic).unwrap()],
            vec![Axis::new(1.0, 9, Bc::Neumann).unwrap()],
        )
        .unwrap();
        assert_eq!(g.total_nodes(), 72);
        let g2 = Grid::new(
            vec![
                Axis::new(1.0, 4, Bc::Periodic).unwrap(),
                Axis::new(1.0, 4, Bc::Periodic).unwrap(),
            ],
            vec![Axis::new(1.0, 5, Bc::Neumann).unwrap()],
        )
        .unwrap();
        assert_eq!(g2.total_nodes(), 80);
    }

    #[test]
    fn phenotype_index_is_fastest() {
        let g = Grid::new(
            vec![Axis::new(1.0, 4, Bc::Periodic).unwrap()],
            vec![Axis::new(1.0, 5, Bc::Neumann).unwrap()],
        )
        .unwrap();
        assert_eq!(g.compose(&[0, 1]), 1);
        assert_eq!(g.compose(&[1, 0]), 5);
        assert_eq!(g.space_of(7), 1);
    }

    #[test]
    fn compose_decompose_roundtrip() {
        let g = Grid::new(
            vec![
                Axis::new(1.0, 4, Bc::Periodic).unwrap(),
                Axis::new(2.0, 5, Bc::DirichletZero).unwrap(),
            ],
            vec![
                Axis::new(1.0, 3, Bc::Neumann).unwrap(),
                Axis::new(1.5, 6, Bc::DirichletZero).unwrap(),
            ],
        )
        .unwrap();
        for idx in 0..g.total_nodes() {
            assert_eq!(g.compose(&g.decompose(idx)), idx, "idx={idx}");
        }
    }

    #[test]
    fn space_bc_restrictions_enforced() {
        assert!(Grid::new(vec![Axis::new(1.0, 4, Bc::Neumann).unwrap()], vec![]).is_err());
        assert!(Grid::new(vec![], vec![Axis::new(1.0, 4, Bc::Periodic).unwrap()]).is_err());
        assert!(Grid::new(vec![], vec![]).is_err());
    }

    #[test]
    fn neumann_weights_sum_to_length() {
        let ax = Axis::new(2.0, 9, Bc::Neumann).unwrap();
        let total: f64 = (0..9).map(|i| ax.quad_weight(i)).sum();
        assert!((total - 2.0).abs() < 1e-15, "total={total}");
    }

    #[test]
    fn pheno_positions_are_centered() {
        let g = Grid::new(
            vec![Axis::new(1.0, 4, Bc::Periodic).unwrap()],
            vec![Axis::new(2.0, 5, Bc::Neumann).unwrap()],
        )
        .unwrap();
        let (x, th) = g.position(0, &[0.0]);
        assert_eq!(x[0], 0.0);
        assert_eq!(th[0], -1.0);
        let (_, th_last) = g.position(4, &[0.0]);
        assert_eq!(th_last[0], 1.0);
    }
}
