//! Principal eigenvalue of the generator and its parameter dependence.
//!
//! The solver is shift-inverted power iteration: with μ = (max sampled r) + 1
//! the matrix μI − A is symmetric positive definite (the Laplacian part is
//! negative semidefinite), each iteration solves (μI − A) y = φ by CG, and
//! the iteration converges to the top eigenpair of A. Off-diagonal entries
//! of A are nonnegative, so μI − A is an M-matrix, its inverse maps positive
//! vectors to positive vectors, and the iteration started from the ones
//! vector keeps a strictly positive eigenvector (the discrete ground state
//! is simple). Everything is deterministic: fixed start vector, fixed
//! iteration order, no randomness.
//!
//! Truncation sequences realize the eigenvalue of the problem on the whole
//! space as a monotone limit: windows are snapped onto the fixed-spacing
//! lattice so that each window's node set embeds into the next one's and
//! into the periodic reference grid. With that alignment the discrete
//! eigenvalues are provably nondecreasing in the radius and bounded by the
//! reference value (extend an eigenvector by zero, or restrict the positive
//! periodic eigenvector), so the monotonicity assertions hold to solver
//! tolerance rather than only asymptotically.

use crate::error::{Error, Result};
use crate::grid::{Axis, Bc, Grid};
use crate::landscape::{rescale_period, sample_on_grid, Landscape};
use crate::operator::{assemble_operator, LinearOperator};
use crate::sparse::{cg, dot, norm2};
use crate::tol;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// Eigenvector, ‖φ‖₂ = 1, strictly positive.
    pub phi: Vec<f64>,
    /// ‖Aφ − λφ‖₂ at acceptance.
    pub residual: f64,
    /// Power iterations used.
    pub iterations: usize,
    /// Total inner CG iterations.
    pub cg_iterations: usize,
}

/// Rayleigh quotient ⟨Av, v⟩ / ⟨v, v⟩. By the variational principle this
/// never exceeds the principal eigenvalue.
pub fn rayleigh_quotient(op: &LinearOperator, v: &[f64]) -> Result<f64> {
    if v.len() != op.matrix.n() {
        return Err(Error::Dimension(format!(
            "vector length {} does not match operator size {}",
            v.len(),
            op.matrix.n()
        )));
    }
    let nv2 = dot(v, v);
    if nv2 == 0.0 || !nv2.is_finite() {
        return Err(Error::SimInput("Rayleigh quotient of a zero or non-finite vector".into()));
    }
    let mut av = vec![0.0; v.len()];
    op.matrix.mul_vec(v, &mut av);
    Ok(dot(&av, v) / nv2)
}

/// Computes the top eigenpair of the assembled generator.
///
/// Accepts once the Rayleigh quotient has settled (change below
/// [`tol::EIGEN_DLAMBDA`]·(1+|λ|)) and ‖Aφ − λφ‖₂ ≤
/// [`tol::EIGEN_RESIDUAL`]·(1+|λ|). Errors if the iteration cap is hit or
/// the converged eigenvector is not strictly positive (which would indicate
/// an assembly bug, since the exact ground state is positive).
pub fn principal_eigenpair(op: &LinearOperator) -> Result<EigenResult> {
    let n = op.matrix.n();
    let mu = op.r_max + 1.0;
    let shifted = op.matrix.shift_negate(mu);
    let cg_cap = 40 * n + 200;

    let mut x = vec![1.0 / (n as f64).sqrt(); n]; // current normalized iterate
    let mut y = x.clone(); // CG solution / warm start
    let mut ax = vec![0.0; n];
    let mut lambda_prev = f64::INFINITY;
    let mut cg_total = 0usize;

    for iter in 1..=tol::EIGEN_MAX_ITERS {
        let rep = cg(&shifted, &x, &mut y, tol::CG_REL, cg_cap)?;
        cg_total += rep.iterations;
        let ny = norm2(&y);
        if !ny.is_finite() || ny == 0.0 {
            return Err(Error::EigenStall(format!(
                "inverse iteration produced a degenerate vector (‖y‖ = {ny})"
            )));
        }
        let inv = 1.0 / ny;
        for i in 0..n {
            x[i] = y[i] * inv;
        }
        op.matrix.mul_vec(&x, &mut ax);
        let lambda = dot(&ax, &x);
        let mut res2 = 0.0;
        for i in 0..n {
            let d = ax[i] - lambda * x[i];
            res2 += d * d;
        }
        let residual = res2.sqrt();
        let scale = 1.0 + lambda.abs();
        if (lambda - lambda_prev).abs() <= tol::EIGEN_DLAMBDA * scale
            && residual <= tol::EIGEN_RESIDUAL * scale
        {
            let mut phi = x;
            // Orient by the dominant component, then demand strict positivity.
            let dominant = phi
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if phi[dominant] < 0.0 {
                for v in &mut phi {
                    *v = -*v;
                }
            }
            let (min_idx, min_val) = phi
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i, *v))
                .unwrap_or((0, 0.0));
            if min_val <= 0.0 {
                return Err(Error::NonPositiveEigenvector(format!(
                    "φ[{min_idx}] = {min_val:e} after convergence (λ = {lambda})"
                )));
            }
            return Ok(EigenResult {
                lambda,
                phi,
                residual,
                iterations: iter,
                cg_iterations: cg_total,
            });
        }
        lambda_prev = lambda;
        // Warm start for the next solve: near convergence the solution is
        // close to φ/(μ − λ).
        let guess = 1.0 / (mu - lambda);
        for i in 0..n {
            y[i] = x[i] * guess;
        }
    }
    Err(Error::EigenStall(format!(
        "no convergence in {} power iterations (λ ≈ {lambda_prev})",
        tol::EIGEN_MAX_ITERS
    )))
}

/// Grid resolution policy shared by sweeps and truncation studies.
///
/// `space_nodes` is the node count per unit period (so the spatial spacing
/// is 1/space_nodes regardless of the period being swept); `pheno_nodes`
/// spans a Neumann box of width `pheno_extent` centered on 0, fixing the
/// phenotype spacing used by truncation windows too. Exactness of the
/// monotonicity guarantees is best when the spacings are exactly
/// representable (powers of two).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub space_nodes: usize,
    pub pheno_nodes: usize,
    pub pheno_extent: f64,
}

impl GridSettings {
    pub fn validate(&self) -> Result<()> {
        if self.space_nodes < 3 || self.pheno_nodes < 3 {
            return Err(Error::Config(format!(
                "grid needs at least 3 nodes per axis (got space {}, pheno {})",
                self.space_nodes, self.pheno_nodes
            )));
        }
        if !self.pheno_extent.is_finite() || self.pheno_extent <= 0.0 {
            return Err(Error::Config(format!(
                "pheno_extent {} must be finite and positive",
                self.pheno_extent
            )));
        }
        Ok(())
    }

    pub fn space_spacing(&self) -> f64 {
        1.0 / self.space_nodes as f64
    }

    pub fn pheno_spacing(&self) -> f64 {
        self.pheno_extent / (self.pheno_nodes - 1) as f64
    }

    /// Periodic-cell × Neumann-box grid for an n×p-dimensional landscape at
    /// the given period. `space_points` overrides the per-axis node count
    /// (otherwise round(space_nodes·period), keeping the spacing fixed).
    pub fn periodic_grid(
        &self,
        n: usize,
        p: usize,
        period: f64,
        space_points: Option<usize>,
    ) -> Result<Grid> {
        self.validate()?;
        let pts = match space_points {
            Some(pts) => pts,
            None => (((self.space_nodes as f64) * period).round() as usize).max(3),
        };
        let space = (0..n)
            .map(|_| Axis::new(period, pts, Bc::Periodic))
            .collect::<Result<Vec<_>>>()?;
        let pheno = (0..p)
            .map(|_| Axis::new(self.pheno_extent, self.pheno_nodes, Bc::Neumann))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(space, pheno)
    }
}

/// One computed eigenvalue in a sweep or truncation curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub nodes: usize,
}

fn eigen_point(
    landscape: &Landscape,
    grid: &Grid,
    offsets: &[f64],
    d: f64,
    parameter: f64,
) -> Result<SweepPoint> {
    let r = sample_on_grid(landscape, grid, offsets)?;
    let op = assemble_operator(grid, &r, d)?;
    let eig = principal_eigenpair(&op)?;
    Ok(SweepPoint {
        parameter,
        lambda: eig.lambda,
        residual: eig.residual,
        iterations: eig.iterations,
        nodes: grid.total_nodes(),
    })
}

/// λ as a function of the spatial period: rescales the landscape to period L
/// and solves on a periodic cell with spacing held at 1/space_nodes (node
/// count rounds to space_nodes·L unless overridden). The exact map is
/// continuous and nondecreasing in L; callers assert that on the samples.
pub fn lambda_of_period(
    landscape: &Landscape,
    diffusivity: f64,
    l_values: &[f64],
    settings: &GridSettings,
    space_points: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    settings.validate()?;
    if l_values.is_empty() {
        return Err(Error::Config("period sweep needs at least one L value".into()));
    }
    for &l in l_values {
        if !l.is_finite() || l <= 0.0 {
            return Err(Error::Config(format!("period {l} must be finite and positive")));
        }
    }
    l_values
        .par_iter()
        .map(|&l| {
            let rl = rescale_period(landscape, l)?;
            let grid =
                settings.periodic_grid(landscape.space_dim(), landscape.pheno_dim(), l, space_points)?;
            eigen_point(&rl, &grid, &vec![0.0; landscape.space_dim()], diffusivity, l)
        })
        .collect()
}

/// One diffusivity sample: the eigenvalue computed with diffusivity d
/// directly, and again through the exact rescaling identity
/// `λ_d[r] = λ[r^(1/√d)]` at matched node count. The two assemblies agree
/// up to floating-point rounding, so the residual is a solver cross-check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiffusivityPoint {
    pub diffusivity: f64,
    pub lambda: f64,
    pub lambda_scaled: f64,
    pub scaling_residual: f64,
    pub residual: f64,
    pub iterations: usize,
    pub nodes: usize,
}

/// λ as a function of diffusivity, each point computed two ways (direct and
/// via period rescaling). The exact map is continuous and nonincreasing in
/// d; discretely it is nonincreasing as well (the Rayleigh quotient is
/// pointwise nonincreasing in d).
pub fn lambda_of_diffusivity(
    landscape: &Landscape,
    d_values: &[f64],
    settings: &GridSettings,
) -> Result<Vec<DiffusivityPoint>> {
    settings.validate()?;
    if d_values.is_empty() {
        return Err(Error::Config("diffusivity sweep needs at least one value".into()));
    }
    for &d in d_values {
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::Config(format!("diffusivity {d} must be finite and positive")));
        }
    }
    d_values
        .par_iter()
        .map(|&d| {
            let n = landscape.space_dim();
            let p = landscape.pheno_dim();
            let grid = settings.periodic_grid(n, p, 1.0, None)?;
            let direct = eigen_point(landscape, &grid, &vec![0.0; n], d, d)?;
            let scaled = lambda_of_period(
                landscape,
                1.0,
                &[1.0 / d.sqrt()],
                settings,
                Some(settings.space_nodes),
            )?[0];
            Ok(DiffusivityPoint {
                diffusivity: d,
                lambda: direct.lambda,
                lambda_scaled: scaled.lambda,
                scaling_residual: (direct.lambda - scaled.lambda).abs(),
                residual: direct.residual,
                iterations: direct.iterations,
                nodes: direct.nodes,
            })
        })
        .collect()
}

/// Which domain truncation approximates the eigenvalue from below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationKind {
    /// Dirichlet window of radius R in space × the full Neumann phenotype
    /// box (for bounded phenotype domains).
    Mixed,
    /// Dirichlet window of radius R in every coordinate, space and
    /// phenotype.
    DirichletBall,
    /// Periodic in space × Dirichlet phenotype window of radius R (the
    /// truncation handling an unbounded phenotype domain).
    PeriodicDirichletTheta,
}

impl TruncationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TruncationKind::Mixed => "mixed",
            TruncationKind::DirichletBall => "dirichlet-ball",
            TruncationKind::PeriodicDirichletTheta => "periodic-dirichlet-theta",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationCurve {
    pub kind: TruncationKind,
    /// Radii after snapping to the lattice (strictly increasing).
    pub radii: Vec<f64>,
    pub points: Vec<SweepPoint>,
    /// Periodic × Neumann reference eigenvalue on the matching lattice.
    pub reference: SweepPoint,
    /// reference − λ(R) per radius; positive and decreasing.
    pub gaps: Vec<f64>,
}

/// Computes the truncated eigenvalue λ(R) over increasing radii plus the
/// periodic × Neumann reference, asserting the monotone-approximation
/// contract: λ(R) nondecreasing within `eps_mono` and never above
/// reference + `eps_mono` (use [`tol::MONOTONE_EPS`] unless a config says
/// otherwise).
///
/// Radii are snapped to the lattice spacing per axis role (space windows to
/// the space spacing, phenotype windows to the phenotype spacing) so windows
/// nest exactly; radii that collide after snapping are rejected.
pub fn eigen_truncation_sequence(
    landscape: &Landscape,
    diffusivity: f64,
    kind: TruncationKind,
    radii: &[f64],
    settings: &GridSettings,
    eps_mono: f64,
) -> Result<TruncationCurve> {
    settings.validate()?;
    if radii.is_empty() {
        return Err(Error::Config("truncation needs at least one radius".into()));
    }
    for &r in radii {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Config(format!("radius {r} must be finite and positive")));
        }
    }
    let n = landscape.space_dim();
    let p = landscape.pheno_dim();
    let hx = settings.space_spacing();
    let hth = settings.pheno_spacing();

    // Snap radii to integer lattice multiples (at least 2h so windows have
    // ≥ 3 interior nodes).
    let snap = |r: f64, h: f64| -> usize { ((r / h).round() as usize).max(2) };
    let kx: Vec<usize> = radii.iter().map(|&r| snap(r, hx)).collect();
    let kth: Vec<usize> = radii.iter().map(|&r| snap(r, hth)).collect();
    let snapped: Vec<f64> = match kind {
        TruncationKind::Mixed => kx.iter().map(|&k| k as f64 * hx).collect(),
        TruncationKind::DirichletBall | TruncationKind::PeriodicDirichletTheta => {
            kth.iter().map(|&k| k as f64 * hth).collect()
        }
    };
    let strictly_increasing = |ks: &[usize]| ks.windows(2).all(|w| w[0] < w[1]);
    let needs_x = matches!(kind, TruncationKind::Mixed | TruncationKind::DirichletBall);
    let needs_th = matches!(
        kind,
        TruncationKind::DirichletBall | TruncationKind::PeriodicDirichletTheta
    );
    if (needs_x && !strictly_increasing(&kx)) || (needs_th && !strictly_increasing(&kth)) {
        return Err(Error::Config(format!(
            "truncation radii {radii:?} do not snap to strictly increasing lattice multiples"
        )));
    }

    // Reference grid: periodic cell × Neumann box. For phenotype windows the
    // box spans the largest window so every window lattice embeds into it.
    let reference_grid = if needs_th {
        let kmax = *kth.last().expect("radii non-empty");
        let extent = 2.0 * kmax as f64 * hth;
        let pheno_pts = 2 * kmax + 1;
        let space = (0..n)
            .map(|_| Axis::new(1.0, settings.space_nodes, Bc::Periodic))
            .collect::<Result<Vec<_>>>()?;
        let pheno = (0..p)
            .map(|_| Axis::new(extent, pheno_pts, Bc::Neumann))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(space, pheno)?
    } else {
        settings.periodic_grid(n, p, 1.0, Some(settings.space_nodes))?
    };
    let reference = eigen_point(landscape, &reference_grid, &vec![0.0; n], diffusivity, 0.0)?;

    let points: Vec<SweepPoint> = (0..radii.len())
        .into_par_iter()
        .map(|i| {
            let (space, offsets): (Vec<Axis>, Vec<f64>) = if needs_x {
                let rx = kx[i] as f64 * hx;
                let ax = Axis::new(2.0 * rx, 2 * kx[i] - 1, Bc::DirichletZero)?;
                ((0..n).map(|_| ax).collect(), vec![-rx; n])
            } else {
                (
                    (0..n)
                        .map(|_| Axis::new(1.0, settings.space_nodes, Bc::Periodic))
                        .collect::<Result<Vec<_>>>()?,
                    vec![0.0; n],
                )
            };
            let pheno: Vec<Axis> = if needs_th {
                let rth = kth[i] as f64 * hth;
                let ax = Axis::new(2.0 * rth, 2 * kth[i] - 1, Bc::DirichletZero)?;
                (0..p).map(|_| ax).collect()
            } else {
                (0..p)
                    .map(|_| Axis::new(settings.pheno_extent, settings.pheno_nodes, Bc::Neumann))
                    .collect::<Result<Vec<_>>>()?
            };
            let grid = Grid::new(space, pheno)?;
            eigen_point(landscape, &grid, &offsets, diffusivity, snapped[i])
        })
        .collect::<Result<Vec<_>>>()?;

    for w in points.windows(2) {
        if w[1].lambda < w[0].lambda - eps_mono {
            return Err(Error::ExperimentFailed(format!(
                "{} truncation not monotone: λ({}) = {:.12e} > λ({}) = {:.12e}",
                kind.as_str(),
                w[0].parameter,
                w[0].lambda,
                w[1].parameter,
                w[1].lambda
            )));
        }
    }
    for pt in &points {
        if pt.lambda > reference.lambda + eps_mono {
            return Err(Error::ExperimentFailed(format!(
                "{} truncation exceeds the periodic reference: λ({}) = {:.12e} > {:.12e}",
                kind.as_str(),
                pt.parameter,
                pt.lambda,
                reference.lambda
            )));
        }
    }
    let gaps = points.iter().map(|pt| reference.lambda - pt.lambda).collect();
    Ok(TruncationCurve {
        kind,
        radii: snapped,
        points,
        reference,
        gaps,
    })
}
