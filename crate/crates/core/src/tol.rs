//! Numerical tolerances and safety factors, centralized so that tests and
//! library code agree on one set of numbers.
//!
//! Each constant notes what breaks if it is loosened.

/// Relative residual target for CG inside the eigensolver. The eigenvalue
/// residual floor is roughly this times (1 + sup r − λ), so 1e-12 keeps the
/// floor well under [`EIGEN_RESIDUAL`].
pub const CG_REL: f64 = 1e-12;

/// Relative residual target for CG in implicit diffusion steps. Tighter than
/// the generic target because per-step mass conservation is checked at
/// 1e-12 relative and the drift is bounded by the solve residual.
pub const CG_REL_DIFFUSION: f64 = 1e-14;

/// Eigenpair acceptance: ‖Aφ − λφ‖₂ ≤ EIGEN_RESIDUAL · (1 + |λ|).
pub const EIGEN_RESIDUAL: f64 = 1e-10;

/// Power iteration stops only once successive Rayleigh quotients differ by
/// less than EIGEN_DLAMBDA · (1 + |λ|) *and* the residual test holds.
pub const EIGEN_DLAMBDA: f64 = 1e-12;

/// Safety cap on power iterations before reporting non-convergence.
pub const EIGEN_MAX_ITERS: usize = 30_000;

/// Slack allowed when asserting monotonicity of eigenvalue curves
/// (truncation radius, spatial period, diffusivity). Discretization can
/// perturb the exact monotone ordering by at most solver noise; anything
/// above this is a real violation.
pub const MONOTONE_EPS: f64 = 1e-8;

/// Dead band δ around λ = 0 inside which the persistence/extinction
/// dichotomy is not asserted.
pub const DICHOTOMY_MARGIN: f64 = 0.05;

/// A run is classified extinct only if sup_x ρ fell below this.
pub const EXTINCT_EPS: f64 = 1e-4;

/// A run is classified persistent only if the tail window of sup_x ρ stays
/// above this.
pub const PERSIST_EPS: f64 = 1e-2;

/// Relative slack on the a-priori bound ‖ρ(t)‖∞ ≤ A; exceeding it signals
/// splitting error and triggers a step-size halving.
pub const APRIORI_SLACK: f64 = 1e-6;

/// Relative slack on the coth-in-time population bound monitor.
pub const COTH_SLACK: f64 = 1e-6;

/// Fixed-point tolerance for the Picard solver: successive ρ iterates must
/// agree to this in the sup norm, over the whole time slab.
pub const PICARD_RHO_TOL: f64 = 1e-10;

/// Upper bound on Picard sweeps per slab before giving up.
pub const PICARD_MAX_ITERS: usize = 60;

/// Agreement required between a directly assembled eigenvalue of r + c and
/// λ(r) + c. The identity is exact for the discrete operator, so only solver
/// noise contributes.
pub const SHIFT_CROSSCHECK: f64 = 1e-10;

/// Agreement required between λ computed with diffusivity d and via the
/// period rescaling L = d^(-1/2) at matched resolution.
pub const SCALING_RESIDUAL: f64 = 1e-6;

/// One-sided slack when comparing a measured extinction rate against λ:
/// measured slope ≤ λ + RATE_SLACK.
pub const RATE_SLACK: f64 = 0.05;

/// Step-size policy: dt ≤ DT_SAFETY / max(1, r̄ + A).
pub const DT_SAFETY: f64 = 0.1;

/// Relative tolerance for the scalar Newton solve that pins the endpoint
/// value of ρ inside the implicit reaction half-step. The residual is smooth
/// and convex, so Newton reaches this in a handful of iterations; looser
/// values would leak into the splitting's second-order error constant.
pub const ENDPOINT_RHO_TOL: f64 = 1e-14;

/// Entries of u in (−POSITIVITY_CLAMP·max u, 0) after an implicit solve are
/// rounded up to zero; anything more negative is a hard error.
pub const POSITIVITY_CLAMP: f64 = 1e-11;
