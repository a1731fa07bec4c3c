//! Time integration of the nonlocal dynamics ∂ₜu = dΔₓu + Δ_θu + u(r − ρ).
//!
//! The step is a palindromic splitting: a half-step of the reaction, a full
//! diffusion step, then the *adjoint* half-step of the reaction. The opening
//! half is the exact exponential u ← u·exp(Δ·(r − ρ)) with ρ frozen at the
//! substep start; the closing half freezes ρ at its own endpoint value
//! instead, which takes one scalar Newton solve per spatial node (see
//! `reaction_half_adjoint`). Diffusion is Crank–Nicolson in lumped-mass
//! form: (W + dt/2·K)u⁺ = (W − dt/2·K)u with W the diagonal of trapezoid
//! quadrature weights and K the symmetric stiffness matrix. The left factor
//! is a symmetric M-matrix for every dt; the right factor is entrywise
//! nonnegative exactly when dt stays below
//! [`DiffusionSolver::dt_positivity`], and under that cap the diffusion map
//! preserves positivity and obeys a discrete maximum principle. On
//! Neumann/periodic grids the columns of K sum to zero, so the quadrature
//! mass Σ wᵢuᵢ is conserved to solver accuracy, and after θ-integration the
//! diffusion step reduces to a Crank–Nicolson spatial heat step for ρ
//! itself — which is why the θ-integral stays below the a-priori ceiling
//! A = max(‖ρ(0)‖∞, r̄) under the dt policy.
//!
//! The step-size cap is not an accuracy knob that could be dropped: by a
//! classical order barrier (Bolley & Crouzeix, 1978) no rational one-step
//! method that preserves positivity *unconditionally* exceeds first order,
//! so a second-order scheme has to buy positivity with a step-size
//! restriction. Each substep here is self-adjoint — the reaction pair by the
//! endpoint freezing, Crank–Nicolson classically — so the composition is a
//! self-adjoint one-step map, and self-adjoint methods have even order:
//! the splitting is genuinely second order in dt.
//!
//! An independent Picard integrator (frozen-coefficient Crank–Nicolson
//! iterated to a fixed point of ρ, slab by slab) serves as the oracle that
//! the splitting is consistent: both are second order in dt and approach
//! each other at that rate.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::landscape::{sample_on_grid, Landscape};
use crate::sparse::{cg, CsrMatrix};
use crate::tol;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// ρ(x) = ∫ u(x, θ) dθ by tensor trapezoid quadrature over the phenotype
/// block (length `space_nodes`). On a grid without phenotype axes this is u
/// itself (point evaluation).
pub fn compute_rho(grid: &Grid, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != grid.total_nodes() {
        return Err(Error::Dimension(format!(
            "u has {} entries but the grid has {} nodes",
            u.len(),
            grid.total_nodes()
        )));
    }
    let pw = grid.pheno_weights();
    let mut rho = Vec::with_capacity(grid.space_nodes());
    for chunk in u.chunks(grid.pheno_nodes()) {
        rho.push(chunk.iter().zip(&pw).map(|(v, w)| v * w).sum());
    }
    Ok(rho)
}

/// Full integral ∫∫ u dx dθ by tensor trapezoid quadrature.
pub fn total_mass(grid: &Grid, u: &[f64]) -> f64 {
    grid.node_weights().iter().zip(u).map(|(w, v)| w * v).sum()
}

/// The invariant ceiling on ‖ρ(t)‖∞: the maximum of the initial value and
/// the fitness supremum.
pub fn apriori_ceiling(rho0_sup: f64, r_sup: f64) -> f64 {
    rho0_sup.max(r_sup)
}

/// Default step size: dt ≤ 0.1/max(1, r̄ + A) keeps the half-step reaction
/// map monotone on [0, A] (so the ceiling is never overshot) and the
/// splitting error small relative to the reaction scale.
pub fn dt_policy(r_sup: f64, a: f64) -> f64 {
    tol::DT_SAFETY / 1.0_f64.max(r_sup + a)
}

/// Explicit decay ceiling on sup_x ρ after elapsed time τ:
/// √H·coth(√H·τ + arcoth((ρ_sup + √H)/√H)). Evaluated in the
/// numerically stable form √H / tanh(√H·τ + ½ln((ρ_sup + 2√H)/ρ_sup)),
/// which handles ρ_sup = 0 (→ √H) without special cases. Increasing in both
/// H and ρ_sup, so monitors may feed running maxima without losing validity.
pub fn coth_bound(h: f64, tau: f64, rho_sup: f64) -> Result<f64> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::SimInput(format!("coth bound needs H > 0, got {h}")));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::SimInput(format!("coth bound needs τ ≥ 0, got {tau}")));
    }
    if !rho_sup.is_finite() || rho_sup < 0.0 {
        return Err(Error::SimInput(format!("coth bound needs ρ_sup ≥ 0, got {rho_sup}")));
    }
    let s = h.sqrt();
    // arcoth((ρ+√H)/√H) = ½·ln((ρ+2√H)/ρ); +∞ at ρ = 0, where tanh(∞) = 1.
    let a = 0.5 * ((rho_sup + 2.0 * s) / rho_sup).ln();
    Ok(s / (s * tau + a).tanh())
}

/// Running-maximum record of the bound monitors over a simulation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Monitors {
    pub rho_sup_max: f64,
    pub apriori_violations: usize,
    /// max over checks of ‖ρ‖∞ / A (meaningful when A > 0).
    pub worst_apriori_ratio: f64,
    pub coth_checks: usize,
    pub coth_violations: usize,
    pub worst_coth_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
    pub mass: f64,
    pub monitors: Monitors,
}

impl SimState {
    pub fn new(grid: &Grid, u: Vec<f64>) -> Result<SimState> {
        if u.len() != grid.total_nodes() {
            return Err(Error::Dimension(format!(
                "initial datum has {} entries but the grid has {} nodes",
                u.len(),
                grid.total_nodes()
            )));
        }
        for (i, &v) in u.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::SimInput(format!("initial datum entry u[{i}] = {v}")));
            }
        }
        let rho = compute_rho(grid, &u)?;
        let mass = total_mass(grid, &u);
        Ok(SimState {
            t: 0.0,
            u,
            rho,
            mass,
            monitors: Monitors::default(),
        })
    }

    /// Recomputes ρ and the mass from u (called after every substep so the
    /// stored ρ always matches u).
    pub fn refresh(&mut self, grid: &Grid) -> Result<()> {
        let pw = grid.pheno_weights();
        let p = grid.pheno_nodes();
        for (x, chunk) in self.u.chunks(p).enumerate() {
            self.rho[x] = chunk.iter().zip(&pw).map(|(v, w)| v * w).sum();
        }
        self.mass = total_mass(grid, &self.u);
        if !self.mass.is_finite() {
            return Err(Error::StepRejected(format!(
                "state became non-finite at t = {}",
                self.t
            )));
        }
        Ok(())
    }

    pub fn rho_sup(&self) -> f64 {
        self.rho.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    pub fn u_sup(&self) -> f64 {
        self.u.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    /// Consistency check: stored ρ matches a fresh quadrature of u to 1e−13
    /// relative.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let fresh = compute_rho(grid, &self.u)?;
        for (x, (&a, &b)) in self.rho.iter().zip(&fresh).enumerate() {
            if (a - b).abs() > 1e-13 * (1.0 + b.abs()) {
                return Err(Error::SimInput(format!(
                    "stored ρ[{x}] = {a} drifted from recomputed {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Checks ‖ρ‖∞ ≤ A·(1 + slack) and records the outcome in the monitors.
/// Returns true when the ceiling holds.
pub fn rho_apriori_bound(state: &mut SimState, a: f64) -> bool {
    let sup = state.rho_sup();
    state.monitors.rho_sup_max = state.monitors.rho_sup_max.max(sup);
    if a > 0.0 {
        state.monitors.worst_apriori_ratio = state.monitors.worst_apriori_ratio.max(sup / a);
    }
    let ok = sup <= a * (1.0 + tol::APRIORI_SLACK);
    if !ok {
        state.monitors.apriori_violations += 1;
    }
    ok
}

/// Crank–Nicolson diffusion solver in lumped-mass form. Owns the stiffness
/// matrix K = d·Kₓ + K_θ (mass-weighted, symmetric, positive semidefinite)
/// and caches the SPD system W + dt/2·K per distinct dt.
#[derive(Debug, Clone)]
pub struct DiffusionSolver {
    grid: Grid,
    weights: Vec<f64>,
    stiffness: CsrMatrix,
    diffusivity: f64,
    systems: BTreeMap<u64, CsrMatrix>,
    pub cg_iterations: usize,
}

impl DiffusionSolver {
    pub fn new(grid: &Grid, diffusivity: f64) -> Result<DiffusionSolver> {
        if !diffusivity.is_finite() || diffusivity <= 0.0 {
            return Err(Error::SimInput(format!(
                "diffusivity {diffusivity} must be finite and positive"
            )));
        }
        let n = grid.total_nodes();
        let axes: Vec<_> = grid.axes().copied().collect();
        let n_space = grid.space().len();
        let weights = grid.node_weights();
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(n * (2 * axes.len() + 1));
        for idx in 0..n {
            let multi = grid.decompose(idx);
            let mut diag = 0.0;
            for (a, ax) in axes.iter().enumerate() {
                let scale = if a < n_space { diffusivity } else { 1.0 };
                let h = ax.spacing();
                let stride = grid.stride(a);
                let i = multi[a];
                let pts = ax.points();
                // Product of the other axes' quadrature weights; identical
                // (bitwise) for both endpoints of an edge, which keeps K
                // exactly symmetric.
                let mut cross = 1.0;
                for (b, bx) in axes.iter().enumerate() {
                    if b != a {
                        cross *= bx.quad_weight(multi[b]);
                    }
                }
                let edge = scale * cross / h;
                let base = idx - i * stride;
                let mut neighbors = 0usize;
                match ax.bc() {
                    crate::grid::Bc::Periodic => {
                        let left = (i + pts - 1) % pts;
                        let right = (i + 1) % pts;
                        triplets.push((idx, base + left * stride, -edge));
                        triplets.push((idx, base + right * stride, -edge));
                        neighbors = 2;
                    }
                    crate::grid::Bc::Neumann | crate::grid::Bc::DirichletZero => {
                        if i > 0 {
                            triplets.push((idx, idx - stride, -edge));
                            neighbors += 1;
                        }
                        if i + 1 < pts {
                            triplets.push((idx, idx + stride, -edge));
                            neighbors += 1;
                        }
                    }
                }
                // Dirichlet rows keep the full 2/h weight (the boundary
                // value is clamped to zero); Neumann boundary rows drop the
                // missing edge, which is what makes columns sum to zero.
                let degree = match ax.bc() {
                    crate::grid::Bc::Neumann => neighbors,
                    _ => 2,
                };
                diag += edge * degree as f64;
            }
            triplets.push((idx, idx, diag));
        }
        let stiffness = CsrMatrix::from_triplets(n, &triplets)?;
        debug_assert!(stiffness.is_exactly_symmetric());
        Ok(DiffusionSolver {
            grid: grid.clone(),
            weights,
            stiffness,
            diffusivity,
            systems: BTreeMap::new(),
            cg_iterations: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    /// Largest dt for which the Crank–Nicolson right factor W − dt/2·K is
    /// entrywise nonnegative, i.e. 2·minᵢ Wᵢᵢ/Kᵢᵢ. Off-diagonal entries of K
    /// are ≤ 0, so only the diagonal can break nonnegativity; on a uniform
    /// grid the bound works out to 1/(d/hₓ² + 1/h_θ²). At the cap itself the
    /// smallest right-factor diagonal is zero up to rounding, and the clamp
    /// in [`Self::diffuse`] absorbs that dust.
    pub fn dt_positivity(&self) -> f64 {
        let mut cap = f64::INFINITY;
        for (i, &w) in self.weights.iter().enumerate() {
            let k = self.stiffness.get(i, i);
            if k > 0.0 {
                cap = cap.min(2.0 * w / k);
            }
        }
        cap
    }

    /// One Crank–Nicolson diffusion step: solves (W + dt/2·K)u⁺ = (W − dt/2·K)u
    /// in place. The left factor is an M-matrix for every dt and the right
    /// factor is entrywise nonnegative whenever dt ≤ [`Self::dt_positivity`],
    /// so under the cap exact solutions stay nonnegative; solver noise a hair
    /// below zero is clamped, anything worse is an error.
    pub fn diffuse(&mut self, u: &mut [f64], dt: f64) -> Result<()> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::SimInput(format!("diffusion step dt = {dt}")));
        }
        if u.len() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "u has {} entries but the solver grid has {}",
                u.len(),
                self.weights.len()
            )));
        }
        let mut ku = vec![0.0; u.len()];
        self.stiffness.mul_vec(u, &mut ku);
        let rhs: Vec<f64> = u
            .iter()
            .zip(&self.weights)
            .zip(&ku)
            .map(|((v, w), k)| v * w - 0.5 * dt * k)
            .collect();
        let (stiffness, weights, systems) = (&self.stiffness, &self.weights, &mut self.systems);
        let system = systems
            .entry(dt.to_bits())
            .or_insert_with(|| stiffness.scaled_add_diag(0.5 * dt, weights));
        let cap = 40 * u.len() + 200;
        let report = cg(system, &rhs, u, tol::CG_REL_DIFFUSION, cap)?;
        self.cg_iterations += report.iterations;
        let sup = u.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        for v in u.iter_mut() {
            if *v < 0.0 {
                if *v >= -tol::POSITIVITY_CLAMP * sup {
                    *v = 0.0;
                } else {
                    return Err(Error::StepRejected(format!(
                        "diffusion produced a negative value {:e} (scale {sup:e})",
                        *v
                    )));
                }
            }
        }
        Ok(())
    }
}

fn reaction_half(u: &mut [f64], r: &[f64], rho: &[f64], pheno_nodes: usize, delta: f64) {
    for (x, chunk) in u.chunks_mut(pheno_nodes).enumerate() {
        let rx = rho[x];
        let base = x * pheno_nodes;
        for (k, v) in chunk.iter_mut().enumerate() {
            *v *= (delta * (r[base + k] - rx)).exp();
        }
    }
}

/// Endpoint value of ρ for the implicit reaction half-step: the root of
/// P·e^{δP} = m. g(P) = P·e^{δP} − m is increasing and convex on P ≥ 0 with
/// g(0) ≤ 0 and g(m) ≥ 0, so Newton started at P = m converges monotonically
/// from above, quadratically, and never leaves [0, m].
fn endpoint_rho(m: f64, delta: f64) -> Result<f64> {
    if m <= 0.0 {
        return Ok(0.0);
    }
    if delta == 0.0 {
        return Ok(m);
    }
    let mut p = m;
    for _ in 0..50 {
        let e = (delta * p).exp();
        let next = p - (p * e - m) / (e * (1.0 + delta * p));
        if !next.is_finite() {
            break;
        }
        if (next - p).abs() <= tol::ENDPOINT_RHO_TOL * (1.0 + p) {
            return Ok(next.max(0.0));
        }
        p = next;
    }
    Err(Error::StepRejected(format!(
        "endpoint ρ solve did not converge (mass integral {m:e}, half-step {delta:e})"
    )))
}

/// Adjoint reaction half-step: u ← u·exp(δ·(r − P)) where the frozen ρ is
/// the substep's own *endpoint* value P(x), characterized per spatial node
/// by P·e^{δP} = ∫u·e^{δr}dθ. This is the exact adjoint of `reaction_half`
/// (inverse of the time-reversed map); closing a step with it is what makes
/// the splitting self-adjoint and hence second order. The multiplier is a
/// positive exponential, so positivity holds unconditionally, ρ of the
/// result equals P exactly by construction, and whenever ρ ≤ A and r̄ ≤ A on
/// entry the root satisfies P ≤ A with no smallness condition on δ.
fn reaction_half_adjoint(u: &mut [f64], r: &[f64], grid: &Grid, delta: f64) -> Result<()> {
    let p = grid.pheno_nodes();
    let pw = grid.pheno_weights();
    for (x, chunk) in u.chunks_mut(p).enumerate() {
        let base = x * p;
        let mut m = 0.0;
        for (k, v) in chunk.iter_mut().enumerate() {
            *v *= (delta * r[base + k]).exp();
            m += pw[k] * *v;
        }
        let rho_end = endpoint_rho(m, delta)?;
        let decay = (-delta * rho_end).exp();
        for v in chunk.iter_mut() {
            *v *= decay;
        }
    }
    Ok(())
}

/// One splitting step of the full nonlocal dynamics: half reaction (exact
/// exponential, ρ frozen at its fresh start value), Crank–Nicolson
/// diffusion, then the adjoint reaction half (ρ frozen at its own endpoint
/// value). The palindromic pairing makes the step self-adjoint, hence second
/// order in dt. Both reaction halves multiply by positive exponentials, and
/// the diffusion map preserves positivity for dt up to
/// [`DiffusionSolver::dt_positivity`]; beyond that cap a step may be
/// rejected. ρ and the mass are refreshed after every substep.
pub fn step(
    state: &mut SimState,
    dt: f64,
    r_values: &[f64],
    solver: &mut DiffusionSolver,
) -> Result<()> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::SimInput(format!("step size dt = {dt}")));
    }
    if r_values.len() != state.u.len() {
        return Err(Error::Dimension(format!(
            "r has {} entries but the state has {}",
            r_values.len(),
            state.u.len()
        )));
    }
    let grid = solver.grid().clone();
    let p = grid.pheno_nodes();
    let half = 0.5 * dt;
    reaction_half(&mut state.u, r_values, &state.rho, p, half);
    state.refresh(&grid)?;
    solver.diffuse(&mut state.u, dt)?;
    state.refresh(&grid)?;
    reaction_half_adjoint(&mut state.u, r_values, &grid, half)?;
    state.refresh(&grid)?;
    state.t += dt;
    Ok(())
}

/// One splitting step of the LINEARIZED flow: the reaction coefficient uses
/// a caller-supplied frozen ρ instead of the state's own, so the exponential
/// half-steps already are the exact reaction flow and no adjoint closing is
/// needed. Every substep is order-preserving — positive multipliers, and for
/// dt ≤ [`DiffusionSolver::dt_positivity`] the Crank–Nicolson map has a
/// nonnegative right factor and an M-matrix left factor — so two states
/// ordered u₀ᵃ ≤ u₀ᵇ stay ordered step after step: the discrete comparison
/// principle used by the property tests.
pub fn step_frozen(
    state: &mut SimState,
    dt: f64,
    r_values: &[f64],
    rho_frozen: &[f64],
    solver: &mut DiffusionSolver,
) -> Result<()> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::SimInput(format!("step size dt = {dt}")));
    }
    if r_values.len() != state.u.len() {
        return Err(Error::Dimension(format!(
            "r has {} entries but the state has {}",
            r_values.len(),
            state.u.len()
        )));
    }
    let grid = solver.grid().clone();
    let p = grid.pheno_nodes();
    if rho_frozen.len() != grid.space_nodes() {
        return Err(Error::Dimension(format!(
            "frozen ρ has {} entries but the grid has {} spatial nodes",
            rho_frozen.len(),
            grid.space_nodes()
        )));
    }
    let half = 0.5 * dt;
    reaction_half(&mut state.u, r_values, rho_frozen, p, half);
    solver.diffuse(&mut state.u, dt)?;
    reaction_half(&mut state.u, r_values, rho_frozen, p, half);
    state.refresh(&grid)?;
    state.t += dt;
    Ok(())
}

/// Decay-ceiling monitor: charges the coth bound from the start state and
/// checks every step against it. H is evaluated from the simulation as
/// r̄·sup_x ∫_{‖θ‖≤M} u dθ + ‖ρ‖∞·sup_{‖θ‖>M} r⁺ and fed as a running
/// maximum (the bound is increasing in H, so that stays valid). With no tail
/// radius the ball covers the whole phenotype box and the tail term is
/// empty.
#[derive(Debug, Clone)]
pub struct CothMonitor {
    t0: f64,
    rho_sup0: f64,
    h_run: f64,
    ball_weights: Vec<f64>,
    tail_sup_r_pos: f64,
    r_sup: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CothReport {
    pub checks: usize,
    pub violations: usize,
    pub worst_ratio: f64,
    pub h_final: f64,
}

impl CothMonitor {
    pub fn new(
        grid: &Grid,
        r_values: &[f64],
        tail_radius: Option<f64>,
        state: &SimState,
    ) -> Result<CothMonitor> {
        if r_values.len() != grid.total_nodes() {
            return Err(Error::Dimension(format!(
                "r has {} entries but the grid has {} nodes",
                r_values.len(),
                grid.total_nodes()
            )));
        }
        let pw = grid.pheno_weights();
        let p = grid.pheno_nodes();
        let mut ball_weights = pw.clone();
        let mut in_ball = vec![true; p];
        if let Some(m) = tail_radius {
            for k in 0..p {
                // Phenotype coordinates of block index k (space index 0 is
                // arbitrary — θ does not depend on it).
                let (_, th) = grid.position(k, &vec![0.0; grid.space().len()]);
                let norm = th.iter().map(|t| t * t).sum::<f64>().sqrt();
                if norm > m {
                    ball_weights[k] = 0.0;
                    in_ball[k] = false;
                }
            }
        }
        let mut tail_sup_r_pos = 0.0_f64;
        let mut r_sup = f64::NEG_INFINITY;
        for (idx, &rv) in r_values.iter().enumerate() {
            r_sup = r_sup.max(rv);
            if !in_ball[idx % p] {
                tail_sup_r_pos = tail_sup_r_pos.max(rv.max(0.0));
            }
        }
        let mut mon = CothMonitor {
            t0: state.t,
            rho_sup0: state.rho_sup(),
            h_run: 0.0,
            ball_weights,
            tail_sup_r_pos,
            r_sup,
        };
        mon.h_run = mon.h_of(state);
        Ok(mon)
    }

    fn h_of(&self, state: &SimState) -> f64 {
        let p = self.ball_weights.len();
        let mut ball_sup = 0.0_f64;
        for chunk in state.u.chunks(p) {
            let v: f64 = chunk.iter().zip(&self.ball_weights).map(|(u, w)| u * w).sum();
            ball_sup = ball_sup.max(v);
        }
        self.r_sup * ball_sup + state.rho_sup() * self.tail_sup_r_pos
    }

    /// Updates H and checks the state against the bound, recording the
    /// outcome in the state's monitors. No check happens while H ≤ 0 (the
    /// bound is defined for H > 0 only).
    pub fn observe(&mut self, state: &mut SimState) -> Result<()> {
        self.h_run = self.h_run.max(self.h_of(state));
        if self.h_run <= 0.0 {
            return Ok(());
        }
        let bound = coth_bound(self.h_run, state.t - self.t0, self.rho_sup0)?;
        let ratio = state.rho_sup() / bound;
        state.monitors.coth_checks += 1;
        state.monitors.worst_coth_ratio = state.monitors.worst_coth_ratio.max(ratio);
        if ratio > 1.0 + tol::COTH_SLACK {
            state.monitors.coth_violations += 1;
        }
        Ok(())
    }

    pub fn report(&self, state: &SimState) -> CothReport {
        CothReport {
            checks: state.monitors.coth_checks,
            violations: state.monitors.coth_violations,
            worst_ratio: state.monitors.worst_coth_ratio,
            h_final: self.h_run,
        }
    }
}

/// Knobs for a single simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub diffusivity: f64,
    pub horizon: f64,
    /// None → the dt policy decides. Either way [`simulate`] caps the step
    /// at the diffusion positivity bound.
    pub dt: Option<f64>,
    /// Record a (t, ρ) frame every this many steps; 0 disables frames.
    pub frame_stride: usize,
    pub monitor_coth: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            diffusivity: 1.0,
            horizon: 10.0,
            dt: None,
            frame_stride: 0,
            monitor_coth: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub state: SimState,
    /// Per-step time series (starting at t = 0).
    pub times: Vec<f64>,
    pub sup_rho: Vec<f64>,
    pub sup_u: Vec<f64>,
    pub masses: Vec<f64>,
    /// The a-priori ceiling A in force for the run.
    pub apriori: f64,
    /// dt in effect at the end (after any halvings).
    pub dt: f64,
    pub halvings: usize,
    pub steps: usize,
    pub rho_frames: Vec<(f64, Vec<f64>)>,
    pub coth: Option<CothReport>,
}

/// Integrates the nonlocal dynamics to the horizon. The requested (or
/// policy) step size is capped at [`DiffusionSolver::dt_positivity`] so the
/// scheme stays in the positive cone. The a-priori monitor runs every step;
/// a violation rejects the step and halves dt (at most 8 times) — by
/// construction of the scheme this should never fire, so a trip signals a
/// genuine splitting problem and is surfaced in the outcome.
pub fn simulate(
    grid: &Grid,
    r_values: &[f64],
    tail_radius: Option<f64>,
    settings: &SimSettings,
    u0: &[f64],
) -> Result<SimOutcome> {
    if !settings.horizon.is_finite() || settings.horizon <= 0.0 {
        return Err(Error::SimInput(format!("horizon {} must be positive", settings.horizon)));
    }
    if r_values.len() != grid.total_nodes() {
        return Err(Error::Dimension(format!(
            "r has {} entries but the grid has {} nodes",
            r_values.len(),
            grid.total_nodes()
        )));
    }
    for (i, &rv) in r_values.iter().enumerate() {
        if !rv.is_finite() {
            return Err(Error::SimInput(format!("r[{i}] = {rv} is not finite")));
        }
    }
    let mut state = SimState::new(grid, u0.to_vec())?;
    let r_sup = r_values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let apriori = apriori_ceiling(state.rho_sup(), r_sup);
    let mut dt = match settings.dt {
        Some(v) if v.is_finite() && v > 0.0 => v,
        Some(v) => return Err(Error::SimInput(format!("dt = {v} must be finite and positive"))),
        None => dt_policy(r_sup, apriori),
    };
    let mut solver = DiffusionSolver::new(grid, settings.diffusivity)?;
    // Beyond this cap the Crank–Nicolson right factor has negative entries
    // and the scheme can leave the positive cone.
    dt = dt.min(solver.dt_positivity());
    let mut coth = if settings.monitor_coth {
        Some(CothMonitor::new(grid, r_values, tail_radius, &state)?)
    } else {
        None
    };

    let mut times = vec![0.0];
    let mut sup_rho = vec![state.rho_sup()];
    let mut sup_u = vec![state.u_sup()];
    let mut masses = vec![state.mass];
    let mut rho_frames = Vec::new();
    if settings.frame_stride > 0 {
        rho_frames.push((0.0, state.rho.clone()));
    }
    let mut halvings = 0usize;
    let mut steps = 0usize;
    let horizon = settings.horizon;
    let t_eps = 1e-12 * horizon.max(1.0);

    while state.t < horizon - t_eps {
        let step_dt = dt.min(horizon - state.t);
        let backup = state.clone();
        step(&mut state, step_dt, r_values, &mut solver)?;
        if !rho_apriori_bound(&mut state, apriori) {
            state = backup;
            halvings += 1;
            if halvings > 8 {
                return Err(Error::StepRejected(format!(
                    "a-priori ceiling {apriori} still violated after {halvings} dt halvings at t = {}",
                    state.t
                )));
            }
            dt *= 0.5;
            continue;
        }
        if let Some(mon) = coth.as_mut() {
            mon.observe(&mut state)?;
        }
        steps += 1;
        times.push(state.t);
        sup_rho.push(state.rho_sup());
        sup_u.push(state.u_sup());
        masses.push(state.mass);
        if settings.frame_stride > 0 && steps % settings.frame_stride == 0 {
            rho_frames.push((state.t, state.rho.clone()));
        }
    }
    let coth_report = coth.map(|mon| mon.report(&state));
    Ok(SimOutcome {
        state,
        times,
        sup_rho,
        sup_u,
        masses,
        apriori,
        dt,
        halvings,
        steps,
        rho_frames,
        coth: coth_report,
    })
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub u_final: Vec<f64>,
    /// Inner time grid across all slabs (starting at 0).
    pub times: Vec<f64>,
    pub sup_rho: Vec<f64>,
    pub slab_iterations: Vec<usize>,
    /// Successive ρ-trajectory distances per slab (the observed contraction).
    pub contraction_dists: Vec<Vec<f64>>,
}

/// Independent reference integrator: on each time slab (kept short enough
/// that exp(r̄·τ) ≤ 2) iterate the map w ↦ u^w, where u^w solves the linear
/// PDE with frozen coefficient ρ_w(t, x), discretized by Crank–Nicolson on
/// a fine inner grid. The iteration is a contraction on ρ-trajectories and
/// stops when successive trajectories agree to [`tol::PICARD_RHO_TOL`] in
/// the sup norm over slab times and space.
pub fn picard_solve(
    grid: &Grid,
    r_values: &[f64],
    diffusivity: f64,
    u0: &[f64],
    t_end: f64,
    dt_inner: f64,
) -> Result<PicardOutcome> {
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(Error::SimInput(format!("t_end {t_end} must be positive")));
    }
    if !dt_inner.is_finite() || dt_inner <= 0.0 {
        return Err(Error::SimInput(format!("dt_inner {dt_inner} must be positive")));
    }
    let state0 = SimState::new(grid, u0.to_vec())?;
    let solver = DiffusionSolver::new(grid, diffusivity)?;
    let stiffness = solver.stiffness();
    let weights = solver.weights();
    let n = grid.total_nodes();
    let nx = grid.space_nodes();
    let p = grid.pheno_nodes();
    let r_sup = r_values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let slab_cap = if r_sup > 0.0 {
        (std::f64::consts::LN_2 / r_sup).min(1.0)
    } else {
        1.0
    };

    let mut u = u0.to_vec();
    let mut t = 0.0_f64;
    let mut times = vec![0.0];
    let mut sup_rho = vec![state0.rho_sup()];
    let mut slab_iterations = Vec::new();
    let mut contraction_dists = Vec::new();
    let t_eps = 1e-12 * t_end.max(1.0);

    // Reaction coefficient at inner node k of the current trajectory:
    // c[idx] = r[idx] − ρ(x(idx)).
    let coeff = |rho: &[f64], c: &mut [f64]| {
        for x in 0..nx {
            let rx = rho[x];
            for k in 0..p {
                let idx = x * p + k;
                c[idx] = r_values[idx] - rx;
            }
        }
    };

    while t < t_end - t_eps {
        let tau = slab_cap.min(t_end - t);
        let m = ((tau / dt_inner).ceil() as usize).max(1);
        let delta = tau / m as f64;
        let rho_start = compute_rho(grid, &u)?;
        // Initial guess: freeze ρ at the slab-start value for all inner times.
        let mut rho_w: Vec<Vec<f64>> = vec![rho_start.clone(); m + 1];
        let mut dists: Vec<f64> = Vec::new();
        let mut u_slab_end = u.clone();
        let mut rho_slab: Vec<Vec<f64>> = Vec::new();
        let mut converged = false;
        for _iter in 0..tol::PICARD_MAX_ITERS {
            let mut uk = u.clone();
            let mut rho_new: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
            rho_new.push(compute_rho(grid, &uk)?);
            let mut c_k = vec![0.0; n];
            let mut c_k1 = vec![0.0; n];
            let mut ku = vec![0.0; n];
            for k in 0..m {
                coeff(&rho_w[k], &mut c_k);
                coeff(&rho_w[k + 1], &mut c_k1);
                // (M + δ/2·K − δ/2·M∘c_{k+1}) u_{k+1}
                //   = (M − δ/2·K + δ/2·M∘c_k) u_k
                stiffness.mul_vec(&uk, &mut ku);
                let rhs: Vec<f64> = (0..n)
                    .map(|i| weights[i] * uk[i] * (1.0 + 0.5 * delta * c_k[i]) - 0.5 * delta * ku[i])
                    .collect();
                let lhs_diag: Vec<f64> = (0..n)
                    .map(|i| weights[i] * (1.0 - 0.5 * delta * c_k1[i]))
                    .collect();
                // SPD needs 1 − δ/2·c > 0; the slab cap bounds c ≤ r̄ from
                // above, so this only trips if the caller passed a huge
                // dt_inner.
                if lhs_diag.iter().any(|&v| v <= 0.0) {
                    return Err(Error::PicardDiverged(format!(
                        "implicit factor lost positivity (dt_inner {delta} too large for the reaction strength)"
                    )));
                }
                let lhs = stiffness.scaled_add_diag(0.5 * delta, &lhs_diag);
                let cap = 40 * n + 200;
                cg(&lhs, &rhs, &mut uk, tol::CG_REL_DIFFUSION, cap)?;
                rho_new.push(compute_rho(grid, &uk)?);
            }
            let mut dist = 0.0_f64;
            for k in 0..=m {
                for x in 0..nx {
                    dist = dist.max((rho_new[k][x] - rho_w[k][x]).abs());
                }
            }
            dists.push(dist);
            if !dist.is_finite() || dist > 1e6 {
                return Err(Error::PicardDiverged(format!(
                    "ρ-trajectory iteration diverged (distance {dist:e}) on slab starting at t = {t}"
                )));
            }
            rho_w = rho_new;
            if dist < tol::PICARD_RHO_TOL {
                u_slab_end = uk;
                rho_slab = rho_w.clone();
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged(format!(
                "no ρ fixed point within {} iterations on slab starting at t = {t} (last distance {:e})",
                tol::PICARD_MAX_ITERS,
                dists.last().copied().unwrap_or(f64::NAN)
            )));
        }
        slab_iterations.push(dists.len());
        contraction_dists.push(dists);
        for (k, rho_k) in rho_slab.iter().enumerate().skip(1) {
            times.push(t + k as f64 * delta);
            sup_rho.push(rho_k.iter().fold(0.0_f64, |mx, &v| mx.max(v)));
        }
        u = u_slab_end;
        t += tau;
    }
    Ok(PicardOutcome {
        u_final: u,
        times,
        sup_rho,
        slab_iterations,
        contraction_dists,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Persist,
    Extinct,
    Undecided,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Persist => "persist",
            Classification::Extinct => "extinct",
            Classification::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub extinct: f64,
    pub persist: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            extinct: tol::EXTINCT_EPS,
            persist: tol::PERSIST_EPS,
        }
    }
}

/// Long-time verdict from the sup_x ρ series: over the last 20% of the
/// horizon, Extinct needs every value below the extinction threshold and a
/// nonincreasing trend; Persist needs the minimum above the persistence
/// threshold; anything else is Undecided (a legitimate outcome near λ ≈ 0).
pub fn classify_supseries(
    times: &[f64],
    sup_rho: &[f64],
    horizon: f64,
    thresholds: &Thresholds,
) -> Classification {
    debug_assert_eq!(times.len(), sup_rho.len());
    let cut = 0.8 * horizon;
    let window: Vec<f64> = times
        .iter()
        .zip(sup_rho)
        .filter(|(t, _)| **t >= cut)
        .map(|(_, v)| *v)
        .collect();
    if window.is_empty() {
        return Classification::Undecided;
    }
    let below = window.iter().all(|&v| v < thresholds.extinct);
    let nonincreasing = window.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    if below && nonincreasing {
        return Classification::Extinct;
    }
    let min = window.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min > thresholds.persist {
        return Classification::Persist;
    }
    Classification::Undecided
}

/// Runs the full simulation for a landscape and initial datum and classifies
/// the outcome. The coth monitor (when enabled in the settings) uses the
/// landscape's tail radius to split the phenotype integral.
pub fn classify_long_time(
    landscape: &Landscape,
    grid: &Grid,
    u0: &InitialDatum,
    settings: &SimSettings,
    thresholds: &Thresholds,
) -> Result<(Classification, SimOutcome)> {
    let r = sample_on_grid(landscape, grid, &vec![0.0; landscape.space_dim()])?;
    let u = u0.realize(grid)?;
    let outcome = simulate(grid, &r, landscape.tail_radius(), settings, &u)?;
    let class = classify_supseries(&outcome.times, &outcome.sup_rho, settings.horizon, thresholds);
    Ok((class, outcome))
}

/// Least-squares slope of ln(sup u) over the last half of the run. For a
/// trajectory decaying like a·e^{λt} this measures λ; the contract for
/// extinction runs is one-sided (measured slope ≤ λ + tolerance), since the
/// comparison argument only provides an upper barrier.
pub fn decay_rate_estimate(times: &[f64], sup_u: &[f64]) -> Result<f64> {
    if times.len() != sup_u.len() || times.len() < 2 {
        return Err(Error::SimInput(format!(
            "decay fit needs two aligned series, got {} and {}",
            times.len(),
            sup_u.len()
        )));
    }
    let t_end = *times.last().expect("nonempty");
    let cut = 0.5 * t_end;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(sup_u)
        .filter(|(t, _)| **t >= cut)
        .map(|(t, v)| (*t, v.max(1e-300).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::SimInput("decay fit window has fewer than two samples".into()));
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
    let y_mean = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in &pts {
        num += (t - t_mean) * (y - y_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return Err(Error::SimInput("decay fit window has zero time spread".into()));
    }
    Ok(num / den)
}

/// Initial population densities.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    /// Constant height on a centered box (full domain when no half-widths
    /// are given).
    ConstantPatch {
        height: f64,
        x_half_width: Option<f64>,
        theta_half_width: Option<f64>,
    },
    /// amplitude·exp(−(‖x − center‖² + ‖θ‖²)/(2·width²)), centered in the
    /// domain.
    GaussianBump { amplitude: f64, width: f64 },
    /// Explicit per-node values (not reachable from config files).
    Custom(Vec<f64>),
}

impl InitialDatum {
    pub fn from_preset(kind: &str, params: &BTreeMap<String, f64>) -> Result<InitialDatum> {
        let known = |keys: &[&str]| -> Result<()> {
            for key in params.keys() {
                if !keys.contains(&key.as_str()) {
                    return Err(Error::SimInput(format!(
                        "unknown initial-datum parameter {key:?} for preset {kind:?}"
                    )));
                }
            }
            for (k, v) in params {
                if !v.is_finite() {
                    return Err(Error::SimInput(format!(
                        "initial-datum parameter {k:?} = {v} is not finite"
                    )));
                }
            }
            Ok(())
        };
        match kind {
            "constant-patch" => {
                known(&["height", "x_half_width", "theta_half_width"])?;
                let height = params.get("height").copied().unwrap_or(1.0);
                if height < 0.0 {
                    return Err(Error::SimInput(format!("patch height {height} must be ≥ 0")));
                }
                Ok(InitialDatum::ConstantPatch {
                    height,
                    x_half_width: params.get("x_half_width").copied(),
                    theta_half_width: params.get("theta_half_width").copied(),
                })
            }
            "gaussian-bump" => {
                known(&["amplitude", "width"])?;
                let amplitude = params.get("amplitude").copied().unwrap_or(1.0);
                let width = params.get("width").copied().unwrap_or(0.25);
                if amplitude < 0.0 || width <= 0.0 {
                    return Err(Error::SimInput(format!(
                        "gaussian bump needs amplitude ≥ 0 and width > 0 (got {amplitude}, {width})"
                    )));
                }
                Ok(InitialDatum::GaussianBump { amplitude, width })
            }
            other => Err(Error::SimInput(format!(
                "unknown initial-datum preset {other:?} (available: constant-patch, gaussian-bump)"
            ))),
        }
    }

    pub fn realize(&self, grid: &Grid) -> Result<Vec<f64>> {
        let n = grid.total_nodes();
        let zeros = vec![0.0; grid.space().len()];
        let centers: Vec<f64> = grid.space().iter().map(|ax| 0.5 * ax.length()).collect();
        match self {
            InitialDatum::ConstantPatch {
                height,
                x_half_width,
                theta_half_width,
            } => {
                let mut u = vec![0.0; n];
                for (idx, v) in u.iter_mut().enumerate() {
                    let (x, th) = grid.position(idx, &zeros);
                    let in_x = match x_half_width {
                        Some(w) => x
                            .iter()
                            .zip(&centers)
                            .all(|(xi, ci)| (xi - ci).abs() <= *w),
                        None => true,
                    };
                    let in_th = match theta_half_width {
                        Some(w) => th.iter().all(|ti| ti.abs() <= *w),
                        None => true,
                    };
                    if in_x && in_th {
                        *v = *height;
                    }
                }
                Ok(u)
            }
            InitialDatum::GaussianBump { amplitude, width } => {
                let mut u = vec![0.0; n];
                let inv = 1.0 / (2.0 * width * width);
                for (idx, v) in u.iter_mut().enumerate() {
                    let (x, th) = grid.position(idx, &zeros);
                    let mut q = 0.0;
                    for (xi, ci) in x.iter().zip(&centers) {
                        q += (xi - ci) * (xi - ci);
                    }
                    for ti in &th {
                        q += ti * ti;
                    }
                    *v = amplitude * (-q * inv).exp();
                }
                Ok(u)
            }
            InitialDatum::Custom(values) => {
                if values.len() != n {
                    return Err(Error::Dimension(format!(
                        "custom datum has {} entries but the grid has {n} nodes",
                        values.len()
                    )));
                }
                for (i, &v) in values.iter().enumerate() {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::SimInput(format!("custom datum entry u[{i}] = {v}")));
                    }
                }
                Ok(values.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, Bc};

    fn box_grid(nx: usize, np: usize) -> Grid {
        Grid::new(
            vec![Axis::new(1.0, nx, Bc::Periodic).unwrap()],
            vec![Axis::new(1.0, np, Bc::Neumann).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn rho_of_constant_u_is_one_and_of_zero_is_zero() {
        let grid = box_grid(4, 5);
        let rho = compute_rho(&grid, &vec![1.0; 20]).unwrap();
        for (x, v) in rho.iter().enumerate() {
            assert!((v - 1.0).abs() < 1e-15, "ρ[{x}] = {v}");
        }
        let zero = compute_rho(&grid, &vec![0.0; 20]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rho_of_separable_u_matches_direct_summation() {
        let grid = box_grid(6, 7);
        let f = |x: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).cos();
        let g = |t: f64| (-(t * t)).exp();
        let zeros = [0.0];
        let mut u = vec![0.0; grid.total_nodes()];
        for (idx, v) in u.iter_mut().enumerate() {
            let (x, th) = grid.position(idx, &zeros);
            *v = f(x[0]) * g(th[0]);
        }
        let rho = compute_rho(&grid, &u).unwrap();
        let pw = grid.pheno_weights();
        for x in 0..grid.space_nodes() {
            let direct: f64 = (0..grid.pheno_nodes())
                .map(|k| pw[k] * u[x * grid.pheno_nodes() + k])
                .sum();
            assert_eq!(rho[x], direct, "quadrature mismatch at x-index {x}");
        }
        // Separability: ρ = f(x)·(quadrature of g).
        let g_int: f64 = (0..grid.pheno_nodes())
            .map(|k| {
                let (_, th) = grid.position(k, &zeros);
                pw[k] * g(th[0])
            })
            .sum();
        for x in 0..grid.space_nodes() {
            let (xc, _) = grid.position(x * grid.pheno_nodes(), &zeros);
            let expect = f(xc[0]) * g_int;
            assert!(
                (rho[x] - expect).abs() < 1e-14,
                "ρ[{x}] = {} vs separable {expect}",
                rho[x]
            );
        }
    }

    #[test]
    fn coth_bound_closed_forms_and_h_monotonicity() {
        for &(h, rho) in &[(0.5, 0.3), (2.0, 1.7), (9.0, 0.0)] {
            let s = h_sqrt(h);
            let at0 = coth_bound(h, 0.0, rho).unwrap();
            assert!(
                (at0 - (rho + s)).abs() <= 1e-12 * (1.0 + rho + s),
                "τ=0: {at0} vs {}",
                rho + s
            );
            let late = coth_bound(h, 1e6, rho).unwrap();
            assert!((late - s).abs() <= 1e-12 * (1.0 + s), "τ→∞: {late} vs {s}");
        }
        let mut prev = 0.0;
        for &h in &[0.5, 1.0, 2.0, 4.0, 8.0] {
            let b = coth_bound(h, 0.7, 0.3).unwrap();
            assert!(b > prev, "bound {b} not increasing in H at H = {h}");
            prev = b;
        }
        assert!(coth_bound(0.0, 1.0, 1.0).is_err());
        assert!(coth_bound(-1.0, 1.0, 1.0).is_err());
    }

    fn h_sqrt(h: f64) -> f64 {
        h.sqrt()
    }

    #[test]
    fn pure_diffusion_conserves_mass_per_step() {
        let grid = box_grid(8, 9);
        let n = grid.total_nodes();
        let u0: Vec<f64> = (0..n).map(|i| 0.3 + ((i * 7919) % 101) as f64 / 101.0).collect();
        let r = vec![0.0; n];
        let rho0 = vec![0.0; grid.space_nodes()];
        let mut state = SimState::new(&grid, u0).unwrap();
        let mut solver = DiffusionSolver::new(&grid, 1.0).unwrap();
        assert!(0.005 < solver.dt_positivity(), "test dt must sit under the cap");
        let mut prev = state.mass;
        for k in 0..50 {
            step_frozen(&mut state, 0.005, &r, &rho0, &mut solver).unwrap();
            assert!(
                (state.mass - prev).abs() <= 1e-12 * (1.0 + prev.abs()),
                "mass drifted by {:e} at step {k}",
                state.mass - prev
            );
            prev = state.mass;
        }
    }

    #[test]
    fn positivity_cap_matches_the_uniform_grid_formula() {
        // On a uniform tensor grid every node gives the same ratio 2Wᵢᵢ/Kᵢᵢ
        // (the cross quadrature weights cancel), so the cap collapses to the
        // closed form 1/(d/hₓ² + 1/h_θ²).
        for &(nx, np, d) in &[(8usize, 9usize, 0.7), (4, 5, 1.0), (6, 7, 0.5)] {
            let grid = box_grid(nx, np);
            let solver = DiffusionSolver::new(&grid, d).unwrap();
            let hx = 1.0 / nx as f64;
            let ht = 1.0 / (np - 1) as f64;
            let expect = 1.0 / (d / (hx * hx) + 1.0 / (ht * ht));
            let got = solver.dt_positivity();
            assert!(
                (got - expect).abs() <= 1e-12 * expect,
                "cap {got} vs closed form {expect} on {nx}x{np}, d = {d}"
            );
        }
    }

    #[test]
    fn simulate_caps_the_requested_step_at_the_positivity_bound() {
        let grid = box_grid(4, 5);
        let cap = DiffusionSolver::new(&grid, 1.0).unwrap().dt_positivity();
        let settings = SimSettings {
            dt: Some(1.0),
            horizon: 0.5,
            ..SimSettings::default()
        };
        let out = simulate(&grid, &vec![0.2; 20], None, &settings, &vec![0.1; 20]).unwrap();
        assert_eq!(out.dt, cap, "requested dt = 1.0 should clamp to the cap");
        assert_eq!(out.halvings, 0);
        assert!(out.state.u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn adjoint_reaction_half_lands_rho_on_its_endpoint_equation() {
        let grid = box_grid(5, 6);
        let n = grid.total_nodes();
        let r: Vec<f64> = (0..n).map(|i| ((i * 17) % 5) as f64 * 0.4 - 0.6).collect();
        let mut u: Vec<f64> = (0..n).map(|i| 0.05 + ((i * 31) % 13) as f64 / 13.0).collect();
        let delta = 0.04;
        // M per spatial node is ρ of the grown field u·e^{δr}; the half-step
        // must land ρ exactly on the root of P·e^{δP} = M.
        let grown: Vec<f64> = u.iter().zip(&r).map(|(v, rv)| v * (delta * rv).exp()).collect();
        let m = compute_rho(&grid, &grown).unwrap();
        reaction_half_adjoint(&mut u, &r, &grid, delta).unwrap();
        let rho = compute_rho(&grid, &u).unwrap();
        for (x, (&p, &mx)) in rho.iter().zip(&m).enumerate() {
            let back = p * (delta * p).exp();
            assert!(
                (back - mx).abs() <= 1e-12 * (1.0 + mx),
                "P·exp(δP) = {back} vs M = {mx} at x-index {x}"
            );
        }
        assert_eq!(endpoint_rho(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(endpoint_rho(0.8, 0.0).unwrap(), 0.8);
    }

    #[test]
    fn homogeneous_run_tracks_the_logistic_solution() {
        let grid = box_grid(4, 5);
        let settings = SimSettings {
            dt: Some(1e-3),
            horizon: 20.0,
            monitor_coth: true,
            ..SimSettings::default()
        };
        let out = simulate(&grid, &vec![1.0; 20], None, &settings, &vec![0.5; 20]).unwrap();
        let rho0 = 0.5;
        let exact = 1.0 / (1.0 + (1.0 / rho0 - 1.0) * (-20.0_f64).exp());
        let got = out.state.rho_sup();
        assert!(
            (got - exact).abs() <= 1e-3 * exact,
            "ρ(20) = {got} vs logistic {exact}"
        );
        // Monotone approach from below keeps the ceiling A = r̄ = 1.
        assert!(out.state.monitors.apriori_violations == 0);
        assert!(out.state.monitors.rho_sup_max <= 1.0 + 1e-9);
        let coth = out.coth.expect("coth monitor enabled");
        assert_eq!(coth.violations, 0, "worst coth ratio {}", coth.worst_ratio);
    }

    #[test]
    fn zero_initial_datum_stays_exactly_zero() {
        let grid = box_grid(4, 5);
        let settings = SimSettings {
            dt: Some(0.05),
            horizon: 1.0,
            ..SimSettings::default()
        };
        let r: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = simulate(&grid, &r, None, &settings, &vec![0.0; 20]).unwrap();
        assert!(out.state.u.iter().all(|&v| v == 0.0));
        assert_eq!(out.state.mass, 0.0);
    }

    #[test]
    fn apriori_ceiling_follows_the_max_rule() {
        assert_eq!(apriori_ceiling(2.0, 1.0), 2.0);
        assert_eq!(apriori_ceiling(0.1, 1.0), 1.0);
    }

    #[test]
    fn steps_keep_u_nonnegative_with_mixed_sign_fitness() {
        let grid = box_grid(6, 7);
        let n = grid.total_nodes();
        let zeros = [0.0];
        let r: Vec<f64> = (0..n)
            .map(|idx| {
                let (x, th) = grid.position(idx, &zeros);
                if (x[0] * 2.0).rem_euclid(1.0) < 0.5 {
                    1.0 - th[0] * th[0]
                } else {
                    -1.0
                }
            })
            .collect();
        let mut u0 = vec![0.0; n];
        for (idx, v) in u0.iter_mut().enumerate() {
            if idx % 3 == 0 {
                *v = 0.8;
            }
        }
        let mut state = SimState::new(&grid, u0).unwrap();
        let mut solver = DiffusionSolver::new(&grid, 0.5).unwrap();
        assert!(0.01 < solver.dt_positivity(), "test dt must sit under the cap");
        for _ in 0..30 {
            step(&mut state, 0.01, &r, &mut solver).unwrap();
            assert!(state.u.iter().all(|&v| v >= 0.0));
        }
        state.validate(&grid).unwrap();
    }

    #[test]
    fn frozen_flow_preserves_ordering_of_initial_data() {
        let grid = box_grid(5, 6);
        let n = grid.total_nodes();
        let r: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 * 0.3 - 0.8).collect();
        let rho_frozen: Vec<f64> = (0..grid.space_nodes()).map(|x| 0.1 * x as f64).collect();
        let ua: Vec<f64> = (0..n).map(|i| ((i * 29) % 11) as f64 / 11.0).collect();
        let ub: Vec<f64> = ua.iter().map(|v| v + 0.05).collect();
        let mut sa = SimState::new(&grid, ua).unwrap();
        let mut sb = SimState::new(&grid, ub).unwrap();
        let mut solver = DiffusionSolver::new(&grid, 1.0).unwrap();
        assert!(0.015 < solver.dt_positivity(), "test dt must sit under the cap");
        for k in 0..10 {
            step_frozen(&mut sa, 0.015, &r, &rho_frozen, &mut solver).unwrap();
            step_frozen(&mut sb, 0.015, &r, &rho_frozen, &mut solver).unwrap();
            let tol = 1e-12 * sb.u_sup().max(1.0);
            for i in 0..n {
                assert!(
                    sa.u[i] <= sb.u[i] + tol,
                    "ordering lost at node {i}, step {k}: {} > {}",
                    sa.u[i],
                    sb.u[i]
                );
            }
        }
    }

    #[test]
    fn classification_thresholds_behave_on_synthetic_series() {
        let th = Thresholds::default();
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let decaying: Vec<f64> = times.iter().map(|t| 1e-3 * (-0.1 * t).exp()).collect();
        assert_eq!(
            classify_supseries(&times, &decaying, 100.0, &th),
            Classification::Extinct
        );
        let settled: Vec<f64> = times.iter().map(|_| 0.7).collect();
        assert_eq!(
            classify_supseries(&times, &settled, 100.0, &th),
            Classification::Persist
        );
        let limbo: Vec<f64> = times.iter().map(|_| 5e-3).collect();
        assert_eq!(
            classify_supseries(&times, &limbo, 100.0, &th),
            Classification::Undecided
        );
    }

    #[test]
    fn uniformly_hostile_fitness_extinguishes_and_decays_at_rate_one() {
        let grid = box_grid(4, 5);
        let settings = SimSettings {
            dt: Some(0.01),
            horizon: 30.0,
            ..SimSettings::default()
        };
        let out = simulate(&grid, &vec![-1.0; 20], None, &settings, &vec![0.5; 20]).unwrap();
        let class = classify_supseries(&out.times, &out.sup_rho, 30.0, &Thresholds::default());
        assert_eq!(class, Classification::Extinct);
        let rate = decay_rate_estimate(&out.times, &out.sup_u).unwrap();
        assert!((rate + 1.0).abs() <= 1e-2, "measured decay rate {rate}");
    }

    #[test]
    fn initial_datum_presets_realize_with_expected_support() {
        let grid = box_grid(8, 9);
        let mut params = BTreeMap::new();
        params.insert("height".to_string(), 0.5);
        let patch = InitialDatum::from_preset("constant-patch", &params).unwrap();
        let u = patch.realize(&grid).unwrap();
        assert!(u.iter().all(|&v| v == 0.5));

        params.insert("theta_half_width".to_string(), 0.25);
        let clipped = InitialDatum::from_preset("constant-patch", &params).unwrap();
        let uc = clipped.realize(&grid).unwrap();
        assert!(uc.iter().any(|&v| v == 0.0) && uc.iter().any(|&v| v == 0.5));

        let bump = InitialDatum::from_preset("gaussian-bump", &BTreeMap::new()).unwrap();
        let ub = bump.realize(&grid).unwrap();
        assert!(ub.iter().all(|&v| v > 0.0 && v <= 1.0));

        let mut bad = BTreeMap::new();
        bad.insert("heigth".to_string(), 1.0);
        let err = InitialDatum::from_preset("constant-patch", &bad).unwrap_err();
        assert!(err.to_string().contains("heigth"), "{err}");
    }

    #[test]
    fn picard_matches_the_logistic_solution() {
        let grid = box_grid(4, 5);
        let out = picard_solve(&grid, &vec![1.0; 20], 1.0, &vec![0.5; 20], 1.0, 1e-3).unwrap();
        let exact = 1.0 / (1.0 + (1.0 / 0.5 - 1.0) * (-1.0_f64).exp());
        let got = out.sup_rho.last().copied().unwrap();
        assert!((got - exact).abs() <= 1e-6, "ρ(1) = {got} vs logistic {exact}");
        // Contraction: successive ρ-trajectory distances shrink.
        for dists in &out.contraction_dists {
            if dists.len() >= 2 {
                assert!(
                    dists[1] < dists[0],
                    "no contraction observed: {dists:?}"
                );
            }
        }
    }
}
