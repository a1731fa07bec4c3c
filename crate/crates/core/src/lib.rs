//! Persistence thresholds and population dynamics for species structured by
//! space and phenotype.
//!
//! The model is a growth/competition equation on a periodic spatial domain
//! crossed with a phenotype domain: a population density u(t, x, θ) diffuses
//! in both variables, grows at a local rate r(x, θ), and competes through the
//! phenotype-integrated density ρ(t, x) = ∫ u dθ. Whether the population
//! persists or dies out is decided by the sign of the principal eigenvalue of
//! the linearized generator d·Δx + Δθ + r.
//!
//! The crate provides:
//!
//! * [`grid`] / [`operator`] — tensor-product discretization of the
//!   generator with exactly symmetric sparse assembly;
//! * [`landscape`] — parametric fitness landscapes r(x, θ), periodic in x;
//! * [`spectral`] — the principal eigenvalue/eigenvector via shift-inverted
//!   power iteration, monotone truncation sequences approximating the
//!   eigenvalue of the unbounded problem, and parameter sweeps in spatial
//!   period and diffusivity;
//! * [`dynamics`] — a positivity-preserving Strang splitting integrator for
//!   the nonlocal equation, a Picard/Crank–Nicolson reference solver, and
//!   long-time classification (extinction vs persistence);
//! * [`experiments`] / [`config`] / [`output`] — reproducible experiment
//!   drivers with TOML configs and CSV/JSON artifacts.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod landscape;
pub mod operator;
pub mod output;
pub mod sparse;
pub mod spectral;
pub mod tol;

pub use error::{Error, Result};
