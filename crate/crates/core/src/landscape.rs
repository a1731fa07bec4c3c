//! Fitness landscapes r(x, θ): bounded above, 1-periodic in each space
//! coordinate (before rescaling), with an optional certified tail radius M
//! such that r ≤ 0 wherever ‖θ‖ ≥ M. The tail radius is what makes
//! truncation of an unbounded phenotype domain meaningful and feeds the
//! coth-in-time population bound monitor.
//!
//! Presets are constructed from a key-value parameter map (mirroring the
//! config file format) with unknown keys rejected by name. Each preset
//! records its exact supremum; the eigensolver shift and the a-priori bound
//! depend on it.

use crate::error::{Error, Result};
use crate::grid::Grid;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

type EvalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct Landscape {
    eval: Arc<EvalFn>,
    space_dim: usize,
    pheno_dim: usize,
    /// Period per space coordinate (all presets start at 1; rescaling
    /// multiplies it).
    period: Vec<f64>,
    sup_r: f64,
    /// Some(M) certifies r(x, θ) ≤ 0 for all x and ‖θ‖ ≥ M.
    tail_radius: Option<f64>,
    label: String,
}

impl std::fmt::Debug for Landscape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Landscape")
            .field("label", &self.label)
            .field("space_dim", &self.space_dim)
            .field("pheno_dim", &self.pheno_dim)
            .field("period", &self.period)
            .field("sup_r", &self.sup_r)
            .field("tail_radius", &self.tail_radius)
            .finish()
    }
}

impl Landscape {
    pub fn eval(&self, x: &[f64], th: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.space_dim);
        debug_assert_eq!(th.len(), self.pheno_dim);
        (self.eval)(x, th)
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn pheno_dim(&self) -> usize {
        self.pheno_dim
    }

    pub fn period(&self) -> &[f64] {
        &self.period
    }

    pub fn sup_r(&self) -> f64 {
        self.sup_r
    }

    pub fn tail_radius(&self) -> Option<f64> {
        self.tail_radius
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Samples random points and checks the declared invariants: values are
    /// finite, never exceed sup_r, repeat exactly (to 1e-12) under a period
    /// shift in each space coordinate, and are ≤ 0 beyond the tail radius
    /// when one is declared. Deterministic in `seed`.
    pub fn check(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.space_dim];
        let mut xs = vec![0.0; self.space_dim];
        let mut th = vec![0.0; self.pheno_dim];
        for s in 0..samples {
            for v in x.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
            for v in th.iter_mut() {
                *v = rng.gen_range(-3.0..3.0);
            }
            let r = (self.eval)(&x, &th);
            if !r.is_finite() {
                return Err(Error::LandscapeCheck(format!(
                    "non-finite value {r} at sample {s} ({x:?}, {th:?})"
                )));
            }
            if r > self.sup_r + 1e-12 * (1.0 + self.sup_r.abs()) {
                return Err(Error::LandscapeCheck(format!(
                    "value {r} exceeds declared sup {} at ({x:?}, {th:?})",
                    self.sup_r
                )));
            }
            for k in 0..self.space_dim {
                xs.copy_from_slice(&x);
                xs[k] += self.period[k];
                let rp = (self.eval)(&xs, &th);
                if (rp - r).abs() > 1e-12 * (1.0 + r.abs()) {
                    return Err(Error::LandscapeCheck(format!(
                        "period violation along axis {k}: r={r}, shifted={rp} at ({x:?}, {th:?})"
                    )));
                }
            }
            if let Some(m) = self.tail_radius {
                if !th.is_empty() {
                    let norm: f64 = th.iter().map(|t| t * t).sum::<f64>().sqrt();
                    if norm >= m && r > 0.0 {
                        return Err(Error::LandscapeCheck(format!(
                            "tail violation: r={r} > 0 at ‖θ‖={norm} ≥ M={m}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Returns r^L(x, θ) := r(x/L, θ); the period becomes L and the range (hence
/// sup and tail radius) is unchanged. Larger L means coarser spatial
/// variation relative to diffusion, and the principal eigenvalue is
/// nondecreasing in L.
pub fn rescale_period(r: &Landscape, l: f64) -> Result<Landscape> {
    if !l.is_finite() || l <= 0.0 {
        return Err(Error::LandscapeParam(format!("period scale {l} must be finite and positive")));
    }
    let inner = r.eval.clone();
    let dim = r.space_dim;
    Ok(Landscape {
        eval: Arc::new(move |x: &[f64], th: &[f64]| {
            let mut xs = [0.0; 2];
            for (k, v) in x.iter().enumerate() {
                xs[k] = v / l;
            }
            inner(&xs[..dim], th)
        }),
        space_dim: r.space_dim,
        pheno_dim: r.pheno_dim,
        period: r.period.iter().map(|p| p * l).collect(),
        sup_r: r.sup_r,
        tail_radius: r.tail_radius,
        label: format!("{}@L={l}", r.label),
    })
}

/// Returns r + c. The principal eigenvalue shifts by exactly c (the matrix
/// gains cI), which dichotomy experiments use both to place themselves on
/// either side of λ = 0 and as a solver cross-check. A declared tail radius
/// survives only for c ≤ 0 (adding a positive constant can make the far
/// field favorable again).
pub fn shift(r: &Landscape, c: f64) -> Result<Landscape> {
    if !c.is_finite() {
        return Err(Error::LandscapeParam(format!("shift {c} must be finite")));
    }
    let inner = r.eval.clone();
    Ok(Landscape {
        eval: Arc::new(move |x: &[f64], th: &[f64]| inner(x, th) + c),
        space_dim: r.space_dim,
        pheno_dim: r.pheno_dim,
        period: r.period.clone(),
        sup_r: r.sup_r + c,
        tail_radius: if c <= 0.0 { r.tail_radius } else { None },
        label: format!("{}{}{}", r.label, if c < 0.0 { "" } else { "+" }, c),
    })
}

/// Evaluates the landscape at every grid node (phenotype index fastest).
/// Space coordinates are the axis coordinate plus `space_offset` (Dirichlet
/// windows centered on 0 pass −R); phenotype coordinates are box-centered.
/// Every sample is validated finite and ≤ sup_r.
pub fn sample_on_grid(r: &Landscape, grid: &Grid, space_offset: &[f64]) -> Result<Vec<f64>> {
    if grid.space().len() != r.space_dim || grid.pheno().len() != r.pheno_dim {
        return Err(Error::Dimension(format!(
            "landscape is {}x{}-dimensional, grid is {}x{}",
            r.space_dim,
            r.pheno_dim,
            grid.space().len(),
            grid.pheno().len()
        )));
    }
    if space_offset.len() != r.space_dim {
        return Err(Error::Dimension(format!(
            "{} offsets for {} space axes",
            space_offset.len(),
            r.space_dim
        )));
    }
    let n = grid.total_nodes();
    let slack = 1e-12 * (1.0 + r.sup_r.abs());
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let (x, th) = grid.position(idx, space_offset);
        let v = (r.eval)(&x, &th);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample(format!("r({x:?}, {th:?}) = {v}")));
        }
        if v > r.sup_r + slack {
            return Err(Error::LandscapeCheck(format!(
                "sample {v} exceeds declared sup {} at ({x:?}, {th:?})",
                r.sup_r
            )));
        }
        out.push(v);
    }
    Ok(out)
}

/// Builds a preset landscape for `space_dim` space and `pheno_dim` phenotype
/// coordinates. Unknown or missing parameters are errors naming the key.
///
/// Presets (parameters with defaults in brackets):
///
/// * `constant` — r ≡ c [c = 0];
/// * `checkerboard` — ±r0 on half-cells of the unit cell, independent of θ
///   [r0 = 1];
/// * `env-gradient` — r0 − (x̂ − b·θ)² with x̂ the centered fractional part
///   of x; a favorable diagonal band per cell, strongly lethal for large
///   ‖θ‖. 1D space × 1D phenotype only [r0 = 1, b = 1];
/// * `confined-zone` — r0 inside the ball of given radius around the cell
///   center in (x̂, θ), −r1 outside [r0 = 1, r1 = 1, radius = 0.25];
/// * `separable` — amp_x·Σᵢ cos(2π·freq_x·xᵢ) + theta_offset −
///   theta_quad·‖θ‖² [amp_x = 1, freq_x = 1, theta_offset = 0.5,
///   theta_quad = 1]. Eigenvalues of the factors add exactly.
pub fn make_preset(
    kind: &str,
    params: &BTreeMap<String, f64>,
    space_dim: usize,
    pheno_dim: usize,
) -> Result<Landscape> {
    if space_dim > 2 || pheno_dim > 2 || space_dim == 0 || pheno_dim == 0 {
        return Err(Error::Dimension(format!(
            "presets support 1-2 space and 1-2 phenotype dimensions, got {space_dim}x{pheno_dim}"
        )));
    }
    match kind {
        "constant" => {
            let v = read_params(kind, params, &[("c", Some(0.0))])?;
            let c = v[0];
            Ok(Landscape {
                eval: Arc::new(move |_x, _th| c),
                space_dim,
                pheno_dim,
                period: vec![1.0; space_dim],
                sup_r: c,
                tail_radius: if c <= 0.0 { Some(0.0) } else { None },
                label: format!("constant(c={c})"),
            })
        }
        "checkerboard" => {
            let v = read_params(kind, params, &[("r0", Some(1.0))])?;
            let r0 = v[0];
            if !(r0 > 0.0) {
                return Err(Error::LandscapeParam(format!("checkerboard needs r0 > 0, got {r0}")));
            }
            Ok(Landscape {
                eval: Arc::new(move |x: &[f64], _th| {
                    let mut flip = false;
                    for &xi in x {
                        flip ^= xi.rem_euclid(1.0) >= 0.5;
                    }
                    if flip {
                        -r0
                    } else {
                        r0
                    }
                }),
                space_dim,
                pheno_dim,
                period: vec![1.0; space_dim],
                sup_r: r0,
                tail_radius: None,
                label: format!("checkerboard(r0={r0})"),
            })
        }
        "env-gradient" => {
            if space_dim != 1 || pheno_dim != 1 {
                return Err(Error::Dimension(
                    "env-gradient is defined for 1 space x 1 phenotype dimension".into(),
                ));
            }
            let v = read_params(kind, params, &[("r0", Some(1.0)), ("b", Some(1.0))])?;
            let (r0, b) = (v[0], v[1]);
            if !(r0 > 0.0) || !(b > 0.0) {
                return Err(Error::LandscapeParam(format!(
                    "env-gradient needs r0 > 0 and b > 0, got r0={r0}, b={b}"
                )));
            }
            Ok(Landscape {
                eval: Arc::new(move |x: &[f64], th: &[f64]| {
                    // Wrap x to its nearest integer image so the favorable
                    // band repeats per cell while r still drops quadratically
                    // in θ. Floor-based wrap keeps the seam at ±1/2 exactly
                    // periodic (round() would map the two sides differently).
                    let xc = wrap_centered(x[0]);
                    let y = xc - b * th[0];
                    r0 - y * y
                }),
                space_dim,
                pheno_dim,
                period: vec![1.0],
                sup_r: r0,
                tail_radius: Some((r0.sqrt() + 0.5) / b),
                label: format!("env-gradient(r0={r0},b={b})"),
            })
        }
        "confined-zone" => {
            let v = read_params(
                kind,
                params,
                &[("r0", Some(1.0)), ("r1", Some(1.0)), ("radius", Some(0.25))],
            )?;
            let (r0, r1, radius) = (v[0], v[1], v[2]);
            if !(r0 > 0.0) || !(r1 > 0.0) {
                return Err(Error::LandscapeParam(format!(
                    "confined-zone needs r0 > 0 and r1 > 0, got r0={r0}, r1={r1}"
                )));
            }
            if !(radius > 0.0) || radius >= 0.5 {
                return Err(Error::LandscapeParam(format!(
                    "confined-zone radius must lie in (0, 0.5) to fit one cell, got {radius}"
                )));
            }
            Ok(Landscape {
                eval: Arc::new(move |x: &[f64], th: &[f64]| {
                    let mut d2 = 0.0;
                    for &xi in x {
                        let xc = wrap_centered(xi);
                        d2 += xc * xc;
                    }
                    for &t in th {
                        d2 += t * t;
                    }
                    // Strict inequality: on the sphere itself the zone is
                    // already hostile, so the tail certificate holds at
                    // ‖θ‖ = radius exactly.
                    if d2 < radius * radius {
                        r0
                    } else {
                        -r1
                    }
                }),
                space_dim,
                pheno_dim,
                period: vec![1.0; space_dim],
                sup_r: r0,
                tail_radius: Some(radius),
                label: format!("confined-zone(r0={r0},r1={r1},radius={radius})"),
            })
        }
        "separable" => {
            let v = read_params(
                kind,
                params,
                &[
                    ("amp_x", Some(1.0)),
                    ("freq_x", Some(1.0)),
                    ("theta_offset", Some(0.5)),
                    ("theta_quad", Some(1.0)),
                ],
            )?;
            let (amp, freq, off, quad) = (v[0], v[1], v[2], v[3]);
            if !(amp >= 0.0) || !(quad >= 0.0) {
                return Err(Error::LandscapeParam(format!(
                    "separable needs amp_x ≥ 0 and theta_quad ≥ 0, got amp_x={amp}, theta_quad={quad}"
                )));
            }
            if freq.fract() != 0.0 || freq < 1.0 {
                return Err(Error::LandscapeParam(format!(
                    "separable freq_x must be a positive integer, got {freq}"
                )));
            }
            let sup = amp * space_dim as f64 + off;
            let tail_radius = if quad > 0.0 {
                Some(if sup <= 0.0 { 0.0 } else { (sup / quad).sqrt() })
            } else {
                None
            };
            Ok(Landscape {
                eval: Arc::new(move |x: &[f64], th: &[f64]| {
                    let mut a = 0.0;
                    for &xi in x {
                        a += amp * (2.0 * std::f64::consts::PI * freq * xi).cos();
                    }
                    let mut b = off;
                    for &t in th {
                        b -= quad * t * t;
                    }
                    a + b
                }),
                space_dim,
                pheno_dim,
                period: vec![1.0; space_dim],
                sup_r: sup,
                tail_radius,
                label: format!(
                    "separable(amp_x={amp},freq_x={freq},theta_offset={off},theta_quad={quad})"
                ),
            })
        }
        other => Err(Error::LandscapeParam(format!(
            "unknown preset `{other}` (expected constant, checkerboard, env-gradient, confined-zone, separable)"
        ))),
    }
}

/// Centered fractional part in [−1/2, 1/2), exactly 1-periodic (including at
/// the half-integer seam, which grid nodes do hit).
fn wrap_centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

fn read_params(
    kind: &str,
    params: &BTreeMap<String, f64>,
    accepted: &[(&str, Option<f64>)],
) -> Result<Vec<f64>> {
    for key in params.keys() {
        if !accepted.iter().any(|(k, _)| k == key) {
            return Err(Error::LandscapeParam(format!(
                "unknown parameter `{key}` for preset `{kind}`"
            )));
        }
    }
    accepted
        .iter()
        .map(|(k, default)| {
            params
                .get(*k)
                .copied()
                .or(*default)
                .ok_or_else(|| {
                    Error::LandscapeParam(format!("preset `{kind}` requires parameter `{k}`"))
                })
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::LandscapeParam(format!(
                            "parameter `{k}` of `{kind}` is {v}"
                        )))
                    }
                })
        })
        .collect()
}
