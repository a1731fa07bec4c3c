//! Experiment orchestration: dichotomy maps, parameter sweeps, truncation
//! studies, and monitored simulations, each producing a reproducible
//! `RunRecord` (spec hash, software version, verdicts, and the numbers
//! behind them). Experiment specs arrive from config files; every run is
//! deterministic, so re-running an identical spec reproduces the eigenvalues
//! bitwise on one platform.

use crate::dynamics::{
    classify_long_time, Classification, InitialDatum, SimSettings, Thresholds,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::landscape::{self, make_preset, sample_on_grid, Landscape};
use crate::operator::assemble_operator;
use crate::output;
use crate::spectral::{
    eigen_truncation_sequence, lambda_of_diffusivity, lambda_of_period, principal_eigenpair,
    GridSettings, TruncationKind,
};
use crate::tol;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

/// Fitness landscape selection for config files: a named preset plus its
/// numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub preset: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_dim")]
    pub space_dim: usize,
    #[serde(default = "default_dim")]
    pub pheno_dim: usize,
}

fn default_dim() -> usize {
    1
}

impl LandscapeSpec {
    pub fn build(&self) -> Result<Landscape> {
        make_preset(&self.preset, &self.params, self.space_dim, self.pheno_dim)
    }
}

/// Initial datum selection for config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub preset: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl InitialSpec {
    pub fn build(&self) -> Result<InitialDatum> {
        InitialDatum::from_preset(&self.preset, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Single principal-eigenvalue solve.
    Eigen,
    /// Shift sweep r + c with eigenvalue cross-check and long-time
    /// classification on both sides of λ = 0.
    Dichotomy,
    /// λ as a function of the spatial period (sweep = L values).
    PeriodSweep,
    /// λ as a function of the diffusivity (sweep = d values).
    DiffusivitySweep,
    /// Truncated-domain eigenvalue curves against the periodic reference
    /// (sweep = radii).
    Truncation,
    /// Time integration with bound monitors and classification.
    Simulate,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Eigen => "eigen",
            ExperimentKind::Dichotomy => "dichotomy",
            ExperimentKind::PeriodSweep => "period-sweep",
            ExperimentKind::DiffusivitySweep => "diffusivity-sweep",
            ExperimentKind::Truncation => "truncation",
            ExperimentKind::Simulate => "simulate",
        }
    }
}

/// Tunable verdict tolerances (defaults match the library-wide constants).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Slack for monotonicity verdicts on eigenvalue curves.
    pub eps_mono: f64,
    /// Half-width of the |λ| band where the dichotomy makes no claim.
    pub dichotomy_margin: f64,
    pub extinct_eps: f64,
    pub persist_eps: f64,
    /// Allowed |λ(r+c) − λ(r) − c|.
    pub shift_crosscheck: f64,
    /// Allowed |λ_d − λ[r^(1/√d)]| on matched resolutions.
    pub scaling_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_mono: tol::MONOTONE_EPS,
            dichotomy_margin: tol::DICHOTOMY_MARGIN,
            extinct_eps: tol::EXTINCT_EPS,
            persist_eps: tol::PERSIST_EPS,
            shift_crosscheck: tol::SHIFT_CROSSCHECK,
            scaling_residual: tol::SCALING_RESIDUAL,
        }
    }
}

/// One experiment as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub landscape: LandscapeSpec,
    pub grid: GridSettings,
    #[serde(default = "default_diffusivity")]
    pub diffusivity: f64,
    /// Meaning depends on the kind: L values, d values, radii, or shifts c.
    #[serde(default)]
    pub sweep: Vec<f64>,
    /// Truncation curves to compute (default: all three).
    #[serde(default)]
    pub truncations: Option<Vec<TruncationKind>>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub monitor_coth: bool,
    /// Record a trajectory frame every this many steps (0 = none).
    #[serde(default)]
    pub frame_stride: usize,
    #[serde(default)]
    pub expect_lambda: Option<f64>,
    #[serde(default)]
    pub lambda_tol: Option<f64>,
    #[serde(default)]
    pub expect_outcome: Option<Classification>,
}

fn default_diffusivity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(check: impl Into<String>, pass: bool, detail: impl Into<String>) -> Verdict {
        Verdict {
            check: check.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Reproducibility manifest plus results for one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub kind: String,
    /// SHA-256 of the spec's canonical TOML form.
    pub spec_hash: String,
    pub software_version: String,
    pub grid: GridSettings,
    pub diffusivity: f64,
    pub wall_ms: u128,
    /// True iff every verdict passed.
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    /// Kind-specific numeric payload.
    pub points: serde_json::Value,
}

pub fn spec_hash(spec: &ExperimentSpec) -> Result<String> {
    let text = toml::to_string(spec)
        .map_err(|e| Error::Config(format!("cannot serialize experiment spec: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

fn require_increasing(sweep: &[f64], what: &str) -> Result<()> {
    if sweep.is_empty() {
        return Err(Error::Config(format!("{what} needs a nonempty sweep list")));
    }
    for w in sweep.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Config(format!(
                "{what} sweep must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

fn sim_settings(spec: &ExperimentSpec) -> Result<SimSettings> {
    let horizon = spec.horizon.ok_or_else(|| {
        Error::Config(format!("experiment {:?} needs a horizon", spec.name))
    })?;
    Ok(SimSettings {
        diffusivity: spec.diffusivity,
        horizon,
        dt: spec.dt,
        frame_stride: spec.frame_stride,
        monitor_coth: spec.monitor_coth,
    })
}

fn initial_datum(spec: &ExperimentSpec) -> Result<InitialDatum> {
    match &spec.initial {
        Some(init) => init.build(),
        None => Ok(InitialDatum::ConstantPatch {
            height: 1.0,
            x_half_width: None,
            theta_half_width: None,
        }),
    }
}

fn unit_grid(spec: &ExperimentSpec) -> Result<Grid> {
    spec.grid.periodic_grid(
        spec.landscape.space_dim,
        spec.landscape.pheno_dim,
        1.0,
        None,
    )
}

/// Dispatches to the kind-specific runner and, when an output directory is
/// given, writes the record JSON and per-curve CSV artifacts there.
pub fn run_experiment(
    spec: &ExperimentSpec,
    tols: &Tolerances,
    outdir: Option<&Path>,
) -> Result<RunRecord> {
    let started = Instant::now();
    let landscape = spec.landscape.build()?;
    landscape.check(256, 11)?;
    let mut artifacts: Vec<(String, String)> = Vec::new();
    let mut binary: Option<(String, Vec<u8>)> = None;
    let (verdicts, points) = match spec.kind {
        ExperimentKind::Eigen => run_eigen(spec, &landscape, tols)?,
        ExperimentKind::Dichotomy => run_dichotomy_inner(spec, &landscape, tols, &mut artifacts)?,
        ExperimentKind::PeriodSweep | ExperimentKind::DiffusivitySweep => {
            run_monotonicity_inner(spec, &landscape, tols, &mut artifacts)?
        }
        ExperimentKind::Truncation => {
            run_truncation_inner(spec, &landscape, tols, &mut artifacts)?
        }
        ExperimentKind::Simulate => {
            run_simulate_inner(spec, &landscape, tols, &mut artifacts, &mut binary)?
        }
    };
    let passed = verdicts.iter().all(|v| v.pass);
    let record = RunRecord {
        name: spec.name.clone(),
        kind: spec.kind.as_str().to_string(),
        spec_hash: spec_hash(spec)?,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        grid: spec.grid,
        diffusivity: spec.diffusivity,
        wall_ms: started.elapsed().as_millis(),
        passed,
        verdicts,
        points,
    };
    if let Some(dir) = outdir {
        std::fs::create_dir_all(dir)?;
        let record_path = dir.join(format!("{}.record.json", spec.name));
        output::write_json(&record_path, &serde_json::to_value(&record).expect("record is JSON"))?;
        for (file, contents) in &artifacts {
            output::write_text(&dir.join(file), contents)?;
        }
        if let Some((file, bytes)) = &binary {
            std::fs::write(dir.join(file), bytes)?;
        }
    }
    Ok(record)
}

/// Shorthand runners matching the experiment vocabulary.
pub fn run_dichotomy(spec: &ExperimentSpec, tols: &Tolerances) -> Result<RunRecord> {
    expect_kind(spec, ExperimentKind::Dichotomy)?;
    run_experiment(spec, tols, None)
}

pub fn run_monotonicity(spec: &ExperimentSpec, tols: &Tolerances) -> Result<RunRecord> {
    if spec.kind != ExperimentKind::PeriodSweep && spec.kind != ExperimentKind::DiffusivitySweep {
        return Err(Error::Config(format!(
            "run_monotonicity needs a period-sweep or diffusivity-sweep experiment, got {}",
            spec.kind.as_str()
        )));
    }
    run_experiment(spec, tols, None)
}

pub fn run_truncation_study(spec: &ExperimentSpec, tols: &Tolerances) -> Result<RunRecord> {
    expect_kind(spec, ExperimentKind::Truncation)?;
    run_experiment(spec, tols, None)
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "expected a {} experiment, got {}",
            kind.as_str(),
            spec.kind.as_str()
        )));
    }
    Ok(())
}

fn run_eigen(
    spec: &ExperimentSpec,
    landscape: &Landscape,
    _tols: &Tolerances,
) -> Result<(Vec<Verdict>, serde_json::Value)> {
    if !spec.sweep.is_empty() {
        return Err(Error::Config(format!(
            "eigen experiment {:?} takes no sweep values",
            spec.name
        )));
    }
    let grid = unit_grid(spec)?;
    let r = sample_on_grid(landscape, &grid, &vec![0.0; landscape.space_dim()])?;
    let op = assemble_operator(&grid, &r, spec.diffusivity)?;
    let eig = principal_eigenpair(&op)?;
    let mut verdicts = vec![Verdict::new(
        "eigen-converged",
        true,
        format!(
            "λ = {} (residual {:.3e}, {} iterations, {} nodes)",
            output::fmt_f64(eig.lambda),
            eig.residual,
            eig.iterations,
            grid.total_nodes()
        ),
    )];
    if let Some(expected) = spec.expect_lambda {
        let tol_l = spec.lambda_tol.unwrap_or(1e-9);
        let err = (eig.lambda - expected).abs();
        verdicts.push(Verdict::new(
            "lambda-expected",
            err <= tol_l,
            format!("|λ − {expected}| = {err:.3e} (allowed {tol_l:.3e})"),
        ));
    }
    let points = serde_json::json!({
        "lambda": eig.lambda,
        "residual": eig.residual,
        "iterations": eig.iterations,
        "nodes": grid.total_nodes(),
    });
    Ok((verdicts, points))
}

#[derive(Debug, Clone, Serialize)]
struct DichotomyPoint {
    c: f64,
    lambda: f64,
    lambda_predicted: f64,
    shift_error: f64,
    classification: Classification,
    expected: Option<Classification>,
    sup_rho_final: f64,
    apriori_worst_ratio: f64,
    coth_worst_ratio: Option<f64>,
}

fn run_dichotomy_inner(
    spec: &ExperimentSpec,
    landscape: &Landscape,
    tols: &Tolerances,
    artifacts: &mut Vec<(String, String)>,
) -> Result<(Vec<Verdict>, serde_json::Value)> {
    require_increasing(&spec.sweep, "dichotomy shift")?;
    let settings = sim_settings(spec)?;
    let datum = initial_datum(spec)?;
    let thresholds = Thresholds {
        extinct: tols.extinct_eps,
        persist: tols.persist_eps,
    };
    let grid = unit_grid(spec)?;
    let r = sample_on_grid(landscape, &grid, &vec![0.0; landscape.space_dim()])?;
    let base = principal_eigenpair(&assemble_operator(&grid, &r, spec.diffusivity)?)?;

    let mut verdicts = Vec::new();
    let mut pts: Vec<DichotomyPoint> = Vec::new();
    for &c in &spec.sweep {
        let shifted_r: Vec<f64> = r.iter().map(|v| v + c).collect();
        let direct =
            principal_eigenpair(&assemble_operator(&grid, &shifted_r, spec.diffusivity)?)?;
        let predicted = base.lambda + c;
        let shift_error = (direct.lambda - predicted).abs();
        verdicts.push(Verdict::new(
            format!("shift-identity@c={c}"),
            shift_error <= tols.shift_crosscheck,
            format!("|λ(r+c) − λ(r) − c| = {shift_error:.3e}"),
        ));

        let shifted_land = landscape::shift(landscape, c)?;
        let (class, outcome) =
            classify_long_time(&shifted_land, &grid, &datum, &settings, &thresholds)?;
        let expected = if direct.lambda < -tols.dichotomy_margin {
            Some(Classification::Extinct)
        } else if direct.lambda > tols.dichotomy_margin {
            Some(Classification::Persist)
        } else {
            None
        };
        let (pass, detail) = match expected {
            Some(want) => (
                class == want,
                format!(
                    "λ = {:.6e} ⇒ expected {}, simulation says {} (sup ρ ends at {:.3e})",
                    direct.lambda,
                    want.as_str(),
                    class.as_str(),
                    outcome.state.rho_sup()
                ),
            ),
            None => (
                true,
                format!(
                    "λ = {:.6e} inside the ±{} margin band; no classification claim",
                    direct.lambda, tols.dichotomy_margin
                ),
            ),
        };
        verdicts.push(Verdict::new(format!("classification@c={c}"), pass, detail));
        if outcome.state.monitors.apriori_violations > 0 {
            verdicts.push(Verdict::new(
                format!("apriori@c={c}"),
                false,
                format!(
                    "{} ceiling violations (worst ratio {})",
                    outcome.state.monitors.apriori_violations,
                    outcome.state.monitors.worst_apriori_ratio
                ),
            ));
        }
        if let Some(coth) = &outcome.coth {
            verdicts.push(Verdict::new(
                format!("coth@c={c}"),
                coth.violations == 0,
                format!("worst ratio {} over {} checks", coth.worst_ratio, coth.checks),
            ));
        }
        pts.push(DichotomyPoint {
            c,
            lambda: direct.lambda,
            lambda_predicted: predicted,
            shift_error,
            classification: class,
            expected,
            sup_rho_final: outcome.state.rho_sup(),
            apriori_worst_ratio: outcome.state.monitors.worst_apriori_ratio,
            coth_worst_ratio: outcome.coth.as_ref().map(|r| r.worst_ratio),
        });
    }
    let mut csv = String::from(
        "c,lambda,lambda_predicted,shift_error,classification,sup_rho_final\n",
    );
    for p in &pts {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            output::fmt_f64(p.c),
            output::fmt_f64(p.lambda),
            output::fmt_f64(p.lambda_predicted),
            output::fmt_f64(p.shift_error),
            p.classification.as_str(),
            output::fmt_f64(p.sup_rho_final),
        ));
    }
    artifacts.push((format!("{}.dichotomy.csv", spec.name), csv));
    let points = serde_json::json!({
        "lambda_base": base.lambda,
        "points": pts,
    });
    Ok((verdicts, points))
}

fn run_monotonicity_inner(
    spec: &ExperimentSpec,
    landscape: &Landscape,
    tols: &Tolerances,
    artifacts: &mut Vec<(String, String)>,
) -> Result<(Vec<Verdict>, serde_json::Value)> {
    let mut verdicts = Vec::new();
    let points;
    match spec.kind {
        ExperimentKind::PeriodSweep => {
            require_increasing(&spec.sweep, "period")?;
            let pts = lambda_of_period(landscape, spec.diffusivity, &spec.sweep, &spec.grid, None)?;
            let mut worst = f64::NEG_INFINITY;
            for w in pts.windows(2) {
                worst = worst.max(w[0].lambda - w[1].lambda);
            }
            verdicts.push(Verdict::new(
                "lambda-nondecreasing-in-L",
                pts.windows(2).all(|w| w[1].lambda >= w[0].lambda - tols.eps_mono),
                format!("worst backward step {worst:.3e} (allowed {:.1e})", tols.eps_mono),
            ));
            // Informational: observed jumps against the scaling-based
            // continuity modulus ((L'/L)² − 1)·(sup r − λ(L_min)).
            let lam0 = pts.first().map(|p| p.lambda).unwrap_or(0.0);
            let moduli: Vec<serde_json::Value> = pts
                .windows(2)
                .map(|w| {
                    let ratio = w[1].parameter / w[0].parameter;
                    let bound = (ratio * ratio - 1.0) * (landscape.sup_r() - lam0);
                    serde_json::json!({
                        "l_lo": w[0].parameter,
                        "l_hi": w[1].parameter,
                        "observed": w[1].lambda - w[0].lambda,
                        "modulus_bound": bound,
                        "within": w[1].lambda - w[0].lambda <= bound + 1e-9,
                    })
                })
                .collect();
            artifacts.push((format!("{}.sweep.csv", spec.name), output::sweep_csv(&pts)));
            points = serde_json::json!({ "sweep": pts, "continuity_moduli": moduli });
        }
        ExperimentKind::DiffusivitySweep => {
            require_increasing(&spec.sweep, "diffusivity")?;
            let pts = lambda_of_diffusivity(landscape, &spec.sweep, &spec.grid)?;
            let mut worst = f64::NEG_INFINITY;
            for w in pts.windows(2) {
                worst = worst.max(w[1].lambda - w[0].lambda);
            }
            verdicts.push(Verdict::new(
                "lambda-nonincreasing-in-d",
                pts.windows(2).all(|w| w[1].lambda <= w[0].lambda + tols.eps_mono),
                format!("worst forward step {worst:.3e} (allowed {:.1e})", tols.eps_mono),
            ));
            let worst_scaling = pts
                .iter()
                .map(|p| p.scaling_residual)
                .fold(0.0_f64, f64::max);
            verdicts.push(Verdict::new(
                "scaling-identity",
                pts.iter().all(|p| p.scaling_residual <= tols.scaling_residual),
                format!(
                    "worst |λ_d − λ[r^(1/√d)]| = {worst_scaling:.3e} (allowed {:.1e})",
                    tols.scaling_residual
                ),
            ));
            artifacts.push((
                format!("{}.diffusivity.csv", spec.name),
                output::diffusivity_csv(&pts),
            ));
            points = serde_json::json!({ "sweep": pts });
        }
        _ => unreachable!("dispatch guarantees a sweep kind"),
    }
    Ok((verdicts, points))
}

fn run_truncation_inner(
    spec: &ExperimentSpec,
    landscape: &Landscape,
    tols: &Tolerances,
    artifacts: &mut Vec<(String, String)>,
) -> Result<(Vec<Verdict>, serde_json::Value)> {
    require_increasing(&spec.sweep, "truncation radius")?;
    let kinds = spec.truncations.clone().unwrap_or_else(|| {
        vec![
            TruncationKind::Mixed,
            TruncationKind::DirichletBall,
            TruncationKind::PeriodicDirichletTheta,
        ]
    });
    let mut verdicts = Vec::new();
    let mut curves = serde_json::Map::new();
    for kind in kinds {
        match eigen_truncation_sequence(
            landscape,
            spec.diffusivity,
            kind,
            &spec.sweep,
            &spec.grid,
            tols.eps_mono,
        ) {
            Ok(curve) => {
                let final_gap = curve.gaps.last().copied().unwrap_or(f64::NAN);
                verdicts.push(Verdict::new(
                    format!("{}-monotone-below-reference", kind.as_str()),
                    true,
                    format!(
                        "λ range [{}, {}], reference {}, final gap {final_gap:.3e}",
                        output::fmt_f64(curve.points.first().map(|p| p.lambda).unwrap_or(f64::NAN)),
                        output::fmt_f64(curve.points.last().map(|p| p.lambda).unwrap_or(f64::NAN)),
                        output::fmt_f64(curve.reference.lambda),
                    ),
                ));
                artifacts.push((
                    format!("{}.{}.csv", spec.name, kind.as_str()),
                    output::sweep_csv(&curve.points),
                ));
                curves.insert(
                    kind.as_str().to_string(),
                    serde_json::to_value(&curve).expect("curve is JSON"),
                );
            }
            Err(Error::ExperimentFailed(msg)) => {
                verdicts.push(Verdict::new(
                    format!("{}-monotone-below-reference", kind.as_str()),
                    false,
                    msg,
                ));
            }
            Err(other) => return Err(other),
        }
    }
    Ok((verdicts, serde_json::Value::Object(curves)))
}

fn run_simulate_inner(
    spec: &ExperimentSpec,
    landscape: &Landscape,
    tols: &Tolerances,
    artifacts: &mut Vec<(String, String)>,
    binary: &mut Option<(String, Vec<u8>)>,
) -> Result<(Vec<Verdict>, serde_json::Value)> {
    let settings = sim_settings(spec)?;
    let datum = initial_datum(spec)?;
    let thresholds = Thresholds {
        extinct: tols.extinct_eps,
        persist: tols.persist_eps,
    };
    let grid = unit_grid(spec)?;
    let (class, outcome) = classify_long_time(landscape, &grid, &datum, &settings, &thresholds)?;
    let mut verdicts = vec![Verdict::new(
        "apriori-ceiling",
        outcome.state.monitors.apriori_violations == 0,
        format!(
            "A = {}, worst ratio {}, {} violations",
            output::fmt_f64(outcome.apriori),
            outcome.state.monitors.worst_apriori_ratio,
            outcome.state.monitors.apriori_violations
        ),
    )];
    if let Some(coth) = &outcome.coth {
        verdicts.push(Verdict::new(
            "coth-ceiling",
            coth.violations == 0,
            format!("worst ratio {} over {} checks", coth.worst_ratio, coth.checks),
        ));
    }
    if let Some(want) = spec.expect_outcome {
        verdicts.push(Verdict::new(
            "classification",
            class == want,
            format!("expected {}, got {}", want.as_str(), class.as_str()),
        ));
    }
    if !outcome.rho_frames.is_empty() {
        artifacts.push((
            format!("{}.trajectory.csv", spec.name),
            output::trajectory_csv(&outcome.rho_frames),
        ));
    }
    *binary = Some((
        format!("{}.u.bin", spec.name),
        output::u_binary(&outcome.state.u),
    ));
    let points = serde_json::json!({
        "classification": class,
        "sup_rho_final": outcome.state.rho_sup(),
        "mass_final": outcome.state.mass,
        "apriori": outcome.apriori,
        "dt": outcome.dt,
        "steps": outcome.steps,
        "halvings": outcome.halvings,
        "monitors": outcome.state.monitors.clone(),
        "coth": outcome.coth.clone(),
    });
    Ok((verdicts, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_spec(c: f64) -> ExperimentSpec {
        let mut params = BTreeMap::new();
        params.insert("c".to_string(), c);
        ExperimentSpec {
            name: "unit".to_string(),
            kind: ExperimentKind::Eigen,
            landscape: LandscapeSpec {
                preset: "constant".to_string(),
                params,
                space_dim: 1,
                pheno_dim: 1,
            },
            grid: GridSettings {
                space_nodes: 8,
                pheno_nodes: 9,
                pheno_extent: 1.0,
            },
            diffusivity: 1.0,
            sweep: vec![],
            truncations: None,
            horizon: None,
            dt: None,
            initial: None,
            monitor_coth: false,
            frame_stride: 0,
            expect_lambda: Some(c),
            lambda_tol: Some(1e-9),
            expect_outcome: None,
        }
    }

    #[test]
    fn eigen_experiment_matches_expected_lambda_and_hashes_stably() {
        let spec = constant_spec(0.25);
        let tols = Tolerances::default();
        let rec = run_experiment(&spec, &tols, None).unwrap();
        assert!(rec.passed, "verdicts: {:?}", rec.verdicts);
        assert_eq!(rec.spec_hash.len(), 64);
        let rec2 = run_experiment(&spec, &tols, None).unwrap();
        assert_eq!(rec.spec_hash, rec2.spec_hash);
        assert_eq!(rec.points, rec2.points, "identical spec must reproduce bitwise");
    }

    #[test]
    fn eigen_experiment_fails_cleanly_on_wrong_expectation() {
        let mut spec = constant_spec(0.25);
        spec.expect_lambda = Some(5.0);
        let rec = run_experiment(&spec, &Tolerances::default(), None).unwrap();
        assert!(!rec.passed);
    }

    #[test]
    fn sweeps_must_be_strictly_increasing() {
        let mut spec = constant_spec(0.0);
        spec.kind = ExperimentKind::PeriodSweep;
        spec.expect_lambda = None;
        spec.sweep = vec![1.0, 1.0];
        let err = run_experiment(&spec, &Tolerances::default(), None).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn constant_landscape_period_sweep_is_flat() {
        let mut spec = constant_spec(0.3);
        spec.kind = ExperimentKind::PeriodSweep;
        spec.expect_lambda = None;
        spec.sweep = vec![0.5, 1.0, 2.0];
        let rec = run_experiment(&spec, &Tolerances::default(), None).unwrap();
        assert!(rec.passed, "verdicts: {:?}", rec.verdicts);
        let pts = rec.points["sweep"].as_array().unwrap();
        for p in pts {
            let lam = p["lambda"].as_f64().unwrap();
            assert!((lam - 0.3).abs() < 1e-9, "λ = {lam} should be flat at 0.3");
        }
    }
}
