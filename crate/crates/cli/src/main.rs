//! Command-line driver: loads a TOML config, selects experiments by kind,
//! runs them, prints verdicts, and writes records/CSVs to the output
//! directory.
//!
//! Exit codes: 0 when every selected experiment passes, 1 when an experiment
//! runs but fails an assertion (or a solver gives up mid-run), 2 for config
//! and input mistakes. Failures also emit a machine-readable JSON object to
//! stderr and, when possible, to `<outdir>/error.json`.

use clap::{Parser, Subcommand};
use phenokpp::config::{parse_config, Config};
use phenokpp::error::Error;
use phenokpp::experiments::{run_experiment, ExperimentKind, RunRecord};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "phenokpp",
    version,
    about = "Persistence thresholds and dynamics for space/phenotype growth landscapes"
)]
struct Cli {
    /// TOML config with `[[experiment]]` tables.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (overrides config and PHENOKPP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run the built-in sanity suite (no config needed) and exit.
    #[arg(long)]
    seed_check: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Single principal-eigenvalue solves.
    Eigen,
    /// Monitored time integrations.
    Simulate,
    /// Persistence/extinction dichotomy maps.
    Dichotomy,
    /// Period and diffusivity eigenvalue sweeps.
    Sweep,
    /// Truncated-domain eigenvalue studies.
    Truncation,
}

impl Command {
    fn kinds(self) -> &'static [ExperimentKind] {
        match self {
            Command::Eigen => &[ExperimentKind::Eigen],
            Command::Simulate => &[ExperimentKind::Simulate],
            Command::Dichotomy => &[ExperimentKind::Dichotomy],
            Command::Sweep => &[
                ExperimentKind::PeriodSweep,
                ExperimentKind::DiffusivitySweep,
            ],
            Command::Truncation => &[ExperimentKind::Truncation],
        }
    }

    fn noun(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Simulate => "simulate",
            Command::Dichotomy => "dichotomy",
            Command::Sweep => "sweep",
            Command::Truncation => "truncation",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err((err, outdir)) => {
            let payload = serde_json::json!({
                "error": err.kind(),
                "message": err.to_string(),
                "exit_code": err.exit_code(),
            });
            eprintln!("{payload}");
            if let Some(dir) = outdir {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let text = serde_json::to_string_pretty(&payload).expect("payload is JSON");
                    let _ = std::fs::write(dir.join("error.json"), text + "\n");
                }
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

type Fail = (Error, Option<PathBuf>);

fn run(cli: Cli) -> Result<ExitCode, Fail> {
    if cli.seed_check {
        return seed_check();
    }
    let Cli {
        config: config_arg,
        out,
        threads,
        command,
        ..
    } = cli;
    let command = command.ok_or_else(|| {
        (
            Error::Config(
                "nothing to do: pass a subcommand (eigen|simulate|dichotomy|sweep|truncation) \
                 or --seed-check"
                    .to_string(),
            ),
            None,
        )
    })?;
    let config_path = config_arg.ok_or_else(|| {
        (
            Error::Config("missing --config <FILE> (required for subcommands)".to_string()),
            out.clone(),
        )
    })?;
    let text = std::fs::read_to_string(&config_path).map_err(|e| {
        (
            Error::Config(format!("cannot read {}: {e}", config_path.display())),
            out.clone(),
        )
    })?;
    let config = parse_config(&text).map_err(|e| (e, out.clone()))?;
    let outdir = out.unwrap_or_else(|| config.output_dir.clone());

    init_threads(threads, &config).map_err(|e| (e, Some(outdir.clone())))?;

    let selected: Vec<_> = config
        .experiments
        .iter()
        .filter(|e| command.kinds().contains(&e.kind))
        .collect();
    if selected.is_empty() {
        return Err((
            Error::Config(format!(
                "config {} defines no {} experiments",
                config_path.display(),
                command.noun()
            )),
            Some(outdir),
        ));
    }

    let mut failed: Vec<String> = Vec::new();
    for spec in selected {
        let record = run_experiment(spec, &config.tolerances, Some(&outdir))
            .map_err(|e| (e, Some(outdir.clone())))?;
        print_record(&record);
        if !record.passed {
            failed.push(record.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err((
            Error::ExperimentFailed(format!("experiments failed: {}", failed.join(", "))),
            Some(outdir),
        ))
    }
}

fn print_record(record: &RunRecord) {
    let status = if record.passed { "PASS" } else { "FAIL" };
    println!(
        "{status} {} ({}, {} ms, spec {})",
        record.name,
        record.kind,
        record.wall_ms,
        &record.spec_hash[..12]
    );
    for v in &record.verdicts {
        let mark = if v.pass { "ok " } else { "FAIL" };
        println!("  [{mark}] {}: {}", v.check, v.detail);
    }
}

/// Thread-count precedence: --threads, then config, then PHENOKPP_THREADS.
/// Unset means rayon's default (all cores).
fn init_threads(cli_threads: Option<usize>, config: &Config) -> Result<(), Error> {
    let from_env = || {
        std::env::var("PHENOKPP_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
    };
    let threads = cli_threads.or(config.threads).or_else(from_env);
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("threads must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

/// A fast self-test against closed-form answers; exercises the eigensolver,
/// the integrator, and the population-bound monitors without any config.
fn seed_check() -> Result<ExitCode, Fail> {
    use phenokpp::dynamics::{coth_bound, simulate, InitialDatum, SimSettings};
    use phenokpp::landscape::{make_preset, sample_on_grid};
    use phenokpp::operator::assemble_operator;
    use phenokpp::spectral::{principal_eigenpair, GridSettings};
    use std::collections::BTreeMap;

    let fail = |msg: String| (Error::ExperimentFailed(msg), None);
    let hard = |e: Error| (e, None);
    let mut all_ok = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "ok  " } else { "FAIL" });
        all_ok &= ok;
    };

    let settings = GridSettings {
        space_nodes: 12,
        pheno_nodes: 13,
        pheno_extent: 2.0,
    };
    let grid = settings.periodic_grid(1, 1, 1.0, None).map_err(hard)?;

    // Constant fitness c: the principal eigenvalue is exactly c.
    let mut params = BTreeMap::new();
    params.insert("c".to_string(), 0.4);
    let constant = make_preset("constant", &params, 1, 1).map_err(hard)?;
    let r = sample_on_grid(&constant, &grid, &[0.0]).map_err(hard)?;
    let eig = principal_eigenpair(&assemble_operator(&grid, &r, 1.0).map_err(hard)?).map_err(hard)?;
    let err = (eig.lambda - 0.4).abs();
    report(
        "constant-fitness eigenvalue",
        err <= 1e-10,
        format!("|λ − 0.4| = {err:.3e}"),
    );

    // Shifting the fitness by c shifts the eigenvalue by exactly c.
    let shifted: Vec<f64> = r.iter().map(|v| v + 0.3).collect();
    let eig2 =
        principal_eigenpair(&assemble_operator(&grid, &shifted, 1.0).map_err(hard)?).map_err(hard)?;
    let shift_err = (eig2.lambda - eig.lambda - 0.3).abs();
    report(
        "shift identity",
        shift_err <= 1e-10,
        format!("|λ(r+c) − λ(r) − c| = {shift_err:.3e}"),
    );

    // Homogeneous run follows the logistic curve and conserves positivity.
    let sim = SimSettings {
        diffusivity: 1.0,
        horizon: 5.0,
        dt: Some(1e-3),
        frame_stride: 0,
        monitor_coth: true,
    };
    let mut ones = BTreeMap::new();
    ones.insert("c".to_string(), 1.0);
    let logistic_land = make_preset("constant", &ones, 1, 1).map_err(hard)?;
    let r1 = sample_on_grid(&logistic_land, &grid, &[0.0]).map_err(hard)?;
    // Height 0.25 over a phenotype extent of 2 integrates to ρ(0) = 0.5.
    let u0 = InitialDatum::ConstantPatch {
        height: 0.25,
        x_half_width: None,
        theta_half_width: None,
    }
    .realize(&grid)
    .map_err(hard)?;
    let outcome = simulate(&grid, &r1, None, &sim, &u0).map_err(hard)?;
    let rho_t = outcome.state.rho_sup();
    let exact = 1.0 / (1.0 + std::f64::consts::E.powf(-5.0));
    let rel = (rho_t - exact).abs() / exact;
    report(
        "logistic growth",
        rel <= 1e-3,
        format!("relative error {rel:.3e} at t = 5"),
    );
    let coth = outcome.coth.as_ref().expect("monitor was enabled");
    report(
        "population bound monitor",
        coth.violations == 0,
        format!("{} checks, worst ratio {:.6}", coth.checks, coth.worst_ratio),
    );

    // Closed forms of the time-decaying population bound.
    let b0 = coth_bound(4.0, 0.0, 3.0).map_err(hard)?;
    let binf = coth_bound(4.0, 1e6, 3.0).map_err(hard)?;
    let closed = (b0 - 5.0).abs().max((binf - 2.0).abs());
    report(
        "bound closed forms",
        closed <= 1e-9,
        format!("worst deviation {closed:.3e}"),
    );

    if all_ok {
        println!("seed check passed");
        Ok(ExitCode::SUCCESS)
    } else {
        Err(fail("seed check found failures (see lines above)".to_string()))
    }
}
