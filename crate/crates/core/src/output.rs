//! Result serialization: CSV tables with full-precision floats, pretty JSON
//! records, and raw little-endian dumps of the final density. Floats are
//! printed with 17 significant digits so parsing them back reproduces the
//! exact bit pattern.

use crate::error::Result;
use crate::spectral::{DiffusivityPoint, SweepPoint};
use std::fs;
use std::path::Path;

/// Shortest-guaranteed-lossless float form: 17 significant digits,
/// exponent notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value always serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Final-state density as raw f64 little-endian bytes, phenotype index
/// fastest (the grid's native layout).
pub fn u_binary(u: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(u.len() * 8);
    for &v in u {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Eigenvalue-sweep table. Columns: parameter, lambda, residual,
/// iterations, nodes.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("parameter,lambda,residual,iterations,nodes\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(p.parameter),
            fmt_f64(p.lambda),
            fmt_f64(p.residual),
            p.iterations,
            p.nodes
        ));
    }
    out
}

/// Diffusivity-sweep table: the canonical five columns plus the rescaled
/// eigenvalue and the scaling-identity residual.
pub fn diffusivity_csv(points: &[DiffusivityPoint]) -> String {
    let mut out =
        String::from("parameter,lambda,residual,iterations,nodes,lambda_scaled,scaling_residual\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(p.diffusivity),
            fmt_f64(p.lambda),
            fmt_f64(p.residual),
            p.iterations,
            p.nodes,
            fmt_f64(p.lambda_scaled),
            fmt_f64(p.scaling_residual)
        ));
    }
    out
}

/// Trajectory frames: one row per recorded time, `t` followed by the spatial
/// density profile ρ(t, x_0), ρ(t, x_1), …
pub fn trajectory_csv(frames: &[(f64, Vec<f64>)]) -> String {
    let cols = frames.first().map(|(_, rho)| rho.len()).unwrap_or(0);
    let mut out = String::from("t");
    for j in 0..cols {
        out.push_str(&format!(",rho_{j}"));
    }
    out.push('\n');
    for (t, rho) in frames {
        out.push_str(&fmt_f64(*t));
        for v in rho {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatted_floats_parse_back_to_the_same_bits() {
        for &x in &[
            0.1,
            std::f64::consts::PI,
            -1.0e-300,
            6.02214076e23,
            -0.0,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
        ] {
            let parsed: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(
                parsed.to_bits(),
                x.to_bits(),
                "{x:?} printed as {} lost bits",
                fmt_f64(x)
            );
        }
    }

    #[test]
    fn sweep_csv_has_the_canonical_header_and_one_row_per_point() {
        let pts = vec![
            SweepPoint {
                parameter: 0.5,
                lambda: -0.25,
                residual: 1e-12,
                iterations: 10,
                nodes: 72,
            },
            SweepPoint {
                parameter: 1.0,
                lambda: -0.125,
                residual: 1e-12,
                iterations: 11,
                nodes: 72,
            },
        ];
        let csv = sweep_csv(&pts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "parameter,lambda,residual,iterations,nodes");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",10,72"), "row: {}", lines[1]);
    }

    #[test]
    fn trajectory_csv_widens_to_the_profile_length() {
        let frames = vec![(0.0, vec![1.0, 2.0, 3.0]), (0.5, vec![1.5, 2.5, 3.5])];
        let csv = trajectory_csv(&frames);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,rho_0,rho_1,rho_2");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].matches(',').count(), 3);
    }

    #[test]
    fn binary_dump_is_little_endian_f64() {
        let bytes = u_binary(&[1.0, -2.5]);
        assert_eq!(bytes.len(), 16);
        assert_eq!(f64::from_le_bytes(bytes[0..8].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), -2.5);
    }
}
