//! Results files, plot data and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mvhom_core::grid::GridField;

use crate::config::{Command, PlotKind};
use crate::run::Results;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("plot kind `{kind}` does not apply to `{command}` results")]
    KindMismatch { kind: &'static str, command: &'static str },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn command_of(r: &Results) -> &'static str {
    match r {
        Results::Tfhom { .. } => Command::Tfhom.name(),
        Results::Theta { .. } => Command::Theta.name(),
        Results::FhomEval { .. } => Command::FhomEval.name(),
        Results::GammaSweep { .. } => Command::GammaSweep.name(),
        Results::Certify { .. } => Command::Certify.name(),
        Results::Probes { .. } => Command::Probes.name(),
    }
}

fn row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Command-specific CSV table.
pub fn results_csv(r: &Results) -> String {
    let mut s = String::new();
    match r {
        Results::Tfhom { estimate, recession } => {
            row(&mut s, &["quantity".into(), "t".into(), "value".into()]);
            for (t, v) in &estimate.trace {
                row(&mut s, &["tf_hom".into(), t.to_string(), v.to_string()]);
            }
            if let Some(rec) = recession {
                for (t, v) in &rec.trace {
                    row(&mut s, &["tf_hom_recession".into(), t.to_string(), v.to_string()]);
                }
            }
        }
        Results::Theta { estimate, .. } => {
            row(&mut s, &["quantity".into(), "t".into(), "value".into()]);
            for (t, v) in &estimate.estimate.trace {
                row(&mut s, &["theta_hom".into(), t.to_string(), v.to_string()]);
            }
            if let Some(c) = &estimate.cross_check {
                row(&mut s, &["geodesic_class".into(), (1.0 / c.eps).to_string(), c.geodesic_value.to_string()]);
            }
        }
        Results::FhomEval { breakdown, .. } => {
            row(&mut s, &["part".into(), "value".into()]);
            for (k, v) in [
                ("bulk", breakdown.bulk),
                ("surface", breakdown.surface),
                ("cantor", breakdown.cantor),
                ("total", breakdown.total),
            ] {
                row(&mut s, &[k.into(), v.to_string()]);
            }
        }
        Results::GammaSweep { report } => {
            row(
                &mut s,
                &["eps", "cells_per_axis", "min_energy", "recovery_energy", "converged", "iterations"].map(String::from),
            );
            for r in &report.records {
                row(
                    &mut s,
                    &[
                        r.eps.to_string(),
                        r.cells_per_axis.to_string(),
                        r.min_energy.to_string(),
                        r.recovery_energy.to_string(),
                        r.converged.to_string(),
                        r.iterations.to_string(),
                    ],
                );
            }
        }
        Results::Certify { report } => {
            row(&mut s, &["quantity".into(), "value".into()]);
            for (k, v) in [
                ("alpha_hat", report.alpha_hat.to_string()),
                ("beta_hat", report.beta_hat.to_string()),
                ("lip_hat", report.lip_hat.to_string()),
                ("recession_c", report.recession_c.to_string()),
                ("recession_q", report.recession_q.to_string()),
                ("periodic_pass", report.periodic_pass.to_string()),
                ("growth_pass", report.growth_pass.to_string()),
                ("lipschitz_pass", report.lipschitz_pass.to_string()),
                ("recession_pass", report.recession_pass.to_string()),
            ] {
                row(&mut s, &[k.into(), v]);
            }
        }
        Results::Probes {
            convexity,
            basis,
            regularity,
            projection,
        } => {
            row(&mut s, &["quantity".into(), "index".into(), "value".into()]);
            if let Some(c) = convexity {
                for (i, (l, v)) in c.lambdas.iter().zip(&c.values).enumerate() {
                    row(&mut s, &["convexity_lambda".into(), i.to_string(), l.to_string()]);
                    row(&mut s, &["convexity_value".into(), i.to_string(), v.to_string()]);
                }
                row(&mut s, &["convexity_violations".into(), String::new(), c.violations.len().to_string()]);
            }
            if let Some(b) = basis {
                for (i, v) in b.values.iter().enumerate() {
                    row(&mut s, &["basis_value".into(), i.to_string(), v.to_string()]);
                }
                row(&mut s, &["basis_max_deviation".into(), String::new(), b.max_deviation.to_string()]);
            }
            if let Some(r) = regularity {
                for (i, v) in r.thetas.iter().enumerate() {
                    row(&mut s, &["theta".into(), i.to_string(), v.to_string()]);
                }
                row(&mut s, &["max_lipschitz".into(), String::new(), r.max_lipschitz.to_string()]);
                row(&mut s, &["max_ratio".into(), String::new(), r.max_ratio.to_string()]);
                row(&mut s, &["refined_max_lipschitz".into(), String::new(), opt(r.refined_max_lipschitz)]);
            }
            if let Some(p) = projection {
                row(&mut s, &["projection_ratio".into(), String::new(), p.ratio.to_string()]);
                row(&mut s, &["projection_refined_ratio".into(), String::new(), p.refined_ratio.to_string()]);
            }
        }
    }
    s
}

fn field_rows(field: &GridField, mut cols: impl FnMut(&[f64]) -> Vec<f64>, out: &mut String) {
    let g = field.grid();
    for i in 0..g.num_nodes() {
        let mut line: Vec<String> = g.node_position(i).iter().map(|x| x.to_string()).collect();
        line.extend(cols(field.node(i)).iter().map(|v| v.to_string()));
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

/// Whitespace-separated columns with a `#` header.
pub fn export_plotdata(r: &Results, kind: PlotKind) -> Result<String, OutputError> {
    let mismatch = || OutputError::KindMismatch {
        kind: kind.name(),
        command: command_of(r),
    };
    let mut s = String::new();
    match (kind, r) {
        (PlotKind::Trace, Results::Tfhom { estimate, .. }) => {
            s.push_str("# t value\n");
            for (t, v) in &estimate.trace {
                let _ = writeln!(s, "{t} {v}");
            }
        }
        (PlotKind::Trace, Results::Theta { estimate, .. }) => {
            s.push_str("# t value\n");
            for (t, v) in &estimate.estimate.trace {
                let _ = writeln!(s, "{t} {v}");
            }
        }
        (PlotKind::Field1d, Results::GammaSweep { report }) => {
            let field = report.fields.last().ok_or_else(mismatch)?;
            if field.grid().dim() != 1 {
                return Err(mismatch());
            }
            let w = field.width();
            let names: Vec<String> = (1..=w).map(|k| format!("u{k}")).collect();
            let _ = writeln!(s, "# x {}", names.join(" "));
            field_rows(field, |v| v.to_vec(), &mut s);
        }
        (PlotKind::Interface2d, Results::Theta { field: Some(field), .. }) => {
            if field.grid().dim() != 2 {
                return Err(mismatch());
            }
            s.push_str("# x1 x2 angle\n");
            field_rows(field, |v| vec![v[1].atan2(v[0])], &mut s);
        }
        _ => return Err(mismatch()),
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub converged: bool,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<ManifestEntry, OutputError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| OutputError::Io { path, source })?;
    Ok(ManifestEntry {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    })
}

/// Writes results.csv, results.json, the requested plot files and
/// manifest.json into `dir`. Returns the manifest.
pub fn write_outputs(
    dir: &Path,
    command: Command,
    seed: u64,
    config_text: &str,
    results: &Results,
    plots: &[PlotKind],
) -> Result<Manifest, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = vec![write(dir, "results.csv", results_csv(results).as_bytes())?];
    let mut json = serde_json::to_string_pretty(results).expect("results serialize");
    json.push('\n');
    files.push(write(dir, "results.json", json.as_bytes())?);
    let mut kinds = plots.to_vec();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        let data = export_plotdata(results, kind)?;
        files.push(write(dir, &format!("plot_{}.dat", kind.name()), data.as_bytes())?);
    }
    let manifest = Manifest {
        tool: "mvhom",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        converged: results.converged(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).map_err(|source| OutputError::Io { path, source })?;
    Ok(manifest)
}
