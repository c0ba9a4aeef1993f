//! CSV and JSON artifacts with provenance, written atomically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::freqresp::DualRateFrequencyResponse;
use crate::qft::{GainScanRow, NicholsBoundary};
use crate::simulation::TimeSeries;
use crate::ugv::Trajectory;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub scenario_sha256: String,
    /// Command-line switches that shaped the run.
    pub options: Vec<String>,
}

impl Provenance {
    pub fn new(scenario: &str, source: &str, options: Vec<String>) -> Self {
        Provenance {
            tool: "dualrate",
            version: VERSION,
            scenario: scenario.to_string(),
            scenario_sha256: sha256_hex(source.as_bytes()),
            options,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    data: &'a T,
}

pub fn json<T: Serialize>(prov: &Provenance, data: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&Envelope { provenance: prov, data }).map_err(|e| Error::Numerical(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes next to the target and renames over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Scenario(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

enum Cell<'a> {
    Num(f64),
    Text(&'a str),
}

fn table<'a>(header: &[&str], rows: impl Iterator<Item = Vec<Cell<'a>>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    let err = |e: csv::Error| Error::Numerical(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        let rec: Vec<String> = row
            .into_iter()
            .map(|c| match c {
                Cell::Num(v) => v.to_string(),
                Cell::Text(s) => s.to_string(),
            })
            .collect();
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Numerical(e.to_string()))
}

/// t, r, y, u, d
pub fn series_csv(s: &TimeSeries) -> Result<Vec<u8>> {
    table(
        &["t", "r", "y", "u", "d"],
        (0..s.t.len()).map(|i| vec![Cell::Num(s.t[i]), Cell::Num(s.r[i]), Cell::Num(s.y[i]), Cell::Num(s.u[i]), Cell::Num(s.d[i])]),
    )
}

/// omega, magnitude_db, phase_deg
pub fn bode_csv(r: &DualRateFrequencyResponse) -> Result<Vec<u8>> {
    let (m, p) = (r.magnitude_db(), r.phase_deg());
    table(
        &["omega", "magnitude_db", "phase_deg"],
        (0..r.omega.len()).map(|i| vec![Cell::Num(r.omega[i]), Cell::Num(m[i]), Cell::Num(p[i])]),
    )
}

/// omega, phase_deg, magnitude_db, kind
pub fn boundaries_csv(bs: &[NicholsBoundary]) -> Result<Vec<u8>> {
    let mut rows = vec![];
    for b in bs {
        let kind = match b.kind {
            crate::qft::BoundaryKind::Stability => ["stability_upper", "stability_lower"],
            crate::qft::BoundaryKind::Disturbance => ["disturbance_upper", "disturbance_lower"],
        };
        for (pts, k) in [(&b.upper, kind[0]), (&b.lower, kind[1])] {
            for (ph, mag) in pts {
                rows.push(vec![Cell::Num(b.omega), Cell::Num(*ph), Cell::Num(*mag), Cell::Text(k)]);
            }
        }
    }
    table(&["omega", "phase_deg", "magnitude_db", "kind"], rows.into_iter())
}

/// omega, phase_deg, magnitude_db of the open-loop locus
pub fn locus_csv(points: &[(f64, num_complex::Complex64)]) -> Result<Vec<u8>> {
    let phases = crate::freqresp::unwrap_deg(&points.iter().map(|(_, l)| l.arg().to_degrees()).collect::<Vec<_>>());
    table(
        &["omega", "phase_deg", "magnitude_db"],
        points.iter().zip(phases).map(|((w, l), p)| vec![Cell::Num(*w), Cell::Num(p), Cell::Num(20.0 * l.norm().log10())]),
    )
}

/// gain, spectral_radius, stable, pass, worst_ratio, stability_violations, disturbance_violations
pub fn gain_scan_csv(rows: &[GainScanRow]) -> Result<Vec<u8>> {
    let yes = |b: bool| if b { "true" } else { "false" };
    table(
        &["gain", "spectral_radius", "stable", "pass", "worst_ratio", "stability_violations", "disturbance_violations"],
        rows.iter().map(|r| {
            vec![
                Cell::Num(r.gain),
                Cell::Num(r.spectral_radius),
                Cell::Text(yes(r.stable)),
                Cell::Text(yes(r.report.pass)),
                Cell::Num(r.report.worst_ratio),
                Cell::Num(r.report.stability_violations.len() as f64),
                Cell::Num(r.report.disturbance_violations.len() as f64),
            ]
        }),
    )
}

/// t, x, y, heading, path_error
pub fn trajectory_csv(tr: &Trajectory) -> Result<Vec<u8>> {
    table(
        &["t", "x", "y", "heading", "path_error"],
        (0..tr.t.len()).map(|i| {
            vec![Cell::Num(tr.t[i]), Cell::Num(tr.x[i]), Cell::Num(tr.y[i]), Cell::Num(tr.heading[i]), Cell::Num(tr.path_error[i])]
        }),
    )
}

/// t, then r, y, u, d for the left and the right wheel
pub fn wheels_csv(left: &TimeSeries, right: &TimeSeries) -> Result<Vec<u8>> {
    table(
        &["t", "r_left", "y_left", "u_left", "d_left", "r_right", "y_right", "u_right", "d_right"],
        (0..left.t.len().min(right.t.len())).map(|i| {
            vec![
                Cell::Num(left.t[i]),
                Cell::Num(left.r[i]),
                Cell::Num(left.y[i]),
                Cell::Num(left.u[i]),
                Cell::Num(left.d[i]),
                Cell::Num(right.r[i]),
                Cell::Num(right.y[i]),
                Cell::Num(right.u[i]),
                Cell::Num(right.d[i]),
            ]
        }),
    )
}
