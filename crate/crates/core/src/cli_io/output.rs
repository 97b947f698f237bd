//! JSON and CSV serialization of results, and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::master_equation::{ConvergencePoint, EvolutionResult};
use crate::operator_algebra::{CMatrix, SubspaceIsometry};
use crate::slh_model::SlhTriple;
use crate::trajectories::{MeasurementRecord, TrajectoryResult};
use crate::zeno_elimination::{ConditionTolerances, Residuals};
use crate::linear_systems::StabilityReport;

/// Dense matrix as rows of `[re, im]` pairs.
pub fn matrix_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Inverse of [`matrix_rows`]; rows must have equal length.
pub fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Option<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(CMatrix::from_fn(nrows, ncols, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

#[derive(Clone, Debug, Serialize)]
pub struct TripleJson {
    pub dimension: usize,
    pub channels: usize,
    /// `scattering[i][j]` is the operator `S_ij`.
    pub scattering: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
    pub coupling: Vec<Vec<Vec<[f64; 2]>>>,
    pub hamiltonian: Vec<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isometry: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    pub warnings: Vec<String>,
}

impl TripleJson {
    pub fn new(g: &SlhTriple, isometry: Option<&SubspaceIsometry>, residuals: Option<Residuals>) -> Self {
        let n = g.channels();
        Self {
            dimension: g.space().total_dim(),
            channels: n,
            scattering: (0..n)
                .map(|i| (0..n).map(|j| matrix_rows(g.scattering(i, j).matrix())).collect())
                .collect(),
            coupling: g.coupling().iter().map(|l| matrix_rows(l.matrix())).collect(),
            hamiltonian: matrix_rows(g.hamiltonian().matrix()),
            isometry: isometry.map(|v| matrix_rows(v.columns())),
            residuals,
            warnings: g.warnings().to_vec(),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn state_header(out: &mut String, dim: usize) {
    for i in 0..dim {
        for j in 0..dim {
            let _ = write!(out, ",rho_{i}_{j}_re,rho_{i}_{j}_im");
        }
    }
}

fn state_row(out: &mut String, m: &CMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let _ = write!(out, ",{},{}", num(m[(i, j)].re), num(m[(i, j)].im));
        }
    }
}

/// `time` followed by every density-matrix entry, row-major.
pub fn evolution_csv(evo: &EvolutionResult) -> String {
    let dim = evo.states.first().map_or(0, |s| s.dim());
    let mut out = String::from("time");
    state_header(&mut out, dim);
    out.push('\n');
    for (t, rho) in evo.times.iter().zip(&evo.states) {
        out.push_str(&num(*t));
        state_row(&mut out, rho.matrix());
        out.push('\n');
    }
    out
}

/// One row per step: record increment (`dY` or jump flag), innovation and
/// the conditioned state after the step. The first row holds the initial
/// state with empty record columns.
pub fn trajectory_csv(traj: &TrajectoryResult) -> String {
    let dim = traj.states.first().map_or(0, |s| s.dim());
    let record_col = match traj.record {
        MeasurementRecord::Homodyne { .. } => "dY",
        MeasurementRecord::Counting { .. } => "jump",
    };
    let mut out = format!("time,{record_col},innovation");
    state_header(&mut out, dim);
    out.push('\n');
    for (n, (t, rho)) in traj.times.iter().zip(&traj.states).enumerate() {
        out.push_str(&num(*t));
        if n == 0 {
            out.push_str(",,");
        } else {
            let record = match &traj.record {
                MeasurementRecord::Homodyne { increments } => num(increments[n - 1]),
                MeasurementRecord::Counting { jumps, .. } => u8::from(jumps[n - 1]).to_string(),
            };
            let _ = write!(out, ",{record},{}", num(traj.innovations[n - 1]));
        }
        state_row(&mut out, rho.matrix());
        out.push('\n');
    }
    out
}

pub fn convergence_csv(points: &[ConvergencePoint]) -> String {
    let mut out = String::from("k,trace_distance,leaked_population,dt\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", num(p.k), num(p.distance), num(p.leaked), num(p.dt));
    }
    out
}

pub fn stability_csv(report: &StabilityReport) -> String {
    let mut out = String::from("k,max_real_part,stable\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{}", num(r.k), num(r.max_real_part), r.stable);
    }
    out
}

/// Provenance record written next to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    /// SHA-256 of the canonical model text (or of the raw input for non-model inputs).
    pub input_digest: String,
    pub tolerances: ConditionTolerances,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: Vec<String>, canonical_input: &str, tolerances: ConditionTolerances, seeds: Vec<u64>) -> Self {
        Self {
            command,
            input_digest: digest(canonical_input),
            tolerances,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    /// `<artifact>.manifest.json`
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master_equation::{evolve, DensityMatrix};
    use crate::operator_algebra::{HilbertSpace, Operator};

    #[test]
    fn matrix_rows_round_trip() {
        let m = CMatrix::from_fn(2, 3, |i, j| Complex64::new(i as f64 + 0.1, j as f64 - 0.3));
        assert_eq!(matrix_from_rows(&matrix_rows(&m)).unwrap(), m);
        assert!(matrix_from_rows(&[vec![[0.0, 0.0]], vec![]]).is_none());
    }

    #[test]
    fn evolution_csv_layout() {
        let space = HilbertSpace::flat(2).unwrap();
        let l = Operator::ketbra(2, 0, 1).unwrap();
        let g = SlhTriple::with_identity_scattering(vec![l], Operator::zeros(&space)).unwrap();
        let rho = DensityMatrix::basis_state(&space, 1).unwrap();
        let csv = evolution_csv(&evolve(&g, &rho, 0.1, 0.05).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("time,rho_0_0_re,rho_0_0_im"));
        assert_eq!(lines[0].split(',').count(), 9);
        assert!(lines[1].starts_with("0.0,0.0,0.0,"));
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(digest("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(RunManifest::path_for(Path::new("out/z.json")), PathBuf::from("out/z.json.manifest.json"));
    }
}
