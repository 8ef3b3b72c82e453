use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use isoshell::analysis::{kernel_count, poisson_identity, Classification, Flag, PoissonIdentity};
use isoshell::{assemble, effective_tensor, UnitCell};
use serde::{Deserialize, Serialize};

/// Everything `analyze` learns about one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub cell: CellSummary,
    pub tol: f64,
    #[serde(rename = "A")]
    pub a: [[f64; 6]; 6],
    pub eigenvalues: [f64; 6],
    pub kernel_dim: usize,
    pub gap_ratio: f64,
    pub kernel_basis: Vec<[f64; 6]>,
    pub classification: Classification,
    #[serde(rename = "residual_AJA")]
    pub residual_aja: f64,
    /// `E_i : cof χ_j − χ_i : cof E_j` over pairs of kernel basis vectors.
    pub symplectic_pairings: Vec<Vec<f64>>,
    pub symplectic_residual: f64,
    pub poisson: Option<PoissonIdentity>,
    pub flags: Vec<Flag>,
    /// The only fields that differ between identical runs.
    pub timing: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub path: String,
    pub nodes: usize,
    pub bars: usize,
    pub area: f64,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds since the Unix epoch when the analysis finished.
    pub timestamp: f64,
    pub assemble_s: f64,
    pub tensor_s: f64,
    pub kernel_s: f64,
}

impl AnalysisReport {
    pub fn is_ambiguous(&self) -> bool {
        self.flags.contains(&Flag::Ambiguous)
    }
}

pub fn analyze(cell: &UnitCell, path: &Path, tol: f64) -> isoshell::Result<AnalysisReport> {
    let t0 = Instant::now();
    let sys = assemble(cell)?;
    let t1 = Instant::now();
    let tensor = effective_tensor(&sys)?;
    let t2 = Instant::now();
    let report = kernel_count(&tensor, tol);
    let poisson = poisson_identity(&report, 1e-6).ok();
    let t3 = Instant::now();

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64());
    Ok(AnalysisReport {
        cell: CellSummary {
            path: path.display().to_string(),
            nodes: cell.nodes.len(),
            bars: cell.bars.len(),
            area: cell.area(),
            metadata: cell.metadata.clone(),
        },
        tol,
        a: tensor.as_rows(),
        eigenvalues: report.eigenvalues,
        kernel_dim: report.kernel_dim,
        gap_ratio: report.gap_ratio,
        kernel_basis: report.kernel_basis.clone(),
        classification: report.classification,
        residual_aja: report.residual_aja,
        symplectic_pairings: report.pairing_matrix(),
        symplectic_residual: report.symplectic_residual,
        poisson,
        flags: report.flags.clone(),
        timing: Timing {
            timestamp,
            assemble_s: (t1 - t0).as_secs_f64(),
            tensor_s: (t2 - t1).as_secs_f64(),
            kernel_s: (t3 - t2).as_secs_f64(),
        },
    })
}
