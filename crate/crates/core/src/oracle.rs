//! Dense brute-force references for cross-checking the main code path.
//!
//! Nothing here goes through [`crate::assembly`] or [`crate::effective`]: the
//! full elongation matrix is rebuilt directly from the cell geometry, the
//! effective tensor comes from an explicit Schur complement with an SVD
//! pseudoinverse, and the kernel count from the null space of the full map.

use nalgebra::{DMatrix, Matrix6, SVD};

use crate::cell::UnitCell;
use crate::error::{Error, Result};

/// Largest node count accepted by the dense routines.
pub const MAX_NODES: usize = 200;
/// Relative singular-value cutoff of the pseudoinverse.
pub const SV_CUTOFF: f64 = 1e-12;
/// Relative singular-value cutoff for the null space of the full map.
pub const NULL_CUTOFF: f64 = 1e-9;
/// Singular-value cutoff for the rank of the macro projection of null vectors.
pub const PROJECTION_CUTOFF: f64 = 1e-7;

/// `[C_macro | C_per]` as a dense `bars × (6 + 3N)` matrix, with bar stiffnesses.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub area: f64,
}

impl DenseSystem {
    pub fn build(cell: &UnitCell) -> Result<Self> {
        let n = cell.nodes.len();
        if n > MAX_NODES {
            return Err(Error::InvalidParameter(format!(
                "dense oracle limited to {MAX_NODES} nodes, cell has {n}"
            )));
        }
        let lat = &cell.lattice;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut matrix = DMatrix::zeros(cell.bars.len(), 6 + 3 * n);
        for (b, bar) in cell.bars.iter().enumerate() {
            let (xi, yi, zi) = (
                cell.nodes[bar.i].x[0],
                cell.nodes[bar.i].x[1],
                cell.nodes[bar.i].z,
            );
            let s = (bar.shift[0] as f64, bar.shift[1] as f64);
            let xj = cell.nodes[bar.j].x[0] + s.0 * lat.a1[0] + s.1 * lat.a2[0];
            let yj = cell.nodes[bar.j].x[1] + s.0 * lat.a1[1] + s.1 * lat.a2[1];
            let zj = cell.nodes[bar.j].z;
            let (dx, dy, dz) = (xj - xi, yj - yi, zj - zi);
            let len = (dx * dx + dy * dy + dz * dz).sqrt();
            let (tx, ty, tz) = (dx / len, dy / len, dz / len);

            // elongation t·(d_j − d_i) for u = E x + z χ x, w = −½ xᵀχx,
            // written out per component of E and χ
            let du = |f: &dyn Fn(f64, f64, f64) -> (f64, f64, f64)| {
                let (ui, vi, wi) = f(xi, yi, zi);
                let (uj, vj, wj) = f(xj, yj, zj);
                tx * (uj - ui) + ty * (vj - vi) + tz * (wj - wi)
            };
            matrix[(b, 0)] = du(&|x, _, _| (x, 0.0, 0.0));
            matrix[(b, 1)] = du(&|_, y, _| (0.0, y, 0.0));
            matrix[(b, 2)] = du(&|x, y, _| (h * y, h * x, 0.0));
            matrix[(b, 3)] = du(&|x, _, z| (z * x, 0.0, -0.5 * x * x));
            matrix[(b, 4)] = du(&|_, y, z| (0.0, z * y, -0.5 * y * y));
            matrix[(b, 5)] = du(&|x, y, z| (h * z * y, h * z * x, -h * x * y));

            for (c, t) in [tx, ty, tz].into_iter().enumerate() {
                matrix[(b, 6 + 3 * bar.j + c)] += t;
                matrix[(b, 6 + 3 * bar.i + c)] -= t;
            }
        }
        Ok(Self {
            matrix,
            weights: cell.bars.iter().map(|b| b.stiffness).collect(),
            area: lat.area(),
        })
    }

    fn weighted(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for (mut row, w) in m.row_iter_mut().zip(&self.weights) {
            row *= w.sqrt();
        }
        m
    }
}

fn pseudoinverse(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = SVD::new(k.clone(), true, true);
    let top = svd.singular_values.max();
    svd.pseudo_inverse(SV_CUTOFF * top)
        .map_err(|e| Error::Solver(e.to_string()))
}

/// `A = (K_mm − K_mp K_pp⁺ K_pm) / area` with `K = Cᵀ W C`.
pub fn oracle_effective(cell: &UnitCell) -> Result<Matrix6<f64>> {
    let dense = DenseSystem::build(cell)?;
    let wc = dense.weighted();
    let k = wc.tr_mul(&wc);
    let n = k.nrows();
    let kmm = k.view((0, 0), (6, 6)).into_owned();
    let kmp = k.view((0, 6), (6, n - 6)).into_owned();
    let kpp = k.view((6, 6), (n - 6, n - 6)).into_owned();
    let schur = kmm - &kmp * pseudoinverse(&kpp)? * kmp.transpose();
    let mut a = Matrix6::from_fn(|p, q| schur[(p, q)] / dense.area);
    a = (a + a.transpose()) * 0.5;
    Ok(a)
}

/// Rank of the macro projection of the null space of `[C_macro | C_per]`.
///
/// Columns are scaled to unit norm first; scaling a coordinate does not
/// change the rank of the projection onto the macro coordinates.
pub fn oracle_kernel_dim(cell: &UnitCell) -> Result<usize> {
    let dense = DenseSystem::build(cell)?;
    let (rows, cols) = dense.matrix.shape();
    let mut m = DMatrix::zeros(rows.max(cols), cols);
    m.view_mut((0, 0), (rows, cols)).copy_from(&dense.matrix);
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("requested V");
    let top = svd.singular_values.max();
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= NULL_CUTOFF * top)
        .collect();
    if null.is_empty() {
        return Ok(0);
    }
    let proj = DMatrix::from_fn(6, null.len(), |r, c| v_t[(null[c], r)]);
    let sv = SVD::new(proj, false, false).singular_values;
    Ok(sv.iter().filter(|&&s| s > PROJECTION_CUTOFF).count())
}

/// Central-difference elevation gradient of `tr A_EE`.
pub fn fd_gradient(cell: &UnitCell, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let z = cell.elevations();
    (0..z.len())
        .map(|n| {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[n] += step;
            zm[n] -= step;
            let fp = crate::optimize::objective(&cell.with_elevations(&zp))?;
            let fm = crate::optimize::objective(&cell.with_elevations(&zm))?;
            Ok((fp - fm) / (2.0 * step))
        })
        .collect()
}
