//! Linearized bar elongations under a macroscopic strain plus periodic corrections.
//!
//! A node at `(x, z)` moves by the affine-quadratic field
//!
//! ```text
//! u_α = E_αβ x_β + z χ_αβ x_β
//! w   = −½ χ_μν x_μ x_ν
//! ```
//!
//! plus a periodic correction `v` (one 3-vector per base node). The
//! elongation of bar `b` is `t̂_b · (d_j − d_i)` with `t̂_b` the undeformed unit
//! direction; it is an absolute length change, and the `1/L_b` factor lives
//! in the bar stiffness. The part of the macro field that depends on the
//! lattice copy is an infinitesimal rotation, so elongations are periodic.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cell::{norm3, UnitCell};
use crate::error::{Error, Result};

/// Symmetric 2×2 tensor.
pub type Sym2 = [[f64; 2]; 2];

/// Orthonormal ("Mandel") encoding `(S11, S22, √2 S12)`, so that `vec(S)·vec(T) = S:T`.
pub fn mandel(s: Sym2) -> [f64; 3] {
    [s[0][0], s[1][1], SQRT_2 * s[0][1]]
}

pub fn from_mandel(v: [f64; 3]) -> Sym2 {
    let off = v[2] / SQRT_2;
    [[v[0], off], [off, v[1]]]
}

/// A macroscopic membrane strain `E` and bending strain `χ`, Mandel-encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroStrain {
    pub e: [f64; 3],
    pub chi: [f64; 3],
}

impl MacroStrain {
    pub fn new(e: [f64; 3], chi: [f64; 3]) -> Self {
        Self { e, chi }
    }

    pub fn from_tensors(e: Sym2, chi: Sym2) -> Self {
        Self::new(mandel(e), mandel(chi))
    }

    /// The `q`-th unit vector of the 6D strain space (`E` components first).
    pub fn unit(q: usize) -> Self {
        let mut v = [0.0; 6];
        v[q] = 1.0;
        Self::from_vector(v)
    }

    pub fn from_vector(v: [f64; 6]) -> Self {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn to_vector(&self) -> [f64; 6] {
        [
            self.e[0],
            self.e[1],
            self.e[2],
            self.chi[0],
            self.chi[1],
            self.chi[2],
        ]
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn membrane(&self) -> Sym2 {
        from_mandel(self.e)
    }

    pub fn bending(&self) -> Sym2 {
        from_mandel(self.chi)
    }
}

/// Displacement of the material point at `point = (x1, x2, z)` under the macro ansatz.
pub fn macro_displacement(point: [f64; 3], m: &MacroStrain) -> [f64; 3] {
    let e = m.membrane();
    let c = m.bending();
    let [x1, x2, z] = point;
    let cx = [c[0][0] * x1 + c[0][1] * x2, c[1][0] * x1 + c[1][1] * x2];
    [
        e[0][0] * x1 + e[0][1] * x2 + z * cx[0],
        e[1][0] * x1 + e[1][1] * x2 + z * cx[1],
        -0.5 * (x1 * cx[0] + x2 * cx[1]),
    ]
}

/// Periodic part of one elongation row: `dir` acts on node `j` and `−dir` on node `i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicRow {
    pub i: usize,
    pub j: usize,
    pub dir: [f64; 3],
}

impl PeriodicRow {
    /// Elongation produced by the periodic correction `v` (3 entries per node).
    pub fn apply(&self, v: &[f64]) -> f64 {
        (0..3)
            .map(|c| self.dir[c] * (v[3 * self.j + c] - v[3 * self.i + c]))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElongationRow {
    pub macro_part: [f64; 6],
    pub periodic: PeriodicRow,
}

/// Elongation of bar `b` per unit macro strain and per unit periodic correction.
pub fn bar_elongation_row(cell: &UnitCell, b: usize) -> Result<ElongationRow> {
    let bar = &cell.bars[b];
    let d = cell.bar_vector(b);
    let length = norm3(d);
    if !(length > cell.lattice.min_bar_length()) {
        return Err(Error::ShortBar { bar: b, length });
    }
    let dir = d.map(|c| c / length);
    let pi = cell.position(bar.i);
    let pj = cell.site_position(bar.j, bar.shift);

    let mut macro_part = [0.0; 6];
    for (q, slot) in macro_part.iter_mut().enumerate() {
        let m = MacroStrain::unit(q);
        let (ui, uj) = (macro_displacement(pi, &m), macro_displacement(pj, &m));
        *slot = (0..3).map(|c| dir[c] * (uj[c] - ui[c])).sum();
    }
    Ok(ElongationRow {
        macro_part,
        periodic: PeriodicRow {
            i: bar.i,
            j: bar.j,
            dir,
        },
    })
}

/// Linear map from `(macro strain, periodic corrections)` to bar elongations.
#[derive(Clone, Debug)]
pub struct ElongationSystem {
    pub macro_rows: Vec<[f64; 6]>,
    pub periodic_rows: Vec<PeriodicRow>,
    /// Bar stiffnesses `k_b`.
    pub weights: Vec<f64>,
    pub area: f64,
    pub n_nodes: usize,
}

impl ElongationSystem {
    pub fn n_bars(&self) -> usize {
        self.weights.len()
    }

    /// Number of periodic correction unknowns, `3N`.
    pub fn n_dof(&self) -> usize {
        3 * self.n_nodes
    }

    pub fn macro_elongations(&self, m: &MacroStrain) -> Vec<f64> {
        let v = m.to_vector();
        self.macro_rows
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn elongations(&self, m: &MacroStrain, correction: &[f64]) -> Vec<f64> {
        let mut e = self.macro_elongations(m);
        for (eb, row) in e.iter_mut().zip(&self.periodic_rows) {
            *eb += row.apply(correction);
        }
        e
    }

    /// Weighted inner product of two elongation vectors, per unit cell area.
    pub fn work(&self, e1: &[f64], e2: &[f64]) -> f64 {
        let s: f64 = self
            .weights
            .iter()
            .zip(e1.iter().zip(e2))
            .map(|(k, (a, b))| k * a * b)
            .sum();
        s / self.area
    }

    /// `Σ_b k_b e_b² / area` for the given loading and correction.
    pub fn energy(&self, m: &MacroStrain, correction: &[f64]) -> f64 {
        let e = self.elongations(m, correction);
        self.work(&e, &e)
    }

    /// Dense `bars × 6` macro block.
    pub fn macro_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_bars(), 6, |b, q| self.macro_rows[b][q])
    }

    /// Dense `bars × 3N` periodic block.
    pub fn periodic_matrix(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n_bars(), self.n_dof());
        for (b, row) in self.periodic_rows.iter().enumerate() {
            for k in 0..3 {
                c[(b, 3 * row.j + k)] += row.dir[k];
                c[(b, 3 * row.i + k)] -= row.dir[k];
            }
        }
        c
    }
}

/// Stacks the elongation rows of every bar.
pub fn assemble(cell: &UnitCell) -> Result<ElongationSystem> {
    let mut macro_rows = Vec::with_capacity(cell.bars.len());
    let mut periodic_rows = Vec::with_capacity(cell.bars.len());
    for b in 0..cell.bars.len() {
        let row = bar_elongation_row(cell, b)?;
        macro_rows.push(row.macro_part);
        periodic_rows.push(row.periodic);
    }
    Ok(ElongationSystem {
        macro_rows,
        periodic_rows,
        weights: cell.bars.iter().map(|b| b.stiffness).collect(),
        area: cell.area(),
        n_nodes: cell.nodes.len(),
    })
}
