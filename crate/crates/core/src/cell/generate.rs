//! Parameterized unit-cell generators.
//!
//! All grid generators share one triangulation: an `nx × ny` grid of unit
//! squares, each split by one diagonal. The diagonal flips from row to row
//! (zigzag, every node of degree six away from the mirror lines) and is
//! mirrored across the vertical line `x1 = nx / 2`, so a profile that is
//! even in `x1` keeps its reflection symmetry in the triangulation.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bar, Lattice, Node, UnitCell};
use crate::error::{Error, Result};

struct Grid {
    nx: usize,
    ny: usize,
}

impl Grid {
    fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be at least 1x1, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn lattice(&self) -> Lattice {
        Lattice::new([self.nx as f64, 0.0], [0.0, self.ny as f64])
    }

    /// Base node index and lattice copy of grid point `(i, j)`.
    fn site(&self, i: i64, j: i64) -> (usize, [i64; 2]) {
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let (bi, bj) = (i.rem_euclid(nx), j.rem_euclid(ny));
        (
            (bj * nx + bi) as usize,
            [i.div_euclid(nx), j.div_euclid(ny)],
        )
    }

    fn bar(&self, from: (i64, i64), to: (i64, i64)) -> Bar {
        let (a, sa) = self.site(from.0, from.1);
        let (b, sb) = self.site(to.0, to.1);
        Bar::new(a, b, [sb[0] - sa[0], sb[1] - sa[1]], 1.0)
    }

    /// Whether square `(i, j)` is split along its rising diagonal.
    fn rising(&self, i: usize, j: usize) -> bool {
        let mirrored = 2 * i >= self.nx;
        j.is_multiple_of(2) != mirrored
    }

    fn nodes(&self, elevation: impl Fn(usize, usize) -> f64) -> Vec<Node> {
        let mut nodes = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                nodes.push(Node::new([i as f64, j as f64], elevation(i, j)));
            }
        }
        nodes
    }

    /// Right, up and diagonal bar of every square, skipping the diagonals of `holes`.
    fn bars(&self, holes: &[(usize, usize)]) -> Vec<Bar> {
        let mut bars = Vec::with_capacity(3 * self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (ii, jj) = (i as i64, j as i64);
                bars.push(self.bar((ii, jj), (ii + 1, jj)));
                bars.push(self.bar((ii, jj), (ii, jj + 1)));
                if holes.contains(&(i, j)) {
                    continue;
                }
                if self.rising(i, j) {
                    bars.push(self.bar((ii, jj), (ii + 1, jj + 1)));
                } else {
                    bars.push(self.bar((ii + 1, jj), (ii, jj + 1)));
                }
            }
        }
        bars
    }

    fn cell(
        &self,
        elevation: impl Fn(usize, usize) -> f64,
        metadata: BTreeMap<String, String>,
    ) -> UnitCell {
        let mut cell = UnitCell {
            lattice: self.lattice(),
            nodes: self.nodes(elevation),
            bars: self.bars(&[]),
            metadata,
        };
        cell.apply_stiffness_rule();
        cell
    }
}

fn meta<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn check_amplitude(h: f64) -> Result<()> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "amplitude must be finite and non-negative, got {h}"
        )));
    }
    Ok(())
}

/// Flat `nx × ny` grid on the unit square lattice.
pub fn generate_flat(nx: usize, ny: usize) -> Result<UnitCell> {
    let grid = Grid::new(nx, ny)?;
    Ok(grid.cell(
        |_, _| 0.0,
        meta([
            ("generator", "flat".into()),
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
        ]),
    ))
}

/// Singly corrugated cell, `z = h cos(2π x1 / |a1|)`.
pub fn generate_corrugation(nx: usize, ny: usize, h: f64) -> Result<UnitCell> {
    if nx < 2 {
        return Err(Error::InvalidParameter(
            "corrugation needs nx >= 2 to resolve one period".into(),
        ));
    }
    check_amplitude(h)?;
    let grid = Grid::new(nx, ny)?;
    Ok(grid.cell(
        |i, _| h * (2.0 * PI * i as f64 / nx as f64).cos(),
        meta([
            ("generator", "corrugation".into()),
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("h", h.to_string()),
        ]),
    ))
}

/// Grid with independent elevations uniform in `[-h, h]`, reproducible from `seed`.
pub fn generate_random(nx: usize, ny: usize, h: f64, seed: u64) -> Result<UnitCell> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "random cells need nx, ny >= 2, got {nx}x{ny}"
        )));
    }
    check_amplitude(h)?;
    let grid = Grid::new(nx, ny)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-h..=h)).collect();
    Ok(grid.cell(
        |i, j| z[j * nx + i],
        meta([
            ("generator", "random".into()),
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("h", h.to_string()),
            ("seed", seed.to_string()),
        ]),
    ))
}

/// Removes the listed nodes with their bars and re-packs the node indices.
pub fn punch_hole(cell: &UnitCell, node_ids: &BTreeSet<usize>) -> Result<UnitCell> {
    if node_ids.is_empty() {
        return Err(Error::InvalidParameter(
            "hole needs at least one node".into(),
        ));
    }
    if let Some(&bad) = node_ids.iter().find(|&&n| n >= cell.nodes.len()) {
        return Err(Error::InvalidParameter(format!("no node {bad} in cell")));
    }
    if node_ids.len() == cell.nodes.len() {
        return Err(Error::DisconnectedByHole);
    }

    let mut remap = vec![usize::MAX; cell.nodes.len()];
    let mut nodes = Vec::with_capacity(cell.nodes.len() - node_ids.len());
    for (n, node) in cell.nodes.iter().enumerate() {
        if !node_ids.contains(&n) {
            remap[n] = nodes.len();
            nodes.push(*node);
        }
    }
    let bars = cell
        .bars
        .iter()
        .filter(|b| !node_ids.contains(&b.i) && !node_ids.contains(&b.j))
        .map(|b| Bar::new(remap[b.i], remap[b.j], b.shift, b.stiffness))
        .collect();

    let mut metadata = cell.metadata.clone();
    let hole: Vec<String> = node_ids.iter().map(usize::to_string).collect();
    metadata.insert("hole".into(), hole.join(","));
    let out = UnitCell {
        lattice: cell.lattice,
        nodes,
        bars,
        metadata,
    };
    if out.degrees().contains(&0) || !out.is_connected() {
        return Err(Error::DisconnectedByHole);
    }
    out.validate()?;
    Ok(out)
}

/// Two flat layers at `z = 0` and `z = gap` joined once per cell by a square tube.
///
/// The tube has side `tube` and is centred in grid square `(0, 0)`; in each
/// layer the annulus between that square and the tube mouth is split into
/// four trapezoids, and each tube wall into two triangles. The quotient
/// surface is two tori joined by one tube, so `V − E + F = −2`.
pub fn generate_handle(nx: usize, ny: usize, gap: f64, tube: f64) -> Result<UnitCell> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "handle cells need nx, ny >= 2, got {nx}x{ny}"
        )));
    }
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "layer gap must be positive, got {gap}"
        )));
    }
    if !(tube > 0.0 && tube < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tube side {tube} must lie in (0, 1) to fit inside one grid square"
        )));
    }

    let grid = Grid::new(nx, ny)?;
    let n = grid.len();
    let layer_nodes = grid.nodes(|_, _| 0.0);
    let layer_bars = grid.bars(&[(0, 0)]);

    let mut nodes = Vec::with_capacity(2 * n + 8);
    let mut bars = Vec::with_capacity(2 * layer_bars.len() + 32);
    for (offset, z) in [(0, 0.0), (n, gap)] {
        nodes.extend(layer_nodes.iter().map(|p| Node::new(p.x, z)));
        bars.extend(
            layer_bars
                .iter()
                .map(|b| Bar::new(b.i + offset, b.j + offset, b.shift, 1.0)),
        );
    }

    // square (0, 0) corners, counterclockwise; all lie in the base copy since nx, ny >= 2
    let outer = [0, 1, nx + 1, nx];
    let (lo, hi) = (0.5 - 0.5 * tube, 0.5 + 0.5 * tube);
    let mouth = [[lo, lo], [hi, lo], [hi, hi], [lo, hi]];
    let inner_base = 2 * n;
    for (layer, z) in [(0, 0.0), (1, gap)] {
        for x in mouth {
            nodes.push(Node::new(x, z));
        }
        let inner = |k: usize| inner_base + 4 * layer + k % 4;
        let out = |k: usize| outer[k % 4] + layer * n;
        for k in 0..4 {
            bars.push(Bar::new(out(k), inner(k), [0, 0], 1.0));
            bars.push(Bar::new(inner(k), inner(k + 1), [0, 0], 1.0));
            bars.push(Bar::new(out(k), inner(k + 1), [0, 0], 1.0));
        }
    }
    for k in 0..4 {
        let bottom = inner_base + k;
        bars.push(Bar::new(bottom, inner_base + 4 + k, [0, 0], 1.0));
        bars.push(Bar::new(bottom, inner_base + 4 + (k + 1) % 4, [0, 0], 1.0));
    }

    let mut cell = UnitCell {
        lattice: grid.lattice(),
        nodes,
        bars,
        metadata: meta([
            ("generator", "handle".into()),
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("gap", gap.to_string()),
            ("tube", tube.to_string()),
        ]),
    };
    cell.apply_stiffness_rule();
    Ok(cell)
}
