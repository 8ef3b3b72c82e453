//! Periodic triangulated shell unit cells.
//!
//! Node positions always live in the base copy of the cell; periodicity is
//! carried entirely by the integer `shift` of each bar, which says in which
//! lattice copy the `j` endpoint sits.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod generate;
mod io;

pub use generate::{
    generate_corrugation, generate_flat, generate_handle, generate_random, punch_hole,
};
pub use io::{export_obj, load_cell, save_cell, write_obj};

/// Tolerance, in reduced lattice coordinates, for the fundamental-domain test.
const DOMAIN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub a1: [f64; 2],
    pub a2: [f64; 2],
}

impl Lattice {
    pub fn new(a1: [f64; 2], a2: [f64; 2]) -> Self {
        Self { a1, a2 }
    }

    /// Signed area `a1 × a2`; valid lattices are counterclockwise so this is positive.
    pub fn area(&self) -> f64 {
        self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0]
    }

    /// Planar offset of the lattice copy `shift`.
    pub fn translation(&self, shift: [i64; 2]) -> [f64; 2] {
        let (s, t) = (shift[0] as f64, shift[1] as f64);
        [
            s * self.a1[0] + t * self.a2[0],
            s * self.a1[1] + t * self.a2[1],
        ]
    }

    /// Reduced coordinates `(s, t)` with `x = s a1 + t a2`.
    pub fn reduced(&self, x: [f64; 2]) -> [f64; 2] {
        let det = self.area();
        [
            (x[0] * self.a2[1] - x[1] * self.a2[0]) / det,
            (self.a1[0] * x[1] - self.a1[1] * x[0]) / det,
        ]
    }

    /// Largest lattice vector length.
    pub fn size(&self) -> f64 {
        norm2(self.a1).max(norm2(self.a2))
    }

    /// Minimum admissible rest length of a bar.
    pub fn min_bar_length(&self) -> f64 {
        1e-9 * self.size()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: [f64; 2],
    pub z: f64,
}

impl Node {
    pub fn new(x: [f64; 2], z: f64) -> Self {
        Self { x, z }
    }
}

/// An elastic bar from node `i` (base copy) to node `j` in lattice copy `shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub i: usize,
    pub j: usize,
    pub shift: [i64; 2],
    /// Axial stiffness, force per unit elongation.
    #[serde(rename = "k")]
    pub stiffness: f64,
}

impl Bar {
    pub fn new(i: usize, j: usize, shift: [i64; 2], stiffness: f64) -> Self {
        Self {
            i,
            j,
            shift,
            stiffness,
        }
    }

    /// Orientation-independent identity of the bar.
    fn key(&self) -> (usize, usize, [i64; 2]) {
        let fwd = (self.i, self.j, self.shift);
        let rev = (self.j, self.i, [-self.shift[0], -self.shift[1]]);
        fwd.min(rev)
    }
}

/// A vertex of the tiled graph: a base node in a given lattice copy.
pub type Site = (usize, [i64; 2]);

/// One triangular face of the tiled surface, as three sites.
pub type Triangle = [Site; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCell {
    pub lattice: Lattice,
    pub nodes: Vec<Node>,
    pub bars: Vec<Bar>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl UnitCell {
    pub fn area(&self) -> f64 {
        self.lattice.area()
    }

    /// 3D position of node `n` in the base copy.
    pub fn position(&self, n: usize) -> [f64; 3] {
        let node = &self.nodes[n];
        [node.x[0], node.x[1], node.z]
    }

    /// 3D position of node `n` in lattice copy `shift`.
    pub fn site_position(&self, n: usize, shift: [i64; 2]) -> [f64; 3] {
        let t = self.lattice.translation(shift);
        let node = &self.nodes[n];
        [node.x[0] + t[0], node.x[1] + t[1], node.z]
    }

    /// Vector from the `i` endpoint to the (shifted) `j` endpoint of bar `b`.
    pub fn bar_vector(&self, b: usize) -> [f64; 3] {
        let bar = &self.bars[b];
        let p = self.position(bar.i);
        let q = self.site_position(bar.j, bar.shift);
        [q[0] - p[0], q[1] - p[1], q[2] - p[2]]
    }

    pub fn bar_length(&self, b: usize) -> f64 {
        norm3(self.bar_vector(b))
    }

    pub fn elevations(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.z).collect()
    }

    /// Number of bar ends at each node; a bar joining a node to its own copy counts twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for bar in &self.bars {
            if bar.i < deg.len() {
                deg[bar.i] += 1;
            }
            if bar.j < deg.len() {
                deg[bar.j] += 1;
            }
        }
        deg
    }

    /// Sets every bar stiffness to `1 / L_b`.
    pub fn apply_stiffness_rule(&mut self) {
        for b in 0..self.bars.len() {
            let length = self.bar_length(b);
            self.bars[b].stiffness = 1.0 / length;
        }
    }

    /// Returns a copy with new elevations. Each bar keeps its axial rigidity
    /// `k_b L_b`, so stiffnesses are rescaled to the new rest lengths.
    pub fn with_elevations(&self, z: &[f64]) -> UnitCell {
        assert_eq!(z.len(), self.nodes.len(), "one elevation per node");
        let mut out = self.clone();
        for (node, &zn) in out.nodes.iter_mut().zip(z) {
            node.z = zn;
        }
        for b in 0..out.bars.len() {
            let old = self.bar_length(b);
            let new = out.bar_length(b);
            out.bars[b].stiffness = self.bars[b].stiffness * old / new;
        }
        out
    }

    /// Length of the shortest bar.
    pub fn min_bar_length(&self) -> f64 {
        (0..self.bars.len())
            .map(|b| self.bar_length(b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks every structural invariant and reports the first one violated.
    pub fn validate(&self) -> Result<()> {
        let lat = &self.lattice;
        if !lat.a1.iter().chain(&lat.a2).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("lattice".into()));
        }
        let area = lat.area();
        if !(area > 0.0) {
            return Err(Error::DegenerateLattice(area));
        }

        for (n, node) in self.nodes.iter().enumerate() {
            if !(node.x[0].is_finite() && node.x[1].is_finite() && node.z.is_finite()) {
                return Err(Error::NonFinite(format!("node {n}")));
            }
            let st = lat.reduced(node.x);
            if st
                .iter()
                .any(|&c| !(-DOMAIN_TOL..1.0 - DOMAIN_TOL).contains(&c))
            {
                return Err(Error::NodeOutsideCell(n));
            }
        }

        let eps = lat.min_bar_length();
        let mut seen: HashMap<(usize, usize, [i64; 2]), usize> = HashMap::new();
        for (b, bar) in self.bars.iter().enumerate() {
            for node in [bar.i, bar.j] {
                if node >= self.nodes.len() {
                    return Err(Error::MissingNode { bar: b, node });
                }
            }
            if bar.i == bar.j && bar.shift == [0, 0] {
                return Err(Error::SelfLoop(b));
            }
            if !bar.stiffness.is_finite() {
                return Err(Error::NonFinite(format!("bar {b} stiffness")));
            }
            if !(bar.stiffness > 0.0) {
                return Err(Error::NonPositiveStiffness(b));
            }
            let length = self.bar_length(b);
            if !(length > eps) {
                return Err(Error::ShortBar { bar: b, length });
            }
            if let Some(&first) = seen.get(&bar.key()) {
                return Err(Error::DuplicateBar { bar: b, first });
            }
            seen.insert(bar.key(), b);
        }

        for (n, &d) in self.degrees().iter().enumerate() {
            if d == 0 {
                return Err(Error::IsolatedNode(n));
            }
            if d < 3 {
                log::warn!("node {n} has degree {d} < 3");
            }
        }

        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(())
    }

    /// Whether the periodically tiled bar graph is connected.
    ///
    /// The quotient graph must be connected and the lattice shifts closed by
    /// its cycles must generate all of Z².
    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut adj: Vec<Vec<(usize, [i64; 2])>> = vec![Vec::new(); n];
        for bar in &self.bars {
            if bar.i >= n || bar.j >= n {
                return false;
            }
            adj[bar.i].push((bar.j, bar.shift));
            adj[bar.j].push((bar.i, [-bar.shift[0], -bar.shift[1]]));
        }

        let mut offset: Vec<Option<[i64; 2]>> = vec![None; n];
        offset[0] = Some([0, 0]);
        let mut queue = VecDeque::from([0usize]);
        let mut cycles: Vec<[i64; 2]> = Vec::new();
        while let Some(u) = queue.pop_front() {
            let ou = offset[u].unwrap();
            for &(v, s) in &adj[u] {
                let reach = [ou[0] + s[0], ou[1] + s[1]];
                match offset[v] {
                    None => {
                        offset[v] = Some(reach);
                        queue.push_back(v);
                    }
                    Some(ov) => {
                        let d = [reach[0] - ov[0], reach[1] - ov[1]];
                        if d != [0, 0] {
                            cycles.push(d);
                        }
                    }
                }
            }
        }
        if offset.iter().any(Option::is_none) {
            return false;
        }
        generates_z2(&cycles)
    }

    /// Triangular faces of the tiled surface, one representative per lattice orbit.
    ///
    /// Faces are the 3-cycles of the tiled bar graph. Each face is returned
    /// with its first site in the base copy.
    pub fn triangles(&self) -> Vec<Triangle> {
        let n = self.nodes.len();
        let mut out_edges: Vec<Vec<(usize, [i64; 2])>> = vec![Vec::new(); n];
        let mut edge_set: BTreeSet<(usize, usize, [i64; 2])> = BTreeSet::new();
        for bar in &self.bars {
            let rev = [-bar.shift[0], -bar.shift[1]];
            out_edges[bar.i].push((bar.j, bar.shift));
            out_edges[bar.j].push((bar.i, rev));
            edge_set.insert((bar.i, bar.j, bar.shift));
            edge_set.insert((bar.j, bar.i, rev));
        }

        let mut found: BTreeSet<[Site; 3]> = BTreeSet::new();
        let mut faces = Vec::new();
        for a in 0..n {
            for &(b, sb) in &out_edges[a] {
                for &(c, sbc) in &out_edges[b] {
                    let sc = [sb[0] + sbc[0], sb[1] + sbc[1]];
                    let sites = [(a, [0, 0]), (b, sb), (c, sc)];
                    if sites[0] == sites[2] || sites[1] == sites[2] {
                        continue;
                    }
                    // closing edge c -> a must exist in the tiled graph
                    if !edge_set.contains(&(c, a, [-sc[0], -sc[1]])) {
                        continue;
                    }
                    let key = canonical_triangle(sites);
                    if found.insert(key) {
                        faces.push(key);
                    }
                }
            }
        }
        faces
    }

    /// `V − E + F` of the quotient surface.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.bars.len() as i64 + self.triangles().len() as i64
    }
}

/// Translates a triangle so its smallest site sits in the base copy, then sorts it.
fn canonical_triangle(sites: [Site; 3]) -> [Site; 3] {
    let mut best: Option<[Site; 3]> = None;
    for anchor in sites {
        let mut t = sites.map(|(n, s)| (n, [s[0] - anchor.1[0], s[1] - anchor.1[1]]));
        t.sort();
        if best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best.unwrap()
}

/// Whether the integer vectors generate the full lattice Z².
fn generates_z2(vectors: &[[i64; 2]]) -> bool {
    let mut g: i64 = 0;
    for (a, u) in vectors.iter().enumerate() {
        for v in &vectors[a + 1..] {
            g = gcd(g, u[0] * v[1] - u[1] * v[0]);
            if g == 1 {
                return true;
            }
        }
    }
    false
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
