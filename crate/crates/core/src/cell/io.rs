use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::UnitCell;
use crate::error::{Error, Result};

/// Reads and validates a unit-cell JSON document.
pub fn load_cell(path: impl AsRef<Path>) -> Result<UnitCell> {
    let text = std::fs::read_to_string(path)?;
    let cell: UnitCell = serde_json::from_str(&text)?;
    cell.validate()?;
    Ok(cell)
}

pub fn save_cell(cell: &UnitCell, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, cell)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes the cell tiled `tiles[0] × tiles[1]` times as an ASCII OBJ mesh.
///
/// Vertex `n` of tile `(a, b)` is record `(b·tiles[0] + a)·N + n + 1`.
/// Faces leaving the tiled patch wrap around it, so the mesh is the
/// closed torus of the enlarged period.
pub fn write_obj<W: Write>(cell: &UnitCell, tiles: [usize; 2], out: &mut W) -> Result<()> {
    if tiles[0] == 0 || tiles[1] == 0 {
        return Err(Error::InvalidParameter(format!(
            "tiles must be at least 1x1, got {}x{}",
            tiles[0], tiles[1]
        )));
    }
    let n = cell.nodes.len();
    let (tx, ty) = (tiles[0] as i64, tiles[1] as i64);
    writeln!(
        out,
        "# {} nodes, {} bars, tiles {}x{}",
        n,
        cell.bars.len(),
        tx,
        ty
    )?;
    for b in 0..ty {
        for a in 0..tx {
            for node in 0..n {
                let p = cell.site_position(node, [a, b]);
                writeln!(out, "v {} {} {}", p[0], p[1], p[2])?;
            }
        }
    }

    let index = |node: usize, s: [i64; 2]| -> usize {
        let (a, b) = (s[0].rem_euclid(tx), s[1].rem_euclid(ty));
        ((b * tx + a) as usize) * n + node + 1
    };
    for tri in cell.triangles() {
        let p: Vec<[f64; 3]> = tri.iter().map(|&(m, s)| cell.site_position(m, s)).collect();
        let signed =
            (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        let order = if signed < 0.0 { [0, 2, 1] } else { [0, 1, 2] };
        for b in 0..ty {
            for a in 0..tx {
                let v = order.map(|k| {
                    let (m, s) = tri[k];
                    index(m, [s[0] + a, s[1] + b])
                });
                writeln!(out, "f {} {} {}", v[0], v[1], v[2])?;
            }
        }
    }
    Ok(())
}

pub fn export_obj(cell: &UnitCell, tiles: [usize; 2], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_obj(cell, tiles, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{generate_corrugation, generate_flat};

    fn records(text: &str, tag: &str) -> Vec<Vec<f64>> {
        text.lines()
            .filter_map(|l| l.strip_prefix(tag))
            .map(|rest| {
                rest.split_whitespace()
                    .map(|t| t.parse().unwrap())
                    .collect()
            })
            .collect()
    }

    fn obj(cell: &UnitCell, tiles: [usize; 2]) -> String {
        let mut buf = Vec::new();
        write_obj(cell, tiles, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn flat_mesh_counts() {
        let cell = generate_flat(2, 2).unwrap();
        let text = obj(&cell, [1, 1]);
        assert_eq!(records(&text, "v ").len(), 4);
        assert_eq!(records(&text, "f ").len(), 8);

        let text = obj(&cell, [3, 3]);
        let faces = records(&text, "f ");
        assert_eq!(records(&text, "v ").len(), 36);
        assert_eq!(faces.len(), 72);
        assert!(faces.iter().flatten().all(|&i| (1.0..=36.0).contains(&i)));
    }

    #[test]
    fn corrugation_vertices_follow_cosine() {
        let cell = generate_corrugation(8, 2, 0.3).unwrap();
        let text = obj(&cell, [2, 1]);
        for v in records(&text, "v ") {
            let expected = 0.3 * (2.0 * std::f64::consts::PI * v[0] / 8.0).cos();
            assert!((v[2] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_tiles_rejected() {
        let cell = generate_flat(2, 2).unwrap();
        assert!(write_obj(&cell, [0, 1], &mut Vec::new()).is_err());
    }

    #[test]
    fn round_trip_and_structured_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cell.json");
        let cell = generate_flat(2, 2).unwrap();
        save_cell(&cell, &path).unwrap();
        assert_eq!(load_cell(&path).unwrap(), cell);

        let mut dup = cell.clone();
        dup.bars.push(dup.bars[2]);
        save_cell(&dup, &path).unwrap();
        let err = load_cell(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate bar"), "{err}");

        let mut flat = cell.clone();
        flat.lattice.a2 = [4.0, 0.0];
        save_cell(&flat, &path).unwrap();
        let err = load_cell(&path).unwrap_err();
        assert!(err.to_string().contains("degenerate lattice"), "{err}");

        std::fs::write(&path, "{\"lattice\": 3}").unwrap();
        assert!(matches!(load_cell(&path), Err(Error::Parse(_))));
    }
}
