//! Field serialization: CSV (one row per node) and raw little-endian binary
//! with a JSON sidecar header.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Field2D, Field3D, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryHeader {
    /// `[nx, ny]` or `[nx, ny, nz]`.
    pub dims: Vec<usize>,
    pub ncomp: usize,
    pub dtype: String,
    pub order: String,
}

pub fn write_csv_2d(path: &Path, g: &Grid, f: &Field2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let names: Vec<String> = (0..f.ncomp).map(|c| format!("c{c}")).collect();
    writeln!(w, "x,y,{}", names.join(","))?;
    for i in 0..g.nx {
        for j in 0..g.ny {
            write!(w, "{:.17e},{:.17e}", g.x(i), g.y(j))?;
            for c in 0..f.ncomp {
                write!(w, ",{:.17e}", f.get(c, i, j))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_3d(path: &Path, g: &Grid, f: &Field3D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let names: Vec<String> = (0..f.ncomp).map(|c| format!("c{c}")).collect();
    writeln!(w, "x,y,z,{}", names.join(","))?;
    for k in 0..g.nz {
        for i in 0..g.nx {
            for j in 0..g.ny {
                write!(w, "{:.17e},{:.17e},{:.17e}", g.x(i), g.y(j), g.z(k))?;
                for c in 0..f.ncomp {
                    write!(w, ",{:.17e}", f.get(c, k, i, j))?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_raw(stem: &Path, header: &BinaryHeader, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(stem.with_extension("bin"))?);
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    std::fs::write(
        stem.with_extension("json"),
        serde_json::to_string_pretty(header)?,
    )?;
    Ok(())
}

fn read_raw(stem: &Path) -> Result<(BinaryHeader, Vec<f64>)> {
    let header: BinaryHeader =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    File::open(stem.with_extension("bin"))?.read_to_end(&mut bytes)?;
    let expected = header.dims.iter().product::<usize>() * header.ncomp * 8;
    if bytes.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "binary payload has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((header, data))
}

/// Writes `<stem>.bin` and `<stem>.json`. The payload is the field's native
/// layout: component, then (level,) then x, then y fastest.
pub fn write_binary_2d(stem: &Path, f: &Field2D) -> Result<()> {
    let h = BinaryHeader {
        dims: vec![f.nx, f.ny],
        ncomp: f.ncomp,
        dtype: "f64-le".into(),
        order: "component,x,y".into(),
    };
    write_raw(stem, &h, &f.data)
}

pub fn write_binary_3d(stem: &Path, f: &Field3D) -> Result<()> {
    let h = BinaryHeader {
        dims: vec![f.nx, f.ny, f.nz],
        ncomp: f.ncomp,
        dtype: "f64-le".into(),
        order: "component,z,x,y".into(),
    };
    write_raw(stem, &h, &f.data)
}

pub fn read_binary_2d(stem: &Path) -> Result<Field2D> {
    let (h, data) = read_raw(stem)?;
    if h.dims.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected 2 dims, got {:?}", h.dims)));
    }
    Ok(Field2D {
        nx: h.dims[0],
        ny: h.dims[1],
        ncomp: h.ncomp,
        data,
    })
}

pub fn read_binary_3d(stem: &Path) -> Result<Field3D> {
    let (h, data) = read_raw(stem)?;
    if h.dims.len() != 3 {
        return Err(Error::ShapeMismatch(format!("expected 3 dims, got {:?}", h.dims)));
    }
    Ok(Field3D {
        nx: h.dims[0],
        ny: h.dims[1],
        nz: h.dims[2],
        ncomp: h.ncomp,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(4, 6, 3).unwrap();
        let f = Field3D::from_fn(&g, 2, |c, x, y, z| c as f64 + x * 3.0 - y * z);
        let stem = dir.path().join("v");
        write_binary_3d(&stem, &f).unwrap();
        assert_eq!(read_binary_3d(&stem).unwrap(), f);
        let s = Field2D::from_fn(&g, 1, |_, x, y| x.sin() + y);
        write_binary_2d(&stem, &s).unwrap();
        assert_eq!(read_binary_2d(&stem).unwrap(), s);
    }

    #[test]
    fn csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(4, 4, 3).unwrap();
        let f = Field3D::from_fn(&g, 1, |_, _, _, z| z);
        let p = dir.path().join("f.csv");
        write_csv_3d(&p, &g, &f).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1 + 48);
        assert!(text.starts_with("x,y,z,c0"));
    }
}
