//! Binary container for per-bin complex operators with a JSON sidecar.
//!
//! The container holds the magic `RSMX`, then little-endian `u32` bins, rows
//! and columns, then every bin's entries in column-major order as `f64` pairs.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::MeasurementMatrix;
use crate::linalg::{CMat, C64};

const MAGIC: &[u8; 4] = b"RSMX";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSidecar {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub bins_hz: Vec<f64>,
    /// Grid cell owning each column.
    pub column_cells: Vec<usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_operator(path: &Path, op: &MeasurementMatrix) -> Result<()> {
    let (rows, cols) = (op.n_mics(), op.n_columns());
    let mut buf = Vec::with_capacity(16 + op.n_bins() * rows * cols * 16);
    buf.extend_from_slice(MAGIC);
    for v in [op.n_bins(), rows, cols] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for b in &op.blocks {
        for z in b.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    let side = OperatorSidecar {
        format: "RSMX complex128 column-major".into(),
        rows,
        cols,
        bins_hz: op.freqs_hz.clone(),
        column_cells: op.column_cells.clone(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_operator(path: &Path) -> Result<MeasurementMatrix> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Argument(format!("{}: {m}", path.display()));
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(bad("not an operator container"));
    }
    let u = |k: usize| u32::from_le_bytes(buf[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (bins, rows, cols) = (u(0), u(1), u(2));
    if buf.len() != 16 + bins * rows * cols * 16 {
        return Err(bad("truncated container"));
    }
    let side: OperatorSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if side.rows != rows || side.cols != cols || side.bins_hz.len() != bins || side.column_cells.len() != cols {
        return Err(bad("sidecar does not match container"));
    }
    let f = |off: usize| f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
    let blocks = (0..bins)
        .map(|b| {
            let base = 16 + b * rows * cols * 16;
            let vals: Vec<C64> = (0..rows * cols).map(|k| C64::new(f(base + 16 * k), f(base + 16 * k + 8))).collect();
            CMat::from_vec(rows, cols, vals)
        })
        .collect();
    Ok(MeasurementMatrix {
        blocks,
        freqs_hz: side.bins_hz,
        column_cells: side.column_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let op = MeasurementMatrix {
            blocks: vec![
                CMat::from_fn(2, 3, |r, c| C64::new(r as f64, c as f64 * 0.5)),
                CMat::from_fn(2, 3, |r, c| C64::new(-(r as f64), 1.0 / (1.0 + c as f64))),
            ],
            freqs_hz: vec![100.0, 200.0],
            column_cells: vec![0, 0, 1],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("op.bin");
        write_operator(&p, &op).unwrap();
        assert_eq!(read_operator(&p).unwrap(), op);
    }
}
