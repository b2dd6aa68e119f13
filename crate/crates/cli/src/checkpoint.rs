//! Binary field checkpoints.
//!
//! Layout: a little-endian `u32` byte length, a one-line JSON header of that
//! length (newline included), then `cells_per_dim^dim` little-endian `f64`
//! values in row-major order.

use std::io::Write;
use std::path::Path;

use chemolab::grid::make_domain;
use chemolab::ScalarField;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dim: usize,
    pub cells_per_dim: usize,
    pub extent: f64,
    pub time: f64,
    pub field: String,
    pub endianness: String,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub name: String,
    pub field: ScalarField,
}

pub fn encode(name: &str, field: &ScalarField) -> Vec<u8> {
    let d = field.domain;
    let header = Header {
        dim: d.dim(),
        cells_per_dim: d.cells_per_dim(),
        extent: d.extent(),
        time: field.time,
        field: name.to_string(),
        endianness: "LE".into(),
        dtype: "f64".into(),
    };
    let mut line = serde_json::to_string(&header).expect("header serializes");
    line.push('\n');
    let mut out = Vec::with_capacity(4 + line.len() + 8 * field.values.len());
    out.extend_from_slice(&(line.len() as u32).to_le_bytes());
    out.extend_from_slice(line.as_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], what: &str) -> CliResult<Checkpoint> {
    let bad = |msg: &str| CliError::Io(format!("{what}: {msg}"));
    if bytes.len() < 4 {
        return Err(bad("truncated length prefix"));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(4..4 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.endianness != "LE" || header.dtype != "f64" {
        return Err(bad("only little-endian f64 data is supported"));
    }
    let domain = make_domain(header.dim, header.extent, header.cells_per_dim).map_err(|e| bad(&e.to_string()))?;
    let data = &bytes[4 + len..];
    if data.len() != 8 * domain.cell_count() {
        return Err(bad(&format!(
            "expected {} data bytes, found {}",
            8 * domain.cell_count(),
            data.len()
        )));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let field = ScalarField::new(domain, values, header.time).map_err(|e| bad(&e.to_string()))?;
    Ok(Checkpoint {
        name: header.field,
        field,
    })
}

pub fn write(path: &Path, name: &str, field: &ScalarField) -> CliResult<()> {
    let mut f = std::fs::File::create(path).map_err(io_at(path))?;
    f.write_all(&encode(name, field)).map_err(io_at(path))
}

pub fn read(path: &Path) -> CliResult<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_at(path))?;
    decode(&bytes, &path.display().to_string())
}
