//! Flat binary snapshots and small CSV dumps.
//!
//! Binary layout: 8-byte magic, u32 LE version, u32 LE header length, a JSON
//! header, then row-major f64 little-endian samples.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_synthesis::{Lattice, LatticeField};
use crate::pam_solver::PamRun;

pub const MAGIC: &[u8; 8] = b"KRFIELD\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    /// "field" or "trajectory".
    pub kind: String,
    pub lattice: Lattice,
    pub level: u32,
    pub seed: u64,
    pub endianness: String,
    /// Payload dimensions, slowest first.
    pub shape: Vec<usize>,
    /// Snapshot times for trajectories.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub c_used: f64,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_blob<W: Write>(mut w: W, header: &FieldHeader, data: &[f64]) -> Result<()> {
    let expected: usize = header.shape.iter().product();
    if expected != data.len() {
        return Err(Error::Format(format!(
            "shape {:?} does not hold {} values",
            header.shape,
            data.len()
        )));
    }
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(json.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&json).map_err(io_err)?;
    let mut buf = Vec::with_capacity(8 * data.len());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_blob<R: Read>(mut r: R) -> Result<(FieldHeader, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io_err)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word).map_err(io_err)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json).map_err(io_err)?;
    let header: FieldHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    if header.endianness != "little" {
        return Err(Error::Format(format!(
            "unsupported endianness {}",
            header.endianness
        )));
    }
    let n: usize = header.shape.iter().product();
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes).map_err(io_err)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, data))
}

pub fn write_field<W: Write>(w: W, field: &LatticeField) -> Result<()> {
    let header = FieldHeader {
        kind: "field".into(),
        lattice: field.lattice.clone(),
        level: field.level,
        seed: field.seed,
        endianness: "little".into(),
        shape: field.lattice.dims(),
        times: Vec::new(),
        c_used: 0.0,
    };
    write_blob(w, &header, &field.samples)
}

/// Reads a field written by [`write_field`]; metadata beyond the header
/// (truncation, component) is not stored.
pub fn read_field<R: Read>(r: R) -> Result<LatticeField> {
    let (h, data) = read_blob(r)?;
    if h.kind != "field" {
        return Err(Error::Format(format!("expected a field, found {}", h.kind)));
    }
    let mut f = LatticeField::from_samples(h.lattice, data)?;
    f.level = h.level;
    f.seed = h.seed;
    Ok(f)
}

/// Trajectory snapshots; `lattice` is the spatial grid the run used.
pub fn write_trajectory<W: Write>(w: W, run: &PamRun) -> Result<()> {
    let lattice = Lattice::spatial(run.d, run.nx, run.dx)?;
    let mut shape = vec![run.times.len()];
    shape.extend(std::iter::repeat(run.nx).take(run.d));
    let header = FieldHeader {
        kind: "trajectory".into(),
        lattice,
        level: run.level,
        seed: run.seed,
        endianness: "little".into(),
        shape,
        times: run.times.clone(),
        c_used: run.c_used,
    };
    let data: Vec<f64> = run.snapshots.iter().flatten().copied().collect();
    write_blob(w, &header, &data)
}

/// CSV with one row per node: coordinates then value.
pub fn write_field_csv<W: Write>(mut w: W, field: &LatticeField) -> Result<()> {
    const MAX_ROWS: usize = 1 << 20;
    let l = &field.lattice;
    if l.len() > MAX_ROWS {
        return Err(Error::Format(format!(
            "{} nodes is too many for CSV",
            l.len()
        )));
    }
    let mut head: Vec<String> = Vec::new();
    if l.has_time() {
        head.push("t".into());
    }
    head.extend((1..=l.d).map(|i| format!("x{i}")));
    head.push("value".into());
    writeln!(w, "{}", head.join(",")).map_err(io_err)?;
    for (k, v) in field.samples.iter().enumerate() {
        let c = l.coords(&l.unravel(k));
        let cols: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{},{v:e}", cols.join(",")).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip() {
        let l = Lattice::space_time(1, 8, 0.125, 4, 0.5).unwrap();
        let samples: Vec<f64> = (0..l.len()).map(|k| (k as f64).sin() * 1e-7).collect();
        let mut f = LatticeField::from_samples(l, samples).unwrap();
        f.level = 3;
        f.seed = 99;
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let g = read_field(&buf[..]).unwrap();
        assert_eq!(g.samples, f.samples);
        assert_eq!((g.level, g.seed), (3, 99));
        assert_eq!(g.lattice, f.lattice);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            read_blob(&b"NOTAFILE\x01\0\0\0"[..]),
            Err(Error::Format(_))
        ));
    }
}
