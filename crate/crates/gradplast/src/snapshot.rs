//! Binary field snapshots.
//!
//! Format `GPF1`: a 32-byte header followed by the payload.
//!
//! ```text
//!   offset  size  content
//!   0       4     magic "GPF1"
//!   4       4     u32 LE  rank (1, 3 or 9 components per node)
//!   8       4     u32 LE  nx
//!   12      4     u32 LE  ny
//!   16      4     u32 LE  nz
//!   20      4     u32 LE  float64 flag (1 = f64 payload)
//!   24      1     u8      topology (0 periodic, 1 box)   [reserved ext.]
//!   25      1     u8      dirichlet face + 1 (0 = none)  [reserved ext.]
//!   26      6     zero padding
//! ```
//!
//! Payload: `nx*ny*nz*rank` little-endian f64 values, row-major in node
//! order (`x` outermost) with the node's components contiguous:
//! `value[((i*ny + j)*nz + k)*rank + c]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::field::Field;
use crate::grid::{Face, Grid, GridSpec};
use crate::{Error, Real, Result, Topology};

const MAGIC: &[u8; 4] = b"GPF1";

fn face_code(face: Option<Face>) -> u8 {
    match face {
        None => 0,
        Some(Face::XMin) => 1,
        Some(Face::XMax) => 2,
        Some(Face::YMin) => 3,
        Some(Face::YMax) => 4,
        Some(Face::ZMin) => 5,
        Some(Face::ZMax) => 6,
    }
}

fn face_from_code(code: u8) -> Result<Option<Face>> {
    Ok(match code {
        0 => None,
        1 => Some(Face::XMin),
        2 => Some(Face::XMax),
        3 => Some(Face::YMin),
        4 => Some(Face::YMax),
        5 => Some(Face::ZMin),
        6 => Some(Face::ZMax),
        _ => return Err(Error::SnapshotFormat(format!("bad face code {code}"))),
    })
}

/// Write a field snapshot.
pub fn write_snapshot<T: Real, const C: usize>(
    path: impl AsRef<Path>,
    field: &Field<T, C>,
) -> Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = [0u8; 32];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&(C as u32).to_le_bytes());
    header[8..12].copy_from_slice(&(grid.nx() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(grid.ny() as u32).to_le_bytes());
    header[16..20].copy_from_slice(&(grid.nz() as u32).to_le_bytes());
    header[20..24].copy_from_slice(&1u32.to_le_bytes());
    header[24] = match grid.topology() {
        Topology::Periodic => 0,
        Topology::Box => 1,
    };
    header[25] = face_code(grid.dirichlet_face());
    w.write_all(&header)?;
    for v in field.data() {
        let x = v.to_f64().unwrap_or(f64::NAN);
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Raw snapshot contents before grid attachment.
pub struct RawSnapshot {
    pub rank: usize,
    pub dims: [usize; 3],
    pub topology: Topology,
    pub dirichlet_face: Option<Face>,
    pub data: Vec<f64>,
}

impl RawSnapshot {
    /// Grid spec with unit-torus spacing (`h = 1/n` per axis); the header
    /// carries no spacings, so standalone consumers assume this gauge.
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            nx: self.dims[0],
            ny: self.dims[1],
            nz: self.dims[2],
            hx: 1.0 / self.dims[0] as f64,
            hy: 1.0 / self.dims[1] as f64,
            hz: 1.0 / self.dims[2] as f64,
            topology: self.topology,
            dirichlet_face: self.dirichlet_face,
        }
    }

    /// Attach the payload to a grid with matching dimensions.
    pub fn into_field<T: Real, const C: usize>(self, grid: &Grid<T>) -> Result<Field<T, C>> {
        if self.rank != C {
            return Err(Error::SnapshotFormat(format!(
                "rank {} does not match requested {}",
                self.rank, C
            )));
        }
        if grid.dims() != self.dims {
            return Err(Error::GridMismatch);
        }
        let data = self
            .data
            .into_iter()
            .map(|v| T::from_f64(v).unwrap_or_else(T::nan))
            .collect();
        Field::from_data(grid, data)
    }
}

/// Read a field snapshot.
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<RawSnapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 32];
    r.read_exact(&mut header)
        .map_err(|e| Error::SnapshotFormat(format!("truncated header: {e}")))?;
    if &header[0..4] != MAGIC {
        return Err(Error::SnapshotFormat("bad magic".into()));
    }
    let u32_at = |off: usize| {
        u32::from_le_bytes([header[off], header[off + 1], header[off + 2], header[off + 3]])
            as usize
    };
    let rank = u32_at(4);
    if !matches!(rank, 1 | 3 | 9) {
        return Err(Error::SnapshotFormat(format!("bad rank {rank}")));
    }
    let dims = [u32_at(8), u32_at(12), u32_at(16)];
    if u32_at(20) != 1 {
        return Err(Error::SnapshotFormat("only float64 payloads supported".into()));
    }
    let topology = match header[24] {
        0 => Topology::Periodic,
        1 => Topology::Box,
        t => return Err(Error::SnapshotFormat(format!("bad topology byte {t}"))),
    };
    let dirichlet_face = face_from_code(header[25])?;
    let count = dims[0] * dims[1] * dims[2] * rank;
    let mut payload = vec![0u8; count * 8];
    r.read_exact(&mut payload)
        .map_err(|e| Error::SnapshotFormat(format!("truncated payload: {e}")))?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawSnapshot {
        rank,
        dims,
        topology,
        dirichlet_face,
        data,
    })
}
