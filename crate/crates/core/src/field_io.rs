//! Binary field format.
//!
//! Fixed 64-byte header, then payload. All multi-byte values little-endian.
//!
//! ```text
//! offset  size  content
//! 0       4     magic: "QTNF" (field) or "QTNM" (bad-set mask)
//! 4       1     format version (currently 1)
//! 5       3     zero padding
//! 8       4     n, nodes per axis (u32)
//! 12      4     zero padding
//! 16      8     h, grid spacing (f64; must equal 2/(n-1))
//! 24      8     epsilon (f64)
//! 32      8     a (f64)
//! 40      8     b (f64)
//! 48      8     c (f64)
//! 56      8     zero padding
//! ```
//!
//! Field payload: n^3 mask bytes (0 free, 1 Dirichlet), then n^3 * 5 f64
//! coefficients, node-major with k the fastest index and the coefficient the
//! innermost (minor) dimension. Round trips are bit-exact.
//!
//! Mask payload: the generating radius and distance thresholds as two f64,
//! then n^3 mask bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::diagnostics::BadSetMask;
use crate::field::QField;
use crate::grid::Grid;
use crate::qtensor::{MaterialParams, BASIS_DIM};

pub const FIELD_MAGIC: &[u8; 4] = b"QTNF";
pub const MASK_MAGIC: &[u8; 4] = b"QTNM";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version: expected {expected}, found {found}")]
    BadVersion { expected: u8, found: u8 },
    #[error("malformed field file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn write_header<W: Write>(
    w: &mut W,
    magic: &[u8; 4],
    n: usize,
    h: f64,
    epsilon: f64,
    p: &MaterialParams,
) -> Result<(), FieldIoError> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(magic);
    header[4] = FORMAT_VERSION;
    header[8..12].copy_from_slice(&(n as u32).to_le_bytes());
    header[16..24].copy_from_slice(&h.to_le_bytes());
    header[24..32].copy_from_slice(&epsilon.to_le_bytes());
    header[32..40].copy_from_slice(&p.a.to_le_bytes());
    header[40..48].copy_from_slice(&p.b.to_le_bytes());
    header[48..56].copy_from_slice(&p.c.to_le_bytes());
    w.write_all(&header)?;
    Ok(())
}

struct Header {
    n: usize,
    epsilon: f64,
    params: MaterialParams,
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<Header, FieldIoError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| FieldIoError::Malformed("truncated header".into()))?;
    if &header[0..4] != magic {
        return Err(FieldIoError::BadMagic {
            expected: *magic,
            found: [header[0], header[1], header[2], header[3]],
        });
    }
    if header[4] != FORMAT_VERSION {
        return Err(FieldIoError::BadVersion {
            expected: FORMAT_VERSION,
            found: header[4],
        });
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let h = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let epsilon = f64::from_le_bytes(header[24..32].try_into().unwrap());
    let a = f64::from_le_bytes(header[32..40].try_into().unwrap());
    let b = f64::from_le_bytes(header[40..48].try_into().unwrap());
    let c = f64::from_le_bytes(header[48..56].try_into().unwrap());
    if n < 8 {
        return Err(FieldIoError::Malformed(format!("grid too coarse: n = {n}")));
    }
    if h != 2.0 / (n as f64 - 1.0) {
        return Err(FieldIoError::Malformed(format!(
            "inconsistent spacing: h = {h}, n = {n}"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(FieldIoError::Malformed(format!("bad epsilon {epsilon}")));
    }
    let params = MaterialParams::new(a, b, c)
        .map_err(|e| FieldIoError::Malformed(format!("bad material constants: {e}")))?;
    Ok(Header { n, epsilon, params })
}

pub fn save_field(field: &QField, path: &Path) -> Result<(), FieldIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    write_header(
        &mut w,
        FIELD_MAGIC,
        grid.n(),
        grid.h(),
        field.epsilon(),
        field.params(),
    )?;
    let mask_bytes: Vec<u8> = field.mask().iter().map(|&m| m as u8).collect();
    w.write_all(&mask_bytes)?;
    let mut buf = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<QField, FieldIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r, FIELD_MAGIC)?;
    let grid = Grid::new(header.n)
        .map_err(|e| FieldIoError::Malformed(format!("bad grid in header: {e}")))?;
    let count = grid.node_count();

    let mut mask_bytes = vec![0u8; count];
    r.read_exact(&mut mask_bytes)
        .map_err(|_| FieldIoError::Malformed("truncated mask block".into()))?;
    let mut mask = Vec::with_capacity(count);
    for (i, b) in mask_bytes.iter().enumerate() {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => {
                return Err(FieldIoError::Malformed(format!(
                    "mask byte {other} at node {i}"
                )))
            }
        }
    }

    let mut data_bytes = vec![0u8; count * BASIS_DIM * 8];
    r.read_exact(&mut data_bytes)
        .map_err(|_| FieldIoError::Malformed("truncated data block".into()))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(FieldIoError::Malformed("trailing bytes after data".into()));
    }
    let mut data = Vec::with_capacity(count * BASIS_DIM);
    for chunk in data_bytes.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }

    Ok(QField::from_raw(
        grid,
        header.params,
        header.epsilon,
        data,
        mask,
    ))
}

/// Export a bad-set mask as a raw byte grid under the shared header layout.
pub fn save_mask(
    mask: &BadSetMask,
    field: &QField,
    path: &Path,
) -> Result<(), FieldIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    write_header(
        &mut w,
        MASK_MAGIC,
        grid.n(),
        grid.h(),
        field.epsilon(),
        field.params(),
    )?;
    w.write_all(&mask.r.to_le_bytes())?;
    w.write_all(&mask.delta.to_le_bytes())?;
    let bytes: Vec<u8> = mask.bits.iter().map(|&m| m as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
