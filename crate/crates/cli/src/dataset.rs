//! Binary container for synthetic streams.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 8 | magic `CODASTRM` |
//! | 8 | 4 | format version (1) |
//! | 12 | 48 | `n, r, d, q, s0, seed` as u64 |
//! | 60 | 8·n·(d+q) | low-rank matrix, row-major f64 |
//! | … | 8·n·(d+q) | sparse matrix, row-major f64 |
//! | end − 4 | 4 | CRC-32 of every preceding byte |

use std::path::Path;

use coda_core::synth::{StreamParams, SyntheticStream};
use coda_core::DenseMatrix;

use crate::error::{usage, CliError, Result};

pub const MAGIC: &[u8; 8] = b"CODASTRM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 6 * 8;

pub fn encode(stream: &SyntheticStream) -> Vec<u8> {
    let p = &stream.params;
    let cells = p.n * p.frames();
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * cells + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [p.n, p.r, p.d, p.q, p.s0] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.extend_from_slice(&p.seed.to_le_bytes());
    for m in [&stream.low_rank, &stream.sparse] {
        for v in m.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Parses a container. Errors name the byte offset of the first bad field.
pub fn decode(bytes: &[u8]) -> std::result::Result<SyntheticStream, String> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(format!("truncated header: {} bytes at offset 0, need {}", bytes.len(), HEADER_LEN + 4));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic at offset 0".into());
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(format!("unsupported version {} at offset 8", version));
    }
    let mut fields = [0usize; 5];
    for (k, f) in fields.iter_mut().enumerate() {
        let off = 12 + 8 * k;
        *f = usize::try_from(u64_at(off)).map_err(|_| format!("dimension out of range at offset {}", off))?;
    }
    let [n, r, d, q, s0] = fields;
    let seed = u64_at(52);
    let cells = n
        .checked_mul(d + q)
        .filter(|c| c.checked_mul(16).is_some())
        .ok_or_else(|| "dimensions overflow at offset 12".to_string())?;
    let expected = HEADER_LEN + 16 * cells + 4;
    if bytes.len() != expected {
        return Err(format!(
            "length mismatch at offset {}: file has {} bytes, header implies {}",
            bytes.len().min(expected),
            bytes.len(),
            expected
        ));
    }
    let body_end = expected - 4;
    let stored = u32_at(body_end);
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(format!(
            "checksum mismatch at offset {}: stored {:08x}, computed {:08x}",
            body_end, stored, actual
        ));
    }
    let read_matrix = |start: usize| -> std::result::Result<DenseMatrix, String> {
        let mut data = Vec::with_capacity(cells);
        for k in 0..cells {
            let off = start + 8 * k;
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            if !v.is_finite() {
                return Err(format!("non-finite value at offset {}", off));
            }
            data.push(v);
        }
        DenseMatrix::from_row_major(n, d + q, data).map_err(|e| e.to_string())
    };
    let low_rank = read_matrix(HEADER_LEN)?;
    let sparse = read_matrix(HEADER_LEN + 8 * cells)?;
    Ok(SyntheticStream {
        params: StreamParams { n, r, d, q, s0, seed },
        low_rank,
        sparse,
    })
}

pub fn save(path: &Path, stream: &SyntheticStream) -> Result<()> {
    std::fs::write(path, encode(stream)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<SyntheticStream> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|msg| usage!("{}: {}", path.display(), msg))
}
