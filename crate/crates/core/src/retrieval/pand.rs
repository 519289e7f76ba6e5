//! `PAND` distance files: `"PAND" u32 n_query u32 n_gallery f32[n_query *
//! n_gallery]`, row-major, little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::DistanceMatrix;
use crate::error::{PanError, Result};
use crate::fsio::{read, write_atomic};

pub const PAND_MAGIC: &[u8; 4] = b"PAND";

pub fn write_pand(path: &Path, dist: &DistanceMatrix) -> Result<()> {
    let mut out = Vec::with_capacity(12 + 4 * dist.values().len());
    out.extend_from_slice(PAND_MAGIC);
    out.write_u32::<LittleEndian>(dist.n_query() as u32)
        .expect("vec write");
    out.write_u32::<LittleEndian>(dist.n_gallery() as u32)
        .expect("vec write");
    for &v in dist.values() {
        out.write_f32::<LittleEndian>(v as f32).expect("vec write");
    }
    write_atomic(path, &out)
}

pub fn read_pand(path: &Path) -> Result<DistanceMatrix> {
    let bytes = read(path)?;
    let io = |e: std::io::Error| PanError::format(path, format!("truncated distance file: {e}"));
    let mut r = Cursor::new(&bytes[..]);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != PAND_MAGIC {
        return Err(PanError::format(
            path,
            format!("bad magic {magic:?}, expected PAND"),
        ));
    }
    let nq = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let ng = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if bytes.len() != 12 + 4 * nq * ng {
        return Err(PanError::format(
            path,
            format!(
                "expected {} bytes for {nq} x {ng}, found {}",
                12 + 4 * nq * ng,
                bytes.len()
            ),
        ));
    }
    let mut vals = vec![0f32; nq * ng];
    r.read_f32_into::<LittleEndian>(&mut vals).map_err(io)?;
    DistanceMatrix::new(nq, ng, vals.into_iter().map(f64::from).collect())
        .map_err(|e| PanError::format(path, e.to_string()))
}
