//! `PANE` embedding files: per-branch vectors stored separately so the
//! fusion weight can be swept without re-running the network.
//!
//! ```text
//! "PANE" u32 version u32 count u32 dim1 u32 dim2
//! count x { u32 sample_id  u32 identity  u16 camera  f32[dim1]  f32[dim2] }
//! ```
//!
//! All integers and floats little-endian. A JSON-lines sidecar maps
//! `sample_id` to the image path.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{fuse, Descriptor, DescriptorMeta};
use crate::error::{PanError, Result};
use crate::fsio::{read, write_atomic};

pub const PANE_MAGIC: &[u8; 4] = b"PANE";
pub const PANE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub meta: DescriptorMeta,
    pub branch1: Vec<f32>,
    pub branch2: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim1: usize,
    pub dim2: usize,
    pub records: Vec<EmbeddingRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarRow {
    pub sample_id: u32,
    pub path: String,
}

impl EmbeddingFile {
    pub fn new(dim1: usize, dim2: usize) -> Self {
        EmbeddingFile {
            dim1,
            dim2,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, meta: DescriptorMeta, branch1: &[f64], branch2: &[f64]) -> Result<()> {
        if branch1.len() != self.dim1 || branch2.len() != self.dim2 {
            return Err(PanError::shape(
                "EmbeddingFile::push",
                &[branch1.len(), branch2.len()],
                &[self.dim1, self.dim2],
            ));
        }
        self.records.push(EmbeddingRecord {
            meta,
            branch1: branch1.iter().map(|&v| v as f32).collect(),
            branch2: branch2.iter().map(|&v| v as f32).collect(),
        });
        Ok(())
    }

    /// Fused descriptors for every record at weight `alpha`.
    pub fn fused(&self, alpha: f64) -> Result<Vec<Descriptor>> {
        self.records
            .iter()
            .map(|r| {
                let b1: Vec<f64> = r.branch1.iter().map(|&v| v as f64).collect();
                let b2: Vec<f64> = r.branch2.iter().map(|&v| v as f64).collect();
                fuse(&b1, &b2, alpha, r.meta)
            })
            .collect()
    }

    pub fn metas(&self) -> Vec<DescriptorMeta> {
        self.records.iter().map(|r| r.meta).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(20 + self.records.len() * (10 + 4 * (self.dim1 + self.dim2)));
        out.extend_from_slice(PANE_MAGIC);
        for v in [
            PANE_VERSION,
            self.records.len() as u32,
            self.dim1 as u32,
            self.dim2 as u32,
        ] {
            out.write_u32::<LittleEndian>(v).expect("vec write");
        }
        for r in &self.records {
            out.write_u32::<LittleEndian>(r.meta.sample_id)
                .expect("vec write");
            out.write_u32::<LittleEndian>(r.meta.identity)
                .expect("vec write");
            out.write_u16::<LittleEndian>(r.meta.camera)
                .expect("vec write");
            for &v in r.branch1.iter().chain(&r.branch2) {
                out.write_f32::<LittleEndian>(v).expect("vec write");
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let io =
            |e: std::io::Error| PanError::format(path, format!("truncated embedding file: {e}"));
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != PANE_MAGIC {
            return Err(PanError::format(
                path,
                format!("bad magic {magic:?}, expected PANE"),
            ));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != PANE_VERSION {
            return Err(PanError::format(
                path,
                format!("unsupported embedding version {version}"),
            ));
        }
        let count = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let dim1 = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let dim2 = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut file = EmbeddingFile::new(dim1, dim2);
        for _ in 0..count {
            let meta = DescriptorMeta {
                sample_id: r.read_u32::<LittleEndian>().map_err(io)?,
                identity: r.read_u32::<LittleEndian>().map_err(io)?,
                camera: r.read_u16::<LittleEndian>().map_err(io)?,
            };
            let mut branch1 = vec![0f32; dim1];
            let mut branch2 = vec![0f32; dim2];
            r.read_f32_into::<LittleEndian>(&mut branch1).map_err(io)?;
            r.read_f32_into::<LittleEndian>(&mut branch2).map_err(io)?;
            file.records.push(EmbeddingRecord {
                meta,
                branch1,
                branch2,
            });
        }
        if (r.position() as usize) != bytes.len() {
            return Err(PanError::format(path, "trailing bytes after last record"));
        }
        Ok(file)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".jsonl");
    s.into()
}

/// Writes `file` to `path` and the sidecar to `path` + `.jsonl`.
pub fn write_pane(path: &Path, file: &EmbeddingFile, sidecar: &[SidecarRow]) -> Result<()> {
    let mut text = String::new();
    for row in sidecar {
        text.push_str(&serde_json::to_string(row).expect("serializable"));
        text.push('\n');
    }
    write_atomic(&sidecar_path(path), text.as_bytes())?;
    write_atomic(path, &file.to_bytes())
}

pub fn read_pane(path: &Path) -> Result<EmbeddingFile> {
    EmbeddingFile::from_bytes(&read(path)?, path)
}

pub fn read_sidecar(path: &Path) -> Result<Vec<SidecarRow>> {
    let side = sidecar_path(path);
    let text =
        String::from_utf8(read(&side)?).map_err(|e| PanError::format(&side, e.to_string()))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        match serde_json::from_str(line) {
            Ok(r) => rows.push(r),
            Err(e) => errors.push(format!("line {}: {e}", i + 1)),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(PanError::Manifest {
            path: side,
            entries: errors,
        })
    }
}
