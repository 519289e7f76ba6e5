//! Named parameter storage and the `PANW` checkpoint format.
//!
//! Layout (little-endian): magic `PANW`, `u32` version, `u32` tensor count,
//! then per tensor `u16` name length, UTF-8 name, `u8` rank, `u32` per
//! dimension and the raw `f64` data.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{PanError, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PANW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    pub fn checksum(&self, ids: &[ParamId]) -> u64 {
        ids.iter().fold(0u64, |acc, &id| {
            acc.rotate_left(7) ^ self.tensors[id.0].checksum()
        })
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        out.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            out.write_u16::<LittleEndian>(name.len() as u16)?;
            out.write_all(name.as_bytes())?;
            out.write_u8(t.rank() as u8)?;
            for &d in t.shape() {
                out.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in t.data() {
                out.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    /// Parses a checkpoint stream. `path` is only used in error messages.
    pub fn read_checkpoint<R: Read>(mut input: R, path: &Path) -> Result<Self> {
        let bad = |msg: String| PanError::format(path, msg);
        let io = |e: std::io::Error| PanError::format(path, format!("truncated checkpoint: {e}"));
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected PANW")));
        }
        let version = input.read_u32::<LittleEndian>().map_err(io)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let count = input.read_u32::<LittleEndian>().map_err(io)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = input.read_u16::<LittleEndian>().map_err(io)? as usize;
            let mut name = vec![0u8; len];
            input.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|e| bad(format!("tensor name: {e}")))?;
            let rank = input.read_u8().map_err(io)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(input.read_u32::<LittleEndian>().map_err(io)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = vec![0.0; n];
            input.read_f64_into::<LittleEndian>(&mut data).map_err(io)?;
            let t = Tensor::new(&shape, data).map_err(|e| bad(format!("tensor {name}: {e}")))?;
            if store.id_of(&name).is_some() {
                return Err(bad(format!("duplicate tensor {name}")));
            }
            store.insert(name, t);
        }
        Ok(store)
    }
}
