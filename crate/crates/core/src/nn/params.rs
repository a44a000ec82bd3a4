use std::path::Path;

use ndarray::Array2;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

const CKPT_MAGIC: &[u8; 4] = b"DHCK";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order. The order is part of the
/// checkpoint format, so two stores built the same way serialize
/// identically.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Replaces every value with the same-named entry of `other`. Names and
    /// shapes must match exactly.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.names != self.names {
            let missing: Vec<_> = self.names.iter().filter(|n| !other.names.contains(n)).collect();
            return Err(Error::Data(format!(
                "checkpoint parameters do not match the model (missing: {missing:?}, checkpoint has {} entries, model {})",
                other.len(),
                self.len()
            )));
        }
        for ((name, mine), theirs) in self.names.iter().zip(&self.values).zip(&other.values) {
            if mine.dim() != theirs.dim() {
                return Err(Error::shape(
                    "checkpoint",
                    format!(
                        "parameter `{name}`: model expects {:?}, checkpoint has {:?}",
                        mine.dim(),
                        theirs.dim()
                    ),
                ));
            }
        }
        self.values.clone_from(&other.values);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CKPT_MAGIC, CKPT_VERSION);
        w.len(self.len());
        for (name, v) in self.iter() {
            w.str(name);
            w.len(v.nrows());
            w.len(v.ncols());
            for x in v.iter() {
                w.f64(*x);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader::open(bytes, origin, CKPT_MAGIC, CKPT_VERSION)?;
        let n = r.len()?;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let name = r.str()?;
            let (rows, cols) = (r.len()?, r.len()?);
            let values = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let a = Array2::from_shape_vec((rows, cols), values).map_err(|_| r.bad("bad shape"))?;
            if store.find(&name).is_some() {
                return Err(r.bad(&format!("duplicate parameter `{name}`")));
            }
            store.add(name, a);
        }
        r.expect_end()?;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ParamStore::from_bytes(&read_file(path)?, path)
    }
}
