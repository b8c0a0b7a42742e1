//! Versioned JSON checkpoint of named f64 arrays.
//!
//! Layout (version 1):
//!
//! ```json
//! {
//!   "format": "relmoss-params",
//!   "version": 1,
//!   "params": [ { "name": "gate0.w_self", "shape": [128, 128], "values": [ ... ] } ],
//!   "meta": { ... }
//! }
//! ```
//!
//! `values` is row-major. `meta` is free-form JSON owned by the caller (the
//! model stores its configuration and fitted encoder statistics there).
//! f64 values round-trip exactly through the JSON text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "relmoss-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: Vec<CheckpointEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: serde_json::Value) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: store
                .iter()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    shape: p.value.shape(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
            meta,
        }
    }

    /// Overwrites every parameter in `store` by name. Missing names and shape
    /// differences are errors; extra entries in the checkpoint are ignored.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        self.check_header()?;
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let entry = self
                .params
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            let current = store.value(id).shape();
            if entry.shape != current {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {current:?}",
                    entry.shape
                )));
            }
            *store.value_mut(id) = Tensor::from_vec(entry.shape[0], entry.shape[1], entry.values.clone())?;
        }
        Ok(())
    }

    fn check_header(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        ck.check_header()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(9);
        let mut store = ParamStore::new();
        store.add("a", Tensor::glorot(3, 4, &mut rng));
        store.add("b", Tensor::from_vec(1, 2, vec![1e-300, -0.1]).unwrap());
        let ck = Checkpoint::from_store(&store, serde_json::json!({"k": 1}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);

        let mut other = ParamStore::new();
        other.add("a", Tensor::zeros(3, 4));
        other.add("b", Tensor::zeros(1, 2));
        back.load_into(&mut other).unwrap();
        for (p, q) in store.iter().zip(other.iter()) {
            assert_eq!(p.value, q.value);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(2, 2));
        let ck = Checkpoint::from_store(&store, serde_json::Value::Null);
        let mut other = ParamStore::new();
        other.add("a", Tensor::zeros(2, 3));
        assert!(ck.load_into(&mut other).is_err());
    }
}
