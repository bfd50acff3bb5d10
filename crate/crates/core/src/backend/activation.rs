// SPDX-License-Identifier: MIT OR Apache-2.0

//! `ACTV` activation container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ACTV" | version u8 = 1 | d_model u32 | tag_len u16 | tag (UTF-8)
//! repeated until EOF:
//!   id_len u16 | prompt_id (UTF-8) | layer u16 | position i32 | d_model × f32
//! ```
//!
//! Position −1 denotes the final active token of the prompt.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 4] = b"ACTV";
pub const FORMAT_VERSION: u8 = 1;
pub const FINAL_POSITION: i32 = -1;

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord {
    pub prompt_id: String,
    pub layer: usize,
    pub position: i32,
    pub vector: Vec<f32>,
}

/// Residual vectors keyed by `(prompt_id, layer, position)`, kept in insertion
/// order so the file bytes are a function of the insertion sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSet {
    pub version: u8,
    pub d_model: usize,
    pub producer: String,
    records: Vec<ActivationRecord>,
    index: HashMap<(String, usize, i32), usize>,
}

impl ActivationSet {
    pub fn new(d_model: usize, producer: impl Into<String>) -> Self {
        ActivationSet {
            version: FORMAT_VERSION,
            d_model,
            producer: producer.into(),
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, record: ActivationRecord) -> Result<()> {
        if record.vector.len() != self.d_model {
            return Err(LabError::LengthMismatch {
                expected: self.d_model,
                found: record.vector.len(),
            });
        }
        let key = (record.prompt_id.clone(), record.layer, record.position);
        if self.index.contains_key(&key) {
            return Err(LabError::Format(format!(
                "duplicate record ({:?}, layer {}, position {})",
                key.0, key.1, key.2
            )));
        }
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn get(&self, prompt_id: &str, layer: usize, position: i32) -> Option<&[f32]> {
        // HashMap<(String, ..)> lookups need an owned key
        self.index
            .get(&(prompt_id.to_string(), layer, position))
            .map(|&i| self.records[i].vector.as_slice())
    }

    /// Like [`get`](Self::get) but with a typed error.
    pub fn require(&self, prompt_id: &str, layer: usize, position: i32) -> Result<&[f32]> {
        self.get(prompt_id, layer, position)
            .ok_or_else(|| LabError::MissingActivation {
                prompt_id: prompt_id.to_string(),
                layer,
                position,
            })
    }

    pub fn records(&self) -> &[ActivationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn layers(&self) -> Vec<usize> {
        let mut layers: Vec<usize> = self.records.iter().map(|r| r.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        layers
    }
}

pub fn write_activations(set: &ActivationSet) -> Result<Vec<u8>> {
    let d = u32::try_from(set.d_model)
        .map_err(|_| LabError::Format(format!("d_model {} exceeds u32", set.d_model)))?;
    let tag = set.producer.as_bytes();
    let mut out = Vec::with_capacity(16 + set.records.len() * (12 + 4 * set.d_model));
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&len_u16(tag.len(), "producer tag")?.to_le_bytes());
    out.extend_from_slice(tag);
    for rec in &set.records {
        let id = rec.prompt_id.as_bytes();
        out.extend_from_slice(&len_u16(id.len(), "prompt id")?.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&len_u16(rec.layer, "layer")?.to_le_bytes());
        out.extend_from_slice(&rec.position.to_le_bytes());
        for v in &rec.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn len_u16(n: usize, what: &str) -> Result<u16> {
    u16::try_from(n).map_err(|_| LabError::Format(format!("{what} {n} exceeds u16")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LabError::Format(format!("truncated {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u16(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| LabError::Format(format!("{what} is not valid UTF-8")))
    }
}

pub fn read_activations(bytes: &[u8]) -> Result<ActivationSet> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(LabError::Format("bad magic; not an ACTV file".into()));
    }
    let version = c.take(1, "version")?[0];
    if version != FORMAT_VERSION {
        return Err(LabError::Format(format!("unsupported version {version}")));
    }
    let d_model = u32::from_le_bytes(c.take(4, "d_model")?.try_into().unwrap()) as usize;
    let producer = c.string("producer tag")?;
    let mut set = ActivationSet::new(d_model, producer);
    while c.pos < bytes.len() {
        let prompt_id = c.string("prompt id")?;
        let layer = c.u16("layer")? as usize;
        let position = i32::from_le_bytes(c.take(4, "position")?.try_into().unwrap());
        let raw = c.take(4 * d_model, "vector")?;
        let vector = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        set.insert(ActivationRecord {
            prompt_id,
            layer,
            position,
            vector,
        })?;
    }
    Ok(set)
}

pub fn save_activations(path: &Path, set: &ActivationSet) -> Result<()> {
    crate::tables::write_bytes(path, &write_activations(set)?)
}

pub fn load_activations(path: &Path) -> Result<ActivationSet> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    read_activations(&bytes)
}
