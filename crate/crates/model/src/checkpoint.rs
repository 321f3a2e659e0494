//! Model checkpoint file.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes  "RLDF"
//! version          u32      currently 1
//! schema hash      32 bytes SHA-256 of the schema's canonical JSON
//! blob length      u64
//! blob             JSON: {schema, encoders, hyper}
//! record count     u32
//! per record:
//!   name length    u16
//!   name           UTF-8 bytes
//!   rank           u8
//!   dims           rank x u64
//!   data           product(dims) x f32
//! ```
//!
//! Records are sorted by name. Parameters are stored as f32 and widened back
//! to f64 on load.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use reldiff_core::{EncoderSet, Schema};
use reldiff_tensor::Tensor;

use crate::batch::directed_relations;
use crate::denoiser::DenoiserModel;
use crate::hyper::HyperParams;
use crate::{ModelError, Result};

pub const MAGIC: &[u8; 4] = b"RLDF";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Blob {
    schema: Schema,
    encoders: EncoderSet,
    hyper: HyperParams,
}

pub struct Checkpoint {
    pub schema: Schema,
    pub encoders: EncoderSet,
    pub model: DenoiserModel,
}

pub fn schema_hash(schema: &Schema) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(schema.canonical_json().as_bytes());
    hasher.finalize().into()
}

pub fn save_checkpoint(
    path: &Path,
    schema: &Schema,
    encoders: &EncoderSet,
    model: &DenoiserModel,
) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&schema_hash(schema));
    let blob = serde_json::to_vec(&Blob {
        schema: schema.clone(),
        encoders: encoders.clone(),
        hyper: model.hyper.clone(),
    })
    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, tensor) in &model.params {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape.len() as u8);
        for &d in &tensor.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &tensor.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(ModelError::Checkpoint("unexpected end of file".into()));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let stored_hash: [u8; 32] = take(&mut cursor, 32)?.try_into().unwrap();
    let blob_len = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    let blob: Blob = serde_json::from_slice(take(&mut cursor, blob_len)?)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if schema_hash(&blob.schema) != stored_hash {
        return Err(ModelError::Checkpoint(
            "schema hash does not match embedded schema".into(),
        ));
    }

    let count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let rank = take(&mut cursor, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize);
        }
        let len: usize = shape.iter().product();
        let raw = take(&mut cursor, len * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        params.insert(name, Tensor::new(shape, data));
    }

    let layout = DenoiserModel::layout_from(&blob.schema, &blob.encoders);
    let relations = directed_relations(&blob.schema);
    Ok(Checkpoint {
        model: DenoiserModel {
            hyper: blob.hyper,
            layout,
            relations,
            params,
        },
        schema: blob.schema,
        encoders: blob.encoders,
    })
}
