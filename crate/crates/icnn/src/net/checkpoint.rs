//! JSON checkpoint format shared by every trainer and the CLI:
//! `{"format_version": 1, "spec": {...}, "tensors": {name: {shape, data}}}`
//! with row-major tensor data and names from the canonical tensor order.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NetworkSpec, Params, TensorMut};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error("invalid network spec: {0}")]
    Spec(#[from] super::NetError),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unknown tensor {0}")]
    UnknownTensor(String),
    #[error("tensor {0} has wrong shape")]
    Shape(String),
    #[error("tensor {0} has non-finite entries")]
    NonFinite(String),
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    spec: NetworkSpec,
    tensors: BTreeMap<String, TensorDoc>,
}

pub fn save_checkpoint<W: Write>(params: &Params, out: W) -> Result<(), CheckpointError> {
    let mut tensors = BTreeMap::new();
    for entry in params.tensors() {
        tensors.insert(
            entry.name.clone(),
            TensorDoc {
                shape: entry.tensor.shape(),
                data: entry.tensor.as_slice().to_vec(),
            },
        );
    }
    let doc = CheckpointDoc {
        format_version: FORMAT_VERSION,
        spec: params.spec().clone(),
        tensors,
    };
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(input: R) -> Result<Params, CheckpointError> {
    let doc: CheckpointDoc = serde_json::from_reader(input)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(doc.format_version));
    }
    doc.spec.validate()?;
    let mut params = Params::zeros(&doc.spec)?;
    let mut seen = 0usize;
    {
        let entries = params.tensors_mut();
        for mut entry in entries {
            let name = entry.name.clone();
            let td = doc
                .tensors
                .get(&name)
                .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
            let expected_shape = match &entry.tensor {
                TensorMut::M(m) => m.shape().to_vec(),
                TensorMut::V(v) => v.shape().to_vec(),
            };
            let dst = entry.tensor.as_slice_mut();
            if td.shape != expected_shape || td.data.len() != dst.len() {
                return Err(CheckpointError::Shape(name));
            }
            if td.data.iter().any(|v| !v.is_finite()) {
                return Err(CheckpointError::NonFinite(name));
            }
            dst.copy_from_slice(&td.data);
            seen += 1;
        }
    }
    if doc.tensors.len() != seen {
        let known: std::collections::BTreeSet<String> =
            params.tensors().iter().map(|e| e.name.clone()).collect();
        let extra = doc
            .tensors
            .keys()
            .find(|k| !known.contains(*k))
            .cloned()
            .unwrap_or_default();
        return Err(CheckpointError::UnknownTensor(extra));
    }
    Ok(params)
}
