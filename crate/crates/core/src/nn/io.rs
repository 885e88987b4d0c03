//! Text model format: a JSON document with a fixed schema. Numbers are
//! written with shortest round-trip formatting so `load(save(m)) == m`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, Model};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    input_dim: usize,
    class_count: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    in_width: usize,
    out_width: usize,
    activation: Activation,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

pub fn to_json(model: &Model) -> String {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        input_dim: model.input_dim(),
        class_count: model.class_count(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerFile {
                in_width: l.in_width(),
                out_width: l.out_width(),
                activation: l.activation(),
                weights: l.weights().to_vec(),
                biases: l.biases().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialises")
}

pub fn from_json(bytes: &[u8]) -> Result<Model> {
    let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::InvalidModel(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    if file.layers.is_empty() {
        return Err(Error::InvalidModel("model has no layers".into()));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut expected_in = file.input_dim;
    for (j, l) in file.layers.into_iter().enumerate() {
        if l.in_width != expected_in {
            return Err(Error::Validation {
                layer: j,
                message: format!("in_width {} but expected {expected_in}", l.in_width),
            });
        }
        expected_in = l.out_width;
        let layer = DenseLayer::new(l.in_width, l.out_width, l.weights, l.biases, l.activation)
            .map_err(|message| Error::Validation { layer: j, message })?;
        layers.push(layer);
    }
    let last = layers.len() - 1;
    if layers[last].out_width() != file.class_count {
        return Err(Error::Validation {
            layer: last,
            message: format!(
                "out_width {} but class_count is {}",
                layers[last].out_width(),
                file.class_count
            ),
        });
    }
    Model::new(layers)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    from_json(&std::fs::read(path)?)
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut line_start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
