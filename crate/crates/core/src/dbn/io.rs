//! Versioned JSON model files. Floats are written in shortest round-trip
//! form, so a save/load cycle reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{DbnError, DbnModel, Network, RbmLayer, N_CLASSES};
use crate::data::{NormalizationParams, RampLabel};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Arch {
    input: usize,
    hidden: Vec<usize>,
    output: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    arch: Arch,
    class_order: Vec<String>,
    normalization: NormalizationParams,
    feature_names: Vec<String>,
    source_width: usize,
    input_columns: Vec<usize>,
    seed: u64,
    config_hash: String,
    layers: Vec<LayerFile>,
    head: HeadFile,
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, shape: (usize, usize), what: &str) -> Result<Array2<f64>, DbnError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(DbnError::Corrupt(format!("{what} is not {}x{}", shape.0, shape.1)));
    }
    Ok(Array2::from_shape_vec(shape, rows.concat()).expect("shape checked"))
}

fn vector(v: Vec<f64>, len: usize, what: &str) -> Result<Array1<f64>, DbnError> {
    if v.len() != len {
        return Err(DbnError::Corrupt(format!(
            "{what} has length {}, expected {len}",
            v.len()
        )));
    }
    Ok(Array1::from(v))
}

pub fn model_to_json(model: &DbnModel) -> String {
    let net = &model.network;
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        arch: Arch {
            input: net.input_len(),
            hidden: net.hidden_sizes(),
            output: N_CLASSES,
        },
        class_order: RampLabel::CLASS_ORDER
            .iter()
            .map(|l| l.class_name().to_string())
            .collect(),
        normalization: model.normalization.clone(),
        feature_names: model.feature_names.clone(),
        source_width: model.source_width,
        input_columns: model.input_columns.clone(),
        seed: model.seed,
        config_hash: model.config_hash.clone(),
        layers: net
            .layers
            .iter()
            .map(|l| LayerFile {
                weights: matrix_rows(&l.weights),
                visible_bias: l.visible_bias.to_vec(),
                hidden_bias: l.hidden_bias.to_vec(),
            })
            .collect(),
        head: HeadFile {
            weights: matrix_rows(&net.head_weights),
            bias: net.head_bias.to_vec(),
        },
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<DbnModel, DbnError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DbnError::Corrupt(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| DbnError::Corrupt("missing version".into()))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(DbnError::Version {
            found: version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| DbnError::Corrupt(e.to_string()))?;

    let expected_order: Vec<&str> = RampLabel::CLASS_ORDER.iter().map(|l| l.class_name()).collect();
    if file.class_order != expected_order {
        return Err(DbnError::Corrupt(format!(
            "unexpected class order {:?}",
            file.class_order
        )));
    }
    if file.arch.output != N_CLASSES || file.layers.len() != file.arch.hidden.len() {
        return Err(DbnError::Corrupt("architecture does not match layer list".into()));
    }
    if file.input_columns.len() != file.arch.input
        || file.normalization.width() != file.arch.input
        || file.normalization.max.len() != file.arch.input
        || file.feature_names.len() != file.arch.input
        || file.input_columns.iter().any(|&c| c >= file.source_width)
    {
        return Err(DbnError::Corrupt(
            "input description inconsistent with architecture".into(),
        ));
    }

    let mut layers = Vec::with_capacity(file.layers.len());
    let mut width = file.arch.input;
    for (i, (layer, &hidden)) in file.layers.into_iter().zip(&file.arch.hidden).enumerate() {
        let weights = matrix_from_rows(layer.weights, (hidden, width), &format!("layer {i} weights"))?;
        let visible_bias = vector(layer.visible_bias, width, &format!("layer {i} visible bias"))?;
        let hidden_bias = vector(layer.hidden_bias, hidden, &format!("layer {i} hidden bias"))?;
        layers.push(RbmLayer::from_parameters(weights, visible_bias, hidden_bias));
        width = hidden;
    }
    let head_weights = matrix_from_rows(file.head.weights, (N_CLASSES, width), "head weights")?;
    let head_bias = vector(file.head.bias, N_CLASSES, "head bias")?;

    Ok(DbnModel {
        network: Network {
            layers,
            head_weights,
            head_bias,
        },
        normalization: file.normalization,
        feature_names: file.feature_names,
        source_width: file.source_width,
        input_columns: file.input_columns,
        seed: file.seed,
        config_hash: file.config_hash,
    })
}

pub fn save_model(model: &DbnModel, path: impl AsRef<Path>) -> Result<(), DbnError> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)).map_err(|source| DbnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DbnModel, DbnError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DbnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_json(&text)
}
