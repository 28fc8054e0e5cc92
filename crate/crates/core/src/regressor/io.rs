//! Model files.
//!
//! ```text
//! {"format":"aqua-model","version":1,"extractor_id":..,"layer_dims":[..],"train_config":..,"corpus_fingerprint":..}
//! {"scaler":{"mean":[..],"scale":[..]}}
//! {"layer":0,"weights":[..],"biases":[..]}
//! ...
//! ```
//!
//! Weights are row-major `out x in`. Floats are written in shortest
//! round-trip form and reload bit-exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, MlpModel, Standardizer, TrainConfig};
use crate::error::{Error, Result};
use crate::jsonl;

pub const MODEL_FORMAT: &str = "aqua-model";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    extractor_id: String,
    layer_dims: Vec<usize>,
    train_config: Option<TrainConfig>,
    corpus_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Scaler { scaler: Standardizer },
    Layer { layer: usize, weights: Vec<f64>, biases: Vec<f64> },
}

pub fn write_model<W: Write>(w: &mut W, model: &MlpModel, fingerprint: Option<&str>) -> Result<()> {
    model.validate()?;
    let io = |e| Error::io("model output", e);
    let header = Header {
        format: MODEL_FORMAT.into(),
        version: 1,
        extractor_id: model.extractor_id.clone(),
        layer_dims: model.layer_dims(),
        train_config: model.train_config.clone(),
        corpus_fingerprint: model.corpus_fingerprint.clone(),
        config_fingerprint: fingerprint.map(str::to_string),
    };
    jsonl::write_line(w, &header).map_err(io)?;
    jsonl::write_line(w, &Record::Scaler { scaler: model.scaler.clone() }).map_err(io)?;
    for (i, l) in model.layers.iter().enumerate() {
        let rec = Record::Layer { layer: i, weights: l.weights.clone(), biases: l.biases.clone() };
        jsonl::write_line(w, &rec).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_model<R: BufRead>(reader: R, label: &str) -> Result<MlpModel> {
    let (header, records) = jsonl::read::<Header, Record, _>(reader, label, MODEL_FORMAT)?
        .ok_or(Error::Empty("model file"))?;
    let mut scaler = None;
    let mut layers = Vec::new();
    for rec in records {
        match rec {
            Record::Scaler { scaler: s } => scaler = Some(s),
            Record::Layer { layer, weights, biases } => {
                if layer != layers.len() {
                    return Err(Error::invalid("model file", format!("layer {layer} out of order")));
                }
                layers.push(Layer { weights, biases });
            }
        }
    }
    let scaler = scaler.ok_or_else(|| Error::invalid("model file", "missing scaler record"))?;
    let model = MlpModel {
        extractor_id: header.extractor_id,
        layers,
        scaler,
        train_config: header.train_config,
        corpus_fingerprint: header.corpus_fingerprint,
    };
    model.validate()?;
    if model.layer_dims() != header.layer_dims {
        return Err(Error::Dimension(format!(
            "{label}: header declares {:?}, parameters have {:?}",
            header.layer_dims,
            model.layer_dims()
        )));
    }
    Ok(model)
}

impl MlpModel {
    pub fn save(&self, path: &Path, fingerprint: Option<&str>) -> Result<()> {
        let mut w = jsonl::create(path)?;
        write_model(&mut w, self, fingerprint)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_model(std::io::BufReader::new(file), &path.display().to_string())
    }
}
