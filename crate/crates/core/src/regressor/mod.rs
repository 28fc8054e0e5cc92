//! The quality regressor: a small fully connected network over feature
//! vectors, trained with Adam on opinion-score targets.
//!
//! The network predicts the opinion score, which grows with degradation.
//! [`MlpModel::quality`] negates it so that higher means more usable, the
//! orientation the filter and ROC code expect.

mod io;
mod train;

use serde::{Deserialize, Serialize};

pub use io::{read_model, write_model, MODEL_FORMAT};
pub use train::{evaluate, grad_check, train, Evaluation, TrainConfig, Trainer};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::rng;
use rand::Rng;

/// Dense layer with row-major `out x in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.len() / self.biases.len()
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        let n = self.inputs();
        out.clear();
        out.extend(self.biases.iter().zip(self.weights.chunks_exact(n)).map(|(b, row)| {
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Per-feature affine normalization applied before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Zero mean and unit variance per column; constant columns keep scale 1.
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let scale = var.iter().map(|v| if *v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub extractor_id: String,
    pub layers: Vec<Layer>,
    pub scaler: Standardizer,
    pub train_config: Option<TrainConfig>,
    pub corpus_fingerprint: Option<String>,
}

impl MlpModel {
    /// All-zero parameters with the given `[in, hidden.., out]` dims.
    pub fn zeros(extractor_id: &str, layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer { weights: vec![0.0; w[0] * w[1]], biases: vec![0.0; w[1]] })
            .collect();
        Ok(MlpModel {
            extractor_id: extractor_id.into(),
            layers,
            scaler: Standardizer::identity(layer_dims[0]),
            train_config: None,
            corpus_fingerprint: None,
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(extractor_id: &str, layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(extractor_id, layer_dims)?;
        let mut r = rng::rng(rng::derive(&[seed, 0x1417]));
        for layer in &mut model.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = r.random_range(-bound..=bound);
            }
        }
        Ok(model)
    }

    pub fn from_layers(extractor_id: &str, layers: Vec<Layer>) -> Result<Self> {
        let mut model = Self::zeros(extractor_id, &[1, 1])?;
        model.layers = layers;
        model.scaler = Standardizer::identity(model.input_dim());
        model.validate()?;
        Ok(model)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::inputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("model", "no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.biases.is_empty() || l.weights.len() % l.biases.len() != 0 || l.weights.is_empty() {
                return Err(Error::Dimension(format!("layer {i} weight shape is inconsistent")));
            }
            if i > 0 && l.inputs() != self.layers[i - 1].outputs() {
                return Err(Error::Dimension(format!(
                    "layer {i} takes {} inputs but layer {} emits {}",
                    l.inputs(),
                    i - 1,
                    self.layers[i - 1].outputs()
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|p| !p.is_finite()) {
                return Err(Error::invalid("model", format!("layer {i} has non-finite parameters")));
            }
        }
        if self.layers.last().map(Layer::outputs) != Some(1) {
            return Err(Error::Dimension("output layer must have one unit".into()));
        }
        let d = self.input_dim();
        if self.scaler.mean.len() != d || self.scaler.scale.len() != d {
            return Err(Error::Dimension("standardizer does not match the input layer".into()));
        }
        Ok(())
    }

    /// Network output on an unnormalized feature slice.
    pub fn forward_values(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model takes {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(self.forward_normalized(&self.scaler.apply(x)))
    }

    fn forward_normalized(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Predicted opinion score for a feature vector.
    pub fn forward(&self, x: &FeatureVector) -> Result<f64> {
        if x.extractor_id != self.extractor_id {
            return Err(Error::invalid(
                "features",
                format!("{} came from {}, model expects {}", x.image_id, x.extractor_id, self.extractor_id),
            ));
        }
        self.forward_values(&x.values)
    }

    /// Higher is better: the negated predicted opinion score.
    pub fn quality(&self, x: &FeatureVector) -> Result<f64> {
        self.forward(x).map(|v| -v)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Dimension(format!("invalid layer dims {dims:?}")));
    }
    if dims.last() != Some(&1) {
        return Err(Error::Dimension("output layer must have one unit".into()));
    }
    Ok(())
}
