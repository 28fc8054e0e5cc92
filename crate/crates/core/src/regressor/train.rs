use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Layer, MlpModel, Standardizer};
use crate::error::{Error, Result};
use crate::evaluation::{spearman, Correlation};
use crate::features::FeatureVector;
use crate::rng;

const SHUFFLE_STREAM: u64 = 0x5A0F;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Widths of the rectified hidden layers.
    pub hidden: Vec<usize>,
    /// Fit a per-feature standardizer on the training inputs.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            seed: 0,
            hidden: vec![64],
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("train config", r));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// Parameters in layer order, weights before biases.
fn params(model: &MlpModel) -> impl Iterator<Item = &f64> {
    model.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
}

fn params_mut(model: &mut MlpModel) -> impl Iterator<Item = &mut f64> {
    model.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
}

/// Mean squared error over `xs` (already standardized) and its gradient.
fn loss_and_grad(model: &MlpModel, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<Layer>) {
    let mut grads: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
        .collect();
    let n = xs.len() as f64;
    let last = model.layers.len() - 1;
    let mut loss = 0.0;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len() + 1);
    for (x, &y) in xs.iter().zip(ys) {
        acts.clear();
        acts.push(x.to_vec());
        for (i, layer) in model.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        let err = acts[last + 1][0] - y;
        loss += err * err / n;

        let mut delta = vec![2.0 * err / n];
        for i in (0..=last).rev() {
            let layer = &model.layers[i];
            let input = &acts[i];
            let g = &mut grads[i];
            let k = layer.inputs();
            for (o, d) in delta.iter().enumerate() {
                g.biases[o] += d;
                for (gw, a) in g.weights[o * k..(o + 1) * k].iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if i > 0 {
                // Rectifier derivative read off the stored activation.
                delta = (0..k)
                    .map(|j| {
                        if input[j] > 0.0 {
                            delta.iter().enumerate().map(|(o, d)| d * layer.weights[o * k + j]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
    }
    (loss, grads)
}

/// Adam optimizer state bound to one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MlpModel,
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Trainer {
    pub fn new(model: MlpModel, cfg: &TrainConfig) -> Self {
        let n = model.param_count();
        Trainer { model, cfg: cfg.clone(), m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Mean squared error on standardized inputs.
    pub fn loss(&self, xs: &[&[f64]], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (self.model.forward_normalized(x) - y).powi(2) / n)
            .sum()
    }

    /// One Adam update on a batch of standardized inputs. Returns the batch
    /// loss before the update.
    pub fn step(&mut self, xs: &[&[f64]], ys: &[f64]) -> f64 {
        let (loss, grads) = loss_and_grad(&self.model, xs, ys);
        self.t += 1;
        let c = &self.cfg;
        let (bc1, bc2) = (1.0 - c.beta1.powi(self.t), 1.0 - c.beta2.powi(self.t));
        let g = grads.iter().flat_map(|l| l.weights.iter().chain(&l.biases));
        for (((p, g), m), v) in params_mut(&mut self.model).zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
        }
        loss
    }
}

fn check_data(data: &[(FeatureVector, f64)]) -> Result<()> {
    let Some((first, _)) = data.first() else {
        return Err(Error::Empty("training data"));
    };
    for (x, y) in data {
        if x.values.len() != first.values.len() || x.extractor_id != first.extractor_id {
            return Err(Error::Dimension(format!(
                "{} ({} values from {}) differs from {} ({} values from {})",
                x.image_id,
                x.values.len(),
                x.extractor_id,
                first.image_id,
                first.values.len(),
                first.extractor_id
            )));
        }
        if !y.is_finite() {
            return Err(Error::invalid("target", format!("{} has a non-finite target", x.image_id)));
        }
    }
    Ok(())
}

/// Trains a fresh model. Returns it with the full-data loss after each epoch.
pub fn train(data: &[(FeatureVector, f64)], cfg: &TrainConfig) -> Result<(MlpModel, Vec<f64>)> {
    cfg.validate()?;
    check_data(data)?;
    let first = &data[0].0;
    let mut dims = vec![first.values.len()];
    dims.extend(&cfg.hidden);
    dims.push(1);
    let mut model = MlpModel::init(&first.extractor_id, &dims, cfg.seed)?;
    let raw: Vec<&[f64]> = data.iter().map(|(x, _)| x.values.as_slice()).collect();
    if cfg.standardize {
        model.scaler = Standardizer::fit(&raw);
    }
    model.train_config = Some(cfg.clone());
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| model.scaler.apply(x)).collect();
    let xs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let ys: Vec<f64> = data.iter().map(|(_, y)| *y).collect();

    let mut trainer = Trainer::new(model, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    for epoch in 1..=cfg.epochs {
        let mut r = rng::rng(rng::derive(&[cfg.seed, SHUFFLE_STREAM, epoch as u64]));
        order.shuffle(&mut r);
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(chunk.iter().map(|&i| xs[i]));
            by.extend(chunk.iter().map(|&i| ys[i]));
            trainer.step(&bx, &by);
        }
        let loss = trainer.loss(&xs, &ys);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        log::debug!("epoch {epoch}: loss {loss:.6e}");
        history.push(loss);
    }
    Ok((trainer.model, history))
}

/// Largest relative error between backprop and central differences
/// (`h = 1e-5`) over all parameters, for the squared error on one sample.
pub fn grad_check(model: &MlpModel, x: &[f64], y: f64) -> Result<f64> {
    let z = model.scaler.apply(x);
    if z.len() != model.input_dim() {
        return Err(Error::Dimension(format!("model takes {} features, got {}", model.input_dim(), z.len())));
    }
    let (_, grads) = loss_and_grad(model, &[&z], &[y]);
    let analytic: Vec<f64> = grads.iter().flat_map(|l| l.weights.iter().chain(&l.biases)).copied().collect();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, ga) in analytic.iter().enumerate() {
        let orig = *params(model).nth(i).expect("index in range");
        let mut at = |v: f64| {
            *params_mut(&mut probe).nth(i).expect("index in range") = v;
            (probe.forward_normalized(&z) - y).powi(2)
        };
        let gn = (at(orig + h) - at(orig - h)) / (2.0 * h);
        at(orig);
        worst = worst.max((ga - gn).abs() / (ga.abs() + gn.abs()).max(1e-8));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub mse: f64,
    pub spearman: Correlation,
}

/// MSE and Spearman correlation of predictions against targets.
pub fn evaluate(model: &MlpModel, data: &[(FeatureVector, f64)]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    let preds = data.iter().map(|(x, _)| model.forward(x)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
    let mse = preds.iter().zip(&ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / ys.len() as f64;
    Ok(Evaluation { n: ys.len(), mse, spearman: spearman(&preds, &ys)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_task(n: usize, seed: u64) -> Vec<(FeatureVector, f64)> {
        let mut r = rng::rng(seed);
        (0..n)
            .map(|i| {
                let x: f64 = r.random_range(-1.0..1.0);
                (FeatureVector::new(format!("p{i}"), "toy", vec![x]).unwrap(), 3.0 * x + 1.0)
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let data = linear_task(50, 1);
        let cfg = TrainConfig { epochs: 0, standardize: false, ..Default::default() };
        let (model, history) = train(&data, &cfg).unwrap();
        assert!(history.is_empty());
        let mut init = MlpModel::init("toy", &[1, 64, 1], 0).unwrap();
        init.train_config = Some(cfg);
        assert_eq!(model, init);
    }

    #[test]
    fn fits_linear_target() {
        let data = linear_task(1000, 2);
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 500, ..Default::default() };
        let (model, history) = train(&data, &cfg).unwrap();
        assert_eq!(history.len(), 500);
        let eval = evaluate(&model, &data).unwrap();
        assert!(eval.mse < 1e-3, "mse {}", eval.mse);
        assert!(*history.last().unwrap() < 1e-3);
    }

    #[test]
    fn training_is_deterministic() {
        let data = linear_task(100, 3);
        let cfg = TrainConfig { learning_rate: 1e-3, epochs: 5, ..Default::default() };
        assert_eq!(train(&data, &cfg).unwrap(), train(&data, &cfg).unwrap());
    }

    #[test]
    fn one_step_decreases_loss() {
        let data = linear_task(1000, 4);
        let xs: Vec<&[f64]> = data.iter().map(|(x, _)| x.values.as_slice()).collect();
        let ys: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
        let cfg = TrainConfig::default();
        let failures = (0..100)
            .filter(|&seed| {
                let model = MlpModel::init("toy", &[1, 64, 1], seed).unwrap();
                let mut t = Trainer::new(model, &cfg);
                let before = t.step(&xs, &ys);
                t.loss(&xs, &ys) >= before
            })
            .count();
        assert!(failures <= 2, "{failures} seeds failed to decrease");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::Empty(_))));
        let mut data = linear_task(3, 5);
        data[1].0.values.push(0.0);
        assert!(train(&data, &TrainConfig::default()).is_err());
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(train(&linear_task(3, 5), &cfg).is_err());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let mut data = linear_task(10, 6);
        data[0].1 = 1e200;
        let cfg = TrainConfig { learning_rate: 1e3, epochs: 50, ..Default::default() };
        match train(&data, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn grad_check_random_models() {
        for seed in 0..100u64 {
            let mut r = rng::rng(rng::derive(&[seed, 99]));
            let model = MlpModel::init("x", &[8, 4, 1], seed).unwrap();
            let x: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
            let y = r.random_range(-1.0..1.0);
            let err = grad_check(&model, &x, y).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn grad_check_zero_case() {
        let model = MlpModel::zeros("x", &[3, 4, 1]).unwrap();
        let (_, g) = loss_and_grad(&model, &[&[0.0; 3]], &[0.0]);
        assert!(g.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| *v == 0.0)));
        assert_eq!(grad_check(&model, &[0.0; 3], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_gradient_closed_form() {
        let (w, b, x, y) = (0.7, -0.2, 1.6, 0.4);
        let model = MlpModel::from_layers("x", vec![Layer { weights: vec![w], biases: vec![b] }]).unwrap();
        let (_, g) = loss_and_grad(&model, &[&[x]], &[y]);
        let r = 2.0 * (w * x + b - y);
        assert!((g[0].weights[0] - r * x).abs() < 1e-10);
        assert!((g[0].biases[0] - r).abs() < 1e-10);
    }

    #[test]
    fn evaluate_conventions() {
        let model = MlpModel::from_layers("toy", vec![Layer { weights: vec![3.0], biases: vec![1.0] }]).unwrap();
        let data = linear_task(20, 7);
        let e = evaluate(&model, &data).unwrap();
        assert_eq!(e.mse, 0.0);
        assert_eq!(e.spearman.rho, 1.0);
        let neg: Vec<_> = data.iter().map(|(x, y)| (x.clone(), -y)).collect();
        assert_eq!(evaluate(&model, &neg).unwrap().spearman.rho, -1.0);
        let flat = MlpModel::zeros("toy", &[1, 1]).unwrap();
        let e = evaluate(&flat, &data).unwrap();
        assert!(e.spearman.degenerate);
        assert_eq!(e.spearman.rho, 0.0);
    }
}
