//! Cross-entropy loss, RMSprop, and the minibatch training loop.
//!
//! Training is deterministic given (seed, dataset order), independent of
//! thread count: per-sample dropout streams are derived from the sample's
//! slot in the shuffled epoch rather than from a shared sequential stream,
//! and the batch gradient is always reduced in ascending slot order.

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::nn::{Gradients, Model};
use crate::rng::{derive, SplitMix64};
use crate::tensor::{Real, Tensor};
use std::io::Write;
use std::path::Path;

// Sub-stream tags hung off the run seed.
const TAG_SHUFFLE: u64 = 1;
const TAG_DROPOUT: u64 = 2;

/// -ln p[label], clamped at 1e-12 so a confidently wrong prediction yields a
/// large finite loss instead of infinity.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, label: u8) -> Result<f64> {
    if label as usize >= probs.len() {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs.data()[label as usize].to_f64();
    Ok(-p.max(1e-12).ln())
}

/// RMSprop hyperparameters. Defaults are the common framework values.
#[derive(Debug, Clone, Copy)]
pub struct RmspropParams {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropParams {
    fn default() -> Self {
        RmspropParams {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter running mean of squared gradients, mirroring the model's
/// parameter tensors.
pub struct RmspropState<T> {
    cache: Vec<Tensor<T>>,
    pub params: RmspropParams,
}

impl<T: Real> RmspropState<T> {
    pub fn new(model: &Model<T>, params: RmspropParams) -> Self {
        RmspropState {
            cache: model.params().iter().map(|t| Tensor::zeros(t.shape())).collect(),
            params,
        }
    }

    /// cache <- rho*cache + (1-rho)*g^2; w <- w - lr*g/(sqrt(cache)+eps),
    /// element-wise.
    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut param_tensors = model.params_mut();
        if grad_tensors.len() != param_tensors.len() || grad_tensors.len() != self.cache.len() {
            return Err(Error::Shape(format!(
                "rmsprop state holds {} tensors, gradients {}, params {}",
                self.cache.len(),
                grad_tensors.len(),
                param_tensors.len()
            )));
        }
        let lr = T::from_f64(self.params.learning_rate);
        let rho = T::from_f64(self.params.rho);
        let one_minus_rho = T::from_f64(1.0 - self.params.rho);
        let eps = T::from_f64(self.params.epsilon);
        for ((param, grad), cache) in param_tensors
            .iter_mut()
            .zip(&grad_tensors)
            .zip(self.cache.iter_mut())
        {
            if param.shape() != grad.shape() || param.shape() != cache.shape() {
                return Err(Error::Shape(format!(
                    "rmsprop shape mismatch: param {:?}, grad {:?}, cache {:?}",
                    param.shape(),
                    grad.shape(),
                    cache.shape()
                )));
            }
            for ((w, &g), c) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(cache.data_mut())
            {
                *c = rho * *c + one_minus_rho * g * g;
                *w -= lr * g / (c.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Overrides the rate of every dropout layer when set; otherwise the
    /// architecture's rates apply.
    pub dropout_override: Option<f64>,
    pub rmsprop: RmspropParams,
    /// Validation share used by callers that split one dataset themselves.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 10,
            seed: 42,
            dropout_override: None,
            rmsprop: RmspropParams::default(),
            val_fraction: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Usage("epoch budget must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            return Err(Error::Usage(format!(
                "validation fraction must be in (0,1), got {}",
                self.val_fraction
            )));
        }
        if let Some(rate) = self.dropout_override {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Usage(format!(
                    "dropout rate must be in [0,1), got {rate}"
                )));
            }
        }
        Ok(())
    }
}

/// One row per completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with header `epoch,train_loss,val_loss,val_acc`, epochs 1-based.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,train_loss,val_loss,val_acc")?;
        for r in &self.epochs {
            writeln!(f, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_acc)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Train `model` in place. Per epoch: shuffle with the seeded generator,
/// iterate minibatches (final partial batch included), average per-sample
/// gradients in ascending slot order, apply one RMSprop step per batch, then
/// score the validation set. Per-sample work may fan out over `exec`.
pub fn train<T: Real>(
    model: &mut Model<T>,
    config: &TrainConfig,
    train_set: &[LabeledSample<T>],
    val_set: &[LabeledSample<T>],
    exec: &Executor,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Usage(
            "training and validation sets must both be non-empty".into(),
        ));
    }
    for sample in train_set.iter().chain(val_set) {
        if sample.cuboid.data.shape() != model.input_dims() {
            return Err(Error::Shape(format!(
                "sample extents {:?} do not match model input {:?}",
                sample.cuboid.data.shape(),
                model.input_dims()
            )));
        }
    }
    if let Some(rate) = config.dropout_override {
        model.set_dropout_rate(rate)?;
    }
    let mut state = RmspropState::new(model, config.rmsprop);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.max_epochs {
        let mut shuffle_rng =
            SplitMix64::new(derive(derive(config.seed, TAG_SHUFFLE), epoch as u64));
        order.sort_unstable();
        shuffle_rng.shuffle(&mut order);
        let dropout_seed = derive(derive(config.seed, TAG_DROPOUT), epoch as u64);

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let slot_base = batch_idx * config.batch_size;
            let results: Vec<Result<(f64, Gradients<T>)>> = exec.map(batch, |i, &sample_idx| {
                let sample = &train_set[sample_idx];
                let mut rng = SplitMix64::new(derive(dropout_seed, (slot_base + i) as u64));
                let (probs, cache) = model.forward_train(&sample.cuboid.data, &mut rng)?;
                let loss = cross_entropy(&probs, sample.label)?;
                let grads = model.backward(&cache, sample.label)?;
                Ok((loss, grads))
            });
            let mut batch_grads: Option<Gradients<T>> = None;
            for result in results {
                let (loss, grads) = result?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, batch {batch_idx}"
                    )));
                }
                loss_sum += loss;
                match batch_grads.as_mut() {
                    None => batch_grads = Some(grads),
                    Some(acc) => acc.add_assign(&grads),
                }
            }
            let mut batch_grads = batch_grads.expect("non-empty batch");
            batch_grads.scale(T::from_f64(1.0 / batch.len() as f64));
            state.step(model, &batch_grads)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let (val_loss, val_acc) = evaluate(model, val_set, exec)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            val_acc,
        });
    }
    Ok(history)
}

/// Mean cross-entropy and accuracy over a labeled set, inference mode.
/// Positive iff the highlight probability is >= 0.5.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    samples: &[LabeledSample<T>],
    exec: &Executor,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Usage("cannot evaluate an empty sample set".into()));
    }
    let results: Vec<Result<(f64, bool)>> = exec.map(samples, |_, sample| {
        let probs = model.forward_infer(&sample.cuboid.data)?;
        let loss = cross_entropy(&probs, sample.label)?;
        let predicted: u8 = if probs.data()[1].to_f64() >= 0.5 { 1 } else { 0 };
        Ok((loss, predicted == sample.label))
    });
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for r in results {
        let (loss, ok) = r?;
        loss_sum += loss;
        if ok {
            correct += 1;
        }
    }
    Ok((
        loss_sum / samples.len() as f64,
        correct as f64 / samples.len() as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Cuboid;
    use crate::nn::ArchConfig;

    #[test]
    fn cross_entropy_known_values() {
        let p = Tensor::new(vec![2], vec![0.5f64, 0.5]).unwrap();
        assert!((cross_entropy(&p, 0).unwrap() - 2.0f64.ln()).abs() < 1e-12);
        let p = Tensor::new(vec![2], vec![1.0f64, 0.0]).unwrap();
        assert_eq!(cross_entropy(&p, 0).unwrap(), 0.0);
        let p = Tensor::new(vec![2], vec![0.25f64, 0.75]).unwrap();
        assert!((cross_entropy(&p, 1).unwrap() - (-0.75f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_bad_label() {
        let p = Tensor::new(vec![2], vec![0.5f64, 0.5]).unwrap();
        assert!(matches!(cross_entropy(&p, 2), Err(Error::Usage(_))));
    }

    #[test]
    fn cross_entropy_clamps_zero_prob() {
        let p = Tensor::new(vec![2], vec![0.0f64, 1.0]).unwrap();
        let loss = cross_entropy(&p, 0).unwrap();
        assert!(loss.is_finite());
        assert!((loss - (-1e-12f64.ln())).abs() < 1e-9);
    }

    fn one_weight_model() -> Model<f64> {
        // Single dense 1->2 so the update to each element is easy to follow.
        let arch = ArchConfig::from_json(
            r#"{
            "input": {"channels": 1, "height": 1, "width": 1, "depth": 1},
            "layers": [
                {"type": "flatten"},
                {"type": "dense", "units": 2, "activation": "linear"}
            ]
        }"#,
        )
        .unwrap();
        Model::zeroed(arch).unwrap()
    }

    /// Gradient of value 1 on the first dense weight: run backward on the
    /// zero model (head grads are (-0.5, 0.5) with input 1) and rescale.
    fn unit_gradient(model: &Model<f64>) -> Gradients<f64> {
        let input = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let mut rng = SplitMix64::new(0);
        let (_, cache) = model.forward_train(&input, &mut rng).unwrap();
        let mut grads = model.backward(&cache, 0).unwrap();
        grads.scale(-2.0); // (-0.5, 0.5) -> (1, -1)
        grads
    }

    #[test]
    fn rmsprop_single_step_hand_computed() {
        // g = 1, lr = 1e-3, rho = 0.9, eps = 1e-8, cache starts at 0:
        // cache = 0.1, delta_w = -lr / (sqrt(0.1) + eps) ~ -3.1623e-3.
        let mut model = one_weight_model();
        let mut state = RmspropState::new(&model, RmspropParams::default());
        let grads = unit_gradient(&model);
        assert_eq!(grads.tensors()[0].data()[0], 1.0);
        state.step(&mut model, &grads).unwrap();

        let rho: f64 = 0.9;
        let expected_cache = (1.0 - rho) * 1.0;
        let expected_delta = -1e-3 / (expected_cache.sqrt() + 1e-8);
        let w = model.params()[0].data()[0];
        assert!(
            ((w - expected_delta) / expected_delta).abs() < 1e-12,
            "w {w}, expected {expected_delta}"
        );
        assert!((w + 3.1622e-3).abs() < 1e-7, "w {w}");
    }

    #[test]
    fn rmsprop_zero_gradient_identity_on_params() {
        let mut model = one_weight_model();
        {
            let mut params = model.params_mut();
            params[0].data_mut()[0] = 0.7;
        }
        let mut state = RmspropState::new(&model, RmspropParams::default());
        let grads = Gradients::zeros_like(&model);
        state.step(&mut model, &grads).unwrap();
        assert_eq!(model.params()[0].data()[0], 0.7);
    }

    #[test]
    fn rmsprop_lr_zero_is_identity() {
        let mut model = one_weight_model();
        {
            let mut params = model.params_mut();
            params[0].data_mut()[0] = 0.3;
        }
        let params_before: Vec<Vec<f64>> =
            model.params().iter().map(|t| t.data().to_vec()).collect();
        let mut state = RmspropState::new(
            &model,
            RmspropParams {
                learning_rate: 0.0,
                ..Default::default()
            },
        );
        let grads = unit_gradient(&model);
        state.step(&mut model, &grads).unwrap();
        let params_after: Vec<Vec<f64>> =
            model.params().iter().map(|t| t.data().to_vec()).collect();
        assert_eq!(params_before, params_after);
    }

    #[test]
    fn rmsprop_second_identical_step_is_smaller() {
        let mut model = one_weight_model();
        let mut state = RmspropState::new(&model, RmspropParams::default());
        let grads = unit_gradient(&model);
        let w0 = model.params()[0].data()[0];
        state.step(&mut model, &grads).unwrap();
        let w1 = model.params()[0].data()[0];
        state.step(&mut model, &grads).unwrap();
        let w2 = model.params()[0].data()[0];
        let step1 = (w1 - w0).abs();
        let step2 = (w2 - w1).abs();
        assert!(step2 < step1, "step1 {step1}, step2 {step2}");
        // The step moves against the gradient.
        assert!((w1 - w0) < 0.0);
    }

    fn toy_dataset<T: Real>(n: usize, dims: [usize; 4]) -> Vec<LabeledSample<T>> {
        // Linearly separable: positives bright, negatives dark.
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let mut rng = SplitMix64::new(derive(1000, i as u64));
                let base = if label == 1 { 0.8 } else { 0.2 };
                let len: usize = dims.iter().product();
                let data: Vec<T> = (0..len)
                    .map(|_| T::from_f64(base + 0.1 * (rng.next_f64() - 0.5)))
                    .collect();
                LabeledSample {
                    cuboid: Cuboid {
                        data: Tensor::new(dims.to_vec(), data).unwrap(),
                        grid_x: 0,
                        grid_y: 0,
                        t0: 0,
                    },
                    label,
                }
            })
            .collect()
    }

    fn micro_arch_json() -> &'static str {
        r#"{
            "input": {"channels": 1, "height": 6, "width": 6, "depth": 4},
            "layers": [
                {"type": "conv3d", "filters": 2},
                {"type": "flatten"},
                {"type": "dense", "units": 4},
                {"type": "dense", "units": 2, "activation": "linear"}
            ]
        }"#
    }

    #[test]
    fn first_epoch_loss_is_ln2_under_zero_init() {
        // Balanced labels, zero model, one batch per epoch: every sample in
        // the first (and only) batch costs exactly ln 2 before any update.
        let arch = ArchConfig::from_json(micro_arch_json()).unwrap();
        let mut model = Model::<f64>::zeroed(arch).unwrap();
        let data = toy_dataset::<f64>(8, model.input_dims());
        let exec = Executor::sequential();
        let config = TrainConfig {
            max_epochs: 1,
            batch_size: 8,
            seed: 5,
            ..Default::default()
        };
        let history = train(&mut model, &config, &data, &data, &exec).unwrap();
        assert!((history.epochs[0].train_loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn memorizes_twenty_samples() {
        let arch = ArchConfig::from_json(micro_arch_json()).unwrap();
        let mut model = Model::<f32>::init(arch, 7).unwrap();
        let data = toy_dataset::<f32>(20, model.input_dims());
        let exec = Executor::sequential();
        let config = TrainConfig {
            max_epochs: 200,
            batch_size: 4,
            seed: 7,
            ..Default::default()
        };
        let history = train(&mut model, &config, &data, &data, &exec).unwrap();
        let final_loss = history.epochs.last().unwrap().train_loss;
        assert!(final_loss < 0.05, "failed to memorize: loss {final_loss}");
    }

    #[test]
    fn toy_loss_non_increasing_in_windows() {
        let arch = ArchConfig::from_json(micro_arch_json()).unwrap();
        let mut model = Model::<f32>::init(arch, 9).unwrap();
        let data = toy_dataset::<f32>(40, model.input_dims());
        let exec = Executor::sequential();
        let config = TrainConfig {
            max_epochs: 12,
            batch_size: 8,
            seed: 9,
            ..Default::default()
        };
        let history = train(&mut model, &config, &data, &data, &exec).unwrap();
        let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
        let window: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
        for pair in window.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-6,
                "3-epoch mean loss increased: {window:?}"
            );
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let arch = ArchConfig::from_json(micro_arch_json()).unwrap();
        let data = toy_dataset::<f32>(16, [1, 6, 6, 4]);
        let exec = Executor::sequential();
        let config = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            seed: 11,
            ..Default::default()
        };
        let mut m1 = Model::<f32>::init(arch.clone(), 11).unwrap();
        let mut m2 = Model::<f32>::init(arch, 11).unwrap();
        let h1 = train(&mut m1, &config, &data, &data, &exec).unwrap();
        let h2 = train(&mut m2, &config, &data, &data, &exec).unwrap();
        assert_eq!(h1.epochs, h2.epochs);
        for (a, b) in m1.params().iter().zip(m2.params().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn training_matches_across_thread_counts() {
        let arch = ArchConfig::from_json(micro_arch_json()).unwrap();
        let data = toy_dataset::<f32>(16, [1, 6, 6, 4]);
        let config = TrainConfig {
            max_epochs: 2,
            batch_size: 4,
            seed: 13,
            ..Default::default()
        };
        let mut m1 = Model::<f32>::init(arch.clone(), 13).unwrap();
        let mut m2 = Model::<f32>::init(arch, 13).unwrap();
        let h1 = train(&mut m1, &config, &data, &data, &Executor::new(1).unwrap()).unwrap();
        let h2 = train(&mut m2, &config, &data, &data, &Executor::new(4).unwrap()).unwrap();
        assert_eq!(h1.epochs, h2.epochs);
        for (a, b) in m1.params().iter().zip(m2.params().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let arch = ArchConfig::from_json(micro_arch_json()).unwrap();
        let mut model = Model::<f32>::zeroed(arch).unwrap();
        let data = toy_dataset::<f32>(4, model.input_dims());
        let exec = Executor::sequential();
        let config = TrainConfig::default();
        assert!(matches!(
            train(&mut model, &config, &[], &data, &exec),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            train(&mut model, &config, &data, &[], &exec),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn zero_epochs_rejected() {
        let config = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        assert!(matches!(config.validate(), Err(Error::Usage(_))));
    }

    #[test]
    fn history_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let history = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                val_acc: 0.75,
            }],
        };
        history.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss,val_acc\n1,0.5,0.25,0.75\n");
    }
}
