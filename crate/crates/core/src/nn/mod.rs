//! The 3D-CNN: an architecture config instantiated into parameter tensors,
//! with a forward pass, an analytic backward pass for the softmax
//! cross-entropy head, and a finite-difference gradient checker.

pub mod arch;
pub mod checkpoint;
pub mod layers;

pub use arch::{Activation, ArchConfig, InputSpec, LayerSpec};
pub use layers::{softmax, Conv3d, Dense, DropoutLayer, MaxPool3d};

use crate::error::{Error, Result};
use crate::rng::{derive, SplitMix64};
use crate::tensor::{Real, Tensor};

/// One instantiated layer. Conv and dense own parameters; the rest are
/// stateless.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv3d<T>),
    Pool(MaxPool3d),
    Flatten,
    Dropout(DropoutLayer),
    Dense(Dense<T>),
}

/// What the backward pass needs from each layer of a train-mode forward.
enum CacheEntry<T> {
    Conv { input: Tensor<T>, preact: Tensor<T> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dropout { mask: Vec<T> },
    Dense { input: Tensor<T>, preact: Tensor<T> },
}

/// Activations recorded by a train-mode forward pass.
pub struct LayerCache<T> {
    entries: Vec<CacheEntry<T>>,
    probs: Tensor<T>,
}

impl<T: Real> LayerCache<T> {
    pub fn probs(&self) -> &Tensor<T> {
        &self.probs
    }
}

/// Per-layer parameter gradients, aligned with the model's layer list.
pub struct Gradients<T> {
    per_layer: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        let per_layer = model
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(c) => {
                    Some((Tensor::zeros(c.weights.shape()), Tensor::zeros(c.bias.shape())))
                }
                Layer::Dense(d) => {
                    Some((Tensor::zeros(d.weights.shape()), Tensor::zeros(d.bias.shape())))
                }
                _ => None,
            })
            .collect();
        Gradients { per_layer }
    }

    /// Flat view in layer order: weights then bias per parameterized layer.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for entry in self.per_layer.iter().flatten() {
            out.push(&entry.0);
            out.push(&entry.1);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a.as_mut(), b.as_ref()) {
                for (x, y) in aw.data_mut().iter_mut().zip(bw.data()) {
                    *x += *y;
                }
                for (x, y) in ab.data_mut().iter_mut().zip(bb.data()) {
                    *x += *y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for entry in self.per_layer.iter_mut().flatten() {
            for v in entry.0.data_mut() {
                *v *= factor;
            }
            for v in entry.1.data_mut() {
                *v *= factor;
            }
        }
    }
}

/// The network: architecture config plus instantiated parameters. The shape
/// chain is validated at construction, so a constructed model can always run
/// its input spec.
#[derive(Debug, Clone)]
pub struct Model<T> {
    arch: ArchConfig,
    layers: Vec<Layer<T>>,
    chain: Vec<Vec<usize>>,
}

impl<T: Real> Model<T> {
    /// Instantiate with all parameters zero.
    pub fn zeroed(arch: ArchConfig) -> Result<Self> {
        let chain = arch.shape_chain()?;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (i, spec) in arch.layers.iter().enumerate() {
            let in_shape = &chain[i];
            let layer = match spec {
                LayerSpec::Conv3d {
                    filters,
                    kernel,
                    activation,
                } => Layer::Conv(Conv3d::zeroed(*filters, in_shape[0], *kernel, *activation)),
                LayerSpec::Maxpool3d { extents } => Layer::Pool(MaxPool3d { extents: *extents }),
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dropout { rate } => Layer::Dropout(DropoutLayer { rate: *rate }),
                LayerSpec::Dense { units, activation } => {
                    Layer::Dense(Dense::zeroed(*units, in_shape[0], *activation))
                }
            };
            layers.push(layer);
        }
        Ok(Model { arch, layers, chain })
    }

    /// Instantiate with seeded random weights: He-normal (std sqrt(2/fan_in))
    /// for ReLU conv/dense layers, Glorot-uniform for linear layers, biases
    /// zero. Values are drawn in f64 in parameter order (weights then bias,
    /// layer by layer, flat row-major) from `SplitMix64::new(seed)` and cast,
    /// so f32 and f64 models see the same underlying draws.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(arch)?;
        let mut rng = SplitMix64::new(seed);
        for layer in &mut model.layers {
            match layer {
                Layer::Conv(c) => {
                    let fan_in = (c.weights.len() / c.out_channels()) as f64;
                    let fan_out = c.out_channels() as f64;
                    init_tensor(&mut c.weights, c.activation, fan_in, fan_out, &mut rng);
                }
                Layer::Dense(d) => {
                    let fan_in = d.in_dim() as f64;
                    let fan_out = d.out_dim() as f64;
                    init_tensor(&mut d.weights, d.activation, fan_in, fan_out, &mut rng);
                }
                _ => {}
            }
        }
        Ok(model)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    /// The validated shape chain, input first, (2) last.
    pub fn shape_chain(&self) -> &[Vec<usize>] {
        &self.chain
    }

    pub fn input_dims(&self) -> [usize; 4] {
        self.arch.input.dims()
    }

    /// Parameter tensors in layer order, weights before bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.weights);
                    out.push(&c.bias);
                }
                Layer::Dense(d) => {
                    out.push(&d.weights);
                    out.push(&d.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weights);
                    out.push(&mut c.bias);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != self.input_dims() {
            return Err(Error::Shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_dims(),
                input.shape()
            )));
        }
        Ok(())
    }

    /// Inference: dropout disabled, nothing cached. Pure; same params and
    /// input give bit-identical probabilities.
    pub fn forward_infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => c.forward(&x)?.0,
                Layer::Pool(p) => p.forward(&x)?.0,
                Layer::Flatten => x.reshape(&[x.len()])?,
                Layer::Dropout(_) => x,
                Layer::Dense(d) => d.forward(&x)?.0,
            };
        }
        softmax(&x)
    }

    /// Training-mode forward: dropout masks drawn from `rng` (one uniform per
    /// element, in layer order), activations cached for [`Model::backward`].
    pub fn forward_train(
        &self,
        input: &Tensor<T>,
        rng: &mut SplitMix64,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut entries = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => {
                    let (out, preact) = c.forward(&x)?;
                    entries.push(CacheEntry::Conv { input: x, preact });
                    out
                }
                Layer::Pool(p) => {
                    let input_shape = x.shape().to_vec();
                    let (out, argmax) = p.forward(&x)?;
                    entries.push(CacheEntry::Pool { input_shape, argmax });
                    out
                }
                Layer::Flatten => {
                    let input_shape = x.shape().to_vec();
                    let out = x.reshape(&[x.len()])?;
                    entries.push(CacheEntry::Flatten { input_shape });
                    out
                }
                Layer::Dropout(d) => {
                    let (out, mask) = d.forward_train(&x, rng);
                    entries.push(CacheEntry::Dropout { mask });
                    out
                }
                Layer::Dense(d) => {
                    let (out, preact) = d.forward(&x)?;
                    entries.push(CacheEntry::Dense { input: x, preact });
                    out
                }
            };
        }
        let probs = softmax(&x)?;
        Ok((probs.clone(), LayerCache { entries, probs }))
    }

    /// Gradients of the cross-entropy loss -ln p[label] with respect to every
    /// parameter. The head gradient is probs - one_hot(label).
    pub fn backward(&self, cache: &LayerCache<T>, label: u8) -> Result<Gradients<T>> {
        if label > 1 {
            return Err(Error::Usage(format!("label must be 0 or 1, got {label}")));
        }
        if cache.entries.len() != self.layers.len() {
            return Err(Error::Usage(
                "layer cache does not match this model (was it produced by forward_train?)".into(),
            ));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = cache.probs.clone();
        let idx = label as usize;
        let d = upstream.data_mut();
        d[idx] = d[idx] - T::ONE;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            upstream = match (layer, &cache.entries[li]) {
                (Layer::Conv(c), CacheEntry::Conv { input, preact }) => {
                    let (dx, dw, db) = c.backward(input, preact, &upstream)?;
                    grads.per_layer[li] = Some((dw, db));
                    dx
                }
                (Layer::Pool(p), CacheEntry::Pool { input_shape, argmax }) => {
                    p.backward(input_shape, argmax, &upstream)?
                }
                (Layer::Flatten, CacheEntry::Flatten { input_shape }) => {
                    upstream.reshape(input_shape)?
                }
                (Layer::Dropout(d), CacheEntry::Dropout { mask }) => d.backward(mask, &upstream),
                (Layer::Dense(d), CacheEntry::Dense { input, preact }) => {
                    let (dx, dw, db) = d.backward(input, preact, &upstream)?;
                    grads.per_layer[li] = Some((dw, db));
                    dx
                }
                _ => {
                    return Err(Error::Usage(
                        "layer cache entries out of step with the model".into(),
                    ))
                }
            };
        }
        Ok(grads)
    }

    /// Reset every dropout layer to `rate`; the embedded architecture config
    /// follows so checkpoints reflect what actually ran.
    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Usage(format!(
                "dropout rate must be in [0,1), got {rate}"
            )));
        }
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.rate = rate;
            }
        }
        for spec in &mut self.arch.layers {
            if let LayerSpec::Dropout { rate: r } = spec {
                *r = rate;
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(c) => Layer::Conv(Conv3d {
                    weights: c.weights.cast(),
                    bias: c.bias.cast(),
                    activation: c.activation,
                }),
                Layer::Pool(p) => Layer::Pool(*p),
                Layer::Flatten => Layer::Flatten,
                Layer::Dropout(d) => Layer::Dropout(*d),
                Layer::Dense(d) => Layer::Dense(Dense {
                    weights: d.weights.cast(),
                    bias: d.bias.cast(),
                    activation: d.activation,
                }),
            })
            .collect();
        Model {
            arch: self.arch.clone(),
            layers,
            chain: self.chain.clone(),
        }
    }
}

fn init_tensor<T: Real>(
    weights: &mut Tensor<T>,
    activation: Activation,
    fan_in: f64,
    fan_out: f64,
    rng: &mut SplitMix64,
) {
    match activation {
        Activation::Relu => {
            let std = (2.0 / fan_in).sqrt();
            for v in weights.data_mut() {
                *v = T::from_f64(rng.next_normal() * std);
            }
        }
        Activation::Linear => {
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for v in weights.data_mut() {
                *v = T::from_f64(rng.next_uniform(-limit, limit));
            }
        }
    }
}

/// Maximum relative disagreement between two gradient sets, with the usual
/// `max(|a|, |n|, 1e-8)` denominator guard.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central-difference gradients of the cross-entropy loss for every
/// parameter, with dropout masks frozen to `mask_seed` so each evaluation
/// sees the identical network. f64 only; f32 has too little headroom for
/// 1e-4-level agreement.
pub fn numeric_gradients(
    model: &mut Model<f64>,
    input: &Tensor<f64>,
    label: u8,
    eps: f64,
    mask_seed: u64,
) -> Result<Vec<f64>> {
    let loss_at = |m: &Model<f64>| -> Result<f64> {
        let mut rng = SplitMix64::new(mask_seed);
        let (probs, _) = m.forward_train(input, &mut rng)?;
        crate::optim::cross_entropy(&probs, label)
    };
    let n_tensors = model.params().len();
    let mut numeric = Vec::with_capacity(model.param_count());
    for pi in 0..n_tensors {
        let len = model.params()[pi].len();
        for ei in 0..len {
            let orig = model.params()[pi].data()[ei];
            model.params_mut()[pi].data_mut()[ei] = orig + eps;
            let plus = loss_at(model)?;
            model.params_mut()[pi].data_mut()[ei] = orig - eps;
            let minus = loss_at(model)?;
            model.params_mut()[pi].data_mut()[ei] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
    }
    Ok(numeric)
}

/// Analytic gradients flattened into parameter order (weights then bias per
/// layer), for comparison against [`numeric_gradients`].
pub fn analytic_gradients(
    model: &Model<f64>,
    input: &Tensor<f64>,
    label: u8,
    mask_seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = SplitMix64::new(mask_seed);
    let (_, cache) = model.forward_train(input, &mut rng)?;
    let grads = model.backward(&cache, label)?;
    Ok(grads
        .tensors()
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect())
}

/// Compare the analytic backward pass against central finite differences.
/// Returns the maximum relative error over all parameters.
pub fn grad_check(
    model: &mut Model<f64>,
    input: &Tensor<f64>,
    label: u8,
    eps: f64,
    mask_seed: u64,
) -> Result<f64> {
    let analytic = analytic_gradients(model, input, label, mask_seed)?;
    let numeric = numeric_gradients(model, input, label, eps, mask_seed)?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Deterministic random cuboid in [0,1], matching the model input dims.
pub fn random_input<T: Real>(dims: [usize; 4], seed: u64) -> Tensor<T> {
    let mut rng = SplitMix64::new(derive(seed, 0xC0FFEE));
    let n: usize = dims.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::from_f64(rng.next_f64())).collect();
    Tensor::new(dims.to_vec(), data).expect("consistent dims")
}
