//! Architecture configuration: a JSON layer list validated into a shape
//! chain. The same schema is embedded in checkpoints, so a checkpoint is
//! self-describing.
//!
//! ```json
//! {
//!   "input": { "channels": 3, "height": 100, "width": 100, "depth": 30 },
//!   "layers": [
//!     { "type": "conv3d", "filters": 12 },
//!     { "type": "maxpool3d" },
//!     { "type": "flatten" },
//!     { "type": "dropout", "rate": 0.5 },
//!     { "type": "dense", "units": 2, "activation": "linear" }
//!   ]
//! }
//! ```
//!
//! Conv kernels default to 3x3x3 and pooling to 2x2x2 (non-overlapping;
//! extents equal stride). The last layer must be a 2-unit linear dense: the
//! model always finishes with a softmax over the two classes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Relu
    }
}

/// Input cuboid extents in (channel, height, width, time) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub depth: usize,
}

impl InputSpec {
    pub fn dims(&self) -> [usize; 4] {
        [self.channels, self.height, self.width, self.depth]
    }
}

fn default_kernel() -> [usize; 3] {
    [3, 3, 3]
}

fn default_pool() -> [usize; 3] {
    [2, 2, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv3d {
        filters: usize,
        #[serde(default = "default_kernel")]
        kernel: [usize; 3],
        #[serde(default)]
        activation: Activation,
    },
    Maxpool3d {
        /// Pool extents per (height, width, time); stride always equals the
        /// extents (non-overlapping), trailing remainders are dropped.
        #[serde(default = "default_pool")]
        extents: [usize; 3],
    },
    Flatten,
    Dropout {
        rate: f64,
    },
    Dense {
        units: usize,
        #[serde(default)]
        activation: Activation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input: InputSpec,
    pub layers: Vec<LayerSpec>,
}

impl ArchConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let arch: ArchConfig = serde_json::from_str(json)?;
        arch.shape_chain()?;
        Ok(arch)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("arch config serializes")
    }

    /// Compute the per-layer output shapes, validating every transition.
    /// Entry 0 is the input shape; entry `i + 1` follows layer `i`.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let dims = self.input.dims();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("input extents must be >= 1, got {dims:?}")));
        }
        let mut chain: Vec<Vec<usize>> = vec![dims.to_vec()];
        for (li, layer) in self.layers.iter().enumerate() {
            let cur = chain.last().unwrap().clone();
            let next = match layer {
                LayerSpec::Conv3d { filters, kernel, .. } => {
                    if cur.len() != 4 {
                        return Err(Error::Shape(format!(
                            "layer {li}: conv3d wants a (C,H,W,T) input, got {cur:?}"
                        )));
                    }
                    if *filters == 0 || kernel.iter().any(|&k| k == 0) {
                        return Err(Error::Shape(format!(
                            "layer {li}: conv3d filters/kernel must be >= 1"
                        )));
                    }
                    for (axis, (&ext, &k)) in cur[1..].iter().zip(kernel.iter()).enumerate() {
                        if ext < k {
                            return Err(Error::Shape(format!(
                                "layer {li}: conv3d kernel {k} exceeds input extent {ext} on axis {}",
                                axis + 1
                            )));
                        }
                    }
                    vec![
                        *filters,
                        cur[1] - kernel[0] + 1,
                        cur[2] - kernel[1] + 1,
                        cur[3] - kernel[2] + 1,
                    ]
                }
                LayerSpec::Maxpool3d { extents } => {
                    if cur.len() != 4 {
                        return Err(Error::Shape(format!(
                            "layer {li}: maxpool3d wants a (C,H,W,T) input, got {cur:?}"
                        )));
                    }
                    if extents.iter().any(|&e| e == 0) {
                        return Err(Error::Shape(format!(
                            "layer {li}: pool extents must be >= 1"
                        )));
                    }
                    for (axis, (&ext, &e)) in cur[1..].iter().zip(extents.iter()).enumerate() {
                        if ext < e {
                            return Err(Error::Shape(format!(
                                "layer {li}: pool extent {e} exceeds input extent {ext} on axis {}",
                                axis + 1
                            )));
                        }
                    }
                    vec![cur[0], cur[1] / extents[0], cur[2] / extents[1], cur[3] / extents[2]]
                }
                LayerSpec::Flatten => {
                    vec![cur.iter().product()]
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::Shape(format!(
                            "layer {li}: dropout rate must be in [0,1), got {rate}"
                        )));
                    }
                    cur
                }
                LayerSpec::Dense { units, .. } => {
                    if cur.len() != 1 {
                        return Err(Error::Shape(format!(
                            "layer {li}: dense wants a flat input (insert flatten), got {cur:?}"
                        )));
                    }
                    if *units == 0 {
                        return Err(Error::Shape(format!("layer {li}: dense units must be >= 1")));
                    }
                    vec![*units]
                }
            };
            chain.push(next);
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                units: 2,
                activation: Activation::Linear,
            }) => {}
            Some(LayerSpec::Dense { units: 2, .. }) => {
                return Err(Error::Shape(
                    "final dense layer feeds the softmax head and must be linear".into(),
                ))
            }
            _ => {
                return Err(Error::Shape(
                    "network must end with a 2-unit linear dense layer (softmax head)".into(),
                ))
            }
        }
        Ok(chain)
    }

    /// The full-scale audience model: (3,100,100,30) in, two 12-filter and
    /// two 8-filter 3x3x3 conv layers with one 2x2x2 pool between the pairs,
    /// then dense 32 -> 8 -> 2 with 0.5 dropout before the first two dense
    /// layers. Flatten size is 139392.
    pub fn default_full() -> Self {
        ArchConfig {
            input: InputSpec {
                channels: 3,
                height: 100,
                width: 100,
                depth: 30,
            },
            layers: vec![
                LayerSpec::Conv3d {
                    filters: 12,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Conv3d {
                    filters: 12,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Maxpool3d { extents: [2, 2, 2] },
                LayerSpec::Conv3d {
                    filters: 8,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Conv3d {
                    filters: 8,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Flatten,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense {
                    units: 32,
                    activation: Activation::Relu,
                },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense {
                    units: 8,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Linear,
                },
            ],
        }
    }

    /// Desk-scale model for the (1,32,32,10) synthetic cuboids: four
    /// 4-filter conv layers, dense 16 -> 8 -> 2. The pool between the conv
    /// pairs is spatial-only (2,2,1): with 3x3x3 kernels a 2x2x2 pool would
    /// leave a single frame, too thin for the remaining conv pair.
    pub fn small_synthetic() -> Self {
        ArchConfig {
            input: InputSpec {
                channels: 1,
                height: 32,
                width: 32,
                depth: 10,
            },
            layers: vec![
                LayerSpec::Conv3d {
                    filters: 4,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Conv3d {
                    filters: 4,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Maxpool3d { extents: [2, 2, 1] },
                LayerSpec::Conv3d {
                    filters: 4,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Conv3d {
                    filters: 4,
                    kernel: [3, 3, 3],
                    activation: Activation::Relu,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: 16,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 8,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Linear,
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_full_shape_chain() {
        let chain = ArchConfig::default_full().shape_chain().unwrap();
        let expected: Vec<Vec<usize>> = vec![
            vec![3, 100, 100, 30],
            vec![12, 98, 98, 28],
            vec![12, 96, 96, 26],
            vec![12, 48, 48, 13],
            vec![8, 46, 46, 11],
            vec![8, 44, 44, 9],
            vec![139_392],
            vec![139_392], // dropout
            vec![32],
            vec![32], // dropout
            vec![8],
            vec![2],
        ];
        assert_eq!(chain, expected);
    }

    #[test]
    fn small_synthetic_chain_is_valid() {
        let chain = ArchConfig::small_synthetic().shape_chain().unwrap();
        assert_eq!(chain.first().unwrap(), &vec![1, 32, 32, 10]);
        assert_eq!(chain.last().unwrap(), &vec![2]);
    }

    #[test]
    fn json_round_trip() {
        let arch = ArchConfig::default_full();
        let parsed = ArchConfig::from_json(&arch.to_json()).unwrap();
        assert_eq!(parsed, arch);
    }

    #[test]
    fn kernel_and_pool_defaults_apply() {
        let json = r#"{
            "input": {"channels": 1, "height": 8, "width": 8, "depth": 4},
            "layers": [
                {"type": "conv3d", "filters": 2},
                {"type": "maxpool3d"},
                {"type": "flatten"},
                {"type": "dense", "units": 2, "activation": "linear"}
            ]
        }"#;
        let arch = ArchConfig::from_json(json).unwrap();
        let chain = arch.shape_chain().unwrap();
        assert_eq!(chain[1], vec![2, 6, 6, 2]);
        assert_eq!(chain[2], vec![2, 3, 3, 1]);
    }

    #[test]
    fn conv_on_too_small_input_fails() {
        let json = r#"{
            "input": {"channels": 1, "height": 2, "width": 8, "depth": 4},
            "layers": [
                {"type": "conv3d", "filters": 2},
                {"type": "flatten"},
                {"type": "dense", "units": 2, "activation": "linear"}
            ]
        }"#;
        assert!(ArchConfig::from_json(json).is_err());
    }

    #[test]
    fn relu_head_rejected() {
        let json = r#"{
            "input": {"channels": 1, "height": 4, "width": 4, "depth": 3},
            "layers": [
                {"type": "flatten"},
                {"type": "dense", "units": 2}
            ]
        }"#;
        assert!(ArchConfig::from_json(json).is_err());
    }

    #[test]
    fn dense_without_flatten_fails() {
        let json = r#"{
            "input": {"channels": 1, "height": 4, "width": 4, "depth": 3},
            "layers": [
                {"type": "dense", "units": 2, "activation": "linear"}
            ]
        }"#;
        assert!(ArchConfig::from_json(json).is_err());
    }
}
