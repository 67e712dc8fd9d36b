//! JSON model files.
//!
//! ```json
//! {
//!   "format": "bsf-model",
//!   "version": 1,
//!   "input_shape": [13],
//!   "layers": [
//!     {"kind": "bsf_element", "units": 13, "l1_coef": 0.01, "grid": null,
//!      "weights": {"shape": [13], "f64le_base64": "..."}},
//!     {"kind": "dense", "inputs": 13, "outputs": 13, "activation": "relu",
//!      "weights": {...}, "bias": {...}},
//!     {"kind": "conv2d", "in_channels": 1, "kernels": 32, "kernel_size": 3,
//!      "activation": "relu", "weights": {...}, "bias": {...}},
//!     {"kind": "bsf_channel", "channels": 32, "l1_coef": 0.001, "weights": {...}},
//!     {"kind": "max_pool", "size": 2},
//!     {"kind": "flatten"},
//!     {"kind": "dropout", "p": 0.5},
//!     {"kind": "activation", "function": "tanh"}
//!   ],
//!   "bsf_history": [{"epoch": 1, "layout": {...}, "segments": [[0, 13]], "weights": [...]}]
//! }
//! ```
//!
//! Tensor values are the little-endian bytes of each `f64`, base64 encoded
//! (standard alphabet, padded), so a round trip is bit-exact. Optimizer
//! state is not stored. `bsf_history` is omitted when empty.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, ActivationLayer, Conv2d, Dense, Dropout, Flatten, MaxPool};
use super::{Layer, Network};
use crate::bsf::{Bsf, BsfMode, BsfSnapshot};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT: &str = "bsf-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub f64le_base64: String,
}

impl TensorRecord {
    pub fn encode(t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        TensorRecord {
            shape: t.shape().to_vec(),
            f64le_base64: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(&self.f64le_base64)
            .map_err(|e| Error::Model(format!("bad base64 tensor data: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Model("tensor byte length is not a multiple of 8".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Tensor::new(self.shape.clone(), data).map_err(|e| Error::Model(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerRecord {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
        weights: TensorRecord,
        bias: TensorRecord,
    },
    Activation {
        function: Activation,
    },
    Conv2d {
        in_channels: usize,
        kernels: usize,
        kernel_size: usize,
        activation: Activation,
        weights: TensorRecord,
        bias: TensorRecord,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
    Dropout {
        p: f64,
    },
    BsfElement {
        units: usize,
        l1_coef: f64,
        grid: Option<[usize; 2]>,
        weights: TensorRecord,
    },
    BsfChannel {
        channels: usize,
        l1_coef: f64,
        weights: TensorRecord,
    },
}

impl LayerRecord {
    pub fn from_layer(layer: &Layer) -> Self {
        match layer {
            Layer::Dense(d) => LayerRecord::Dense {
                inputs: d.inputs(),
                outputs: d.outputs(),
                activation: d.activation,
                weights: TensorRecord::encode(&d.weights.value),
                bias: TensorRecord::encode(&d.bias.value),
            },
            Layer::Activation(a) => LayerRecord::Activation {
                function: a.function,
            },
            Layer::Conv2d(c) => LayerRecord::Conv2d {
                in_channels: c.in_channels(),
                kernels: c.n_kernels(),
                kernel_size: c.kernel_size(),
                activation: c.activation,
                weights: TensorRecord::encode(&c.kernels.value),
                bias: TensorRecord::encode(&c.bias.value),
            },
            Layer::MaxPool(p) => LayerRecord::MaxPool { size: p.size },
            Layer::Flatten(_) => LayerRecord::Flatten,
            Layer::Dropout(d) => LayerRecord::Dropout { p: d.p },
            Layer::Bsf(b) => match b.mode {
                BsfMode::Element => LayerRecord::BsfElement {
                    units: b.units(),
                    l1_coef: b.l1_coef,
                    grid: b.grid.map(|(h, w)| [h, w]),
                    weights: TensorRecord::encode(&b.weights.value),
                },
                BsfMode::Channel => LayerRecord::BsfChannel {
                    channels: b.units(),
                    l1_coef: b.l1_coef,
                    weights: TensorRecord::encode(&b.weights.value),
                },
            },
        }
    }

    pub fn to_layer(&self) -> Result<Layer> {
        let check = |what: &str, t: &Tensor, want: &[usize]| -> Result<()> {
            if t.shape() == want {
                Ok(())
            } else {
                Err(Error::Model(format!(
                    "{what} has shape {:?}, expected {want:?}",
                    t.shape()
                )))
            }
        };
        Ok(match self {
            LayerRecord::Dense {
                inputs,
                outputs,
                activation,
                weights,
                bias,
            } => {
                let (w, b) = (weights.decode()?, bias.decode()?);
                check("dense weights", &w, &[*inputs, *outputs])?;
                check("dense bias", &b, &[*outputs])?;
                Layer::Dense(Dense::from_parts(w, b, *activation)?)
            }
            LayerRecord::Activation { function } => {
                Layer::Activation(ActivationLayer::new(*function))
            }
            LayerRecord::Conv2d {
                in_channels,
                kernels,
                kernel_size,
                activation,
                weights,
                bias,
            } => {
                let (w, b) = (weights.decode()?, bias.decode()?);
                check(
                    "conv2d kernels",
                    &w,
                    &[*kernels, *in_channels, *kernel_size, *kernel_size],
                )?;
                check("conv2d bias", &b, &[*kernels])?;
                Layer::Conv2d(Conv2d::from_parts(w, b, *activation)?)
            }
            LayerRecord::MaxPool { size } => Layer::MaxPool(MaxPool::new(*size)),
            LayerRecord::Flatten => Layer::Flatten(Flatten::default()),
            LayerRecord::Dropout { p } => Layer::Dropout(Dropout::new(*p)?),
            LayerRecord::BsfElement {
                units,
                l1_coef,
                grid,
                weights,
            } => {
                let w = weights.decode()?;
                check("filter weights", &w, &[*units])?;
                let mut b = Bsf::from_weights(BsfMode::Element, w);
                b.l1_coef = *l1_coef;
                b.grid = grid.map(|[h, w]| (h, w));
                Layer::Bsf(b)
            }
            LayerRecord::BsfChannel {
                channels,
                l1_coef,
                weights,
            } => {
                let w = weights.decode()?;
                check("filter weights", &w, &[*channels])?;
                let mut b = Bsf::from_weights(BsfMode::Channel, w);
                b.l1_coef = *l1_coef;
                Layer::Bsf(b)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bsf_history: Vec<BsfSnapshot>,
}

impl ModelFile {
    pub fn new(net: &Network, history: &[BsfSnapshot]) -> Self {
        ModelFile {
            format: FORMAT.to_string(),
            version: VERSION,
            input_shape: net.input_shape().to_vec(),
            layers: net.layers().iter().map(LayerRecord::from_layer).collect(),
            bsf_history: history.to_vec(),
        }
    }

    pub fn network(&self) -> Result<Network> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported model format {:?} version {}",
                self.format, self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(LayerRecord::to_layer)
            .collect::<Result<Vec<_>>>()?;
        Network::new(self.input_shape.clone(), layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Network {
    pub fn to_json(&self) -> String {
        ModelFile::new(self, &[]).to_json()
    }

    pub fn from_json(text: &str) -> Result<Network> {
        ModelFile::from_json(text)?.network()
    }
}
