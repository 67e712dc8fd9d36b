use serde::{Deserialize, Serialize};

use crate::bsf::Bsf;
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, Dense, Dropout, Flatten, Layer, MaxPool, Network};
use crate::rng::RngStream;

/// Hidden-layer widths of the classifier for `d` input features: `d, d, 2d, d`.
pub fn mlp_hidden_widths(d: usize) -> [usize; 4] {
    [d, d, 2 * d, d]
}

/// ReLU perceptron with hidden widths `d, d, 2d, d` and `n` softmax outputs.
///
/// `with_bsf_input` puts an element filter over the `d` inputs in front;
/// `with_bsf_hidden` adds one after every hidden layer.
pub fn build_mlp(
    d: usize,
    n: usize,
    with_bsf_input: bool,
    with_bsf_hidden: bool,
    rng: &mut RngStream,
) -> Result<Network> {
    build_mlp_with_widths(d, &mlp_hidden_widths(d), n, with_bsf_input, with_bsf_hidden, rng)
}

/// Same as [`build_mlp`] with explicit hidden widths.
pub fn build_mlp_with_widths(
    d: usize,
    hidden: &[usize],
    n: usize,
    with_bsf_input: bool,
    with_bsf_hidden: bool,
    rng: &mut RngStream,
) -> Result<Network> {
    if d == 0 || n < 2 || hidden.contains(&0) {
        return Err(Error::Input(format!(
            "perceptron needs d >= 1, n >= 2 and non-empty hidden layers (d={d}, n={n}, hidden={hidden:?})"
        )));
    }
    let mut layers = vec![];
    if with_bsf_input {
        layers.push(Layer::Bsf(Bsf::element(d)));
    }
    let mut width = d;
    for &h in hidden {
        layers.push(Layer::Dense(Dense::new(width, h, Activation::Relu, rng)));
        if with_bsf_hidden {
            layers.push(Layer::Bsf(Bsf::element(h)));
        }
        width = h;
    }
    layers.push(Layer::Dense(Dense::new(width, n, Activation::Identity, rng)));
    Network::new(vec![d], layers)
}

/// Widths of the convolutional classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub conv1: usize,
    pub conv2: usize,
    pub dense: usize,
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            conv1: 32,
            conv2: 64,
            dense: 128,
            dropout: 0.5,
        }
    }
}

/// Conv(3×3, 32, relu) → Conv(3×3, 64, relu) → MaxPool(2×2) → Flatten →
/// Dense(128, relu) → Dropout(0.5) → Dense(n).
pub fn build_cnn(
    input: [usize; 3],
    n: usize,
    with_bsf_input: bool,
    with_bsf_channels: bool,
    rng: &mut RngStream,
) -> Result<Network> {
    build_cnn_with(input, n, &CnnConfig::default(), with_bsf_input, with_bsf_channels, rng)
}

pub fn build_cnn_with(
    input: [usize; 3],
    n: usize,
    cfg: &CnnConfig,
    with_bsf_input: bool,
    with_bsf_channels: bool,
    rng: &mut RngStream,
) -> Result<Network> {
    let [c, h, w] = input;
    if h < 8 || w < 8 || c == 0 {
        return Err(Error::config(
            0,
            format!("convolutional classifier needs at least 8x8 inputs, got {input:?}"),
        ));
    }
    if n < 2 {
        return Err(Error::Input(format!("need at least two classes, got {n}")));
    }
    let mut layers = vec![];
    if with_bsf_input {
        let mut filter = Bsf::element(c * h * w);
        if c == 1 {
            filter = filter.with_grid(h, w);
        }
        layers.push(Layer::Bsf(filter));
    }
    layers.push(Layer::Conv2d(Conv2d::new(c, cfg.conv1, Activation::Relu, rng)));
    if with_bsf_channels {
        layers.push(Layer::Bsf(Bsf::channel(cfg.conv1)));
    }
    layers.push(Layer::Conv2d(Conv2d::new(cfg.conv1, cfg.conv2, Activation::Relu, rng)));
    if with_bsf_channels {
        layers.push(Layer::Bsf(Bsf::channel(cfg.conv2)));
    }
    layers.push(Layer::MaxPool(MaxPool::new(2)));
    layers.push(Layer::Flatten(Flatten::default()));
    let flat = cfg.conv2 * ((h - 4) / 2) * ((w - 4) / 2);
    layers.push(Layer::Dense(Dense::new(flat, cfg.dense, Activation::Relu, rng)));
    layers.push(Layer::Dropout(Dropout::new(cfg.dropout)?));
    layers.push(Layer::Dense(Dense::new(cfg.dense, n, Activation::Identity, rng)));
    Network::new(input.to_vec(), layers)
}
