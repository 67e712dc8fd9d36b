//! Layer stack, softmax classifier head, and parameter bookkeeping.

pub mod layers;
pub mod loss;
pub mod optim;
pub mod serial;

use crate::bsf::{Bsf, BsfMode, BsfSnapshot, Layout};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub use layers::{Activation, ActivationLayer, Conv2d, Dense, Dropout, Flatten, MaxPool};
pub use optim::{AdamConfig, Param};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    Activation(ActivationLayer),
    Conv2d(Conv2d),
    MaxPool(MaxPool),
    Flatten(Flatten),
    Dropout(Dropout),
    Bsf(Bsf),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Activation(_) => "activation",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool(_) => "max_pool",
            Layer::Flatten(_) => "flatten",
            Layer::Dropout(_) => "dropout",
            Layer::Bsf(b) => match b.mode {
                BsfMode::Element => "bsf_element",
                BsfMode::Channel => "bsf_channel",
            },
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => match input {
                [n] if *n == d.inputs() => Ok(vec![d.outputs()]),
                _ => Err(Error::Input(format!(
                    "dense layer expects [{}] but receives {input:?}",
                    d.inputs()
                ))),
            },
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::MaxPool(p) => p.output_shape(input),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
            Layer::Activation(_) | Layer::Dropout(_) => Ok(input.to_vec()),
            Layer::Bsf(b) => b.output_shape(input),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut RngStream) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Activation(l) => l.forward(x, mode),
            Layer::Conv2d(l) => l.forward(x, mode),
            Layer::MaxPool(l) => l.forward(x, mode),
            Layer::Flatten(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode, rng),
            Layer::Bsf(l) => l.forward(x, mode, rng),
        }
    }

    /// Fills this layer's parameter gradients and returns the input gradient when asked for.
    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Result<Option<Tensor>> {
        match self {
            Layer::Dense(l) => l.backward(dy, need_dx),
            Layer::Conv2d(l) => l.backward(dy, need_dx),
            Layer::Activation(l) => l.backward(dy).map(Some),
            Layer::MaxPool(l) => l.backward(dy).map(Some),
            Layer::Flatten(l) => l.backward(dy).map(Some),
            Layer::Dropout(l) => l.backward(dy).map(Some),
            Layer::Bsf(l) => l.backward(dy).map(Some),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Conv2d(l) => vec![&l.kernels, &l.bias],
            Layer::Bsf(l) => vec![&l.weights],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.kernels, &mut l.bias],
            Layer::Bsf(l) => vec![&mut l.weights],
            _ => vec![],
        }
    }

    pub fn as_bsf(&self) -> Option<&Bsf> {
        match self {
            Layer::Bsf(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_bsf_mut(&mut self) -> Option<&mut Bsf> {
        match self {
            Layer::Bsf(b) => Some(b),
            _ => None,
        }
    }
}

/// Ordered layers ending in a softmax over the last layer's outputs.
#[derive(Clone, Debug)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    last_probs: Option<Tensor>,
}

impl Network {
    /// Validates that every layer accepts its predecessor's output and that the result is a class vector.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::config(i, e.to_string()))?;
        }
        if shape.len() != 1 || shape[0] < 2 {
            return Err(Error::config(
                layers.len().saturating_sub(1),
                format!("network must end in at least two class scores, got {shape:?}"),
            ));
        }
        Ok(Network {
            input_shape,
            layers,
            last_probs: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn n_classes(&self) -> usize {
        self.shapes().last().map_or(0, |s| s[0])
    }

    /// Per-sample shape after each layer.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(&shape).expect("validated at construction");
                shape.clone()
            })
            .collect()
    }

    /// Class probabilities for a `[batch, ...input_shape]` tensor.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut RngStream) -> Result<Tensor> {
        if x.rank() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::config(
                0,
                format!(
                    "input batch {:?} does not match declared input {:?}",
                    x.shape(),
                    self.input_shape
                ),
            ));
        }
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, rng)?;
        }
        let probs = loss::softmax(&h);
        self.last_probs = (mode == Mode::Train).then(|| probs.clone());
        Ok(probs)
    }

    /// Eval-mode probabilities computed in chunks to bound memory.
    pub fn predict(&mut self, x: &Tensor, chunk: usize) -> Result<Tensor> {
        let mut rng = RngStream::new(0, 0);
        let n = x.rows();
        let mut data = Vec::with_capacity(n * self.n_classes());
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let p = self.forward(&x.select_rows(&idx), Mode::Eval, &mut rng)?;
            data.extend_from_slice(p.data());
            start = end;
        }
        Tensor::new(vec![n, self.n_classes()], data)
    }

    /// Backpropagates a gradient with respect to the last train-mode probabilities,
    /// leaving each parameter's gradient in its `grad` field.
    pub fn backward(&mut self, dprobs: &Tensor) -> Result<()> {
        let probs = self.last_probs.take().ok_or_else(|| {
            Error::State("network backward called without a preceding train-mode forward".into())
        })?;
        if probs.shape() != dprobs.shape() {
            return Err(Error::State(format!(
                "probability gradient {:?} does not match forward output {:?}",
                dprobs.shape(),
                probs.shape()
            )));
        }
        let mut grad = loss::softmax_backward(&probs, dprobs);
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward(&grad, i > 0)? {
                Some(g) => grad = g,
                None => break,
            }
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    pub fn gradients(&self) -> Vec<&Tensor> {
        self.params().map(|p| &p.grad).collect()
    }

    /// Applies one Adam step to every parameter and re-clamps filter weights.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.params_mut().for_each(|p| p.step(cfg));
        self.bsf_layers_mut().for_each(Bsf::clamp_weights);
    }

    pub fn reset_optimizer(&mut self) {
        self.params_mut().for_each(Param::reset_state);
    }

    pub fn bsf_layers(&self) -> impl Iterator<Item = &Bsf> {
        self.layers.iter().filter_map(Layer::as_bsf)
    }

    pub fn bsf_layers_mut(&mut self) -> impl Iterator<Item = &mut Bsf> {
        self.layers.iter_mut().filter_map(Layer::as_bsf_mut)
    }

    pub fn has_bsf(&self) -> bool {
        self.bsf_layers().next().is_some()
    }

    pub fn set_l1(&mut self, coef: f64) {
        self.bsf_layers_mut().for_each(|b| b.l1_coef = coef);
    }

    pub fn l1_penalty(&self) -> f64 {
        self.bsf_layers().map(Bsf::penalty).sum()
    }

    /// Count of trainable values outside the filter layers (weights plus biases).
    pub fn weight_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.as_bsf().is_none())
            .flat_map(|l| l.params())
            .map(|p| p.value.len())
            .sum()
    }

    /// Dense neurons plus convolution kernels.
    pub fn unit_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.outputs(),
                Layer::Conv2d(c) => c.n_kernels(),
                _ => 0,
            })
            .sum()
    }

    /// Redraws every Dense/Conv parameter (Glorot-uniform weights, zero biases)
    /// and clears optimizer state. Filter weights are untouched.
    pub fn reinitialize(&mut self, rng: &mut RngStream) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => d.reinitialize(rng),
                Layer::Conv2d(c) => c.reinitialize(rng),
                _ => {}
            }
        }
        self.reset_optimizer();
    }

    /// Network with every filter layer removed.
    pub fn without_bsf(&self) -> Result<Network> {
        let layers = self
            .layers
            .iter()
            .filter(|l| l.as_bsf().is_none())
            .cloned()
            .collect();
        Network::new(self.input_shape.clone(), layers)
    }

    /// Current filter weights, concatenated in layer order.
    pub fn bsf_snapshot(&self, epoch: usize) -> Option<BsfSnapshot> {
        let mut segments = vec![];
        let mut weights = vec![];
        let mut grid = None;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(b) = layer.as_bsf() {
                segments.push((i, b.units()));
                weights.extend_from_slice(b.w());
                grid = b.grid;
            }
        }
        if segments.is_empty() {
            return None;
        }
        let layout = match grid {
            Some((height, width)) if segments.len() == 1 => Layout::Grid { height, width },
            _ => Layout::Vector { len: weights.len() },
        };
        Some(BsfSnapshot {
            epoch,
            layout,
            segments,
            weights,
        })
    }
}
