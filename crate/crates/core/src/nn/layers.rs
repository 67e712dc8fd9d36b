//! Deterministic layers with hand-written forward and backward passes.
//!
//! Activations are `[batch, ...]` tensors. Each layer keeps whatever its
//! backward pass needs from the last train-mode forward; `backward` consumes
//! that cache, so a second backward without a fresh forward is a state error.

use serde::{Deserialize, Serialize};

use super::optim::Param;
use super::Mode;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{gemm, MatRef, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            // NaN passes through so divergence stays visible downstream.
            Activation::Relu => {
                if v < 0.0 {
                    0.0
                } else {
                    v
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn backward_in_place(self, dy: &mut Tensor, y: &Tensor) {
        if self == Activation::Identity {
            return;
        }
        for (d, &o) in dy.data_mut().iter_mut().zip(y.data()) {
            *d *= self.derivative_from_output(o);
        }
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer} backward called without a preceding train-mode forward"))
}

fn check_grad_shape(layer: &str, dy: &Tensor, y: &Tensor) -> Result<()> {
    if dy.shape() != y.shape() {
        return Err(Error::State(format!(
            "{layer} upstream gradient shape {:?} does not match output {:?}",
            dy.shape(),
            y.shape()
        )));
    }
    Ok(())
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| (2.0 * rng.next_f64() - 1.0) * limit).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

#[derive(Clone, Debug)]
struct DenseCache {
    input: Tensor,
    output: Tensor,
}

/// Fully connected layer `act(x·W + b)` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weights: Param,
    pub bias: Param,
    pub activation: Activation,
    cache: Option<DenseCache>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let w = glorot(&[inputs, outputs], inputs, outputs, rng);
        Self::from_parts(w, Tensor::zeros(&[outputs]), activation).expect("consistent shapes")
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(Error::Dimension {
                op: "dense",
                lhs: weights.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Dense {
            weights: Param::new(weights),
            bias: Param::new(bias),
            activation,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.value.shape()[1]
    }

    pub fn reinitialize(&mut self, rng: &mut RngStream) {
        *self = Dense::new(self.inputs(), self.outputs(), self.activation, rng);
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (inp, out) = (self.inputs(), self.outputs());
        if x.rank() != 2 || x.shape()[1] != inp {
            return Err(Error::Dimension {
                op: "dense forward",
                lhs: x.shape().to_vec(),
                rhs: self.weights.value.shape().to_vec(),
            });
        }
        let b = x.rows();
        let mut y = vec![0.0; b * out];
        for row in y.chunks_exact_mut(out) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            b,
            inp,
            out,
            MatRef::row_major(x.data(), inp),
            MatRef::row_major(self.weights.value.data(), out),
            1.0,
            &mut y,
            out,
        );
        let act = self.activation;
        y.iter_mut().for_each(|v| *v = act.apply(*v));
        let y = Tensor::new(vec![b, out], y)?;
        self.cache = match mode {
            Mode::Train => Some(DenseCache {
                input: x.clone(),
                output: y.clone(),
            }),
            Mode::Eval => None,
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Result<Option<Tensor>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("dense"))?;
        check_grad_shape("dense", dy, &cache.output)?;
        let (inp, out) = (self.inputs(), self.outputs());
        let b = dy.rows();
        let mut dz = dy.clone();
        self.activation.backward_in_place(&mut dz, &cache.output);

        gemm(
            inp,
            b,
            out,
            MatRef::transposed(cache.input.data(), inp),
            MatRef::row_major(dz.data(), out),
            0.0,
            self.weights.grad.data_mut(),
            out,
        );
        let db = self.bias.grad.data_mut();
        db.fill(0.0);
        for row in dz.data().chunks_exact(out) {
            for (g, &v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
        if !need_dx {
            return Ok(None);
        }
        let mut dx = vec![0.0; b * inp];
        gemm(
            b,
            out,
            inp,
            MatRef::row_major(dz.data(), out),
            MatRef::transposed(self.weights.value.data(), out),
            0.0,
            &mut dx,
            inp,
        );
        Ok(Some(Tensor::new(vec![b, inp], dx)?))
    }
}

#[derive(Clone, Debug)]
struct ConvCache {
    input: Tensor,
    output: Tensor,
}

/// Valid-padding, stride-1 square convolution with kernels `[n_kernels, in_channels, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernels: Param,
    pub bias: Param,
    pub activation: Activation,
    cache: Option<ConvCache>,
}

impl Conv2d {
    pub const KERNEL_SIZE: usize = 3;

    pub fn new(
        in_channels: usize,
        n_kernels: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let k = Self::KERNEL_SIZE;
        let w = glorot(
            &[n_kernels, in_channels, k, k],
            in_channels * k * k,
            n_kernels * k * k,
            rng,
        );
        Self::from_parts(w, Tensor::zeros(&[n_kernels]), activation).expect("consistent shapes")
    }

    pub fn from_parts(kernels: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let s = kernels.shape();
        if s.len() != 4 || s[2] != s[3] || bias.shape() != [s[0]] {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: s.to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Conv2d {
            kernels: Param::new(kernels),
            bias: Param::new(bias),
            activation,
            cache: None,
        })
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.value.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.value.shape()[2]
    }

    pub fn reinitialize(&mut self, rng: &mut RngStream) {
        let mut fresh = Conv2d::new(self.in_channels(), self.n_kernels(), self.activation, rng);
        if fresh.kernel_size() != self.kernel_size() {
            let k = self.kernel_size();
            let shape = [self.n_kernels(), self.in_channels(), k, k];
            fresh.kernels = Param::new(glorot(
                &shape,
                self.in_channels() * k * k,
                self.n_kernels() * k * k,
                rng,
            ));
        }
        *self = fresh;
    }

    /// Per-sample output shape for a `[c, h, w]` input.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let k = self.kernel_size();
        match input {
            [c, h, w] if *c == self.in_channels() && *h >= k && *w >= k => {
                Ok(vec![self.n_kernels(), h - k + 1, w - k + 1])
            }
            _ => Err(Error::Input(format!(
                "conv2d with {} input channels and {k}x{k} kernels cannot take input {input:?}",
                self.in_channels()
            ))),
        }
    }

    /// Unrolls one `[c, h, w]` sample into `[c·k·k, oh·ow]` patch columns.
    fn im2col(&self, x: &[f64], h: usize, w: usize, cols: &mut [f64]) {
        let k = self.kernel_size();
        let (oh, ow) = (h - k + 1, w - k + 1);
        for c in 0..self.in_channels() {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                    for i in 0..oh {
                        let src = &x[(c * h + i + ki) * w + kj..][..ow];
                        dst[i * ow..(i + 1) * ow].copy_from_slice(src);
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], h: usize, w: usize, dx: &mut [f64]) {
        let k = self.kernel_size();
        let (oh, ow) = (h - k + 1, w - k + 1);
        for c in 0..self.in_channels() {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                    for i in 0..oh {
                        let dst = &mut dx[(c * h + i + ki) * w + kj..][..ow];
                        for (d, &s) in dst.iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() != 4 {
            return Err(Error::Input(format!("conv2d expects [batch, c, h, w], got {:?}", x.shape())));
        }
        let out_shape = self.output_shape(&x.shape()[1..])?;
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let (nk, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
        let ckk = self.in_channels() * self.kernel_size().pow(2);
        let b = x.rows();
        let mut y = vec![0.0; b * nk * oh * ow];
        let mut cols = vec![0.0; ckk * oh * ow];
        for (s, ys) in y.chunks_exact_mut(nk * oh * ow).enumerate() {
            self.im2col(x.row(s), h, w, &mut cols);
            for (c, plane) in ys.chunks_exact_mut(oh * ow).enumerate() {
                plane.fill(self.bias.value.data()[c]);
            }
            gemm(
                nk,
                ckk,
                oh * ow,
                MatRef::row_major(self.kernels.value.data(), ckk),
                MatRef::row_major(&cols, oh * ow),
                1.0,
                ys,
                oh * ow,
            );
        }
        let act = self.activation;
        y.iter_mut().for_each(|v| *v = act.apply(*v));
        let y = Tensor::new(vec![b, nk, oh, ow], y)?;
        self.cache = match mode {
            Mode::Train => Some(ConvCache {
                input: x.clone(),
                output: y.clone(),
            }),
            Mode::Eval => None,
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Result<Option<Tensor>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("conv2d"))?;
        check_grad_shape("conv2d", dy, &cache.output)?;
        let x = &cache.input;
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let (nk, oh, ow) = (dy.shape()[1], dy.shape()[2], dy.shape()[3]);
        let ckk = self.in_channels() * self.kernel_size().pow(2);
        let mut dz = dy.clone();
        self.activation.backward_in_place(&mut dz, &cache.output);

        self.kernels.grad.fill(0.0);
        self.bias.grad.fill(0.0);
        let mut dx = if need_dx { Some(Tensor::zeros(x.shape())) } else { None };
        let mut cols = vec![0.0; ckk * oh * ow];
        let mut dcols = vec![0.0; ckk * oh * ow];
        for s in 0..x.rows() {
            let dzs = dz.row(s);
            self.im2col(x.row(s), h, w, &mut cols);
            gemm(
                nk,
                oh * ow,
                ckk,
                MatRef::row_major(dzs, oh * ow),
                MatRef::transposed(&cols, oh * ow),
                1.0,
                self.kernels.grad.data_mut(),
                ckk,
            );
            for (g, plane) in self.bias.grad.data_mut().iter_mut().zip(dzs.chunks_exact(oh * ow)) {
                *g += plane.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    ckk,
                    nk,
                    oh * ow,
                    MatRef::transposed(self.kernels.value.data(), ckk),
                    MatRef::row_major(dzs, oh * ow),
                    0.0,
                    &mut dcols,
                    oh * ow,
                );
                let per = x.row_len();
                self.col2im_add(&dcols, h, w, &mut dx.data_mut()[s * per..(s + 1) * per]);
            }
        }
        Ok(dx)
    }
}

/// Non-overlapping `size × size` max pooling; trailing rows/columns that do not fill a window are dropped.
#[derive(Clone, Debug)]
pub struct MaxPool {
    pub size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool {
    pub fn new(size: usize) -> Self {
        MaxPool { size, cache: None }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [c, h, w] if *h >= self.size && *w >= self.size && self.size > 0 => {
                Ok(vec![*c, h / self.size, w / self.size])
            }
            _ => Err(Error::Input(format!(
                "max pool {0}x{0} cannot take input {input:?}",
                self.size
            ))),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() != 4 {
            return Err(Error::Input(format!("max pool expects [batch, c, h, w], got {:?}", x.shape())));
        }
        let os = self.output_shape(&x.shape()[1..])?;
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oh, ow, p) = (os[1], os[2], self.size);
        let mut y = Vec::with_capacity(b * c * oh * ow);
        let mut arg = Vec::with_capacity(b * c * oh * ow);
        let xd = x.data();
        for plane in 0..b * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + (i * p) * w + j * p;
                    for di in 0..p {
                        for dj in 0..p {
                            let idx = base + (i * p + di) * w + j * p + dj;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    y.push(xd[best]);
                    arg.push(best);
                }
            }
        }
        self.cache = match mode {
            Mode::Train => Some((x.shape().to_vec(), arg)),
            Mode::Eval => None,
        };
        Tensor::new(vec![b, c, oh, ow], y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (shape, arg) = self.cache.take().ok_or_else(|| missing_cache("max pool"))?;
        if dy.len() != arg.len() {
            return Err(Error::State("max pool upstream gradient has the wrong size".into()));
        }
        let mut dx = Tensor::zeros(&shape);
        for (&i, &g) in arg.iter().zip(dy.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }
}

/// Reshapes `[batch, ...]` to `[batch, prod(...)]`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        let shape = [x.rows(), x.row_len()];
        x.clone().reshape(&shape)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or_else(|| missing_cache("flatten"))?;
        dy.clone().reshape(&shape)
    }
}

/// Inverted dropout: train-time survivors are scaled by `1/(1-p)`, eval is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
    cache: Option<Tensor>,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Input(format!("dropout probability {p} outside [0, 1)")));
        }
        Ok(Dropout { p, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut RngStream) -> Result<Tensor> {
        if mode == Mode::Eval {
            self.cache = None;
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask = x.map(|_| if rng.next_f64() < self.p { 0.0 } else { keep });
        let y = x.mul(&mask)?;
        self.cache = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mask = self.cache.take().ok_or_else(|| missing_cache("dropout"))?;
        dy.mul(&mask)
            .map_err(|_| Error::State("dropout upstream gradient has the wrong shape".into()))
    }
}

/// Standalone elementwise activation.
#[derive(Clone, Debug)]
pub struct ActivationLayer {
    pub function: Activation,
    cache: Option<Tensor>,
}

impl ActivationLayer {
    pub fn new(function: Activation) -> Self {
        ActivationLayer {
            function,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let f = self.function;
        let y = x.map(|v| f.apply(v));
        self.cache = (mode == Mode::Train).then(|| y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let y = self.cache.take().ok_or_else(|| missing_cache("activation"))?;
        check_grad_shape("activation", dy, &y)?;
        let mut dx = dy.clone();
        self.function.backward_in_place(&mut dx, &y);
        Ok(dx)
    }
}
