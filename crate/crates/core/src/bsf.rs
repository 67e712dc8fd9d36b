//! Binary stochastic filtering.
//!
//! A filter holds one pass probability `w_i ∈ [0, 1]` per gated unit. In
//! training each unit passes its input unchanged when a fresh uniform draw
//! `z < w_i` and outputs zero otherwise, so the gate is `b ~ Bernoulli(w_i)`.
//! Gradients use the straight-through rule: the gate is treated as the
//! identity with respect to its input, and its indicator is given unit
//! derivative with respect to `w_i`, so `∂L/∂w_i = Σ grad_y · x`. At
//! evaluation time the filter outputs its expectation `w ⊙ x`.
//!
//! Element mode gates every scalar of a sample (input features or hidden
//! neurons); channel mode gates whole feature maps of a `[c, h, w]` sample.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::l1_term;
use crate::nn::optim::Param;
use crate::nn::Mode;
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsfMode {
    Element,
    Channel,
}

/// Sampled gates, `[batch, units]`, every entry exactly 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BsfMask(pub Tensor);

#[derive(Clone, Debug)]
struct BsfCache {
    input: Tensor,
    mask: BsfMask,
}

/// A filter layer: its pass probabilities, gating mode and L1 coefficient.
#[derive(Clone, Debug)]
pub struct Bsf {
    pub weights: Param,
    pub mode: BsfMode,
    pub l1_coef: f64,
    /// Height and width when the gated units form an image, for snapshots.
    pub grid: Option<(usize, usize)>,
    cache: Option<BsfCache>,
}

impl Bsf {
    /// Filter with every pass probability at 1.
    pub fn new(mode: BsfMode, units: usize) -> Self {
        Self::from_weights(mode, Tensor::full(&[units], 1.0))
    }

    pub fn element(units: usize) -> Self {
        Self::new(BsfMode::Element, units)
    }

    pub fn channel(channels: usize) -> Self {
        Self::new(BsfMode::Channel, channels)
    }

    pub fn from_weights(mode: BsfMode, weights: Tensor) -> Self {
        let weights = Tensor::vector(weights.into_data());
        Bsf {
            weights: Param::new(weights),
            mode,
            l1_coef: 0.0,
            grid: None,
            cache: None,
        }
    }

    pub fn with_grid(mut self, height: usize, width: usize) -> Self {
        self.grid = Some((height, width));
        self
    }

    pub fn units(&self) -> usize {
        self.weights.value.len()
    }

    pub fn w(&self) -> &[f64] {
        self.weights.value.data()
    }

    pub fn set_w(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.units() {
            return Err(Error::Dimension {
                op: "bsf weights",
                lhs: vec![self.units()],
                rhs: vec![w.len()],
            });
        }
        self.weights.value.data_mut().copy_from_slice(w);
        Ok(())
    }

    /// Per-sample output shape (the filter never changes shape).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let gated = match self.mode {
            BsfMode::Element => input.iter().product(),
            BsfMode::Channel if input.len() == 3 => input[0],
            BsfMode::Channel => {
                return Err(Error::Input(format!(
                    "channel filter needs [c, h, w] inputs, got {input:?}"
                )))
            }
        };
        if gated != self.units() {
            return Err(Error::Input(format!(
                "filter has {} units but its input {input:?} gates {gated}",
                self.units()
            )));
        }
        Ok(input.to_vec())
    }

    /// Elements sharing one gate (1 in element mode, `h·w` in channel mode).
    fn span(&self, x: &Tensor) -> usize {
        match self.mode {
            BsfMode::Element => 1,
            BsfMode::Channel => x.row_len() / self.units().max(1),
        }
    }

    /// Stateless gate application, returning the output and the sampled mask.
    pub fn gate(&self, x: &Tensor, mode: Mode, rng: &mut RngStream) -> Result<(Tensor, BsfMask)> {
        if x.rank() < 2 {
            return Err(Error::Input(format!("filter expects batched input, got {:?}", x.shape())));
        }
        self.output_shape(&x.shape()[1..])?;
        let (b, units, span) = (x.rows(), self.units(), self.span(x));
        let w = self.w();
        let mut y = x.clone();
        let mask = match mode {
            Mode::Train => {
                let mut mask = Tensor::zeros(&[b, units]);
                for (s, m) in mask.data_mut().chunks_exact_mut(units.max(1)).enumerate() {
                    for (i, mi) in m.iter_mut().enumerate() {
                        *mi = if rng.next_f64() < w[i] { 1.0 } else { 0.0 };
                    }
                    let row = &mut y.data_mut()[s * units * span..(s + 1) * units * span];
                    for (chunk, &mi) in row.chunks_exact_mut(span).zip(m.iter()) {
                        if mi == 0.0 {
                            chunk.fill(0.0);
                        }
                    }
                }
                mask
            }
            Mode::Eval => {
                for row in y.data_mut().chunks_exact_mut(units * span) {
                    for (chunk, &wi) in row.chunks_exact_mut(span).zip(w) {
                        chunk.iter_mut().for_each(|v| *v *= wi);
                    }
                }
                Tensor::full(&[b, units], 1.0)
            }
        };
        Ok((y, BsfMask(mask)))
    }

    /// Straight-through gradients: `grad_x = grad_y`, and for each unit
    /// `grad_w = Σ grad_y · x + l1·sign(w)` summed over the batch (and the
    /// map's spatial positions in channel mode).
    pub fn gradients(&self, grad_y: &Tensor, x: &Tensor, mask: &BsfMask) -> Result<(Tensor, Tensor)> {
        if grad_y.shape() != x.shape() || mask.0.shape() != [x.rows(), self.units()] {
            return Err(Error::State(format!(
                "filter backward shapes disagree: grad {:?}, input {:?}, mask {:?}",
                grad_y.shape(),
                x.shape(),
                mask.0.shape()
            )));
        }
        let (units, span) = (self.units(), self.span(x));
        let (_, mut grad_w) = l1_term(&self.weights.value, self.l1_coef);
        let mut data = vec![0.0; units];
        for (gy, xs) in grad_y
            .data()
            .chunks_exact(units * span)
            .zip(x.data().chunks_exact(units * span))
        {
            for (i, acc) in data.iter_mut().enumerate() {
                let r = i * span..(i + 1) * span;
                *acc += gy[r.clone()].iter().zip(&xs[r]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for (g, d) in grad_w.data_mut().iter_mut().zip(data) {
            *g += d;
        }
        Ok((grad_y.clone(), grad_w))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut RngStream) -> Result<Tensor> {
        let (y, mask) = self.gate(x, mode, rng)?;
        self.cache = (mode == Mode::Train).then(|| BsfCache {
            input: x.clone(),
            mask,
        });
        Ok(y)
    }

    /// Mask sampled by the last train-mode forward, if still cached.
    pub fn last_mask(&self) -> Option<&BsfMask> {
        self.cache.as_ref().map(|c| &c.mask)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::State("filter backward called without a preceding train-mode forward".into())
        })?;
        let (dx, dw) = self.gradients(dy, &cache.input, &cache.mask)?;
        self.weights.grad = dw;
        Ok(dx)
    }

    /// Projects every weight back onto `[0, 1]`.
    pub fn clamp_weights(&mut self) {
        self.weights
            .value
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = w.clamp(0.0, 1.0));
    }

    pub fn penalty(&self) -> f64 {
        l1_term(&self.weights.value, self.l1_coef).0
    }

    /// Units ranked by descending weight, ties by ascending index.
    pub fn importances(&self) -> Vec<(usize, f64)> {
        rank_importances(self.w())
    }
}

pub fn rank_importances(w: &[f64]) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = w.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Linearly interpolated percentile (`p` in `[0, 100]`) of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Ranked entries whose weight lies strictly above the `p`-th percentile.
pub fn above_percentile(w: &[f64], p: f64) -> Vec<(usize, f64)> {
    let cut = percentile(w, p);
    rank_importances(w).into_iter().filter(|&(_, v)| v > cut).collect()
}

/// How a snapshot's weights are arranged for display.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Layout {
    Vector { len: usize },
    Grid { height: usize, width: usize },
}

impl Layout {
    pub fn len(&self) -> usize {
        match *self {
            Layout::Vector { len } => len,
            Layout::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Layout::Vector { len } => (1, len),
            Layout::Grid { height, width } => (height, width),
        }
    }
}

/// Filter weights captured at the end of an epoch. When a network has
/// several filters their weights are concatenated in layer order;
/// `segments` lists `(layer index, unit count)` for each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsfSnapshot {
    pub epoch: usize,
    pub layout: Layout,
    pub segments: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
}

/// Writes snapshots as CSV: a header `epoch,height,width,w_0,...` and one row per snapshot.
pub fn write_snapshot_csv<W: Write>(mut out: W, snapshots: &[BsfSnapshot]) -> std::io::Result<()> {
    let n = snapshots.first().map_or(0, |s| s.weights.len());
    let mut header = String::from("epoch,height,width");
    for i in 0..n {
        header.push_str(&format!(",w_{i}"));
    }
    writeln!(out, "{header}")?;
    for s in snapshots {
        let (h, w) = s.layout.dims();
        let mut line = format!("{},{h},{w}", s.epoch);
        for v in &s.weights {
            line.push_str(&format!(",{v}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
