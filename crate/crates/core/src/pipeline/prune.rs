//! Structural removal of gated units.
//!
//! A filter layer gates the outputs of the nearest preceding Dense or Conv2d
//! layer (its *producer*), looking through activation, dropout and pooling
//! layers. Pruning a unit deletes the producer's output column (or kernel)
//! and bias entry, and the matching input rows (or input-channel slices) of
//! the next Dense or Conv2d layer (its *consumer*). Across a Flatten each
//! pruned channel removes its whole `h·w` block of consumer rows.

use serde::{Deserialize, Serialize};

use super::builders::{build_cnn, build_mlp, build_mlp_with_widths};
use super::cv::{kfold_cv, CvReport};
use super::train::{evaluate, fine_tune, train, RunReport, TrainConfig};
use super::PruneThreshold;
use crate::bsf::BsfMode;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, Dense, Layer, Network};
use crate::rng::{streams, RngStream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPrune {
    /// Index of the filter layer in the original network.
    pub filter: usize,
    /// Index of the gated Dense/Conv2d layer, `None` for an input filter.
    pub producer: Option<usize>,
    pub units_before: usize,
    pub kept: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub threshold: PruneThreshold,
    pub layers: Vec<LayerPrune>,
    /// Dense neurons plus convolution kernels.
    pub units_before: usize,
    pub units_after: usize,
    /// Weights and biases outside the filter layers.
    pub weights_before: usize,
    pub weights_after: usize,
}

impl PruneSummary {
    pub fn weight_reduction(&self) -> f64 {
        self.weights_before as f64 / self.weights_after as f64
    }
}

/// Copies the entries of `t` whose index along `axis` is in `keep`.
fn slice_axis(t: &Tensor, axis: usize, keep: &[usize]) -> Tensor {
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let dim = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * keep.len() * inner);
    for o in 0..outer {
        for &k in keep {
            let start = (o * dim + k) * inner;
            data.extend_from_slice(&t.data()[start..start + inner]);
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = keep.len();
    Tensor::new(new_shape, data).expect("sliced shape matches data")
}

/// Multiplies the entries at index `j` along `axis` by `scale[j]`.
fn scale_axis(t: &mut Tensor, axis: usize, scale: &[f64]) {
    let shape = t.shape().to_vec();
    let dim = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v *= scale[(i / inner) % dim];
    }
}

fn positively_homogeneous(a: Activation) -> bool {
    matches!(a, Activation::Identity | Activation::Relu)
}

fn pruning_error(filter: usize, msg: impl std::fmt::Display) -> Error {
    Error::Pruning(format!("filter at layer {filter}: {msg}"))
}

/// Removes every unit its filter does not keep, then strips all filters.
///
/// Surviving parameters are copied unchanged, except that with
/// `fold_gates` each kept unit's incoming weights and bias are multiplied
/// by its pass probability when the path from producer to filter is
/// positively homogeneous (ReLU/identity, pooling, dropout). Since
/// `relu(w·z) = w·relu(z)` for `w >= 0`, the pruned network then computes
/// the same eval-mode function as the filtered one restricted to kept units.
pub fn prune_structure(net: &Network, threshold: PruneThreshold, fold_gates: bool) -> Result<(Network, PruneSummary)> {
    threshold.validate()?;
    let original = net.layers();
    let mut inputs = vec![net.input_shape().to_vec()];
    inputs.extend(net.shapes());
    let mut layers: Vec<Layer> = original.to_vec();
    let mut report = vec![];

    for (i, layer) in original.iter().enumerate() {
        let Some(filter) = layer.as_bsf() else { continue };
        let n = filter.units();
        let kept = threshold.kept_indices(filter.w());
        if kept.is_empty() {
            return Err(pruning_error(
                i,
                format!("threshold {threshold} removes all {n} units; use a weaker threshold"),
            ));
        }

        let mut homogeneous = true;
        let mut producer = None;
        for j in (0..i).rev() {
            match &original[j] {
                Layer::Activation(a) => homogeneous &= positively_homogeneous(a.function),
                Layer::Dropout(_) | Layer::MaxPool(_) => {}
                Layer::Dense(d) => {
                    homogeneous &= positively_homogeneous(d.activation);
                    producer = Some(j);
                    break;
                }
                Layer::Conv2d(c) => {
                    homogeneous &= positively_homogeneous(c.activation);
                    producer = Some(j);
                    break;
                }
                other => return Err(pruning_error(i, format!("cannot prune through a {} layer", other.kind()))),
            }
        }
        let Some(p) = producer else {
            if kept.len() != n {
                return Err(pruning_error(
                    i,
                    "it gates the network input, which pruning cannot remove; use feature selection",
                ));
            }
            report.push(LayerPrune {
                filter: i,
                producer: None,
                units_before: n,
                kept,
            });
            continue;
        };
        let w: Vec<f64> = kept.iter().map(|&k| filter.w()[k]).collect();
        match (&mut layers[p], filter.mode) {
            (Layer::Dense(d), BsfMode::Element) if d.outputs() == n => {
                let mut weights = slice_axis(&d.weights.value, 1, &kept);
                let mut bias = slice_axis(&d.bias.value, 0, &kept);
                if fold_gates && homogeneous {
                    scale_axis(&mut weights, 1, &w);
                    scale_axis(&mut bias, 0, &w);
                }
                *d = Dense::from_parts(weights, bias, d.activation)?;
            }
            (Layer::Conv2d(c), BsfMode::Channel) if c.n_kernels() == n => {
                let mut kernels = slice_axis(&c.kernels.value, 0, &kept);
                let mut bias = slice_axis(&c.bias.value, 0, &kept);
                if fold_gates && homogeneous {
                    scale_axis(&mut kernels, 0, &w);
                    scale_axis(&mut bias, 0, &w);
                }
                *c = Conv2d::from_parts(kernels, bias, c.activation)?;
            }
            (other, mode) => {
                return Err(pruning_error(
                    i,
                    format!("a {mode:?} filter of {n} units cannot gate a {} layer", other.kind()),
                ))
            }
        }

        let mut rows = kept.clone();
        let mut consumed = false;
        for j in i + 1..original.len() {
            match &mut layers[j] {
                Layer::Activation(_) | Layer::Dropout(_) | Layer::MaxPool(_) => {}
                Layer::Flatten(_) => {
                    let block: usize = inputs[j][1..].iter().product();
                    rows = rows.iter().flat_map(|&c| c * block..(c + 1) * block).collect();
                }
                Layer::Dense(d) => {
                    let weights = slice_axis(&d.weights.value, 0, &rows);
                    *d = Dense::from_parts(weights, d.bias.value.clone(), d.activation)?;
                    consumed = true;
                    break;
                }
                Layer::Conv2d(c) if rows.len() == kept.len() => {
                    let kernels = slice_axis(&c.kernels.value, 1, &kept);
                    *c = Conv2d::from_parts(kernels, c.bias.value.clone(), c.activation)?;
                    consumed = true;
                    break;
                }
                other => return Err(pruning_error(i, format!("cannot prune through a {} layer", other.kind()))),
            }
        }
        if !consumed {
            return Err(pruning_error(i, "no following Dense or Conv2d layer consumes the gated units"));
        }
        report.push(LayerPrune {
            filter: i,
            producer: Some(p),
            units_before: n,
            kept,
        });
    }

    layers.retain(|l| l.as_bsf().is_none());
    let pruned = Network::new(net.input_shape().to_vec(), layers)?;
    let summary = PruneSummary {
        threshold,
        layers: report,
        units_before: net.unit_count(),
        units_after: pruned.unit_count(),
        weights_before: net.weight_count(),
        weights_after: pruned.weight_count(),
    };
    Ok((pruned, summary))
}

/// Neuron pruning: drops gated hidden units and returns a freshly
/// initialized network of the reduced shape, ready for retraining.
pub fn prune_neurons(net: &Network, threshold: PruneThreshold, rng: &mut RngStream) -> Result<(Network, PruneSummary)> {
    if !net.has_bsf() {
        return Err(Error::Pruning("network has no filter layers to prune by".into()));
    }
    let (mut pruned, summary) = prune_structure(net, threshold, false)?;
    pruned.reinitialize(rng);
    Ok((pruned, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPruneReport {
    pub summary: PruneSummary,
    /// Length of the serialized model before (with filters) and after pruning.
    pub bytes_before: usize,
    pub bytes_after: usize,
    pub filter_run: Option<RunReport>,
    pub fine_tune_run: RunReport,
    pub accuracy_before: Option<f64>,
    /// Accuracy right after pruning, before fine-tuning.
    pub accuracy_pruned: Option<f64>,
    pub accuracy_after: Option<f64>,
}

/// Kernel pruning: drops gated convolution kernels, keeps the surviving
/// weights (with gate folding) and fine-tunes at a tenth of the learning rate.
pub fn prune_kernels(
    net: &Network,
    threshold: PruneThreshold,
    data: &Dataset,
    ft_cfg: &TrainConfig,
    test: Option<&Dataset>,
) -> Result<(Network, KernelPruneReport)> {
    if !net.layers().iter().any(|l| matches!(l, Layer::Bsf(b) if b.mode == BsfMode::Channel)) {
        return Err(Error::Pruning("network has no channel filters to prune by".into()));
    }
    let (mut pruned, summary) = prune_structure(net, threshold, true)?;
    let mut original = net.clone();
    let accuracy_before = test.map(|t| evaluate(&mut original, t)).transpose()?;
    let accuracy_pruned = test.map(|t| evaluate(&mut pruned, t)).transpose()?;
    let fine_tune_run = fine_tune(&mut pruned, data, ft_cfg, None)?;
    let accuracy_after = test.map(|t| evaluate(&mut pruned, t)).transpose()?;
    let report = KernelPruneReport {
        summary,
        bytes_before: net.to_json().len(),
        bytes_after: pruned.to_json().len(),
        filter_run: None,
        fine_tune_run,
        accuracy_before,
        accuracy_pruned,
        accuracy_after,
    };
    Ok((pruned, report))
}

/// End-to-end kernel pruning on image data: trains a channel-filtered
/// convolutional classifier for `train_cfg.max_epochs`, prunes, and
/// fine-tunes for `ft_cfg.max_epochs`, evaluating on `test`.
pub fn kernel_pruning(
    train_data: &Dataset,
    test: &Dataset,
    train_cfg: &TrainConfig,
    ft_cfg: &TrainConfig,
    threshold: PruneThreshold,
) -> Result<(Network, KernelPruneReport)> {
    let shape: [usize; 3] = train_data
        .sample_shape()
        .try_into()
        .map_err(|_| Error::Input("kernel pruning needs [c, h, w] image samples".into()))?;
    let mut init = RngStream::new(train_cfg.seed, streams::INIT);
    let mut net = build_cnn(shape, train_data.n_classes, false, true, &mut init)?;
    let filter_run = train(&mut net, train_data, train_cfg, None)?;
    let (pruned, mut report) = prune_kernels(&net, threshold, train_data, ft_cfg, Some(test))?;
    report.filter_run = Some(filter_run);
    Ok((pruned, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronPruneReport {
    pub summary: PruneSummary,
    pub hidden_before: Vec<usize>,
    pub hidden_after: Vec<usize>,
    pub filter_run: RunReport,
    pub original_cv: Option<CvReport>,
    pub pruned_cv: Option<CvReport>,
}

fn hidden_widths(net: &Network) -> Vec<usize> {
    let mut widths: Vec<usize> = net
        .layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Dense(d) => Some(d.outputs()),
            _ => None,
        })
        .collect();
    widths.pop();
    widths
}

/// End-to-end neuron pruning on tabular data: trains a perceptron with a
/// filter after every hidden layer on the standardized data, prunes, and
/// (with `folds`) cross-validates freshly initialized networks of the
/// original and pruned shapes.
pub fn neuron_pruning(
    data: &Dataset,
    cfg: &TrainConfig,
    threshold: PruneThreshold,
    folds: Option<usize>,
) -> Result<(Network, NeuronPruneReport)> {
    if !data.is_tabular() {
        return Err(Error::Input("neuron pruning needs tabular data".into()));
    }
    let d = data.n_features();
    let standardized = data.standardize()?;
    let mut init = RngStream::new(cfg.seed, streams::INIT);
    let mut net = build_mlp(d, data.n_classes, false, true, &mut init)?;
    let filter_run = train(&mut net, &standardized, cfg, None)?;
    let (pruned, summary) = prune_neurons(&net, threshold, &mut init)?;
    let hidden_before = hidden_widths(&net);
    let hidden_after = hidden_widths(&pruned);
    let (mut original_cv, mut pruned_cv) = (None, None);
    if let Some(k) = folds {
        let plain_cfg = TrainConfig { l1_coef: 0.0, ..cfg.clone() };
        original_cv = Some(kfold_cv(
            data,
            k,
            |tr: &Dataset, rng: &mut RngStream| build_mlp_with_widths(d, &hidden_before, tr.n_classes, false, false, rng),
            &plain_cfg,
        )?);
        pruned_cv = Some(kfold_cv(
            data,
            k,
            |tr: &Dataset, rng: &mut RngStream| build_mlp_with_widths(d, &hidden_after, tr.n_classes, false, false, rng),
            &plain_cfg,
        )?);
    }
    let report = NeuronPruneReport {
        summary,
        hidden_before,
        hidden_after,
        filter_run,
        original_cv,
        pruned_cv,
    };
    Ok((pruned, report))
}
