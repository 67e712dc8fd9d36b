use serde::{Deserialize, Serialize};

use crate::bsf::BsfSnapshot;
use crate::data::{accuracy, Dataset};
use crate::error::{Error, Result};
use crate::nn::loss::loss_and_grad;
use crate::nn::{AdamConfig, Mode, Network};
use crate::rng::{streams, RngStream};
use crate::tensor::argmax;

/// Chunk size for evaluation-mode passes.
pub const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a training-loss improvement of at least `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub l1_coef: f64,
    pub seed: u64,
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            patience: 20,
            min_delta: 1e-5,
            batch_size: 32,
            adam: AdamConfig::default(),
            l1_coef: 0.0,
            seed: 0,
            snapshot_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.max_epochs == 0 || self.patience == 0 || self.snapshot_every == 0 || self.batch_size == 0 {
            return Err(Error::Input(
                "max_epochs, patience, batch_size and snapshot_every must all be at least 1".into(),
            ));
        }
        if !(self.l1_coef >= 0.0) {
            return Err(Error::Input(format!("l1 coefficient {} must be >= 0", self.l1_coef)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches plus the filter penalty at epoch end.
    pub train_loss: f64,
    /// Accuracy of the train-mode (stochastic) predictions made during the epoch.
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

/// History and filter snapshots of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub history: Vec<EpochRecord>,
    pub bsf_snapshots: Vec<BsfSnapshot>,
}

impl RunReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_loss)
    }

    pub fn epochs(&self) -> usize {
        self.history.len()
    }
}

fn check_input(net: &Network, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    if data.sample_shape() != net.input_shape() {
        return Err(Error::config(
            0,
            format!(
                "dataset samples {:?} do not match network input {:?}",
                data.sample_shape(),
                net.input_shape()
            ),
        ));
    }
    if data.n_classes != net.n_classes() {
        return Err(Error::config(
            net.layers().len() - 1,
            format!(
                "dataset has {} classes, network predicts {}",
                data.n_classes,
                net.n_classes()
            ),
        ));
    }
    Ok(())
}

/// Eval-mode accuracy on a dataset.
pub fn evaluate(net: &mut Network, data: &Dataset) -> Result<f64> {
    let probs = net.predict(&data.features, EVAL_CHUNK)?;
    accuracy(&probs, &data.labels)
}

/// Mini-batch Adam training with per-epoch shuffling.
///
/// Every filter layer gets `cfg.l1_coef` as its penalty, and filter weights
/// are clamped to `[0, 1]` after each step. Training stops after
/// `max_epochs` or once the epoch loss has failed to improve by `min_delta`
/// for `patience` consecutive epochs.
pub fn train(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<RunReport> {
    cfg.validate()?;
    check_input(net, data)?;
    if let Some(v) = validation {
        check_input(net, v)?;
    }
    net.set_l1(cfg.l1_coef);
    run_epochs(net, data, cfg, validation)
}

fn run_epochs(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<RunReport> {
    let targets = data.one_hot();
    let n = data.len();
    let mut shuffle_rng = RngStream::new(cfg.seed, streams::SHUFFLE);
    let mut forward_rng = RngStream::new(cfg.seed, streams::FORWARD);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = RunReport::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.features.select_rows(batch);
            let y = targets.select_rows(batch);
            let probs = net.forward(&x, Mode::Train, &mut forward_rng)?;
            let (loss, dprobs) = loss_and_grad(&probs, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            net.backward(&dprobs)?;
            net.adam_step(&cfg.adam);
            loss_sum += loss * batch.len() as f64;
            correct += batch
                .iter()
                .enumerate()
                .filter(|&(r, &i)| argmax(probs.row(r)) == data.labels[i])
                .count();
        }
        let loss = loss_sum / n as f64 + net.l1_penalty();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        let validation_accuracy = validation.map(|v| evaluate(net, v)).transpose()?;
        report.history.push(EpochRecord {
            epoch,
            train_loss: loss,
            train_accuracy: correct as f64 / n as f64,
            validation_accuracy,
        });
        log::debug!("epoch {epoch}: loss {loss:.6} acc {:.4}", correct as f64 / n as f64);
        if epoch % cfg.snapshot_every == 0 {
            report.bsf_snapshots.extend(net.bsf_snapshot(epoch));
        }
        if loss < best - cfg.min_delta {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(report)
}

/// Continues training at a tenth of `cfg.adam.alpha` with no filter penalty
/// and fresh optimizer state. Zero epochs leaves the network untouched.
pub fn fine_tune(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<RunReport> {
    if cfg.max_epochs == 0 {
        return Ok(RunReport::default());
    }
    let tuned = TrainConfig {
        adam: cfg.adam.with_alpha(cfg.adam.alpha / 10.0),
        l1_coef: 0.0,
        ..cfg.clone()
    };
    net.reset_optimizer();
    train(net, data, &tuned, validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::builders::{build_mlp, build_mlp_with_widths};
    use crate::tensor::Tensor;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 0);
        let mut data = vec![];
        let mut labels = vec![];
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            data.push(centre + rng.next_f64() - 0.5);
            data.push(rng.next_f64() - 0.5);
            labels.push(c);
        }
        Dataset::new(Tensor::new(vec![n, 2], data).unwrap(), labels, 2).unwrap()
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut rng = RngStream::new(0, 0);
        let mut net = build_mlp(2, 2, false, false, &mut rng).unwrap();
        let empty = Dataset {
            features: Tensor::zeros(&[0, 2]),
            labels: vec![],
            n_classes: 2,
            feature_names: vec![],
            class_names: vec![],
            standardization: None,
        };
        assert!(matches!(
            train(&mut net, &empty, &TrainConfig::default(), None),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = RngStream::new(0, 0);
        let mut net = build_mlp(2, 2, false, false, &mut rng).unwrap();
        let mut data = blobs(8, 1);
        data.features.data_mut()[0] = f64::NAN;
        let err = train(&mut net, &data, &TrainConfig::default(), None);
        assert!(matches!(err, Err(Error::Divergence { epoch: 1, .. })), "{err:?}");
    }

    #[test]
    fn learns_separable_blobs_and_snapshots() {
        let mut rng = RngStream::new(3, 0);
        let mut net = build_mlp_with_widths(2, &[16, 16], 2, true, false, &mut rng).unwrap();
        let data = blobs(64, 2);
        let cfg = TrainConfig {
            max_epochs: 40,
            snapshot_every: 5,
            l1_coef: 0.01,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &data, &cfg, Some(&data)).unwrap();
        assert_eq!(report.history.last().unwrap().validation_accuracy, Some(1.0));
        let epochs: Vec<usize> = report.bsf_snapshots.iter().map(|s| s.epoch).collect();
        assert_eq!(epochs, (1..=report.epochs() / 5).map(|k| 5 * k).collect::<Vec<_>>());
        assert!(report.history.windows(2).all(|w| w[0].epoch < w[1].epoch));
    }

    #[test]
    fn zero_epoch_fine_tune_is_a_no_op() {
        let mut rng = RngStream::new(3, 0);
        let mut net = build_mlp(2, 2, false, false, &mut rng).unwrap();
        let before = net.to_json();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let report = fine_tune(&mut net, &blobs(8, 1), &cfg, None).unwrap();
        assert!(report.history.is_empty());
        assert_eq!(net.to_json(), before);
    }
}
