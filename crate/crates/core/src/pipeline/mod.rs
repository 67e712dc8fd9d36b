//! Model builders, the training loop, cross-validation and the three filter
//! workflows: feature selection, neuron pruning and kernel pruning.

pub mod attention;
pub mod builders;
pub mod cv;
pub mod prune;
pub mod select;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bsf::{percentile, rank_importances};
use crate::error::{Error, Result};

pub use attention::{attention_map, center_contrast, AttentionReport, CenterContrast};
pub use builders::{build_cnn, build_cnn_with, build_mlp, build_mlp_with_widths, mlp_hidden_widths, CnnConfig};
pub use cv::{fold_assignment, kfold_cv, CvReport, FoldResult};
pub use prune::{
    kernel_pruning, neuron_pruning, prune_kernels, prune_neurons, prune_structure, KernelPruneReport,
    NeuronPruneReport, PruneSummary,
};
pub use select::{select_features, select_features_with_network, SelectionReport};
pub use train::{evaluate, fine_tune, train, EpochRecord, RunReport, TrainConfig};

/// Rule deciding which filter units survive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PruneThreshold {
    /// Keep units with `w >= w_min`.
    Absolute(f64),
    /// Keep units strictly above the `p`-th (linearly interpolated) percentile.
    Percentile(f64),
    /// Keep the `k` highest-ranked units.
    TopK(usize),
}

impl Default for PruneThreshold {
    fn default() -> Self {
        PruneThreshold::Absolute(0.5)
    }
}

impl PruneThreshold {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PruneThreshold::Absolute(w) => (0.0..=1.0).contains(&w),
            PruneThreshold::Percentile(p) => p > 0.0 && p < 100.0,
            PruneThreshold::TopK(k) => k >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "invalid threshold {self}: need abs in [0,1], pct in (0,100) or topk >= 1"
            )))
        }
    }

    /// Per-unit keep flags for the weights `w`.
    pub fn keep_mask(&self, w: &[f64]) -> Vec<bool> {
        match *self {
            PruneThreshold::Absolute(w_min) => w.iter().map(|&v| v >= w_min).collect(),
            PruneThreshold::Percentile(p) => {
                let cut = percentile(w, p);
                w.iter().map(|&v| v > cut).collect()
            }
            PruneThreshold::TopK(k) => {
                let mut keep = vec![false; w.len()];
                for (i, _) in rank_importances(w).into_iter().take(k) {
                    keep[i] = true;
                }
                keep
            }
        }
    }

    /// Indices kept by [`keep_mask`](Self::keep_mask), ascending.
    pub fn kept_indices(&self, w: &[f64]) -> Vec<usize> {
        self.keep_mask(w)
            .into_iter()
            .enumerate()
            .filter_map(|(i, k)| k.then_some(i))
            .collect()
    }
}

impl fmt::Display for PruneThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PruneThreshold::Absolute(w) => write!(f, "abs:{w}"),
            PruneThreshold::Percentile(p) => write!(f, "pct:{p}"),
            PruneThreshold::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

impl FromStr for PruneThreshold {
    type Err = Error;

    /// Parses `abs:<w>`, `pct:<p>` or `topk:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("threshold {s:?} is not abs:<w>, pct:<p> or topk:<k>"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let t = match kind {
            "abs" => PruneThreshold::Absolute(value.parse().map_err(|_| bad())?),
            "pct" => PruneThreshold::Percentile(value.parse().map_err(|_| bad())?),
            "topk" => PruneThreshold::TopK(value.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        t.validate()?;
        Ok(t)
    }
}
