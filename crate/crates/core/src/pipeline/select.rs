use serde::{Deserialize, Serialize};

use super::builders::build_mlp;
use super::cv::{kfold_cv, CvReport};
use super::train::{train, RunReport, TrainConfig};
use super::PruneThreshold;
use crate::data::{silhouette_coefficient, Dataset};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{streams, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub threshold: PruneThreshold,
    /// All features as `(index, weight)`, most important first.
    pub ranking: Vec<(usize, f64)>,
    /// Kept feature indices in their original column order.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub filter_run: RunReport,
    pub original_cv: Option<CvReport>,
    pub truncated_cv: Option<CvReport>,
    pub silhouette_original: Option<f64>,
    pub silhouette_truncated: Option<f64>,
}

/// Ranks features with an input-filter perceptron and truncates the dataset.
///
/// The filter network is trained on the standardized data with
/// `cfg.l1_coef > 0`; the returned dataset holds the kept columns of the
/// *unstandardized* input. With `folds = Some(k)` a plain perceptron is
/// cross-validated on both the original and truncated data, and class
/// silhouettes of both (standardized) are recorded.
pub fn select_features(
    data: &Dataset,
    cfg: &TrainConfig,
    threshold: PruneThreshold,
    folds: Option<usize>,
) -> Result<(Vec<usize>, Dataset, SelectionReport)> {
    select_features_with_network(data, cfg, threshold, folds).map(|(idx, ds, report, _)| (idx, ds, report))
}

/// Like [`select_features`], additionally returning the trained
/// input-filter network (which expects standardized inputs).
pub fn select_features_with_network(
    data: &Dataset,
    cfg: &TrainConfig,
    threshold: PruneThreshold,
    folds: Option<usize>,
) -> Result<(Vec<usize>, Dataset, SelectionReport, Network)> {
    threshold.validate()?;
    if !data.is_tabular() {
        return Err(Error::Input("feature selection needs tabular data".into()));
    }
    if !(cfg.l1_coef > 0.0) {
        return Err(Error::Input("feature selection needs an l1 coefficient > 0".into()));
    }
    let standardized = data.standardize()?;
    let d = data.n_features();
    let mut init = RngStream::new(cfg.seed, streams::INIT);
    let mut net = build_mlp(d, data.n_classes, true, false, &mut init)?;
    let filter_run = train(&mut net, &standardized, cfg, None)?;
    let filter = net.bsf_layers().next().expect("input filter present");
    let ranking = filter.importances();
    let selected = threshold.kept_indices(filter.w());
    if selected.is_empty() {
        return Err(Error::Selection(format!("threshold {threshold} keeps no features")));
    }
    let truncated = data.select_features(&selected)?;

    let (mut original_cv, mut truncated_cv) = (None, None);
    let (mut silhouette_original, mut silhouette_truncated) = (None, None);
    if let Some(k) = folds {
        let plain = |tr: &Dataset, rng: &mut RngStream| build_mlp(tr.n_features(), tr.n_classes, false, false, rng);
        original_cv = Some(kfold_cv(data, k, plain, cfg)?);
        truncated_cv = Some(kfold_cv(&truncated, k, plain, cfg)?);
        silhouette_original = Some(silhouette_coefficient(&standardized.features, &data.labels)?);
        let std_trunc = truncated.standardize()?;
        silhouette_truncated = Some(silhouette_coefficient(&std_trunc.features, &data.labels)?);
    }
    let report = SelectionReport {
        threshold,
        ranking,
        selected_names: truncated.feature_names.clone(),
        selected: selected.clone(),
        filter_run,
        original_cv,
        truncated_cv,
        silhouette_original,
        silhouette_truncated,
    };
    Ok((selected, truncated, report, net))
}
