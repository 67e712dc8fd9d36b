use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::train::{evaluate, train, TrainConfig};
use crate::data::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{derive_seed, streams, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub train_size: usize,
    pub validation_size: usize,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub stratified: bool,
    pub folds: Vec<FoldResult>,
    pub mean_train_accuracy: f64,
    pub mean_validation_accuracy: f64,
}

/// Splits sample indices into `k` validation folds.
///
/// Each class's indices are shuffled and dealt round-robin, continuing
/// where the previous class stopped so fold sizes differ by at most one.
/// If some class has fewer than `k` members the split falls back to
/// dealing a single shuffled list; the returned flag says which was used.
pub fn fold_assignment(labels: &[usize], k: usize, seed: u64) -> Result<(Vec<Vec<usize>>, bool)> {
    if k < 2 || labels.len() < k {
        return Err(Error::Input(format!(
            "{k}-fold cross-validation needs k >= 2 and at least k samples (have {})",
            labels.len()
        )));
    }
    let mut rng = RngStream::new(seed, streams::FOLDS);
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class = vec![vec![]; n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let stratified = by_class.iter().all(|c| c.is_empty() || c.len() >= k);
    let groups = if stratified {
        by_class
    } else {
        log::warn!("a class has fewer than {k} members; using unstratified folds");
        vec![(0..labels.len()).collect()]
    };
    let mut folds = vec![vec![]; k];
    let mut next = 0;
    for mut group in groups {
        rng.shuffle(&mut group);
        for i in group {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok((folds, stratified))
}

/// Seed used for fold `fold` of a run seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(derive_seed(seed, streams::FOLDS), fold as u64)
}

/// Stratified k-fold cross-validation.
///
/// `builder` makes a fresh network for each fold from the fold's training
/// set and an initialization stream. Tabular data is standardized with the
/// training fold's statistics. Folds train concurrently on up to
/// `available_parallelism` threads; results do not depend on scheduling.
pub fn kfold_cv<F>(data: &Dataset, k: usize, builder: F, cfg: &TrainConfig) -> Result<CvReport>
where
    F: Fn(&Dataset, &mut RngStream) -> Result<Network> + Sync,
{
    cfg.validate()?;
    let (folds, stratified) = fold_assignment(&data.labels, k, cfg.seed)?;
    let run_fold = |f: usize| -> Result<FoldResult> {
        let held: &[usize] = &folds[f];
        let rest: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
        let (mut tr, mut va) = (data.subset(&rest), data.subset(held));
        if data.is_tabular() {
            let stats = Standardization::fit(&tr.features)?;
            tr = tr.standardize_with(&stats)?;
            va = va.standardize_with(&stats)?;
        }
        let seed = fold_seed(cfg.seed, f);
        let mut net = builder(&tr, &mut RngStream::new(seed, streams::INIT))?;
        let fold_cfg = TrainConfig { seed, ..cfg.clone() };
        let run = train(&mut net, &tr, &fold_cfg, None)?;
        Ok(FoldResult {
            fold: f,
            seed,
            train_size: tr.len(),
            validation_size: va.len(),
            epochs: run.epochs(),
            train_accuracy: evaluate(&mut net, &tr)?,
            validation_accuracy: evaluate(&mut net, &va)?,
        })
    };

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(k);
    let results: Vec<Mutex<Option<Result<FoldResult>>>> = (0..k).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::Relaxed);
                if f >= k {
                    break;
                }
                let r = run_fold(f);
                *results[f].lock().expect("fold result lock") = Some(r);
            });
        }
    });
    let folds = results
        .into_iter()
        .map(|m| m.into_inner().expect("fold result lock").expect("every fold ran"))
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: fn(&FoldResult) -> f64| folds.iter().map(f).sum::<f64>() / k as f64;
    Ok(CvReport {
        k,
        stratified,
        mean_train_accuracy: mean(|r| r.train_accuracy),
        mean_validation_accuracy: mean(|r| r.validation_accuracy),
        folds,
    })
}
