//! The `bsf` command-line tool.
//!
//! [`run`] executes one parsed command. All outputs are assembled in memory
//! and written at the end, so a failing command leaves nothing behind.

pub mod args;
pub mod frames;
pub mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bsf_core::data::{load_csv, load_idx};
use bsf_core::nn::serial::ModelFile;
use bsf_core::pipeline::{
    attention_map, build_cnn, build_mlp, evaluate, kernel_pruning, kfold_cv, neuron_pruning,
    select_features_with_network, train, CvReport, RunReport, TrainConfig,
};
use bsf_core::rng::streams;
use bsf_core::{BsfSnapshot, Dataset, Layer, Network, RngStream};
use serde_json::{json, Value};

pub use args::{Cli, Command};
use args::{DataArgs, TrainingArgs};
use output::Outputs;

/// Version of the report.json layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid flags or flag combinations; exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    /// Any failure inside the engine or while writing outputs; exit code 1.
    #[error(transparent)]
    Run(#[from] bsf_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Run(bsf_core::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// What a successful command produced.
#[derive(Debug)]
pub struct Outcome {
    /// Human-readable summary table.
    pub summary: String,
    /// Files written, in write order.
    pub written: Vec<PathBuf>,
}

enum Source<'a> {
    Csv(&'a Path),
    Idx(&'a Path, &'a Path),
}

fn data_source(d: &DataArgs) -> Result<Source<'_>, CliError> {
    if d.limit == Some(0) {
        return Err(usage("--limit must be at least 1"));
    }
    match (&d.data, &d.mnist_images, &d.mnist_labels) {
        (Some(path), None, None) => Ok(Source::Csv(path)),
        (None, Some(images), Some(labels)) => {
            if !d.categorical.is_empty() {
                return Err(usage("--categorical only applies to --data CSV files"));
            }
            Ok(Source::Idx(images, labels))
        }
        (None, None, None) => Err(usage("no dataset given: pass --data or --mnist-images with --mnist-labels")),
        (None, _, _) => Err(usage("--mnist-images and --mnist-labels must be given together")),
        (Some(_), _, _) => Err(usage("pass either --data or --mnist-images/--mnist-labels, not both")),
    }
}

fn load(d: &DataArgs, source: Source<'_>) -> Result<Dataset, CliError> {
    Ok(match source {
        Source::Csv(path) => {
            let data = load_csv(path, &d.labels_col, &d.categorical)?;
            match d.limit {
                Some(n) if n < data.len() => data.subset(&(0..n).collect::<Vec<_>>()),
                _ => data,
            }
        }
        Source::Idx(images, labels) => load_idx(images, labels, d.limit)?,
    })
}

fn train_config(t: &TrainingArgs, l1: f64) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        max_epochs: t.epochs,
        patience: t.patience,
        batch_size: t.batch,
        snapshot_every: t.snapshot_every,
        seed: t.seed,
        l1_coef: l1,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn check_folds(k: usize) -> Result<(), CliError> {
    if k < 2 {
        return Err(usage(format!("--folds must be at least 2, got {k}")));
    }
    Ok(())
}

fn dataset_json(d: &DataArgs, data: &Dataset) -> Value {
    let source = match (&d.data, &d.mnist_images) {
        (Some(p), _) => json!({ "csv": p.display().to_string(), "labels_col": d.labels_col }),
        (_, Some(p)) => json!({ "idx_images": p.display().to_string() }),
        _ => Value::Null,
    };
    json!({
        "source": source,
        "samples": data.len(),
        "sample_shape": data.sample_shape(),
        "classes": data.class_names,
        "class_counts": data.class_counts(),
        "feature_names": if data.is_tabular() { json!(data.feature_names) } else { Value::Null },
    })
}

fn config_json(cfg: &TrainConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// A run report without the bulky filter snapshots (those go to model.json
/// and frames/); only the snapshot epochs are kept.
fn run_json(run: &RunReport) -> Value {
    json!({
        "epochs": run.epochs(),
        "final_loss": run.final_loss(),
        "history": run.history,
        "snapshot_epochs": run.bsf_snapshots.iter().map(|s| s.epoch).collect::<Vec<_>>(),
    })
}

fn envelope(command: &str, body: Value) -> String {
    let mut report = json!({ "schema_version": SCHEMA_VERSION, "command": command });
    if let (Value::Object(map), Value::Object(extra)) = (&mut report, body) {
        map.extend(extra);
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    text
}

fn add_frames(outputs: &mut Outputs, snapshots: &[BsfSnapshot]) -> Result<usize, CliError> {
    let frames = frames::frame_set(snapshots)?;
    let n = frames.len();
    for (stem, csv, pgm) in frames {
        outputs.bytes(Path::new("frames").join(format!("{stem}.csv")), csv);
        outputs.bytes(Path::new("frames").join(format!("{stem}.pgm")), pgm);
    }
    Ok(n)
}

fn add_model(outputs: &mut Outputs, net: &Network, history: &[BsfSnapshot]) {
    let mut text = ModelFile::new(net, history).to_json();
    text.push('\n');
    outputs.text("model.json", text);
}

/// Two-column table with a title line.
fn table(title: &str, rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("{title}\n{}\n", "-".repeat(title.len()));
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

fn row(k: &str, v: impl std::fmt::Display) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn acc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
}

fn cv_rows(label: &str, cv: &Option<CvReport>) -> Vec<(String, String)> {
    match cv {
        Some(cv) => vec![
            row(&format!("{label} train accuracy"), format!("{:.4}", cv.mean_train_accuracy)),
            row(&format!("{label} validation accuracy"), format!("{:.4}", cv.mean_validation_accuracy)),
        ],
        None => vec![],
    }
}

fn finish(outputs: Outputs, out: &Path, summary: String) -> Result<Outcome, CliError> {
    let written = outputs.commit(out)?;
    Ok(Outcome { summary, written })
}

/// Runs one command, writing its outputs.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Train(a) => {
            let source = data_source(&a.data)?;
            let cfg = train_config(&a.training, a.l1)?;
            let data = load(&a.data, source)?;
            let mut outputs = Outputs::default();
            let (body, rows, net, run) = if data.is_tabular() {
                let standardized = data.standardize()?;
                let mut init = RngStream::new(cfg.seed, streams::INIT);
                let mut net = build_mlp(data.n_features(), data.n_classes, true, false, &mut init)?;
                let run = train(&mut net, &standardized, &cfg, None)?;
                let accuracy = evaluate(&mut net, &standardized)?;
                let ranking: Vec<Value> = net
                    .bsf_layers()
                    .next()
                    .expect("input filter")
                    .importances()
                    .into_iter()
                    .map(|(i, w)| json!({ "index": i, "name": data.feature_names[i], "weight": w }))
                    .collect();
                let mut rows = vec![row("epochs", run.epochs()), row("train accuracy", format!("{accuracy:.4}"))];
                for r in ranking.iter().take(10) {
                    rows.push(row(
                        &format!("w[{}]", r["name"].as_str().unwrap_or("?")),
                        format!("{:.4}", r["weight"].as_f64().unwrap_or(f64::NAN)),
                    ));
                }
                let body = json!({
                    "train_accuracy": accuracy,
                    "importances": ranking,
                    "standardization": standardized.standardization,
                });
                (body, rows, net, run)
            } else {
                let (mut net, report) = attention_map(&data, &cfg)?;
                let accuracy = evaluate(&mut net, &data)?;
                let rows = vec![
                    row("epochs", report.run.epochs()),
                    row("train accuracy", format!("{accuracy:.4}")),
                    row("center 14x14 mean w", format!("{:.4}", report.contrast.center_mean)),
                    row("outer ring mean w", format!("{:.4}", report.contrast.ring_mean)),
                ];
                let body = json!({
                    "train_accuracy": accuracy,
                    "attention": { "height": report.height, "width": report.width, "contrast": report.contrast },
                });
                (body, rows, net, report.run)
            };
            let mut body = body;
            body["dataset"] = dataset_json(&a.data, &data);
            body["config"] = config_json(&cfg);
            body["run"] = run_json(&run);
            body["frames"] = json!(add_frames(&mut outputs, &run.bsf_snapshots)?);
            add_model(&mut outputs, &net, &run.bsf_snapshots);
            outputs.text("report.json", envelope("train", body));
            finish(outputs, &a.out.out, table("train", &rows))
        }
        Command::Cv(a) => {
            let source = data_source(&a.data)?;
            check_folds(a.folds)?;
            let cfg = train_config(&a.training, 0.0)?;
            let data = load(&a.data, source)?;
            let report = if data.is_tabular() {
                kfold_cv(&data, a.folds, |tr: &Dataset, rng: &mut RngStream| build_mlp(tr.n_features(), tr.n_classes, false, false, rng), &cfg)?
            } else {
                let shape: [usize; 3] = data
                    .sample_shape()
                    .try_into()
                    .map_err(|_| usage("image data must have [c, h, w] samples"))?;
                kfold_cv(&data, a.folds, |tr: &Dataset, rng: &mut RngStream| build_cnn(shape, tr.n_classes, false, false, rng), &cfg)?
            };
            let mut rows = vec![row("folds", report.k), row("stratified", report.stratified)];
            rows.extend(cv_rows("mean", &Some(report.clone())));
            let mut outputs = Outputs::default();
            outputs.text(
                "report.json",
                envelope(
                    "cv",
                    json!({ "dataset": dataset_json(&a.data, &data), "config": config_json(&cfg), "cv": report }),
                ),
            );
            finish(outputs, &a.out.out, table("cross-validation", &rows))
        }
        Command::SelectFeatures(a) => {
            let source = data_source(&a.data)?;
            a.threshold.validate().map_err(|e| usage(e.to_string()))?;
            if let Some(k) = a.folds {
                check_folds(k)?;
            }
            if !(a.l1 > 0.0) {
                return Err(usage("select-features needs --l1 > 0"));
            }
            let cfg = train_config(&a.training, a.l1)?;
            let data = load(&a.data, source)?;
            let (_, truncated, report, net) = select_features_with_network(&data, &cfg, a.threshold, a.folds)?;
            let mut rows = vec![
                row("features", format!("{} -> {}", data.n_features(), report.selected.len())),
                row("selected", report.selected_names.join(", ")),
            ];
            rows.extend(cv_rows("original", &report.original_cv));
            rows.extend(cv_rows("selected", &report.truncated_cv));
            if let (Some(o), Some(t)) = (report.silhouette_original, report.silhouette_truncated) {
                rows.push(row("silhouette original", format!("{o:.4}")));
                rows.push(row("silhouette selected", format!("{t:.4}")));
            }
            let mut outputs = Outputs::default();
            let n_frames = add_frames(&mut outputs, &report.filter_run.bsf_snapshots)?;
            add_model(&mut outputs, &net, &report.filter_run.bsf_snapshots);
            outputs.csv("selected.csv", truncated, &a.data.labels_col);
            let mut selection = serde_json::to_value(&report).expect("report serializes");
            selection["filter_run"] = run_json(&report.filter_run);
            outputs.text(
                "report.json",
                envelope(
                    "select-features",
                    json!({
                        "dataset": dataset_json(&a.data, &data),
                        "config": config_json(&cfg),
                        "selection": selection,
                        "frames": n_frames,
                    }),
                ),
            );
            finish(outputs, &a.out.out, table("feature selection", &rows))
        }
        Command::PruneNeurons(a) => {
            let source = data_source(&a.data)?;
            a.threshold.validate().map_err(|e| usage(e.to_string()))?;
            if let Some(k) = a.folds {
                check_folds(k)?;
            }
            let cfg = train_config(&a.training, a.l1)?;
            let data = load(&a.data, source)?;
            let (mut pruned, report) = neuron_pruning(&data, &cfg, a.threshold, a.folds)?;
            // The pruned shape starts from fresh weights; retrain it without a penalty.
            let standardized = data.standardize()?;
            let retrain = train(&mut pruned, &standardized, &TrainConfig { l1_coef: 0.0, ..cfg.clone() }, None)?;
            let retrain_accuracy = evaluate(&mut pruned, &standardized)?;
            let s = &report.summary;
            let mut rows = vec![
                row("hidden widths", format!("{:?} -> {:?}", report.hidden_before, report.hidden_after)),
                row("units", format!("{} -> {}", s.units_before, s.units_after)),
                row("weights", format!("{} -> {} ({:.2}x)", s.weights_before, s.weights_after, s.weight_reduction())),
                row("retrained train accuracy", format!("{retrain_accuracy:.4}")),
            ];
            rows.extend(cv_rows("original", &report.original_cv));
            rows.extend(cv_rows("pruned", &report.pruned_cv));
            let mut outputs = Outputs::default();
            let n_frames = add_frames(&mut outputs, &report.filter_run.bsf_snapshots)?;
            add_model(&mut outputs, &pruned, &report.filter_run.bsf_snapshots);
            let mut pruning = serde_json::to_value(&report).expect("report serializes");
            pruning["filter_run"] = run_json(&report.filter_run);
            outputs.text(
                "report.json",
                envelope(
                    "prune-neurons",
                    json!({
                        "dataset": dataset_json(&a.data, &data),
                        "config": config_json(&cfg),
                        "pruning": pruning,
                        "retrain": run_json(&retrain),
                        "retrain_accuracy": retrain_accuracy,
                        "standardization": standardized.standardization,
                        "frames": n_frames,
                    }),
                ),
            );
            finish(outputs, &a.out.out, table("neuron pruning", &rows))
        }
        Command::PruneKernels(a) => {
            let source = data_source(&a.data)?;
            if !matches!(source, Source::Idx(..)) {
                return Err(usage("prune-kernels needs image data (--mnist-images/--mnist-labels)"));
            }
            a.threshold.validate().map_err(|e| usage(e.to_string()))?;
            let test_source = match (&a.mnist_test_images, &a.mnist_test_labels) {
                (Some(i), Some(l)) => Some((i, l)),
                (None, None) => None,
                _ => return Err(usage("--mnist-test-images and --mnist-test-labels must be given together")),
            };
            let cfg = train_config(&a.training, a.l1)?;
            let ft_cfg = TrainConfig {
                max_epochs: a.ft_epochs,
                l1_coef: 0.0,
                ..cfg.clone()
            };
            let data = load(&a.data, source)?;
            let test = match test_source {
                Some((i, l)) => Some(load_idx(i, l, None)?),
                None => None,
            };
            let (pruned, report) = kernel_pruning(&data, test.as_ref().unwrap_or(&data), &cfg, &ft_cfg, a.threshold)?;
            let s = &report.summary;
            let rows = vec![
                row("units (kernels + neurons)", format!("{} -> {}", s.units_before, s.units_after)),
                row("weights", format!("{} -> {} ({:.2}x)", s.weights_before, s.weights_after, s.weight_reduction())),
                row("model bytes", format!("{} -> {}", report.bytes_before, report.bytes_after)),
                row("accuracy before", acc(report.accuracy_before)),
                row("accuracy pruned", acc(report.accuracy_pruned)),
                row("accuracy fine-tuned", acc(report.accuracy_after)),
            ];
            let snapshots = report.filter_run.as_ref().map(|r| r.bsf_snapshots.clone()).unwrap_or_default();
            let mut outputs = Outputs::default();
            let n_frames = add_frames(&mut outputs, &snapshots)?;
            add_model(&mut outputs, &pruned, &snapshots);
            let mut pruning = serde_json::to_value(&report).expect("report serializes");
            if let Some(run) = &report.filter_run {
                pruning["filter_run"] = run_json(run);
            }
            pruning["fine_tune_run"] = run_json(&report.fine_tune_run);
            outputs.text(
                "report.json",
                envelope(
                    "prune-kernels",
                    json!({
                        "dataset": dataset_json(&a.data, &data),
                        "test_samples": test.as_ref().map(Dataset::len),
                        "config": config_json(&cfg),
                        "fine_tune_epochs": a.ft_epochs,
                        "pruning": pruning,
                        "frames": n_frames,
                    }),
                ),
            );
            finish(outputs, &a.out.out, table("kernel pruning", &rows))
        }
        Command::ExportFrames(a) => {
            let file = ModelFile::load(&a.model)?;
            if file.bsf_history.is_empty() {
                return Err(bsf_core::Error::Model(format!("{} holds no filter snapshots", a.model.display())).into());
            }
            let mut outputs = Outputs::default();
            let n = add_frames(&mut outputs, &file.bsf_history)?;
            let names: Vec<String> = outputs.paths().map(|p| p.display().to_string()).collect();
            outputs.text("report.json", envelope("export-frames", json!({ "frames": n, "files": names })));
            let rows = vec![row("snapshots", n), row("directory", a.out.out.join("frames").display())];
            finish(outputs, &a.out.out, table("frames", &rows))
        }
        Command::InspectModel(a) => {
            let file = ModelFile::load(&a.model)?;
            let net = file.network()?;
            let (body, summary) = inspect(&net, &file);
            let mut outputs = Outputs::default();
            match a.out {
                Some(out) => {
                    outputs.text("report.json", envelope("inspect-model", body));
                    finish(outputs, &out, summary)
                }
                None => Ok(Outcome {
                    summary,
                    written: vec![],
                }),
            }
        }
    }
}

fn inspect(net: &Network, file: &ModelFile) -> (Value, String) {
    let mut layers = vec![];
    let mut lines = String::new();
    let _ = writeln!(lines, "{:>3}  {:<14} {:>10}  detail", "#", "layer", "params");
    for (i, layer) in net.layers().iter().enumerate() {
        let params: usize = layer.params().iter().map(|p| p.value.len()).sum();
        let detail = match layer {
            Layer::Bsf(b) => {
                let w = b.w();
                let mean = w.iter().sum::<f64>() / w.len() as f64;
                let min = w.iter().copied().fold(f64::INFINITY, f64::min);
                let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let open = w.iter().filter(|&&v| v >= 0.5).count();
                layers.push(json!({
                    "index": i, "kind": layer.kind(), "params": params, "units": b.units(),
                    "w_min": min, "w_mean": mean, "w_max": max, "units_at_least_half": open,
                }));
                format!("{} units, w min/mean/max {min:.3}/{mean:.3}/{max:.3}, {open} >= 0.5", b.units())
            }
            _ => {
                layers.push(json!({ "index": i, "kind": layer.kind(), "params": params }));
                String::new()
            }
        };
        let line = format!("{i:>3}  {:<14} {params:>10}  {detail}", layer.kind());
        let _ = writeln!(lines, "{}", line.trim_end());
    }
    let _ = writeln!(lines, "input shape {:?}", net.input_shape());
    let _ = writeln!(lines, "weights (outside filters) {}", net.weight_count());
    let _ = writeln!(lines, "filter snapshots {}", file.bsf_history.len());
    let body = json!({
        "input_shape": net.input_shape(),
        "layers": layers,
        "weight_count": net.weight_count(),
        "snapshots": file.bsf_history.len(),
    });
    (body, table("model", &[]) + &lines)
}
