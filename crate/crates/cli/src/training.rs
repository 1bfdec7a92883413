//! Training and evaluation on an encoded image manifest.

use std::fs;
use std::path::{Path, PathBuf};

use esvit_core::dataset::{make_split, Split, SplitItem};
use esvit_core::image::read_png;
use esvit_nn::checkpoint::{load_model, save_model};
use esvit_nn::metrics::MetricsReport;
use esvit_nn::model::EsVitModel;
use esvit_nn::real::Precision;
use esvit_nn::train::{
    epoch_log_csv, evaluate, train, Dataset, EpochEvaluation, LabelTask, TrainOutcome,
};
use esvit_nn::{Real, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{stamp_run_dir, write_file, RunConfig};
use crate::error::{CliError, Result};
use crate::pipeline::{read_image_manifest, write_csv, ImageRow};

pub const TRAIN_DIR: &str = "train";
pub const EVAL_DIR: &str = "eval";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";

/// Image manifest row paired with its class index for one task.
#[derive(Debug, Clone)]
pub struct LabelledImage {
    pub row: ImageRow,
    pub label: usize,
}

impl SplitItem for LabelledImage {
    fn subject(&self) -> &str {
        &self.row.subject_id
    }

    fn class(&self) -> Option<usize> {
        Some(self.label)
    }
}

pub fn labelled_images(rows: Vec<ImageRow>, task: LabelTask) -> Result<Vec<LabelledImage>> {
    rows.into_iter()
        .map(|row| {
            Ok(LabelledImage {
                label: row.label(task)?,
                row,
            })
        })
        .collect()
}

/// Loads PNGs as `[3, H, W]` tensors with labels.
pub fn load_dataset<T: Real>(
    base: &Path,
    items: &[&LabelledImage],
    image_hw: usize,
) -> Result<Dataset<T>> {
    let images: Vec<Tensor<T>> = items
        .par_iter()
        .map(|item| {
            let path = base.join(&item.row.image_path);
            if !path.exists() {
                return Err(CliError::MissingInput(path.display().to_string()));
            }
            let img = read_png(&path)?;
            if img.height != image_hw || img.width != image_hw {
                return Err(CliError::Config(format!(
                    "{}: {}x{} image, model.image_hw is {image_hw}",
                    path.display(),
                    img.height,
                    img.width
                )));
            }
            Ok(Tensor::from_f64([3, img.height, img.width], &img.to_chw())?)
        })
        .collect::<Result<_>>()?;
    let labels = items.iter().map(|i| i.label).collect();
    Ok(Dataset::new(images, labels)?)
}

#[derive(Debug, Clone, Serialize)]
struct SplitRow<'a> {
    image_path: &'a str,
    subject_id: &'a str,
    label: usize,
    split: &'static str,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPaths {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct FinalMetrics<'a> {
    epochs: usize,
    first_perfect_train_epoch: Option<usize>,
    train: &'a MetricsReport,
    test: Option<&'a MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub dir: PathBuf,
    pub split: Split,
    pub outcome: TrainOutcome,
}

fn json_text<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

fn manifest_base(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new("."))
}

/// Splits the manifest, trains, and writes `<out>/train/`.
pub fn run_train(manifest: &Path, cfg: &RunConfig, out: &Path) -> Result<TrainRun> {
    cfg.validate()?;
    if !manifest.exists() {
        return Err(CliError::MissingInput(manifest.display().to_string()));
    }
    let items = labelled_images(read_image_manifest(manifest)?, cfg.train.task)?;
    if items.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no images",
            manifest.display()
        )));
    }
    let split = make_split(&items, &cfg.split, cfg.seed)?;
    let dir = out.join(TRAIN_DIR);
    stamp_run_dir(&dir, cfg)?;

    let mut rows = Vec::with_capacity(items.len());
    for (indices, name) in [(&split.train, "train"), (&split.test, "test")] {
        rows.extend(indices.iter().map(|&i| SplitRow {
            image_path: &items[i].row.image_path,
            subject_id: &items[i].row.subject_id,
            label: items[i].label,
            split: name,
        }));
    }
    write_csv(&dir.join("split.csv"), &rows)?;
    let paths = SplitPaths {
        train: split
            .train
            .iter()
            .map(|&i| items[i].row.image_path.clone())
            .collect(),
        test: split
            .test
            .iter()
            .map(|&i| items[i].row.image_path.clone())
            .collect(),
    };

    let outcome = match cfg.train.precision {
        Precision::F64 => train_typed::<f64>(manifest, cfg, &items, &split, &paths, &dir)?,
        Precision::F32 => train_typed::<f32>(manifest, cfg, &items, &split, &paths, &dir)?,
    };
    write_file(
        &dir.join(EPOCH_LOG_FILE),
        epoch_log_csv(&outcome.log).as_bytes(),
    )?;
    let last = outcome.evaluations.last().expect("at least one epoch");
    let metrics = FinalMetrics {
        epochs: outcome.evaluations.len(),
        first_perfect_train_epoch: outcome.first_perfect_epoch(),
        train: &last.train,
        test: last.test.as_ref(),
    };
    write_file(&dir.join("metrics.json"), json_text(&metrics).as_bytes())?;
    Ok(TrainRun {
        dir,
        split,
        outcome,
    })
}

fn train_typed<T: Real>(
    manifest: &Path,
    cfg: &RunConfig,
    items: &[LabelledImage],
    split: &Split,
    paths: &SplitPaths,
    dir: &Path,
) -> Result<TrainOutcome> {
    let base = manifest_base(manifest);
    let pick = |idx: &[usize]| idx.iter().map(|&i| &items[i]).collect::<Vec<_>>();
    let train_data = load_dataset::<T>(base, &pick(&split.train), cfg.model.image_hw)?;
    let test_data = if split.test.is_empty() {
        None
    } else {
        Some(load_dataset::<T>(
            base,
            &pick(&split.test),
            cfg.model.image_hw,
        )?)
    };
    let mut model = EsVitModel::<T>::new(cfg.model.clone(), cfg.seed)?;
    write_file(
        &dir.join("model_card.json"),
        json_text(&model.card()).as_bytes(),
    )?;
    let metadata = |epoch: usize| {
        json!({
            "epoch": epoch,
            "task": cfg.train.task,
            "precision": cfg.train.precision,
            "image_manifest": manifest.display().to_string(),
            "split": paths,
        })
    };
    let every = cfg.train.checkpoint_every;
    let epochs = cfg.train.epochs;
    let mut on_epoch = |eval: &EpochEvaluation, m: &EsVitModel<T>| -> esvit_nn::Result<()> {
        if every > 0 && eval.epoch.is_multiple_of(every) && eval.epoch != epochs {
            save_model(
                m,
                &dir.join(format!("checkpoint_{:04}.json", eval.epoch)),
                metadata(eval.epoch),
            )?;
        }
        Ok(())
    };
    let outcome = train(
        &mut model,
        &train_data,
        test_data.as_ref(),
        &cfg.train,
        &mut on_epoch,
    )?;
    save_model(&model, &dir.join(FINAL_CHECKPOINT), metadata(epochs))?;
    Ok(outcome)
}

/// Which images of the manifest to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Test,
    #[default]
    All,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub dir: PathBuf,
    pub report: MetricsReport,
}

/// Evaluates a checkpoint and writes `<out>/eval/{metrics.json,confusion.csv}`.
pub fn run_eval(
    checkpoint: &Path,
    manifest: &Path,
    which: EvalSplit,
    out: &Path,
) -> Result<EvalRun> {
    for p in [checkpoint, manifest] {
        if !p.exists() {
            return Err(CliError::MissingInput(p.display().to_string()));
        }
    }
    let (model, metadata) = load_model::<f64>(checkpoint)?;
    let task: LabelTask = metadata
        .get("task")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Config(format!("{}: metadata.task: {e}", checkpoint.display())))?
        .unwrap_or_default();
    let items = labelled_images(read_image_manifest(manifest)?, task)?;
    let selected: Vec<&LabelledImage> = match which {
        EvalSplit::All => items.iter().collect(),
        EvalSplit::Train | EvalSplit::Test => {
            let paths: SplitPaths = metadata
                .get("split")
                .cloned()
                .map(serde_json::from_value)
                .transpose()
                .map_err(|e| {
                    CliError::Config(format!("{}: metadata.split: {e}", checkpoint.display()))
                })?
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{}: checkpoint records no split",
                        checkpoint.display()
                    ))
                })?;
            let wanted = if which == EvalSplit::Train {
                paths.train
            } else {
                paths.test
            };
            wanted
                .iter()
                .map(|p| {
                    items
                        .iter()
                        .find(|i| &i.row.image_path == p)
                        .ok_or_else(|| {
                            CliError::MissingInput(format!("{p} is not in {}", manifest.display()))
                        })
                })
                .collect::<Result<_>>()?
        }
    };
    if selected.is_empty() {
        return Err(CliError::Config(format!(
            "no images selected for {which:?}"
        )));
    }
    let data = load_dataset::<f64>(manifest_base(manifest), &selected, model.config().image_hw)?;
    let report = evaluate(&model, &data)?;
    let dir = out.join(EVAL_DIR);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_file(&dir.join("metrics.json"), json_text(&report).as_bytes())?;
    write_file(
        &dir.join("confusion.csv"),
        report.confusion_csv().as_bytes(),
    )?;
    Ok(EvalRun { dir, report })
}
