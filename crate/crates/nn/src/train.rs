//! Supervised training loop, evaluation and label binarisation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{argmax, MetricsReport};
use crate::model::EsVitModel;
use crate::optim::Adam;
use crate::real::Precision;
use crate::{NnError, Real, Result, Tensor};

/// Which label a classifier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelTask {
    #[default]
    Emotion,
    Valence,
    Arousal,
    Dominance,
}

impl LabelTask {
    pub const EMOTION_CLASSES: usize = 7;

    pub fn num_classes(self) -> usize {
        match self {
            LabelTask::Emotion => Self::EMOTION_CLASSES,
            _ => 2,
        }
    }
}

/// Labels of one recording as stored in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawLabels {
    pub emotion: Option<u8>,
    pub valence: f64,
    pub arousal: f64,
    pub dominance: Option<f64>,
    /// Ratings run from 1 to this value.
    pub scale_max: f64,
}

/// Class index for `task`. Ratings strictly above the scale midpoint
/// `(1 + max) / 2` are class 1 (high); the midpoint itself is low.
pub fn binarize_labels(raw: &RawLabels, task: LabelTask) -> Result<usize> {
    let rating = |name: &str, v: Option<f64>| -> Result<usize> {
        let v = v.ok_or_else(|| NnError::Config(format!("recording has no {name} rating")))?;
        if !(1.0..=raw.scale_max).contains(&v) {
            return Err(NnError::Config(format!(
                "{name} rating {v} outside [1, {}]",
                raw.scale_max
            )));
        }
        Ok(usize::from(v > (1.0 + raw.scale_max) / 2.0))
    };
    match task {
        LabelTask::Emotion => {
            let label = raw
                .emotion
                .ok_or_else(|| NnError::Config("recording has no emotion label".into()))?
                as usize;
            if label >= LabelTask::EMOTION_CLASSES {
                return Err(NnError::LabelOutOfRange {
                    label,
                    num_classes: LabelTask::EMOTION_CLASSES,
                });
            }
            Ok(label)
        }
        LabelTask::Valence => rating("valence", Some(raw.valence)),
        LabelTask::Arousal => rating("arousal", Some(raw.arousal)),
        LabelTask::Dominance => rating("dominance", raw.dominance),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub precision: Precision,
    pub task: LabelTask,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            precision: Precision::F64,
            task: LabelTask::Emotion,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Published schedule: 100 epochs, otherwise the defaults.
    pub fn published() -> Self {
        Self {
            epochs: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::Config(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        let (b1, b2) = self.adam_betas;
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&b1)
            || !(0.0..1.0).contains(&b2)
            || !(self.adam_eps > 0.0)
        {
            return Err(NnError::Config(
                "learning_rate and adam_eps must be positive, adam_betas in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Images `[C, H, W]` with class labels.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub images: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(NnError::Config(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn check(&self, model: &EsVitModel<T>) -> Result<()> {
        if self.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        let cfg = model.config();
        let num_classes = cfg.num_classes;
        if let Some(&label) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(NnError::LabelOutOfRange { label, num_classes });
        }
        let want = [cfg.in_channels, cfg.image_hw, cfg.image_hw];
        if let Some(img) = self.images.iter().find(|i| i.shape() != want) {
            return Err(NnError::ShapeMismatch {
                op: "dataset image",
                lhs: img.shape().to_vec(),
                rhs: want.to_vec(),
            });
        }
        Ok(())
    }
}

/// One row of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EpochRecord {
    fn new(epoch: usize, split: &str, report: &MetricsReport) -> Self {
        Self {
            epoch,
            split: split.to_string(),
            loss: report.loss.unwrap_or(f64::NAN),
            accuracy: report.accuracy,
            precision: report.macro_precision,
            recall: report.macro_recall,
            f1: report.macro_f1,
        }
    }
}

pub const EPOCH_LOG_HEADER: &str = "epoch,split,loss,accuracy,precision,recall,f1";

/// Epoch log as CSV text. Floats use the shortest representation that
/// round-trips, so equal runs produce equal bytes.
pub fn epoch_log_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.split, r.loss, r.accuracy, r.precision, r.recall, r.f1
        );
    }
    out
}

/// Metrics after one epoch, handed to the training callback.
#[derive(Debug, Clone)]
pub struct EpochEvaluation {
    pub epoch: usize,
    pub train: MetricsReport,
    pub test: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub evaluations: Vec<EpochEvaluation>,
}

impl TrainOutcome {
    pub fn final_train(&self) -> &MetricsReport {
        &self.evaluations.last().expect("at least one epoch").train
    }

    /// First epoch whose post-epoch training accuracy is 1.
    pub fn first_perfect_epoch(&self) -> Option<usize> {
        self.evaluations
            .iter()
            .find(|e| e.train.accuracy == 1.0)
            .map(|e| e.epoch)
    }
}

/// Mean cross-entropy and metrics of `model` on `data`.
pub fn evaluate<T: Real>(model: &EsVitModel<T>, data: &Dataset<T>) -> Result<MetricsReport> {
    data.check(model)?;
    let k = model.config().num_classes;
    let logits: Vec<Vec<T>> = data
        .images
        .par_iter()
        .map(|img| model.logits(img))
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    for (row, &label) in logits.iter().zip(&data.labels) {
        let row: Vec<f64> = row.iter().map(|v| v.f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += lse - row[label];
    }
    let predicted: Vec<usize> = logits.iter().map(|r| argmax(r)).collect();
    let mut report = MetricsReport::from_predictions(&data.labels, &predicted, k)?;
    report.loss = Some(loss / data.len() as f64);
    Ok(report)
}

/// Adam training with a seeded per-epoch shuffle. Per-image gradients are
/// computed in parallel and summed in dataset order, so results do not
/// depend on thread scheduling. After every epoch the model is evaluated on
/// the training set (and `test`, if given) and `on_epoch` is called.
pub fn train<T, F>(
    model: &mut EsVitModel<T>,
    data: &Dataset<T>,
    test: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    T: Real,
    F: FnMut(&EpochEvaluation, &EsVitModel<T>) -> Result<()>,
{
    cfg.validate()?;
    data.check(model)?;
    if let Some(t) = test {
        t.check(model)?;
    }
    let mut adam = Adam::new(
        model.params(),
        cfg.learning_rate,
        cfg.adam_betas,
        cfg.adam_eps,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut evaluations = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let steps = {
                let m = &*model;
                batch
                    .par_iter()
                    .map(|&i| m.loss_and_grads(&data.images[i], data.labels[i]))
                    .collect::<Result<Vec<_>>>()?
            };
            let mut grads: Vec<Tensor<T>> = model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect();
            for step in &steps {
                for (acc, g) in grads.iter_mut().zip(&step.grads) {
                    acc.add_assign(g);
                }
            }
            let inv = T::one() / T::of(batch.len() as f64);
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v = *v * inv);
            }
            adam.step(model.params_mut(), &grads)?;
        }

        let train_report = evaluate(model, data)?;
        log.push(EpochRecord::new(epoch, "train", &train_report));
        let test_report = test.map(|t| evaluate(model, t)).transpose()?;
        if let Some(r) = &test_report {
            log.push(EpochRecord::new(epoch, "test", r));
        }
        let eval = EpochEvaluation {
            epoch,
            train: train_report,
            test: test_report,
        };
        on_epoch(&eval, model)?;
        evaluations.push(eval);
    }
    Ok(TrainOutcome { log, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn raw(v: f64) -> RawLabels {
        RawLabels {
            emotion: Some(3),
            valence: v,
            arousal: 9.0,
            dominance: None,
            scale_max: 9.0,
        }
    }

    #[test]
    fn midpoint_is_low() {
        assert_eq!(binarize_labels(&raw(5.0), LabelTask::Valence).unwrap(), 0);
        assert_eq!(binarize_labels(&raw(5.5), LabelTask::Valence).unwrap(), 1);
        assert_eq!(binarize_labels(&raw(1.0), LabelTask::Valence).unwrap(), 0);
        assert_eq!(binarize_labels(&raw(9.0), LabelTask::Arousal).unwrap(), 1);
        assert_eq!(binarize_labels(&raw(1.0), LabelTask::Emotion).unwrap(), 3);
        assert!(binarize_labels(&raw(1.0), LabelTask::Dominance).is_err());
        assert!(binarize_labels(&raw(0.5), LabelTask::Valence).is_err());
        let mut bad = raw(2.0);
        bad.emotion = Some(7);
        assert!(matches!(
            binarize_labels(&bad, LabelTask::Emotion),
            Err(NnError::LabelOutOfRange { .. })
        ));
    }

    fn toy_data(n: usize) -> Dataset<f64> {
        let images = (0..n)
            .map(|i| {
                let v = if i % 2 == 0 { 0.9 } else { 0.1 };
                Tensor::full([3, 32, 32], v)
            })
            .collect();
        Dataset::new(images, (0..n).map(|i| i % 2).collect()).unwrap()
    }

    #[test]
    fn errors_come_before_training() {
        let mut model = EsVitModel::<f64>::new(ModelConfig::tiny(2), 0).unwrap();
        let before = model.params().to_vec();
        let empty = Dataset::new(vec![], vec![]).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&mut model, &empty, None, &cfg, |_, _| Ok(())),
            Err(NnError::EmptyDataset)
        ));
        let mut bad = toy_data(4);
        bad.labels[3] = 2;
        assert!(matches!(
            train(&mut model, &bad, None, &cfg, |_, _| Ok(())),
            Err(NnError::LabelOutOfRange { label: 2, .. })
        ));
        assert_eq!(model.params(), before.as_slice());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let data = toy_data(8);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 4,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model = EsVitModel::<f64>::new(ModelConfig::tiny(2), 1).unwrap();
            let out = train(&mut model, &data, Some(&data), &cfg, |_, _| Ok(())).unwrap();
            (epoch_log_csv(&out.log), out)
        };
        let (a, out) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 2 * 30);
        assert!(a.starts_with("epoch,split,loss,accuracy,precision,recall,f1\n1,train,"));
        assert_eq!(out.final_train().accuracy, 1.0);
        assert!(out.log.last().unwrap().loss < out.log[0].loss);
    }

    #[test]
    fn f32_training_runs() {
        let data = toy_data(4);
        let data = Dataset::new(
            data.images.iter().map(|t| t.cast::<f32>()).collect(),
            data.labels,
        )
        .unwrap();
        let mut model = EsVitModel::<f32>::new(ModelConfig::tiny(2), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train(&mut model, &data, None, &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(out.log.len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        assert_eq!(TrainConfig::published().epochs, 100);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.1}"#).is_err());
    }
}
