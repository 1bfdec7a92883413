#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use esvit_cli::pipeline::{read_image_manifest, write_image_manifest, ImageRow};
use esvit_cli::tools::run_synth;
use esvit_cli::{pipeline, RunConfig};
use esvit_core::dataset::{SignalFormat, SyntheticClass, SyntheticCorpusSpec, SyntheticEcgSpec};
use esvit_nn::model::ModelConfig;
use esvit_nn::train::LabelTask;

/// Tiny two-class valence setup on 32x32 images, all images in training.
pub fn tiny_config(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    cfg.image.height = 32;
    cfg.image.width = 32;
    cfg.model = ModelConfig::tiny(2);
    cfg.train.task = LabelTask::Valence;
    cfg.train.epochs = epochs;
    cfg.split.train_fraction = 1.0;
    cfg
}

/// One subject, 60 bpm low valence against 100 bpm high valence.
pub fn two_class_spec() -> SyntheticCorpusSpec {
    let class = |bpm: f64, valence: f64| SyntheticClass {
        heart_rate_bpm: bpm,
        label_emotion: None,
        rating_valence: valence,
        rating_arousal: 5.0,
        rating_dominance: None,
    };
    SyntheticCorpusSpec {
        base: SyntheticEcgSpec {
            noise_std: 0.01,
            seed: 11,
            ..SyntheticEcgSpec::default()
        },
        subjects: 1,
        classes: vec![class(60.0, 2.0), class(100.0, 8.0)],
        rating_scale_max: 9.0,
        subject_bpm_spread: 0.0,
        format: SignalFormat::Csv,
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Synthesises, preprocesses and encodes the two-class corpus; returns the
/// image manifest path.
pub fn encoded_corpus(root: &Path, cfg: &RunConfig) -> PathBuf {
    let spec = root.join("spec.json");
    write_json(&spec, &two_class_spec());
    run_synth(Some(&spec), &root.join("corpus")).unwrap();
    pipeline::run_preprocess(&root.join("corpus/manifest.csv"), cfg, root).unwrap();
    let out = pipeline::run_encode(&root.join(pipeline::PREPROCESSED_DIR), cfg, root).unwrap();
    out.dir.join(pipeline::IMAGE_MANIFEST_FILE)
}

/// Writes a manifest with the first `per_class` images of each valence
/// class next to the full one.
pub fn balanced_subset(manifest: &Path, per_class: usize, name: &str) -> PathBuf {
    let rows = read_image_manifest(manifest).unwrap();
    let mut picked: Vec<ImageRow> = Vec::new();
    for class in 0..2 {
        let of_class: Vec<ImageRow> = rows
            .iter()
            .filter(|r| r.label_valence == class)
            .take(per_class)
            .cloned()
            .collect();
        assert_eq!(
            of_class.len(),
            per_class,
            "not enough images of class {class}"
        );
        picked.extend(of_class);
    }
    let path = manifest.with_file_name(name);
    write_image_manifest(&path, &picked).unwrap();
    path
}
