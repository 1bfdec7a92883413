//! Synthetic corpora, gradient checks and artifact inspection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use esvit_core::dataset::{
    generate_corpus, read_manifest, read_signal, SignalFormat, SyntheticClass, SyntheticCorpus,
    SyntheticCorpusSpec, SyntheticEcgSpec,
};
use esvit_core::image::{read_png, CHANNEL_LAYOUT};
use esvit_core::timefreq::{cwt_morlet, MorletSpec};
use esvit_nn::checkpoint::Checkpoint;
use esvit_nn::gradcheck::{model_check, primitive_suite, GradCheckReport, SuiteResult};
use esvit_nn::model::ModelConfig;
use serde::Serialize;

use crate::config::{version_stamp, write_file, VERSION_FILE};
use crate::error::{CliError, Result};
use crate::pipeline::read_image_manifest;

/// Two classes at 60 and 100 bpm with low and high ratings, four subjects.
pub fn default_synth_spec() -> SyntheticCorpusSpec {
    SyntheticCorpusSpec {
        base: SyntheticEcgSpec {
            noise_std: 0.01,
            ..SyntheticEcgSpec::default()
        },
        subjects: 4,
        classes: vec![
            SyntheticClass {
                heart_rate_bpm: 60.0,
                label_emotion: Some(0),
                rating_valence: 2.0,
                rating_arousal: 2.0,
                rating_dominance: None,
            },
            SyntheticClass {
                heart_rate_bpm: 100.0,
                label_emotion: Some(1),
                rating_valence: 8.0,
                rating_arousal: 8.0,
                rating_dominance: None,
            },
        ],
        rating_scale_max: 9.0,
        subject_bpm_spread: 0.0,
        format: SignalFormat::Csv,
    }
}

/// Reads a corpus spec (defaults when `spec` is `None`) and writes the
/// corpus, the spec it used and a version stamp under `out`.
pub fn run_synth(spec: Option<&Path>, out: &Path) -> Result<SyntheticCorpus> {
    let spec = match spec {
        None => default_synth_spec(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::MissingInput(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    spec.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let corpus = generate_corpus(&spec, out)?;
    let text = serde_json::to_string_pretty(&spec).expect("spec serialises") + "\n";
    write_file(&out.join("synth_spec.json"), text.as_bytes())?;
    write_file(&out.join(VERSION_FILE), version_stamp().as_bytes())?;
    Ok(corpus)
}

pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;
pub const MODEL_COORDS: usize = 50;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckSummary {
    pub primitives: Vec<SuiteResult>,
    pub model: GradCheckReport,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.model.passed && self.primitives.iter().all(|r| r.report.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.primitives {
            let _ = writeln!(
                out,
                "{:<14} {:>3} checks  max rel err {:.3e}  {}",
                r.op,
                r.report.entries.len(),
                r.report.max_rel_error,
                if r.report.passed { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "{:<14} {:>3} checks  max rel err {:.3e}  {}",
            "tiny es-vit",
            self.model.entries.len(),
            self.model.max_rel_error,
            if self.model.passed { "ok" } else { "FAIL" }
        );
        out
    }
}

/// Primitive suite plus the end-to-end check on the tiny two-class model.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckSummary> {
    let primitives = primitive_suite(seed, PRIMITIVE_TOL)?;
    let model = model_check(&ModelConfig::tiny(2), seed, MODEL_COORDS, MODEL_TOL)?;
    Ok(GradcheckSummary { primitives, model })
}

fn stats(values: &[f64]) -> String {
    if values.is_empty() {
        return "empty".into();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!(
        "min {min:.6} max {max:.6} mean {mean:.6} std {:.6}",
        var.sqrt()
    )
}

/// Human-readable summary of a signal, manifest, image, checkpoint or
/// config file. Signals also get their scalogram summarised.
pub fn inspect(path: &Path, sampling_rate_hz: f64) -> Result<String> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.display().to_string()));
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let mut out = format!("{}\n", path.display());
    match ext.as_str() {
        "png" => {
            let img = read_png(path)?;
            let _ = writeln!(out, "image {}x{}x3", img.height, img.width);
            for (c, name) in CHANNEL_LAYOUT.iter().enumerate() {
                let _ = writeln!(out, "  channel {c} ({name}): {}", stats(&img.channel(c)));
            }
        }
        "json" => inspect_json(path, &mut out)?,
        "csv" | "txt" | "f64" | "bin" => {
            let header = if ext == "csv" {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                text.lines().next().unwrap_or("").to_string()
            } else {
                String::new()
            };
            if header.starts_with("signal_path") {
                let rows = read_manifest(path)?;
                let subjects: std::collections::BTreeSet<_> =
                    rows.iter().map(|r| &r.subject_id).collect();
                let _ = writeln!(
                    out,
                    "recording manifest: {} rows, {} subjects",
                    rows.len(),
                    subjects.len()
                );
            } else if header.starts_with("image_path") {
                let rows = read_image_manifest(path)?;
                let subjects: std::collections::BTreeSet<_> =
                    rows.iter().map(|r| &r.subject_id).collect();
                let _ = writeln!(
                    out,
                    "image manifest: {} images, {} subjects",
                    rows.len(),
                    subjects.len()
                );
            } else if header.chars().any(|c| c.is_ascii_alphabetic()) {
                let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
                let rows = r.records().count();
                let _ = writeln!(out, "table: {rows} rows, columns {header}");
            } else {
                inspect_signal(path, sampling_rate_hz, &mut out)?;
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "{}: cannot inspect files with extension {other:?}",
                path.display()
            )))
        }
    }
    Ok(out)
}

fn inspect_signal(path: &Path, fs_hz: f64, out: &mut String) -> Result<()> {
    let ts = read_signal(path, fs_hz)?;
    let _ = writeln!(
        out,
        "signal: {} samples at {fs_hz} Hz ({:.3} s)",
        ts.len(),
        ts.duration_s()
    );
    let _ = writeln!(out, "  {}", stats(ts.samples()));
    let spec = MorletSpec::default();
    if spec.validate(Some(fs_hz)).is_ok() {
        let sg = cwt_morlet(&ts, &spec)?;
        let _ = writeln!(
            out,
            "scalogram: {} scales x {} samples, {:.3}-{:.3} Hz",
            sg.num_scales(),
            sg.num_samples(),
            spec.freq_min_hz,
            spec.freq_max_hz
        );
        let _ = writeln!(out, "  |W| {}", stats(sg.magnitudes()));
    }
    Ok(())
}

fn inspect_json(path: &Path, out: &mut String) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
    if value.get("params").is_some() && value.get("version").is_some() {
        let ckpt = Checkpoint::load(path)?;
        let total: usize = ckpt.params.values().map(|t| t.values.len()).sum();
        let _ = writeln!(
            out,
            "checkpoint v{}: {} tensors, {total} parameters",
            ckpt.version,
            ckpt.params.len()
        );
        if let Some(m) = ckpt.metadata.as_object() {
            for key in ["epoch", "task", "precision"] {
                if let Some(v) = m.get(key) {
                    let _ = writeln!(out, "  {key}: {v}");
                }
            }
        }
        for (name, t) in &ckpt.params {
            let _ = writeln!(out, "  {name} {:?}: {}", t.shape, stats(&t.values));
        }
    } else if let Some(map) = value.as_object() {
        let keys: Vec<&str> = map.keys().map(String::as_str).collect();
        let _ = writeln!(out, "json object with keys: {}", keys.join(", "));
    } else {
        let _ = writeln!(out, "json value");
    }
    Ok(())
}
