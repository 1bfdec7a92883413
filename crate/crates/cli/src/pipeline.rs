//! Preprocessing (baseline, band-pass, R-peaks, segments) and image encoding.

use std::fs;
use std::path::{Path, PathBuf};

use esvit_core::dataset::{read_manifest, read_signal, write_signal, RecordingRow};
use esvit_core::image::{
    compose_rgb, write_png, EncodedImage, Provenance, RecordingContext, CHANNEL_LAYOUT,
};
use esvit_core::signal::{
    apply_filter, default_min_distance, design_bandpass, detect_r_peaks, remove_baseline,
    segment_around_peaks, PeakList, Segmentation,
};
use esvit_core::timefreq::{cwt_morlet, welch_psd};
use esvit_core::TimeSeries;
use esvit_nn::train::{binarize_labels, LabelTask, RawLabels};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{stamp_run_dir, write_file, RunConfig};
use crate::error::{CliError, Result};

pub const PREPROCESSED_DIR: &str = "preprocessed";
pub const IMAGES_DIR: &str = "images";
pub const RECORDINGS_FILE: &str = "recordings.csv";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const SKIPPED_FILE: &str = "skipped_peaks.csv";
pub const IMAGE_MANIFEST_FILE: &str = "manifest.csv";

/// Filtered signal with its detected peaks and segments.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub filtered: TimeSeries,
    pub peaks: PeakList,
    pub segmentation: Segmentation,
}

/// Baseline removal, zero-phase band-pass, R-peak detection, segmentation.
pub fn preprocess_signal(ts: &TimeSeries, cfg: &RunConfig) -> Result<Preprocessed> {
    let fs = ts.sampling_rate_hz();
    let centred = remove_baseline(ts, &cfg.baseline)?;
    let coeffs = design_bandpass(&cfg.bandpass, fs)?;
    let filtered = apply_filter(&centred, &coeffs)?;
    let min_distance = cfg
        .peaks
        .min_distance_samples
        .unwrap_or_else(|| default_min_distance(fs));
    let peaks = detect_r_peaks(&filtered, cfg.peaks.relative_threshold, min_distance)?;
    let segmentation =
        segment_around_peaks(&filtered, &peaks, cfg.segment.left, cfg.segment.right)?;
    if segmentation.segments.len() + segmentation.skipped.len() != peaks.len() {
        return Err(CliError::Invariant(format!(
            "{} segments + {} skipped != {} peaks",
            segmentation.segments.len(),
            segmentation.skipped.len(),
            peaks.len()
        )));
    }
    Ok(Preprocessed {
        filtered,
        peaks,
        segmentation,
    })
}

/// One recording after preprocessing, as listed in `recordings.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub recording_id: String,
    pub subject_id: String,
    pub session: String,
    pub sampling_rate_hz: f64,
    /// Relative to the preprocessed directory.
    pub filtered_path: String,
    pub num_peaks: usize,
    pub num_segments: usize,
    pub num_skipped: usize,
    pub label_emotion: Option<u8>,
    pub rating_valence: f64,
    pub rating_arousal: f64,
    pub rating_dominance: Option<f64>,
    pub rating_scale_max: f64,
}

impl RecordingSummary {
    fn raw_labels(&self) -> RawLabels {
        RawLabels {
            emotion: self.label_emotion,
            valence: self.rating_valence,
            arousal: self.rating_arousal,
            dominance: self.rating_dominance,
            scale_max: self.rating_scale_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub recording_id: String,
    pub subject_id: String,
    pub segment_index: usize,
    pub peak_index: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPeak {
    pub recording_id: String,
    pub peak_index: usize,
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.display().to_string()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::io(path, e)))
        .collect()
}

fn empty_csv_with_header(path: &Path, header: &str) -> Result<()> {
    write_file(path, format!("{header}\n").as_bytes())
}

#[derive(Debug, Clone)]
pub struct PreprocessOutcome {
    pub dir: PathBuf,
    pub recordings: Vec<RecordingSummary>,
    pub segments: Vec<SegmentRow>,
    pub skipped: Vec<SkippedPeak>,
}

/// Runs [`preprocess_signal`] on every manifest row and writes
/// `<out>/preprocessed/`.
pub fn run_preprocess(manifest: &Path, cfg: &RunConfig, out: &Path) -> Result<PreprocessOutcome> {
    cfg.validate()?;
    if !manifest.exists() {
        return Err(CliError::MissingInput(manifest.display().to_string()));
    }
    let rows = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    for row in &rows {
        let path = row.resolve_path(base);
        if !path.exists() {
            return Err(CliError::MissingInput(path.display().to_string()));
        }
    }
    let dir = out.join(PREPROCESSED_DIR);
    stamp_run_dir(&dir, cfg)?;
    let filtered_dir = dir.join("filtered");
    fs::create_dir_all(&filtered_dir).map_err(|e| CliError::io(&filtered_dir, e))?;

    let results: Vec<(RecordingRow, Preprocessed)> = rows
        .par_iter()
        .map(|row| {
            let rec = row.load(base)?;
            let pre = preprocess_signal(&rec.series, cfg)?;
            Ok((row.clone(), pre))
        })
        .collect::<Result<_>>()?;

    let mut recordings = Vec::new();
    let mut segments = Vec::new();
    let mut skipped = Vec::new();
    for (row, pre) in &results {
        let id = row.recording_id();
        let file = format!("filtered/{id}.f64");
        write_signal(&dir.join(&file), &pre.filtered)?;
        for (k, seg) in pre.segmentation.segments.iter().enumerate() {
            segments.push(SegmentRow {
                recording_id: id.clone(),
                subject_id: row.subject_id.clone(),
                segment_index: k,
                peak_index: seg.center_index,
                start: seg.start,
                end: seg.end(),
            });
        }
        skipped.extend(pre.segmentation.skipped.iter().map(|&p| SkippedPeak {
            recording_id: id.clone(),
            peak_index: p,
        }));
        recordings.push(RecordingSummary {
            recording_id: id,
            subject_id: row.subject_id.clone(),
            session: row.session.clone(),
            sampling_rate_hz: row.sampling_rate_hz,
            filtered_path: file,
            num_peaks: pre.peaks.len(),
            num_segments: pre.segmentation.segments.len(),
            num_skipped: pre.segmentation.skipped.len(),
            label_emotion: row.label_emotion,
            rating_valence: row.rating_valence,
            rating_arousal: row.rating_arousal,
            rating_dominance: row.rating_dominance,
            rating_scale_max: row.rating_scale_max,
        });
    }
    let mut ids: Vec<&str> = recordings.iter().map(|r| r.recording_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config(
            "signal file names must be unique across the manifest".into(),
        ));
    }
    write_csv(&dir.join(RECORDINGS_FILE), &recordings)?;
    if segments.is_empty() {
        empty_csv_with_header(
            &dir.join(SEGMENTS_FILE),
            "recording_id,subject_id,segment_index,peak_index,start,end",
        )?;
    } else {
        write_csv(&dir.join(SEGMENTS_FILE), &segments)?;
    }
    if skipped.is_empty() {
        empty_csv_with_header(&dir.join(SKIPPED_FILE), "recording_id,peak_index")?;
    } else {
        write_csv(&dir.join(SKIPPED_FILE), &skipped)?;
    }
    Ok(PreprocessOutcome {
        dir,
        recordings,
        segments,
        skipped,
    })
}

/// One line of the image manifest. Labels are class indices: the emotion
/// label as given, ratings split at the scale midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_path: String,
    pub subject_id: String,
    pub segment_index: usize,
    pub label_emotion: Option<usize>,
    pub label_valence: usize,
    pub label_arousal: usize,
    #[serde(default)]
    pub label_dominance: Option<usize>,
}

impl ImageRow {
    pub fn label(&self, task: LabelTask) -> Result<usize> {
        let missing =
            |what: &str| CliError::Config(format!("{}: no {what} label", self.image_path));
        match task {
            LabelTask::Emotion => self.label_emotion.ok_or_else(|| missing("emotion")),
            LabelTask::Valence => Ok(self.label_valence),
            LabelTask::Arousal => Ok(self.label_arousal),
            LabelTask::Dominance => self.label_dominance.ok_or_else(|| missing("dominance")),
        }
    }
}

pub fn write_image_manifest(path: &Path, rows: &[ImageRow]) -> Result<()> {
    let with_dominance = rows.iter().any(|r| r.label_dominance.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut header = vec![
        "image_path",
        "subject_id",
        "segment_index",
        "label_emotion",
        "label_valence",
        "label_arousal",
    ];
    if with_dominance {
        header.push("label_dominance");
    }
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.image_path.clone(),
            r.subject_id.clone(),
            r.segment_index.to_string(),
            opt(r.label_emotion),
            r.label_valence.to_string(),
            r.label_arousal.to_string(),
        ];
        if with_dominance {
            rec.push(opt(r.label_dominance));
        }
        w.write_record(&rec).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_image_manifest(path: &Path) -> Result<Vec<ImageRow>> {
    read_csv(path)
}

#[derive(Debug, Clone, Serialize)]
struct ImageMetadata {
    channel_layout: [&'static str; 3],
    height: usize,
    width: usize,
    label_rule: &'static str,
}

#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ImageRow>,
}

/// Segment images for one recording: full-signal scalogram and PSD shared,
/// per-segment scalogram in channel 0.
pub fn encode_recording(
    summary: &RecordingSummary,
    filtered: &TimeSeries,
    segments: &[&SegmentRow],
    cfg: &RunConfig,
) -> Result<Vec<EncodedImage>> {
    let full = cwt_morlet(filtered, &cfg.morlet)?;
    let psd = welch_psd(filtered, &cfg.welch)?;
    let ctx = RecordingContext::new(
        &summary.recording_id,
        &summary.subject_id,
        &full,
        &psd,
        &cfg.image,
    )?;
    segments
        .par_iter()
        .map(|s| {
            let seg = filtered.slice(s.start, s.end)?;
            let sg = cwt_morlet(&seg, &cfg.morlet)?;
            let prov = Provenance {
                recording_id: s.recording_id.clone(),
                subject_id: s.subject_id.clone(),
                segment_index: s.segment_index,
            };
            Ok(compose_rgb(&sg, prov, &ctx, &cfg.image)?)
        })
        .collect()
}

/// Encodes every segment listed in a preprocessed directory into
/// `<out>/images/`.
pub fn run_encode(preprocessed: &Path, cfg: &RunConfig, out: &Path) -> Result<EncodeOutcome> {
    cfg.validate()?;
    let recordings: Vec<RecordingSummary> = read_csv(&preprocessed.join(RECORDINGS_FILE))?;
    let segments: Vec<SegmentRow> = read_csv(&preprocessed.join(SEGMENTS_FILE))?;
    let dir = out.join(IMAGES_DIR);
    stamp_run_dir(&dir, cfg)?;
    let meta = ImageMetadata {
        channel_layout: CHANNEL_LAYOUT,
        height: cfg.image.height,
        width: cfg.image.width,
        label_rule: "ratings above (1 + scale max) / 2 are class 1, the midpoint is class 0",
    };
    write_file(
        &dir.join("image_meta.json"),
        (serde_json::to_string_pretty(&meta).expect("metadata serialises") + "\n").as_bytes(),
    )?;

    let mut rows = Vec::new();
    for rec in &recordings {
        let path = preprocessed.join(&rec.filtered_path);
        if !path.exists() {
            return Err(CliError::MissingInput(path.display().to_string()));
        }
        let filtered = read_signal(&path, rec.sampling_rate_hz)?;
        let segs: Vec<&SegmentRow> = segments
            .iter()
            .filter(|s| s.recording_id == rec.recording_id)
            .collect();
        if segs.len() != rec.num_segments {
            return Err(CliError::Invariant(format!(
                "{}: recordings.csv lists {} segments, segments.csv has {}",
                rec.recording_id,
                rec.num_segments,
                segs.len()
            )));
        }
        let images = encode_recording(rec, &filtered, &segs, cfg)?;
        let raw = rec.raw_labels();
        let emotion = rec
            .label_emotion
            .map(|_| binarize_labels(&raw, LabelTask::Emotion))
            .transpose()?;
        let valence = binarize_labels(&raw, LabelTask::Valence)?;
        let arousal = binarize_labels(&raw, LabelTask::Arousal)?;
        let dominance = rec
            .rating_dominance
            .map(|_| binarize_labels(&raw, LabelTask::Dominance))
            .transpose()?;
        for (img, seg) in images.iter().zip(&segs) {
            let name = format!("{}_{:04}.png", rec.recording_id, seg.segment_index);
            write_png(img, dir.join(&name))?;
            rows.push(ImageRow {
                image_path: name,
                subject_id: rec.subject_id.clone(),
                segment_index: seg.segment_index,
                label_emotion: emotion,
                label_valence: valence,
                label_arousal: arousal,
                label_dominance: dominance,
            });
        }
    }
    write_image_manifest(&dir.join(IMAGE_MANIFEST_FILE), &rows)?;
    Ok(EncodeOutcome { dir, rows })
}
