use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_signal, RecordingRow, SignalFormat};
use crate::signal::TimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEcgSpec {
    pub heart_rate_bpm: f64,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
    pub noise_std: f64,
    pub baseline_wander_amp: f64,
    pub baseline_wander_hz: f64,
    /// Standard deviation of the multiplicative per-beat amplitude factor.
    pub amplitude_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticEcgSpec {
    fn default() -> Self {
        Self {
            heart_rate_bpm: 60.0,
            duration_s: 39.0,
            sampling_rate_hz: 128.0,
            noise_std: 0.0,
            baseline_wander_amp: 0.0,
            baseline_wander_hz: 0.25,
            amplitude_jitter: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticEcgSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(30.0..=220.0).contains(&self.heart_rate_bpm) {
            return bad(format!(
                "heart rate {} bpm outside [30, 220]",
                self.heart_rate_bpm
            ));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return bad(format!(
                "sampling rate must be positive, got {}",
                self.sampling_rate_hz
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s * self.heart_rate_bpm / 60.0 >= 1.0) {
            return bad(format!(
                "{} s at {} bpm holds less than one beat",
                self.duration_s, self.heart_rate_bpm
            ));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("baseline_wander_amp", self.baseline_wander_amp),
            ("baseline_wander_hz", self.baseline_wander_hz),
            ("amplitude_jitter", self.amplitude_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn rr_interval_s(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEcg {
    pub series: TimeSeries,
    /// Sample index of every planted R-peak.
    pub beat_indices: Vec<usize>,
}

/// (offset from R in seconds at 60 bpm, amplitude, width in seconds)
const WAVES: [(f64, f64, f64); 5] = [
    (-0.20, 0.15, 0.025),   // P
    (-0.025, -0.12, 0.010), // Q
    (0.0, 1.0, 0.012),      // R
    (0.025, -0.20, 0.010),  // S
    (0.28, 0.30, 0.040),    // T
];

/// Sum of Gaussian P/QRS/T bumps at evenly spaced beats, with sinusoidal
/// baseline wander and white noise. Beat `k` has its R-peak at
/// `round((k + 0.5) * RR * fs)`.
pub fn generate_synthetic_ecg(spec: &SyntheticEcgSpec) -> Result<SyntheticEcg> {
    spec.validate()?;
    let fs = spec.sampling_rate_hz;
    let n = (spec.duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "synthetic signal would be empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rr = spec.rr_interval_s();
    // P and T offsets shrink with the RR interval.
    let stretch = rr.sqrt().min(1.0);

    let mut beats = Vec::new();
    let mut k = 0usize;
    loop {
        let idx = ((k as f64 + 0.5) * rr * fs).round() as usize;
        if idx >= n {
            break;
        }
        beats.push(idx);
        k += 1;
    }

    let jitter = Normal::new(0.0, spec.amplitude_jitter.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut x = vec![0.0; n];
    for &r in &beats {
        let gain = if spec.amplitude_jitter > 0.0 {
            (1.0 + jitter.sample(&mut rng)).max(0.1)
        } else {
            1.0
        };
        let r_t = r as f64 / fs;
        for &(offset, amp, width) in &WAVES {
            let offset = if offset.abs() > 0.1 {
                offset * stretch
            } else {
                offset
            };
            let center = r_t + offset;
            let lo = ((center - 5.0 * width) * fs).floor().max(0.0) as usize;
            let hi = (((center + 5.0 * width) * fs).ceil() as usize).min(n - 1);
            for (i, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let d = (i as f64 / fs - center) / width;
                *v += gain * amp * (-0.5 * d * d).exp();
            }
        }
    }

    if spec.baseline_wander_amp > 0.0 {
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *v += spec.baseline_wander_amp
                * (std::f64::consts::TAU * spec.baseline_wander_hz * t + phase).sin();
        }
    }
    if spec.noise_std > 0.0 {
        let noise =
            Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in x.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    Ok(SyntheticEcg {
        series: TimeSeries::new(x, fs)?,
        beat_indices: beats,
    })
}

/// Per-class settings of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticClass {
    pub heart_rate_bpm: f64,
    #[serde(default)]
    pub label_emotion: Option<u8>,
    pub rating_valence: f64,
    pub rating_arousal: f64,
    #[serde(default)]
    pub rating_dominance: Option<f64>,
}

/// One recording per (subject, class); everything else comes from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    #[serde(default)]
    pub base: SyntheticEcgSpec,
    pub subjects: usize,
    pub classes: Vec<SyntheticClass>,
    #[serde(default = "default_scale_max")]
    pub rating_scale_max: f64,
    /// Uniform per-subject heart-rate offset in `[-spread, spread]` bpm.
    #[serde(default)]
    pub subject_bpm_spread: f64,
    #[serde(default)]
    pub format: SignalFormat,
}

fn default_scale_max() -> f64 {
    9.0
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.classes.is_empty() {
            return Err(Error::InvalidArgument(
                "corpus needs at least one subject and one class".into(),
            ));
        }
        if !(self.subject_bpm_spread.is_finite() && self.subject_bpm_spread >= 0.0) {
            return Err(Error::InvalidArgument(
                "subject_bpm_spread must be non-negative".into(),
            ));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub rows: Vec<RecordingRow>,
    pub beat_indices: Vec<Vec<usize>>,
}

/// Writes `signals/*` and `manifest.csv` under `out_dir`.
pub fn generate_corpus(spec: &SyntheticCorpusSpec, out_dir: &Path) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let signal_dir = out_dir.join("signals");
    fs::create_dir_all(&signal_dir).map_err(|e| Error::io(&signal_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.base.seed);
    let mut rows = Vec::new();
    let mut beats = Vec::new();
    for subject in 0..spec.subjects {
        let offset = if spec.subject_bpm_spread > 0.0 {
            rng.gen_range(-spec.subject_bpm_spread..=spec.subject_bpm_spread)
        } else {
            0.0
        };
        for (ci, class) in spec.classes.iter().enumerate() {
            let ecg_spec = SyntheticEcgSpec {
                heart_rate_bpm: (class.heart_rate_bpm + offset).clamp(30.0, 220.0),
                seed: rng.gen(),
                ..spec.base
            };
            let ecg = generate_synthetic_ecg(&ecg_spec)?;
            let subject_id = format!("s{subject:03}");
            let file = format!("{subject_id}_c{ci}.{}", spec.format.extension());
            write_signal(&signal_dir.join(&file), &ecg.series)?;
            rows.push(RecordingRow {
                signal_path: format!("signals/{file}"),
                subject_id,
                session: ci.to_string(),
                sampling_rate_hz: spec.base.sampling_rate_hz,
                label_emotion: class.label_emotion,
                rating_valence: class.rating_valence,
                rating_arousal: class.rating_arousal,
                rating_dominance: class.rating_dominance,
                rating_scale_max: spec.rating_scale_max,
                duration_s: Some(ecg.series.duration_s()),
            });
            beats.push(ecg.beat_indices);
        }
    }
    for (i, r) in rows.iter().enumerate() {
        r.validate(i + 1)?;
    }
    write_manifest(&out_dir.join("manifest.csv"), &rows)?;
    Ok(SyntheticCorpus {
        rows,
        beat_indices: beats,
    })
}
