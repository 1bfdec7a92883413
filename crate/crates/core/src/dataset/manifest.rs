use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::read_signal;
use crate::signal::TimeSeries;
use crate::{Error, Result};

pub const EMOTION_CLASSES: u8 = 7;

/// One line of the recording manifest CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingRow {
    pub signal_path: String,
    pub subject_id: String,
    pub session: String,
    pub sampling_rate_hz: f64,
    pub label_emotion: Option<u8>,
    pub rating_valence: f64,
    pub rating_arousal: f64,
    pub rating_dominance: Option<f64>,
    pub rating_scale_max: f64,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

impl RecordingRow {
    /// File stem of the signal path.
    pub fn recording_id(&self) -> String {
        Path::new(&self.signal_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.signal_path.clone())
    }

    /// Row-level invariants; `row` is 1-based for messages.
    pub fn validate(&self, row: usize) -> Result<()> {
        let manifest = |message: String| Error::Manifest { row, message };
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(manifest(format!(
                "sampling_rate_hz must be positive, got {}",
                self.sampling_rate_hz
            )));
        }
        if !(self.rating_scale_max.is_finite() && self.rating_scale_max > 1.0) {
            return Err(manifest(format!(
                "rating_scale_max must exceed 1, got {}",
                self.rating_scale_max
            )));
        }
        if self.subject_id.trim().is_empty() {
            return Err(manifest("subject_id is empty".into()));
        }
        if let Some(e) = self.label_emotion {
            if e >= EMOTION_CLASSES {
                return Err(manifest(format!(
                    "label_emotion {e} is not below {EMOTION_CLASSES}"
                )));
            }
        }
        let ratings = [
            ("rating_valence", Some(self.rating_valence)),
            ("rating_arousal", Some(self.rating_arousal)),
            ("rating_dominance", self.rating_dominance),
        ];
        for (field, value) in ratings {
            if let Some(v) = value {
                if !(1.0..=self.rating_scale_max).contains(&v) {
                    return Err(Error::RatingOutOfRange {
                        row,
                        field,
                        value: v,
                        min: 1.0,
                        max: self.rating_scale_max,
                    });
                }
            }
        }
        if let Some(d) = self.duration_s {
            if !(d.is_finite() && d > 0.0) {
                return Err(manifest(format!("duration_s must be positive, got {d}")));
            }
        }
        Ok(())
    }

    pub fn resolve_path(&self, base_dir: &Path) -> PathBuf {
        let p = Path::new(&self.signal_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }

    /// Reads the signal and checks its length against `duration_s`.
    pub fn load(&self, base_dir: &Path) -> Result<Recording> {
        let path = self.resolve_path(base_dir);
        let series = read_signal(&path, self.sampling_rate_hz)?;
        if let Some(d) = self.duration_s {
            let expected = (d * self.sampling_rate_hz).round() as usize;
            if expected != series.len() {
                return Err(Error::LengthMismatch {
                    path,
                    expected,
                    actual: series.len(),
                });
            }
        }
        Ok(Recording {
            row: self.clone(),
            series,
        })
    }
}

/// A loaded signal together with its manifest row.
#[derive(Debug, Clone)]
pub struct Recording {
    pub row: RecordingRow,
    pub series: TimeSeries,
}

/// Parses and validates every row before any signal file is touched.
pub fn read_manifest(path: &Path) -> Result<Vec<RecordingRow>> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<RecordingRow>().enumerate() {
        let row = rec.map_err(|e| Error::csv(path, e))?;
        row.validate(i + 1)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[RecordingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_signal;

    fn row(path: &str) -> RecordingRow {
        RecordingRow {
            signal_path: path.into(),
            subject_id: "s01".into(),
            session: "1".into(),
            sampling_rate_hz: 128.0,
            label_emotion: Some(3),
            rating_valence: 6.0,
            rating_arousal: 2.0,
            rating_dominance: None,
            rating_scale_max: 9.0,
            duration_s: Some(39.0),
        }
    }

    #[test]
    fn round_trip_and_load() {
        let dir = tempfile::tempdir().unwrap();
        write_signal(
            &dir.path().join("rec.csv"),
            &TimeSeries::new(vec![0.5; 4992], 128.0).unwrap(),
        )
        .unwrap();
        let m = dir.path().join("manifest.csv");
        write_manifest(&m, &[row("rec.csv")]).unwrap();
        let rows = read_manifest(&m).unwrap();
        assert_eq!(rows, vec![row("rec.csv")]);
        let rec = rows[0].load(dir.path()).unwrap();
        assert_eq!(rec.series.len(), 4992);
        assert_eq!(rows[0].recording_id(), "rec");
    }

    #[test]
    fn duration_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_signal(
            &dir.path().join("rec.csv"),
            &TimeSeries::new(vec![0.5; 1000], 128.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            row("rec.csv").load(dir.path()),
            Err(Error::LengthMismatch {
                expected: 4992,
                actual: 1000,
                ..
            })
        ));
    }

    #[test]
    fn rating_out_of_range_fails_before_io() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = row("does_not_exist.csv");
        bad.rating_arousal = 10.0;
        let m = dir.path().join("manifest.csv");
        write_manifest(&m, &[row("also_missing.csv"), bad]).unwrap();
        assert!(matches!(
            read_manifest(&m),
            Err(Error::RatingOutOfRange {
                row: 2,
                field: "rating_arousal",
                ..
            })
        ));
    }

    #[test]
    fn emotion_label_bound() {
        let mut r = row("x.csv");
        r.label_emotion = Some(7);
        assert!(matches!(r.validate(1), Err(Error::Manifest { .. })));
    }

    #[test]
    fn missing_signal_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            row("gone.csv").load(dir.path()),
            Err(Error::MissingFile { .. })
        ));
    }
}
