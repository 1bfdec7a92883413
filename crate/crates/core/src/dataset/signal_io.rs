use std::fs;
use std::io::Write;
use std::path::Path;

use crate::signal::TimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalFormat {
    /// One amplitude per line.
    #[default]
    Csv,
    /// Raw little-endian `f64`.
    F64,
}

impl SignalFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => Ok(SignalFormat::Csv),
            Some("f64") | Some("bin") => Ok(SignalFormat::F64),
            other => Err(Error::InvalidArgument(format!(
                "{}: unknown signal extension {other:?} (expected .csv or .f64)",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            SignalFormat::Csv => "csv",
            SignalFormat::F64 => "f64",
        }
    }
}

/// Reads samples only; the caller supplies the rate.
pub fn read_signal(path: &Path, sampling_rate_hz: f64) -> Result<TimeSeries> {
    let format = SignalFormat::from_path(path)?;
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let samples = match format {
        SignalFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let field = line.split(',').next().unwrap_or("").trim();
                if field.is_empty() {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| Error::NonNumeric {
                    path: path.to_path_buf(),
                    line: i + 1,
                    value: field.to_string(),
                })?;
                out.push(v);
            }
            out
        }
        SignalFormat::F64 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "{}: length {} is not a multiple of 8",
                    path.display(),
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    TimeSeries::new(samples, sampling_rate_hz)
}

/// Writes in the format implied by the extension.
pub fn write_signal(path: &Path, ts: &TimeSeries) -> Result<()> {
    let format = SignalFormat::from_path(path)?;
    let bytes: Vec<u8> = match format {
        SignalFormat::Csv => {
            let mut buf = Vec::with_capacity(ts.len() * 20);
            for v in ts.samples() {
                writeln!(buf, "{v}").expect("write to Vec");
            }
            buf
        }
        SignalFormat::F64 => ts.samples().iter().flat_map(|v| v.to_le_bytes()).collect(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_raw_round_trip_bit_equal() {
        let dir = tempfile::tempdir().unwrap();
        let ts = TimeSeries::new(
            (0..500)
                .map(|i| (i as f64 * 0.123).sin() * 1e-3 + 1.0 / 3.0)
                .collect(),
            128.0,
        )
        .unwrap();
        for name in ["a.csv", "a.f64"] {
            let p = dir.path().join(name);
            write_signal(&p, &ts).unwrap();
            let back = read_signal(&p, 128.0).unwrap();
            assert_eq!(back, ts);
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "").unwrap();
        assert!(matches!(
            read_signal(&p, 128.0),
            Err(Error::EmptyFile { .. })
        ));
    }

    #[test]
    fn non_numeric_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1.0\n2.0\nabc\n").unwrap();
        match read_signal(&p, 128.0) {
            Err(Error::NonNumeric { line, value, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            read_signal(Path::new("/no/such/file.csv"), 128.0),
            Err(Error::MissingFile { .. })
        ));
    }

    #[test]
    fn yaad_length_is_39_seconds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        write_signal(&p, &TimeSeries::new(vec![0.25; 4992], 128.0).unwrap()).unwrap();
        assert_eq!(read_signal(&p, 128.0).unwrap().duration_s(), 39.0);
    }
}
