use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

/// Pre-stimulus window whose mean is subtracted from the whole recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub window_s: f64,
    /// Drop the baseline window from the returned signal.
    pub discard_window: bool,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            discard_window: false,
        }
    }
}

impl BaselineSpec {
    pub fn window_samples(&self, sampling_rate_hz: f64) -> usize {
        (self.window_s * sampling_rate_hz).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "baseline window must be positive, got {} s",
                self.window_s
            )));
        }
        Ok(())
    }
}

/// Subtracts the mean of the first `window_s` seconds from every sample.
pub fn remove_baseline(ts: &TimeSeries, spec: &BaselineSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let window = spec.window_samples(ts.sampling_rate_hz());
    if window == 0 {
        return Err(Error::InvalidArgument(format!(
            "baseline window of {} s is shorter than one sample at {} Hz",
            spec.window_s,
            ts.sampling_rate_hz()
        )));
    }
    if window > ts.len() {
        return Err(Error::TooShort {
            needed: window,
            actual: ts.len(),
        });
    }
    let head = &ts.samples()[..window];
    let baseline = head.iter().sum::<f64>() / window as f64;
    let skip = if spec.discard_window { window } else { 0 };
    if skip == ts.len() {
        return Err(Error::TooShort {
            needed: window + 1,
            actual: ts.len(),
        });
    }
    let out = ts.samples()[skip..].iter().map(|v| v - baseline).collect();
    ts.with_samples(out)
}
