use crate::{Error, Result};

/// Uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sampling_rate_hz: f64,
}

impl TimeSeries {
    /// Rejects empty input, non-positive rates and non-finite samples.
    pub fn new(samples: Vec<f64>, sampling_rate_hz: f64) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            samples,
            sampling_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sampling_rate_hz / 2.0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    /// Same rate, new samples. Samples produced by internal arithmetic on
    /// finite inputs stay finite, so this skips revalidation of the rate.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sampling_rate_hz)
    }

    /// Copy of `samples[start..end]` at the same rate.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} out of bounds for length {}",
                self.samples.len()
            )));
        }
        Self::new(self.samples[start..end].to_vec(), self.sampling_rate_hz)
    }
}
