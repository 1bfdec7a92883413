use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::signal::TimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Symmetric Hann.
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let phase = 2.0 * PI * n as f64 / denom;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelchSpec {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: Window,
}

impl Default for WelchSpec {
    fn default() -> Self {
        Self {
            segment_length: 256,
            overlap_fraction: 0.5,
            window: Window::Hann,
        }
    }
}

impl WelchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 2 {
            return Err(Error::InvalidArgument(format!(
                "segment length must be at least 2, got {}",
                self.segment_length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidArgument(format!(
                "overlap fraction must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        let overlap = (self.segment_length as f64 * self.overlap_fraction).floor() as usize;
        (self.segment_length - overlap).max(1)
    }
}

/// One-sided power spectral density in amplitude^2 / Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdEstimate {
    pub fn new(frequencies_hz: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        if frequencies_hz.is_empty() || frequencies_hz.len() != power.len() {
            return Err(Error::InvalidArgument(format!(
                "PSD needs matching non-empty axes, got {} frequencies and {} powers",
                frequencies_hz.len(),
                power.len()
            )));
        }
        if power.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "PSD power must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            frequencies_hz,
            power,
        })
    }

    pub fn resolution_hz(&self) -> f64 {
        match self.frequencies_hz.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }

    /// Integral of the density, `sum(power) * df`.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution_hz()
    }

    pub fn peak_frequency_hz(&self) -> f64 {
        let idx = (0..self.power.len())
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        self.frequencies_hz[idx]
    }
}

/// Welch estimate: windowed periodograms over hopped segments, averaged,
/// without detrending.
pub fn welch_psd(ts: &TimeSeries, spec: &WelchSpec) -> Result<PsdEstimate> {
    spec.validate()?;
    let len = spec.segment_length;
    if ts.len() < len {
        return Err(Error::TooShort {
            needed: len,
            actual: ts.len(),
        });
    }
    let fs = ts.sampling_rate_hz();
    let window = spec.window.coefficients(len);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let hop = spec.hop();
    let bins = len / 2 + 1;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let x = ts.samples();
    let mut start = 0;
    while start + len <= x.len() {
        for ((b, &v), &w) in buf.iter_mut().zip(&x[start..start + len]).zip(&window) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let scale = 1.0 / (fs * window_energy * segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || (len.is_multiple_of(2) && k == len / 2) {
                1.0
            } else {
                2.0
            };
            p * scale * one_sided
        })
        .collect();
    let frequencies_hz = (0..bins).map(|k| k as f64 * fs / len as f64).collect();
    PsdEstimate::new(frequencies_hz, power)
}
