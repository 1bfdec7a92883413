use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::signal::TimeSeries;
use crate::{Error, Result};

/// Kernel support in envelope standard deviations.
const SUPPORT_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorletSpec {
    pub num_scales: usize,
    /// Carrier cycles per envelope standard deviation, `omega0 / 2pi`.
    pub center_frequency_cycles: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
}

impl Default for MorletSpec {
    fn default() -> Self {
        Self {
            num_scales: 50,
            center_frequency_cycles: 1.0,
            freq_min_hz: 0.5,
            freq_max_hz: 20.0,
        }
    }
}

impl MorletSpec {
    /// The `omega0 = 6` variant common in the wavelet literature.
    pub fn omega0_six() -> Self {
        Self {
            center_frequency_cycles: 6.0 / (2.0 * PI),
            ..Self::default()
        }
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.center_frequency_cycles
    }

    pub fn validate(&self, fs_hz: Option<f64>) -> Result<()> {
        if self.num_scales < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 scales, got {}",
                self.num_scales
            )));
        }
        if !(self.center_frequency_cycles.is_finite() && self.center_frequency_cycles > 0.0) {
            return Err(Error::InvalidArgument(
                "center frequency must be positive".into(),
            ));
        }
        if !(self.freq_min_hz > 0.0 && self.freq_min_hz < self.freq_max_hz) {
            return Err(Error::InvalidArgument(format!(
                "analysis band must satisfy 0 < min < max, got {}..{}",
                self.freq_min_hz, self.freq_max_hz
            )));
        }
        if let Some(fs) = fs_hz {
            if self.freq_max_hz > fs / 2.0 {
                return Err(Error::AboveNyquist {
                    freq_hz: self.freq_max_hz,
                    nyquist_hz: fs / 2.0,
                });
            }
        }
        Ok(())
    }

    /// Log-spaced pseudo-frequencies, highest first.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        let (lo, hi) = (self.freq_min_hz.ln(), self.freq_max_hz.ln());
        let last = (self.num_scales - 1) as f64;
        (0..self.num_scales)
            .map(|k| (hi - (hi - lo) * k as f64 / last).exp())
            .collect()
    }

    /// Scale in samples for a pseudo-frequency.
    pub fn scale_for(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        self.center_frequency_cycles * fs_hz / freq_hz
    }
}

/// `|CWT|` over scale (rows, descending frequency) and time (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    magnitudes: Vec<f64>,
    num_scales: usize,
    num_samples: usize,
    pub scale_frequencies_hz: Vec<f64>,
    pub scales_samples: Vec<f64>,
    /// Per row, the number of columns at each edge whose kernel support
    /// reaches into the zero padding.
    pub cone_of_influence: Vec<usize>,
}

impl Scalogram {
    /// Builds a scalogram from a row-major matrix. Used for synthetic inputs
    /// to the imaging stage.
    pub fn from_matrix(
        magnitudes: Vec<f64>,
        num_scales: usize,
        num_samples: usize,
        scale_frequencies_hz: Vec<f64>,
    ) -> Result<Self> {
        if num_scales == 0 || num_samples == 0 || magnitudes.len() != num_scales * num_samples {
            return Err(Error::InvalidArgument(format!(
                "scalogram of {num_scales}x{num_samples} needs {} values, got {}",
                num_scales * num_samples,
                magnitudes.len()
            )));
        }
        if scale_frequencies_hz.len() != num_scales {
            return Err(Error::InvalidArgument(
                "one frequency per row required".into(),
            ));
        }
        if magnitudes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "scalogram entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            magnitudes,
            num_scales,
            num_samples,
            scale_frequencies_hz,
            scales_samples: vec![f64::NAN; num_scales],
            cone_of_influence: vec![0; num_scales],
        })
    }

    pub fn num_scales(&self) -> usize {
        self.num_scales
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.magnitudes[k * self.num_samples..(k + 1) * self.num_samples]
    }

    pub fn get(&self, scale: usize, sample: usize) -> f64 {
        self.magnitudes[scale * self.num_samples + sample]
    }

    /// Columns clear of every row's cone of influence. Empty when the
    /// signal is too short.
    pub fn interior_columns(&self) -> Range<usize> {
        let margin = self.cone_of_influence.iter().copied().max().unwrap_or(0);
        if 2 * margin >= self.num_samples {
            return 0..0;
        }
        margin..self.num_samples - margin
    }

    /// Row index of the largest magnitude in column `sample`.
    pub fn ridge_row(&self, sample: usize) -> usize {
        (0..self.num_scales)
            .max_by(|&a, &b| {
                self.get(a, sample)
                    .total_cmp(&self.get(b, sample))
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }
}

/// Sampled complex Morlet kernel at `scale` samples, L1-normalised by `1/scale`
/// so that a unit sinusoid peaks at the scale whose pseudo-frequency matches.
/// Index `j` of the result corresponds to offset `j - half_width`.
pub fn morlet_kernel(scale: f64, omega0: f64) -> Vec<Complex64> {
    let half = (SUPPORT_SIGMAS * scale).ceil() as i64;
    let norm = PI.powf(-0.25) / scale;
    (-half..=half)
        .map(|n| {
            let t = n as f64 / scale;
            Complex64::from_polar(norm * (-0.5 * t * t).exp(), omega0 * t)
        })
        .collect()
}

/// Continuous wavelet transform with the complex Morlet wavelet, one row per
/// pseudo-frequency, computed by zero-padded FFT convolution.
pub fn cwt_morlet(ts: &TimeSeries, spec: &MorletSpec) -> Result<Scalogram> {
    if ts.len() < 8 {
        return Err(Error::TooShort {
            needed: 8,
            actual: ts.len(),
        });
    }
    let fs = ts.sampling_rate_hz();
    spec.validate(Some(fs))?;

    let n = ts.len();
    let freqs = spec.frequencies_hz();
    let scales: Vec<f64> = freqs.iter().map(|&f| spec.scale_for(f, fs)).collect();
    let max_half = scales
        .iter()
        .map(|s| (SUPPORT_SIGMAS * s).ceil() as usize)
        .max()
        .unwrap_or(0);
    let fft_len = (n + 2 * max_half + 1).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);

    let mut spectrum: Vec<Complex64> = ts
        .samples()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    forward.process(&mut spectrum);

    let omega0 = spec.omega0();
    let inv_len = 1.0 / fft_len as f64;
    let rows: Vec<Vec<f64>> = scales
        .par_iter()
        .map(|&scale| {
            let kernel = morlet_kernel(scale, omega0);
            let half = (kernel.len() / 2) as i64;
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
            for (j, &k) in kernel.iter().enumerate() {
                let offset = j as i64 - half;
                buf[offset.rem_euclid(fft_len as i64) as usize] = k;
            }
            forward.process(&mut buf);
            for (b, x) in buf.iter_mut().zip(&spectrum) {
                *b *= x;
            }
            inverse.process(&mut buf);
            buf[..n].iter().map(|c| c.norm() * inv_len).collect()
        })
        .collect();

    let cone_of_influence = scales
        .iter()
        .map(|s| (SUPPORT_SIGMAS * s).ceil() as usize)
        .collect();
    Ok(Scalogram {
        magnitudes: rows.concat(),
        num_scales: scales.len(),
        num_samples: n,
        scale_frequencies_hz: freqs,
        scales_samples: scales,
        cone_of_influence,
    })
}
