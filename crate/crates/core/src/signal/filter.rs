use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

/// How the configured `order` maps onto the Butterworth design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderConvention {
    /// `order` is the low-pass prototype order; the band-pass has twice as
    /// many poles.
    #[default]
    Prototype,
    /// `order` is the total band-pass order (must be even).
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandpassSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub convention: OrderConvention,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self {
            order: 2,
            low_hz: 0.5,
            high_hz: 15.0,
            convention: OrderConvention::Prototype,
        }
    }
}

impl BandpassSpec {
    pub fn prototype_order(&self) -> Result<usize> {
        match self.convention {
            OrderConvention::Prototype if self.order >= 1 => Ok(self.order),
            OrderConvention::Total if self.order >= 2 && self.order.is_multiple_of(2) => {
                Ok(self.order / 2)
            }
            _ => Err(Error::InvalidArgument(format!(
                "order {} is not valid under the {:?} convention",
                self.order, self.convention
            ))),
        }
    }

    /// Checks the cutoffs, and when `fs_hz` is given, their position below Nyquist.
    pub fn validate(&self, fs_hz: Option<f64>) -> Result<()> {
        self.prototype_order()?;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cutoffs must satisfy 0 < low < high, got {} and {}",
                self.low_hz, self.high_hz
            )));
        }
        if let Some(fs) = fs_hz {
            if self.high_hz >= fs / 2.0 {
                return Err(Error::AboveNyquist {
                    freq_hz: self.high_hz,
                    nyquist_hz: fs / 2.0,
                });
            }
        }
        Ok(())
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z_inv2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z_inv2) / (1.0 + self.a1 * z_inv + self.a2 * z_inv2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Transposed direct-form II state reached after a long unit step.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b2 - self.a2 * g;
        [g - self.b0, z2]
    }

    fn run(&self, data: &mut [f64], mut state: [f64; 2]) {
        for x in data.iter_mut() {
            let input = *x;
            let y = self.b0 * input + state[0];
            state[0] = self.b1 * input - self.a1 * y + state[1];
            state[1] = self.b2 * input - self.a2 * y;
            *x = y;
        }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub sections: Vec<Biquad>,
    /// Samples of mirrored padding added at each end by [`apply_filter`].
    pub pad_len: usize,
}

impl FilterCoefficients {
    pub fn frequency_response(&self, freq_hz: f64, fs_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs_hz);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    /// Single-pass magnitude in dB.
    pub fn magnitude_db(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        20.0 * self.frequency_response(freq_hz, fs_hz).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.sections
            .iter()
            .all(|s| [s.b0, s.b1, s.b2, s.a1, s.a2].iter().all(|c| c.is_finite()))
            && self.poles().iter().all(|p| p.norm() < 1.0)
    }

    fn filter_with_initial(&self, data: &mut [f64]) {
        let Some(&first) = data.first() else { return };
        let mut scale = first;
        for section in &self.sections {
            let [z1, z2] = section.step_state();
            section.run(data, [z1 * scale, z2 * scale]);
            scale *= section.dc_gain();
        }
    }
}

/// Butterworth band-pass: analog prototype, low-pass to band-pass mapping on
/// pre-warped edges, bilinear transform, then grouping into biquads.
pub fn design_bandpass(spec: &BandpassSpec, fs_hz: f64) -> Result<FilterCoefficients> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate must be positive, got {fs_hz}"
        )));
    }
    spec.validate(Some(fs_hz))?;
    let n = spec.prototype_order()?;

    let fs2 = 2.0 * fs_hz;
    let warp = |f: f64| fs2 * (PI * f / fs_hz).tan();
    let w_lo = warp(spec.low_hz);
    let w_hi = warp(spec.high_hz);
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    // Analog band-pass poles: each prototype pole p yields the roots of
    // s^2 - p*bw*s + w0^2.
    let mut analog_poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let root = (p * p - w0_sq).sqrt();
        analog_poles.push(p + root);
        analog_poles.push(p - root);
    }

    // n zeros at s = 0 map to z = 1; n zeros at infinity map to z = -1.
    let mut gain = Complex64::new(bw.powi(n as i32), 0.0) * fs2.powi(n as i32);
    let mut digital_poles = Vec::with_capacity(2 * n);
    for &p in &analog_poles {
        gain /= fs2 - p;
        digital_poles.push((fs2 + p) / (fs2 - p));
    }
    let gain = gain.re;

    let pairs = pair_conjugates(digital_poles)?;
    let per_section = gain.abs().powf(1.0 / pairs.len() as f64);
    let mut sections: Vec<Biquad> = pairs
        .into_iter()
        .map(|(p, q)| {
            let sum = p + q;
            let prod = p * q;
            Biquad {
                b0: per_section,
                b1: 0.0,
                b2: -per_section,
                a1: -sum.re,
                a2: prod.re,
            }
        })
        .collect();
    if gain < 0.0 {
        let s = &mut sections[0];
        s.b0 = -s.b0;
        s.b2 = -s.b2;
    }

    // One period of the lower cutoff lets the start-up transient die out
    // inside the padding.
    let pad_len = (fs_hz / spec.low_hz).round() as usize;
    let coeffs = FilterCoefficients { sections, pad_len };
    if !coeffs.is_stable() {
        return Err(Error::InvalidArgument(
            "designed filter is unstable; cutoffs too close to 0 or Nyquist".into(),
        ));
    }
    Ok(coeffs)
}

fn pair_conjugates(poles: Vec<Complex64>) -> Result<Vec<(Complex64, Complex64)>> {
    const IMAG_EPS: f64 = 1e-12;
    let mut complex: Vec<Complex64> = Vec::new();
    let mut real: Vec<Complex64> = Vec::new();
    for p in poles {
        if p.im.abs() <= IMAG_EPS * p.norm().max(1.0) {
            real.push(Complex64::new(p.re, 0.0));
        } else if p.im > 0.0 {
            complex.push(p);
        }
    }
    if !real.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument("odd number of real poles".into()));
    }
    real.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut pairs: Vec<_> = complex.into_iter().map(|p| (p, p.conj())).collect();
    pairs.extend(real.chunks(2).map(|c| (c[0], c[1])));
    Ok(pairs)
}

/// Zero-phase (forward-backward) filtering. Both ends are padded by
/// mirroring (no edge sample repeated) and each pass starts from the
/// steady state of a step at its first sample.
pub fn apply_filter(ts: &TimeSeries, coeffs: &FilterCoefficients) -> Result<TimeSeries> {
    if ts.is_empty() {
        return Err(Error::Empty);
    }
    if !coeffs.is_stable() {
        return Err(Error::InvalidArgument("filter is not stable".into()));
    }
    let x = ts.samples();
    let n = x.len();
    let pad = coeffs.pad_len.min(n - 1);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| x[n - 1 - i]));

    coeffs.filter_with_initial(&mut ext);
    ext.reverse();
    coeffs.filter_with_initial(&mut ext);
    ext.reverse();

    ts.with_samples(ext[pad..pad + n].to_vec())
}
