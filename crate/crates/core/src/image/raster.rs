use serde::{Deserialize, Serialize};

use crate::timefreq::{PsdEstimate, Scalogram};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSpec {
    pub height: usize,
    pub width: usize,
    /// `log1p` compression before normalisation.
    pub log_scale: bool,
    pub interpolation: Interpolation,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            height: 224,
            width: 224,
            log_scale: true,
            interpolation: Interpolation::Bilinear,
        }
    }
}

impl ImageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image size must be positive, got {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Single image channel with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRaster {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ChannelRaster {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Min-max to `[0, 1]`; a constant input becomes all 0.5.
    fn normalized(height: usize, width: usize, mut values: Vec<f64>) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = max - min;
        if !(range > 1e-12 * min.abs().max(max.abs())) {
            values.iter_mut().for_each(|v| *v = 0.5);
        } else {
            values
                .iter_mut()
                .for_each(|v| *v = ((*v - min) / range).clamp(0.0, 1.0));
        }
        Self {
            height,
            width,
            values,
        }
    }
}

/// Source coordinate of destination index `i` with pixel centres aligned.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64)
}

/// Indices and weight for interpolating one axis.
fn taps(i: usize, src: usize, dst: usize, interp: Interpolation) -> (usize, usize, f64) {
    let c = source_coord(i, src, dst);
    match interp {
        Interpolation::Bilinear => {
            let lo = c.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, c - lo as f64)
        }
        Interpolation::Nearest => {
            let idx = (((i as f64 + 0.5) * src as f64 / dst as f64) as usize).min(src - 1);
            (idx, idx, 0.0)
        }
    }
}

fn resample(
    src: &[f64],
    rows: usize,
    cols: usize,
    h: usize,
    w: usize,
    interp: Interpolation,
) -> Vec<f64> {
    let col_taps: Vec<_> = (0..w).map(|j| taps(j, cols, w, interp)).collect();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let (r0, r1, fy) = taps(i, rows, h, interp);
        for &(c0, c1, fx) in &col_taps {
            let top = src[r0 * cols + c0] * (1.0 - fx) + src[r0 * cols + c1] * fx;
            let bottom = src[r1 * cols + c0] * (1.0 - fx) + src[r1 * cols + c1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

fn compress(v: f64, log_scale: bool) -> f64 {
    if log_scale {
        v.ln_1p()
    } else {
        v
    }
}

/// Resizes a scalogram (rows stay highest frequency first) to `h x w`.
pub fn rasterize_scalogram(sg: &Scalogram, spec: &ImageSpec) -> ChannelRaster {
    let src: Vec<f64> = sg
        .magnitudes()
        .iter()
        .map(|&v| compress(v, spec.log_scale))
        .collect();
    let values = resample(
        &src,
        sg.num_scales(),
        sg.num_samples(),
        spec.height,
        spec.width,
        spec.interpolation,
    );
    ChannelRaster::normalized(spec.height, spec.width, values)
}

/// Resamples the (compressed) PSD curve onto `h` rows, highest frequency in
/// row 0, and repeats it across all `w` columns.
pub fn rasterize_psd(psd: &PsdEstimate, spec: &ImageSpec) -> ChannelRaster {
    let curve: Vec<f64> = psd
        .power
        .iter()
        .rev()
        .map(|&p| compress(p, spec.log_scale))
        .collect();
    let column = resample(&curve, curve.len(), 1, spec.height, 1, spec.interpolation);
    let values = column
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, spec.width))
        .collect();
    ChannelRaster::normalized(spec.height, spec.width, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TimeSeries;
    use crate::timefreq::{welch_psd, WelchSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sg(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Scalogram {
        let m = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Scalogram::from_matrix(
            m,
            rows,
            cols,
            (0..rows).map(|r| (rows - r) as f64).collect(),
        )
        .unwrap()
    }

    fn spec(h: usize, w: usize) -> ImageSpec {
        ImageSpec {
            height: h,
            width: w,
            ..Default::default()
        }
    }

    #[test]
    fn zero_scalogram_is_half_gray() {
        let r = rasterize_scalogram(&sg(50, 200, |_, _| 0.0), &spec(224, 224));
        assert!(r.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn shape_and_range() {
        let r = rasterize_scalogram(&sg(50, 200, |i, j| (i * j) as f64), &spec(224, 224));
        assert_eq!((r.height, r.width, r.values.len()), (224, 224, 224 * 224));
        let min = r.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((min, max), (0.0, 1.0));
    }

    #[test]
    fn ridge_position_preserved() {
        for ridge in [2usize, 7, 23, 31, 47] {
            for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
                let s = ImageSpec {
                    interpolation: interp,
                    ..spec(224, 224)
                };
                let r = rasterize_scalogram(
                    &sg(50, 200, |i, _| if i == ridge { 5.0 } else { 0.1 }),
                    &s,
                );
                let means: Vec<f64> = (0..224).map(|i| r.row(i).iter().sum::<f64>()).collect();
                let top = means.iter().copied().fold(f64::MIN, f64::max);
                // nearest-neighbour upsampling yields a band of equal rows; use its centre
                let band: Vec<usize> = (0..224).filter(|&i| means[i] == top).collect();
                let best = (band[0] + band[band.len() - 1]) as f64 / 2.0;
                let expected = (ridge as f64 + 0.5) * 224.0 / 50.0 - 0.5;
                assert!(
                    (best - expected).abs() <= 1.0,
                    "{interp:?} ridge {ridge}: {best} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn flat_psd_is_half_gray() {
        let psd = PsdEstimate::new((0..129).map(f64::from).collect(), vec![0.3; 129]).unwrap();
        let r = rasterize_psd(&psd, &spec(224, 224));
        assert!(r.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_bin_gives_one_band() {
        let mut power = vec![0.01; 129];
        power[40] = 10.0;
        let psd = PsdEstimate::new((0..129).map(f64::from).collect(), power).unwrap();
        let r = rasterize_psd(&psd, &spec(224, 64));
        for i in 0..224 {
            assert!(r.row(i).iter().all(|&v| v == r.get(i, 0)));
        }
        let max_rows: Vec<usize> = (0..224).filter(|&i| r.get(i, 0) == 1.0).collect();
        assert!(!max_rows.is_empty());
        assert!(max_rows.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn noise_and_tone_psd_rasters_differ() {
        let fs = 128.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..4992).map(|_| StandardNormal.sample(&mut rng)).collect();
        let tone: Vec<f64> = (0..4992)
            .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / fs).sin())
            .collect();
        let a = welch_psd(&TimeSeries::new(noise, fs).unwrap(), &WelchSpec::default()).unwrap();
        let b = welch_psd(&TimeSeries::new(tone, fs).unwrap(), &WelchSpec::default()).unwrap();
        let ra = rasterize_psd(&a, &spec(224, 224));
        let rb = rasterize_psd(&b, &spec(224, 224));
        let mad = ra
            .values
            .iter()
            .zip(&rb.values)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / ra.values.len() as f64;
        assert!(mad > 0.05, "{mad}");
    }
}
