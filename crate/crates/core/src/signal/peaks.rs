use super::TimeSeries;
use crate::{Error, Result};

/// Strictly increasing sample indices of detected R-peaks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeakList {
    indices: Vec<usize>,
}

impl PeakList {
    /// Sorts and deduplicates.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `round(0.4 * fs)`, a 150 bpm ceiling.
pub fn default_min_distance(sampling_rate_hz: f64) -> usize {
    ((0.4 * sampling_rate_hz).round() as usize).max(1)
}

/// Local maxima at or above `relative_threshold * max(signal)`, thinned so
/// that kept peaks are at least `min_distance_samples` apart. Larger peaks win
/// conflicts; equal heights resolve to the earlier index.
pub fn detect_r_peaks(
    ts: &TimeSeries,
    relative_threshold: f64,
    min_distance_samples: usize,
) -> Result<PeakList> {
    if !(relative_threshold > 0.0 && relative_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relative threshold must lie in (0, 1], got {relative_threshold}"
        )));
    }
    if min_distance_samples == 0 {
        return Err(Error::InvalidArgument(
            "minimum peak distance must be at least 1".into(),
        ));
    }
    let x = ts.samples();
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = relative_threshold * max;

    let mut candidates: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&i| x[i] >= threshold)
        .collect();

    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_distance_samples) {
            kept.push(c);
        }
    }
    Ok(PeakList::new(kept))
}

/// Indices strictly above both neighbours. A flat top counts once, at its
/// leftmost index, when both sides of the plateau are lower.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
