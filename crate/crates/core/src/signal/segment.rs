use super::{PeakList, TimeSeries};
use crate::{Error, Result};

pub const SEGMENT_LEN: usize = 200;

/// Fixed-width window centred on an R-peak.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub center_index: usize,
    pub start: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.samples.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Peaks too close to either end of the signal.
    pub skipped: Vec<usize>,
}

/// Cuts `[peak - left, peak + right)` around every peak that fits; the rest
/// go to `skipped`.
pub fn segment_around_peaks(
    ts: &TimeSeries,
    peaks: &PeakList,
    left: usize,
    right: usize,
) -> Result<Segmentation> {
    if left + right == 0 {
        return Err(Error::InvalidArgument(
            "segment width must be positive".into(),
        ));
    }
    let x = ts.samples();
    let mut out = Segmentation::default();
    for &peak in peaks.indices() {
        if peak < left || peak + right > x.len() {
            out.skipped.push(peak);
            continue;
        }
        let start = peak - left;
        out.segments.push(Segment {
            samples: x[start..peak + right].to_vec(),
            center_index: peak,
            start,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> TimeSeries {
        TimeSeries::new((0..n).map(|i| i as f64).collect(), 128.0).unwrap()
    }

    #[test]
    fn window_arithmetic() {
        let s = segment_around_peaks(&ramp(1000), &PeakList::new(vec![150]), 100, 100).unwrap();
        assert_eq!(s.segments.len(), 1);
        let seg = &s.segments[0];
        assert_eq!((seg.start, seg.end()), (50, 250));
        assert_eq!(seg.samples.len(), SEGMENT_LEN);
        assert_eq!(seg.samples[0], 50.0);
    }

    #[test]
    fn boundary_peaks_are_skipped() {
        let s = segment_around_peaks(&ramp(1000), &PeakList::new(vec![40, 950]), 100, 100).unwrap();
        assert!(s.segments.is_empty());
        assert_eq!(s.skipped, vec![40, 950]);
    }

    #[test]
    fn exact_boundaries_fit() {
        let s =
            segment_around_peaks(&ramp(1000), &PeakList::new(vec![100, 900]), 100, 100).unwrap();
        assert_eq!(s.segments.len(), 2);
    }

    #[test]
    fn interior_peaks() {
        let s = segment_around_peaks(&ramp(1000), &PeakList::new(vec![200, 500, 800]), 100, 100)
            .unwrap();
        assert_eq!(s.segments.len(), 3);
        assert!(s.segments.iter().all(|g| g.samples.len() == 200));
    }

    proptest! {
        #[test]
        fn segments_plus_skipped_equals_peaks(
            peaks in prop::collection::btree_set(0usize..600, 0..40),
            left in 1usize..150,
            right in 1usize..150,
        ) {
            let list = PeakList::new(peaks.into_iter().collect());
            let s = segment_around_peaks(&ramp(600), &list, left, right).unwrap();
            prop_assert_eq!(s.segments.len() + s.skipped.len(), list.len());
            for g in &s.segments {
                prop_assert_eq!(g.samples.len(), left + right);
            }
        }
    }
}
