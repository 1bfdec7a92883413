//! ECG cleaning and segmentation.

mod baseline;
mod filter;
mod peaks;
mod segment;
mod series;

pub use baseline::{remove_baseline, BaselineSpec};
pub use filter::{
    apply_filter, design_bandpass, BandpassSpec, Biquad, FilterCoefficients, OrderConvention,
};
pub use peaks::{default_min_distance, detect_r_peaks, PeakList};
pub use segment::{segment_around_peaks, Segment, Segmentation, SEGMENT_LEN};
pub use series::TimeSeries;
