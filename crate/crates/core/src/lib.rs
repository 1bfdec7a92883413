//! Signal side of the ES-ViT pipeline.
//!
//! Raw single-lead ECG goes through [`signal`] (baseline removal, zero-phase
//! Butterworth band-pass, R-peak detection, fixed-width segmentation), then
//! [`timefreq`] (complex Morlet scalograms and Welch PSD), and finally
//! [`image`] which packs the time-frequency maps into three-channel images.
//! [`dataset`] handles manifests, signal files, synthetic corpora and splits.

pub mod dataset;
pub mod error;
pub mod image;
pub mod signal;
pub mod timefreq;

pub use error::{Error, Result};
pub use signal::TimeSeries;
