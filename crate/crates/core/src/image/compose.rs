use serde::{Deserialize, Serialize};

use super::raster::{rasterize_psd, rasterize_scalogram, ChannelRaster, ImageSpec};
use crate::timefreq::{PsdEstimate, Scalogram};
use crate::{Error, Result};

/// Recorded in image metadata so the channel order is never implicit.
pub const CHANNEL_LAYOUT: [&str; 3] = ["segment_cwt", "recording_cwt", "recording_psd"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub recording_id: String,
    pub subject_id: String,
    pub segment_index: usize,
}

/// `H x W x 3` image with channels interleaved, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl EncodedImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(Error::InvalidArgument(format!(
                "{height}x{width}x3 image needs {} values, got {}",
                height * width * 3,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
            provenance: None,
        })
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * 3 + channel]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().skip(c).step_by(3).copied().collect()
    }

    /// Channel-major copy, `[3, H, W]`.
    pub fn to_chw(&self) -> Vec<f64> {
        (0..3).flat_map(|c| self.channel(c)).collect()
    }
}

/// Whole-recording channels, shared by every segment image of that recording.
#[derive(Debug, Clone)]
pub struct RecordingContext {
    pub recording_id: String,
    pub subject_id: String,
    scale_frequencies_hz: Vec<f64>,
    full: ChannelRaster,
    psd: ChannelRaster,
}

impl RecordingContext {
    pub fn new(
        recording_id: impl Into<String>,
        subject_id: impl Into<String>,
        full_scalogram: &Scalogram,
        full_psd: &PsdEstimate,
        spec: &ImageSpec,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            recording_id: recording_id.into(),
            subject_id: subject_id.into(),
            scale_frequencies_hz: full_scalogram.scale_frequencies_hz.clone(),
            full: rasterize_scalogram(full_scalogram, spec),
            psd: rasterize_psd(full_psd, spec),
        })
    }
}

/// Interleaves the segment scalogram raster with the recording's shared
/// channels.
pub fn compose_rgb(
    segment_scalogram: &Scalogram,
    provenance: Provenance,
    recording: &RecordingContext,
    spec: &ImageSpec,
) -> Result<EncodedImage> {
    if provenance.recording_id != recording.recording_id
        || provenance.subject_id != recording.subject_id
    {
        return Err(Error::Provenance(format!(
            "segment from {}/{} composed with recording {}/{}",
            provenance.subject_id,
            provenance.recording_id,
            recording.subject_id,
            recording.recording_id
        )));
    }
    if segment_scalogram.scale_frequencies_hz != recording.scale_frequencies_hz {
        return Err(Error::Provenance(
            "segment and recording scalograms use different scale grids".into(),
        ));
    }
    if (spec.height, spec.width) != (recording.full.height, recording.full.width) {
        return Err(Error::InvalidArgument(
            "image size differs from the recording context".into(),
        ));
    }
    let seg = rasterize_scalogram(segment_scalogram, spec);
    let pixels = seg
        .values
        .iter()
        .zip(&recording.full.values)
        .zip(&recording.psd.values)
        .flat_map(|((&r, &g), &b)| [r, g, b])
        .collect();
    Ok(EncodedImage {
        height: spec.height,
        width: spec.width,
        pixels,
        provenance: Some(provenance),
    })
}
