//! Three-channel image encoding of the time-frequency maps.
//!
//! Channel assignment is fixed: red carries the scalogram of one beat
//! segment, green the scalogram of the whole filtered recording, blue the
//! Welch PSD of the whole recording replicated along the time axis.

mod compose;
mod png;
mod raster;

pub use compose::{compose_rgb, EncodedImage, Provenance, RecordingContext, CHANNEL_LAYOUT};
pub use png::{read_png, write_png};
pub use raster::{rasterize_psd, rasterize_scalogram, ChannelRaster, ImageSpec, Interpolation};
