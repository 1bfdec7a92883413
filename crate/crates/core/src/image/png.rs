use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use super::EncodedImage;
use crate::{Error, Result};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGB PNG.
pub fn write_png(img: &EncodedImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    let buf: RgbImage = ImageBuffer::from_raw(img.width as u32, img.height as u32, raw)
        .ok_or_else(|| Error::InvalidArgument("pixel buffer does not match image size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_png(path: impl AsRef<Path>) -> Result<EncodedImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let decoded = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .flat_map(|Rgb(p)| p.map(|c| c as f64 / 255.0))
        .collect();
    EncodedImage::new(h as usize, w as usize, pixels)
}
