//! PNG input/output helpers shared by rendering, training, and evaluation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Loads an RGB PNG as `(width, height, rgb bytes)`.
pub fn load_rgb(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, format!("png: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw()))
}

pub fn save_rgb(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    let img: image::RgbImage =
        image::ImageBuffer::from_raw(width, height, rgb.to_vec())
            .ok_or_else(|| Error::Invalid("pixel buffer size mismatch".into()))?;
    img.save(path).map_err(|e| {
        Error::io(
            path,
            std::io::Error::other(e.to_string()),
        )
    })
}

/// Loads a PNG into a `[-1, 1]` image tensor at the requested shape,
/// resampling with nearest-neighbor so results stay deterministic.
pub fn load_image_tensor(path: &Path, channels: usize, height: usize, width: usize) -> Result<ImageTensor> {
    if channels != 3 {
        return Err(Error::Invalid(format!("expected 3 channels, got {channels}")));
    }
    let (w, h, rgb) = load_rgb(path)?;
    let mut t = ImageTensor::zeros(channels, height, width);
    for y in 0..height {
        for x in 0..width {
            let sy = (y * h as usize) / height;
            let sx = (x * w as usize) / width;
            let base = (sy * w as usize + sx) * 3;
            for c in 0..3 {
                let v = rgb[base + c] as f64 / 255.0 * 2.0 - 1.0;
                *t.at_mut(c, y, x) = v;
            }
        }
    }
    Ok(t)
}

/// Writes a `[-1, 1]` tensor as an RGB PNG.
pub fn save_image_tensor(path: &Path, t: &ImageTensor) -> Result<()> {
    if t.channels != 3 {
        return Err(Error::Invalid(format!(
            "expected 3 channels, got {}",
            t.channels
        )));
    }
    let mut rgb = vec![0u8; t.height * t.width * 3];
    for y in 0..t.height {
        for x in 0..t.width {
            for c in 0..3 {
                let v = ((t.at(c, y, x) + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0);
                rgb[(y * t.width + x) * 3 + c] = v as u8;
            }
        }
    }
    save_rgb(path, t.width as u32, t.height as u32, &rgb)
}
