//! Frame image loading, downscaling and PNG/base64 encoding.

use std::io::Cursor;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use image::imageops::FilterType;
use image::{ImageFormat, RgbImage};

use crate::mask::FrameDims;

pub fn load_frame(path: &Path) -> image::ImageResult<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn frame_dims(path: &Path) -> image::ImageResult<FrameDims> {
    let (w, h) = image::image_dimensions(path)?;
    Ok(FrameDims::new(h, w))
}

/// Scales both sides by `scale`, rounding up and never below one pixel.
pub fn downscale(img: &RgbImage, scale: f64) -> RgbImage {
    let side = |v: u32| ((v as f64 * scale).ceil() as u32).max(1);
    let (w, h) = (side(img.width()), side(img.height()));
    if (w, h) == img.dimensions() {
        return img.clone();
    }
    image::imageops::resize(img, w, h, FilterType::Triangle)
}

pub fn encode_png_b64(img: &RgbImage) -> image::ImageResult<String> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(BASE64.encode(buf.into_inner()))
}
