//! PNG reading and writing: 8-bit RGB images and 16-bit gray transmission maps.

use std::path::Path;

use anyhow::{Context, Result};
use aqua_core::{Image, TransmissionMap};
use image::{ImageBuffer, Luma, Rgb};

const T_SCALE: f64 = u16::MAX as f64;

pub fn read_rgb_png(path: &Path) -> Result<Image> {
    let rgb = image::open(path)
        .with_context(|| format!("cannot read image {}", path.display()))?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
    Ok(Image::new(h as usize, w as usize, data)?)
}

pub fn write_rgb_png(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_transmission_png(path: &Path) -> Result<TransmissionMap> {
    let gray = image::open(path)
        .with_context(|| format!("cannot read transmission map {}", path.display()))?
        .to_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| f64::from(v) / T_SCALE).collect();
    Ok(TransmissionMap::new(h as usize, w as usize, data)?)
}

/// Stores `round(t · 65535)` as 16-bit gray.
pub fn write_transmission_png(t: &TransmissionMap, path: &Path) -> Result<()> {
    let (h, w) = t.dims();
    let values: Vec<u16> = t.data().iter().map(|v| (v * T_SCALE).round() as u16).collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, values)
        .expect("buffer length matches dimensions");
    buf.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}
