//! PNG reading and writing of luminance rasters.
//!
//! 8-bit files map to `[0, 1]` by `/255`; colour files are reduced to luma.
//! Encoding clamps to `[0, 1]` and rounds half up.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};

use crate::error::{BlrError, Result};
use crate::image::{luma_convert, LuminanceImage};
use crate::scalar::Scalar;

fn decode(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| BlrError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a PNG as luminance in `[0, 1]`. 16-bit grayscale keeps its full depth.
pub fn read_luminance<T: Scalar>(path: &Path) -> Result<LuminanceImage<T>> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let data = buf
                .into_raw()
                .into_iter()
                .map(|v| T::lit(v as f64 / 65535.0))
                .collect();
            LuminanceImage::new(w, h, data)
        }
        DynamicImage::ImageLuma8(buf) => {
            let data = buf
                .into_raw()
                .into_iter()
                .map(|v| T::lit(v as f64 / 255.0))
                .collect();
            LuminanceImage::new(w, h, data)
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let buf = img.to_luma16();
            let data = buf
                .into_raw()
                .into_iter()
                .map(|v| T::lit(v as f64 / 65535.0))
                .collect();
            LuminanceImage::new(w, h, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let channel = |c: usize| {
                LuminanceImage::from_fn(w, h, |x, y| {
                    T::lit(rgb.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0)
                })
            };
            luma_convert(&channel(0), &channel(1), &channel(2))
        }
    }
}

/// Quantizes one value to 8 bits: clamp, then round half up.
pub fn quantize8<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64().clamp(0.0, 1.0);
    (v * 255.0 + 0.5).floor() as u8
}

/// Quantizes one value to 16 bits: clamp, then round half up.
pub fn quantize16<T: Scalar>(v: T) -> u16 {
    let v = v.as_f64().clamp(0.0, 1.0);
    (v * 65535.0 + 0.5).floor() as u16
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BlrError::io(dir, e))?;
    }
    Ok(())
}

/// Writes an 8-bit grayscale PNG.
pub fn write_luminance<T: Scalar>(path: &Path, img: &LuminanceImage<T>) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u8> = img.data().iter().map(|&v| quantize8(v)).collect();
    let buf = GrayImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("raster length checked at construction");
    buf.save(path).map_err(|source| BlrError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a 16-bit grayscale PNG, used for precomputed rasters.
pub fn write_luminance16<T: Scalar>(path: &Path, img: &LuminanceImage<T>) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u16> = img.data().iter().map(|&v| quantize16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .expect("raster length checked at construction");
    buf.save(path).map_err(|source| BlrError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Rounds every value to the nearest 16-bit level, matching what a
/// [`write_luminance16`] / [`read_luminance`] round trip yields.
pub fn quantized16<T: Scalar>(img: &LuminanceImage<T>) -> LuminanceImage<T> {
    img.map(|v| T::lit(quantize16(v) as f64 / 65535.0))
}

/// Rounds every value to the nearest 8-bit level.
pub fn quantized8<T: Scalar>(img: &LuminanceImage<T>) -> LuminanceImage<T> {
    img.map(|v| T::lit(quantize8(v) as f64 / 255.0))
}
