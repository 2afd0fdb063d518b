//! PNG interchange.
//!
//! 8-bit inputs are scaled by 1/255 and 16-bit inputs by 1/65535 on load.
//! Color PNGs are reduced to luma. Writers round to the nearest code value.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::cohort::binarize;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage, RgbImage};

/// Cut applied to mask files on load (half of full scale).
pub const MASK_CUT: f64 = 0.5;

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img =
        image::open(path).map_err(|e| Error::data(path, format!("cannot decode image: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other if is_16bit(&other) => other
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => other
            .into_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
    };
    GrayImage::new(w, h, pixels).map_err(|e| Error::data(path, e.to_string()))
}

fn is_16bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_)
    )
}

/// Loads a mask file and binarizes it at [`MASK_CUT`].
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(binarize(&read_gray(path)?, MASK_CUT))
}

/// Width and height from the file header without decoding pixels.
pub fn image_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path)
        .map_err(|e| Error::data(path, format!("cannot read header: {e}")))?;
    Ok((w as usize, h as usize))
}

pub fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn to_u16(v: f64) -> u16 {
    (v * 65535.0).round().clamp(0.0, 65535.0) as u16
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// 8-bit grayscale PNG.
pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u8> = img.pixels().iter().map(|&v| to_u8(v)).collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .expect("buffer sized from image dims");
    buf.save(path)?;
    Ok(())
}

/// 8-bit PNG with foreground 255 and background 0.
pub fn write_mask8(path: &Path, mask: &BinaryMask) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw)
            .expect("buffer sized from mask dims");
    buf.save(path)?;
    Ok(())
}

/// 16-bit probability map: code value `round(p * 65535)`.
pub fn write_prob16(path: &Path, map: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u16> = map.pixels().iter().map(|&v| to_u16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
            .expect("buffer sized from map dims");
    buf.save(path)?;
    Ok(())
}

pub fn write_rgb8(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u8> = img.pixels().iter().flat_map(|p| p.map(to_u8)).collect();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .expect("buffer sized from image dims");
    buf.save(path)?;
    Ok(())
}

/// Quantizes a map exactly as [`write_prob16`] stores it.
pub fn quantize16(map: &GrayImage) -> GrayImage {
    map.map(|v| to_u16(v) as f64 / 65535.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn prob16_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let mut rng = SplitMix64::new(5);
        let map = GrayImage::from_fn(9, 7, |_, _| rng.next_f64()).unwrap();
        write_prob16(&path, &map).unwrap();
        let back = read_gray(&path).unwrap();
        assert_eq!(back, quantize16(&map));
        for (a, b) in map.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }

    #[test]
    fn mask8_is_0_or_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/m.png");
        let mask = BinaryMask::from_fn(5, 4, |x, y| x == y).unwrap();
        write_mask8(&path, &mask).unwrap();
        let raw = image::open(&path).unwrap().into_luma8().into_raw();
        assert!(raw.iter().all(|&v| v == 0 || v == 255));
        assert_eq!(read_mask(&path).unwrap(), mask);
        assert_eq!(image_dims(&path).unwrap(), (5, 4));
    }

    #[test]
    fn gray8_scales_by_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = GrayImage::new(3, 1, vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        write_gray8(&path, &img).unwrap();
        assert_eq!(read_gray(&path).unwrap(), img);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_gray(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }
}
