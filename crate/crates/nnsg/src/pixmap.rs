//! Image buffers shared by the renderer, guidance extraction, and
//! metrics, plus PNG import/export.
//!
//! All buffers are row-major with `y` increasing downward. PNG
//! encoding uses fixed settings, so identical pixels always produce
//! identical files.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// Grayscale image with `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayMap {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayMap {
    pub fn new(width: usize, height: usize) -> Self {
        GrayMap {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                what: "gray image pixels".into(),
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(GrayMap {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayMap {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// 16-bit grayscale image (used for depth guidance maps).
#[derive(Debug, Clone, PartialEq)]
pub struct Gray16Map {
    width: usize,
    height: usize,
    pixels: Vec<u16>,
}

impl Gray16Map {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u16>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                what: "16-bit image pixels".into(),
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Gray16Map {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            self.width as u32,
            self.height as u32,
            self.pixels.clone(),
        )
        .expect("buffer length matches dimensions");
        let mut bytes = Cursor::new(Vec::new());
        buf.write_to(&mut bytes, ImageFormat::Png)?;
        Ok(bytes.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)?;
        let gray = img.into_luma16();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        Gray16Map::from_pixels(w, h, gray.into_raw())
    }
}

/// Binary image. Exported PNGs hold 0 or 255 only.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                what: "mask bits".into(),
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when every set pixel of `other` is also set here.
    pub fn contains(&self, other: &Mask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(a, b)| *a || !*b)
    }

    /// View as a grayscale image with 0.0 / 255.0 samples.
    pub fn to_gray(&self) -> GrayMap {
        GrayMap {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|b| if *b { 255.0 } else { 0.0 }).collect(),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self.bits.iter().map(|b| if *b { 255u8 } else { 0u8 }).collect();
        let buf = image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_raw(
            self.width as u32,
            self.height as u32,
            raw,
        )
        .expect("buffer length matches dimensions");
        let mut bytes = Cursor::new(Vec::new());
        buf.write_to(&mut bytes, ImageFormat::Png)?;
        Ok(bytes.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads an 8-bit PNG; any sample above 127 counts as set.
    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)?;
        let gray = img.into_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let bits = gray.into_raw().into_iter().map(|v| v > 127).collect();
        Mask::from_bits(w, h, bits)
    }
}

/// RGB image with `f64` samples in `[0, 1]`, three per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbMap {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl RgbMap {
    pub fn from_samples(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                what: "rgb samples".into(),
                expected: width * height * 3,
                actual: samples.len(),
            });
        }
        Ok(RgbMap {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Rec. 601 luma (0.299 R + 0.587 G + 0.114 B).
    pub fn to_luma(&self) -> GrayMap {
        let pixels = self
            .samples
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        GrayMap {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    fn to_rgb8(&self) -> Vec<u8> {
        self.samples
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::ImageBuffer::<image::Rgb<u8>, Vec<u8>>::from_raw(
            self.width as u32,
            self.height as u32,
            self.to_rgb8(),
        )
        .expect("buffer length matches dimensions");
        let mut bytes = Cursor::new(Vec::new());
        buf.write_to(&mut bytes, ImageFormat::Png)?;
        Ok(bytes.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// 8-bit RGB image as loaded from disk (used by the metrics CLI).
#[derive(Debug, Clone, PartialEq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, three bytes per pixel.
    pub samples: Vec<u8>,
}

impl Rgb8Image {
    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)?;
        Ok(Self::from_dynamic(img))
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        let rgb = img.into_rgb8();
        Rgb8Image {
            width: rgb.width() as usize,
            height: rgb.height() as usize,
            samples: rgb.into_raw(),
        }
    }

    /// Rec. 601 luma scaled to `[0, 1]`.
    pub fn to_luma(&self) -> GrayMap {
        let pixels = self
            .samples
            .chunks_exact(3)
            .map(|p| {
                (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
                    / 255.0
            })
            .collect();
        GrayMap {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Bilinear resample to `width` x `height`.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Rgb8Image {
        assert!(width > 0 && height > 0);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut samples = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            // Map the output pixel center back into source coordinates.
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                for c in 0..3 {
                    let s = |xx: usize, yy: usize| {
                        f64::from(self.samples[(yy * self.width + xx) * 3 + c])
                    };
                    let top = s(x0, y0) * (1.0 - tx) + s(x1, y0) * tx;
                    let bot = s(x0, y1) * (1.0 - tx) + s(x1, y1) * tx;
                    let v = top * (1.0 - ty) + bot * ty;
                    samples.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Rgb8Image {
            width,
            height,
            samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_contains_is_pixelwise_subset() {
        let mut a = Mask::new(4, 4);
        let mut b = Mask::new(4, 4);
        a.set(1, 1, true);
        a.set(2, 2, true);
        b.set(1, 1, true);
        assert!(a.contains(&b));
        assert!(!b.contains(&a));
    }

    #[test]
    fn gray16_png_round_trip() {
        let px: Vec<u16> = (0..16).map(|i| i * 4096).collect();
        let img = Gray16Map::from_pixels(4, 4, px.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.png");
        img.save_png(&path).unwrap();
        let back = Gray16Map::load_png(&path).unwrap();
        assert_eq!(back.pixels(), px.as_slice());
    }

    #[test]
    fn luma_weights_sum_to_one() {
        let img = RgbMap::from_samples(1, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let gray = img.to_luma();
        assert!((gray.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resize_identity_when_dims_match() {
        let img = Rgb8Image {
            width: 3,
            height: 2,
            samples: (0..18).collect(),
        };
        let out = img.resize_bilinear(3, 2);
        assert_eq!(out.samples, img.samples);
    }
}
