//! Raster containers and file I/O for the preprocessing pipeline.
//!
//! Color images load from PNG or binary PPM (P6). Depth maps load either
//! from 16-bit little-endian PNG holding millimeters or from a raw
//! `.depth` file: two 32-bit little-endian integers (width, height)
//! followed by row-major 32-bit little-endian floats in meters. A depth
//! of zero marks an invalid reading.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB image, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32) -> Self {
        ColorImage {
            width,
            height,
            data: vec![0; (width as usize) * (height as usize) * 3],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) * 3 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} RGB samples, got {}",
                (width as usize) * (height as usize) * 3,
                data.len()
            )));
        }
        Ok(ColorImage { width, height, data })
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = ((y * self.width + x) * 3) as usize;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: (u8, u8, u8)) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i] = rgb.0;
        self.data[i + 1] = rgb.1;
        self.data[i + 2] = rgb.2;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Copy out the axis-aligned subimage with inclusive corners.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> ColorImage {
        let w = x1 - x0 + 1;
        let h = y1 - y0 + 1;
        let mut out = ColorImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                out.set_pixel(x, y, self.pixel(x0 + x, y0 + y));
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(b"P6") {
            return Self::decode_ppm(&bytes);
        }
        let img = image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| Error::Image(e.to_string()))?
            .decode()
            .map_err(|e| Error::Image(e.to_string()))?
            .to_rgb8();
        ColorImage::from_raw(img.width(), img.height(), img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .ok_or_else(|| Error::Image("raw buffer size mismatch".into()))?;
        img.save(path).map_err(|e| Error::Image(e.to_string()))
    }

    fn decode_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut token = || -> Result<String> {
            // Skip whitespace and '#' comments between header tokens.
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Image("truncated PPM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };

        let magic = token()?;
        if magic != "P6" {
            return Err(Error::Image(format!("not a P6 PPM: {magic}")));
        }
        let width: u32 = token()?.parse().map_err(|_| Error::Image("bad PPM width".into()))?;
        let height: u32 = token()?.parse().map_err(|_| Error::Image("bad PPM height".into()))?;
        let maxval: u32 = token()?.parse().map_err(|_| Error::Image("bad PPM maxval".into()))?;
        if maxval != 255 {
            return Err(Error::Image(format!("unsupported PPM maxval {maxval}")));
        }
        pos += 1; // single whitespace byte after maxval
        let need = (width as usize) * (height as usize) * 3;
        if bytes.len() < pos + need {
            return Err(Error::Image("truncated PPM payload".into()));
        }
        ColorImage::from_raw(width, height, bytes[pos..pos + need].to_vec())
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(self.width, self.height, self.data.clone())
            .ok_or_else(|| Error::Image("raw buffer size mismatch".into()))?;
        img.save(path).map_err(|e| Error::Image(e.to_string()))
    }
}

/// Binary image with one byte per pixel, either 0 or 255.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[(y * self.width + x) as usize] = if on { 255 } else { 0 };
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    pub fn to_gray(&self) -> GrayImage {
        let mut g = GrayImage::new(self.width, self.height);
        g.data.copy_from_slice(&self.data);
        g
    }
}

/// Per-pixel depth in meters; zero marks an invalid reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            data: vec![0.0; (width as usize) * (height as usize)],
        }
    }

    pub fn constant(width: u32, height: u32, meters: f32) -> Self {
        DepthMap {
            width,
            height,
            data: vec![meters; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, meters: f32) {
        self.data[(y * self.width + x) as usize] = meters;
    }

    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "depth") {
            return Self::decode_raw(&std::fs::read(path)?);
        }
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::Image(e.to_string()))?
            .decode()
            .map_err(|e| Error::Image(e.to_string()))?
            .to_luma16();
        let (width, height) = (img.width(), img.height());
        let data = img.into_raw().iter().map(|&mm| mm as f32 / 1000.0).collect();
        Ok(DepthMap { width, height, data })
    }

    /// Save as 16-bit PNG in millimeters (values clamped to the u16 range).
    pub fn save_png_mm(&self, path: &Path) -> Result<()> {
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|&m| (m * 1000.0).round().clamp(0.0, u16::MAX as f32) as u16)
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width, self.height, raw)
            .ok_or_else(|| Error::Image("raw buffer size mismatch".into()))?;
        img.save(path).map_err(|e| Error::Image(e.to_string()))
    }

    fn decode_raw(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Image("truncated .depth header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let need = 8 + (width as usize) * (height as usize) * 4;
        if bytes.len() < need {
            return Err(Error::Image("truncated .depth payload".into()));
        }
        let data = bytes[8..need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DepthMap { width, height, data })
    }

    pub fn encode_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.data.len() * 4);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.encode_raw())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let mut img = ColorImage::new(3, 2);
        img.set_pixel(0, 0, (255, 0, 0));
        img.set_pixel(2, 1, (1, 2, 3));
        let encoded = img.encode_ppm();
        let back = ColorImage::decode_ppm(&encoded).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        let img = ColorImage::decode_ppm(&bytes).unwrap();
        assert_eq!(img.pixel(0, 0), (10, 20, 30));
        assert_eq!(img.pixel(1, 0), (40, 50, 60));
    }

    #[test]
    fn raw_depth_round_trip() {
        let mut d = DepthMap::new(2, 2);
        d.set(0, 0, 1.25);
        d.set(1, 1, 0.0);
        let back = DepthMap::decode_raw(&d.encode_raw()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn crop_takes_inclusive_corners() {
        let mut img = ColorImage::new(4, 4);
        img.set_pixel(1, 1, (9, 9, 9));
        img.set_pixel(2, 2, (7, 7, 7));
        let c = img.crop(1, 1, 2, 2);
        assert_eq!((c.width, c.height), (2, 2));
        assert_eq!(c.pixel(0, 0), (9, 9, 9));
        assert_eq!(c.pixel(1, 1), (7, 7, 7));
    }
}
