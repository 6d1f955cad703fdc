//! Grayscale images in [0, 1]: raster file loading and binary PGM output.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in [0, 1].
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Image(format!("{width}x{height} image cannot hold {} pixels", pixels.len())));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        GrayImage { width, height, pixels: vec![value; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// `[1, height, width]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.height, self.width], self.pixels.clone()).expect("valid image")
    }

    /// 8-bit quantization used by the PGM writer.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }
}

/// Loads PGM, PPM or PNG; color is reduced by averaging channels.
pub fn load(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        if let Ok(img) = parse_pgm(&bytes) {
            return Ok(img);
        }
    }
    let dynimg = image::load_from_memory(&bytes).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let rgb = dynimg.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb.pixels().map(|p| (p[0] as f32 + p[1] as f32 + p[2] as f32) / (3.0 * 255.0)).collect();
    GrayImage::new(w, h, pixels)
}

fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = || Error::Image("malformed PGM header".into());
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?);
    }
    pos += 1;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let (w, h, max) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if fields[0] != "P5" || max != 255 || bytes.len() < pos + w * h {
        return Err(bad());
    }
    GrayImage::from_bytes(w, h, &bytes[pos..pos + w * h])
}

/// Binary 8-bit PGM (P5).
pub fn save_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = GrayImage::from_bytes(3, 2, &[0, 10, 20, 128, 200, 255]).unwrap();
        save_pgm(&path, &img).unwrap();
        assert_eq!(load(&path).unwrap(), img);
    }

    #[test]
    fn png_color_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let mut buf = image::RgbImage::new(1, 1);
        buf.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        buf.save(&path).unwrap();
        let g = load(&path).unwrap();
        assert!((g.pixels[0] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_empty_image() {
        assert!(GrayImage::new(0, 5, vec![]).is_err());
    }
}
