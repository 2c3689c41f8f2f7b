//! Float RGB images and lossless 8-bit PNG files.

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use crate::{Error, Result};

/// Row-major RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::DimensionMismatch { expected: 3 * width * height, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel `c` as a `height × width` plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn from_gray(width: usize, height: usize, gray: &[f64]) -> Result<Self> {
        Self::new(width, height, gray.iter().flat_map(|&g| [g, g, g]).collect())
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                actual: other.width * other.height,
            });
        }
        Ok(())
    }

    /// 8-bit quantization, round to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// The image after an 8-bit round trip.
    pub fn quantized(&self) -> Image {
        Image { width: self.width, height: self.height, data: self.to_rgb8().iter().map(|&b| b as f64 / 255.0).collect() }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_png(&mut out, self)?;
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Image> {
        read_png(bytes)
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png<W: Write>(w: W, img: &Image) -> Result<()> {
    let mut enc = png::Encoder::new(w, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::malformed(e.to_string()))?;
    writer
        .write_image_data(&img.to_rgb8())
        .map_err(|e| Error::malformed(e.to_string()))?;
    writer.finish().map_err(|e| Error::malformed(e.to_string()))?;
    Ok(())
}

fn read_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::malformed(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::malformed("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::malformed(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => bytes.to_vec(),
        png::ColorType::Rgba => bytes.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => bytes.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => bytes.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => return Err(Error::malformed(format!("unsupported color type {other:?}"))),
    };
    Image::from_rgb8(w, h, &rgb)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let file = File::create(path)?;
    write_png(BufWriter::new(file), img).map_err(|e| e.with_path(path))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    read_png(&bytes).map_err(|e| e.with_path(path))
}
