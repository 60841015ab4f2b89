//! In-memory images and their PNG encodings.
//!
//! RGB images are 8-bit PNGs. Depth images are 16-bit grayscale PNGs in
//! millimeters, with 0 meaning "no hit".

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; (width * height) as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Rgb>) -> Option<Self> {
        (pixels.len() == (width * height) as usize).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        self.pixels[(y * self.width + x) as usize] = c;
    }

    /// Number of pixels exactly equal to `c`.
    pub fn count(&self, c: Rgb) -> usize {
        self.pixels.iter().filter(|p| **p == c).count()
    }

    pub fn encode_png(&self, text: &[(&str, &str)]) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            for (k, v) in text {
                enc.add_text_chunk(k.to_string(), v.to_string())?;
            }
            let mut w = enc.write_header()?;
            w.write_image_data(self.pixels.as_flattened())?;
        }
        Ok(out)
    }

    /// Decodes any 8-bit PNG; gray is widened to RGB and alpha dropped.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        let (w, h) = (info.width, info.height);
        let data = &buf[..info.buffer_size()];
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(ImageError::Unsupported(format!("{other:?}"))),
        };
        let pixels = data
            .chunks_exact(channels)
            .map(|c| match channels {
                1 | 2 => [c[0], c[0], c[0]],
                _ => [c[0], c[1], c[2]],
            })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn save_png(&self, path: &Path, text: &[(&str, &str)]) -> Result<(), ImageError> {
        write_file(path, &self.encode_png(text)?)
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        Self::decode_png(&std::fs::read(path)?)
    }
}

/// Per-pixel camera depth (Zc) in meters; 0 means no surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    depths: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            depths: vec![0.0; (width * height) as usize],
        }
    }

    pub fn from_depths(width: u32, height: u32, depths: Vec<f64>) -> Option<Self> {
        let ok = depths.len() == (width * height) as usize
            && depths.iter().all(|d| d.is_finite() && *d >= 0.0);
        ok.then_some(Self {
            width,
            height,
            depths,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.depths[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, d: f64) {
        self.depths[(y * self.width + x) as usize] = d;
    }

    /// Depth rounded to whole millimeters, saturating at `u16::MAX`.
    pub fn to_millimeters(&self) -> Vec<u16> {
        self.depths
            .iter()
            .map(|d| (d * 1000.0).round().min(u16::MAX as f64) as u16)
            .collect()
    }

    /// The image after a round trip through 1 mm quantization.
    pub fn quantized(&self) -> DepthImage {
        DepthImage {
            width: self.width,
            height: self.height,
            depths: self
                .to_millimeters()
                .into_iter()
                .map(|mm| mm as f64 / 1000.0)
                .collect(),
        }
    }

    pub fn encode_png(&self, text: &[(&str, &str)]) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            for (k, v) in text {
                enc.add_text_chunk(k.to_string(), v.to_string())?;
            }
            let mut w = enc.write_header()?;
            let bytes: Vec<u8> = self
                .to_millimeters()
                .into_iter()
                .flat_map(u16::to_be_bytes)
                .collect();
            w.write_image_data(&bytes)?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let dec = png::Decoder::new(Cursor::new(bytes));
        let mut reader = dec.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen
        {
            return Err(ImageError::Unsupported(format!(
                "depth must be 16-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            )));
        }
        let depths = buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0)
            .collect();
        Ok(Self {
            width: info.width,
            height: info.height,
            depths,
        })
    }

    pub fn save_png(&self, path: &Path, text: &[(&str, &str)]) -> Result<(), ImageError> {
        write_file(path, &self.encode_png(text)?)
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        Self::decode_png(&std::fs::read(path)?)
    }
}

/// Reads the latin-1 text chunks of a PNG file.
pub fn png_text(path: &Path) -> Result<Vec<(String, String)>, ImageError> {
    let bytes = std::fs::read(path)?;
    let reader = png::Decoder::new(Cursor::new(bytes)).read_info()?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|c| (c.keyword.clone(), c.text.clone()))
        .collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}
