//! 8-bit RGB raster used for exports and judge attachments.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer holds {got} bytes, expected {expected} for {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("cannot tile an empty frame list")]
    EmptyTile,
    #[error("frame {index} is {got_h} px tall, expected {expected_h}")]
    TileHeight {
        index: usize,
        expected_h: usize,
        got_h: usize,
    },
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major, top-left origin, interleaved RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ImageFormat {
    #[default]
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(ImageFormat::Png),
            "ppm" => Some(ImageFormat::Ppm),
            _ => None,
        }
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BufferSize {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, col: usize, row: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.data)?;
        }
        Ok(out)
    }

    /// Binary PPM (P6, maxval 255).
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn encode(&self, format: ImageFormat) -> Result<Vec<u8>, ImageError> {
        match format {
            ImageFormat::Png => self.encode_png(),
            ImageFormat::Ppm => Ok(self.encode_ppm()),
        }
    }

    pub fn write_to(&self, path: &std::path::Path, format: ImageFormat) -> Result<(), ImageError> {
        let bytes = self.encode(format)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }
}

/// Concatenates frames left to right into a single-row strip.
pub fn tile_row(frames: &[RgbImage]) -> Result<RgbImage, ImageError> {
    let first = frames.first().ok_or(ImageError::EmptyTile)?;
    let height = first.height;
    for (index, f) in frames.iter().enumerate() {
        if f.height != height {
            return Err(ImageError::TileHeight {
                index,
                expected_h: height,
                got_h: f.height,
            });
        }
    }
    let width: usize = frames.iter().map(|f| f.width).sum();
    let mut out = RgbImage::new(width, height);
    for row in 0..height {
        let mut col0 = 0;
        for f in frames {
            let src = &f.data[row * f.width * 3..(row + 1) * f.width * 3];
            let dst_start = (row * width + col0) * 3;
            out.data[dst_start..dst_start + src.len()].copy_from_slice(src);
            col0 += f.width;
        }
    }
    Ok(out)
}
