//! Grayscale rasters and the pixel-level primitives the pipeline is built on.
//!
//! Two rules hold everywhere in this module: rounding is half-up
//! (`floor(v + 0.5)`) and out-of-range reads replicate the nearest edge pixel.

mod clahe;
mod filter;
mod geometry;
mod integral;
mod pgm;

pub use clahe::{apply_clahe, ClaheParams};
pub use filter::{binomial_blur_3x3, median_filter_3x3};
pub use geometry::{resize_bilinear, rotate_bilinear, rotate_point};
pub use integral::{build_integrals, IntegralImage};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a P2/P5 PGM stream")]
    BadMagic,
    #[error("maxval {0} exceeds 255")]
    UnsupportedMaxval(u32),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample value {value} exceeds maxval {maxval}")]
    SampleOutOfRange { value: u32, maxval: u32 },
    #[error("image dimensions must be nonzero")]
    ZeroDimension,
    #[error("buffer of {len} bytes does not match {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("rectangle ({x}, {y}, {w}, {h}) exceeds {width}x{height}")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("image {width}x{height} is smaller than the {tiles_x}x{tiles_y} tile grid")]
    ImageSmallerThanGrid {
        width: usize,
        height: usize,
        tiles_x: usize,
        tiles_y: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An 8-bit single-channel raster stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Reads with edge replication for coordinates outside the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `w`×`h` region whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage, ImageError> {
        if w == 0 || h == 0 {
            return Err(ImageError::ZeroDimension);
        }
        if x + w > self.width || y + h > self.height {
            return Err(ImageError::OutOfBounds {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            data,
        })
    }

    /// Writes `src` into this image with its top-left corner at `(x, y)`,
    /// clipping whatever falls outside.
    pub fn paste(&mut self, src: &GrayImage, x: usize, y: usize) {
        for sy in 0..src.height {
            let ty = y + sy;
            if ty >= self.height {
                break;
            }
            for sx in 0..src.width {
                let tx = x + sx;
                if tx >= self.width {
                    break;
                }
                self.data[ty * self.width + tx] = src.data[sy * src.width + sx];
            }
        }
    }

    pub fn map(&self, lut: &[u8; 256]) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| lut[v as usize]).collect(),
        }
    }

    pub fn min_max(&self) -> (u8, u8) {
        self.data
            .iter()
            .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Half-up rounding of a real intensity, saturated to the 8-bit range.
#[inline]
pub(crate) fn round_to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear sample at a real coordinate. Coordinates are clamped to the
/// raster first, which is the same as edge replication.
#[inline]
pub(crate) fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (img.width - 1) as f64);
    let y = y.clamp(0.0, (img.height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let a = img.get(x0, y0) as f64;
    let b = img.get(x1, y0) as f64;
    let c = img.get(x0, y1) as f64;
    let d = img.get(x1, y1) as f64;
    // Difference form keeps blends of equal values exact.
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    top + fy * (bottom - top)
}
