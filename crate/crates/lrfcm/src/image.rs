//! Image containers and boundary handling.
//!
//! Intensities are stored as `f64` in the nominal range `[0, 255]` for the
//! whole pipeline; quantization to 8 bits happens only when a file is
//! written.

use crate::error::{Error, Result};

/// Row/column coordinates of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelIndex {
    pub row: usize,
    pub col: usize,
}

/// A 2-D grid of real-valued intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("image contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Construct without the finiteness scan; for internal use on data that
    /// is finite by construction.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Bounds-checked access by pixel index.
    pub fn get(&self, idx: PixelIndex) -> Option<f64> {
        (idx.row < self.height && idx.col < self.width).then(|| self.at(idx.row, idx.col))
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn same_dims(&self, other: &GrayImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Mirror-pad by `margin` on every side (symmetric extension with the
    /// edge sample repeated: row `[1,2,3]` with margin 1 becomes
    /// `[1,1,2,3,3]`).
    pub fn pad_symmetric(&self, margin: usize) -> Result<GrayImage> {
        if margin >= self.height.min(self.width) {
            return Err(Error::Param(format!(
                "pad margin {margin} must be smaller than min(h, w) = {}",
                self.height.min(self.width)
            )));
        }
        Ok(self.pad_axes(margin, margin))
    }

    /// Per-axis mirror padding. Internal callers guarantee
    /// `margin_rows <= height` and `margin_cols <= width`, the range where a
    /// single reflection is defined.
    pub(crate) fn pad_axes(&self, margin_rows: usize, margin_cols: usize) -> GrayImage {
        assert!(margin_rows <= self.height && margin_cols <= self.width);
        let ph = self.height + 2 * margin_rows;
        let pw = self.width + 2 * margin_cols;
        let mut data = Vec::with_capacity(ph * pw);
        for r in 0..ph {
            let sr = mirror_index(r as isize - margin_rows as isize, self.height);
            for c in 0..pw {
                let sc = mirror_index(c as isize - margin_cols as isize, self.width);
                data.push(self.at(sr, sc));
            }
        }
        GrayImage::from_raw(ph, pw, data)
    }
}

/// Map an extended coordinate back into `[0, n)` by one mirror reflection
/// about the half-sample boundary.
#[inline]
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = if i < 0 {
        -1 - i
    } else if i >= n {
        2 * n - 1 - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&m));
    m as usize
}

/// Mirror mapping for arbitrarily far coordinates: the infinite half-sample
/// symmetric extension is periodic with period `2n`.
#[inline]
pub(crate) fn mirror_index_tiled(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Three gray channels of identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    r: GrayImage,
    g: GrayImage,
    b: GrayImage,
}

impl ColorImage {
    pub fn new(r: GrayImage, g: GrayImage, b: GrayImage) -> Result<Self> {
        if !r.same_dims(&g) || !r.same_dims(&b) {
            return Err(Error::Dimension(
                "color channels must share dimensions".into(),
            ));
        }
        Ok(Self { r, g, b })
    }

    pub fn height(&self) -> usize {
        self.r.height()
    }

    pub fn width(&self) -> usize {
        self.r.width()
    }

    pub fn channels(&self) -> [&GrayImage; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn into_channels(self) -> [GrayImage; 3] {
        [self.r, self.g, self.b]
    }
}

/// Either a grayscale or an RGB image, as determined by the source file.
#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Gray(GrayImage),
    Color(ColorImage),
}

impl Image {
    pub fn height(&self) -> usize {
        match self {
            Image::Gray(g) => g.height(),
            Image::Color(c) => c.height(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Image::Gray(g) => g.width(),
            Image::Color(c) => c.width(),
        }
    }

    pub fn as_gray(&self) -> Option<&GrayImage> {
        match self {
            Image::Gray(g) => Some(g),
            Image::Color(_) => None,
        }
    }
}

/// Clamp to `[0, 255]` and round half-away-from-zero; the write-side
/// quantization rule.
pub fn quantize_u8(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}
