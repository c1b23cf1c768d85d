//! Piecewise-linear B-spline tight wavelet frame: undecimated decomposition
//! and its exact adjoint reconstruction.
//!
//! The nine 3x3 kernels are tensor products of the 1-D filters
//! `[1/4, 1/2, 1/4]`, `[-1/4, 1/2, -1/4]` and `[sqrt(2)/4, 0, -sqrt(2)/4]`.
//! Decomposition correlates the mirror-padded image with each kernel;
//! reconstruction applies the true adjoint of that padded operator, so the
//! round trip is the identity including boundaries.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::image::{mirror_index, GrayImage};

const FILTER_LEN: usize = 3;
const NUM_KERNELS: usize = 9;

const A0: [f64; 3] = [0.25, 0.5, 0.25];
const A1: [f64; 3] = [-0.25, 0.5, -0.25];
const A2: [f64; 3] = [SQRT_2 / 4.0, 0.0, -SQRT_2 / 4.0];

/// The nine tensor-product kernels, row-major over (p, q); kernel 0 is the
/// low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernels: [[f64; 9]; NUM_KERNELS],
}

impl FilterBank {
    pub const LOW_PASS: usize = 0;

    pub fn kernel(&self, index: usize) -> &[f64; 9] {
        &self.kernels[index]
    }

    pub fn num_kernels(&self) -> usize {
        NUM_KERNELS
    }
}

pub fn build_filter_bank() -> FilterBank {
    let rows = [A0, A1, A2];
    let mut kernels = [[0.0; 9]; NUM_KERNELS];
    for (p, ap) in rows.iter().enumerate() {
        for (q, aq) in rows.iter().enumerate() {
            let k = &mut kernels[p * 3 + q];
            for i in 0..FILTER_LEN {
                for j in 0..FILTER_LEN {
                    k[i * 3 + j] = ap[i] * aq[j];
                }
            }
        }
    }
    FilterBank { kernels }
}

/// Per-pixel feature vectors: an `L x K` matrix over the source geometry,
/// stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension("feature set must be non-empty".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "feature data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("feature set contains non-finite values".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_raw(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_raw(channels, height, width, vec![0.0; channels * height * width])
    }

    /// Single-channel feature set holding raw pixel intensities.
    pub fn from_intensity(img: &GrayImage) -> Self {
        Self::from_raw(1, img.height(), img.width(), img.data().to_vec())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels (columns).
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, l: usize) -> &[f64] {
        let k = self.pixels();
        &self.data[l * k..(l + 1) * k]
    }

    #[inline]
    pub fn value(&self, l: usize, pixel: usize) -> f64 {
        self.data[l * self.pixels() + pixel]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel_image(&self, l: usize) -> GrayImage {
        GrayImage::from_raw(self.height, self.width, self.channel(l).to_vec())
    }

    /// Column `pixel` as a fresh vector of length `channels`.
    pub fn column(&self, pixel: usize) -> Vec<f64> {
        (0..self.channels).map(|l| self.value(l, pixel)).collect()
    }

    /// Stack feature sets over the same geometry (used for color images).
    pub fn stack(parts: &[FeatureSet]) -> Result<FeatureSet> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("cannot stack zero feature sets".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::Dimension("stacked feature sets must share geometry".into()));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(FeatureSet::from_raw(channels, h, w, data))
    }

    /// Extract a contiguous channel range as its own feature set.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> FeatureSet {
        let k = self.pixels();
        let data = self.data[range.start * k..range.end * k].to_vec();
        FeatureSet::from_raw(range.len(), self.height, self.width, data)
    }
}

/// Undecimated 1-level decomposition: channel `l` is the correlation of the
/// mirror-padded image with kernel `l`.
pub fn decompose(img: &GrayImage, levels: usize) -> Result<FeatureSet> {
    if levels != 1 {
        return Err(Error::Param(format!(
            "only 1-level decomposition is supported, got {levels}"
        )));
    }
    let bank = build_filter_bank();
    let (h, w) = (img.height(), img.width());
    let padded = img.pad_axes(1, 1);
    let pw = padded.width();
    let mut data = Vec::with_capacity(NUM_KERNELS * h * w);
    for l in 0..NUM_KERNELS {
        let k = bank.kernel(l);
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for i in 0..FILTER_LEN {
                    let row = &padded.data()[(r + i) * pw + c..(r + i) * pw + c + FILTER_LEN];
                    for j in 0..FILTER_LEN {
                        acc += k[i * 3 + j] * row[j];
                    }
                }
                data.push(acc);
            }
        }
    }
    Ok(FeatureSet::from_raw(NUM_KERNELS, h, w, data))
}

/// Adjoint of [`decompose`]: scatter each coefficient through the flipped
/// kernels onto the padded grid, then fold the mirrored margins back onto
/// their source pixels. Satisfies `reconstruct(decompose(x)) == x` up to
/// rounding.
pub fn reconstruct(fs: &FeatureSet) -> Result<GrayImage> {
    if fs.channels() != NUM_KERNELS {
        return Err(Error::Dimension(format!(
            "reconstruction expects {NUM_KERNELS} channels, got {}",
            fs.channels()
        )));
    }
    let bank = build_filter_bank();
    let (h, w) = (fs.height(), fs.width());
    let (ph, pw) = (h + 2, w + 2);
    let mut acc = vec![0.0f64; ph * pw];
    for l in 0..NUM_KERNELS {
        let k = bank.kernel(l);
        let ch = fs.channel(l);
        for r in 0..h {
            for c in 0..w {
                let v = ch[r * w + c];
                if v == 0.0 {
                    continue;
                }
                for i in 0..FILTER_LEN {
                    let base = (r + i) * pw + c;
                    for j in 0..FILTER_LEN {
                        acc[base + j] += k[i * 3 + j] * v;
                    }
                }
            }
        }
    }
    let mut out = vec![0.0f64; h * w];
    for a in 0..ph {
        let sr = mirror_index(a as isize - 1, h);
        for b in 0..pw {
            let sc = mirror_index(b as isize - 1, w);
            out[sr * w + sc] += acc[a * pw + b];
        }
    }
    Ok(GrayImage::from_raw(h, w, out))
}
