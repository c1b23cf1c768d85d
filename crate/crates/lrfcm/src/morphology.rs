//! Flat grayscale morphology and geodesic reconstruction.
//!
//! Window scans use mirror-padded boundaries. Reconstruction iterates the
//! geodesic step to an exact fixpoint (Jacobi sweeps); on a finite lattice
//! the iterates are pointwise monotone and bounded, so the loop terminates.

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Binary footprint with odd side lengths so the origin is the exact center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    height: usize,
    width: usize,
    mask: Vec<bool>,
}

impl StructuringElement {
    pub fn new(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        if height % 2 == 0 || width % 2 == 0 || height == 0 || width == 0 {
            return Err(Error::Param(format!(
                "structuring element sides must be odd, got {height}x{width}"
            )));
        }
        if mask.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask length {} does not match {height}x{width}",
                mask.len()
            )));
        }
        if !mask[(height / 2) * width + width / 2] {
            return Err(Error::Param(
                "structuring element must contain its origin".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            mask,
        })
    }

    /// Full square of the given odd side; the default shape is 3x3.
    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side, vec![true; side * side])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Offsets of active cells relative to the origin.
    fn offsets(&self) -> Vec<(isize, isize)> {
        let rh = (self.height / 2) as isize;
        let rw = (self.width / 2) as isize;
        let mut out = Vec::new();
        for i in 0..self.height {
            for j in 0..self.width {
                if self.mask[i * self.width + j] {
                    out.push((i as isize - rh, j as isize - rw));
                }
            }
        }
        out
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::square(3).unwrap()
    }
}

fn window_scan(img: &GrayImage, se: &StructuringElement, max: bool) -> GrayImage {
    let (h, w) = (img.height(), img.width());
    let offsets = se.offsets();
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut best = if max { f64::NEG_INFINITY } else { f64::INFINITY };
            for &(di, dj) in &offsets {
                let v = img.at(
                    crate::image::mirror_index_tiled(r as isize + di, h),
                    crate::image::mirror_index_tiled(c as isize + dj, w),
                );
                best = if max { best.max(v) } else { best.min(v) };
            }
            data.push(best);
        }
    }
    GrayImage::from_raw(h, w, data)
}

/// Windowed maximum over the footprint; extensive when the origin is active.
pub fn dilate(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    window_scan(img, se, true)
}

/// Windowed minimum; the dual of [`dilate`].
pub fn erode(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    window_scan(img, se, false)
}

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Geodesic reconstruction by dilation: iterate
/// `r <- min(dilate(r), mask)` from `marker` until stable.
/// Requires `marker <= mask` pointwise.
pub fn reconstruct_by_dilation(
    marker: &GrayImage,
    mask: &GrayImage,
    se: &StructuringElement,
) -> Result<GrayImage> {
    check_dims(marker, mask)?;
    if marker
        .data()
        .iter()
        .zip(mask.data())
        .any(|(&m, &k)| m > k)
    {
        return Err(Error::Precondition(
            "dilation reconstruction requires marker <= mask".into(),
        ));
    }
    let cap = marker.len();
    let mut current = marker.clone();
    for _ in 0..cap {
        let mut next = dilate(&current, se);
        for (v, &k) in next.data_mut().iter_mut().zip(mask.data()) {
            if *v > k {
                *v = k;
            }
        }
        if next == current {
            return Ok(current);
        }
        current = next;
    }
    Ok(current)
}

/// Geodesic reconstruction by erosion: iterate
/// `r <- max(erode(r), mask)` from `marker`. Requires `marker >= mask`.
pub fn reconstruct_by_erosion(
    marker: &GrayImage,
    mask: &GrayImage,
    se: &StructuringElement,
) -> Result<GrayImage> {
    check_dims(marker, mask)?;
    if marker
        .data()
        .iter()
        .zip(mask.data())
        .any(|(&m, &k)| m < k)
    {
        return Err(Error::Precondition(
            "erosion reconstruction requires marker >= mask".into(),
        ));
    }
    let cap = marker.len();
    let mut current = marker.clone();
    for _ in 0..cap {
        let mut next = erode(&current, se);
        for (v, &k) in next.data_mut().iter_mut().zip(mask.data()) {
            if *v < k {
                *v = k;
            }
        }
        if next == current {
            return Ok(current);
        }
        current = next;
    }
    Ok(current)
}

/// Closing reconstruction: reconstruction-by-dilation of the eroded image
/// under the original, then reconstruction-by-erosion of its dilation over
/// that intermediate.
pub fn closing_reconstruction(img: &GrayImage, se: &StructuringElement) -> Result<GrayImage> {
    let opened = reconstruct_by_dilation(&erode(img, se), img, se)?;
    reconstruct_by_erosion(&dilate(&opened, se), &opened, se)
}

/// Pointwise blend `(g + alpha * g_bar) / (1 + alpha)`.
pub fn weighted_sum(g: &GrayImage, g_bar: &GrayImage, alpha: f64) -> Result<GrayImage> {
    check_dims(g, g_bar)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Param(format!("alpha must be >= 0, got {alpha}")));
    }
    let inv = 1.0 / (1.0 + alpha);
    let data = g
        .data()
        .iter()
        .zip(g_bar.data())
        .map(|(&a, &b)| (a + alpha * b) * inv)
        .collect();
    Ok(GrayImage::from_raw(g.height(), g.width(), data))
}
