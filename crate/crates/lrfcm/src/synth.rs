//! Synthetic test images and reproducible noise injection.

use rand::prelude::*;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::labeling::LabelImage;

pub const FOUR_LEVELS: [f64; 4] = [0.0, 85.0, 170.0, 255.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Impulse,
    Mixed,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "impulse" => Ok(Self::Impulse),
            "mixed" => Ok(Self::Mixed),
            other => Err(format!("unknown noise kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Gaussian standard deviation in intensity units.
    pub std: f64,
    /// Fraction of pixels hit by impulse noise.
    pub density: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match self.kind {
            NoiseKind::Gaussian => add_gaussian(img, self.std, self.seed),
            NoiseKind::Impulse => add_impulse(img, self.density, self.seed),
            NoiseKind::Mixed => add_mixed(img, self.std, self.density, self.seed),
        }
    }
}

/// Deterministic four-level test pattern: a disc, a square and a stripe
/// nested inside each other on a dark background, at gray levels 0, 85,
/// 170 and 255; ground-truth label `i` marks level `85 (i - 1)`.
pub fn generate_four_level(height: usize, width: usize) -> Result<(GrayImage, LabelImage)> {
    if height < 64 || width < 64 {
        return Err(Error::Param(format!(
            "four-level pattern needs at least 64x64, got {height}x{width}"
        )));
    }
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let m = height.min(width) as f64;
    // nested square / disc / stripe sized so every level keeps substantial
    // mass (inner three regions equal, background slightly larger so its
    // long outer boundary cannot bias its cluster prototype)
    let square_half = 0.400 * m;
    let disc_r = 0.368 * m;
    let stripe_half_h = 0.178 * m;
    let stripe_half_w = 0.300 * m;
    // rectangles get rounded corners; sharp convex corners blur across the
    // level midpoint and cannot segment exactly
    let corner = 0.05 * m;
    let in_rounded_rect = |dy: f64, dx: f64, half_h: f64, half_w: f64| -> bool {
        let (ay, ax) = (dy.abs(), dx.abs());
        if ay > half_h || ax > half_w {
            return false;
        }
        let (iy, ix) = (half_h - corner, half_w - corner);
        if ay <= iy || ax <= ix {
            return true;
        }
        let (ry, rx) = (ay - iy, ax - ix);
        ry * ry + rx * rx <= corner * corner
    };
    let mut labels = vec![1u32; height * width];
    for r in 0..height {
        for c in 0..width {
            let dy = r as f64 - cy;
            let dx = c as f64 - cx;
            // strictly nested so only adjacent gray levels share a border
            let label = if in_rounded_rect(dy, dx, stripe_half_h, stripe_half_w) {
                4
            } else if dy * dy + dx * dx <= disc_r * disc_r {
                3
            } else if in_rounded_rect(dy, dx, square_half, square_half) {
                2
            } else {
                1
            };
            labels[r * width + c] = label;
        }
    }
    let data = labels.iter().map(|&l| FOUR_LEVELS[l as usize - 1]).collect();
    let img = GrayImage::from_raw(height, width, data);
    let lbl = LabelImage::new(height, width, 4, labels)?;
    Ok((img, lbl))
}

/// Additive zero-mean Gaussian noise, clamped to `[0, 255]`.
pub fn add_gaussian(img: &GrayImage, std: f64, seed: u64) -> Result<GrayImage> {
    if !(std >= 0.0) {
        return Err(Error::Param(format!("noise std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).map_err(|e| Error::Param(format!("bad std: {e}")))?;
    let data = img
        .data()
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 255.0))
        .collect();
    Ok(GrayImage::from_raw(img.height(), img.width(), data))
}

/// Salt-and-pepper noise on exactly `round(density * K)` pixels drawn
/// without replacement; each hit pixel becomes 0 or 255 with equal
/// probability.
pub fn add_impulse(img: &GrayImage, density: f64, seed: u64) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Param(format!(
            "impulse density must lie in [0, 1], got {density}"
        )));
    }
    let k = img.len();
    let hits = (density * k as f64).round() as usize;
    let mut out = img.clone();
    let mut rng = StdRng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, k, hits);
    for j in picks.iter() {
        out.data_mut()[j] = if rng.gen_bool(0.5) { 255.0 } else { 0.0 };
    }
    Ok(out)
}

/// Gaussian noise followed by impulse noise. The Gaussian stage draws from
/// a derived stream; the impulse stage reuses the caller's seed, so a
/// pure-impulse noise spec reproduces it exactly.
pub fn add_mixed(img: &GrayImage, std: f64, density: f64, seed: u64) -> Result<GrayImage> {
    let noisy = add_gaussian(img, std, split_seed(seed))?;
    add_impulse(&noisy, density, seed)
}

fn split_seed(seed: u64) -> u64 {
    // splitmix64 step
    let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
