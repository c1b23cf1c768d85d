//! Label extraction, reconstruction-based label smoothing, and segmented
//! image assembly.

use crate::clustering::{PartitionMatrix, Prototypes};
use crate::error::{Error, Result};
use crate::frames::{self, FeatureSet};
use crate::image::GrayImage;
use crate::morphology::{closing_reconstruction, StructuringElement};

/// Per-pixel cluster labels in `[1, num_classes]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    height: usize,
    width: usize,
    num_classes: u32,
    labels: Vec<u32>,
}

impl LabelImage {
    pub fn new(height: usize, width: usize, num_classes: u32, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Dimension(format!(
                "label length {} does not match {height}x{width}",
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Param("label image needs at least one class".into()));
        }
        if labels.iter().any(|&l| l < 1 || l > num_classes) {
            return Err(Error::Param(format!(
                "labels must lie in [1, {num_classes}]"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn same_dims(&self, other: &LabelImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Render labels as gray values spread over `[0, 255]`:
    /// label `i` maps to `round(255 (i - 1) / (c - 1))` (0 when only one
    /// class exists).
    pub fn to_gray_spread(&self) -> GrayImage {
        let c = self.num_classes;
        let data = self
            .labels
            .iter()
            .map(|&l| {
                if c <= 1 {
                    0.0
                } else {
                    (255.0 * (l - 1) as f64 / (c - 1) as f64).round()
                }
            })
            .collect();
        GrayImage::from_raw(self.height, self.width, data)
    }
}

/// Per-pixel argmax membership; ties go to the smallest cluster index.
pub fn argmax_labels(u: &PartitionMatrix, height: usize, width: usize) -> Result<LabelImage> {
    if u.pixels() != height * width {
        return Err(Error::Dimension(format!(
            "partition has {} pixels but geometry is {height}x{width}",
            u.pixels()
        )));
    }
    let c = u.clusters();
    let labels = (0..u.pixels())
        .map(|j| {
            let mut best = 0;
            let mut best_v = u.value(0, j);
            for i in 1..c {
                let v = u.value(i, j);
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            best as u32 + 1
        })
        .collect();
    LabelImage::new(height, width, c as u32, labels)
}

/// Smooth a label image by treating labels as gray values and applying the
/// closing reconstruction, then re-rounding into `[1, c]`. With a flat
/// structuring element the reconstruction of integers stays integral, so
/// the rounding is a safeguard only.
pub fn smooth_labels(lbl: &LabelImage, se: &StructuringElement) -> Result<LabelImage> {
    let as_gray = GrayImage::from_raw(
        lbl.height(),
        lbl.width(),
        lbl.labels().iter().map(|&l| l as f64).collect(),
    );
    let smoothed = closing_reconstruction(&as_gray, se)?;
    let c = lbl.num_classes();
    let labels = smoothed
        .data()
        .iter()
        .map(|&v| (v.round() as i64).clamp(1, c as i64) as u32)
        .collect();
    LabelImage::new(lbl.height(), lbl.width(), c, labels)
}

/// Column `j` of the output is the prototype of the label at pixel `j`.
pub fn assemble_segmented_features(lbl: &LabelImage, v: &Prototypes) -> Result<FeatureSet> {
    if lbl.num_classes() as usize > v.clusters() {
        return Err(Error::Param(format!(
            "labels reference {} classes but only {} prototypes exist",
            lbl.num_classes(),
            v.clusters()
        )));
    }
    let (l, k) = (v.channels(), lbl.labels().len());
    let mut data = vec![0.0; l * k];
    for (j, &label) in lbl.labels().iter().enumerate() {
        let proto = v.vector(label as usize - 1);
        for ch in 0..l {
            data[ch * k + j] = proto[ch];
        }
    }
    Ok(FeatureSet::from_raw(l, lbl.height(), lbl.width(), data))
}

/// Reconstruct the segmented image from per-label prototype features.
pub fn render_segmentation(lbl: &LabelImage, v: &Prototypes) -> Result<GrayImage> {
    frames::reconstruct(&assemble_segmented_features(lbl, v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::decompose;
    use rand::prelude::*;

    fn partition(c: usize, k: usize, cols: &[Vec<f64>]) -> PartitionMatrix {
        let mut u = vec![0.0; c * k];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..c {
                u[i * k + j] = col[i];
            }
        }
        PartitionMatrix::new(c, k, u).unwrap()
    }

    #[test]
    fn crisp_labels_read_off() {
        let u = partition(2, 2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let lbl = argmax_labels(&u, 1, 2).unwrap();
        assert_eq!(lbl.labels(), &[1, 2]);
    }

    #[test]
    fn ties_take_smallest_index() {
        let u = partition(2, 1, &[vec![0.5, 0.5]]);
        let lbl = argmax_labels(&u, 1, 1).unwrap();
        assert_eq!(lbl.labels(), &[1]);
    }

    #[test]
    fn argmax_matches_column_scan() {
        let mut rng = StdRng::seed_from_u64(31);
        let (c, k) = (4, 24);
        let mut u = vec![0.0; c * k];
        for j in 0..k {
            let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for i in 0..c {
                u[i * k + j] = raw[i] / sum;
            }
        }
        let pm = PartitionMatrix::new(c, k, u.clone()).unwrap();
        let lbl = argmax_labels(&pm, 4, 6).unwrap();
        for j in 0..k {
            let mut best = 0;
            for i in 1..c {
                if u[i * k + j] > u[best * k + j] {
                    best = i;
                }
            }
            assert_eq!(lbl.labels()[j], best as u32 + 1);
        }
    }

    #[test]
    fn argmax_invariant_to_argmax_preserving_rescale() {
        let u = partition(2, 2, &[vec![0.7, 0.3], vec![0.2, 0.8]]);
        let lbl = argmax_labels(&u, 1, 2).unwrap();
        // monotone transform of columns that keeps the winner
        let u2 = partition(2, 2, &[vec![0.9, 0.1], vec![0.05, 0.95]]);
        assert_eq!(lbl, argmax_labels(&u2, 1, 2).unwrap());
    }

    #[test]
    fn smooth_constant_label_image_unchanged() {
        let lbl = LabelImage::new(4, 4, 3, vec![2; 16]).unwrap();
        let se = StructuringElement::square(3).unwrap();
        assert_eq!(smooth_labels(&lbl, &se).unwrap(), lbl);
    }

    #[test]
    fn smooth_removes_isolated_speck() {
        let mut labels = vec![1u32; 25];
        labels[12] = 2;
        let lbl = LabelImage::new(5, 5, 2, labels).unwrap();
        let se = StructuringElement::square(3).unwrap();
        let out = smooth_labels(&lbl, &se).unwrap();
        assert!(out.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn smooth_is_idempotent_and_in_range() {
        let mut rng = StdRng::seed_from_u64(32);
        for _ in 0..5 {
            let labels: Vec<u32> = (0..64).map(|_| rng.gen_range(1..=4)).collect();
            let lbl = LabelImage::new(8, 8, 4, labels).unwrap();
            let se = StructuringElement::square(3).unwrap();
            let once = smooth_labels(&lbl, &se).unwrap();
            let twice = smooth_labels(&once, &se).unwrap();
            assert_eq!(once, twice);
            assert!(once.labels().iter().all(|&l| (1..=4).contains(&l)));
        }
    }

    #[test]
    fn assemble_uniform_and_checkerboard() {
        let v = Prototypes::new(2, 3, vec![1.0, 2.0, 3.0, 9.0, 8.0, 7.0]).unwrap();
        let all_two = LabelImage::new(2, 2, 2, vec![2; 4]).unwrap();
        let fs = assemble_segmented_features(&all_two, &v).unwrap();
        for j in 0..4 {
            assert_eq!(fs.column(j), vec![9.0, 8.0, 7.0]);
        }
        let checker = LabelImage::new(2, 2, 2, vec![1, 2, 2, 1]).unwrap();
        let fs = assemble_segmented_features(&checker, &v).unwrap();
        assert_eq!(fs.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(fs.column(1), vec![9.0, 8.0, 7.0]);
        assert_eq!(fs.column(3), vec![1.0, 2.0, 3.0]);
        // random labels: column-wise lookup matches the naive loop
        let mut rng = StdRng::seed_from_u64(33);
        let labels: Vec<u32> = (0..12).map(|_| rng.gen_range(1..=2)).collect();
        let lbl = LabelImage::new(3, 4, 2, labels.clone()).unwrap();
        let fs = assemble_segmented_features(&lbl, &v).unwrap();
        for (j, &l) in labels.iter().enumerate() {
            assert_eq!(fs.column(j), v.vector(l as usize - 1).to_vec());
        }
    }

    #[test]
    fn render_zero_prototypes_gives_zero_image() {
        let v = Prototypes::new(2, 9, vec![0.0; 18]).unwrap();
        let lbl = LabelImage::new(3, 3, 2, vec![1, 2, 1, 2, 1, 2, 1, 2, 1]).unwrap();
        let img = render_segmentation(&lbl, &v).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn render_step_image_exact_away_from_boundary() {
        // two-level step: prototypes from decomposing constant images
        let (h, w) = (8, 8);
        let mut data = vec![10.0; h * w];
        for r in 0..h {
            for c in 4..w {
                data[r * w + c] = 200.0;
            }
        }
        let step = GrayImage::new(h, w, data).unwrap();
        let lo = decompose(&GrayImage::constant(h, w, 10.0), 1).unwrap();
        let hi = decompose(&GrayImage::constant(h, w, 200.0), 1).unwrap();
        let mut v = Vec::new();
        v.extend((0..9).map(|l| lo.value(l, 0)));
        v.extend((0..9).map(|l| hi.value(l, 0)));
        let protos = Prototypes::new(2, 9, v).unwrap();
        let labels: Vec<u32> = step.data().iter().map(|&x| if x > 100.0 { 2 } else { 1 }).collect();
        let lbl = LabelImage::new(h, w, 2, labels).unwrap();
        let img = render_segmentation(&lbl, &protos).unwrap();
        for r in 0..h {
            for c in 0..w {
                if (2..6).contains(&c) {
                    continue; // boundary band of width 2 around the step
                }
                let expect = if c >= 4 { 200.0 } else { 10.0 };
                assert!(
                    (img.at(r, c) - expect).abs() <= 1e-10,
                    "at ({r},{c}): {}",
                    img.at(r, c)
                );
            }
        }
    }

    #[test]
    fn spread_gray_levels() {
        let lbl = LabelImage::new(1, 4, 4, vec![1, 2, 3, 4]).unwrap();
        let img = lbl.to_gray_spread();
        assert_eq!(img.data(), &[0.0, 85.0, 170.0, 255.0]);
        let single = LabelImage::new(1, 1, 1, vec![1]).unwrap();
        assert_eq!(single.to_gray_spread().data(), &[0.0]);
    }

    #[test]
    fn label_validation() {
        assert!(LabelImage::new(1, 2, 2, vec![1, 3]).is_err());
        assert!(LabelImage::new(1, 2, 2, vec![0, 1]).is_err());
        assert!(LabelImage::new(2, 2, 2, vec![1, 2]).is_err());
    }
}
