//! Segmentation accuracy and entropy-based evaluation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::labeling::LabelImage;

/// Evaluation summary; fields are present when the corresponding inputs
/// were supplied.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub sa_percent: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub ei: Option<f64>,
    /// Pairs of (predicted label, ground-truth label) chosen by the optimal
    /// assignment.
    pub matching: Option<Vec<(u32, u32)>>,
    pub pixels: usize,
}

/// Best-assignment segmentation accuracy in percent, together with the
/// maximizing predicted-to-truth label matching. Exhaustive search over
/// permutations up to 8 classes, Hungarian assignment beyond.
pub fn segmentation_accuracy(
    pred: &LabelImage,
    truth: &LabelImage,
) -> Result<(f64, Vec<(u32, u32)>)> {
    if !pred.same_dims(truth) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            pred.height(),
            pred.width(),
            truth.height(),
            truth.width()
        )));
    }
    let np = pred.num_classes() as usize;
    let nt = truth.num_classes() as usize;
    let n = np.max(nt);
    // overlap[i][j] = pixels with pred label i+1 and truth label j+1,
    // zero-padded to a square
    let mut overlap = vec![0u64; n * n];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        overlap[(p as usize - 1) * n + (t as usize - 1)] += 1;
    }
    let assignment = if n <= 8 {
        best_assignment_exhaustive(&overlap, n)
    } else {
        best_assignment_hungarian(&overlap, n)
    };
    let total: u64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| overlap[i * n + j])
        .sum();
    let k = pred.labels().len() as f64;
    let matching = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < np && j < nt)
        .map(|(i, &j)| (i as u32 + 1, j as u32 + 1))
        .collect();
    Ok((100.0 * total as f64 / k, matching))
}

/// Try every permutation; `n <= 8` keeps this below 8! candidates.
fn best_assignment_exhaustive(overlap: &[u64], n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_score = score(overlap, n, &perm);
    // Heap's algorithm
    let mut counters = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let s = score(overlap, n, &perm);
            if s > best_score {
                best_score = s;
                best = perm.clone();
            }
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

fn score(overlap: &[u64], n: usize, perm: &[usize]) -> u64 {
    perm.iter().enumerate().map(|(i, &j)| overlap[i * n + j]).sum()
}

/// O(n^3) min-cost assignment with potentials, run on negated overlaps to
/// maximize.
fn best_assignment_hungarian(overlap: &[u64], n: usize) -> Vec<usize> {
    let max = *overlap.iter().max().unwrap_or(&0) as f64;
    let cost = |i: usize, j: usize| max - overlap[i * n + j] as f64;
    const INF: f64 = f64::INFINITY;
    // 1-based potentials over rows (u) and columns (v)
    let mut pu = vec![0.0; n + 1];
    let mut pv = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut matched_col_to_row = vec![0usize; n + 1]; // p[j] = row matched to column j
    for i in 1..=n {
        matched_col_to_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_col_to_row[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - pu[i0] - pv[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    pu[matched_col_to_row[j]] += delta;
                    pv[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_col_to_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_col_to_row[j0] = matched_col_to_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched_col_to_row[j] > 0 {
            assignment[matched_col_to_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Expected region entropy, layout entropy, and their sum. The segmented
/// image is binned to integer gray levels in `[0, 255]` first; natural
/// logarithms throughout; empty regions contribute zero.
pub fn entropy_information(seg: &GrayImage, regions: &LabelImage) -> Result<(f64, f64, f64)> {
    if seg.height() != regions.height() || seg.width() != regions.width() {
        return Err(Error::Dimension(
            "segmented image and region labels must share dimensions".into(),
        ));
    }
    let c = regions.num_classes() as usize;
    let k = seg.len() as f64;
    let mut hist = vec![[0u64; 256]; c];
    let mut sizes = vec![0u64; c];
    for (&v, &label) in seg.data().iter().zip(regions.labels()) {
        let bin = v.clamp(0.0, 255.0).round() as usize;
        hist[label as usize - 1][bin] += 1;
        sizes[label as usize - 1] += 1;
    }
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for i in 0..c {
        if sizes[i] == 0 {
            continue;
        }
        let size = sizes[i] as f64;
        let mut region_entropy = 0.0;
        for &count in &hist[i] {
            if count > 0 {
                let p = count as f64 / size;
                region_entropy -= p * p.ln();
            }
        }
        e1 += size * region_entropy / k;
        let share = size / k;
        e2 -= share * share.ln();
    }
    Ok((e1, e2, e1 + e2))
}
