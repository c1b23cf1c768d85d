//! Shared test oracles: literal summation forms of the solver updates and
//! objectives, independent of the library's hoisted implementations, plus
//! random instance generators.

use lrfcm::clustering::{
    NeighborhoodSpec, PartitionMatrix, Prototypes, Residuals, ThresholdConvention,
};
use lrfcm::frames::FeatureSet;
use rand::prelude::*;

pub struct Instance {
    pub x: FeatureSet,
    pub u: PartitionMatrix,
    pub v: Prototypes,
    pub r: Residuals,
    pub beta: Vec<f64>,
    pub m: f64,
}

pub fn random_instance(
    height: usize,
    width: usize,
    channels: usize,
    clusters: usize,
    m: f64,
    beta_scale: f64,
    rng: &mut StdRng,
) -> Instance {
    let k = height * width;
    let x = FeatureSet::new(
        channels,
        height,
        width,
        (0..channels * k).map(|_| rng.gen_range(0.0..255.0)).collect(),
    )
    .unwrap();
    let mut u = vec![0.0; clusters * k];
    for j in 0..k {
        let raw: Vec<f64> = (0..clusters).map(|_| rng.gen_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        for i in 0..clusters {
            u[i * k + j] = raw[i] / sum;
        }
    }
    let u = PartitionMatrix::new(clusters, k, u).unwrap();
    let v = Prototypes::new(
        clusters,
        channels,
        (0..clusters * channels).map(|_| rng.gen_range(0.0..255.0)).collect(),
    )
    .unwrap();
    let r = Residuals::new(
        k,
        channels,
        (0..k * channels).map(|_| rng.gen_range(-30.0..30.0)).collect(),
    )
    .unwrap();
    let beta = lrfcm::clustering::estimate_beta(&x, beta_scale);
    Instance { x, u, v, r, beta, m }
}

/// Squared distance between the denoised feature column of pixel `n` and
/// prototype `i`.
fn dist2(x: &FeatureSet, r: &Residuals, v: &Prototypes, n: usize, i: usize) -> f64 {
    (0..x.channels())
        .map(|l| {
            let d = x.value(l, n) - r.value(n, l) - v.vector(i)[l];
            d * d
        })
        .sum()
}

/// Literal membership update: the ratio of inverse window-weighted
/// distances raised to 1/(m-1), with the crisp rule on exact hits.
pub fn oracle_partition(
    x: &FeatureSet,
    r: &Residuals,
    v: &Prototypes,
    nb: &NeighborhoodSpec,
    m: f64,
) -> Vec<f64> {
    let (h, w, k, c) = (x.height(), x.width(), x.pixels(), v.clusters());
    let mut out = vec![0.0; c * k];
    for row in 0..h {
        for col in 0..w {
            let j = row * w + col;
            let d: Vec<f64> = (0..c)
                .map(|i| {
                    let mut acc = 0.0;
                    nb.for_each_neighbor(h, w, row, col, |n, wt| {
                        acc += wt * dist2(x, r, v, n, i);
                    });
                    acc
                })
                .collect();
            let zeros: Vec<usize> = (0..c).filter(|&i| d[i] < 1e-12).collect();
            if !zeros.is_empty() {
                for &i in &zeros {
                    out[i * k + j] = 1.0 / zeros.len() as f64;
                }
            } else {
                let e = 1.0 / (m - 1.0);
                let inv: Vec<f64> = d.iter().map(|&dd| dd.powf(-e)).collect();
                let total: f64 = inv.iter().sum();
                for i in 0..c {
                    out[i * k + j] = inv[i] / total;
                }
            }
        }
    }
    out
}

/// Literal prototype update: double sum over pixels and window neighbors.
pub fn oracle_prototypes(
    x: &FeatureSet,
    r: &Residuals,
    u: &PartitionMatrix,
    nb: &NeighborhoodSpec,
    m: f64,
) -> Vec<f64> {
    let (h, w, lch, c) = (x.height(), x.width(), x.channels(), u.clusters());
    let mut out = vec![0.0; c * lch];
    for i in 0..c {
        let mut num = vec![0.0; lch];
        let mut den = 0.0;
        for row in 0..h {
            for col in 0..w {
                let j = row * w + col;
                let um = u.value(i, j).powf(m);
                nb.for_each_neighbor(h, w, row, col, |n, wt| {
                    den += um * wt;
                    for (ch, acc) in num.iter_mut().enumerate() {
                        *acc += um * wt * (x.value(ch, n) - r.value(n, ch));
                    }
                });
            }
        }
        for ch in 0..lch {
            out[i * lch + ch] = num[ch] / den;
        }
    }
    out
}

/// Literal residual update: triple sum for the numerator, denominator and
/// threshold of the hard-thresholded closed form.
pub fn oracle_residuals(
    x: &FeatureSet,
    u: &PartitionMatrix,
    v: &Prototypes,
    nb: &NeighborhoodSpec,
    m: f64,
    beta: &[f64],
    convention: ThresholdConvention,
) -> Vec<f64> {
    let (h, w, lch, c) = (x.height(), x.width(), x.channels(), u.clusters());
    let k = x.pixels();
    let mut out = vec![0.0; k * lch];
    for row in 0..h {
        for col in 0..w {
            let j = row * w + col;
            let mut a = 0.0;
            for i in 0..c {
                nb.for_each_neighbor(h, w, row, col, |n, wt| {
                    a += u.value(i, n).powf(m) * wt;
                });
            }
            let mut wsum = 0.0;
            nb.for_each_neighbor(h, w, row, col, |_, wt| wsum += wt);
            for ch in 0..lch {
                let mut b = 0.0;
                for i in 0..c {
                    nb.for_each_neighbor(h, w, row, col, |n, wt| {
                        b += u.value(i, n).powf(m) * wt * (x.value(ch, j) - v.vector(i)[ch]);
                    });
                }
                let sigma = beta[ch] * wsum;
                out[j * lch + ch] =
                    lrfcm::clustering::hard_threshold_with(b, sigma, convention) / a;
            }
        }
    }
    out
}

/// Literal spatial objective: window-weighted distances plus the weighted
/// nonzero-residual count.
pub fn oracle_objective_eq9(
    x: &FeatureSet,
    u: &PartitionMatrix,
    v: &Prototypes,
    r: &Residuals,
    nb: &NeighborhoodSpec,
    m: f64,
    beta: &[f64],
) -> f64 {
    let (h, w, c) = (x.height(), x.width(), u.clusters());
    let mut data = 0.0;
    for i in 0..c {
        for row in 0..h {
            for col in 0..w {
                let j = row * w + col;
                let mut acc = 0.0;
                nb.for_each_neighbor(h, w, row, col, |n, wt| {
                    acc += wt * dist2(x, r, v, n, i);
                });
                data += u.value(i, j).powf(m) * acc;
            }
        }
    }
    let mut reg = 0.0;
    for (ch, &b) in beta.iter().enumerate() {
        for row in 0..h {
            for col in 0..w {
                nb.for_each_neighbor(h, w, row, col, |n, wt| {
                    if r.value(n, ch) != 0.0 {
                        reg += b * wt;
                    }
                });
            }
        }
    }
    data + reg
}

/// The same objective after the neighbor rearrangement: distances taken at
/// the center pixel with neighbor-summed membership weights.
pub fn oracle_objective_eq14(
    x: &FeatureSet,
    u: &PartitionMatrix,
    v: &Prototypes,
    r: &Residuals,
    nb: &NeighborhoodSpec,
    m: f64,
    beta: &[f64],
) -> f64 {
    let (h, w, c) = (x.height(), x.width(), u.clusters());
    let mut data = 0.0;
    for i in 0..c {
        for row in 0..h {
            for col in 0..w {
                let j = row * w + col;
                let dj = dist2(x, r, v, j, i);
                nb.for_each_neighbor(h, w, row, col, |n, wt| {
                    data += u.value(i, n).powf(m) * wt * dj;
                });
            }
        }
    }
    let mut reg = 0.0;
    for (ch, &b) in beta.iter().enumerate() {
        for row in 0..h {
            for col in 0..w {
                let j = row * w + col;
                if r.value(j, ch) != 0.0 {
                    nb.for_each_neighbor(h, w, row, col, |_, wt| {
                        reg += b * wt;
                    });
                }
            }
        }
    }
    data + reg
}

/// Relative mismatch with a unit floor, suitable for values of order 1..1e3.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| rel_err(x, y))
        .fold(0.0, f64::max)
}
