//! Spatially weighted fuzzy C-means with hard-thresholded sparse residual
//! estimation, plus the classic FCM baseline.
//!
//! One solver sweep updates memberships, prototypes and residuals in that
//! order; each update is the closed-form minimizer of its subproblem with
//! the other blocks held fixed. Neighborhood windows are clipped at the
//! image border so that `n` in `N_j` iff `j` in `N_n`, which the residual
//! rearrangement relies on.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::FeatureSet;

/// Distances below this are treated as an exact hit and produce crisp
/// membership.
const SINGULARITY_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Fuzzy memberships: a `c x K` matrix whose columns sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMatrix {
    clusters: usize,
    pixels: usize,
    u: Vec<f64>,
}

impl PartitionMatrix {
    pub fn new(clusters: usize, pixels: usize, u: Vec<f64>) -> Result<Self> {
        if u.len() != clusters * pixels {
            return Err(Error::Dimension(format!(
                "partition length {} does not match {clusters}x{pixels}",
                u.len()
            )));
        }
        for j in 0..pixels {
            let mut sum = 0.0;
            for i in 0..clusters {
                let v = u[i * pixels + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Param(format!("membership {v} outside [0, 1]")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Param(format!(
                    "column {j} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            clusters,
            pixels,
            u,
        })
    }

    fn from_raw(clusters: usize, pixels: usize, u: Vec<f64>) -> Self {
        debug_assert_eq!(u.len(), clusters * pixels);
        Self {
            clusters,
            pixels,
            u,
        }
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    #[inline]
    pub fn value(&self, cluster: usize, pixel: usize) -> f64 {
        self.u[cluster * self.pixels + pixel]
    }

    pub fn row(&self, cluster: usize) -> &[f64] {
        &self.u[cluster * self.pixels..(cluster + 1) * self.pixels]
    }

    pub fn data(&self) -> &[f64] {
        &self.u
    }

    /// Frobenius norm of the difference.
    pub fn delta(&self, other: &PartitionMatrix) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Reorder cluster rows by `perm` (new row i = old row perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> PartitionMatrix {
        let mut u = Vec::with_capacity(self.u.len());
        for &src in perm {
            u.extend_from_slice(self.row(src));
        }
        PartitionMatrix::from_raw(self.clusters, self.pixels, u)
    }
}

/// Cluster centers in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    clusters: usize,
    channels: usize,
    v: Vec<f64>,
}

impl Prototypes {
    pub fn new(clusters: usize, channels: usize, v: Vec<f64>) -> Result<Self> {
        if v.len() != clusters * channels {
            return Err(Error::Dimension(format!(
                "prototype length {} does not match {clusters}x{channels}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Param("prototypes contain non-finite values".into()));
        }
        Ok(Self {
            clusters,
            channels,
            v,
        })
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn vector(&self, cluster: usize) -> &[f64] {
        &self.v[cluster * self.channels..(cluster + 1) * self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.v
    }

    pub fn permuted(&self, perm: &[usize]) -> Prototypes {
        let mut v = Vec::with_capacity(self.v.len());
        for &src in perm {
            v.extend_from_slice(self.vector(src));
        }
        Prototypes {
            clusters: self.clusters,
            channels: self.channels,
            v,
        }
    }

    /// Restrict every prototype to a contiguous channel range.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Prototypes {
        let mut v = Vec::with_capacity(self.clusters * range.len());
        for i in 0..self.clusters {
            v.extend_from_slice(&self.vector(i)[range.clone()]);
        }
        Prototypes {
            clusters: self.clusters,
            channels: range.len(),
            v,
        }
    }
}

/// Per-pixel, per-channel residual estimates, pixel-major (`K x L`).
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pixels: usize,
    channels: usize,
    r: Vec<f64>,
}

impl Residuals {
    pub fn zeros(pixels: usize, channels: usize) -> Self {
        Self {
            pixels,
            channels,
            r: vec![0.0; pixels * channels],
        }
    }

    pub fn new(pixels: usize, channels: usize, r: Vec<f64>) -> Result<Self> {
        if r.len() != pixels * channels {
            return Err(Error::Dimension(format!(
                "residual length {} does not match {pixels}x{channels}",
                r.len()
            )));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::Param("residuals contain non-finite values".into()));
        }
        Ok(Self {
            pixels,
            channels,
            r,
        })
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn value(&self, pixel: usize, channel: usize) -> f64 {
        self.r[pixel * self.channels + channel]
    }

    pub fn data(&self) -> &[f64] {
        &self.r
    }

    pub fn count_nonzero(&self) -> usize {
        self.r.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Square window of the given Chebyshev radius; each in-bounds neighbor `n`
/// of pixel `j` carries weight `1 / (1 + d_nj)` with `d_nj` the Euclidean
/// distance between the pixel coordinates. The center is included with
/// weight 1. Windows clip at the image border.
#[derive(Debug, Clone)]
pub struct NeighborhoodSpec {
    radius: usize,
    offsets: Vec<(isize, isize, f64)>,
}

impl NeighborhoodSpec {
    pub fn new(radius: usize) -> Self {
        let r = radius as isize;
        let mut offsets = Vec::new();
        for di in -r..=r {
            for dj in -r..=r {
                let d = ((di * di + dj * dj) as f64).sqrt();
                offsets.push((di, dj, 1.0 / (1.0 + d)));
            }
        }
        Self { radius, offsets }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[(isize, isize, f64)] {
        &self.offsets
    }

    #[inline]
    pub fn for_each_neighbor(
        &self,
        height: usize,
        width: usize,
        row: usize,
        col: usize,
        mut f: impl FnMut(usize, f64),
    ) {
        for &(di, dj, wt) in &self.offsets {
            let nr = row as isize + di;
            let nc = col as isize + dj;
            if nr >= 0 && (nr as usize) < height && nc >= 0 && (nc as usize) < width {
                f(nr as usize * width + nc as usize, wt);
            }
        }
    }

    /// Total neighbor weight per pixel.
    pub fn weight_sums(&self, height: usize, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; height * width];
        for r in 0..height {
            for c in 0..width {
                let mut acc = 0.0;
                self.for_each_neighbor(height, width, r, c, |_, wt| acc += wt);
                out[r * width + c] = acc;
            }
        }
        out
    }
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self::new(1)
    }
}

/// How the hard-threshold operator treats negative inputs: `Magnitude`
/// keeps any value whose magnitude reaches the threshold, `Literal` keeps
/// only values that are themselves at least the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdConvention {
    #[default]
    Magnitude,
    Literal,
}

impl std::str::FromStr for ThresholdConvention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "magnitude" => Ok(Self::Magnitude),
            "literal" => Ok(Self::Literal),
            other => Err(format!(
                "unknown threshold convention `{other}` (expected magnitude or literal)"
            )),
        }
    }
}

/// Hard threshold with the magnitude convention: keep `xi` when
/// `|xi| >= sqrt(sigma)`, otherwise zero.
pub fn hard_threshold(xi: f64, sigma: f64) -> f64 {
    hard_threshold_with(xi, sigma, ThresholdConvention::Magnitude)
}

pub fn hard_threshold_with(xi: f64, sigma: f64, convention: ThresholdConvention) -> f64 {
    let t = sigma.sqrt();
    let keep = match convention {
        ThresholdConvention::Magnitude => xi.abs() >= t,
        ThresholdConvention::Literal => xi >= t,
    };
    if keep {
        xi
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of clusters `c`.
    pub clusters: usize,
    /// Fuzzification coefficient `m` (> 1).
    pub fuzzifier: f64,
    /// Convergence threshold on the Frobenius norm of the membership change.
    pub epsilon: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Per-channel regularization weights; may be left empty when residual
    /// updates are disabled.
    pub beta: Vec<f64>,
    /// Seed for prototype initialization.
    pub seed: u64,
    pub threshold_convention: ThresholdConvention,
    /// When false the residual subproblem is skipped and residuals stay
    /// zero (the classic spatially weighted update loop).
    pub residual_updates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            fuzzifier: 2.0,
            epsilon: 1e-6,
            max_iter: 300,
            beta: Vec::new(),
            seed: 0,
            threshold_convention: ThresholdConvention::Magnitude,
            residual_updates: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self, feature_channels: usize, pixels: usize) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::Param("cluster count must be at least 1".into()));
        }
        if self.clusters > pixels {
            return Err(Error::Param(format!(
                "cluster count {} exceeds pixel count {pixels}",
                self.clusters
            )));
        }
        if !(self.fuzzifier > 1.0) {
            return Err(Error::Param(format!(
                "fuzzifier must be > 1, got {}",
                self.fuzzifier
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Param(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Param("max_iter must be at least 1".into()));
        }
        if self.residual_updates && self.beta.len() != feature_channels {
            return Err(Error::Param(format!(
                "beta has {} entries but the feature set has {feature_channels} channels",
                self.beta.len()
            )));
        }
        if self.beta.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::Param("beta entries must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-sweep solver statistics.
#[derive(Debug, Clone, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub objective: f64,
    /// Frobenius norm of the membership change; absent on the first sweep.
    pub delta_u: Option<f64>,
    pub nonzero_residuals: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReseedEvent {
    pub iteration: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub partition: PartitionMatrix,
    pub prototypes: Prototypes,
    pub residuals: Residuals,
    /// Number of sweeps executed.
    pub iterations: usize,
    pub trace: Vec<IterationStats>,
    pub reseeded: Vec<ReseedEvent>,
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

#[inline]
fn powm(v: f64, m: f64) -> f64 {
    if m == 2.0 {
        v * v
    } else {
        v.powf(m)
    }
}

/// `scale` times the population standard deviation of each channel.
pub fn estimate_beta(x: &FeatureSet, scale: f64) -> Vec<f64> {
    let k = x.pixels() as f64;
    (0..x.channels())
        .map(|l| {
            let ch = x.channel(l);
            let mean = ch.iter().sum::<f64>() / k;
            let var = ch.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / k;
            scale * var.sqrt()
        })
        .collect()
}

/// Sample `c` distinct pixel columns without replacement via the seeded
/// generator. The first column is drawn uniformly; each further draw is
/// weighted by the squared distance to the nearest column already chosen,
/// so the starting prototypes spread across the data instead of piling
/// into one region (exact duplicates of a chosen column get weight zero
/// and are only used once every remaining column is a duplicate).
pub fn init_prototypes(x: &FeatureSet, clusters: usize, seed: u64) -> Result<Prototypes> {
    let k = x.pixels();
    let l = x.channels();
    if clusters == 0 || clusters > k {
        return Err(Error::Param(format!(
            "cannot draw {clusters} prototypes from {k} pixels"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(clusters);
    let mut taken = vec![false; k];
    let first = rng.gen_range(0..k);
    chosen.push(first);
    taken[first] = true;
    // squared distance to the nearest chosen column
    let mut dist2 = vec![0.0f64; k];
    let update_dist = |dist2: &mut Vec<f64>, latest: usize, fresh: bool| {
        let vl = x.column(latest);
        for j in 0..k {
            let d: f64 = (0..l)
                .map(|ch| {
                    let diff = x.value(ch, j) - vl[ch];
                    diff * diff
                })
                .sum();
            if fresh || d < dist2[j] {
                dist2[j] = d;
            }
        }
    };
    update_dist(&mut dist2, first, true);
    while chosen.len() < clusters {
        let total: f64 = (0..k).filter(|&j| !taken[j]).map(|j| dist2[j]).sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut found = None;
            for j in 0..k {
                if taken[j] {
                    continue;
                }
                target -= dist2[j];
                if target < 0.0 {
                    found = Some(j);
                    break;
                }
            }
            found.unwrap_or_else(|| (0..k).rfind(|&j| !taken[j]).unwrap())
        } else {
            // every remaining column duplicates a chosen one
            let remaining: Vec<usize> = (0..k).filter(|&j| !taken[j]).collect();
            remaining[rng.gen_range(0..remaining.len())]
        };
        taken[pick] = true;
        chosen.push(pick);
        update_dist(&mut dist2, pick, false);
    }
    let mut v = Vec::with_capacity(clusters * l);
    for &j in &chosen {
        v.extend(x.column(j));
    }
    Ok(Prototypes {
        clusters,
        channels: l,
        v,
    })
}

/// Shared per-instance buffers: the pixel-major feature matrix and the
/// neighborhood weight totals.
struct Workspace {
    height: usize,
    width: usize,
    pixels: usize,
    channels: usize,
    /// `K x L` pixel-major copy of the feature matrix.
    xt: Vec<f64>,
    /// Per-pixel total neighbor weight.
    wsum: Vec<f64>,
    nb: NeighborhoodSpec,
}

impl Workspace {
    fn new(x: &FeatureSet, nb: &NeighborhoodSpec) -> Self {
        let (h, w, k, l) = (x.height(), x.width(), x.pixels(), x.channels());
        let mut xt = vec![0.0; k * l];
        for ch in 0..l {
            let src = x.channel(ch);
            for j in 0..k {
                xt[j * l + ch] = src[j];
            }
        }
        Self {
            height: h,
            width: w,
            pixels: k,
            channels: l,
            xt,
            wsum: nb.weight_sums(h, w),
            nb: nb.clone(),
        }
    }

    /// Denoised features `y = x - r`, pixel-major.
    fn denoised(&self, r: &Residuals) -> Vec<f64> {
        self.xt.iter().zip(r.data()).map(|(x, r)| x - r).collect()
    }

    /// Neighbor-weighted first and second moments of `y`:
    /// `z_j = sum_n w_nj y_n` and `s_j = sum_n w_nj |y_n|^2`.
    fn moments(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.channels;
        let norms: Vec<f64> = (0..self.pixels)
            .map(|j| y[j * l..(j + 1) * l].iter().map(|v| v * v).sum())
            .collect();
        let mut z = vec![0.0; self.pixels * l];
        let mut s = vec![0.0; self.pixels];
        for row in 0..self.height {
            for col in 0..self.width {
                let j = row * self.width + col;
                let zj = &mut z[j * l..(j + 1) * l];
                let mut sj = 0.0;
                self.nb.for_each_neighbor(self.height, self.width, row, col, |n, wt| {
                    sj += wt * norms[n];
                    let yn = &y[n * l..(n + 1) * l];
                    for (acc, &v) in zj.iter_mut().zip(yn) {
                        *acc += wt * v;
                    }
                });
                s[j] = sj;
            }
        }
        (z, s)
    }

    /// Spatially weighted squared distances
    /// `D_ij = sum_n w_nj |y_n - v_i|^2`, expanded through the moments.
    fn distances(&self, z: &[f64], s: &[f64], v: &Prototypes) -> Vec<f64> {
        let (c, l, k) = (v.clusters(), self.channels, self.pixels);
        let vv: Vec<f64> = (0..c)
            .map(|i| v.vector(i).iter().map(|a| a * a).sum())
            .collect();
        let mut d = vec![0.0; c * k];
        for i in 0..c {
            let vi = v.vector(i);
            let di = &mut d[i * k..(i + 1) * k];
            for j in 0..k {
                let zj = &z[j * l..(j + 1) * l];
                let dot: f64 = zj.iter().zip(vi).map(|(a, b)| a * b).sum();
                di[j] = s[j] - 2.0 * dot + self.wsum[j] * vv[i];
            }
        }
        d
    }

    /// Membership update from precomputed distances.
    fn partition_from_distances(&self, d: &[f64], clusters: usize, m: f64) -> PartitionMatrix {
        let k = self.pixels;
        let e = 1.0 / (m - 1.0);
        let mut u = vec![0.0; clusters * k];
        for j in 0..k {
            let mut zero_hits = 0;
            for i in 0..clusters {
                if d[i * k + j] < SINGULARITY_EPS {
                    zero_hits += 1;
                }
            }
            if zero_hits > 0 {
                let share = 1.0 / zero_hits as f64;
                for i in 0..clusters {
                    u[i * k + j] = if d[i * k + j] < SINGULARITY_EPS {
                        share
                    } else {
                        0.0
                    };
                }
            } else {
                let mut total = 0.0;
                for i in 0..clusters {
                    let t = if e == 1.0 {
                        1.0 / d[i * k + j]
                    } else {
                        d[i * k + j].powf(-e)
                    };
                    u[i * k + j] = t;
                    total += t;
                }
                for i in 0..clusters {
                    u[i * k + j] /= total;
                }
            }
        }
        PartitionMatrix::from_raw(clusters, k, u)
    }

    /// Prototype update; returns the clusters that had to be reseeded from
    /// the farthest pixel because their membership mass vanished.
    fn prototypes_from_moments(
        &self,
        z: &[f64],
        y: &[f64],
        u: &PartitionMatrix,
        m: f64,
    ) -> (Prototypes, Vec<usize>) {
        let (c, l, k) = (u.clusters(), self.channels, self.pixels);
        let mut num = vec![0.0; c * l];
        let mut den = vec![0.0; c];
        for i in 0..c {
            let row = u.row(i);
            let ni = &mut num[i * l..(i + 1) * l];
            for j in 0..k {
                let um = powm(row[j], m);
                if um == 0.0 {
                    continue;
                }
                den[i] += um * self.wsum[j];
                let zj = &z[j * l..(j + 1) * l];
                for (acc, &v) in ni.iter_mut().zip(zj) {
                    *acc += um * v;
                }
            }
        }
        let mut v = vec![0.0; c * l];
        let mut starved = Vec::new();
        for i in 0..c {
            if den[i] > 0.0 {
                for ch in 0..l {
                    v[i * l + ch] = num[i * l + ch] / den[i];
                }
            } else {
                starved.push(i);
            }
        }
        if !starved.is_empty() {
            // reseed each starved prototype from the denoised feature column
            // farthest from every healthy prototype
            let healthy: Vec<usize> = (0..c).filter(|i| !starved.contains(i)).collect();
            for &i in &starved {
                let mut best_j = 0;
                let mut best_d = f64::NEG_INFINITY;
                for j in 0..k {
                    let yj = &y[j * l..(j + 1) * l];
                    let d = healthy
                        .iter()
                        .map(|&q| {
                            yj.iter()
                                .zip(&v[q * l..(q + 1) * l])
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                        })
                        .fold(f64::INFINITY, f64::min);
                    if d > best_d {
                        best_d = d;
                        best_j = j;
                    }
                }
                v[i * l..(i + 1) * l].copy_from_slice(&y[best_j * l..(best_j + 1) * l]);
            }
        }
        (
            Prototypes {
                clusters: c,
                channels: l,
                v,
            },
            starved,
        )
    }

    /// Residual update: per pixel and channel,
    /// `r = H_sigma(B) / A` with
    /// `A_j = sum_i sum_n u_in^m w_nj`,
    /// `B_jl = sum_i sum_n u_in^m w_nj (x_jl - v_il)` and
    /// `sigma_jl = beta_l sum_n w_nj`.
    fn residuals(
        &self,
        u: &PartitionMatrix,
        v: &Prototypes,
        m: f64,
        beta: &[f64],
        convention: ThresholdConvention,
    ) -> Residuals {
        let (c, l, k) = (u.clusters(), self.channels, self.pixels);
        // membership mass of each cluster over each window
        let um: Vec<f64> = u.data().iter().map(|&x| powm(x, m)).collect();
        let mut cc = vec![0.0; c * k];
        for i in 0..c {
            let src = &um[i * k..(i + 1) * k];
            let dst = &mut cc[i * k..(i + 1) * k];
            for row in 0..self.height {
                for col in 0..self.width {
                    let mut acc = 0.0;
                    self.nb
                        .for_each_neighbor(self.height, self.width, row, col, |n, wt| {
                            acc += wt * src[n];
                        });
                    dst[row * self.width + col] = acc;
                }
            }
        }
        let mut r = vec![0.0; k * l];
        for j in 0..k {
            let mut a = 0.0;
            for i in 0..c {
                a += cc[i * k + j];
            }
            if a <= 0.0 {
                continue; // unreachable when columns sum to 1; keep zeros
            }
            let mut q = vec![0.0; l];
            for i in 0..c {
                let w = cc[i * k + j];
                for (acc, &vv) in q.iter_mut().zip(v.vector(i)) {
                    *acc += w * vv;
                }
            }
            for ch in 0..l {
                let b = a * self.xt[j * l + ch] - q[ch];
                let sigma = beta[ch] * self.wsum[j];
                r[j * l + ch] = hard_threshold_with(b, sigma, convention) / a;
            }
        }
        Residuals {
            pixels: k,
            channels: l,
            r,
        }
    }

    /// Spatial objective: membership-weighted window distances plus the
    /// weighted count of nonzero residuals.
    fn objective(
        &self,
        u: &PartitionMatrix,
        d: &[f64],
        r: &Residuals,
        beta: &[f64],
        m: f64,
    ) -> f64 {
        let (c, k) = (u.clusters(), self.pixels);
        let mut data_term = 0.0;
        for i in 0..c {
            let row = u.row(i);
            let di = &d[i * k..(i + 1) * k];
            for j in 0..k {
                data_term += powm(row[j], m) * di[j];
            }
        }
        let l = self.channels;
        let penalty: Vec<f64> = (0..k)
            .map(|n| {
                let rn = &r.data()[n * l..(n + 1) * l];
                rn.iter()
                    .zip(beta)
                    .filter(|(&v, _)| v != 0.0)
                    .map(|(_, &b)| b)
                    .sum()
            })
            .collect();
        let mut reg_term = 0.0;
        for row in 0..self.height {
            for col in 0..self.width {
                self.nb
                    .for_each_neighbor(self.height, self.width, row, col, |n, wt| {
                        reg_term += wt * penalty[n];
                    });
            }
        }
        data_term + reg_term
    }
}

fn check_shapes(
    x: &FeatureSet,
    r: Option<&Residuals>,
    v: Option<&Prototypes>,
    u: Option<&PartitionMatrix>,
) -> Result<()> {
    if let Some(r) = r {
        if r.pixels() != x.pixels() || r.channels() != x.channels() {
            return Err(Error::Dimension("residual shape mismatch".into()));
        }
    }
    if let Some(v) = v {
        if v.channels() != x.channels() {
            return Err(Error::Dimension("prototype channel mismatch".into()));
        }
    }
    if let Some(u) = u {
        if u.pixels() != x.pixels() {
            return Err(Error::Dimension("partition pixel mismatch".into()));
        }
    }
    Ok(())
}

/// One membership update (the first subproblem).
pub fn update_partition(
    x: &FeatureSet,
    r: &Residuals,
    v: &Prototypes,
    nb: &NeighborhoodSpec,
    m: f64,
) -> Result<PartitionMatrix> {
    check_shapes(x, Some(r), Some(v), None)?;
    let ws = Workspace::new(x, nb);
    let y = ws.denoised(r);
    let (z, s) = ws.moments(&y);
    let d = ws.distances(&z, &s, v);
    Ok(ws.partition_from_distances(&d, v.clusters(), m))
}

/// One prototype update (the second subproblem). Returns the update and the
/// indices of any clusters reseeded after losing all membership mass.
pub fn update_prototypes(
    x: &FeatureSet,
    r: &Residuals,
    u: &PartitionMatrix,
    nb: &NeighborhoodSpec,
    m: f64,
) -> Result<(Prototypes, Vec<usize>)> {
    check_shapes(x, Some(r), None, Some(u))?;
    let ws = Workspace::new(x, nb);
    let y = ws.denoised(r);
    let (z, _) = ws.moments(&y);
    Ok(ws.prototypes_from_moments(&z, &y, u, m))
}

/// One residual update (the third subproblem).
pub fn update_residuals(
    x: &FeatureSet,
    u: &PartitionMatrix,
    v: &Prototypes,
    nb: &NeighborhoodSpec,
    m: f64,
    beta: &[f64],
    convention: ThresholdConvention,
) -> Result<Residuals> {
    check_shapes(x, None, Some(v), Some(u))?;
    if beta.len() != x.channels() {
        return Err(Error::Param("beta length must match channels".into()));
    }
    let ws = Workspace::new(x, nb);
    Ok(ws.residuals(u, v, m, beta, convention))
}

/// Value of the spatial objective for a full state.
pub fn objective(
    x: &FeatureSet,
    u: &PartitionMatrix,
    v: &Prototypes,
    r: &Residuals,
    nb: &NeighborhoodSpec,
    m: f64,
    beta: &[f64],
) -> Result<f64> {
    check_shapes(x, Some(r), Some(v), Some(u))?;
    let ws = Workspace::new(x, nb);
    let y = ws.denoised(r);
    let (z, s) = ws.moments(&y);
    let d = ws.distances(&z, &s, v);
    Ok(ws.objective(u, &d, r, beta, m))
}

/// Run the full alternating solver on a feature set.
pub fn run_lrfcm(
    x: &FeatureSet,
    nb: &NeighborhoodSpec,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    cfg.validate(x.channels(), x.pixels())?;
    let beta: Vec<f64> = if cfg.beta.is_empty() {
        vec![0.0; x.channels()]
    } else {
        cfg.beta.clone()
    };
    let ws = Workspace::new(x, nb);
    let m = cfg.fuzzifier;
    let c = cfg.clusters;

    let mut v = init_prototypes(x, c, cfg.seed)?;
    let mut r = Residuals::zeros(x.pixels(), x.channels());
    let mut y = ws.denoised(&r);
    let (mut z, mut s) = ws.moments(&y);
    let mut d = ws.distances(&z, &s, &v);
    let mut prev_u: Option<PartitionMatrix> = None;
    let mut trace = Vec::new();
    let mut reseeded = Vec::new();
    let mut iterations = 0;

    for t in 0..cfg.max_iter {
        iterations = t + 1;
        let u = ws.partition_from_distances(&d, c, m);
        let (v_next, starved) = ws.prototypes_from_moments(&z, &y, &u, m);
        v = v_next;
        for i in starved {
            reseeded.push(ReseedEvent {
                iteration: iterations,
                cluster: i,
            });
        }
        if cfg.residual_updates {
            r = ws.residuals(&u, &v, m, &beta, cfg.threshold_convention);
            y = ws.denoised(&r);
            (z, s) = ws.moments(&y);
        }
        // distances at the end of the sweep double as the next sweep's input
        d = ws.distances(&z, &s, &v);
        let obj = ws.objective(&u, &d, &r, &beta, m);
        let delta = prev_u.as_ref().map(|p| u.delta(p));
        trace.push(IterationStats {
            iteration: iterations,
            objective: obj,
            delta_u: delta,
            nonzero_residuals: r.count_nonzero(),
        });
        if !obj.is_finite() {
            return Err(Error::Divergence {
                iteration: iterations,
            });
        }
        let converged = delta.is_some_and(|dd| dd < cfg.epsilon);
        prev_u = Some(u);
        if converged {
            break;
        }
    }

    Ok(SolverResult {
        partition: prev_u.expect("at least one sweep"),
        prototypes: v,
        residuals: r,
        iterations,
        trace,
        reseeded,
    })
}

/// Classic fuzzy C-means: no neighborhood window and no residual model.
/// Equivalent to the spatial solver with a radius-0 window and residual
/// updates disabled.
pub fn run_baseline_fcm(x: &FeatureSet, cfg: &SolverConfig) -> Result<SolverResult> {
    let mut cfg = cfg.clone();
    cfg.residual_updates = false;
    cfg.beta = Vec::new();
    run_lrfcm(x, &NeighborhoodSpec::new(0), &cfg)
}

/// Reorder clusters so the summed low-pass prototype value increases with
/// the cluster index; returns the permutation applied (new index -> old).
pub fn order_clusters_by_intensity(
    u: &PartitionMatrix,
    v: &Prototypes,
    low_pass_channels: &[usize],
) -> (PartitionMatrix, Prototypes, Vec<usize>) {
    let keys: Vec<f64> = (0..v.clusters())
        .map(|i| low_pass_channels.iter().map(|&l| v.vector(i)[l]).sum())
        .collect();
    let mut perm: Vec<usize> = (0..v.clusters()).collect();
    perm.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));
    (u.permuted(&perm), v.permuted(&perm), perm)
}
