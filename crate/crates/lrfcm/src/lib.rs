//! Image segmentation built around spatially weighted fuzzy C-means with
//! sparse residual estimation.
//!
//! The pipeline filters an observed image with grayscale morphological
//! reconstruction, blends it with the original, expands every pixel into a
//! tight-wavelet-frame feature vector, clusters the features while
//! hard-thresholding a per-pixel residual estimate, smooths the resulting
//! labels, and reconstructs a piecewise-prototype segmented image.
//!
//! Modules:
//! - [`image`], [`io`]: containers, mirror padding, PGM/PPM/PNG codecs
//! - [`morphology`]: flat dilation/erosion and geodesic reconstruction
//! - [`frames`]: undecimated B-spline frame decomposition and its adjoint
//! - [`clustering`]: the alternating solver and the classic FCM baseline
//! - [`labeling`]: argmax labels, label smoothing, segmented-image assembly
//! - [`metrics`]: segmentation accuracy and entropy-based information
//! - [`synth`]: four-level test pattern and seeded noise injection
//! - [`pipeline`]: end-to-end runs, ablation table, file-level entry points

pub mod clustering;
pub mod error;
pub mod frames;
pub mod image;
pub mod io;
pub mod labeling;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use image::{ColorImage, GrayImage, Image, PixelIndex};
