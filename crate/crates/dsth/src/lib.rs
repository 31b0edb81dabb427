//! Discrete semantic transfer hashing.
//!
//! Learns compact binary codes for image feature vectors by jointly
//! preserving visual similarity through an anchor-graph Laplacian and
//! transferring semantics from a paired text modality, using an
//! augmented-Lagrangian discrete optimizer. Linear hash functions extend the
//! codes to unseen samples; a packed-bit index serves exact Hamming top-k
//! search; retrieval quality is scored with mAP and precision-scope curves.
//!
//! All numerical modules are generic over the scalar type ([`Real`], i.e.
//! `f32` or `f64`). Compute in `f64`; files store `f32`.

// Negated comparisons like `!(x > 0)` are used on purpose: they also reject
// NaN, which a rewritten `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchors;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hash;
pub mod index;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod optim;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::{FeatureMatrix, Matrix};
pub use scalar::Real;

/// Recommended compute precision.
pub type Mat64 = Matrix<f64>;
/// Storage precision (the on-disk element type).
pub type Mat32 = Matrix<f32>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type AnchorModel64 = anchors::AnchorModel<f64>;
pub type DsthConfig64 = optim::DsthConfig<f64>;
pub type HashModel64 = hash::HashModel<f64>;
