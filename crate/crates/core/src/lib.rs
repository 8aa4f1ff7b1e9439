//! Bidirectional luminance remapping (BLR) for exemplar-based face sketch synthesis.
//!
//! Patch-based sketch synthesizers compare photo patches by raw luminance, so an
//! input photo lit differently from the training set finds the wrong patches.
//! This crate adapts both sides before the search:
//!
//! 1. the input photo is remapped by one affine map so its face region carries
//!    the training face mean and standard deviation ([`blr::input`]);
//! 2. each training photo's background layer is remapped by one shared affine
//!    map, solved from pooled matting moments, so the recomposed training set
//!    carries the adapted input's whole-image statistics ([`blr::training`]).
//!
//! Around that core sit side-lighting correction ([`relight`]), landmark-based
//! pose normalization ([`pose`]), a reference patch synthesizer ([`synth`]),
//! dataset loading and offline precompute ([`dataset`]), the synthetic
//! lighting benchmark ([`bench`]) and the end-to-end pipeline ([`pipeline`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the file formats and CLI use.

// Comparisons like `!(x > 0)` are deliberate: they send NaN down the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blr;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod image;
pub mod io;
pub mod landmarks;
pub mod pipeline;
pub mod pose;
pub mod relight;
pub mod scalar;
pub mod synth;

#[cfg(test)]
mod test_util;

pub use error::{BlrError, Result};
pub use scalar::Scalar;

pub type LuminanceImage = image::LuminanceImage<f64>;
pub type LuminanceImageF32 = image::LuminanceImage<f32>;
pub type AlphaMatte = image::AlphaMatte<f64>;
pub type ScalarStats = image::ScalarStats<f64>;
pub type LayeredPhoto = image::LayeredPhoto<f64>;
pub type PnaImages = image::PnaImages<f64>;
pub type LinearMap = blr::LinearMap<f64>;
pub type MomentSummary = blr::MomentSummary<f64>;
pub type BlrModel = blr::BlrModel<f64>;
pub type BlrOutput = blr::BlrOutput<f64>;
pub type RemapReport = blr::RemapReport<f64>;

pub use blr::{SolveFlags, SolveMode};
pub use image::RegionMask;
pub use landmarks::LandmarkSet;
