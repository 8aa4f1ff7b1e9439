//! Bidirectional luminance remapping.
//!
//! Step one remaps the input photo so its face region carries the pooled
//! training face statistics. Step two remaps only the training backgrounds, with
//! a single affine map solved from pooled matting moments, so the recomposed
//! training set carries the adapted input's whole-image statistics.

pub mod input;
pub mod training;

use serde::{Deserialize, Serialize};

use crate::error::{BlrError, Result};
use crate::image::{
    image_stats, pna_images, pooled_stats, LayeredPhoto, LuminanceImage, PnaImages, ScalarStats,
};
use crate::landmarks::{face_mask, LandmarkSet};
use crate::scalar::Scalar;

pub use input::{apply_map, fit_input_map, LinearMap};
pub use training::{
    recompose_pna, recompose_training, solve_background_map, summarize_pna, summarize_training,
    BackgroundSolution, MomentSummary, SolveFlags, SolveMode,
};

/// Pooled face-region statistics of the training composites, each photo masked by
/// the hull of its own landmarks.
pub fn training_face_stats<T: Scalar>(photos: &[LayeredPhoto<T>]) -> Result<ScalarStats<T>> {
    if photos.is_empty() {
        return Err(BlrError::EmptyInput("training photos"));
    }
    let masks = photos
        .iter()
        .map(|p| face_mask(&p.landmarks, p.composite.width(), p.composite.height()))
        .collect::<Result<Vec<_>>>()?;
    let composites: Vec<_> = photos.iter().map(|p| p.composite.clone()).collect();
    pooled_stats(&composites, &masks)
}

/// Everything the remap needs from the training set, computed once.
#[derive(Debug, Clone)]
pub struct BlrModel<T> {
    pub face_stats: ScalarStats<T>,
    pub moments: MomentSummary<T>,
    pub pna: Vec<PnaImages<T>>,
}

impl<T: Scalar> BlrModel<T> {
    pub fn from_training(photos: &[LayeredPhoto<T>]) -> Result<Self> {
        let face_stats = training_face_stats(photos)?;
        let pna = photos.iter().map(pna_images).collect::<Result<Vec<_>>>()?;
        let moments = summarize_pna(&pna)?;
        Ok(Self {
            face_stats,
            moments,
            pna,
        })
    }

    /// Runs both steps for one input photo.
    pub fn remap(
        &self,
        input: &LuminanceImage<T>,
        input_landmarks: &LandmarkSet,
        mode: SolveMode,
    ) -> Result<BlrOutput<T>> {
        let mask = face_mask(input_landmarks, input.width(), input.height())?;
        let input_face = crate::image::masked_stats(input, &mask)?;
        let input_map = fit_input_map(&input_face, &self.face_stats)?;
        let adapted_input = apply_map(input, &input_map);
        let target = image_stats(&adapted_input);
        let background = solve_background_map(&self.moments, &target, mode)?;
        let adapted_training = self
            .pna
            .iter()
            .map(|p| recompose_pna(p, &background.map))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlrOutput {
            adapted_input,
            adapted_training,
            report: RemapReport {
                input_map,
                background,
                target,
            },
        })
    }
}

/// Maps and diagnostics of one remap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemapReport<T> {
    pub input_map: LinearMap<T>,
    pub background: BackgroundSolution<T>,
    /// Whole-image statistics of the adapted input.
    pub target: ScalarStats<T>,
}

#[derive(Debug, Clone)]
pub struct BlrOutput<T> {
    pub adapted_input: LuminanceImage<T>,
    pub adapted_training: Vec<LuminanceImage<T>>,
    pub report: RemapReport<T>,
}

/// Both remapping steps from raw training photos.
pub fn blr_pipeline<T: Scalar>(
    input: &LuminanceImage<T>,
    input_landmarks: &LandmarkSet,
    training: &[LayeredPhoto<T>],
    mode: SolveMode,
) -> Result<BlrOutput<T>> {
    BlrModel::from_training(training)?.remap(input, input_landmarks, mode)
}

/// Whole-image moment matching of the input against the pooled training
/// composites; the global baseline.
pub fn global_remap<T: Scalar>(
    input: &LuminanceImage<T>,
    training: &[LuminanceImage<T>],
) -> Result<(LuminanceImage<T>, LinearMap<T>)> {
    let target = crate::image::pooled_image_stats(training)?;
    let map = fit_input_map(&image_stats(input), &target)?;
    Ok((apply_map(input, &map), map))
}
