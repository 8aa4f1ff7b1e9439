//! End-to-end sketch synthesis for one input photo:
//! pose normalization, side-lighting correction, luminance remapping, patch
//! synthesis, and warping the sketch back to the input's pose.

use serde::{Deserialize, Serialize};

use crate::bench::Variant;
use crate::blr::{global_remap, recompose_pna, BlrModel, LinearMap, RemapReport, SolveMode};
use crate::error::{BlrError, Result};
use crate::image::LuminanceImage;
use crate::landmarks::LandmarkSet;
use crate::pose::{fit_warp_with_frame, warp_image, FaceTemplate, WarpDirection};
use crate::relight::{correct_side_lighting, RelightParams, ShadowSide};
use crate::synth::{synthesize, SynthParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub mode: SolveMode,
    pub preprocess: Variant,
    pub pose: bool,
    pub side_light: bool,
    pub relight: RelightParams,
    pub synth: SynthParams,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::Approximate,
            preprocess: Variant::Blr,
            pose: true,
            side_light: true,
            relight: RelightParams::default(),
            synth: SynthParams::default(),
        }
    }
}

/// The training side of the pipeline, prepared once.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub model: BlrModel<f64>,
    pub composites: Vec<LuminanceImage<f64>>,
    pub sketches: Vec<LuminanceImage<f64>>,
    pub template: FaceTemplate,
}

impl TrainingSet {
    /// Composites are rebuilt from the model's P/N/A rasters.
    pub fn new(
        model: BlrModel<f64>,
        sketches: Vec<LuminanceImage<f64>>,
        template: FaceTemplate,
    ) -> Result<Self> {
        if sketches.len() != model.pna.len() {
            return Err(BlrError::InvalidParameter(format!(
                "{} sketches for {} training photos",
                sketches.len(),
                model.pna.len()
            )));
        }
        let composites = model
            .pna
            .iter()
            .map(|p| recompose_pna(p, &LinearMap::identity()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            composites,
            sketches,
            template,
        })
    }
}

/// Diagnostics written next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub preprocess: Variant,
    pub pose: bool,
    pub shadow_side: Option<ShadowSide>,
    pub corrected_pixels: usize,
    /// Global map of the LR variant.
    pub lr_map: Option<LinearMap<f64>>,
    pub remap: Option<RemapReport<f64>>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Sketch in the input's own frame and pose.
    pub sketch: LuminanceImage<f64>,
    /// Input after pose normalization, relighting and remapping.
    pub prepared_input: LuminanceImage<f64>,
    pub report: PipelineReport,
}

pub fn run_pipeline(
    input: &LuminanceImage<f64>,
    landmarks: &LandmarkSet,
    training: &TrainingSet,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let (aligned, aligned_landmarks, warp) = if opts.pose {
        let warp = fit_warp_with_frame(landmarks, input.dims(), &training.template)?;
        let aligned = warp_image(input, &warp, WarpDirection::Forward)?;
        (
            aligned,
            training.template.mean_landmarks.clone(),
            Some(warp),
        )
    } else {
        (input.clone(), landmarks.clone(), None)
    };

    let (relit, shadow_side, corrected_pixels) = if opts.side_light {
        let r = correct_side_lighting(&aligned, &aligned_landmarks, &opts.relight)?;
        (r.image, Some(r.side), r.corrected)
    } else {
        (aligned, None, 0)
    };

    let mut report = PipelineReport {
        preprocess: opts.preprocess,
        pose: opts.pose,
        shadow_side,
        corrected_pixels,
        lr_map: None,
        remap: None,
    };
    let remapped;
    let (query, train_imgs): (LuminanceImage<f64>, &[LuminanceImage<f64>]) = match opts.preprocess {
        Variant::None => (relit, &training.composites),
        Variant::Lr => {
            let (img, map) = global_remap(&relit, &training.composites)?;
            report.lr_map = Some(map);
            (img, &training.composites)
        }
        Variant::Blr => {
            let out = training
                .model
                .remap(&relit, &aligned_landmarks, opts.mode)?;
            report.remap = Some(out.report);
            remapped = out.adapted_training;
            (out.adapted_input, &remapped)
        }
    };

    let (sketch, _) = synthesize(&query, train_imgs, &training.sketches, &opts.synth)?;
    let sketch = match &warp {
        Some(w) => warp_image(&sketch, w, WarpDirection::Inverse)?,
        None => sketch,
    };
    Ok(PipelineOutput {
        sketch,
        prepared_input: query,
        report,
    })
}
