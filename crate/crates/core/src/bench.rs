//! Synthetic lighting benchmark.
//!
//! Every input is relit by scaling its portrait layer by `sigma_f` and its
//! background layer by `sigma_b`, preprocessed by one of the variants, and
//! matched against the training set. Because inputs are re-captures of known
//! training photos, every patch has a known correct source.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blr::{global_remap, BlrModel, LinearMap, SolveMode};
use crate::error::{BlrError, Result};
use crate::image::{compose, LayeredPhoto, LuminanceImage};
use crate::synth::{
    fuse_sketch, match_accuracy, match_patches, mean_abs_error, same_position_truth, SynthParams,
};

/// Offset tolerance, in pixels, for a match to count as correct.
pub const MATCH_TOLERANCE: usize = 2;

/// Preprocessing applied before patch search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    None,
    /// Whole-image moment matching of the input only.
    Lr,
    Blr,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::None, Variant::Lr, Variant::Blr];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Lr => "lr",
            Variant::Blr => "blr",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Variant::None),
            "lr" => Ok(Variant::Lr),
            "blr" => Ok(Variant::Blr),
            _ => Err(format!("unknown variant {s:?} (expected none, lr or blr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightingGridSpec {
    pub sigma_f: Vec<f64>,
    pub sigma_b: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Default for LightingGridSpec {
    /// σ_F ∈ {0.5, 1.0, 1.5}; σ_B from 0.5 to 1.5 in steps of 0.1; all variants.
    fn default() -> Self {
        Self {
            sigma_f: vec![0.5, 1.0, 1.5],
            sigma_b: (5..=15).map(|k| k as f64 / 10.0).collect(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

impl LightingGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_f.is_empty() || self.sigma_b.is_empty() || self.variants.is_empty() {
            return Err(BlrError::InvalidParameter(
                "lighting grid lists must be nonempty".into(),
            ));
        }
        if let Some(s) = self
            .sigma_f
            .iter()
            .chain(&self.sigma_b)
            .find(|&&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(BlrError::InvalidParameter(format!(
                "lighting scale {s} must be positive"
            )));
        }
        Ok(())
    }

    /// Cells in output order: σ_F outer, σ_B inner.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.sigma_f
            .iter()
            .flat_map(|&f| self.sigma_b.iter().map(move |&b| (f, b)))
            .collect()
    }
}

/// One benchmark row: a grid cell and variant, averaged over all inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub sigma_f: f64,
    pub sigma_b: f64,
    pub variant: Variant,
    pub match_accuracy: f64,
    /// Mean-abs error of the synthesized sketch against the ground-truth sketch.
    pub sketch_mae: f64,
    pub a_i: f64,
    pub b_i: f64,
    pub a_t: f64,
    pub b_t: f64,
    /// Every background solve of the row was feasible.
    pub feasible: bool,
    /// Mean wall time per input; zero unless timing was requested.
    pub wall_ms: f64,
}

pub const CSV_HEADER: [&str; 11] = [
    "sigma_f",
    "sigma_b",
    "variant",
    "match_accuracy",
    "sketch_mae",
    "a_i",
    "b_i",
    "a_t",
    "b_t",
    "feasible",
    "wall_ms",
];

/// `compose(sigma_f * portrait, sigma_b * background, alpha)`, unclamped.
pub fn synth_lighting(
    photo: &LayeredPhoto<f64>,
    sigma_f: f64,
    sigma_b: f64,
) -> Result<LuminanceImage<f64>> {
    let l = photo.layers()?;
    compose(
        &l.portrait.map(|v| sigma_f * v),
        &l.background.map(|v| sigma_b * v),
        &l.alpha,
    )
}

/// A layered input with a known source photo in the training set.
#[derive(Debug, Clone)]
pub struct BenchInput {
    pub photo: LayeredPhoto<f64>,
    pub source: usize,
    pub sketch: Option<LuminanceImage<f64>>,
}

#[derive(Debug, Clone)]
pub struct BenchData {
    pub training: Vec<LayeredPhoto<f64>>,
    pub inputs: Vec<BenchInput>,
}

impl From<crate::corpus::Corpus> for BenchData {
    fn from(c: crate::corpus::Corpus) -> Self {
        Self {
            training: c.training,
            inputs: c
                .inputs
                .into_iter()
                .map(|i| BenchInput {
                    sketch: i.photo.sketch.clone(),
                    photo: i.photo,
                    source: i.source,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub synth: SynthParams,
    pub mode: SolveMode,
    /// Record wall time; off by default so output is reproducible byte for byte.
    pub timing: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            synth: SynthParams::default(),
            mode: SolveMode::Approximate,
            timing: false,
        }
    }
}

/// Precomputed training side shared by every cell.
/// Query image, training images, input map, background map.
type Prepared<'a> = (
    LuminanceImage<f64>,
    &'a [LuminanceImage<f64>],
    LinearMap<f64>,
    LinearMap<f64>,
);

pub struct BenchContext<'a> {
    data: &'a BenchData,
    model: BlrModel<f64>,
    composites: Vec<LuminanceImage<f64>>,
    sketches: Vec<LuminanceImage<f64>>,
}

impl<'a> BenchContext<'a> {
    pub fn new(data: &'a BenchData) -> Result<Self> {
        if data.inputs.is_empty() {
            return Err(BlrError::EmptyInput("benchmark inputs"));
        }
        let model = BlrModel::from_training(&data.training)?;
        let composites = data.training.iter().map(|p| p.composite.clone()).collect();
        let sketches = data
            .training
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.sketch.clone().ok_or_else(|| {
                    BlrError::InvalidParameter(format!("training photo {i} has no sketch"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = data
            .inputs
            .iter()
            .position(|i| i.source >= data.training.len())
        {
            return Err(BlrError::InvalidParameter(format!(
                "input {bad} names a missing source photo"
            )));
        }
        Ok(Self {
            data,
            model,
            composites,
            sketches,
        })
    }

    /// Runs every variant of one cell.
    pub fn run_cell(
        &self,
        sigma_f: f64,
        sigma_b: f64,
        variants: &[Variant],
        opts: &BenchOptions,
    ) -> Result<Vec<BenchRecord>> {
        variants
            .iter()
            .map(|&v| self.run_variant(sigma_f, sigma_b, v, opts))
            .collect()
    }

    fn run_variant(
        &self,
        sigma_f: f64,
        sigma_b: f64,
        variant: Variant,
        opts: &BenchOptions,
    ) -> Result<BenchRecord> {
        let n = self.data.inputs.len() as f64;
        let mut rec = BenchRecord {
            sigma_f,
            sigma_b,
            variant,
            match_accuracy: 0.0,
            sketch_mae: 0.0,
            a_i: 0.0,
            b_i: 0.0,
            a_t: 0.0,
            b_t: 0.0,
            feasible: true,
            wall_ms: 0.0,
        };
        let mut have_sketch = true;
        for input in &self.data.inputs {
            let lit = synth_lighting(&input.photo, sigma_f, sigma_b)?;
            let start = Instant::now();
            let adapted_training;
            let (query, training, map_i, map_t): Prepared<'_> = match variant {
                Variant::None => (
                    lit,
                    &self.composites,
                    LinearMap::identity(),
                    LinearMap::identity(),
                ),
                Variant::Lr => {
                    let (img, map) = global_remap(&lit, &self.composites)?;
                    (img, &self.composites, map, LinearMap::identity())
                }
                Variant::Blr => {
                    let out = self.model.remap(&lit, &input.photo.landmarks, opts.mode)?;
                    rec.feasible &= out.report.background.flags.feasible();
                    adapted_training = out.adapted_training;
                    (
                        out.adapted_input,
                        &adapted_training,
                        out.report.input_map,
                        out.report.background.map,
                    )
                }
            };
            let matches = match_patches(&query, training, &opts.synth)?;
            let sketch = fuse_sketch(&matches, &self.sketches)?;
            if opts.timing {
                rec.wall_ms += start.elapsed().as_secs_f64() * 1e3 / n;
            }
            let truth = same_position_truth(&matches.grid, input.source);
            rec.match_accuracy += match_accuracy(&matches, &truth, MATCH_TOLERANCE) / n;
            match &input.sketch {
                Some(gt) => rec.sketch_mae += mean_abs_error(&sketch, gt)? / n,
                None => have_sketch = false,
            }
            rec.a_i += map_i.gain / n;
            rec.b_i += map_i.offset / n;
            rec.a_t += map_t.gain / n;
            rec.b_t += map_t.offset / n;
        }
        if !have_sketch {
            rec.sketch_mae = f64::NAN;
        }
        Ok(rec)
    }
}

/// Runs the whole grid. Cells run in parallel; records come back in grid order
/// (σ_F, then σ_B, then variant). If a cell fails, the records of all cells
/// before it are still returned alongside the error.
pub fn run_bench(
    data: &BenchData,
    grid: &LightingGridSpec,
    opts: &BenchOptions,
) -> std::result::Result<Vec<BenchRecord>, (Vec<BenchRecord>, BlrError)> {
    grid.validate().map_err(|e| (Vec::new(), e))?;
    let ctx = BenchContext::new(data).map_err(|e| (Vec::new(), e))?;
    let results: Vec<Result<Vec<BenchRecord>>> = grid
        .cells()
        .par_iter()
        .map(|&(f, b)| ctx.run_cell(f, b, &grid.variants, opts))
        .collect();
    let mut records = Vec::new();
    for r in results {
        match r {
            Ok(rows) => records.extend(rows),
            Err(e) => return Err((records, e)),
        }
    }
    Ok(records)
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

/// Writes the header and records as CSV and flushes.
pub fn write_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            format!("{}", r.sigma_f),
            format!("{}", r.sigma_b),
            r.variant.to_string(),
            fmt_f64(r.match_accuracy),
            fmt_f64(r.sketch_mae),
            fmt_f64(r.a_i),
            fmt_f64(r.b_i),
            fmt_f64(r.a_t),
            fmt_f64(r.b_t),
            r.feasible.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush().map_err(|e| BlrError::io("<csv>", e))?;
    Ok(())
}
