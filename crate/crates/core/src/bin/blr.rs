use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use blr::bench::{run_bench, write_csv, BenchData, BenchOptions, LightingGridSpec, Variant};
use blr::blr::{RemapReport, SolveMode};
use blr::corpus::{generate, write_corpus, CorpusSpec};
use blr::dataset::{
    load_bundle, load_dataset, load_manifest, precompute, save_bundle, Dataset, PrecomputeBundle,
};
use blr::error::BlrError;
use blr::image::{image_stats, pooled_image_stats, ScalarStats};
use blr::io::{read_luminance, write_luminance};
use blr::landmarks::LandmarkSet;
use blr::pipeline::{run_pipeline, PipelineOptions, TrainingSet};
use blr::relight::{ClaheParams, RelightParams};
use blr::synth::SynthParams;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "blr",
    version,
    about = "Bidirectional luminance remapping for exemplar-based face sketch synthesis"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Background solver.
    #[arg(long, value_enum, default_value_t = ModeArg::Approx, global = true)]
    mode: ModeArg,
    /// Skip side-lighting correction.
    #[arg(long, global = true)]
    no_side_light: bool,
    /// Skip pose normalization.
    #[arg(long, global = true)]
    no_pose: bool,
    /// Seed for generated data.
    #[arg(long, default_value_t = CorpusSpec::default().seed, global = true)]
    seed: u64,
    #[arg(long, default_value = ".", global = true)]
    output_dir: PathBuf,
    /// Treat an infeasible background solve as fatal (exit 3).
    #[arg(long, global = true)]
    strict: bool,
    /// Record wall time in the benchmark CSV.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Approx,
    Exact,
}

impl From<ModeArg> for SolveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Approx => SolveMode::Approximate,
            ModeArg::Exact => SolveMode::Exact,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthParams::default().patch_size)]
    patch: usize,
    #[arg(long, default_value_t = SynthParams::default().stride)]
    stride: usize,
    /// Candidates per patch.
    #[arg(long, default_value_t = SynthParams::default().k)]
    knn: usize,
    #[arg(long, default_value_t = SynthParams::default().search_radius)]
    radius: usize,
    /// Widen the search window to the extended radius.
    #[arg(long)]
    extended_range: bool,
}

impl SynthArgs {
    fn params(&self) -> SynthParams {
        let p = SynthParams {
            patch_size: self.patch,
            stride: self.stride,
            k: self.knn,
            search_radius: self.radius,
        };
        if self.extended_range {
            p.extended()
        } else {
            p
        }
    }
}

#[derive(Args, Debug, Clone)]
struct RelightArgs {
    /// Half-face mean gap that triggers correction.
    #[arg(long, default_value_t = RelightParams::default().shadow_threshold)]
    shadow_threshold: f64,
    /// Per-bin cap as a fraction of tile pixels.
    #[arg(long, default_value_t = ClaheParams::<f64>::default().clip_limit)]
    clahe_clip: f64,
    /// Tiles per side.
    #[arg(long, default_value_t = ClaheParams::<f64>::default().tile_cols)]
    clahe_tiles: usize,
    /// Matching window for the mirrored search.
    #[arg(long, default_value_t = RelightParams::default().patch_size)]
    patch_size: usize,
    #[arg(long, default_value_t = RelightParams::default().search_radius)]
    search_radius: usize,
}

impl RelightArgs {
    fn params(&self) -> RelightParams {
        RelightParams {
            shadow_threshold: self.shadow_threshold,
            clahe: ClaheParams {
                tile_cols: self.clahe_tiles,
                tile_rows: self.clahe_tiles,
                clip_limit: self.clahe_clip,
                ..ClaheParams::default()
            },
            patch_size: self.patch_size,
            search_radius: self.search_radius,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    #[arg(long)]
    photo: PathBuf,
    #[arg(long)]
    landmarks: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Precompute the training bundle of a manifest.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Remap one photo and the training set; writes images and remap.json.
    Remap {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Full pipeline for one photo; writes sketch.png and report.json.
    Synthesize {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Use a precomputed bundle instead of rebuilding it.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = VariantArg::Blr)]
        preprocess: VariantArg,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        relight: RelightArgs,
    },
    /// Lighting grid benchmark; writes bench.csv.
    Bench {
        /// Dataset with layered inputs; the generated corpus when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sigma_f: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sigma_b: Option<Vec<f64>>,
        #[arg(long, value_enum, value_delimiter = ',')]
        variants: Option<Vec<VariantArg>>,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Write the synthetic corpus and its manifest.
    Generate {
        #[arg(long, default_value_t = CorpusSpec::default().training)]
        training: usize,
        #[arg(long, default_value_t = CorpusSpec::default().inputs)]
        inputs: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    None,
    Lr,
    Blr,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::None => Variant::None,
            VariantArg::Lr => Variant::Lr,
            VariantArg::Blr => Variant::Blr,
        }
    }
}

enum Failure {
    Data(BlrError),
    Infeasible(String),
}

impl From<BlrError> for Failure {
    fn from(e: BlrError) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Sidecar of `remap`.
#[derive(Serialize)]
struct RemapSidecar<'a> {
    mode: SolveMode,
    report: &'a RemapReport<f64>,
    adapted_input: ScalarStats<f64>,
    adapted_training: ScalarStats<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    std::fs::create_dir_all(&g.output_dir).map_err(|e| BlrError::io(&g.output_dir, e))?;
    match &cli.command {
        Command::Prepare { manifest } => {
            let dataset = load_dataset(&load_manifest(manifest)?)?;
            save_bundle(&precompute(&dataset)?, &g.output_dir)?;
            Ok(())
        }
        Command::Remap { input, bundle } => remap(g, input, bundle),
        Command::Synthesize {
            input,
            manifest,
            bundle,
            preprocess,
            synth,
            relight,
        } => {
            let dataset = load_dataset(&load_manifest(manifest)?)?;
            let bundle = match bundle {
                Some(dir) => load_bundle(dir)?,
                None => precompute(&dataset)?,
            };
            let training = training_set(&dataset, bundle)?;
            let (photo, landmarks) = read_input(input)?;
            let opts = PipelineOptions {
                mode: g.mode.into(),
                preprocess: (*preprocess).into(),
                pose: !g.no_pose,
                side_light: !g.no_side_light,
                relight: relight.params(),
                synth: synth.params(),
            };
            let out = run_pipeline(&photo, &landmarks, &training, &opts)?;
            write_luminance(&g.output_dir.join("sketch.png"), &out.sketch)?;
            write_luminance(
                &g.output_dir.join("prepared_input.png"),
                &out.prepared_input,
            )?;
            write_json(&g.output_dir.join("report.json"), &out.report)?;
            match &out.report.remap {
                Some(r) if g.strict && !r.background.flags.feasible() => Err(Failure::Infeasible(
                    format!("background solve infeasible: {:?}", r.background.flags),
                )),
                _ => Ok(()),
            }
        }
        Command::Bench {
            manifest,
            sigma_f,
            sigma_b,
            variants,
            synth,
        } => {
            let data: BenchData = match manifest {
                Some(m) => load_dataset(&load_manifest(m)?)?.bench_data()?,
                None => generate(&CorpusSpec {
                    seed: g.seed,
                    ..CorpusSpec::default()
                })?
                .into(),
            };
            let default = LightingGridSpec::default();
            let grid = LightingGridSpec {
                sigma_f: sigma_f.clone().unwrap_or(default.sigma_f),
                sigma_b: sigma_b.clone().unwrap_or(default.sigma_b),
                variants: variants
                    .as_ref()
                    .map(|v| v.iter().map(|&x| x.into()).collect())
                    .unwrap_or(default.variants),
            };
            let opts = BenchOptions {
                synth: synth.params(),
                mode: g.mode.into(),
                timing: g.timing,
            };
            let (records, err) = match run_bench(&data, &grid, &opts) {
                Ok(r) => (r, None),
                Err((r, e)) => (r, Some(e)),
            };
            let path = g.output_dir.join("bench.csv");
            let file = File::create(&path).map_err(|e| BlrError::io(&path, e))?;
            write_csv(BufWriter::new(file), &records)?;
            if let Some(e) = err {
                return Err(e.into());
            }
            let infeasible = records.iter().filter(|r| !r.feasible).count();
            if g.strict && infeasible > 0 {
                return Err(Failure::Infeasible(format!(
                    "{infeasible} benchmark rows have an infeasible background solve"
                )));
            }
            Ok(())
        }
        Command::Generate { training, inputs } => {
            let corpus = generate(&CorpusSpec {
                training: *training,
                inputs: *inputs,
                seed: g.seed,
                ..CorpusSpec::default()
            })?;
            let path = write_corpus(&corpus, &g.output_dir, "synthetic")?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn remap(g: &GlobalArgs, input: &InputArgs, bundle: &Path) -> CliResult {
    let model = load_bundle(bundle)?.model();
    let (photo, landmarks) = read_input(input)?;
    let mode: SolveMode = g.mode.into();
    let out = model.remap(&photo, &landmarks, mode)?;
    write_luminance(&g.output_dir.join("adapted_input.png"), &out.adapted_input)?;
    for (i, img) in out.adapted_training.iter().enumerate() {
        write_luminance(
            &g.output_dir
                .join("adapted_training")
                .join(format!("{i:04}.png")),
            img,
        )?;
    }
    let sidecar = RemapSidecar {
        mode,
        report: &out.report,
        adapted_input: image_stats(&out.adapted_input),
        adapted_training: pooled_image_stats(&out.adapted_training)?,
    };
    write_json(&g.output_dir.join("remap.json"), &sidecar)?;
    if g.strict && !out.report.background.flags.feasible() {
        return Err(Failure::Infeasible(format!(
            "background solve infeasible: {:?}",
            out.report.background.flags
        )));
    }
    Ok(())
}

fn training_set(dataset: &Dataset, bundle: PrecomputeBundle) -> blr::error::Result<TrainingSet> {
    let sketches = dataset
        .training
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.sketch.clone().ok_or_else(|| BlrError::Manifest {
                section: "training",
                index: i,
                message: "missing sketch".into(),
            })
        })
        .collect::<blr::error::Result<Vec<_>>>()?;
    let model = bundle.model();
    TrainingSet::new(model, sketches, bundle.template)
}

fn read_input(
    input: &InputArgs,
) -> blr::error::Result<(blr::image::LuminanceImage<f64>, LandmarkSet)> {
    let photo = read_luminance(&input.photo)?;
    let landmarks = LandmarkSet::load(&input.landmarks)?;
    landmarks
        .validate_bounds(photo.width(), photo.height())
        .map_err(|message| BlrError::Parse {
            path: input.landmarks.clone(),
            message,
        })?;
    Ok((photo, landmarks))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> blr::error::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| BlrError::io(path, e))
}
