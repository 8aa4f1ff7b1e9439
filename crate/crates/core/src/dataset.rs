//! Dataset manifests, layered-photo loading, trimap matting fallback and the
//! offline precompute bundle.
//!
//! A manifest is a JSON file listing training and input entries; relative paths
//! resolve against the manifest's directory. See the README for the format.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blr::{summarize_pna, training_face_stats, BlrModel, MomentSummary};
use crate::error::{BlrError, Result};
use crate::image::{
    pna_images, AlphaMatte, LayeredPhoto, LuminanceImage, PhotoLayers, PnaImages, ScalarStats,
};
use crate::io::{quantized16, read_luminance, write_luminance16};
use crate::landmarks::LandmarkSet;
use crate::pose::{build_template, FaceTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingEntry {
    pub photo: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trimap: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foreground: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    pub landmarks: PathBuf,
    pub sketch: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEntry {
    pub photo: PathBuf,
    pub landmarks: PathBuf,
    /// Ground-truth sketch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<PathBuf>,
    /// Layers, for relighting in the benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foreground: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    /// Index of the training entry this input re-captures, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub training: Vec<TrainingEntry>,
    #[serde(default)]
    pub inputs: Vec<InputEntry>,
}

fn entry_err(section: &'static str, index: usize, message: impl Into<String>) -> BlrError {
    BlrError::Manifest {
        section,
        index,
        message: message.into(),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve(base, p);
    }
}

/// Checks that `path` exists and is a decodable raster; returns its size.
fn raster_dims(
    section: &'static str,
    index: usize,
    what: &str,
    path: &Path,
) -> Result<(usize, usize)> {
    if !path.is_file() {
        return Err(entry_err(
            section,
            index,
            format!("missing {what} file {}", path.display()),
        ));
    }
    let (w, h) = image::image_dimensions(path)
        .map_err(|e| entry_err(section, index, format!("{what} {}: {e}", path.display())))?;
    Ok((w as usize, h as usize))
}

fn check_layers(
    section: &'static str,
    index: usize,
    photo_dims: (usize, usize),
    rasters: &[(&str, &Option<PathBuf>)],
) -> Result<()> {
    for (what, p) in rasters {
        if let Some(p) = p {
            let d = raster_dims(section, index, what, p)?;
            if d != photo_dims {
                return Err(entry_err(
                    section,
                    index,
                    format!(
                        "{what} is {}x{}, photo is {}x{}",
                        d.0, d.1, photo_dims.0, photo_dims.1
                    ),
                ));
            }
        }
    }
    Ok(())
}

fn check_landmarks(
    section: &'static str,
    index: usize,
    path: &Path,
    dims: (usize, usize),
) -> Result<LandmarkSet> {
    if !path.is_file() {
        return Err(entry_err(
            section,
            index,
            format!("missing landmarks file {}", path.display()),
        ));
    }
    let lm = LandmarkSet::load(path).map_err(|e| entry_err(section, index, e.to_string()))?;
    lm.validate_bounds(dims.0, dims.1)
        .map_err(|m| entry_err(section, index, format!("landmarks {}: {m}", path.display())))?;
    Ok(lm)
}

/// Reads and validates a manifest. Every referenced file must exist and decode,
/// all training photos must share one size, and each entry's rasters must match
/// its photo.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| BlrError::io(path, e))?;
    let mut m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| BlrError::parse(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    if m.training.is_empty() {
        return Err(BlrError::parse(path, "manifest has no training entries"));
    }
    let mut seen = HashSet::new();
    let mut frame = None;
    for (i, e) in m.training.iter_mut().enumerate() {
        const S: &str = "training";
        for p in [&mut e.photo, &mut e.landmarks, &mut e.sketch] {
            resolve(&base, p);
        }
        for p in [
            &mut e.alpha,
            &mut e.trimap,
            &mut e.foreground,
            &mut e.background,
        ] {
            resolve_opt(&base, p);
        }
        if e.alpha.is_some() == e.trimap.is_some() {
            return Err(entry_err(S, i, "needs exactly one of alpha or trimap"));
        }
        if e.foreground.is_some() != e.background.is_some() {
            return Err(entry_err(
                S,
                i,
                "foreground and background layers come together",
            ));
        }
        if !seen.insert(e.photo.clone()) {
            return Err(entry_err(
                S,
                i,
                format!("duplicate photo {}", e.photo.display()),
            ));
        }
        let dims = raster_dims(S, i, "photo", &e.photo)?;
        match frame {
            None => frame = Some(dims),
            Some(f) if f != dims => {
                return Err(entry_err(
                    S,
                    i,
                    format!(
                        "photo is {}x{}, training photos are {}x{}",
                        dims.0, dims.1, f.0, f.1
                    ),
                ))
            }
            _ => {}
        }
        let sketch = Some(e.sketch.clone());
        check_layers(
            S,
            i,
            dims,
            &[
                ("alpha", &e.alpha),
                ("trimap", &e.trimap),
                ("foreground", &e.foreground),
                ("background", &e.background),
                ("sketch", &sketch),
            ],
        )?;
        check_landmarks(S, i, &e.landmarks, dims)?;
    }
    let mut seen = HashSet::new();
    let n_train = m.training.len();
    for (i, e) in m.inputs.iter_mut().enumerate() {
        const S: &str = "input";
        resolve(&base, &mut e.photo);
        resolve(&base, &mut e.landmarks);
        for p in [
            &mut e.sketch,
            &mut e.alpha,
            &mut e.foreground,
            &mut e.background,
        ] {
            resolve_opt(&base, p);
        }
        if !seen.insert(e.photo.clone()) {
            return Err(entry_err(
                S,
                i,
                format!("duplicate photo {}", e.photo.display()),
            ));
        }
        let layer_count = [&e.alpha, &e.foreground, &e.background]
            .iter()
            .filter(|p| p.is_some())
            .count();
        if layer_count != 0 && layer_count != 3 {
            return Err(entry_err(
                S,
                i,
                "layers need alpha, foreground and background together",
            ));
        }
        if let Some(s) = e.source.filter(|&s| s >= n_train) {
            return Err(entry_err(
                S,
                i,
                format!("source {s} is not a training entry"),
            ));
        }
        let dims = raster_dims(S, i, "photo", &e.photo)?;
        check_layers(
            S,
            i,
            dims,
            &[
                ("sketch", &e.sketch),
                ("alpha", &e.alpha),
                ("foreground", &e.foreground),
                ("background", &e.background),
            ],
        )?;
        check_landmarks(S, i, &e.landmarks, dims)?;
    }
    Ok(m)
}

/// A loaded input photo.
#[derive(Debug, Clone)]
pub struct InputItem {
    pub photo: LayeredPhoto<f64>,
    pub source: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub training: Vec<LayeredPhoto<f64>>,
    pub inputs: Vec<InputItem>,
}

impl Dataset {
    pub fn frame(&self) -> (usize, usize) {
        self.training[0].dims()
    }

    /// Inputs with layers and a known source, in the benchmark's form.
    pub fn bench_data(&self) -> Result<crate::bench::BenchData> {
        let inputs = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let source = item
                    .source
                    .ok_or_else(|| entry_err("input", i, "benchmark inputs need a source index"))?;
                item.photo
                    .layers()
                    .map_err(|_| entry_err("input", i, "benchmark inputs need layers"))?;
                Ok(crate::bench::BenchInput {
                    photo: item.photo.clone(),
                    source,
                    sketch: item.photo.sketch.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::bench::BenchData {
            training: self.training.clone(),
            inputs,
        })
    }
}

fn load_matte(
    section: &'static str,
    index: usize,
    alpha: Option<&Path>,
    trimap: Option<&Path>,
) -> Result<AlphaMatte<f64>> {
    match (alpha, trimap) {
        (Some(a), _) => AlphaMatte::new(read_luminance(a)?)
            .map_err(|e| entry_err(section, index, e.to_string())),
        (None, Some(t)) => trimap_to_matte(&read_luminance(t)?)
            .map_err(|e| entry_err(section, index, e.to_string())),
        (None, None) => Err(BlrError::MissingLayers),
    }
}

fn load_photo(
    section: &'static str,
    index: usize,
    photo: &Path,
    landmarks: &Path,
    matte: Option<AlphaMatte<f64>>,
    fg: Option<&Path>,
    bg: Option<&Path>,
) -> Result<LayeredPhoto<f64>> {
    let composite = read_luminance(photo)?;
    let landmarks = LandmarkSet::load(landmarks)?;
    let layers = match (matte, fg, bg) {
        (Some(alpha), Some(f), Some(b)) => Some(PhotoLayers {
            portrait: read_luminance(f)?,
            background: read_luminance(b)?,
            alpha,
        }),
        (Some(alpha), _, _) => {
            return LayeredPhoto::with_composite_layers(composite, alpha, landmarks)
                .map_err(|e| entry_err(section, index, e.to_string()))
        }
        _ => None,
    };
    Ok(LayeredPhoto {
        composite,
        layers,
        landmarks,
        sketch: None,
    })
}

/// Decodes every raster of a validated manifest. Training photos without
/// separate layers use the composite as both layers.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    let training = manifest
        .training
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let matte = load_matte("training", i, e.alpha.as_deref(), e.trimap.as_deref())?;
            let p = load_photo(
                "training",
                i,
                &e.photo,
                &e.landmarks,
                Some(matte),
                e.foreground.as_deref(),
                e.background.as_deref(),
            )?;
            Ok(p.with_sketch(read_luminance(&e.sketch)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = manifest
        .inputs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let matte = e
                .alpha
                .as_deref()
                .map(|a| load_matte("input", i, Some(a), None))
                .transpose()?;
            let mut p = load_photo(
                "input",
                i,
                &e.photo,
                &e.landmarks,
                matte,
                e.foreground.as_deref(),
                e.background.as_deref(),
            )?;
            if let Some(s) = &e.sketch {
                p.sketch = Some(read_luminance(s)?);
            }
            Ok(InputItem {
                photo: p,
                source: e.source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: manifest.name.clone(),
        training,
        inputs,
    })
}

/// Tolerance when snapping trimap values to {0, 0.5, 1}.
pub const TRIMAP_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tri {
    Background,
    Unknown,
    Foreground,
}

fn quantize_trimap(trimap: &LuminanceImage<f64>) -> Result<Vec<Tri>> {
    let w = trimap.width();
    trimap
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if (v - 0.0).abs() <= TRIMAP_TOLERANCE {
                Ok(Tri::Background)
            } else if (v - 0.5).abs() <= TRIMAP_TOLERANCE {
                Ok(Tri::Unknown)
            } else if (v - 1.0).abs() <= TRIMAP_TOLERANCE {
                Ok(Tri::Foreground)
            } else {
                Err(BlrError::InvalidParameter(format!(
                    "trimap value {v:.3} at ({}, {}) is not 0, 0.5 or 1",
                    i % w,
                    i / w
                )))
            }
        })
        .collect()
}

/// Two-pass chamfer distance (1, √2) to the nearest seed pixel.
fn chamfer(seeds: &[bool], w: usize, h: usize) -> Vec<f64> {
    let diag = std::f64::consts::SQRT_2;
    let mut d: Vec<f64> = seeds
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = d[i];
            if x > 0 {
                v = v.min(d[i - 1] + 1.0);
            }
            if y > 0 {
                v = v.min(d[i - w] + 1.0);
                if x > 0 {
                    v = v.min(d[i - w - 1] + diag);
                }
                if x + 1 < w {
                    v = v.min(d[i - w + 1] + diag);
                }
            }
            d[i] = v;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            let mut v = d[i];
            if x + 1 < w {
                v = v.min(d[i + 1] + 1.0);
            }
            if y + 1 < h {
                v = v.min(d[i + w] + 1.0);
                if x + 1 < w {
                    v = v.min(d[i + w + 1] + diag);
                }
                if x > 0 {
                    v = v.min(d[i + w - 1] + diag);
                }
            }
            d[i] = v;
        }
    }
    d
}

/// Separable Gaussian blur with zero padding.
fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &g) in kernel.iter().enumerate() {
                let xx = x as isize + j as isize - radius;
                if xx >= 0 && (xx as usize) < w {
                    acc += g * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &g) in kernel.iter().enumerate() {
                let yy = y as isize + j as isize - radius;
                if yy >= 0 && (yy as usize) < h {
                    acc += g * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Fallback matting from a trimap (0 background, 0.5 unknown, 1 foreground).
///
/// Known pixels keep their value. Unknown pixels get a Gaussian-weighted
/// average of the known pixels' foreground indicator, with σ half the median
/// width of the unknown band. Pixels beyond the kernel's reach interpolate by
/// distance to either side.
pub fn trimap_to_matte(trimap: &LuminanceImage<f64>) -> Result<AlphaMatte<f64>> {
    let (w, h) = trimap.dims();
    let tri = quantize_trimap(trimap)?;
    let fg: Vec<bool> = tri.iter().map(|&t| t == Tri::Foreground).collect();
    let bg: Vec<bool> = tri.iter().map(|&t| t == Tri::Background).collect();
    if !fg.iter().any(|&b| b) || !bg.iter().any(|&b| b) {
        return Err(BlrError::Degenerate(
            "trimap needs known foreground and known background".into(),
        ));
    }
    let binary = |i: usize| if fg[i] { 1.0 } else { 0.0 };
    let unknown: Vec<usize> = (0..w * h).filter(|&i| tri[i] == Tri::Unknown).collect();
    if unknown.is_empty() {
        return AlphaMatte::new(LuminanceImage::new(w, h, (0..w * h).map(binary).collect())?);
    }
    let d_fg = chamfer(&fg, w, h);
    let d_bg = chamfer(&bg, w, h);
    let mut widths: Vec<f64> = unknown.iter().map(|&i| d_fg[i] + d_bg[i] - 1.0).collect();
    widths.sort_by(f64::total_cmp);
    let n = widths.len();
    let median = if n % 2 == 1 {
        widths[n / 2]
    } else {
        0.5 * (widths[n / 2 - 1] + widths[n / 2])
    };
    let sigma = (median / 2.0).max(0.5);
    let known: Vec<f64> = tri
        .iter()
        .map(|&t| if t == Tri::Unknown { 0.0 } else { 1.0 })
        .collect();
    let num = gaussian_blur(&(0..w * h).map(binary).collect::<Vec<_>>(), w, h, sigma);
    let den = gaussian_blur(&known, w, h, sigma);
    let mut out: Vec<f64> = (0..w * h).map(binary).collect();
    for &i in &unknown {
        out[i] = if den[i] > 1e-12 {
            (num[i] / den[i]).clamp(0.0, 1.0)
        } else {
            d_bg[i] / (d_fg[i] + d_bg[i])
        };
    }
    AlphaMatte::new(LuminanceImage::new(w, h, out)?)
}

/// Version tag written to and required from bundle files.
pub const BUNDLE_VERSION: &str = "blr-bundle/1";

/// Everything precomputed from the training set. P/N/A rasters are stored at
/// 16 bits and the moments are computed from the quantized rasters, so a
/// reloaded bundle is self-consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputeBundle {
    pub version: String,
    pub face_stats: ScalarStats<f64>,
    pub moments: MomentSummary<f64>,
    pub template: FaceTemplate,
    pub pna: Vec<PnaImages<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleFile {
    version: String,
    face_stats: ScalarStats<f64>,
    moments: MomentSummary<f64>,
    template: FaceTemplate,
    photos: Vec<[String; 3]>,
}

impl PrecomputeBundle {
    pub fn model(&self) -> BlrModel<f64> {
        BlrModel {
            face_stats: self.face_stats,
            moments: self.moments,
            pna: self.pna.clone(),
        }
    }
}

/// Precomputes P/N/A, pooled face statistics, moments and the face template.
pub fn precompute(dataset: &Dataset) -> Result<PrecomputeBundle> {
    let pna = dataset
        .training
        .iter()
        .map(|p| {
            let x = pna_images(p)?;
            Ok(PnaImages {
                portrait: quantized16(&x.portrait),
                background: quantized16(&x.background),
                inverse_alpha: quantized16(&x.inverse_alpha),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let moments = summarize_pna(&pna)?;
    let face_stats = training_face_stats(&dataset.training)?;
    let landmarks: Vec<_> = dataset
        .training
        .iter()
        .map(|p| p.landmarks.clone())
        .collect();
    let template = build_template(&landmarks, dataset.frame())?;
    Ok(PrecomputeBundle {
        version: BUNDLE_VERSION.to_string(),
        face_stats,
        moments,
        template,
        pna,
    })
}

/// Writes `bundle.json` and the P/N/A PNGs into `dir`.
pub fn save_bundle(bundle: &PrecomputeBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BlrError::io(dir, e))?;
    let mut photos = Vec::with_capacity(bundle.pna.len());
    for (i, p) in bundle.pna.iter().enumerate() {
        let names = ["p", "n", "a"].map(|k| format!("pna/{i:04}_{k}.png"));
        write_luminance16(&dir.join(&names[0]), &p.portrait)?;
        write_luminance16(&dir.join(&names[1]), &p.background)?;
        write_luminance16(&dir.join(&names[2]), &p.inverse_alpha)?;
        photos.push(names);
    }
    let file = BundleFile {
        version: bundle.version.clone(),
        face_stats: bundle.face_stats,
        moments: bundle.moments,
        template: bundle.template.clone(),
        photos,
    };
    let path = dir.join("bundle.json");
    let text = serde_json::to_string_pretty(&file)? + "\n";
    std::fs::write(&path, text).map_err(|e| BlrError::io(&path, e))
}

/// Reads a bundle directory, rejecting any other version tag.
pub fn load_bundle(dir: &Path) -> Result<PrecomputeBundle> {
    let path = dir.join("bundle.json");
    let text = std::fs::read_to_string(&path).map_err(|e| BlrError::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| BlrError::parse(&path, e.to_string()))?;
    let found = value
        .get("version")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    if found != BUNDLE_VERSION {
        return Err(BlrError::BundleVersion {
            found,
            expected: BUNDLE_VERSION.to_string(),
        });
    }
    let file: BundleFile =
        serde_json::from_value(value).map_err(|e| BlrError::parse(&path, e.to_string()))?;
    let pna = file
        .photos
        .iter()
        .map(|[p, n, a]| {
            Ok(PnaImages {
                portrait: read_luminance(&dir.join(p))?,
                background: read_luminance(&dir.join(n))?,
                inverse_alpha: read_luminance(&dir.join(a))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecomputeBundle {
        version: file.version,
        face_stats: file.face_stats,
        moments: file.moments,
        template: file.template,
        pna,
    })
}
