//! Synthetic face-like corpus for the lighting benchmark.
//!
//! Each identity has an elliptical head with dark facial features and its own
//! smooth texture, shoulders, a bright textured backdrop with its own gradient,
//! an exact soft alpha matte, 68 landmarks and a procedural edge-map sketch.
//! Face-region and backdrop statistics are normalized to the same values for
//! every identity. Inputs are re-captures of training identities with fresh
//! sensor noise, so every input patch has a known source patch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use std::path::{Path, PathBuf};

use crate::dataset::{DatasetManifest, InputEntry, TrainingEntry};
use crate::error::{BlrError, Result};
use crate::image::{masked_stats, AlphaMatte, LayeredPhoto, LuminanceImage, RegionMask};
use crate::io::write_luminance;
use crate::landmarks::{face_mask, LandmarkSet};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub training: usize,
    pub inputs: usize,
    pub width: usize,
    pub height: usize,
    /// Standard deviation of per-capture sensor noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            training: 20,
            inputs: 10,
            width: 100,
            height: 125,
            noise: 0.01,
            seed: 7,
        }
    }
}

/// Face-region mean and standard deviation shared by every identity.
pub const FACE_MEAN: f64 = 0.5;
pub const FACE_STD: f64 = 0.09;
/// Backdrop mean and standard deviation shared by every identity.
pub const BACKDROP_MEAN: f64 = 0.7;
pub const BACKDROP_STD: f64 = 0.08;

#[derive(Debug, Clone)]
pub struct CorpusInput {
    /// Layered re-capture; its sketch is the source identity's sketch.
    pub photo: LayeredPhoto<f64>,
    /// Index of the training photo of the same identity.
    pub source: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub training: Vec<LayeredPhoto<f64>>,
    pub inputs: Vec<CorpusInput>,
}

/// Training index that input `j` re-captures.
pub fn input_source(j: usize, training: usize) -> usize {
    (2 * j) % training.max(1)
}

/// Canonical 68-point layout for a `width × height` frame.
pub fn canonical_landmarks(width: usize, height: usize) -> LandmarkSet {
    let (sx, sy) = (width as f64 / 100.0, height as f64 / 125.0);
    let mut p: Vec<[f64; 2]> = Vec::with_capacity(68);
    // Jaw 0..=16, ear to ear through the chin.
    for k in 0..17 {
        let t = std::f64::consts::PI * (1.0 - k as f64 / 16.0);
        p.push([50.0 + 30.0 * t.cos(), 57.0 + 42.0 * t.sin()]);
    }
    // Brows 17..=26.
    for k in 0..5 {
        let x = 28.0 + 4.0 * k as f64;
        p.push([x, 47.0 - 2.0 * (1.0 - ((k as f64 - 2.0) / 2.0).powi(2))]);
    }
    for k in 0..5 {
        let x = 56.0 + 4.0 * k as f64;
        p.push([x, 47.0 - 2.0 * (1.0 - ((k as f64 - 2.0) / 2.0).powi(2))]);
    }
    // Nose bridge 27..=30 on the midline, base 31..=35.
    for k in 0..4 {
        p.push([50.0, 52.0 + 5.0 * k as f64]);
    }
    for k in 0..5 {
        p.push([44.0 + 3.0 * k as f64, 70.0 + if k == 2 { 1.0 } else { 0.0 }]);
    }
    // Eyes 36..=47.
    for cx in [38.0, 62.0] {
        for k in 0..6 {
            let t = std::f64::consts::PI * (1.0 - k as f64 / 3.0);
            p.push([cx + 6.0 * t.cos(), 56.0 - 2.5 * t.sin()]);
        }
    }
    // Mouth, outer 48..=59 and inner 60..=67.
    for k in 0..12 {
        let t = std::f64::consts::PI * (1.0 - k as f64 / 6.0);
        p.push([50.0 + 11.0 * t.cos(), 84.0 - 4.5 * t.sin()]);
    }
    for k in 0..8 {
        let t = std::f64::consts::PI * (1.0 - k as f64 / 4.0);
        p.push([50.0 + 7.0 * t.cos(), 84.0 - 1.5 * t.sin()]);
    }
    LandmarkSet::new(p.into_iter().map(|[x, y]| [x * sx, y * sy]).collect())
}

/// Bilinear value noise with the given cell size, in roughly `[-1, 1]`.
fn value_noise(r: &mut ChaCha8Rng, w: usize, h: usize, cell: f64) -> LuminanceImage<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh)
        .map(|_| r.random::<f64>() * 2.0 - 1.0)
        .collect();
    LuminanceImage::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64 / cell, y as f64 / cell);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        // Smoothstep fade avoids visible grid creases.
        let (tx, ty) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
        let g = |i: usize, j: usize| grid[j * gw + i];
        let top = g(ix, iy) + (g(ix + 1, iy) - g(ix, iy)) * tx;
        let bottom = g(ix, iy + 1) + (g(ix + 1, iy + 1) - g(ix, iy + 1)) * tx;
        top + (bottom - top) * ty
    })
}

fn ellipse_depth(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    // Approximate signed distance inside the ellipse, in pixels.
    let q = ((x - cx) / rx).hypot((y - cy) / ry);
    (1.0 - q) * rx.min(ry)
}

/// Soft portrait matte: head, neck and shoulders, 2 px ramps.
fn portrait_alpha(w: usize, h: usize, sx: f64, sy: f64) -> LuminanceImage<f64> {
    LuminanceImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64 / sx, y as f64 / sy);
        let head = ellipse_depth(x, y, 50.0, 54.0, 35.0, 50.0);
        let neck = (9.0 - (x - 50.0).abs()).min(y - 90.0);
        let shoulders = ellipse_depth(x, y, 50.0, 140.0, 48.0, 30.0);
        let d = head.max(neck).max(shoulders);
        (0.5 + d / 2.0).clamp(0.0, 1.0)
    })
}

fn normalize(
    img: &LuminanceImage<f64>,
    mask: &RegionMask,
    mean: f64,
    std: f64,
) -> Result<LuminanceImage<f64>> {
    let s = masked_stats(img, mask)?;
    let g = std / s.std_dev();
    Ok(img.map(|v| mean + g * (v - s.mean)))
}

struct Identity {
    portrait: LuminanceImage<f64>,
    background: LuminanceImage<f64>,
    alpha: AlphaMatte<f64>,
    landmarks: LandmarkSet,
    sketch: LuminanceImage<f64>,
}

fn identity(spec: &CorpusSpec, index: usize) -> Result<Identity> {
    let (w, h) = (spec.width, spec.height);
    let (sx, sy) = (w as f64 / 100.0, h as f64 / 125.0);
    let mut r = ChaCha8Rng::seed_from_u64(
        spec.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1)),
    );
    let landmarks = canonical_landmarks(w, h);
    let alpha = portrait_alpha(w, h, sx, sy);

    // Portrait: skin with identity texture, hair cap, dark features, clothing.
    let coarse = value_noise(&mut r, w, h, 9.0 * sx);
    let fine = value_noise(&mut r, w, h, 4.0 * sx);
    let tone = 0.1 * (r.random::<f64>() - 0.5);
    let lm = landmarks.points.clone();
    let feature = |x: f64, y: f64| -> f64 {
        let mut v: f64 = 0.0;
        for (cx, cy) in [
            (lm[37][0] + 1.0 * sx, lm[36][1]),
            (lm[43][0] + 1.0 * sx, lm[42][1]),
        ] {
            v = v.max((ellipse_depth(x, y, cx, cy, 6.0 * sx, 2.8 * sy) / 1.5).clamp(0.0, 1.0));
        }
        for (a, b) in [(17, 21), (22, 26)] {
            let (cx, cy) = ((lm[a][0] + lm[b][0]) / 2.0, lm[a + 2][1]);
            v = v
                .max(0.8 * (ellipse_depth(x, y, cx, cy, 9.0 * sx, 1.6 * sy) / 1.0).clamp(0.0, 1.0));
        }
        v = v.max(
            0.6 * (ellipse_depth(x, y, lm[51][0], lm[62][1], 11.0 * sx, 3.5 * sy) / 1.5)
                .clamp(0.0, 1.0),
        );
        v = v.max(
            0.5 * (ellipse_depth(x, y, lm[33][0], lm[33][1] - 1.0, 5.0 * sx, 2.0 * sy) / 1.0)
                .clamp(0.0, 1.0),
        );
        v
    };
    let raw_portrait = LuminanceImage::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let (ux, uy) = (xf / sx, yf / sy);
        let texture = 0.08 * coarse.get(x, y) + 0.05 * fine.get(x, y);
        let hair = (ellipse_depth(ux, uy, 50.0, 54.0, 35.0, 50.0) > 0.0)
            && uy < 38.0 - 6.0 * ((ux - 50.0) / 30.0).powi(2);
        if uy > 100.0 {
            0.3 + tone + 1.5 * texture
        } else if hair {
            0.18 + 1.5 * texture
        } else {
            let shade = 0.05 * ((ux - 50.0) / 30.0);
            0.55 + tone + shade + texture - 0.22 * feature(xf, yf)
        }
    });
    let fmask = face_mask(&landmarks, w, h)?;
    let normalized = normalize(&raw_portrait, &fmask, FACE_MEAN, FACE_STD)?;
    // Hair and clothing may leave the displayable range; the face region does not.
    let portrait = LuminanceImage::from_fn(w, h, |x, y| {
        let v = normalized.get(x, y);
        if fmask.get(x, y) {
            v
        } else {
            v.clamp(0.05, 0.95)
        }
    });

    // Backdrop: identity gradient plus texture.
    let bg_noise = value_noise(&mut r, w, h, 7.0 * sx);
    let theta = r.random::<f64>() * std::f64::consts::TAU;
    let (gx, gy) = (theta.cos(), theta.sin());
    let raw_bg = LuminanceImage::from_fn(w, h, |x, y| {
        let u = (x as f64 / w as f64 - 0.5) * gx + (y as f64 / h as f64 - 0.5) * gy;
        u + 0.6 * bg_noise.get(x, y)
    });
    let bmask = RegionMask::from_fn(w, h, |x, y| alpha.get(x, y) < 0.5);
    let background = normalize(&raw_bg, &bmask, BACKDROP_MEAN, BACKDROP_STD)?;

    let alpha = AlphaMatte::new(alpha)?;
    let sketch = edge_sketch(&portrait, &alpha);
    Ok(Identity {
        portrait,
        background,
        alpha,
        landmarks,
        sketch,
    })
}

/// Pencil-like rendering: dark strokes along portrait edges, light tone inside,
/// a blank page outside.
fn edge_sketch(portrait: &LuminanceImage<f64>, alpha: &AlphaMatte<f64>) -> LuminanceImage<f64> {
    let (w, h) = portrait.dims();
    let a = alpha.as_image();
    LuminanceImage::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let gx = portrait.get_clamped(xi + 1, yi) - portrait.get_clamped(xi - 1, yi);
        let gy = portrait.get_clamped(xi, yi + 1) - portrait.get_clamped(xi, yi - 1);
        let ax = a.get_clamped(xi + 1, yi) - a.get_clamped(xi - 1, yi);
        let ay = a.get_clamped(xi, yi + 1) - a.get_clamped(xi, yi - 1);
        let edge = 2.5 * gx.hypot(gy) + 0.8 * ax.hypot(ay);
        let shade = 0.3 * (1.0 - portrait.get(x, y)) * a.get(x, y);
        (1.0 - shade - edge).clamp(0.0, 1.0)
    })
}

fn noisy(img: &LuminanceImage<f64>, r: &mut ChaCha8Rng, sd: f64) -> LuminanceImage<f64> {
    if sd <= 0.0 {
        return img.clone();
    }
    let n = Normal::new(0.0, sd).expect("positive noise");
    let (w, h) = img.dims();
    LuminanceImage::from_fn(w, h, |x, y| (img.get(x, y) + n.sample(r)).clamp(0.0, 1.0))
}

/// Generates the corpus deterministically from `spec.seed`.
pub fn generate(spec: &CorpusSpec) -> Result<Corpus> {
    let identities = (0..spec.training)
        .map(|i| identity(spec, i))
        .collect::<Result<Vec<_>>>()?;
    let mut r = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let capture = |id: &Identity, r: &mut ChaCha8Rng| -> Result<LayeredPhoto<f64>> {
        let yp = noisy(&id.portrait, r, spec.noise);
        let yn = noisy(&id.background, r, spec.noise);
        Ok(
            LayeredPhoto::from_layers(yp, yn, id.alpha.clone(), id.landmarks.clone())?
                .with_sketch(id.sketch.clone()),
        )
    };
    let training = identities
        .iter()
        .map(|id| capture(id, &mut r))
        .collect::<Result<Vec<_>>>()?;
    let inputs = (0..spec.inputs)
        .map(|j| {
            let source = input_source(j, spec.training);
            Ok(CorpusInput {
                photo: capture(&identities[source], &mut r)?,
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { training, inputs })
}

/// Writes the corpus as 8-bit PNGs plus landmark files and a manifest into
/// `dir`; returns the manifest path.
pub fn write_corpus(corpus: &Corpus, dir: &Path, name: &str) -> Result<PathBuf> {
    let write_photo = |stem: &str, photo: &LayeredPhoto<f64>| -> Result<[String; 6]> {
        let names = [
            "photo.png",
            "fg.png",
            "bg.png",
            "alpha.png",
            "sketch.png",
            "landmarks.txt",
        ]
        .map(|suffix| format!("{stem}_{suffix}"));
        let l = photo.layers()?;
        write_luminance(&dir.join(&names[0]), &photo.composite)?;
        write_luminance(&dir.join(&names[1]), &l.portrait)?;
        write_luminance(&dir.join(&names[2]), &l.background)?;
        write_luminance(&dir.join(&names[3]), l.alpha.as_image())?;
        if let Some(s) = &photo.sketch {
            write_luminance(&dir.join(&names[4]), s)?;
        }
        photo.landmarks.save(&dir.join(&names[5]))?;
        Ok(names)
    };
    std::fs::create_dir_all(dir).map_err(|e| BlrError::io(dir, e))?;
    let mut training = Vec::with_capacity(corpus.training.len());
    for (i, p) in corpus.training.iter().enumerate() {
        let [photo, fg, bg, alpha, sketch, landmarks] =
            write_photo(&format!("training/{i:03}"), p)?;
        training.push(TrainingEntry {
            photo: photo.into(),
            alpha: Some(alpha.into()),
            trimap: None,
            foreground: Some(fg.into()),
            background: Some(bg.into()),
            landmarks: landmarks.into(),
            sketch: sketch.into(),
        });
    }
    let mut inputs = Vec::with_capacity(corpus.inputs.len());
    for (j, inp) in corpus.inputs.iter().enumerate() {
        let [photo, fg, bg, alpha, sketch, landmarks] =
            write_photo(&format!("inputs/{j:03}"), &inp.photo)?;
        inputs.push(InputEntry {
            photo: photo.into(),
            landmarks: landmarks.into(),
            sketch: inp.photo.sketch.as_ref().map(|_| sketch.into()),
            alpha: Some(alpha.into()),
            foreground: Some(fg.into()),
            background: Some(bg.into()),
            source: Some(inp.source),
        });
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        training,
        inputs,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| BlrError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{image_stats, pooled_stats};
    use crate::landmarks::MIDLINE_INDICES_68;

    fn small() -> CorpusSpec {
        CorpusSpec {
            training: 4,
            inputs: 2,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn landmarks_fit_frame_and_midline() {
        let l = canonical_landmarks(100, 125);
        assert_eq!(l.len(), 68);
        l.validate_bounds(100, 125).unwrap();
        for i in MIDLINE_INDICES_68 {
            assert!((l.points[i][0] - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic_and_seeded() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.training, b.training);
        let c = generate(&CorpusSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.training[0].composite, c.training[0].composite);
    }

    #[test]
    fn identities_share_face_and_backdrop_stats() {
        let c = generate(&CorpusSpec {
            noise: 0.0,
            ..small()
        })
        .unwrap();
        for p in &c.training {
            let l = p.layers().unwrap();
            let m = face_mask(&p.landmarks, 100, 125).unwrap();
            let s = masked_stats(&l.portrait, &m).unwrap();
            assert!((s.mean - FACE_MEAN).abs() < 1e-9 && (s.std_dev() - FACE_STD).abs() < 1e-9);
            assert!(image_stats(&l.background).mean > 0.6);
        }
        // Identities differ in texture.
        assert!(
            (c.training[0].composite.data()[6000] - c.training[1].composite.data()[6000]).abs()
                > 1e-6
        );
    }

    #[test]
    fn inputs_recapture_their_source() {
        let c = generate(&small()).unwrap();
        for (j, inp) in c.inputs.iter().enumerate() {
            assert_eq!(inp.source, input_source(j, 4));
            let src = &c.training[inp.source];
            let diff: f64 = inp
                .photo
                .composite
                .data()
                .iter()
                .zip(src.composite.data())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / src.composite.data().len() as f64;
            assert!(diff < 0.03, "mean diff {diff}");
            assert_eq!(inp.photo.sketch, src.sketch);
        }
        let masks: Vec<_> = c
            .training
            .iter()
            .map(|p| face_mask(&p.landmarks, 100, 125).unwrap())
            .collect();
        let comps: Vec<_> = c.training.iter().map(|p| p.composite.clone()).collect();
        assert!(pooled_stats(&comps, &masks).unwrap().variance > 0.0);
    }
}
