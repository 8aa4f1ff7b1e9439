//! Side-lighting correction.
//!
//! When one half of the face is markedly darker than the other, the photo is
//! equalized with CLAHE, every pixel of the dark half is matched (by NCC, with
//! the candidate patch mirrored) to a patch near its reflection in the lit
//! half, and the dark pixel is gamma corrected by the ratio of the two patch
//! means. Photos without a detected shadow side pass through untouched.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BlrError, Result};
use crate::image::{ensure_same_dims, masked_stats, LuminanceImage, RegionMask};
use crate::landmarks::{face_mask, LandmarkSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams<T> {
    pub tile_cols: usize,
    pub tile_rows: usize,
    /// Per-bin cap as a fraction of the tile's pixel count.
    pub clip_limit: T,
    pub bins: usize,
}

impl<T: Scalar> Default for ClaheParams<T> {
    fn default() -> Self {
        Self {
            tile_cols: 8,
            tile_rows: 8,
            clip_limit: T::lit(0.01),
            bins: 256,
        }
    }
}

impl<T: Scalar> ClaheParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.tile_cols == 0 || self.tile_rows == 0 {
            return Err(BlrError::InvalidParameter(
                "CLAHE needs at least one tile".into(),
            ));
        }
        if self.bins < 2 {
            return Err(BlrError::InvalidParameter(
                "CLAHE needs at least two bins".into(),
            ));
        }
        if !(self.clip_limit >= T::one() / T::from_count(self.bins)) {
            return Err(BlrError::InvalidParameter(format!(
                "clip limit {} below 1/bins",
                self.clip_limit
            )));
        }
        Ok(())
    }
}

fn bin_of<T: Scalar>(v: T, bins: usize) -> usize {
    let v = v.max(T::zero()).min(T::one());
    let b = (v * T::from_count(bins)).floor().to_usize().unwrap_or(0);
    b.min(bins - 1)
}

/// Histogram of a tile as fractions of its pixel count, clipped at `clip_limit`,
/// with the clipped excess spread evenly over all bins. Returns `(clipped, redistributed)`.
pub fn clipped_histogram<T: Scalar>(values: &[T], bins: usize, clip_limit: T) -> (Vec<T>, Vec<T>) {
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[bin_of(v, bins)] += 1;
    }
    let n = T::from_count(values.len().max(1));
    let mut hist: Vec<T> = counts.into_iter().map(|c| T::from_count(c) / n).collect();
    let cap = clip_limit;
    let mut excess = T::zero();
    for h in hist.iter_mut() {
        if *h > cap {
            excess = excess + (*h - cap);
            *h = cap;
        }
    }
    let share = excess / T::from_count(bins);
    let redistributed = hist.iter().map(|&h| h + share).collect();
    (hist, redistributed)
}

/// Lookup table of one tile: cumulative clipped histogram, in `[0, 1]`.
pub fn tile_mapping<T: Scalar>(values: &[T], bins: usize, clip_limit: T) -> Vec<T> {
    let (_, hist) = clipped_histogram(values, bins, clip_limit);
    let mut acc = T::zero();
    hist.iter()
        .map(|&h| {
            acc = acc + h;
            acc.min(T::one())
        })
        .collect()
}

fn tile_bounds(len: usize, tiles: usize, i: usize) -> (usize, usize) {
    (i * len / tiles, (i + 1) * len / tiles)
}

/// Contrast limited adaptive histogram equalization with bilinear blending of
/// the four nearest tile mappings. Output lies in `[0, 1]`.
pub fn clahe<T: Scalar>(
    img: &LuminanceImage<T>,
    params: &ClaheParams<T>,
) -> Result<LuminanceImage<T>> {
    params.validate()?;
    let (w, h) = img.dims();
    if w < params.tile_cols || h < params.tile_rows || w * h == 0 {
        return Err(BlrError::InvalidParameter(format!(
            "{w}x{h} image too small for {}x{} tiles",
            params.tile_cols, params.tile_rows
        )));
    }
    let mut maps = Vec::with_capacity(params.tile_cols * params.tile_rows);
    let mut buf = Vec::new();
    for ty in 0..params.tile_rows {
        let (y0, y1) = tile_bounds(h, params.tile_rows, ty);
        for tx in 0..params.tile_cols {
            let (x0, x1) = tile_bounds(w, params.tile_cols, tx);
            buf.clear();
            for y in y0..y1 {
                buf.extend_from_slice(&img.data()[y * w + x0..y * w + x1]);
            }
            maps.push(tile_mapping(&buf, params.bins, params.clip_limit));
        }
    }
    let centers = |len: usize, tiles: usize| -> Vec<f64> {
        (0..tiles)
            .map(|i| {
                let (a, b) = tile_bounds(len, tiles, i);
                (a + b - 1) as f64 / 2.0
            })
            .collect()
    };
    let cx = centers(w, params.tile_cols);
    let cy = centers(h, params.tile_rows);
    // Index of the lower neighbouring tile center and the blend weight toward the upper one.
    let locate = |c: &[f64], p: usize| -> (usize, usize, f64) {
        let p = p as f64;
        if p <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if p >= c[last] {
            return (last, last, 0.0);
        }
        let i = c.iter().rposition(|&v| v <= p).unwrap();
        (i, i + 1, (p - c[i]) / (c[i + 1] - c[i]))
    };
    let out = LuminanceImage::from_fn(w, h, |x, y| {
        let b = bin_of(img.get(x, y), params.bins);
        let (i0, i1, fx) = locate(&cx, x);
        let (j0, j1, fy) = locate(&cy, y);
        let m = |i: usize, j: usize| maps[j * params.tile_cols + i][b];
        let (fx, fy) = (T::lit(fx), T::lit(fy));
        // Lerp form keeps equal neighbours bit-exact.
        let lerp = |a: T, b: T, f: T| a + (b - a) * f;
        let top = lerp(m(i0, j0), m(i1, j0), fx);
        let bottom = lerp(m(i0, j1), m(i1, j1), fx);
        lerp(top, bottom, fy).max(T::zero()).min(T::one())
    });
    Ok(out)
}

/// Face region split at the vertical symmetry axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceHalves {
    pub left: RegionMask,
    pub right: RegionMask,
    pub axis: f64,
}

/// Splits the landmark hull at the mean x of the midline landmarks. Pixels with
/// `x < axis` go left.
pub fn split_halves(landmarks: &LandmarkSet, width: usize, height: usize) -> Result<FaceHalves> {
    let face = face_mask(landmarks, width, height)?;
    let axis = landmarks.midline_x()?;
    let left = RegionMask::from_fn(width, height, |x, y| face.get(x, y) && (x as f64) < axis);
    let right = RegionMask::from_fn(width, height, |x, y| face.get(x, y) && (x as f64) >= axis);
    Ok(FaceHalves { left, right, axis })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShadowSide {
    Left,
    Right,
    None,
}

pub const DEFAULT_SHADOW_THRESHOLD: f64 = 0.08;

/// The darker half, if its mean is lower by more than `threshold`.
pub fn detect_shadow_side<T: Scalar>(
    img: &LuminanceImage<T>,
    left: &RegionMask,
    right: &RegionMask,
    threshold: T,
) -> Result<ShadowSide> {
    let l = masked_stats(img, left)?.mean;
    let r = masked_stats(img, right)?.mean;
    Ok(if r - l > threshold {
        ShadowSide::Left
    } else if l - r > threshold {
        ShadowSide::Right
    } else {
        ShadowSide::None
    })
}

/// Zero-mean normalized cross correlation. Pairs involving a constant patch give 0.
pub fn ncc<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(BlrError::InvalidParameter(format!(
            "patch sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = T::from_count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Ok(T::zero());
    }
    Ok((sab / (saa * sbb).sqrt()).max(-T::one()).min(T::one()))
}

/// A shadow pixel and its best mirrored match on the lit side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowCorrespondence<T> {
    pub shadow_point: (usize, usize),
    pub matched_point: (usize, usize),
    pub mean_shadow: T,
    pub mean_lit: T,
}

fn patch_centered<T: Scalar>(
    img: &LuminanceImage<T>,
    cx: usize,
    cy: usize,
    size: usize,
    mirror: bool,
    out: &mut Vec<T>,
) {
    out.clear();
    let half = (size / 2) as isize;
    for dy in 0..size as isize {
        for dx in 0..size as isize {
            let ox = if mirror { half - dx } else { dx - half };
            out.push(img.get_clamped(cx as isize + ox, cy as isize + dy - half));
        }
    }
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_count(v.len())
}

/// Best mirrored NCC match for `p` among the `(2·radius+1)²` lit-side pixels
/// around its reflection across `axis`. Ties prefer the smaller displacement,
/// then row-major order.
pub fn symmetric_match<T: Scalar>(
    img: &LuminanceImage<T>,
    p: (usize, usize),
    axis: f64,
    patch_size: usize,
    radius: usize,
    lit: &RegionMask,
) -> Result<ShadowCorrespondence<T>> {
    ensure_same_dims(img.dims(), lit.dims())?;
    if patch_size == 0 {
        return Err(BlrError::InvalidParameter(
            "patch size must be positive".into(),
        ));
    }
    let (w, h) = img.dims();
    let mirror_x = (2.0 * axis - p.0 as f64).round() as isize;
    let mirror_y = p.1 as isize;
    let mut shadow = Vec::with_capacity(patch_size * patch_size);
    patch_centered(img, p.0, p.1, patch_size, false, &mut shadow);
    let mut cand = Vec::with_capacity(patch_size * patch_size);
    let r = radius as isize;
    const TIE: f64 = 1e-12;
    let mut best: Option<(T, isize, (usize, usize))> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (mirror_x + dx, mirror_y + dy);
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if !lit.get(x, y) {
                continue;
            }
            patch_centered(img, x, y, patch_size, true, &mut cand);
            let score = ncc(&shadow, &cand)?;
            let disp = dx * dx + dy * dy;
            let better = match best {
                None => true,
                Some((s, d, _)) => {
                    let diff = (score - s).as_f64();
                    diff > TIE || (diff.abs() <= TIE && disp < d)
                }
            };
            if better {
                best = Some((score, disp, (x, y)));
            }
        }
    }
    let (_, _, q) = best.ok_or(BlrError::NoCandidates)?;
    patch_centered(img, q.0, q.1, patch_size, false, &mut cand);
    Ok(ShadowCorrespondence {
        shadow_point: p,
        matched_point: q,
        mean_shadow: mean(&shadow),
        mean_lit: mean(&cand),
    })
}

/// Replaces each corresponded shadow pixel `I` by `I^(mean_shadow / mean_lit)`,
/// with `I` clamped to `[0, 1]` first. Returns the corrected image and the number
/// of pixels skipped for a non-positive lit mean.
pub fn gamma_correct<T: Scalar>(
    img: &LuminanceImage<T>,
    shadow: &RegionMask,
    correspondences: &[ShadowCorrespondence<T>],
) -> Result<(LuminanceImage<T>, usize)> {
    ensure_same_dims(img.dims(), shadow.dims())?;
    let mut out = img.clone();
    let mut skipped = 0;
    for c in correspondences {
        let (x, y) = c.shadow_point;
        if !shadow.get(x, y) {
            return Err(BlrError::InvalidParameter(format!(
                "correspondence at ({x}, {y}) outside the shadow region"
            )));
        }
        if !(c.mean_lit > T::zero()) {
            skipped += 1;
            continue;
        }
        let v = img.get(x, y).max(T::zero()).min(T::one());
        out.set(x, y, v.powf(c.mean_shadow / c.mean_lit));
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelightParams {
    pub shadow_threshold: f64,
    pub clahe: ClaheParams<f64>,
    pub patch_size: usize,
    pub search_radius: usize,
}

impl Default for RelightParams {
    fn default() -> Self {
        Self {
            shadow_threshold: DEFAULT_SHADOW_THRESHOLD,
            clahe: ClaheParams::default(),
            patch_size: 11,
            search_radius: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelightOutcome<T> {
    pub image: LuminanceImage<T>,
    pub side: ShadowSide,
    pub corrected: usize,
    pub skipped: usize,
}

/// Full side-lighting correction. Bit-identical pass-through when no shadow side is found.
pub fn correct_side_lighting<T: Scalar>(
    img: &LuminanceImage<T>,
    landmarks: &LandmarkSet,
    params: &RelightParams,
) -> Result<RelightOutcome<T>> {
    let halves = split_halves(landmarks, img.width(), img.height())?;
    let side = detect_shadow_side(
        img,
        &halves.left,
        &halves.right,
        T::lit(params.shadow_threshold),
    )?;
    let (shadow, lit) = match side {
        ShadowSide::None => {
            return Ok(RelightOutcome {
                image: img.clone(),
                side,
                corrected: 0,
                skipped: 0,
            })
        }
        ShadowSide::Left => (&halves.left, &halves.right),
        ShadowSide::Right => (&halves.right, &halves.left),
    };
    let clahe_params = ClaheParams {
        tile_cols: params.clahe.tile_cols,
        tile_rows: params.clahe.tile_rows,
        clip_limit: T::lit(params.clahe.clip_limit),
        bins: params.clahe.bins,
    };
    let equalized = clahe(img, &clahe_params)?;
    let (w, h) = img.dims();
    let pixels: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| shadow.get(x, y))
        .collect();
    let matches: Vec<Result<ShadowCorrespondence<T>>> = pixels
        .par_iter()
        .map(|&p| {
            symmetric_match(
                &equalized,
                p,
                halves.axis,
                params.patch_size,
                params.search_radius,
                lit,
            )
        })
        .collect();
    let mut correspondences = Vec::with_capacity(matches.len());
    let mut unmatched = 0;
    for m in matches {
        match m {
            Ok(c) => correspondences.push(c),
            Err(BlrError::NoCandidates) => unmatched += 1,
            Err(e) => return Err(e),
        }
    }
    let (image, skipped) = gamma_correct(&equalized, shadow, &correspondences)?;
    Ok(RelightOutcome {
        image,
        side,
        corrected: correspondences.len() - skipped,
        skipped: skipped + unmatched,
    })
}
