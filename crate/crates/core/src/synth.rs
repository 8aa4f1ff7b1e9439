//! Reference exemplar-based sketch synthesizer.
//!
//! The input photo is cut into overlapping square patches. Each patch looks up
//! its K nearest training photo patches by L2 distance on luminance, within a
//! window around its own position, and the matching sketch patches are fused
//! with Gaussian distance weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BlrError, Result};
use crate::image::{ensure_same_dims, LuminanceImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthParams {
    pub patch_size: usize,
    pub stride: usize,
    pub k: usize,
    pub search_radius: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            patch_size: 10,
            stride: 5,
            k: 5,
            search_radius: 5,
        }
    }
}

impl SynthParams {
    /// Search radius of the extended-range mode.
    pub const EXTENDED_RADIUS: usize = 10;

    pub fn extended(self) -> Self {
        Self {
            search_radius: Self::EXTENDED_RADIUS,
            ..self
        }
    }
}

/// Patch origins covering an image; the last row and column are clamped to the border.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub stride: usize,
    pub width: usize,
    pub height: usize,
    /// Top-left corners, row-major.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch_size: usize, stride: usize) -> Result<Self> {
        if patch_size == 0 || stride == 0 || stride > patch_size {
            return Err(BlrError::InvalidParameter(format!(
                "need 0 < stride <= patch size, got stride {stride}, patch {patch_size}"
            )));
        }
        if patch_size > width || patch_size > height {
            return Err(BlrError::InvalidParameter(format!(
                "patch {patch_size} larger than image {width}x{height}"
            )));
        }
        let xs = axis_origins(width, patch_size, stride);
        let ys = axis_origins(height, patch_size, stride);
        let origins = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect();
        Ok(Self {
            patch_size,
            stride,
            width,
            height,
            origins,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate<T> {
    pub photo: usize,
    pub x: usize,
    pub y: usize,
    /// Euclidean distance between the patches.
    pub distance: T,
}

/// Ranked candidates of every grid cell, nearest first.
#[derive(Debug, Clone)]
pub struct MatchResult<T> {
    pub grid: PatchGrid,
    pub candidates: Vec<Vec<Candidate<T>>>,
}

/// Squared distance, abandoned once it exceeds `bound`.
fn ssd_bounded<T: Scalar>(
    patch: &[T],
    img: &LuminanceImage<T>,
    x0: usize,
    y0: usize,
    size: usize,
    bound: T,
) -> T {
    let w = img.width();
    let data = img.data();
    let mut acc = T::zero();
    for dy in 0..size {
        let row = &data[(y0 + dy) * w + x0..(y0 + dy) * w + x0 + size];
        let p = &patch[dy * size..(dy + 1) * size];
        for (&a, &b) in p.iter().zip(row) {
            let d = a - b;
            acc = acc + d * d;
        }
        if acc > bound {
            return acc;
        }
    }
    acc
}

/// The `k` training patches nearest to `patch` among offsets within
/// `radius` (Chebyshev) of `center`. Ties go to the lower photo index, then the
/// earlier offset in row-major order.
pub fn knn_search<T: Scalar>(
    patch: &[T],
    patch_size: usize,
    training: &[LuminanceImage<T>],
    k: usize,
    center: (usize, usize),
    radius: usize,
) -> Result<Vec<Candidate<T>>> {
    if k == 0 {
        return Err(BlrError::InvalidParameter("k must be at least 1".into()));
    }
    if patch.len() != patch_size * patch_size {
        return Err(BlrError::InvalidParameter(format!(
            "patch has {} values, expected {}",
            patch.len(),
            patch_size * patch_size
        )));
    }
    // Sorted ascending by squared distance; ties keep visiting order.
    let mut best: Vec<Candidate<T>> = Vec::with_capacity(k + 1);
    for (photo, img) in training.iter().enumerate() {
        if img.width() < patch_size || img.height() < patch_size {
            continue;
        }
        let (max_x, max_y) = (img.width() - patch_size, img.height() - patch_size);
        let x_lo = center.0.saturating_sub(radius);
        let y_lo = center.1.saturating_sub(radius);
        let x_hi = (center.0 + radius).min(max_x);
        let y_hi = (center.1 + radius).min(max_y);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let bound = if best.len() == k {
                    best[k - 1].distance
                } else {
                    T::infinity()
                };
                let d2 = ssd_bounded(patch, img, x, y, patch_size, bound);
                if best.len() == k && !(d2 < bound) {
                    continue;
                }
                let pos = best.partition_point(|c| c.distance <= d2);
                best.insert(
                    pos,
                    Candidate {
                        photo,
                        x,
                        y,
                        distance: d2,
                    },
                );
                best.truncate(k);
            }
        }
    }
    if best.is_empty() {
        return Err(BlrError::NoCandidates);
    }
    for c in &mut best {
        c.distance = c.distance.sqrt();
    }
    Ok(best)
}

/// Searches every grid cell of `input`, centred on the cell's own position.
pub fn match_patches<T: Scalar>(
    input: &LuminanceImage<T>,
    training: &[LuminanceImage<T>],
    params: &SynthParams,
) -> Result<MatchResult<T>> {
    if training.is_empty() {
        return Err(BlrError::EmptyInput("training photos"));
    }
    let grid = PatchGrid::new(
        input.width(),
        input.height(),
        params.patch_size,
        params.stride,
    )?;
    let candidates = grid
        .origins
        .par_iter()
        .map_init(Vec::new, |buf, &(x, y)| {
            input.patch_into(x, y, params.patch_size, buf);
            knn_search(
                buf,
                params.patch_size,
                training,
                params.k,
                (x, y),
                params.search_radius,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchResult { grid, candidates })
}

fn median<T: Scalar>(sorted: &[T]) -> T {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) * T::half()
    }
}

/// Fusion weights of one cell's candidates.
///
/// Gaussian in distance with bandwidth equal to the cell's median candidate
/// distance. If any candidate has distance zero only zero-distance candidates
/// count; if every weight underflows the weights fall back to uniform.
pub fn candidate_weights<T: Scalar>(cands: &[Candidate<T>]) -> Vec<T> {
    let dists: Vec<T> = cands.iter().map(|c| c.distance).collect();
    let mut w: Vec<T> = if dists.iter().any(|&d| d == T::zero()) {
        dists
            .iter()
            .map(|&d| if d == T::zero() { T::one() } else { T::zero() })
            .collect()
    } else {
        let h = median(&dists);
        dists
            .iter()
            .map(|&d| {
                let r = d / h;
                let w = (-(r * r) / T::two()).exp();
                if w.is_finite() {
                    w
                } else {
                    T::zero()
                }
            })
            .collect()
    };
    if !w.iter().any(|&v| v > T::zero()) {
        w = vec![T::one(); cands.len()];
    }
    w
}

/// Per-pixel weighted average of all candidate sketch patches covering each pixel.
pub fn fuse_sketch<T: Scalar>(
    matches: &MatchResult<T>,
    sketches: &[LuminanceImage<T>],
) -> Result<LuminanceImage<T>> {
    let grid = &matches.grid;
    let (w, h, s) = (grid.width, grid.height, grid.patch_size);
    let mut num = vec![T::zero(); w * h];
    let mut den = vec![T::zero(); w * h];
    for (&(x0, y0), cands) in grid.origins.iter().zip(&matches.candidates) {
        if cands.is_empty() {
            return Err(BlrError::NoCandidates);
        }
        let weights = candidate_weights(cands);
        for (c, &wt) in cands.iter().zip(&weights) {
            if wt == T::zero() {
                continue;
            }
            let sk = sketches.get(c.photo).ok_or_else(|| {
                BlrError::InvalidParameter(format!("no sketch for training photo {}", c.photo))
            })?;
            if c.x + s > sk.width() || c.y + s > sk.height() {
                return Err(BlrError::DimensionMismatch {
                    expected: (c.x + s, c.y + s),
                    got: sk.dims(),
                });
            }
            for dy in 0..s {
                for dx in 0..s {
                    let i = (y0 + dy) * w + x0 + dx;
                    num[i] = num[i] + wt * sk.get(c.x + dx, c.y + dy);
                    den[i] = den[i] + wt;
                }
            }
        }
    }
    let data = num.into_iter().zip(den).map(|(n, d)| n / d).collect();
    LuminanceImage::new(w, h, data)
}

/// Where a cell's patch truly comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchTruth {
    pub photo: usize,
    pub x: usize,
    pub y: usize,
}

/// Ground truth for an input that is a re-capture of training photo `photo`
/// in the same frame: every cell's source is the same position in that photo.
pub fn same_position_truth(grid: &PatchGrid, photo: usize) -> Vec<PatchTruth> {
    grid.origins
        .iter()
        .map(|&(x, y)| PatchTruth { photo, x, y })
        .collect()
}

/// Fraction of cells whose rank-1 candidate is the right photo within
/// `tolerance` pixels (Chebyshev) of the right offset.
pub fn match_accuracy<T: Scalar>(
    matches: &MatchResult<T>,
    truth: &[PatchTruth],
    tolerance: usize,
) -> f64 {
    if matches.candidates.is_empty() {
        return 0.0;
    }
    let hits = matches
        .candidates
        .iter()
        .zip(truth)
        .filter(|(c, t)| {
            c.first().is_some_and(|c| {
                c.photo == t.photo
                    && c.x.abs_diff(t.x) <= tolerance
                    && c.y.abs_diff(t.y) <= tolerance
            })
        })
        .count();
    hits as f64 / matches.candidates.len() as f64
}

/// Matches `input` against the training photos and fuses their sketches.
pub fn synthesize<T: Scalar>(
    input: &LuminanceImage<T>,
    training: &[LuminanceImage<T>],
    sketches: &[LuminanceImage<T>],
    params: &SynthParams,
) -> Result<(LuminanceImage<T>, MatchResult<T>)> {
    if sketches.len() != training.len() {
        return Err(BlrError::InvalidParameter(format!(
            "{} training photos but {} sketches",
            training.len(),
            sketches.len()
        )));
    }
    for (p, s) in training.iter().zip(sketches) {
        ensure_same_dims(p.dims(), s.dims())?;
    }
    let matches = match_patches(input, training, params)?;
    let sketch = fuse_sketch(&matches, sketches)?;
    Ok((sketch, matches))
}

/// Mean absolute difference of two equally sized images.
pub fn mean_abs_error<T: Scalar>(a: &LuminanceImage<T>, b: &LuminanceImage<T>) -> Result<T> {
    ensure_same_dims(a.dims(), b.dims())?;
    let sum: T = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .sum();
    Ok(sum / T::from_count(a.data().len().max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_image, rng};
    use proptest::prelude::*;

    // Exhaustive oracle: all offsets in range, full sort by (distance², photo, y, x).
    fn scan_oracle(
        patch: &[f64],
        size: usize,
        training: &[LuminanceImage<f64>],
        k: usize,
        center: (usize, usize),
        radius: usize,
    ) -> Vec<(usize, usize, usize, f64)> {
        let mut all = Vec::new();
        for (p, img) in training.iter().enumerate() {
            for y in 0..=img.height() - size {
                for x in 0..=img.width() - size {
                    if x.abs_diff(center.0) > radius || y.abs_diff(center.1) > radius {
                        continue;
                    }
                    let mut d2 = 0.0;
                    for dy in 0..size {
                        for dx in 0..size {
                            let d = patch[dy * size + dx] - img.get(x + dx, y + dy);
                            d2 += d * d;
                        }
                    }
                    all.push((p, x, y, d2));
                }
            }
        }
        all.sort_by(|a, b| {
            a.3.total_cmp(&b.3)
                .then((a.0, a.2, a.1).cmp(&(b.0, b.2, b.1)))
        });
        all.truncate(k);
        all
    }

    #[test]
    fn grid_covers_image_with_clamped_border() {
        let g = PatchGrid::new(23, 12, 10, 5).unwrap();
        let xs: Vec<_> = g.origins.iter().filter(|o| o.1 == 0).map(|o| o.0).collect();
        assert_eq!(xs, vec![0, 5, 10, 13]);
        let ys: Vec<_> = g.origins.iter().filter(|o| o.0 == 0).map(|o| o.1).collect();
        assert_eq!(ys, vec![0, 2]);
        let mut covered = vec![false; 23 * 12];
        for &(x, y) in &g.origins {
            for dy in 0..10 {
                for dx in 0..10 {
                    covered[(y + dy) * 23 + x + dx] = true;
                }
            }
        }
        assert!(covered.iter().all(|&c| c));
        assert!(PatchGrid::new(20, 20, 4, 5).is_err());
        assert!(PatchGrid::new(3, 20, 4, 2).is_err());
    }

    #[test]
    fn verbatim_patch_is_rank_one() {
        let mut r = rng(1);
        let training: Vec<_> = (0..3).map(|_| random_image(&mut r, 20, 20)).collect();
        let mut patch = Vec::new();
        training[1].patch_into(6, 7, 5, &mut patch);
        for radius in [0, 3] {
            let c = knn_search(&patch, 5, &training, 4, (6, 7), radius).unwrap();
            assert_eq!((c[0].photo, c[0].x, c[0].y), (1, 6, 7));
            assert_eq!(c[0].distance, 0.0);
        }
    }

    #[test]
    fn radius_zero_gives_one_offset_per_photo() {
        let mut r = rng(2);
        let training: Vec<_> = (0..4).map(|_| random_image(&mut r, 20, 20)).collect();
        let patch = vec![0.5; 25];
        let c = knn_search(&patch, 5, &training, 10, (3, 9), 0).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|c| (c.x, c.y) == (3, 9)));
        let mut photos: Vec<_> = c.iter().map(|c| c.photo).collect();
        photos.sort();
        assert_eq!(photos, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_break_by_photo_then_row_major() {
        let training = vec![LuminanceImage::filled(8, 8, 0.3f64); 2];
        let patch = vec![0.3; 9];
        let c = knn_search(&patch, 3, &training, 3, (2, 2), 1).unwrap();
        let got: Vec<_> = c.iter().map(|c| (c.photo, c.x, c.y)).collect();
        assert_eq!(got, vec![(0, 1, 1), (0, 2, 1), (0, 3, 1)]);
    }

    #[test]
    fn no_candidates_and_bad_k() {
        let training = vec![LuminanceImage::filled(2, 2, 0.3f64)];
        let patch = vec![0.3; 9];
        assert!(matches!(
            knn_search(&patch, 3, &training, 1, (0, 0), 2),
            Err(BlrError::NoCandidates)
        ));
        assert!(matches!(
            knn_search(&patch, 3, &training, 0, (0, 0), 2),
            Err(BlrError::InvalidParameter(_))
        ));
    }

    #[test]
    fn k1_without_overlap_tiles_best_sketch_patches() {
        let mut r = rng(3);
        let training: Vec<_> = (0..3).map(|_| random_image(&mut r, 12, 12)).collect();
        let sketches: Vec<_> = (0..3).map(|_| random_image(&mut r, 12, 12)).collect();
        let input = random_image(&mut r, 12, 12);
        let params = SynthParams {
            patch_size: 4,
            stride: 4,
            k: 1,
            search_radius: 2,
        };
        let (out, m) = synthesize(&input, &training, &sketches, &params).unwrap();
        for (&(x0, y0), c) in m.grid.origins.iter().zip(&m.candidates) {
            let c = c[0];
            for dy in 0..4 {
                for dx in 0..4 {
                    assert!(
                        (out.get(x0 + dx, y0 + dy) - sketches[c.photo].get(c.x + dx, c.y + dy))
                            .abs()
                            < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn fusion_matches_per_pixel_oracle() {
        // 8×8 image, 4×4 patches, stride 2: interior pixels are covered by up to 3×3 cells,
        // each row and column by up to 3.
        let mut r = rng(4);
        let training: Vec<_> = (0..2).map(|_| random_image(&mut r, 8, 8)).collect();
        let sketches: Vec<_> = (0..2).map(|_| random_image(&mut r, 8, 8)).collect();
        let input = random_image(&mut r, 8, 8);
        let params = SynthParams {
            patch_size: 4,
            stride: 2,
            k: 3,
            search_radius: 1,
        };
        let (out, m) = synthesize(&input, &training, &sketches, &params).unwrap();
        for py in 0..8 {
            for px in 0..8 {
                let (mut num, mut den) = (0.0, 0.0);
                for (&(x0, y0), cands) in m.grid.origins.iter().zip(&m.candidates) {
                    if px < x0 || px >= x0 + 4 || py < y0 || py >= y0 + 4 {
                        continue;
                    }
                    let mut ds: Vec<f64> = cands.iter().map(|c| c.distance).collect();
                    ds.sort_by(f64::total_cmp);
                    let h = if ds.len() % 2 == 1 {
                        ds[ds.len() / 2]
                    } else {
                        0.5 * (ds[ds.len() / 2 - 1] + ds[ds.len() / 2])
                    };
                    for c in cands {
                        let w = (-c.distance * c.distance / (2.0 * h * h)).exp();
                        num += w * sketches[c.photo].get(c.x + px - x0, c.y + py - y0);
                        den += w;
                    }
                }
                assert!((out.get(px, py) - num / den).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_distance_dominates_and_zero_weights_fall_back() {
        let c = |d: f64| Candidate {
            photo: 0,
            x: 0,
            y: 0,
            distance: d,
        };
        assert_eq!(
            candidate_weights(&[c(0.0), c(0.3), c(0.0)]),
            vec![1.0, 0.0, 1.0]
        );
        assert_eq!(candidate_weights(&[c(1.0), c(1e200)]).len(), 2);
        let w = candidate_weights(&[c(1e-200), c(1e300)]);
        assert!(w.iter().all(|&v| v >= 0.0) && w.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn training_photo_reproduces_its_sketch() {
        let mut r = rng(5);
        let training: Vec<_> = (0..4).map(|_| random_image(&mut r, 30, 30)).collect();
        let sketches: Vec<_> = (0..4).map(|_| random_image(&mut r, 30, 30)).collect();
        let (out, m) =
            synthesize(&training[2], &training, &sketches, &SynthParams::default()).unwrap();
        assert!(mean_abs_error(&out, &sketches[2]).unwrap() < 1e-9);
        assert_eq!(match_accuracy(&m, &same_position_truth(&m.grid, 2), 0), 1.0);
    }

    #[test]
    fn accuracy_counts() {
        let grid = PatchGrid::new(10, 10, 5, 5).unwrap();
        let cand = |photo, x, y| {
            vec![Candidate {
                photo,
                x,
                y,
                distance: 0.0f64,
            }]
        };
        let truth = same_position_truth(&grid, 1);
        let exact = MatchResult {
            grid: grid.clone(),
            candidates: truth.iter().map(|t| cand(1, t.x, t.y)).collect(),
        };
        assert_eq!(match_accuracy(&exact, &truth, 0), 1.0);
        let wrong = MatchResult {
            grid: grid.clone(),
            candidates: truth.iter().map(|t| cand(0, t.x, t.y)).collect(),
        };
        assert_eq!(match_accuracy(&wrong, &truth, 5), 0.0);
        let half = MatchResult {
            grid: grid.clone(),
            candidates: truth
                .iter()
                .enumerate()
                .map(|(i, t)| cand(if i % 2 == 0 { 1 } else { 0 }, t.x, t.y))
                .collect(),
        };
        assert_eq!(match_accuracy(&half, &truth, 0), 0.5);
        let near = MatchResult {
            grid,
            candidates: truth.iter().map(|t| cand(1, t.x + 2, t.y)).collect(),
        };
        assert_eq!(match_accuracy(&near, &truth, 1), 0.0);
        assert_eq!(match_accuracy(&near, &truth, 2), 1.0);
    }

    proptest! {
        #[test]
        fn knn_matches_exhaustive_scan(seed in any::<u64>(), k in 1usize..8, radius in 0usize..6, cx in 0usize..16, cy in 0usize..16) {
            let mut r = rng(seed);
            // Quantized values make exact distance ties likely.
            let training: Vec<_> = (0..3).map(|_| random_image(&mut r, 20, 20).map(|v| (v * 4.0).round() / 4.0)).collect();
            let input = random_image(&mut r, 20, 20).map(|v| (v * 4.0).round() / 4.0);
            let mut patch = Vec::new();
            input.patch_into(cx, cy, 5, &mut patch);
            let got = knn_search(&patch, 5, &training, k, (cx, cy), radius).unwrap();
            let want = scan_oracle(&patch, 5, &training, k, (cx, cy), radius);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert_eq!((g.photo, g.x, g.y), (w.0, w.1, w.2));
                prop_assert!((g.distance - w.3.sqrt()).abs() < 1e-12);
            }
        }
    }
}
