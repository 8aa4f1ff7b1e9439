//! Pose normalization by piecewise-affine warping onto a mean-landmark template.
//!
//! The template is the per-index mean of the training landmarks, Delaunay
//! triangulated. A warp holds one affine per triangle in each direction; pixels
//! outside every triangle use the triangle with the nearest centroid, so the
//! background follows the face boundary rigidly.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{BlrError, Result};
use crate::image::LuminanceImage;
use crate::landmarks::{polygon_area, LandmarkSet};
use crate::scalar::Scalar;

/// Source triangles smaller than this (px²) are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-6;

/// Sample coordinates this close to an integer are snapped onto it.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTemplate {
    pub mean_landmarks: LandmarkSet,
    /// Counter-clockwise landmark-index triples.
    pub triangles: Vec<[usize; 3]>,
    pub width: usize,
    pub height: usize,
}

impl FaceTemplate {
    pub fn frame(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| BlrError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BlrError::io(path, e))?;
        let t: Self =
            serde_json::from_str(&text).map_err(|e| BlrError::parse(path, e.to_string()))?;
        t.validate().map_err(|m| BlrError::parse(path, m))?;
        Ok(t)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let n = self.mean_landmarks.len();
        if self.triangles.is_empty() {
            return Err("template has no triangles".into());
        }
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(format!("triangle {t:?} indexes past {n} landmarks"));
        }
        Ok(())
    }
}

/// Per-index mean of the landmark sets, triangulated.
pub fn build_template(
    landmark_sets: &[LandmarkSet],
    frame: (usize, usize),
) -> Result<FaceTemplate> {
    let first = landmark_sets
        .first()
        .ok_or(BlrError::EmptyInput("landmark sets"))?;
    let n = first.len();
    if let Some(bad) = landmark_sets.iter().position(|s| s.len() != n) {
        return Err(BlrError::InvalidParameter(format!(
            "landmark set {bad} has {} points, expected {n}",
            landmark_sets[bad].len()
        )));
    }
    let count = landmark_sets.len() as f64;
    let points: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let (sx, sy) = landmark_sets.iter().fold((0.0, 0.0), |(sx, sy), s| {
                (sx + s.points[i][0], sy + s.points[i][1])
            });
            [sx / count, sy / count]
        })
        .collect();
    let triangles = delaunay(&points)?;
    Ok(FaceTemplate {
        mean_landmarks: LandmarkSet::new(points),
        triangles,
        width: frame.0,
        height: frame.1,
    })
}

/// Delaunay triangulation as index triples, counter-clockwise, each rotated to
/// start at its smallest index, listed in lexicographic order. Points are
/// inserted in lexicographic order so the result does not depend on input order
/// beyond index labels. Duplicate points keep their first index.
pub fn delaunay(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 3 {
        return Err(BlrError::Degenerate("fewer than three landmarks".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut owner: Vec<Option<usize>> = Vec::new();
    for &i in &order {
        let [x, y] = points[i];
        let handle = dt
            .insert(Point2::new(x, y))
            .map_err(|e| BlrError::Degenerate(format!("landmark {i}: {e:?}")))?;
        let v = handle.index();
        if owner.len() <= v {
            owner.resize(v + 1, None);
        }
        // Keep the smallest index among coincident points.
        owner[v] = Some(owner[v].map_or(i, |o: usize| o.min(i)));
    }
    let mut tris: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f
                .vertices()
                .map(|v| owner[v.fix().index()].expect("inserted vertex"));
            let mut t = [a, b, c];
            if signed_area(points[t[0]], points[t[1]], points[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
            let k = (0..3).min_by_key(|&k| t[k]).unwrap();
            [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
        })
        .collect();
    if tris.is_empty() {
        return Err(BlrError::Degenerate("landmarks are collinear".into()));
    }
    tris.sort_unstable();
    Ok(tris)
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// 2×3 affine `[[m00, m01, tx], [m10, m11, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2(pub [[f64; 3]; 2]);

impl Affine2 {
    pub const IDENTITY: Self = Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    /// The affine mapping `src[k]` onto `dst[k]` for k = 0, 1, 2.
    pub fn from_triangles(src: [[f64; 2]; 3], dst: [[f64; 2]; 3]) -> Result<Self> {
        let (e1, e2) = (sub(src[1], src[0]), sub(src[2], src[0]));
        let det = e1[0] * e2[1] - e2[0] * e1[1];
        if !(0.5 * det.abs() >= MIN_TRIANGLE_AREA) {
            return Err(BlrError::Degenerate(format!(
                "triangle area {} below {MIN_TRIANGLE_AREA}",
                0.5 * det.abs()
            )));
        }
        let (f1, f2) = (sub(dst[1], dst[0]), sub(dst[2], dst[0]));
        // L · [e1 e2] = [f1 f2]  =>  L = [f1 f2] · [e1 e2]⁻¹
        let inv = [[e2[1] / det, -e2[0] / det], [-e1[1] / det, e1[0] / det]];
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            m[r][0] = f1[r] * inv[0][0] + f2[r] * inv[1][0];
            m[r][1] = f1[r] * inv[0][1] + f2[r] * inv[1][1];
            m[r][2] = dst[0][r] - m[r][0] * src[0][0] - m[r][1] * src[0][1];
        }
        Ok(Self(m))
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.0;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(BlrError::Degenerate("singular affine".into()));
        }
        let a = m[1][1] / det;
        let b = -m[0][1] / det;
        let c = -m[1][0] / det;
        let d = m[0][0] / det;
        Ok(Self([
            [a, b, -(a * m[0][2] + b * m[1][2])],
            [c, d, -(c * m[0][2] + d * m[1][2])],
        ]))
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    /// Source frame to template frame.
    Forward,
    /// Template frame back to the source frame.
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffineWarp {
    pub triangles: Vec<[usize; 3]>,
    pub source_points: Vec<[f64; 2]>,
    pub template_points: Vec<[f64; 2]>,
    /// Source to template, one per triangle.
    pub forward: Vec<Affine2>,
    /// Template to source, one per triangle.
    pub inverse: Vec<Affine2>,
    pub source_frame: (usize, usize),
    pub template_frame: (usize, usize),
}

/// Fits a warp for a source image with the template's frame size.
pub fn fit_warp(source: &LandmarkSet, template: &FaceTemplate) -> Result<PiecewiseAffineWarp> {
    fit_warp_with_frame(source, template.frame(), template)
}

/// Fits a warp for a source image of the given size.
pub fn fit_warp_with_frame(
    source: &LandmarkSet,
    source_frame: (usize, usize),
    template: &FaceTemplate,
) -> Result<PiecewiseAffineWarp> {
    if source.len() != template.mean_landmarks.len() {
        return Err(BlrError::InvalidParameter(format!(
            "source has {} landmarks, template has {}",
            source.len(),
            template.mean_landmarks.len()
        )));
    }
    let sp = &source.points;
    let tp = &template.mean_landmarks.points;
    let mut forward = Vec::with_capacity(template.triangles.len());
    let mut inverse = Vec::with_capacity(template.triangles.len());
    for t in &template.triangles {
        let s = t.map(|i| sp[i]);
        if polygon_area(&s) < MIN_TRIANGLE_AREA {
            return Err(BlrError::Degenerate(format!(
                "source triangle {t:?} is degenerate"
            )));
        }
        let f = Affine2::from_triangles(s, t.map(|i| tp[i]))?;
        inverse.push(f.inverse()?);
        forward.push(f);
    }
    Ok(PiecewiseAffineWarp {
        triangles: template.triangles.clone(),
        source_points: sp.clone(),
        template_points: tp.clone(),
        forward,
        inverse,
        source_frame,
        template_frame: template.frame(),
    })
}

/// Index of the first triangle containing `p`, else the one with the nearest centroid.
fn assign_triangle(points: &[[f64; 2]], triangles: &[[usize; 3]], p: [f64; 2]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, t) in triangles.iter().enumerate() {
        let [a, b, c] = t.map(|i| points[i]);
        let area = signed_area(a, b, c);
        let tol = 1e-9 * area.abs().max(1.0);
        let (w0, w1, w2) = (
            signed_area(p, b, c),
            signed_area(a, p, c),
            signed_area(a, b, p),
        );
        let inside = if area > 0.0 {
            w0 >= -tol && w1 >= -tol && w2 >= -tol
        } else {
            w0 <= tol && w1 <= tol && w2 <= tol
        };
        if inside {
            return k;
        }
        let cx = (a[0] + b[0] + c[0]) / 3.0 - p[0];
        let cy = (a[1] + b[1] + c[1]) / 3.0 - p[1];
        let d = cx * cx + cy * cy;
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= SNAP_EPS {
        r
    } else {
        v
    }
}

/// Bilinear sample with border clamping.
pub fn sample_bilinear<T: Scalar>(img: &LuminanceImage<T>, x: f64, y: f64) -> T {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = snap(x).clamp(0.0, w - 1.0);
    let y = snap(y).clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (T::lit(x - x0), T::lit(y - y0));
    let (x0, y0) = (x0 as isize, y0 as isize);
    let p = |dx: isize, dy: isize| img.get_clamped(x0 + dx, y0 + dy);
    let lerp = |a: T, b: T, f: T| a + (b - a) * f;
    let top = lerp(p(0, 0), p(1, 0), fx);
    let bottom = lerp(p(0, 1), p(1, 1), fx);
    lerp(top, bottom, fy)
}

/// Backward-sampling warp. `Forward` takes an image in the source frame to the
/// template frame; `Inverse` takes a template-frame image back to the source frame.
pub fn warp_image<T: Scalar>(
    img: &LuminanceImage<T>,
    warp: &PiecewiseAffineWarp,
    direction: WarpDirection,
) -> Result<LuminanceImage<T>> {
    let (in_frame, out_frame, out_points, maps) = match direction {
        WarpDirection::Forward => (
            warp.source_frame,
            warp.template_frame,
            &warp.template_points,
            &warp.inverse,
        ),
        WarpDirection::Inverse => (
            warp.template_frame,
            warp.source_frame,
            &warp.source_points,
            &warp.forward,
        ),
    };
    if img.dims() != in_frame {
        return Err(BlrError::DimensionMismatch {
            expected: in_frame,
            got: img.dims(),
        });
    }
    let (w, h) = out_frame;
    let mut data = vec![T::zero(); w * h];
    data.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let p = [x as f64, y as f64];
                let k = assign_triangle(out_points, &warp.triangles, p);
                let [sx, sy] = maps[k].apply(p);
                *out = sample_bilinear(img, sx, sy);
            }
        });
    LuminanceImage::new(w, h, data)
}

/// Maps source-frame points into the template frame.
pub fn warp_points(warp: &PiecewiseAffineWarp, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|&p| warp.forward[assign_triangle(&warp.source_points, &warp.triangles, p)].apply(p))
        .collect()
}
