//! Facial landmark sets, their text format, and the landmark-hull face region.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BlrError, Result};
use crate::image::RegionMask;

/// Number of points in the standard facial landmark layout.
pub const STANDARD_LANDMARK_COUNT: usize = 68;

/// Midline indices of the 68-point layout: chin tip and nose bridge.
pub const MIDLINE_INDICES_68: [usize; 5] = [8, 27, 28, 29, 30];

/// Ordered landmark positions in pixel coordinates. Pixel `(i, j)` sits at `(i, j)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parses one `x y` pair per line. Blank lines are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut coord = || -> std::result::Result<f64, String> {
                let f = fields
                    .next()
                    .ok_or_else(|| format!("line {}: expected two coordinates", lineno + 1))?;
                let v: f64 = f
                    .parse()
                    .map_err(|_| format!("line {}: bad coordinate {f:?}", lineno + 1))?;
                if !v.is_finite() {
                    return Err(format!("line {}: non-finite coordinate", lineno + 1));
                }
                Ok(v)
            };
            let x = coord()?;
            let y = coord()?;
            if fields.next().is_some() {
                return Err(format!("line {}: trailing fields", lineno + 1));
            }
            points.push([x, y]);
        }
        Ok(Self { points })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BlrError::io(path, e))?;
        Self::parse(&text).map_err(|m| BlrError::parse(path, m))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for [x, y] in &self.points {
            let _ = writeln!(s, "{x} {y}");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| BlrError::io(path, e))
    }

    /// Checks every point lies inside a `width`×`height` frame.
    pub fn validate_bounds(&self, width: usize, height: usize) -> std::result::Result<(), String> {
        for (i, [x, y]) in self.points.iter().enumerate() {
            if *x < 0.0 || *y < 0.0 || *x > (width - 1) as f64 || *y > (height - 1) as f64 {
                return Err(format!(
                    "landmark {i} at ({x}, {y}) outside {width}x{height} frame"
                ));
            }
        }
        Ok(())
    }

    /// Mean x of the landmarks on the facial midline.
    pub fn midline_x(&self) -> Result<f64> {
        if self.points.is_empty() {
            return Err(BlrError::Degenerate("no landmarks".into()));
        }
        let xs: Vec<f64> = if self.points.len() == STANDARD_LANDMARK_COUNT {
            MIDLINE_INDICES_68
                .iter()
                .map(|&i| self.points[i][0])
                .collect()
        } else {
            self.points.iter().map(|p| p[0]).collect()
        };
        Ok(xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|[x, y]| [x + dx, y + dy]).collect(),
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull in counter-clockwise order (y axis down, so clockwise on screen).
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub(crate) fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Filled convex hull of the landmarks, clipped to the frame. Boundary pixels are inside.
pub fn face_mask(landmarks: &LandmarkSet, width: usize, height: usize) -> Result<RegionMask> {
    let hull = convex_hull(&landmarks.points);
    if hull.len() < 3 || polygon_area(&hull) < 1e-9 {
        return Err(BlrError::Degenerate(
            "landmarks are collinear or fewer than three".into(),
        ));
    }
    let (min_x, max_x, min_y, max_y) = hull.iter().fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), p| (a.min(p[0]), b.max(p[0]), c.min(p[1]), d.max(p[1])),
    );
    let x0 = min_x.ceil().max(0.0) as usize;
    let y0 = min_y.ceil().max(0.0) as usize;
    let x1 = (max_x.floor() as isize).min(width as isize - 1);
    let y1 = (max_y.floor() as isize).min(height as isize - 1);
    let mut mask = RegionMask::empty(width, height);
    if x1 < 0 || y1 < 0 {
        return Ok(mask);
    }
    const EPS: f64 = 1e-9;
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let p = [x as f64, y as f64];
            let inside = (0..hull.len()).all(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                cross(a, b, p) >= -EPS * len
            });
            if inside {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}
