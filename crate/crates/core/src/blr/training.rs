//! Step two: one affine map on the training backgrounds, solved from pooled
//! moments of the `P = α·y_p`, `N = (1-α)·y_n`, `A = 1-α` images, then applied
//! by recompositing each training photo.

use serde::{Deserialize, Serialize};

use crate::blr::input::LinearMap;
use crate::error::{BlrError, Result};
use crate::image::{
    ensure_same_dims, pna_images, pooled_covariance, pooled_image_stats, LayeredPhoto,
    LuminanceImage, PnaImages, ScalarStats,
};
use crate::scalar::Scalar;

/// Pooled population moments of the P, N and A images of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary<T> {
    pub mu_p: T,
    pub mu_n: T,
    pub mu_a: T,
    pub var_p: T,
    pub var_n: T,
    pub var_a: T,
    pub cov_pn: T,
    pub cov_pa: T,
    pub cov_na: T,
    pub pixel_count: usize,
}

impl<T: Scalar> MomentSummary<T> {
    /// Mean of `P + a·N + b·A`.
    pub fn composed_mean(&self, map: &LinearMap<T>) -> T {
        self.mu_p + map.gain * self.mu_n + map.offset * self.mu_a
    }

    /// Variance of `P + a·N + b·A` from the six-term expansion.
    pub fn composed_variance(&self, map: &LinearMap<T>) -> T {
        let (a, b) = (map.gain, map.offset);
        let two = T::two();
        self.var_p
            + a * a * self.var_n
            + b * b * self.var_a
            + two * a * self.cov_pn
            + two * b * self.cov_pa
            + two * a * b * self.cov_na
    }
}

/// Which system the background map is solved from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Offset added to the whole photo; closed-form `+√` root.
    Approximate,
    /// Offset scaled by `1-α`; quadratic in the gain, smallest `|offset|` positive root.
    Exact,
}

impl std::str::FromStr for SolveMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "approx" | "approximate" => Ok(SolveMode::Approximate),
            "exact" => Ok(SolveMode::Exact),
            other => Err(format!(
                "unknown solve mode {other:?} (expected approx or exact)"
            )),
        }
    }
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMode::Approximate => "approx",
            SolveMode::Exact => "exact",
        })
    }
}

/// Conditions met while solving, none of which abort the solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveFlags {
    /// Background has zero variance; gain fixed to 1 and only the offset solved.
    pub degenerate_background: bool,
    /// Target variance is below what any gain reaches; discriminant clamped to 0.
    pub variance_infeasible: bool,
    /// Exact mode had no positive root and fell back to the approximate solve.
    pub exact_fallback: bool,
    /// The selected gain is not positive.
    pub nonpositive_gain: bool,
}

impl SolveFlags {
    /// True when the selected mode met its own equations with a positive gain.
    pub fn feasible(&self) -> bool {
        !(self.variance_infeasible || self.exact_fallback || self.nonpositive_gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSolution<T> {
    pub map: LinearMap<T>,
    pub mode: SolveMode,
    pub flags: SolveFlags,
}

/// Pooled P/N/A moments of a training set. All photos must share dimensions.
pub fn summarize_training<T: Scalar>(photos: &[LayeredPhoto<T>]) -> Result<MomentSummary<T>> {
    let pna = photos.iter().map(pna_images).collect::<Result<Vec<_>>>()?;
    summarize_pna(&pna)
}

pub fn summarize_pna<T: Scalar>(pna: &[PnaImages<T>]) -> Result<MomentSummary<T>> {
    let first = pna.first().ok_or(BlrError::EmptyInput("training photos"))?;
    let dims = first.portrait.dims();
    for item in pna {
        ensure_same_dims(dims, item.portrait.dims())?;
        ensure_same_dims(dims, item.background.dims())?;
        ensure_same_dims(dims, item.inverse_alpha.dims())?;
    }
    let p: Vec<LuminanceImage<T>> = pna.iter().map(|x| x.portrait.clone()).collect();
    let n: Vec<LuminanceImage<T>> = pna.iter().map(|x| x.background.clone()).collect();
    let a: Vec<LuminanceImage<T>> = pna.iter().map(|x| x.inverse_alpha.clone()).collect();
    let sp = pooled_image_stats(&p)?;
    let sn = pooled_image_stats(&n)?;
    let sa = pooled_image_stats(&a)?;
    Ok(MomentSummary {
        mu_p: sp.mean,
        mu_n: sn.mean,
        mu_a: sa.mean,
        var_p: sp.variance,
        var_n: sn.variance,
        var_a: sa.variance,
        cov_pn: pooled_covariance(&p, &n)?,
        cov_pa: pooled_covariance(&p, &a)?,
        cov_na: pooled_covariance(&n, &a)?,
        pixel_count: sp.count,
    })
}

/// Solves the background map that gives the recomposed training set the target
/// mean and variance.
pub fn solve_background_map<T: Scalar>(
    moments: &MomentSummary<T>,
    target: &ScalarStats<T>,
    mode: SolveMode,
) -> Result<BackgroundSolution<T>> {
    if target.variance < T::zero() || !target.variance.is_finite() || !target.mean.is_finite() {
        return Err(BlrError::InvalidParameter(format!(
            "target variance {} invalid",
            target.variance
        )));
    }
    match mode {
        SolveMode::Approximate => Ok(solve_approximate(moments, target)),
        SolveMode::Exact => Ok(solve_exact(moments, target)),
    }
}

fn finish<T: Scalar>(
    map: LinearMap<T>,
    mode: SolveMode,
    mut flags: SolveFlags,
) -> BackgroundSolution<T> {
    flags.nonpositive_gain = !(map.gain > T::zero());
    BackgroundSolution { map, mode, flags }
}

fn solve_approximate<T: Scalar>(
    m: &MomentSummary<T>,
    target: &ScalarStats<T>,
) -> BackgroundSolution<T> {
    let mut flags = SolveFlags::default();
    if !(m.var_n > T::zero()) {
        flags.degenerate_background = true;
        let gain = T::one();
        let map = LinearMap::new(gain, target.mean - m.mu_p - gain * m.mu_n);
        return finish(map, SolveMode::Approximate, flags);
    }
    let mut disc = m.cov_pn * m.cov_pn - m.var_n * m.var_p + m.var_n * target.variance;
    if disc < T::zero() {
        flags.variance_infeasible = true;
        disc = T::zero();
    }
    let gain = (-m.cov_pn + disc.sqrt()) / m.var_n;
    let offset = target.mean - m.mu_p - gain * m.mu_n;
    finish(LinearMap::new(gain, offset), SolveMode::Approximate, flags)
}

/// Real roots of `qa·x² + qb·x + qc = 0`, using the cancellation-free form.
/// Returns `None` for a negative discriminant.
fn quadratic_roots<T: Scalar>(qa: T, qb: T, qc: T) -> Option<Vec<T>> {
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if scale == T::zero() {
        return Some(Vec::new());
    }
    let eps = T::epsilon() * T::lit(64.0);
    if qa.abs() <= eps * scale {
        if qb.abs() <= eps * scale {
            return Some(Vec::new());
        }
        return Some(vec![-qc / qb]);
    }
    let disc = qb * qb - T::lit(4.0) * qa * qc;
    if disc < T::zero() {
        return None;
    }
    let sign = if qb < T::zero() { -T::one() } else { T::one() };
    let q = -T::half() * (qb + sign * disc.sqrt());
    if q == T::zero() {
        return Some(vec![T::zero()]);
    }
    Some(vec![q / qa, qc / q])
}

fn solve_exact<T: Scalar>(m: &MomentSummary<T>, target: &ScalarStats<T>) -> BackgroundSolution<T> {
    let mut flags = SolveFlags::default();
    if !(m.mu_a > T::zero()) {
        // No background pixels at all: nothing to remap.
        flags.degenerate_background = true;
        return finish(LinearMap::identity(), SolveMode::Exact, flags);
    }
    // Mean equation gives offset = c0 - c1·gain.
    let c0 = (target.mean - m.mu_p) / m.mu_a;
    let c1 = m.mu_n / m.mu_a;
    if !(m.var_n > T::zero()) {
        flags.degenerate_background = true;
        let map = LinearMap::new(T::one(), c0 - c1);
        return finish(map, SolveMode::Exact, flags);
    }
    let two = T::two();
    let qa = m.var_n + c1 * c1 * m.var_a - two * c1 * m.cov_na;
    let qb = two * m.cov_pn - two * c0 * c1 * m.var_a - two * c1 * m.cov_pa + two * c0 * m.cov_na;
    let qc = m.var_p + c0 * c0 * m.var_a + two * c0 * m.cov_pa - target.variance;
    let best = quadratic_roots(qa, qb, qc).and_then(|roots| {
        roots
            .into_iter()
            .filter(|&g| g > T::zero() && g.is_finite())
            .map(|g| LinearMap::new(g, c0 - c1 * g))
            .min_by(|x, y| {
                x.offset
                    .abs()
                    .partial_cmp(&y.offset.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    match best {
        Some(map) => finish(map, SolveMode::Exact, flags),
        None => {
            let mut fallback = solve_approximate(m, target);
            fallback.flags.exact_fallback = true;
            fallback
        }
    }
}

/// Recomposes with only the background remapped:
/// `α·y_p + (1-α)·(gain·y_n + offset)`.
pub fn recompose_training<T: Scalar>(
    photo: &LayeredPhoto<T>,
    map: &LinearMap<T>,
) -> Result<LuminanceImage<T>> {
    let layers = photo.layers()?;
    let alpha = layers.alpha.as_image();
    ensure_same_dims(layers.portrait.dims(), layers.background.dims())?;
    ensure_same_dims(layers.portrait.dims(), alpha.dims())?;
    let data = layers
        .portrait
        .data()
        .iter()
        .zip(layers.background.data())
        .zip(alpha.data())
        .map(|((&p, &n), &a)| {
            if a == T::one() {
                p
            } else {
                a * p + (T::one() - a) * map.apply(n)
            }
        })
        .collect();
    LuminanceImage::new(layers.portrait.width(), layers.portrait.height(), data)
}

/// Same composition from precomputed carriers: `P + gain·N + offset·A`.
pub fn recompose_pna<T: Scalar>(
    pna: &PnaImages<T>,
    map: &LinearMap<T>,
) -> Result<LuminanceImage<T>> {
    ensure_same_dims(pna.portrait.dims(), pna.background.dims())?;
    ensure_same_dims(pna.portrait.dims(), pna.inverse_alpha.dims())?;
    let data = pna
        .portrait
        .data()
        .iter()
        .zip(pna.background.data())
        .zip(pna.inverse_alpha.data())
        .map(|((&p, &n), &a)| {
            if a == T::zero() {
                p
            } else {
                p + map.gain * n + map.offset * a
            }
        })
        .collect();
    LuminanceImage::new(pna.portrait.width(), pna.portrait.height(), data)
}
