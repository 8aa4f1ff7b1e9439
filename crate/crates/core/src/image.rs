//! Luminance rasters, region masks, population statistics and alpha compositing.
//!
//! All statistics are population moments (normalized by `N`). Remapped values are
//! never clamped here; clamping happens only when encoding to 8-bit.

use serde::{Deserialize, Serialize};

use crate::error::{BlrError, Result};
use crate::landmarks::LandmarkSet;
use crate::scalar::Scalar;

/// Single-channel row-major raster. Decoded values lie in `[0, 1]`; remapped values may not.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> LuminanceImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(BlrError::BadRasterLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    /// Copies the `size`×`size` block whose top-left corner is `(x0, y0)` into `out`.
    pub fn patch_into(&self, x0: usize, y0: usize, size: usize, out: &mut Vec<T>) {
        out.clear();
        for y in y0..y0 + size {
            let row = y * self.width;
            out.extend_from_slice(&self.data[row + x0..row + x0 + size]);
        }
    }

    pub fn cast<U: Scalar>(&self) -> LuminanceImage<U> {
        LuminanceImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(BlrError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Soft foreground opacity, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte<T>(LuminanceImage<T>);

impl<T: Scalar> AlphaMatte<T> {
    pub fn new(image: LuminanceImage<T>) -> Result<Self> {
        if let Some(v) = image
            .data()
            .iter()
            .find(|v| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(BlrError::InvalidParameter(format!(
                "alpha value {v} outside [0, 1]"
            )));
        }
        Ok(Self(image))
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(LuminanceImage::filled(width, height, value))
    }

    pub fn as_image(&self) -> &LuminanceImage<T> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.0.get(x, y)
    }
}

/// Boolean pixel membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(BlrError::BadRasterLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }
}

/// Population mean and variance of a pixel sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats<T> {
    pub mean: T,
    pub variance: T,
    pub count: usize,
}

impl<T: Scalar> ScalarStats<T> {
    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }

    fn from_samples<'a>(samples: impl Iterator<Item = &'a T> + Clone, count: usize) -> Self {
        let n = T::from_count(count);
        let rough = samples.clone().copied().sum::<T>() / n;
        // Corrected two-pass: the residual sum removes the rounding left in `rough`.
        let (resid, sq) = samples.fold((T::zero(), T::zero()), |(r, s), &v| {
            let d = v - rough;
            (r + d, s + d * d)
        });
        let mean = rough + resid / n;
        let variance = ((sq - resid * resid / n) / n).max(T::zero());
        Self {
            mean,
            variance,
            count,
        }
    }
}

/// BT.601 luma of three channel planes.
pub fn luma_convert<T: Scalar>(
    red: &LuminanceImage<T>,
    green: &LuminanceImage<T>,
    blue: &LuminanceImage<T>,
) -> Result<LuminanceImage<T>> {
    ensure_same_dims(red.dims(), green.dims())?;
    ensure_same_dims(red.dims(), blue.dims())?;
    let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    let data = red
        .data()
        .iter()
        .zip(green.data())
        .zip(blue.data())
        .map(|((&r, &g), &b)| wr * r + wg * g + wb * b)
        .collect();
    LuminanceImage::new(red.width(), red.height(), data)
}

pub fn masked_stats<T: Scalar>(
    img: &LuminanceImage<T>,
    mask: &RegionMask,
) -> Result<ScalarStats<T>> {
    pooled_stats(std::slice::from_ref(img), std::slice::from_ref(mask))
}

/// Whole-image statistics.
pub fn image_stats<T: Scalar>(img: &LuminanceImage<T>) -> ScalarStats<T> {
    ScalarStats::from_samples(img.data().iter(), img.data().len())
}

/// Statistics of all masked pixels of all images taken as a single sample.
pub fn pooled_stats<T: Scalar>(
    imgs: &[LuminanceImage<T>],
    masks: &[RegionMask],
) -> Result<ScalarStats<T>> {
    if imgs.is_empty() {
        return Err(BlrError::EmptyInput("images"));
    }
    if imgs.len() != masks.len() {
        return Err(BlrError::InvalidParameter(format!(
            "{} images but {} masks",
            imgs.len(),
            masks.len()
        )));
    }
    for (img, mask) in imgs.iter().zip(masks) {
        ensure_same_dims(img.dims(), mask.dims())?;
    }
    let count: usize = masks.iter().map(RegionMask::count).sum();
    if count == 0 {
        return Err(BlrError::EmptyMask);
    }
    let samples = imgs.iter().zip(masks).flat_map(|(img, mask)| {
        img.data()
            .iter()
            .zip(mask.data())
            .filter_map(|(v, &m)| m.then_some(v))
    });
    Ok(ScalarStats::from_samples(samples, count))
}

/// Whole-image statistics pooled across a set of equally weighted pixels.
pub fn pooled_image_stats<T: Scalar>(imgs: &[LuminanceImage<T>]) -> Result<ScalarStats<T>> {
    if imgs.is_empty() {
        return Err(BlrError::EmptyInput("images"));
    }
    let count = imgs.iter().map(|i| i.data().len()).sum();
    if count == 0 {
        return Err(BlrError::EmptyMask);
    }
    Ok(ScalarStats::from_samples(
        imgs.iter().flat_map(|i| i.data().iter()),
        count,
    ))
}

/// Population covariance over all pixels.
pub fn covariance<T: Scalar>(a: &LuminanceImage<T>, b: &LuminanceImage<T>) -> Result<T> {
    pooled_covariance(std::slice::from_ref(a), std::slice::from_ref(b))
}

/// Covariance with pixel pairs pooled across a photo set (image `i` of `a` pairs with image `i` of `b`).
pub fn pooled_covariance<T: Scalar>(a: &[LuminanceImage<T>], b: &[LuminanceImage<T>]) -> Result<T> {
    if a.is_empty() {
        return Err(BlrError::EmptyInput("images"));
    }
    if a.len() != b.len() {
        return Err(BlrError::InvalidParameter(format!(
            "{} images paired with {}",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        ensure_same_dims(x.dims(), y.dims())?;
    }
    let mean_a = pooled_image_stats(a)?.mean;
    let mean_b = pooled_image_stats(b)?.mean;
    let count: usize = a.iter().map(|i| i.data().len()).sum();
    let sum: T = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()))
        .map(|(&u, &v)| (u - mean_a) * (v - mean_b))
        .sum();
    Ok(sum / T::from_count(count))
}

/// `alpha * portrait + (1 - alpha) * background`.
pub fn compose<T: Scalar>(
    portrait: &LuminanceImage<T>,
    background: &LuminanceImage<T>,
    alpha: &AlphaMatte<T>,
) -> Result<LuminanceImage<T>> {
    ensure_same_dims(portrait.dims(), background.dims())?;
    ensure_same_dims(portrait.dims(), alpha.dims())?;
    let data = portrait
        .data()
        .iter()
        .zip(background.data())
        .zip(alpha.as_image().data())
        .map(|((&p, &n), &a)| a * p + (T::one() - a) * n)
        .collect();
    LuminanceImage::new(portrait.width(), portrait.height(), data)
}

/// Matting decomposition of a training photo.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotoLayers<T> {
    pub portrait: LuminanceImage<T>,
    pub background: LuminanceImage<T>,
    pub alpha: AlphaMatte<T>,
}

/// A photo together with its optional matting layers, landmarks and paired sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredPhoto<T> {
    pub composite: LuminanceImage<T>,
    pub layers: Option<PhotoLayers<T>>,
    pub landmarks: LandmarkSet,
    pub sketch: Option<LuminanceImage<T>>,
}

impl<T: Scalar> LayeredPhoto<T> {
    /// Builds the photo by compositing its layers.
    pub fn from_layers(
        portrait: LuminanceImage<T>,
        background: LuminanceImage<T>,
        alpha: AlphaMatte<T>,
        landmarks: LandmarkSet,
    ) -> Result<Self> {
        let composite = compose(&portrait, &background, &alpha)?;
        Ok(Self {
            composite,
            layers: Some(PhotoLayers {
                portrait,
                background,
                alpha,
            }),
            landmarks,
            sketch: None,
        })
    }

    /// Uses the composite as both portrait and background layer. Exact wherever
    /// alpha is 0 or 1.
    pub fn with_composite_layers(
        composite: LuminanceImage<T>,
        alpha: AlphaMatte<T>,
        landmarks: LandmarkSet,
    ) -> Result<Self> {
        ensure_same_dims(composite.dims(), alpha.dims())?;
        Ok(Self {
            layers: Some(PhotoLayers {
                portrait: composite.clone(),
                background: composite.clone(),
                alpha,
            }),
            composite,
            landmarks,
            sketch: None,
        })
    }

    pub fn with_sketch(mut self, sketch: LuminanceImage<T>) -> Self {
        self.sketch = Some(sketch);
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.composite.dims()
    }

    pub fn layers(&self) -> Result<&PhotoLayers<T>> {
        self.layers.as_ref().ok_or(BlrError::MissingLayers)
    }
}

/// The moment carriers of the background solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PnaImages<T> {
    /// `alpha * portrait`
    pub portrait: LuminanceImage<T>,
    /// `(1 - alpha) * background`
    pub background: LuminanceImage<T>,
    /// `1 - alpha`
    pub inverse_alpha: LuminanceImage<T>,
}

pub fn pna_images<T: Scalar>(photo: &LayeredPhoto<T>) -> Result<PnaImages<T>> {
    let layers = photo.layers()?;
    let alpha = layers.alpha.as_image();
    let portrait = layers.portrait.zip_map(alpha, |p, a| a * p)?;
    let background = layers
        .background
        .zip_map(alpha, |n, a| (T::one() - a) * n)?;
    let inverse_alpha = alpha.map(|a| T::one() - a);
    Ok(PnaImages {
        portrait,
        background,
        inverse_alpha,
    })
}
