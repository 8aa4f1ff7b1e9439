//! Step one: global affine remap of the input photo fitted on the face region.

use serde::{Deserialize, Serialize};

use crate::error::{BlrError, Result};
use crate::image::{LuminanceImage, ScalarStats};
use crate::scalar::Scalar;

/// `v -> gain * v + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMap<T> {
    pub gain: T,
    pub offset: T,
}

impl<T: Scalar> LinearMap<T> {
    pub fn new(gain: T, offset: T) -> Self {
        Self { gain, offset }
    }

    pub fn identity() -> Self {
        Self {
            gain: T::one(),
            offset: T::zero(),
        }
    }

    #[inline]
    pub fn apply(&self, v: T) -> T {
        self.gain * v + self.offset
    }

    pub fn inverse(&self) -> Self {
        Self {
            gain: T::one() / self.gain,
            offset: -self.offset / self.gain,
        }
    }

    /// `self ∘ inner`
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            gain: self.gain * inner.gain,
            offset: self.gain * inner.offset + self.offset,
        }
    }
}

impl<T: Scalar> Default for LinearMap<T> {
    fn default() -> Self {
        Self::identity()
    }
}

/// Fits the map that gives the input face region the training face mean and standard deviation.
pub fn fit_input_map<T: Scalar>(
    input_face: &ScalarStats<T>,
    training_face: &ScalarStats<T>,
) -> Result<LinearMap<T>> {
    if !(input_face.variance > T::zero()) {
        return Err(BlrError::Degenerate(
            "input face region has zero variance".into(),
        ));
    }
    if training_face.variance < T::zero() {
        return Err(BlrError::InvalidParameter(
            "negative training variance".into(),
        ));
    }
    let gain = training_face.std_dev() / input_face.std_dev();
    let offset = training_face.mean - gain * input_face.mean;
    Ok(LinearMap { gain, offset })
}

/// Applies the map to every pixel without clamping.
pub fn apply_map<T: Scalar>(img: &LuminanceImage<T>, map: &LinearMap<T>) -> LuminanceImage<T> {
    img.map(|v| map.apply(v))
}
