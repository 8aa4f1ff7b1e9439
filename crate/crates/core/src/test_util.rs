use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::LuminanceImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> LuminanceImage<f64> {
    LuminanceImage::from_fn(w, h, |_, _| r.random::<f64>())
}
