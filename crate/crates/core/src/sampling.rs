//! Seeded random sampling used by the empirical checks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn unit_direction<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniform sample from the closed ball of the given radius.
pub(crate) fn in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    let u: f64 = rng.random();
    unit_direction(rng, dim) * (radius * u.powf(1.0 / dim as f64))
}
