//! Ready-made rod states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geom::Vec3;
use crate::rod::{ClampingParams, RodDensities, RodState};
use crate::scalar::Real;
use crate::solver::reclose;

const CLOSE_TOL: f64 = 1e-12;

/// Planar circle of circumference `length` with an untwisted director
/// pointing at the centre.
pub fn circle<T: Real>(n: usize, length: T) -> RodState<T> {
    let k = T::TAU() / length;
    RodState::new(
        RodDensities::uniform(n, length, k, T::zero(), T::zero()).unwrap(),
        ClampingParams::standard(),
    )
    .unwrap()
}

/// Circle traversed twice.
pub fn doubled_circle<T: Real>(n: usize, length: T) -> RodState<T> {
    let k = T::two() * T::TAU() / length;
    RodState::new(
        RodDensities::uniform(n, length, k, T::zero(), T::zero()).unwrap(),
        ClampingParams::standard(),
    )
    .unwrap()
}

/// Circle whose director makes `turns` full turns about the midline.
pub fn twisted_circle<T: Real>(n: usize, length: T, turns: T) -> Result<RodState<T>> {
    let h = length / T::from_usize(n);
    let k = T::TAU() / length;
    let w = T::TAU() * turns / length;
    let phi = |i: usize| w * h * (T::from_usize(i) + T::half());
    let st = RodState::new(
        RodDensities::new(
            (0..n).map(|i| k * phi(i).cos()).collect(),
            (0..n).map(|i| -k * phi(i).sin()).collect(),
            vec![w; n],
            length,
        )?,
        ClampingParams::standard(),
    )?;
    reclose(&st, T::zero(), T::lit(CLOSE_TOL))
}

/// Circle with uniform relative noise of size `noise` on all three
/// densities, reclosed.
pub fn perturbed_circle<T: Real>(n: usize, length: T, noise: f64, seed: u64) -> Result<RodState<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = T::TAU() / length;
    let mut jitter = |base: T| base + k * T::lit(noise * rng.gen_range(-1.0..1.0));
    let k1 = (0..n).map(|_| jitter(k)).collect();
    let k2 = (0..n).map(|_| jitter(T::zero())).collect();
    let w = (0..n).map(|_| jitter(T::zero())).collect();
    let st = RodState::new(RodDensities::new(k1, k2, w, length)?, ClampingParams::standard())?;
    reclose(&st, T::zero(), T::lit(CLOSE_TOL))
}

/// Random smooth closed rod: a circle with a few random Fourier modes added
/// to every density and a random twist rate, reclosed.
pub fn random_closed_rod<T: Real>(n: usize, length: T, amplitude: f64, seed: u64) -> Result<RodState<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = T::TAU() / length;
    let h = length / T::from_usize(n);
    let modes = |rng: &mut ChaCha8Rng, base: T| -> Vec<T> {
        let coeffs: Vec<(f64, f64)> = (0..3)
            .map(|_| (amplitude * rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        (0..n)
            .map(|i| {
                let s = (T::from_usize(i) + T::half()) * h / length;
                let extra: T = coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, &(a, ph))| {
                        T::lit(a) * (T::TAU() * T::from_usize(m + 1) * s + T::lit(ph)).cos()
                    })
                    .sum();
                base + k * extra
            })
            .collect()
    };
    let k1 = modes(&mut rng, k);
    let k2 = modes(&mut rng, T::zero());
    let w0 = k * T::lit(rng.gen_range(-3.0..3.0));
    let w = modes(&mut rng, w0);
    let st = RodState::new(RodDensities::new(k1, k2, w, length)?, ClampingParams::standard())?;
    reclose(&st, T::zero(), T::lit(CLOSE_TOL))
}

/// Closed trefoil polyline `(sin t + 2 sin 2t, cos t - 2 cos 2t, -sin 3t)`
/// scaled by `scale`.
pub fn trefoil_template<T: Real>(k: usize, scale: T) -> Vec<Vec3<T>> {
    (0..k)
        .map(|i| {
            let t = T::TAU() * T::from_usize(i) / T::from_usize(k);
            let two = T::two();
            Vec3::new(
                t.sin() + two * (two * t).sin(),
                t.cos() - two * (two * t).cos(),
                -(T::lit(3.0) * t).sin(),
            ) * scale
        })
        .collect()
}
