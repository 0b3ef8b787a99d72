//! Seeded sampling helpers shared by the checks and the tests.
//!
//! Every stream is a `ChaCha8Rng`; independent streams for parallel work are
//! derived from one seed with [`stream_rng`], so results do not depend on
//! thread scheduling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abelian::{LatticeVector, PeriodData};
use crate::ball::{point_at_level, BundlePoint, DeckElement, UpstairsPoint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn complex_in_box<R: Rng>(rng: &mut R, half_width: f64) -> Complex64 {
    Complex64::new(
        rng.gen_range(-half_width..half_width),
        rng.gen_range(-half_width..half_width),
    )
}

/// A base point with real lattice coordinates uniform in `[-spread, spread)`.
pub fn random_base_point<R: Rng>(rng: &mut R, pd: &PeriodData, spread: f64) -> Vec<Complex64> {
    let coeffs: Vec<f64> = (0..2 * pd.n()).map(|_| rng.gen_range(-spread..spread)).collect();
    pd.from_lattice_coords(&coeffs)
}

pub fn random_upstairs<R: Rng>(rng: &mut R, n: usize, half_width: f64) -> UpstairsPoint {
    let u = complex_in_box(rng, half_width);
    UpstairsPoint::new(u, (0..n).map(|_| complex_in_box(rng, half_width)).collect())
}

/// Level uniform in `[lo, hi)`.
pub fn uniform_level<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Negative level with `log(-level)` uniform, for `lo < hi < 0`.
pub fn log_uniform_level<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi && hi < 0.0, "need lo < hi < 0");
    -rng.gen_range((-hi).ln()..(-lo).ln()).exp()
}

/// A bundle point over a random base point with the given level and a
/// random fiber argument.
pub fn random_bundle_point<R: Rng>(rng: &mut R, pd: &PeriodData, level: f64, spread: f64) -> BundlePoint {
    let z = random_base_point(rng, pd, spread);
    let theta = rng.gen_range(-PI..PI);
    point_at_level(pd, &z, level, theta)
}

pub fn random_lattice_vector<R: Rng>(rng: &mut R, n: usize, bound: i64) -> LatticeVector {
    LatticeVector::new((0..2 * n).map(|_| rng.gen_range(-bound..=bound)).collect())
}

pub fn random_deck_element<R: Rng>(rng: &mut R, n: usize, bound: i64) -> DeckElement {
    let mut v = || (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>();
    let m = v();
    let l = v();
    DeckElement::new(m, l, rng.gen_range(-bound..=bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 1).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream_rng(7, 1).gen()).collect();
        assert_eq!(a, b);
        let x: u64 = stream_rng(7, 1).gen();
        let y: u64 = stream_rng(7, 2).gen();
        assert_ne!(x, y);
    }

    #[test]
    fn log_uniform_stays_in_range() {
        let mut r = rng(3);
        for _ in 0..1000 {
            let l = log_uniform_level(&mut r, -1e6, -2.0);
            assert!((-1e6..=-2.0).contains(&l));
        }
    }

    #[test]
    fn bundle_point_has_requested_level() {
        let pd = PeriodData::square_torus();
        let mut r = rng(5);
        for _ in 0..20 {
            let b = random_bundle_point(&mut r, &pd, -7.5, 2.0);
            assert!((crate::ball::bundle_level(&pd, &b) + 7.5).abs() < 1e-12);
        }
    }
}
