//! Scalar abstraction: all math in this crate is generic over [`Real`],
//! implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
///
/// Besides the usual float operations the trait carries the two sampling
/// hooks the crate needs, so callers never have to thread `rand` trait
/// bounds through generic code.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Short name recorded in manifests ("f32" / "f64").
    const NAME: &'static str;

    /// One draw from N(0, 1).
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self;

    /// One draw from Uniform(lo, hi).
    fn uniform_in<G: Rng + ?Sized>(rng: &mut G, lo: Self, hi: Self) -> Self;

    /// Bit pattern widened to u64, for hashing parameter sets.
    fn to_bits_u64(self) -> u64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn uniform_in<G: Rng + ?Sized>(rng: &mut G, lo: Self, hi: Self) -> Self {
        rng.random_range(lo..hi)
    }

    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn uniform_in<G: Rng + ?Sized>(rng: &mut G, lo: Self, hi: Self) -> Self {
        rng.random_range(lo..hi)
    }

    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

/// Convert an `f64` literal into the scalar type.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("literal not representable in scalar type")
}

/// Lossy view of a scalar as `f64`, for reporting and statistics.
#[inline]
pub fn as_f64<R: Real>(x: R) -> f64 {
    x.to_f64().expect("scalar not representable as f64")
}

/// RNG stand-in for code paths that are contractually deterministic (eval
/// mode never draws); any actual draw yields zeros rather than entropy.
pub struct NullRng;

impl rand::RngCore for NullRng {
    fn next_u32(&mut self) -> u32 {
        0
    }

    fn next_u64(&mut self) -> u64 {
        0
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        dest.fill(0);
    }
}

/// FNV-1a over the bit patterns of a parameter stream.
///
/// Used to detect any mutation of a parameter set between two points in time.
pub fn hash_bits<R: Real>(values: impl IntoIterator<Item = R>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        let bits = v.to_bits_u64();
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: f64 = f64::uniform_in(&mut rng, -0.25, 0.5);
            assert!((-0.25..0.5).contains(&x));
        }
    }

    #[test]
    fn hash_changes_with_any_bit() {
        let a = hash_bits([1.0f64, 2.0, 3.0]);
        let b = hash_bits([1.0f64, 2.0, 3.0 + f64::EPSILON * 2.0]);
        assert_ne!(a, b);
        assert_eq!(a, hash_bits([1.0f64, 2.0, 3.0]));
    }
}
