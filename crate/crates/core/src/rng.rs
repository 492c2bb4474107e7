//! Random streams and the two draws every exact simulator in the crate uses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// Generator used for every replicate.
pub type SimRng = ChaCha8Rng;

/// Independent stream `stream` of the family keyed by `master_seed`.
///
/// ChaCha's 64-bit stream parameter makes the streams non-overlapping, so
/// replicate `i` sees the same numbers regardless of scheduling.
pub fn replicate_rng(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on `(0, 1]`.
#[inline]
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Uniform on `[0, 1)` in the scalar type.
#[inline]
pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

/// Exponential waiting time by inverse CDF: `-ln(U) / rate`, `U` in `(0, 1]`.
#[inline]
pub fn exp_waiting<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rate: T) -> T {
    -T::lit(open_uniform(rng)).ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| replicate_rng(7, 3).random()).collect();
        let mut r1 = replicate_rng(7, 3);
        let mut r2 = replicate_rng(7, 4);
        let x: u64 = r1.random();
        let y: u64 = r2.random();
        assert_eq!(a[0], x);
        assert_ne!(x, y);
    }

    #[test]
    fn exponential_mean() {
        let mut rng = replicate_rng(1, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| exp_waiting(&mut rng, 2.0f64)).sum::<f64>() / n as f64;
        // sd of the mean is 0.5 / sqrt(n)
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }
}
