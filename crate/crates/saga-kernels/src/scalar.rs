use std::fmt::{Debug, Display};
use std::iter::Sum;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Floating element type of every matrix in this crate.
///
/// Implemented for `f32` and `f64`. The associated constants carry the
/// per-precision defaults used by rank analysis and by the row-softmax
/// normalization tests.
pub trait Scalar:
    num_traits::Float + Sum + Send + Sync + Debug + Display + 'static
{
    /// Relative singular-value threshold used by default for numerical rank.
    const RANK_REL_TOL: Self;
    /// Tolerance within which softmax rows must sum to one.
    const SOFTMAX_SUM_TOL: Self;
    /// Short name for reports ("f32" / "f64").
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn sample_uniform<R: Rng>(rng: &mut R, lo: Self, hi: Self) -> Self;
    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self;
}

impl Scalar for f32 {
    const RANK_REL_TOL: Self = 1e-5;
    const SOFTMAX_SUM_TOL: Self = 1e-6;
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn sample_uniform<R: Rng>(rng: &mut R, lo: Self, hi: Self) -> Self {
        Uniform::new_inclusive(lo, hi).sample(rng)
    }

    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    const RANK_REL_TOL: Self = 1e-8;
    const SOFTMAX_SUM_TOL: Self = 1e-12;
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn sample_uniform<R: Rng>(rng: &mut R, lo: Self, hi: Self) -> Self {
        Uniform::new_inclusive(lo, hi).sample(rng)
    }

    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
