//! Scalar abstraction for the numeric core.
//!
//! The trust formulas and the neural network are written against a single
//! [`Scalar`] trait so the same code runs in `f32` or `f64`. The pipeline
//! modules (datasets, evaluation, simulation) fix the scalar to `f64`; the
//! crate root re-exports concrete aliases for the common case.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the numeric core.
///
/// This is a thin umbrella over the `num-traits` hierarchy plus the bounds
/// the crate needs for diagnostics and serialization. Constants are pulled
/// in through `num_traits::NumCast`, e.g. `F::from(0.5).unwrap()`, which is
/// lossless for every literal the crate uses.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and RNG draws.
    fn from_f64_lossy(value: f64) -> Self {
        // Every scalar admitted here can represent all finite f64 magnitudes
        // encountered in practice (possibly with rounding), so the cast
        // cannot fail for finite inputs.
        <Self as FromPrimitive>::from_f64(value).expect("finite f64 converts into Scalar")
    }

    /// Lossless widening into `f64` for reporting.
    fn into_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts into f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
