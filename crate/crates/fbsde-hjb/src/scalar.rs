use num_traits::{Float, FromPrimitive};

/// Floating-point scalar for the numeric kernels: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` literals and grid coordinates.
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to any float scalar")
    }

    #[inline]
    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::from_f64_lossy(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
