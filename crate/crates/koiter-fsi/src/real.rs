//! Generic scalar abstraction for the numeric core.

use num_traits as nt;

/// Floating-point scalar usable throughout the geometry/shell/discrete core.
///
/// Bundles the arithmetic traits the kernels need plus FFT support. The
/// solver and I/O layers are `f64`-only; this trait exists so the tensor
/// algebra and spectral operators can be instantiated at `f32` as well.
pub trait Real:
    nt::Float
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::NumAssign
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
    + std::fmt::LowerExp
    + 'static
{
    /// Lossy conversion from `f64` (panics only for exotic scalar types).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in scalar type")
    }
    /// Conversion from a grid index or count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
