//! Spatially regularized correlation filter tracking, solved directly in the
//! Fourier domain.
//!
//! The filter for each feature channel is the solution of a real symmetric
//! positive definite system `(diag(|x̂|²) + RᵀR) f̂ₚ = x̂* ⊙ P(ŷ)`, where `RᵀR`
//! is the sparse block-circulant operator obtained from the spectrum of the
//! spatial penalty `w`. The first frame is solved exactly with a sparse
//! Cholesky factorization; later frames fold the new sample into the running
//! normal equations and refine the previous filter with a few Gauss-Seidel
//! sweeps. Detection is a single inverse FFT of `Σ x̂ ⊙ f̂ₚ`, searched over a
//! pool of scales and refined to sub-bin accuracy with Newton iterations on
//! the trigonometric interpolant of the response.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`, see
//! [`Scalar`]); the aliases below fix the common choices.

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod regularizer;
pub mod solver;
pub mod spectral;
pub mod tracker;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

pub use rustfft::num_complex::Complex;

pub use error::{Error, Result};

/// Real scalar the numerical core is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FftNum
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; every supported scalar can represent it.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    /// Conversion to `f64`.
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type RealPlane<T> = spectral::Plane<T>;
pub type ComplexPlane<T> = spectral::Plane<Complex<T>>;

pub type RealPlane64 = RealPlane<f64>;
pub type ComplexPlane64 = ComplexPlane<f64>;
pub type RealPlane32 = RealPlane<f32>;
pub type ComplexPlane32 = ComplexPlane<f32>;

pub type Regularizer64 = regularizer::Regularizer<f64>;
pub type FilterModel64 = solver::FilterModel<f64>;

/// Double precision tracker, used by the CLI and the benchmark tools.
pub type Tracker = tracker::FsrdcfTracker<f64>;
/// Single precision tracker.
pub type TrackerF32 = tracker::FsrdcfTracker<f32>;

pub use eval::BBox;
pub use spectral::Grid2;
