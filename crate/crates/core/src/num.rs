//! Scalar abstraction shared by every numerical module.
//!
//! All algorithms are written against [`Real`], which is implemented for
//! `f32` and `f64`. The FFT backend is reached through [`Spectral`] so that
//! generic code never sees the `Signed` bound of the FFT crates (whose
//! `abs`/`signum` would otherwise clash with [`Float`]'s).

use std::fmt::{Debug, Display};
use std::iter::{Product, Sum};
use std::sync::Arc;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use realfft::{ComplexToReal, FftNum, RealFftPlanner, RealToComplex};

/// Floating point scalar used throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Product
    + Send
    + Sync
    + Spectral
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Sum
        + Product
        + Send
        + Sync
        + Spectral
        + 'static
{
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into the working scalar.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy view of a scalar as `f64`, for reports and CSV output.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Scalars with a real-to-complex FFT backend.
pub trait Spectral: Sized + Copy {
    type Engine: FftEngine<Self>;

    /// Builds (or fetches) a transform pair of length `len`.
    fn engine(len: usize) -> Self::Engine;
}

/// Forward/inverse real FFT of a fixed length.
///
/// The inverse is unnormalized; callers divide by `len()`.
#[allow(clippy::len_without_is_empty)]
pub trait FftEngine<T>: Clone + Send + Sync {
    fn len(&self) -> usize;
    fn spectrum_len(&self) -> usize {
        self.len() / 2 + 1
    }
    /// `input` is used as scratch and left in an unspecified state.
    fn forward(&self, input: &mut [T], output: &mut [Complex<T>]);
    /// `input` is used as scratch and left in an unspecified state.
    fn inverse(&self, input: &mut [Complex<T>], output: &mut [T]);
}

/// [`FftEngine`] backed by `realfft`.
pub struct RealFft<T> {
    forward: Arc<dyn RealToComplex<T>>,
    inverse: Arc<dyn ComplexToReal<T>>,
    len: usize,
}

impl<T> Clone for RealFft<T> {
    fn clone(&self) -> Self {
        Self {
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
            len: self.len,
        }
    }
}

impl<T: FftNum> RealFft<T> {
    fn plan(len: usize) -> Self {
        let mut planner = RealFftPlanner::<T>::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }
}

impl<T: FftNum> FftEngine<T> for RealFft<T> {
    fn len(&self) -> usize {
        self.len
    }

    fn forward(&self, input: &mut [T], output: &mut [Complex<T>]) {
        self.forward.process(input, output).expect("forward FFT buffer sizes");
    }

    fn inverse(&self, input: &mut [Complex<T>], output: &mut [T]) {
        // The DC and Nyquist bins of a real signal are real; clear rounding residue
        // so realfft does not reject the input.
        let last = input.len() - 1;
        input[0].im = T::zero();
        if self.len.is_multiple_of(2) {
            input[last].im = T::zero();
        }
        self.inverse.process(input, output).expect("inverse FFT buffer sizes");
    }
}

macro_rules! impl_spectral {
    ($t:ty) => {
        impl Spectral for $t {
            type Engine = RealFft<$t>;

            fn engine(len: usize) -> Self::Engine {
                RealFft::plan(len)
            }
        }
    };
}

impl_spectral!(f32);
impl_spectral!(f64);

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
