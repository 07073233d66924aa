use std::sync::Arc;

use num_complex::Complex;

use crate::convolution::{spectrum, Kernel};
use crate::num::{count, FftEngine, Real, Spectral};

use super::Field;

/// `a * u` on the model grid for a fixed kernel.
///
/// `u` is laid out on `[-3L, 3L)`: grid values in the middle third and the
/// field's boundary extensions on either side. The kernel lives on
/// `[-2L, 2L)`, so every displacement that can reach a grid node is
/// represented and no contribution from beyond `±3L` is possible. Only the
/// middle outputs are read, which makes a circular transform of length `4N`
/// free of wrap-around.
#[derive(Clone)]
pub(crate) struct ConvOperator<T: Spectral> {
    n: usize,
    dx: T,
    engine: T::Engine,
    kernel_spectrum: Arc<Vec<Complex<T>>>,
}

impl<T: Real> ConvOperator<T> {
    pub(crate) fn new(kernel: &Kernel<T>) -> Self {
        let n = kernel.base_grid().len();
        let engine = T::engine(4 * n);
        let kernel_spectrum = Arc::new(spectrum(&engine, kernel.values()));
        Self {
            n,
            dx: kernel.grid().dx(),
            engine,
            kernel_spectrum,
        }
    }

    pub(crate) fn apply(&self, field: &Field<T>) -> Vec<T> {
        let n = self.n;
        let size = 4 * n;
        let mut buf = vec![T::zero(); size];
        field.fill_padded(&mut buf[..3 * n]);
        let mut spec = vec![Complex::new(T::zero(), T::zero()); self.engine.spectrum_len()];
        self.engine.forward(&mut buf, &mut spec);
        spec.iter_mut()
            .zip(self.kernel_spectrum.iter())
            .for_each(|(s, k)| *s = *s * k);
        let mut out = vec![T::zero(); size];
        self.engine.inverse(&mut spec, &mut out);
        let scale = self.dx / count::<T>(size);
        out[2 * n..3 * n].iter().map(|v| *v * scale).collect()
    }
}

impl<T: Spectral> std::fmt::Debug for ConvOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvOperator")
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}
