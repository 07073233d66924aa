use crate::error::{invalid, Error, Result};
use crate::num::{lit, Real};
use crate::tails::{TailFamily, TwoSidedTail};

use super::{Grid, GridFunction};

/// Dispersal kernel: a probability density sampled on a grid twice as wide
/// as the model grid (same spacing), cell averaged and renormalized to unit
/// mass.
///
/// The doubled width covers every displacement between two points of the
/// model grid, so `a * u` on the model grid needs no kernel values beyond it.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    base: Grid<T>,
    density: GridFunction<T>,
    tail_sums: Vec<T>,
    mean: Option<T>,
    tails: Option<TwoSidedTail<T>>,
    captured: T,
}

impl<T: Real> Kernel<T> {
    /// Kernel proportional to `density`; `tails` describes its analytic tails.
    pub fn from_fn(base: Grid<T>, density: impl Fn(T) -> T, tails: Option<TwoSidedTail<T>>) -> Result<Self> {
        let grid = base.widened(2);
        let raw = GridFunction::cell_average(grid, density)?;
        Self::from_values(base, raw.into_values(), tails)
    }

    fn from_values(base: Grid<T>, mut values: Vec<T>, tails: Option<TwoSidedTail<T>>) -> Result<Self> {
        let grid = base.widened(2);
        let dx = grid.dx();
        let mass: T = values.iter().copied().sum::<T>() * dx;
        if !(mass > T::zero() && mass.is_finite()) {
            return Err(Error::Domain(format!("kernel mass {mass} is not positive")));
        }
        values.iter_mut().for_each(|v| *v = *v / mass);
        let mut tail_sums = vec![T::zero(); values.len()];
        let mut acc = T::zero();
        for i in (0..values.len()).rev() {
            acc = acc + values[i] * dx;
            tail_sums[i] = acc;
        }
        let first_moment_finite = tails.as_ref().is_none_or(|t| {
            let finite = |f: &TailFamily<T>| match *f {
                TailFamily::Power { q, .. } => q > lit(2.0),
                _ => true,
            };
            finite(t.right.family()) && t.left_profile().is_none_or(|l| finite(l.family()))
        });
        let mean = first_moment_finite.then(|| values.iter().enumerate().map(|(i, v)| grid.x(i) * *v).sum::<T>() * dx);
        Ok(Self {
            base,
            density: GridFunction::new(grid, values)?,
            tail_sums,
            mean,
            tails,
            captured: mass,
        })
    }

    /// Centred Gaussian with standard deviation `sigma`.
    pub fn gaussian(base: Grid<T>, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        let two = lit::<T>(2.0);
        Self::from_fn(base, |x| (-(x * x) / (two * sigma * sigma)).exp(), None)
    }

    /// Uniform density on `[-half_width, half_width]`.
    pub fn uniform(base: Grid<T>, half_width: T) -> Result<Self> {
        if !(half_width > T::zero()) {
            return Err(invalid("half_width", format!("must be positive, got {half_width}")));
        }
        Self::from_fn(base, |x| if x.abs() <= half_width { T::one() } else { T::zero() }, None)
    }

    /// Density proportional to a two-sided tail evaluated on the whole line.
    pub fn from_tails(base: Grid<T>, tails: TwoSidedTail<T>) -> Result<Self> {
        if tails.is_bounded_below_left() {
            return Err(invalid("kernel", "a kernel must be integrable on both sides"));
        }
        let t = tails.clone();
        Self::from_fn(base, move |x| t.eval_log(x).map_or(T::zero(), T::exp), Some(tails))
    }

    /// Kernel restricted to `[lo, hi]` and renormalized, with the captured mass.
    pub fn truncated(&self, lo: T, hi: T) -> Result<(Self, T)> {
        if !(lo < hi) {
            return Err(invalid("window", format!("empty window [{lo}, {hi}]")));
        }
        let grid = *self.grid();
        let values: Vec<T> = self
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = grid.x(i);
                if x >= lo && x <= hi {
                    v
                } else {
                    T::zero()
                }
            })
            .collect();
        let kernel = Self::from_values(self.base, values, None)?;
        let captured = kernel.captured;
        Ok((kernel, captured))
    }

    /// The model grid this kernel serves.
    pub fn base_grid(&self) -> &Grid<T> {
        &self.base
    }

    /// The doubled kernel grid.
    pub fn grid(&self) -> &Grid<T> {
        self.density.grid()
    }

    pub fn values(&self) -> &[T] {
        self.density.values()
    }

    pub fn density(&self) -> &GridFunction<T> {
        &self.density
    }

    /// `∫ y a(y) dy`, or `None` when a tail makes it infinite.
    pub fn mean(&self) -> Option<T> {
        self.mean
    }

    pub fn tails(&self) -> Option<&TwoSidedTail<T>> {
        self.tails.as_ref()
    }

    /// Mass of the unnormalized input on the kernel grid.
    pub fn captured_mass(&self) -> T {
        self.captured
    }

    /// `A(x_i) = Σ_{j>=i} a_j dx` at every kernel node.
    pub fn tail_sums(&self) -> &[T] {
        &self.tail_sums
    }

    /// `A(x) = ∫_x^∞ a`, piecewise constant between nodes.
    pub fn tail_sum(&self, x: T) -> T {
        let g = self.grid();
        if x < g.x(0) {
            return T::one();
        }
        if x > g.x(g.len() - 1) {
            return T::zero();
        }
        let i = ((x - g.x(0)) / g.dx()).ceil().to_usize().unwrap_or(g.len());
        self.tail_sums.get(i).copied().unwrap_or(T::zero())
    }

    /// Kernel value at `x` (interpolated; zero off the kernel grid).
    pub fn value(&self, x: T) -> T {
        let g = self.grid();
        if x < g.x(0) || x > g.x(g.len() - 1) {
            T::zero()
        } else {
            self.density.eval(x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tails::{TailProfile, TwoSidedTail};

    fn base() -> Grid<f64> {
        Grid::new(64.0, 2048).unwrap()
    }

    #[test]
    fn unit_mass_and_tail_sums() {
        let k = Kernel::gaussian(base(), 1.5).unwrap();
        let dx = k.grid().dx();
        let mass: f64 = k.values().iter().sum::<f64>() * dx;
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((k.tail_sums()[0] - 1.0).abs() < 1e-12);
        assert!(k.tail_sums().windows(2).all(|w| w[1] <= w[0]));
        for i in [0, 100, 2048, 4000] {
            let direct: f64 = k.values()[i..].iter().sum::<f64>() * dx;
            assert!((k.tail_sums()[i] - direct).abs() < 1e-10);
        }
        assert!(k.mean().unwrap().abs() < 1e-12);
    }

    #[test]
    fn heavy_mean_infinite() {
        let p = TailProfile::right(TailFamily::power(2.0))
            .unwrap()
            .with_shift(1.0)
            .unwrap();
        let k = Kernel::from_tails(base(), TwoSidedTail::symmetric(p).unwrap()).unwrap();
        assert!(k.mean().is_none());
        let (t, captured) = k.truncated(-16.0, 16.0).unwrap();
        assert!(captured < 1.0 && captured > 0.8);
        assert!(t.mean().unwrap().abs() < 1e-12);
        let mass: f64 = t.values().iter().sum::<f64>() * t.grid().dx();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_grid_is_doubled() {
        let k = Kernel::uniform(base(), 1.0).unwrap();
        assert_eq!(k.grid().len(), 4096);
        assert_eq!(k.grid().dx(), base().dx());
        assert_eq!(k.grid().half_width(), 128.0);
    }
}
