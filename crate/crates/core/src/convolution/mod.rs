//! Grid functions and FFT convolution.
//!
//! Convolutions are linear: both factors are zero padded so that the
//! periodic images of the FFT never overlap. A [`GridFunction`] keeps track
//! of the mass it carries outside the grid (from analytic tail extensions or
//! from convolution spill) so that total masses stay multiplicative.

mod grid;
mod kernel;
mod kesten;

pub use grid::Grid;
pub use kernel::Kernel;
pub use kesten::{
    conv_lower_constant, kesten_density_check, kesten_distribution_check, stieltjes_conv_power, GridTail,
    KestenOptions, KestenReport, KestenRow,
};

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::num::{count, lit, FftEngine, Real, Spectral};
use crate::quad::GL5;
use crate::tails::{tail_integral, Side, TailProfile};

/// Number of boundary cells inspected by the aliasing detector.
pub const EDGE_CELLS: usize = 8;
/// Mass fraction in the edge cells above which results are flagged.
pub const ALIAS_THRESHOLD: f64 = 1e-8;

/// Behaviour of a grid function beyond one end of its grid.
#[derive(Debug, Clone)]
pub enum Extension<T> {
    Zero,
    /// `amplitude * b(x)` with `b` evaluated at the true position.
    Tail {
        profile: TailProfile<T>,
        amplitude: T,
    },
    /// Constant level; only meaningful on the left.
    Constant(T),
}

impl<T: Real> Extension<T> {
    pub fn tail(profile: TailProfile<T>, amplitude: T) -> Self {
        Extension::Tail { profile, amplitude }
    }

    /// Value at a position outside the grid.
    pub fn value(&self, x: T) -> T {
        match self {
            Extension::Zero => T::zero(),
            Extension::Tail { profile, amplitude } => match profile.eval_log(x) {
                Ok(l) => *amplitude * l.exp(),
                Err(_) => T::zero(),
            },
            Extension::Constant(level) => *level,
        }
    }

    /// Mass beyond the outward coordinate `s` (infinite for a positive constant).
    fn mass_beyond(&self, s: T) -> Result<T> {
        match self {
            Extension::Zero => Ok(T::zero()),
            Extension::Constant(level) => Ok(if *level > T::zero() { T::infinity() } else { T::zero() }),
            Extension::Tail { profile, amplitude } => {
                let big = tail_integral(profile)?;
                Ok(*amplitude * big.log_outward(s)?.exp())
            }
        }
    }
}

/// Non-negative samples on a [`Grid`] plus boundary extensions.
#[derive(Debug, Clone)]
pub struct GridFunction<T> {
    grid: Grid<T>,
    values: Vec<T>,
    right_ext: Extension<T>,
    left_ext: Extension<T>,
    outer_left: T,
    outer_right: T,
    aliased: bool,
}

impl<T: Real> GridFunction<T> {
    /// Wraps node values; both extensions are zero.
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= T::zero()))
        {
            return Err(Error::Domain(format!(
                "value {v} at node {i} is not finite and non-negative"
            )));
        }
        Ok(Self {
            grid,
            values,
            right_ext: Extension::Zero,
            left_ext: Extension::Zero,
            outer_left: T::zero(),
            outer_right: T::zero(),
            aliased: false,
        })
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self::new(grid, vec![T::zero(); grid.len()]).expect("zeros are valid")
    }

    /// Point samples `f(x_i)`.
    pub fn sample(grid: Grid<T>, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    /// Cell averages of `f` over `[x_i - dx/2, x_i + dx/2]`.
    ///
    /// Each half cell gets its own 5-point Gauss–Legendre rule, so a jump at
    /// a node is integrated exactly.
    pub fn cell_average(grid: Grid<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let dx = grid.dx();
        let values = grid.nodes().map(|x| cell_mean(&f, x, dx)).collect();
        Self::new(grid, values)
    }

    pub fn with_right_ext(mut self, ext: Extension<T>) -> Result<Self> {
        if matches!(ext, Extension::Constant(_)) {
            return Err(invalid("right_ext", "a constant extension is only allowed on the left"));
        }
        if let Extension::Tail { ref profile, .. } = ext {
            if profile.side() != Side::Right {
                return Err(invalid("right_ext", "right extension needs a right tail profile"));
            }
        }
        let n = self.grid.len();
        self.check_agreement(&ext, (n - EDGE_CELLS..n).collect())?;
        let edge = self.grid.half_width() - self.grid.dx() * lit(0.5);
        self.outer_right = ext.mass_beyond(edge)?;
        self.right_ext = ext;
        Ok(self)
    }

    pub fn with_left_ext(mut self, ext: Extension<T>) -> Result<Self> {
        if let Extension::Tail { ref profile, .. } = ext {
            if profile.side() != Side::Left {
                return Err(invalid("left_ext", "left extension needs a left tail profile"));
            }
        }
        if let Extension::Constant(level) = ext {
            if !(level >= T::zero() && level.is_finite()) {
                return Err(invalid("left_ext", "constant level must be finite and non-negative"));
            }
        }
        self.check_agreement(&ext, (0..EDGE_CELLS).collect())?;
        let edge = self.grid.half_width() + self.grid.dx() * lit(0.5);
        self.outer_left = ext.mass_beyond(edge)?;
        self.left_ext = ext;
        Ok(self)
    }

    fn check_agreement(&self, ext: &Extension<T>, nodes: Vec<usize>) -> Result<()> {
        if matches!(ext, Extension::Zero) {
            return Ok(());
        }
        for i in nodes {
            let x = self.grid.x(i);
            let e = ext.value(x);
            let v = self.values[i];
            let scale = e.abs().max(v.abs());
            if scale > T::zero() && (e - v).abs() > lit::<T>(0.05) * scale {
                return Err(Error::Domain(format!(
                    "extension value {e} disagrees with grid value {v} at x = {x}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn right_ext(&self) -> &Extension<T> {
        &self.right_ext
    }

    pub fn left_ext(&self) -> &Extension<T> {
        &self.left_ext
    }

    /// Whether a factor carried significant mass next to the grid boundary.
    pub fn aliased(&self) -> bool {
        self.aliased
    }

    pub fn outer_mass(&self) -> (T, T) {
        (self.outer_left, self.outer_right)
    }

    /// `Σ values · dx`.
    pub fn grid_mass(&self) -> T {
        sum_ordered(&self.values) * self.grid.dx()
    }

    /// Grid mass plus the mass carried beyond both ends.
    pub fn total_mass(&self) -> T {
        self.grid_mass() + self.outer_left + self.outer_right
    }

    /// Value at an arbitrary position: linear interpolation inside, extension outside.
    pub fn eval(&self, x: T) -> T {
        let g = &self.grid;
        let first = g.x(0);
        let last = g.x(g.len() - 1);
        if x < first {
            return self.left_ext.value(x);
        }
        if x > last {
            return self.right_ext.value(x);
        }
        let i = g.index_floor(x).min(g.len() - 2);
        let w = (x - g.x(i)) / g.dx();
        self.values[i] * (T::one() - w) + self.values[i + 1] * w
    }

    /// Fraction of grid mass within [`EDGE_CELLS`] cells of either end.
    pub fn edge_fraction(&self) -> T {
        let n = self.values.len();
        let edge: T = self.values[..EDGE_CELLS].iter().copied().sum::<T>()
            + self.values[n - EDGE_CELLS..].iter().copied().sum::<T>();
        let total = sum_ordered(&self.values);
        if total > T::zero() {
            edge / total
        } else {
            T::zero()
        }
    }

    fn touches_edge(&self) -> bool {
        self.edge_fraction() > lit(ALIAS_THRESHOLD)
    }

    fn from_parts(grid: Grid<T>, values: Vec<T>, outer: (T, T), aliased: bool) -> Self {
        Self {
            grid,
            values,
            right_ext: Extension::Zero,
            left_ext: Extension::Zero,
            outer_left: outer.0,
            outer_right: outer.1,
            aliased,
        }
    }
}

fn cell_mean<T: Real>(f: &impl Fn(T) -> T, x: T, dx: T) -> T {
    let quarter = dx * lit(0.25);
    let mut acc = T::zero();
    for center in [x - quarter, x + quarter] {
        for &(node, weight) in &GL5 {
            acc = acc + lit::<T>(weight) * f(center + quarter * lit(node));
        }
    }
    // each half cell has length dx/2 = 2 * quarter; GL weights sum to 2
    acc * quarter / dx
}

/// Sum from the far end inward, smallest values first for decaying data.
pub(crate) fn sum_ordered<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum()
}

/// Full linear convolution `c[k] = Σ a[i] b[k - i]` via a zero-padded FFT.
pub(crate) fn linear_convolve<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let engine = T::engine(size);
    let fa = spectrum(&engine, a);
    let fb = spectrum(&engine, b);
    let mut prod: Vec<Complex<T>> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = vec![T::zero(); size];
    engine.inverse(&mut prod, &mut out);
    let norm = count::<T>(size);
    out.truncate(out_len);
    out.iter_mut().for_each(|v| *v = *v / norm);
    out
}

pub(crate) fn spectrum<T: Real>(engine: &<T as Spectral>::Engine, data: &[T]) -> Vec<Complex<T>> {
    let mut buf = vec![T::zero(); engine.len()];
    buf[..data.len()].copy_from_slice(data);
    let mut out = vec![Complex::new(T::zero(), T::zero()); engine.spectrum_len()];
    engine.forward(&mut buf, &mut out);
    out
}

/// Splits the mass of a product of totals into left and right outer parts.
///
/// Everything that involves a right outer factor but no left one is
/// attributed to the right, the remainder to the left.
fn outer_split<T: Real>(factors: &[(T, T, T)]) -> (T, T) {
    let inner: T = factors.iter().map(|f| f.0).product();
    let inner_right: T = factors.iter().map(|f| f.0 + f.2).product();
    let total: T = factors.iter().map(|f| f.0 + f.1 + f.2).product();
    (total - inner_right, inner_right - inner)
}

/// Splits raw linear-convolution output into grid values and spilled mass.
fn window<T: Real>(grid: Grid<T>, raw: &[T], offset: usize, scale: T) -> (Vec<T>, T, T) {
    let n = grid.len();
    let dx = grid.dx();
    let clamp = |v: T| if v > T::zero() { v * scale } else { T::zero() };
    let values: Vec<T> = raw[offset..offset + n].iter().map(|&v| clamp(v)).collect();
    let spill_left = raw[..offset].iter().map(|&v| clamp(v)).sum::<T>() * dx;
    let spill_right = raw[offset + n..].iter().map(|&v| clamp(v)).sum::<T>() * dx;
    (values, spill_left, spill_right)
}

/// Linear convolution `(f * g)(x_i) = Σ_j f(x_j) g(x_i - x_j) dx`.
///
/// Negative FFT round-off is clamped to zero. The result has zero
/// extensions; mass leaving the window is kept as outer mass.
pub fn convolve<T: Real>(f: &GridFunction<T>, g: &GridFunction<T>) -> Result<GridFunction<T>> {
    f.grid.ensure_same(&g.grid)?;
    let grid = f.grid;
    let n = grid.len();
    let raw = linear_convolve(&f.values, &g.values);
    let (values, spill_l, spill_r) = window(grid, &raw, n / 2, grid.dx());
    let (ol, or) = outer_split(&[
        (f.grid_mass(), f.outer_left, f.outer_right),
        (g.grid_mass(), g.outer_left, g.outer_right),
    ]);
    let aliased = f.aliased || g.aliased || f.touches_edge() || g.touches_edge();
    Ok(GridFunction::from_parts(
        grid,
        values,
        (ol + spill_l, or + spill_r),
        aliased,
    ))
}

/// Convolution powers `b, b*b, ..., b^{*n_max}` from one padded transform.
pub fn conv_powers<T: Real>(b: &GridFunction<T>, n_max: usize) -> Result<Vec<GridFunction<T>>> {
    if n_max == 0 {
        return Err(invalid("n", "convolution power needs n >= 1"));
    }
    let grid = b.grid;
    let n = grid.len();
    let dx = grid.dx();
    let size = (n_max * n).next_power_of_two();
    let engine = T::engine(size);
    let base = spectrum(&engine, &b.values);
    let aliased = b.aliased || b.touches_edge();
    let mut out = vec![b.clone()];
    let mut power = base.clone();
    let norm = count::<T>(size);
    for k in 2..=n_max {
        power.iter_mut().zip(&base).for_each(|(p, q)| *p = *p * q);
        let mut scratch = power.clone();
        let mut raw = vec![T::zero(); size];
        engine.inverse(&mut scratch, &mut raw);
        raw.truncate(k * (n - 1) + 1);
        let offset = (k - 1) * n / 2;
        let (values, spill_l, spill_r) = window(grid, &raw, offset, dx.powi(k as i32 - 1) / norm);
        let factors = vec![(b.grid_mass(), b.outer_left, b.outer_right); k];
        let (ol, or) = outer_split(&factors);
        out.push(GridFunction::from_parts(
            grid,
            values,
            (ol + spill_l, or + spill_r),
            aliased,
        ));
    }
    Ok(out)
}

/// `b^{*n}`; `b^{*1} = b`.
pub fn conv_power<T: Real>(b: &GridFunction<T>, n: usize) -> Result<GridFunction<T>> {
    if n == 0 {
        return Err(invalid("n", "convolution power needs n >= 1"));
    }
    Ok(conv_powers(b, n)?.pop().expect("n >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tails::TailFamily;

    fn direct(f: &[f64], g: &[f64], dx: f64) -> Vec<f64> {
        let n = f.len();
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (j, fj) in f.iter().enumerate() {
                    let k = (i + n / 2) as isize - j as isize;
                    if k >= 0 && (k as usize) < n {
                        acc += fj * g[k as usize];
                    }
                }
                acc * dx
            })
            .collect()
    }

    fn gaussian(sigma: f64) -> impl Fn(f64) -> f64 {
        move |x| (-0.5 * x * x / (sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub(crate) fn power_density(grid: Grid<f64>) -> GridFunction<f64> {
        let tail = TailProfile::right(TailFamily::power(3.0))
            .unwrap()
            .with_shift(1.0)
            .unwrap()
            .with_scale(2.0)
            .unwrap();
        GridFunction::cell_average(grid, |x| if x < 0.0 { 0.0 } else { 2.0 * (1.0 + x).powi(-3) })
            .unwrap()
            .with_right_ext(Extension::tail(tail, 1.0))
            .unwrap()
    }

    #[test]
    fn hat_from_indicators() {
        let grid = Grid::new(4.0, 1024).unwrap();
        let ind = GridFunction::cell_average(grid, |x| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 }).unwrap();
        let hat = convolve(&ind, &ind).unwrap();
        let at = |x: f64| hat.values()[grid.index_nearest(x)];
        assert!((at(1.0) - 1.0).abs() < grid.dx());
        assert!((at(0.5) - 0.5).abs() < grid.dx());
        assert!((at(1.5) - 0.5).abs() < grid.dx());
    }

    #[test]
    fn gaussians_compose() {
        let grid = Grid::new(20.0, 2048).unwrap();
        let f = GridFunction::sample(grid, gaussian(1.0)).unwrap();
        let g = GridFunction::sample(grid, gaussian(2.0)).unwrap();
        let h = convolve(&f, &g).unwrap();
        let exact = gaussian(5f64.sqrt());
        let err = grid
            .nodes()
            .zip(h.values())
            .map(|(x, v)| (v - exact(x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "sup error {err}");
    }

    #[test]
    fn matches_direct_sum() {
        let grid = Grid::new(8.0, 512).unwrap();
        let f = GridFunction::sample(grid, |x: f64| (-x.abs()).exp()).unwrap();
        let g = GridFunction::sample(grid, |x| 1.0 / (1.0 + x * x)).unwrap();
        let fast = convolve(&f, &g).unwrap();
        let slow = direct(f.values(), g.values(), grid.dx());
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = GridFunction::zeros(Grid::new(1.0, 64).unwrap());
        let b = GridFunction::zeros(Grid::new(2.0, 64).unwrap());
        assert!(matches!(convolve(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn edge_mass_flags_aliasing() {
        let grid = Grid::new(4.0, 256).unwrap();
        let wide = GridFunction::sample(grid, |_| 1.0).unwrap();
        let narrow = GridFunction::sample(grid, gaussian(0.2)).unwrap();
        assert!(convolve(&wide, &narrow).unwrap().aliased());
        assert!(!convolve(&narrow, &narrow).unwrap().aliased());
    }

    #[test]
    fn power_one_is_identity() {
        let grid = Grid::new(16.0, 256).unwrap();
        let b = power_density(grid);
        let p = conv_power(&b, 1).unwrap();
        assert_eq!(p.values(), b.values());
        assert!(conv_power(&b, 0).is_err());
    }

    #[test]
    fn power_three_keeps_unit_mass() {
        let grid = Grid::new(256.0, 4096).unwrap();
        let b = power_density(grid);
        assert!((b.total_mass() - 1.0).abs() < 1e-10, "{}", b.total_mass());
        let b3 = conv_power(&b, 3).unwrap();
        assert!((b3.total_mass() - 1.0).abs() < 1e-8, "{}", b3.total_mass());
    }

    #[test]
    fn power_two_of_indicator_is_hat() {
        let grid = Grid::new(4.0, 1024).unwrap();
        let ind = GridFunction::cell_average(grid, |x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 }).unwrap();
        let hat = conv_power(&ind, 2).unwrap();
        let conv = convolve(&ind, &ind).unwrap();
        for (a, b) in hat.values().iter().zip(conv.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn power_density_matches_quadrature_oracle() {
        let grid = Grid::new(128.0, 1 << 18).unwrap();
        let b = power_density(grid);
        let bb = convolve(&b, &b).unwrap();
        let f = |y: f64| 2.0 * (1.0 + y).powi(-3);
        for x in [1.0, 10.0, 100.0] {
            let oracle = crate::quad::integrate(|y| f(y) * f(x - y), 0.0, x, 1e-300, 1e-13).unwrap();
            let got = bb.values()[grid.index_nearest(x)];
            assert!((got / oracle - 1.0).abs() < 1e-6, "x={x}: {got} vs {oracle}");
        }
    }
}
