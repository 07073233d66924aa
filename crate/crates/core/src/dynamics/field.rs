use std::sync::Arc;

use crate::convolution::Grid;
use crate::error::{invalid, Error, Result};
use crate::num::{count, Real};
use crate::tails::{Side, TailProfile};

/// How a field continues past one end of the grid.
#[derive(Debug, Clone)]
pub enum Boundary<T> {
    Zero,
    /// The field equals this level all the way to infinity.
    Constant(T),
    /// `amplitude * b(x)` for an analytic tail `b`.
    Tail {
        profile: TailProfile<T>,
        amplitude: T,
    },
}

impl<T: Real> Boundary<T> {
    pub fn tail(profile: TailProfile<T>, amplitude: T) -> Self {
        Boundary::Tail { profile, amplitude }
    }

    /// The scalar that evolves in time (level or amplitude).
    pub fn scalar(&self) -> T {
        match self {
            Boundary::Zero => T::zero(),
            Boundary::Constant(c) => *c,
            Boundary::Tail { amplitude, .. } => *amplitude,
        }
    }

    pub(crate) fn with_scalar(&self, s: T) -> Self {
        match self {
            Boundary::Zero => Boundary::Zero,
            Boundary::Constant(_) => Boundary::Constant(s),
            Boundary::Tail { profile, .. } => Boundary::Tail {
                profile: profile.clone(),
                amplitude: s,
            },
        }
    }

    fn value(&self, x: T) -> T {
        match self {
            Boundary::Zero => T::zero(),
            Boundary::Constant(c) => *c,
            Boundary::Tail { profile, amplitude } => profile.eval(x).map_or(T::zero(), |b| *amplitude * b),
        }
    }

    fn check(&self, side: Side) -> Result<()> {
        match self {
            Boundary::Zero => Ok(()),
            Boundary::Constant(c) if c.is_finite() && *c >= T::zero() => Ok(()),
            Boundary::Constant(c) => Err(invalid(
                "boundary",
                format!("level {c} must be finite and non-negative"),
            )),
            Boundary::Tail { profile, amplitude } => {
                if profile.side() != side {
                    return Err(invalid("boundary", format!("{side:?} boundary needs a {side:?} tail")));
                }
                if !(amplitude.is_finite() && *amplitude >= T::zero()) {
                    return Err(invalid(
                        "boundary",
                        format!("amplitude {amplitude} must be finite and non-negative"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Unit-amplitude samples on the padding band, if this is a tail.
    fn shape(&self, xs: impl Iterator<Item = T>) -> Option<Arc<Vec<T>>> {
        match self {
            Boundary::Tail { profile, .. } => {
                Some(Arc::new(xs.map(|x| profile.eval(x).unwrap_or(T::zero())).collect()))
            }
            _ => None,
        }
    }
}

/// A density on the model grid together with its continuation past both
/// ends. Values may be slightly negative (round-off is never clamped).
#[derive(Debug, Clone)]
pub struct Field<T> {
    grid: Grid<T>,
    values: Vec<T>,
    left: Boundary<T>,
    right: Boundary<T>,
    left_shape: Option<Arc<Vec<T>>>,
    right_shape: Option<Arc<Vec<T>>>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>, left: Boundary<T>, right: Boundary<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at x = {}", grid.x(i))));
        }
        left.check(Side::Left)?;
        right.check(Side::Right)?;
        let n = grid.len();
        let l3 = grid.half_width() * count::<T>(3);
        let dx = grid.dx();
        let left_shape = left.shape((0..n).map(|p| -l3 + dx * count(p)));
        let right_shape = right.shape((0..n).map(|p| grid.half_width() + dx * count(p)));
        Ok(Self {
            grid,
            values,
            left,
            right,
            left_shape,
            right_shape,
        })
    }

    /// Samples `f` at the nodes; zero continuation on both sides.
    pub fn from_fn(grid: Grid<T>, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect(), Boundary::Zero, Boundary::Zero)
    }

    pub fn constant(grid: Grid<T>, level: T) -> Result<Self> {
        Self::new(
            grid,
            vec![level; grid.len()],
            Boundary::Constant(level),
            Boundary::Constant(level),
        )
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self::new(grid, vec![T::zero(); grid.len()], Boundary::Zero, Boundary::Zero).expect("zero field is valid")
    }

    pub fn with_left(self, left: Boundary<T>) -> Result<Self> {
        Self::new(self.grid, self.values, left, self.right)
    }

    pub fn with_right(self, right: Boundary<T>) -> Result<Self> {
        Self::new(self.grid, self.values, self.left, right)
    }

    /// Same grid and boundary kinds, new values and boundary scalars.
    pub(crate) fn with_state(&self, values: Vec<T>, left: T, right: T) -> Self {
        Self {
            grid: self.grid,
            values,
            left: self.left.with_scalar(left),
            right: self.right.with_scalar(right),
            left_shape: self.left_shape.clone(),
            right_shape: self.right_shape.clone(),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn left(&self) -> &Boundary<T> {
        &self.left
    }

    pub fn right(&self) -> &Boundary<T> {
        &self.right
    }

    /// `Σ u_i dx` over the grid.
    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.dx()
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Linear interpolation on the grid, boundary continuation outside.
    pub fn eval(&self, x: T) -> T {
        let g = &self.grid;
        let last = g.len() - 1;
        if x < g.x(0) {
            return self.left.value(x);
        }
        if x > g.x(last) {
            return if x >= g.half_width() {
                self.right.value(x)
            } else {
                self.values[last]
            };
        }
        let i = g.index_floor(x).min(last - 1);
        let w = (x - g.x(i)) / g.dx();
        self.values[i] * (T::one() - w) + self.values[i + 1] * w
    }

    /// Writes the field on `[-3L, 3L)` into `out` (length `3N`).
    pub(crate) fn fill_padded(&self, out: &mut [T]) {
        let n = self.grid.len();
        let (left, rest) = out.split_at_mut(n);
        let (mid, right) = rest.split_at_mut(n);
        fill_band(left, &self.left, self.left_shape.as_deref());
        mid.copy_from_slice(&self.values);
        fill_band(right, &self.right, self.right_shape.as_deref());
    }
}

fn fill_band<T: Real>(band: &mut [T], boundary: &Boundary<T>, shape: Option<&Vec<T>>) {
    match (boundary, shape) {
        (Boundary::Constant(c), _) => band.iter_mut().for_each(|v| *v = *c),
        (Boundary::Tail { amplitude, .. }, Some(shape)) => band
            .iter_mut()
            .zip(shape.iter())
            .for_each(|(v, s)| *v = *amplitude * *s),
        _ => band.iter_mut().for_each(|v| *v = T::zero()),
    }
}
