use crate::error::{invalid, Error, Result};
use crate::num::{count, lit, Real};

/// Uniform grid `x_i = -L + i dx`, `i = 0..N`, `dx = 2L / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    half_width: T,
    n_points: usize,
    dx: T,
}

impl<T: Real> Grid<T> {
    pub fn new(half_width: T, n_points: usize) -> Result<Self> {
        if !(half_width > T::zero() && half_width.is_finite()) {
            return Err(invalid("L", format!("half width must be positive, got {half_width}")));
        }
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(invalid(
                "N",
                format!("point count must be a power of two >= 16, got {n_points}"),
            ));
        }
        Ok(Self {
            half_width,
            n_points,
            dx: (half_width + half_width) / count(n_points),
        })
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn x(&self, i: usize) -> T {
        -self.half_width + self.dx * count(i)
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n_points).map(move |i| self.x(i))
    }

    /// Index of the node at or left of `x`, clamped to the grid.
    pub fn index_floor(&self, x: T) -> usize {
        let k = ((x + self.half_width) / self.dx).floor();
        if k <= T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(self.n_points - 1)
        }
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn index_nearest(&self, x: T) -> usize {
        let k = ((x + self.half_width) / self.dx).round();
        if k <= T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(self.n_points - 1)
        }
    }

    /// Grid with the same spacing and `factor` times the width.
    pub fn widened(&self, factor: usize) -> Self {
        Self {
            half_width: self.half_width * count(factor),
            n_points: self.n_points * factor,
            dx: self.dx,
        }
    }

    pub(crate) fn ensure_same(&self, other: &Self) -> Result<()> {
        let tol = lit::<T>(1e-12) * self.half_width;
        if self.n_points != other.n_points || (self.half_width - other.half_width).abs() > tol {
            return Err(Error::GridMismatch(format!(
                "(L = {}, N = {}) vs (L = {}, N = {})",
                self.half_width, self.n_points, other.half_width, other.n_points
            )));
        }
        Ok(())
    }
}
