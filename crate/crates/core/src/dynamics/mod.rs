//! Nonlocal reaction–dispersal dynamics
//! `∂u/∂t = ϰ (a * u) − m u − u G(u)` on a finite grid.

mod assumptions;
mod evolve;
mod field;
mod operator;

use std::fmt;
use std::sync::Arc;

use crate::convolution::Kernel;
use crate::error::{invalid, Error, Result};
use crate::num::{lit, Real};

pub use assumptions::{check_assumptions, AssumptionCheck, AssumptionReport};
pub use evolve::{evolve, series_solution, solve_linear, EvolveOptions, Snapshot, StopReason, Trajectory};
pub use field::{Boundary, Field};

use operator::ConvOperator;

/// Pointwise density dependence `G(v)(x) = g(v(x))`.
#[derive(Clone)]
pub enum LocalReaction<T> {
    /// `g(s) = β s / θ`, i.e. `f(r) = β r (1 − r/θ)`.
    Logistic,
    /// `g(s) = β (s/θ)²`, i.e. `f(r) = β r (1 − (r/θ)²)`.
    Quadratic,
    Custom {
        name: String,
        g: Arc<dyn Fn(T) -> T + Send + Sync>,
    },
}

impl<T> fmt::Debug for LocalReaction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalReaction::Logistic => f.write_str("Logistic"),
            LocalReaction::Quadratic => f.write_str("Quadratic"),
            LocalReaction::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Density dependent death rate `G`.
#[derive(Debug, Clone)]
pub enum Reaction<T> {
    Local(LocalReaction<T>),
    /// `G v = β (1 − ((θ − a⁻ * v)/θ)^k)`, so that
    /// `v G v = β v − γ v (θ − a⁻ * v)^k` with `γ = β/θ^k`.
    NonlocalLogistic {
        competition: Kernel<T>,
        exponent: T,
    },
}

impl<T: Real> Reaction<T> {
    pub fn logistic() -> Self {
        Reaction::Local(LocalReaction::Logistic)
    }

    pub fn quadratic() -> Self {
        Reaction::Local(LocalReaction::Quadratic)
    }

    pub fn custom(name: impl Into<String>, g: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Reaction::Local(LocalReaction::Custom {
            name: name.into(),
            g: Arc::new(g),
        })
    }

    pub fn nonlocal(competition: Kernel<T>, exponent: T) -> Result<Self> {
        if !(exponent >= T::one() && exponent.is_finite()) {
            return Err(invalid("k", format!("exponent must be at least 1, got {exponent}")));
        }
        Ok(Reaction::NonlocalLogistic { competition, exponent })
    }

    pub fn name(&self) -> String {
        match self {
            Reaction::Local(LocalReaction::Logistic) => "logistic".into(),
            Reaction::Local(LocalReaction::Quadratic) => "quadratic".into(),
            Reaction::Local(LocalReaction::Custom { name, .. }) => name.clone(),
            Reaction::NonlocalLogistic { exponent, .. } => format!("nonlocal-logistic(k={exponent})"),
        }
    }
}

#[derive(Debug, Clone)]
struct Operators<T: Real> {
    dispersal: ConvOperator<T>,
    competition: Option<ConvOperator<T>>,
}

/// Parameters, kernels and reaction of one model instance.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    kappa: T,
    mortality: T,
    theta: T,
    kernel: Kernel<T>,
    reaction: Reaction<T>,
    ops: Arc<Operators<T>>,
}

impl<T: Real> Model<T> {
    pub fn new(kappa: T, mortality: T, theta: T, kernel: Kernel<T>, reaction: Reaction<T>) -> Result<Self> {
        if !(kappa > T::zero() && kappa.is_finite()) {
            return Err(invalid("kappa", format!("must be positive, got {kappa}")));
        }
        if !(mortality > T::zero() && mortality.is_finite()) {
            return Err(invalid("m", format!("must be positive, got {mortality}")));
        }
        if !(kappa > mortality) {
            return Err(invalid(
                "kappa",
                format!("growth rate kappa - m must be positive, got {kappa} - {mortality}"),
            ));
        }
        if !(theta > T::zero() && theta.is_finite()) {
            return Err(invalid("theta", format!("must be positive, got {theta}")));
        }
        let competition = match &reaction {
            Reaction::NonlocalLogistic { competition, .. } => {
                kernel.base_grid().ensure_same(competition.base_grid())?;
                Some(ConvOperator::new(competition))
            }
            Reaction::Local(_) => None,
        };
        let ops = Arc::new(Operators {
            dispersal: ConvOperator::new(&kernel),
            competition,
        });
        Ok(Self {
            kappa,
            mortality,
            theta,
            kernel,
            reaction,
            ops,
        })
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn mortality(&self) -> T {
        self.mortality
    }

    /// `β = ϰ − m`.
    pub fn beta(&self) -> T {
        self.kappa - self.mortality
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn reaction(&self) -> &Reaction<T> {
        &self.reaction
    }

    pub fn grid(&self) -> &crate::convolution::Grid<T> {
        self.kernel.base_grid()
    }

    /// `ϰ ∫ y a(y) dy`, `None` when the kernel has no first moment.
    pub fn first_moment(&self) -> Option<T> {
        self.kernel.mean().map(|m| self.kappa * m)
    }

    /// `γ = β / θ^k` of the nonlocal reaction.
    pub fn gamma(&self) -> Option<T> {
        match &self.reaction {
            Reaction::NonlocalLogistic { exponent, .. } => Some(self.beta() / self.theta.powf(*exponent)),
            Reaction::Local(_) => None,
        }
    }

    /// `a * u` on the grid.
    pub fn disperse(&self, u: &Field<T>) -> Result<Vec<T>> {
        self.check_grid(u)?;
        Ok(self.ops.dispersal.apply(u))
    }

    /// `a⁻ * u` on the grid, for the nonlocal reaction.
    pub fn compete(&self, u: &Field<T>) -> Result<Vec<T>> {
        self.check_grid(u)?;
        self.ops
            .competition
            .as_ref()
            .map(|op| op.apply(u))
            .ok_or_else(|| Error::Precondition("the reaction is local".into()))
    }

    fn check_grid(&self, u: &Field<T>) -> Result<()> {
        self.grid().ensure_same(u.grid())
    }

    fn bound_tolerance(&self) -> T {
        lit::<T>(1e-9) * self.theta.max(T::one())
    }

    /// `G` for a spatially constant density `level`.
    pub fn g_constant(&self, level: T) -> Result<T> {
        match &self.reaction {
            Reaction::Local(r) => Ok(self.local_g(r, level)),
            Reaction::NonlocalLogistic { exponent, .. } => self.nonlocal_g(level, *exponent),
        }
    }

    fn local_g(&self, r: &LocalReaction<T>, s: T) -> T {
        let beta = self.beta();
        match r {
            LocalReaction::Logistic => beta * s / self.theta,
            LocalReaction::Quadratic => {
                let z = s / self.theta;
                beta * z * z
            }
            LocalReaction::Custom { g, .. } => g(s),
        }
    }

    fn nonlocal_g(&self, c: T, k: T) -> Result<T> {
        let mut base = (self.theta - c) / self.theta;
        if base < T::zero() {
            if base < -self.bound_tolerance() {
                return Err(Error::Domain(format!(
                    "competition term {c} exceeds theta = {}",
                    self.theta
                )));
            }
            base = T::zero();
        }
        Ok(self.beta() * (T::one() - base.powf(k)))
    }

    /// `G u` at every node. Requires `0 <= u <= θ` up to round-off.
    pub fn apply_g(&self, u: &Field<T>) -> Result<Vec<T>> {
        self.check_grid(u)?;
        let tol = self.bound_tolerance();
        if let Some(i) = u.values().iter().position(|&v| v < -tol || v > self.theta + tol) {
            return Err(Error::Domain(format!(
                "density {} at x = {} outside [0, {}]",
                u.values()[i],
                u.grid().x(i),
                self.theta
            )));
        }
        self.g_unchecked(u)
    }

    fn g_unchecked(&self, u: &Field<T>) -> Result<Vec<T>> {
        match &self.reaction {
            Reaction::Local(r) => Ok(u.values().iter().map(|&s| self.local_g(r, s)).collect()),
            Reaction::NonlocalLogistic { exponent, .. } => self
                .compete(u)?
                .into_iter()
                .map(|c| self.nonlocal_g(c, *exponent))
                .collect(),
        }
    }

    /// `ϰ (a * u) − m u − u G u`.
    pub fn rhs(&self, u: &Field<T>) -> Result<Vec<T>> {
        let g = self.apply_g(u)?;
        self.rhs_with(u, Some(&g))
    }

    /// `ϰ (a * u) − m u`.
    pub fn rhs_linear(&self, u: &Field<T>) -> Result<Vec<T>> {
        self.rhs_with(u, None)
    }

    fn rhs_with(&self, u: &Field<T>, g: Option<&[T]>) -> Result<Vec<T>> {
        let spread = self.disperse(u)?;
        let (kappa, m) = (self.kappa, self.mortality);
        Ok(spread
            .iter()
            .zip(u.values())
            .enumerate()
            .map(|(i, (&a, &v))| {
                let death = g.map_or(T::zero(), |g| v * g[i]);
                kappa * a - m * v - death
            })
            .collect())
    }

    /// Rate of the boundary scalars `(left, right)` of `u`.
    fn boundary_rates(&self, u: &Field<T>, nonlinear: bool) -> Result<(T, T)> {
        let rate = |b: &Boundary<T>| -> Result<T> {
            Ok(match b {
                Boundary::Zero => T::zero(),
                Boundary::Constant(c) if nonlinear => *c * (self.beta() - self.g_constant(*c)?),
                Boundary::Constant(c) => *c * self.beta(),
                Boundary::Tail { amplitude, .. } => *amplitude * self.beta(),
            })
        };
        Ok((rate(u.left())?, rate(u.right())?))
    }
}

/// Model with the kernel restricted to `[lo, hi]`: `aₙ` is the renormalized
/// restriction and `ϰₙ = ϰ ∫_{[lo, hi]} a`.
pub fn truncate_kernel<T: Real>(model: &Model<T>, lo: T, hi: T) -> Result<Model<T>> {
    let (kernel, captured) = model.kernel.truncated(lo, hi)?;
    let kappa = model.kappa * captured;
    if !(kappa > model.mortality) {
        return Err(Error::Precondition(format!(
            "truncation kills growth: kappa_n = {kappa} <= m = {}",
            model.mortality
        )));
    }
    Model::new(kappa, model.mortality, model.theta, kernel, model.reaction.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::Grid;

    fn grid() -> Grid<f64> {
        Grid::new(32.0, 512).unwrap()
    }

    fn logistic() -> Model<f64> {
        Model::new(
            2.0,
            1.0,
            1.0,
            Kernel::gaussian(grid(), 1.0).unwrap(),
            Reaction::logistic(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let k = Kernel::gaussian(grid(), 1.0).unwrap();
        assert!(Model::new(1.0, 1.0, 1.0, k.clone(), Reaction::logistic()).is_err());
        assert!(Model::new(2.0, 0.0, 1.0, k.clone(), Reaction::logistic()).is_err());
        assert!(Model::new(2.0, 1.0, -1.0, k.clone(), Reaction::logistic()).is_err());
        assert!(Reaction::<f64>::nonlocal(k, 0.5).is_err());
    }

    #[test]
    fn constant_field_is_invariant_under_dispersal() {
        let m = logistic();
        let u = Field::constant(grid(), 0.7).unwrap();
        let a = m.disperse(&u).unwrap();
        assert!(a.iter().all(|v| (v - 0.7).abs() < 1e-13));
        let r = m.rhs(&Field::constant(grid(), 1.0).unwrap()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn g_bounds_and_domain() {
        let m = logistic();
        let u = Field::from_fn(grid(), |x: f64| 0.5 + 0.5 * x.sin()).unwrap();
        let g = m.apply_g(&u).unwrap();
        assert!(g.iter().all(|&v| (0.0..=1.0 + 1e-15).contains(&v)));
        let bad = Field::from_fn(grid(), |_| 1.1).unwrap();
        assert!(matches!(m.apply_g(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn nonlocal_matches_local_form() {
        let base = grid();
        let comp = Kernel::gaussian(base, 2.0).unwrap();
        let m = Model::new(
            3.0,
            1.0,
            2.0,
            Kernel::gaussian(base, 1.0).unwrap(),
            Reaction::nonlocal(comp, 2.0).unwrap(),
        )
        .unwrap();
        let u = Field::from_fn(base, |x: f64| 1.0 + (x / 5.0).cos()).unwrap();
        let g = m.apply_g(&u).unwrap();
        let c = m.compete(&u).unwrap();
        let gamma = m.gamma().unwrap();
        for i in (0..512).step_by(37) {
            let v = u.values()[i];
            let lhs = v * g[i];
            let rhs = m.beta() * v - gamma * v * (2.0 - c[i]).powi(2);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert!((m.g_constant(2.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(m.g_constant(0.0).unwrap(), 0.0);
    }

    #[test]
    fn truncation_rescales_kappa() {
        let m = logistic();
        let t = truncate_kernel(&m, -1.0, 1.0).unwrap();
        assert!(t.kappa() < 2.0 && t.kappa() > 1.0);
        let r = truncate_kernel(&m, -0.1, 0.1);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
