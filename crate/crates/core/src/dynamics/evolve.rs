use crate::error::{invalid, Error, Result};
use crate::num::{count, lit, to_f64, Real};
use crate::tails::Side;

use super::{Boundary, Field, Model};

/// Time stepping controls.
#[derive(Debug, Clone)]
pub struct EvolveOptions<T> {
    /// Largest step; each interval between snapshots is split evenly.
    pub dt: T,
    /// Strictly increasing, non-negative output times. The last one is the horizon.
    pub snapshot_times: Vec<T>,
    /// Level watched near the grid ends; `None` means `θ / 100`.
    pub monitor_level: Option<T>,
    /// Width of the watched band next to each end, as a fraction of `L`.
    pub edge_margin: T,
    /// Disables the edge monitor entirely.
    pub monitor: bool,
    /// Allowed excursion outside `[0, θ]`; `None` means `1e-9 max(θ, 1)`.
    pub range_tolerance: Option<T>,
}

impl<T: Real> EvolveOptions<T> {
    pub fn new(dt: T, snapshot_times: Vec<T>) -> Self {
        Self {
            dt,
            snapshot_times,
            monitor_level: None,
            edge_margin: lit(0.1),
            monitor: true,
            range_tolerance: None,
        }
    }

    pub fn without_monitor(mut self) -> Self {
        self.monitor = false;
        self
    }

    fn validate(&self, model: &Model<T>) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let rate = model.kappa() + model.mortality() + model.beta();
        if self.dt * rate > lit(0.5) {
            return Err(invalid(
                "dt",
                format!(
                    "dt = {} exceeds the stability bound 0.5 / (kappa + m + beta) = {}",
                    self.dt,
                    lit::<T>(0.5) / rate
                ),
            ));
        }
        if self.snapshot_times.is_empty() {
            return Err(invalid("snapshot_times", "at least one output time is required"));
        }
        if self.snapshot_times[0] < T::zero() || self.snapshot_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid(
                "snapshot_times",
                "times must be non-negative and strictly increasing",
            ));
        }
        if !(self.edge_margin >= T::zero() && self.edge_margin < T::one()) {
            return Err(invalid(
                "edge_margin",
                format!("must lie in [0, 1), got {}", self.edge_margin),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub t: T,
    pub field: Field<T>,
}

/// Why time stepping ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason<T> {
    Completed,
    /// The watched level came within the edge margin on `side` at `time`;
    /// later snapshots were not produced.
    DomainExhausted {
        time: T,
        side: Side,
    },
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub snapshots: Vec<Snapshot<T>>,
    pub steps: usize,
    pub stop: StopReason<T>,
    /// State when the edge monitor fired.
    pub last_state: Option<Snapshot<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn is_complete(&self) -> bool {
        self.stop == StopReason::Completed
    }

    /// Grid mass at each snapshot.
    pub fn masses(&self) -> Vec<(T, T)> {
        self.snapshots.iter().map(|s| (s.t, s.field.mass())).collect()
    }

    pub fn last(&self) -> Option<&Snapshot<T>> {
        self.last_state.as_ref().or(self.snapshots.last())
    }
}

/// Classical RK4 for the nonlinear problem from `u0`. Fails with
/// [`Error::Integration`] if the density leaves `[0, θ]` by more than
/// round-off.
pub fn evolve<T: Real>(model: &Model<T>, u0: &Field<T>, opts: &EvolveOptions<T>) -> Result<Trajectory<T>> {
    let tol = model.bound_tolerance();
    if u0.min() < -tol || u0.max() > model.theta() + tol {
        return Err(Error::Precondition(format!(
            "initial density must lie in [0, {}], got [{}, {}]",
            model.theta(),
            u0.min(),
            u0.max()
        )));
    }
    integrate(model, u0, opts, true)
}

/// RK4 for `∂w/∂t = ϰ (a * w) − m w`.
pub fn solve_linear<T: Real>(model: &Model<T>, w0: &Field<T>, opts: &EvolveOptions<T>) -> Result<Trajectory<T>> {
    if w0.min() < T::zero() {
        return Err(Error::Precondition("initial data must be non-negative".into()));
    }
    integrate(model, w0, opts, false)
}

struct Rates<T> {
    values: Vec<T>,
    left: T,
    right: T,
}

fn rates<T: Real>(model: &Model<T>, u: &Field<T>, nonlinear: bool) -> Result<Rates<T>> {
    let values = if nonlinear {
        let g = model.g_unchecked(u)?;
        model.rhs_with(u, Some(&g))?
    } else {
        model.rhs_linear(u)?
    };
    let (left, right) = model.boundary_rates(u, nonlinear)?;
    Ok(Rates { values, left, right })
}

fn shifted<T: Real>(u: &Field<T>, k: &Rates<T>, h: T) -> Field<T> {
    let values = u.values().iter().zip(&k.values).map(|(&v, &d)| v + h * d).collect();
    u.with_state(values, u.left().scalar() + h * k.left, u.right().scalar() + h * k.right)
}

fn rk4_step<T: Real>(model: &Model<T>, u: &Field<T>, h: T, nonlinear: bool) -> Result<Field<T>> {
    let half = h / lit(2.0);
    let k1 = rates(model, u, nonlinear)?;
    let k2 = rates(model, &shifted(u, &k1, half), nonlinear)?;
    let k3 = rates(model, &shifted(u, &k2, half), nonlinear)?;
    let k4 = rates(model, &shifted(u, &k3, h), nonlinear)?;
    let sixth = h / lit(6.0);
    let two = lit::<T>(2.0);
    let combine = |a: T, b: T, c: T, d: T| sixth * (a + two * b + two * c + d);
    let values = (0..u.values().len())
        .map(|i| u.values()[i] + combine(k1.values[i], k2.values[i], k3.values[i], k4.values[i]))
        .collect();
    Ok(u.with_state(
        values,
        u.left().scalar() + combine(k1.left, k2.left, k3.left, k4.left),
        u.right().scalar() + combine(k1.right, k2.right, k3.right, k4.right),
    ))
}

fn edge_breach<T: Real>(u: &Field<T>, level: T, margin: T) -> Option<Side> {
    let n = u.values().len();
    let band = (margin * u.grid().half_width() / u.grid().dx())
        .ceil()
        .to_usize()
        .unwrap_or(n)
        .clamp(1, n);
    let hit = |range: std::ops::Range<usize>| u.values()[range].iter().any(|&v| v >= level);
    if !matches!(u.right(), Boundary::Constant(_)) && hit(n - band..n) {
        return Some(Side::Right);
    }
    if !matches!(u.left(), Boundary::Constant(_)) && hit(0..band) {
        return Some(Side::Left);
    }
    None
}

fn integrate<T: Real>(
    model: &Model<T>,
    u0: &Field<T>,
    opts: &EvolveOptions<T>,
    nonlinear: bool,
) -> Result<Trajectory<T>> {
    opts.validate(model)?;
    model.check_grid(u0)?;
    let tol = opts.range_tolerance.unwrap_or_else(|| model.bound_tolerance());
    let level = opts.monitor_level.unwrap_or(model.theta() / lit(100.0));
    let mut u = u0.clone();
    let mut t = T::zero();
    let mut steps = 0;
    let mut snapshots = Vec::with_capacity(opts.snapshot_times.len());
    for &target in &opts.snapshot_times {
        let span = target - t;
        let n_steps = if span > T::zero() {
            (span / opts.dt - lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
        } else {
            0
        };
        let h = if n_steps > 0 { span / count(n_steps) } else { T::zero() };
        for j in 1..=n_steps {
            let now = if j == n_steps { target } else { t + h * count(j) };
            u = rk4_step(model, &u, h, nonlinear)?;
            steps += 1;
            if let Some(i) = u.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::Integration {
                    time: to_f64(now),
                    detail: format!("non-finite density at x = {}", u.grid().x(i)),
                });
            }
            if nonlinear {
                let (lo, hi) = (u.min(), u.max());
                if lo < -tol || hi > model.theta() + tol {
                    return Err(Error::Integration {
                        time: to_f64(now),
                        detail: format!("density range [{lo}, {hi}] left [0, {}]", model.theta()),
                    });
                }
            }
            if opts.monitor {
                if let Some(side) = edge_breach(&u, level, opts.edge_margin) {
                    return Ok(Trajectory {
                        snapshots,
                        steps,
                        stop: StopReason::DomainExhausted { time: now, side },
                        last_state: Some(Snapshot { t: now, field: u }),
                    });
                }
            }
        }
        t = target;
        snapshots.push(Snapshot { t, field: u.clone() });
    }
    Ok(Trajectory {
        snapshots,
        steps,
        stop: StopReason::Completed,
        last_state: None,
    })
}

/// `e^{−mt} Σ_{n<=n_max} (ϰt)^n / n! · a^{*n} * w0`, using the same
/// discrete convolution as the time stepper.
pub fn series_solution<T: Real>(model: &Model<T>, w0: &Field<T>, t: T, n_max: usize) -> Result<Field<T>> {
    if !(t >= T::zero() && t.is_finite()) {
        return Err(invalid("t", format!("must be non-negative, got {t}")));
    }
    let z = model.kappa() * t;
    // ln of the largest weight and of the first omitted one.
    let log_weight = |n: usize| count::<T>(n) * z.ln() - ln_factorial::<T>(n);
    let peak = z.floor().to_usize().unwrap_or(0);
    let log_peak = if z > T::zero() { log_weight(peak) } else { T::zero() };
    let first_omitted = n_max + 1;
    if z > T::zero() && log_weight(first_omitted) - log_peak > lit::<T>(1e-16).ln() {
        let needed = (first_omitted..)
            .find(|&n| n > peak && log_weight(n) - log_peak <= lit::<T>(1e-16).ln())
            .unwrap_or(first_omitted);
        return Err(Error::Convergence(format!(
            "series truncated too early at n_max = {n_max}; at least {} terms are needed",
            needed.saturating_sub(1)
        )));
    }
    let mut term = w0.clone();
    let mut sum: Vec<T> = w0.values().to_vec();
    let (mut left, mut right) = (w0.left().scalar(), w0.right().scalar());
    let (mut term_left, mut term_right) = (left, right);
    for n in 1..=n_max {
        let factor = z / count(n);
        let next: Vec<T> = model.disperse(&term)?.into_iter().map(|v| v * factor).collect();
        term_left = term_left * factor;
        term_right = term_right * factor;
        sum.iter_mut().zip(&next).for_each(|(s, v)| *s = *s + *v);
        left = left + term_left;
        right = right + term_right;
        term = term.with_state(next, term_left, term_right);
    }
    let decay = (-model.mortality() * t).exp();
    sum.iter_mut().for_each(|v| *v = *v * decay);
    Ok(w0.with_state(sum, left * decay, right * decay))
}

fn ln_factorial<T: Real>(n: usize) -> T {
    (2..=n).map(|k| count::<T>(k).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::{Grid, Kernel};
    use crate::dynamics::Reaction;

    fn model(reaction: Reaction<f64>) -> Model<f64> {
        let g = Grid::new(64.0, 1024).unwrap();
        Model::new(2.0, 1.0, 1.0, Kernel::gaussian(g, 1.0).unwrap(), reaction).unwrap()
    }

    #[test]
    fn equilibrium_and_zero_are_fixed_points() {
        let m = model(Reaction::logistic());
        let opts = EvolveOptions::new(0.05, vec![1.0, 5.0]);
        let theta = Field::constant(*m.grid(), 1.0).unwrap();
        let tr = evolve(&m, &theta, &opts).unwrap();
        assert!(tr.is_complete());
        for s in &tr.snapshots {
            assert!(s.field.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
        let zero = Field::zeros(*m.grid());
        let tr = evolve(&m, &zero, &opts).unwrap();
        assert!(tr.snapshots.iter().all(|s| s.field.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn constant_data_follows_logistic_ode() {
        let m = model(Reaction::logistic());
        let opts = EvolveOptions::new(0.01, vec![2.0]);
        let u0 = Field::constant(*m.grid(), 0.1).unwrap();
        let tr = evolve(&m, &u0, &opts).unwrap();
        let exact = 1.0 / (1.0 + 9.0 * (-2.0f64).exp());
        let u = &tr.snapshots[0].field;
        assert!(u.values().iter().all(|v| (v - exact).abs() < 1e-9));
        assert!((u.left().scalar() - exact).abs() < 1e-9);
    }

    #[test]
    fn linear_mass_grows_exponentially() {
        let m = model(Reaction::logistic());
        let w0 = Field::from_fn(*m.grid(), |x: f64| (-x * x).exp()).unwrap();
        let opts = EvolveOptions::new(0.01, vec![1.0, 3.0]).without_monitor();
        let tr = solve_linear(&m, &w0, &opts).unwrap();
        let m0 = w0.mass();
        for (t, mass) in tr.masses() {
            assert!((mass / (m0 * t.exp()) - 1.0).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn series_matches_linear_solver() {
        let m = model(Reaction::logistic());
        let w0 = Field::from_fn(*m.grid(), |x: f64| if x.abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let opts = EvolveOptions::new(0.01, vec![3.0]).without_monitor();
        let tr = solve_linear(&m, &w0, &opts).unwrap();
        let s = series_solution(&m, &w0, 3.0, 40).unwrap();
        let num = tr.snapshots[0].field.values();
        let scale = s.max();
        let err = num
            .iter()
            .zip(s.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err / scale < 1e-8, "relative error {}", err / scale);
        assert!(matches!(series_solution(&m, &w0, 3.0, 10), Err(Error::Convergence(_))));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let m = model(Reaction::logistic());
        let u0 = Field::from_fn(*m.grid(), |x: f64| 0.5 * (-x * x / 4.0).exp()).unwrap();
        let run = |dt: f64| {
            let opts = EvolveOptions::new(dt, vec![1.0]);
            evolve(&m, &u0, &opts).unwrap().snapshots[0].field.values().to_vec()
        };
        let fine = run(0.0125);
        let e1 = run(0.1)
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let e2 = run(0.05)
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let order = (e1 / e2).log2();
        assert!(order > 3.7 && order < 4.3, "observed order {order}");
    }

    #[test]
    fn monitor_stops_near_edge() {
        let m = model(Reaction::logistic());
        let u0 = Field::from_fn(*m.grid(), |x: f64| if x.abs() < 50.0 { 1.0 } else { 0.0 }).unwrap();
        let tr = evolve(&m, &u0, &EvolveOptions::new(0.1, vec![1.0, 20.0])).unwrap();
        assert!(matches!(tr.stop, StopReason::DomainExhausted { .. }));
        assert!(tr.last_state.is_some());
    }

    #[test]
    fn rejects_unstable_step() {
        let m = model(Reaction::logistic());
        let u0 = Field::zeros(*m.grid());
        assert!(evolve(&m, &u0, &EvolveOptions::new(0.2, vec![1.0])).is_err());
    }
}
