use crate::dynamics::{evolve, solve_linear, EvolveOptions, Field, Model};
use crate::error::{invalid, Error, Result};
use crate::num::{lit, Real};
use crate::tails::TwoSidedTail;
use crate::Verdict;

/// Rows kept per time for reporting; the verdict uses every node.
const ROWS_PER_TIME: usize = 64;

#[derive(Debug, Clone)]
pub struct EnvelopeRow<T> {
    pub t: T,
    pub x: T,
    pub w: T,
    pub bound: T,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct EnvelopeReport<T> {
    /// Constant fitted at the first time and frozen afterwards.
    pub constant: T,
    pub rows: Vec<EnvelopeRow<T>>,
    /// Largest `w / bound` seen after the first time.
    pub worst_ratio: T,
    pub violations: usize,
    pub verdict: Verdict,
}

/// Checks `w(x,t) <= C e^{(ϰ(1+δ) − m)t} b(x)` for `|x| >= x_min`, where `w`
/// solves the linear problem from `u0` and `C` is fitted once at `times[0]`.
pub fn verify_upper_envelope<T: Real>(
    model: &Model<T>,
    u0: &Field<T>,
    b: &TwoSidedTail<T>,
    delta: T,
    times: &[T],
    x_min: T,
    dt: T,
) -> Result<EnvelopeReport<T>> {
    if !(delta > T::zero()) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    if times.len() < 2 {
        return Err(invalid("times", "need a fitting time and at least one checked time"));
    }
    let grid = *model.grid();
    let slack = T::one() + lit(1e-9);
    let two_sided = b.left_profile().is_some();
    let rho_right = b.right.rho();
    let rho_left = b.left_profile().map_or(T::infinity(), |p| p.rho());
    for (i, x) in grid.nodes().enumerate() {
        let beyond = x > rho_right || (two_sided && -x > rho_left);
        if !beyond {
            continue;
        }
        let bx = b.eval_log(x).map_or(T::zero(), T::exp);
        let top = model.kernel().value(x).max(u0.values()[i]);
        if top > bx * slack {
            return Err(Error::Domain(format!("max(a, u0) = {top} exceeds b = {bx} at x = {x}")));
        }
    }
    let opts = EvolveOptions::new(dt, times.to_vec()).without_monitor();
    let traj = solve_linear(model, u0, &opts)?;
    let rate = model.kappa() * (T::one() + delta) - model.mortality();
    let checked: Vec<(usize, T, T)> = grid
        .nodes()
        .enumerate()
        .filter(|(_, x)| *x >= x_min || (two_sided && *x <= -x_min))
        .filter_map(|(i, x)| b.eval_log(x).ok().map(|lb| (i, x, lb)))
        .collect();
    if checked.is_empty() {
        return Err(invalid("x_min", "no grid node lies beyond x_min"));
    }
    let ratio = |w: T, t: T, lb: T| w * (-(rate * t) - lb).exp();
    let first = &traj.snapshots[0];
    let constant = checked
        .iter()
        .map(|&(i, _, lb)| ratio(first.field.values()[i], first.t, lb))
        .fold(T::zero(), T::max);
    let stride = (checked.len() / ROWS_PER_TIME).max(1);
    let mut rows = Vec::new();
    let mut worst_ratio = T::zero();
    let mut violations = 0;
    for snap in &traj.snapshots {
        for (k, &(i, x, lb)) in checked.iter().enumerate() {
            let w = snap.field.values()[i];
            let bound = constant * (rate * snap.t + lb).exp();
            let pass = w <= bound * (T::one() + lit(1e-12));
            if snap.t > first.t {
                if constant > T::zero() {
                    worst_ratio = worst_ratio.max(ratio(w, snap.t, lb) / constant);
                }
                if !pass {
                    violations += 1;
                }
            }
            if k % stride == 0 || !pass {
                rows.push(EnvelopeRow {
                    t: snap.t,
                    x,
                    w,
                    bound,
                    pass,
                });
            }
        }
    }
    Ok(EnvelopeReport {
        constant,
        rows,
        worst_ratio,
        violations,
        verdict: (violations == 0).into(),
    })
}

#[derive(Debug, Clone)]
pub struct ComparisonReport<T> {
    pub verdict: Verdict,
    /// Largest `u − v` over all compared snapshots.
    pub max_excess: T,
    /// `(t, x)` of the largest excess.
    pub location: Option<(T, T)>,
    pub snapshots: usize,
}

/// Evolves `u0 <= v0` and checks `u <= v` at every common snapshot to `1e-9`.
pub fn comparison_test<T: Real>(
    model: &Model<T>,
    u0: &Field<T>,
    v0: &Field<T>,
    opts: &EvolveOptions<T>,
) -> Result<ComparisonReport<T>> {
    let tol = lit::<T>(1e-9);
    if u0.values().iter().zip(v0.values()).any(|(a, b)| *a > *b + tol) {
        return Err(Error::Precondition("initial data must satisfy u0 <= v0".into()));
    }
    let (tu, tv) = std::thread::scope(|s| {
        let h = s.spawn(|| evolve(model, v0, opts));
        (evolve(model, u0, opts), h.join().expect("comparison worker panicked"))
    });
    let (tu, tv) = (tu?, tv?);
    let mut max_excess = T::neg_infinity();
    let mut location = None;
    let n = tu.snapshots.len().min(tv.snapshots.len());
    for (su, sv) in tu.snapshots.iter().zip(&tv.snapshots).take(n) {
        for (i, (a, b)) in su.field.values().iter().zip(sv.field.values()).enumerate() {
            let d = *a - *b;
            if d > max_excess {
                max_excess = d;
                location = Some((su.t, su.field.grid().x(i)));
            }
        }
    }
    Ok(ComparisonReport {
        verdict: (max_excess <= tol).into(),
        max_excess,
        location,
        snapshots: n,
    })
}
