use crate::dynamics::{Boundary, Field, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::frontlaw::{FrontLaw, LeftLaw};
use crate::num::{count, lit, Real};
use crate::tails::Side;
use crate::Verdict;

/// Where a level set sits on one side of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelPosition<T> {
    At(T),
    /// The level is never reached on the grid.
    BelowLevel,
    /// The level is still held at the grid edge.
    BeyondGrid,
    /// The level is held all the way to infinity (constant continuation).
    Unbounded,
}

impl<T: Real> LevelPosition<T> {
    pub fn value(self) -> Option<T> {
        match self {
            LevelPosition::At(x) => Some(x),
            _ => None,
        }
    }

    /// Numeric rendering for reports: markers become `nan` or `±inf`.
    pub fn as_number(self, side: Side) -> T {
        match self {
            LevelPosition::At(x) => x,
            LevelPosition::BelowLevel => T::nan(),
            LevelPosition::BeyondGrid | LevelPosition::Unbounded => match side {
                Side::Right => T::infinity(),
                Side::Left => T::neg_infinity(),
            },
        }
    }
}

/// Outermost crossing of `level` on `side`, linearly interpolated between
/// the straddling nodes.
pub fn level_set_position<T: Real>(u: &Field<T>, level: T, side: Side) -> LevelPosition<T> {
    let v = u.values();
    let g = u.grid();
    let n = v.len();
    let held_outside = |b: &Boundary<T>| matches!(b, Boundary::Constant(c) if *c >= level);
    match side {
        Side::Right => {
            if v[n - 1] >= level {
                return if held_outside(u.right()) {
                    LevelPosition::Unbounded
                } else {
                    LevelPosition::BeyondGrid
                };
            }
            match v.iter().rposition(|&s| s >= level) {
                None => LevelPosition::BelowLevel,
                Some(i) => {
                    let w = (v[i] - level) / (v[i] - v[i + 1]);
                    LevelPosition::At(g.x(i) + g.dx() * w)
                }
            }
        }
        Side::Left => {
            if v[0] >= level {
                return if held_outside(u.left()) {
                    LevelPosition::Unbounded
                } else {
                    LevelPosition::BeyondGrid
                };
            }
            match v.iter().position(|&s| s >= level) {
                None => LevelPosition::BelowLevel,
                Some(i) => {
                    let w = (v[i] - level) / (v[i] - v[i - 1]);
                    LevelPosition::At(g.x(i) - g.dx() * w)
                }
            }
        }
    }
}

/// Level-set positions of a trajectory.
#[derive(Debug, Clone)]
pub struct FrontTrace<T> {
    pub level: T,
    pub times: Vec<T>,
    pub right: Vec<LevelPosition<T>>,
    pub left: Vec<LevelPosition<T>>,
    /// `(L, dx)` of the grid the positions were measured on.
    pub grid: Option<(T, T)>,
}

impl<T: Real> FrontTrace<T> {
    pub fn from_trajectory(traj: &Trajectory<T>, level: T) -> Result<Self> {
        let first = traj
            .snapshots
            .first()
            .ok_or_else(|| Error::Precondition("trajectory has no snapshots".into()))?;
        let g = first.field.grid();
        let mut trace = Self {
            level,
            times: Vec::new(),
            right: Vec::new(),
            left: Vec::new(),
            grid: Some((g.half_width(), g.dx())),
        };
        for s in &traj.snapshots {
            trace.times.push(s.t);
            trace.right.push(level_set_position(&s.field, level, Side::Right));
            trace.left.push(level_set_position(&s.field, level, Side::Left));
        }
        Ok(trace)
    }

    /// Trace from known right positions, with the left side unbounded.
    pub fn synthetic(level: T, points: &[(T, T)]) -> Self {
        Self {
            level,
            times: points.iter().map(|p| p.0).collect(),
            right: points.iter().map(|p| LevelPosition::At(p.1)).collect(),
            left: vec![LevelPosition::Unbounded; points.len()],
            grid: None,
        }
    }

    /// `(t, x⁺)` for every snapshot with a measured right front.
    pub fn right_points(&self) -> Vec<(T, T)> {
        self.times
            .iter()
            .zip(&self.right)
            .filter_map(|(&t, p)| p.value().map(|x| (t, x)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SandwichRow<T> {
    pub t: T,
    pub x_right: T,
    pub x_left: T,
    /// `r(t − εt)` and `r(t + εt)`.
    pub r_lower: T,
    pub r_upper: T,
    /// `−l(t − εt)` and `−l(t + εt)`; infinite when the left side is bounded below.
    pub l_inner: T,
    pub l_outer: T,
    /// `Undetermined` marks an inconclusive row.
    pub verdict: Verdict,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SandwichReport<T> {
    pub rows: Vec<SandwichRow<T>>,
    /// First time from which every conclusive row holds.
    pub engaged_at: Option<T>,
    /// First failing time after the sandwich engaged.
    pub violation_after: Option<T>,
    pub verdict: Verdict,
}

/// Checks `r(t − εt) ≤ x⁺_λ(t) ≤ r(t + εt)` and the left analog at every
/// snapshot. Fronts closer than ten cells to the grid edge, and times where
/// the law is not yet defined, are inconclusive.
pub fn sandwich_check<T: Real>(trace: &FrontTrace<T>, law: &FrontLaw<T>, eps: T) -> Result<SandwichReport<T>> {
    if !(eps > T::zero() && eps < T::one()) {
        return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
    }
    let clearance = trace.grid.map(|(l, dx)| (l, dx * lit(10.0)));
    let near_edge = |x: T| clearance.is_some_and(|(l, c)| x.abs() > l - c);
    let mut rows = Vec::with_capacity(trace.times.len());
    for (i, &t) in trace.times.iter().enumerate() {
        let (lo_t, hi_t) = (t - eps * t, t + eps * t);
        let x_right = trace.right[i].as_number(Side::Right);
        let x_left = trace.left[i].as_number(Side::Left);
        let mut row = SandwichRow {
            t,
            x_right,
            x_left,
            r_lower: T::nan(),
            r_upper: T::nan(),
            l_inner: T::nan(),
            l_outer: T::nan(),
            verdict: Verdict::Undetermined,
            note: String::new(),
        };
        if !(lo_t > law.tau()) {
            row.note = format!("law undefined at t - eps t = {lo_t}");
            rows.push(row);
            continue;
        }
        row.r_lower = law.r(lo_t)?;
        row.r_upper = law.r(hi_t)?;
        let two_sided = matches!(law.left_law(), LeftLaw::Tail(_));
        if two_sided {
            row.l_inner = -law.l(lo_t)?;
            row.l_outer = -law.l(hi_t)?;
        } else {
            row.l_inner = T::neg_infinity();
            row.l_outer = T::neg_infinity();
        }
        let right_ok = match trace.right[i] {
            LevelPosition::At(x) if near_edge(x) => None,
            LevelPosition::At(x) => Some(x >= row.r_lower && x <= row.r_upper),
            LevelPosition::BelowLevel => Some(false),
            LevelPosition::BeyondGrid | LevelPosition::Unbounded => None,
        };
        let left_ok = if two_sided {
            match trace.left[i] {
                LevelPosition::At(x) if near_edge(x) => None,
                LevelPosition::At(x) => Some(x <= row.l_inner && x >= row.l_outer),
                LevelPosition::BelowLevel => Some(false),
                LevelPosition::BeyondGrid | LevelPosition::Unbounded => None,
            }
        } else {
            // bounded below: the whole left half-line is inside the inner region
            match trace.left[i] {
                LevelPosition::Unbounded => Some(true),
                LevelPosition::BelowLevel => Some(false),
                LevelPosition::BeyondGrid => None,
                LevelPosition::At(_) => Some(false),
            }
        };
        row.verdict = match (right_ok, left_ok) {
            (Some(false), _) | (_, Some(false)) => Verdict::No,
            (Some(true), Some(true)) => Verdict::Yes,
            _ => Verdict::Undetermined,
        };
        if row.verdict == Verdict::Undetermined {
            row.note = "front within 10 cells of the grid edge".into();
        }
        rows.push(row);
    }
    let last_fail = rows.iter().rposition(|r| r.verdict == Verdict::No);
    let engaged_at = rows[last_fail.map_or(0, |i| i + 1)..]
        .iter()
        .find(|r| r.verdict == Verdict::Yes)
        .map(|r| r.t);
    let first_yes = rows.iter().position(|r| r.verdict == Verdict::Yes);
    let violation_after = first_yes.and_then(|k| rows[k..].iter().find(|r| r.verdict == Verdict::No).map(|r| r.t));
    let verdict = rows.iter().fold(Verdict::Yes, |acc, r| acc.and(r.verdict));
    Ok(SandwichReport {
        rows,
        engaged_at,
        violation_after,
        verdict,
    })
}

/// Least-squares slope of `ln x` against `t`.
pub fn fit_log_slope<T: Real>(points: &[(T, T)]) -> Option<T> {
    let pts: Vec<(T, T)> = points
        .iter()
        .filter(|p| p.1 > T::zero() && p.1.is_finite())
        .map(|&(t, x)| (t, x.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = count::<T>(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / k;
    let my = pts.iter().map(|p| p.1).sum::<T>() / k;
    let sxx: T = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}

/// Largest increase `u(x_{i+1}) − u(x_i)` over the grid (zero for a
/// non-increasing profile).
pub fn monotone_violation<T: Real>(u: &Field<T>) -> T {
    u.values().windows(2).map(|w| w[1] - w[0]).fold(T::zero(), T::max)
}
