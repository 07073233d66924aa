use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convolution::Grid;
use crate::dynamics::{Boundary, Field, Model};
use crate::error::{invalid, Error, Result};
use crate::frontlaw::FrontLaw;
use crate::num::{count, lit, Real};
use crate::tails::{construct_h, HFunction, LeftTail, SampleOptions, TailProfile, TwoSidedTail};
use crate::Verdict;

const LEVELS: usize = 40;
const RANDOM_FIELDS: usize = 20;

/// `g(x,t) = λ` on `(−l_t, r_t)` and `λ b(x) e^{β⁻t}` outside, where
/// `β⁻ = β(1 − ε)`, `r_t = r(t − εt)` and `l_t = l(t − εt)`.
#[derive(Debug, Clone)]
pub struct SubSolution<T: Real> {
    lambda: T,
    eps: T,
    delta: T,
    beta: T,
    tails: TwoSidedTail<T>,
    law: FrontLaw<T>,
}

impl<T: Real> SubSolution<T> {
    pub fn new(tails: TwoSidedTail<T>, beta: T, lambda: T, eps: T, delta: T) -> Result<Self> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
        }
        if !(delta > T::zero() && delta < eps * beta) {
            return Err(invalid(
                "delta",
                format!("must lie in (0, eps beta) = (0, {}), got {delta}", eps * beta),
            ));
        }
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        let tags = tails.tags();
        let left_light = tails.left_profile().is_some() && tags.long_left == Verdict::No;
        if tags.long_right == Verdict::No || left_light {
            return Err(Error::Precondition(
                "the sub-solution needs long-tailed profiles".into(),
            ));
        }
        let law = FrontLaw::two_sided(&tails, beta)?;
        Ok(Self {
            lambda,
            eps,
            delta,
            beta,
            tails,
            law,
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn tails(&self) -> &TwoSidedTail<T> {
        &self.tails
    }

    /// `β⁻ = β (1 − ε)`.
    pub fn beta_minus(&self) -> T {
        self.beta * (T::one() - self.eps)
    }

    /// `(−l_t, r_t)`; the left end is `−∞` when the left side is bounded below.
    pub fn plateau(&self, t: T) -> Result<(T, T)> {
        let s = t - self.eps * t;
        if !(s > self.law.tau()) {
            return Err(Error::Domain(format!(
                "sub-solution needs (1 - eps) t > tau = {}, got t = {t}",
                self.law.tau()
            )));
        }
        let right = self.law.r(s)?;
        let left = match self.tails.left {
            LeftTail::Tail(_) => -self.law.l(s)?,
            LeftTail::BoundedBelow(_) => T::neg_infinity(),
        };
        Ok((left, right))
    }

    pub fn value(&self, x: T, t: T) -> Result<T> {
        let (lo, hi) = self.plateau(t)?;
        Ok(self.value_with(x, t, lo, hi))
    }

    fn value_with(&self, x: T, t: T, lo: T, hi: T) -> T {
        if x > lo && x < hi {
            self.lambda
        } else {
            let lb = self.tails.eval_log(x).unwrap_or(T::neg_infinity());
            self.lambda * (lb + self.beta_minus() * t).exp()
        }
    }
}

/// `g(·, t)` on `grid`, continued by `λ b e^{β⁻t}` beyond both ends
/// (or by `λ` on the left when the left side is bounded below).
pub fn build_subsolution<T: Real>(sub: &SubSolution<T>, t: T, grid: Grid<T>) -> Result<Field<T>> {
    let (lo, hi) = sub.plateau(t)?;
    let values = grid.nodes().map(|x| sub.value_with(x, t, lo, hi)).collect();
    let amplitude = sub.lambda * (sub.beta_minus() * t).exp();
    let left = match sub.tails.left {
        LeftTail::Tail(ref p) => Boundary::tail(p.clone(), amplitude),
        LeftTail::BoundedBelow(_) => Boundary::Constant(sub.lambda),
    };
    Field::new(grid, values, left, Boundary::tail(sub.tails.right.clone(), amplitude))
}

/// Whether `0 <= G v <= bound` for the sampled `0 <= v <= level`.
fn g_bounded<T: Real>(model: &Model<T>, level: T, bound: T, shapes: &[Vec<T>]) -> Result<bool> {
    let tol = lit::<T>(1e-12) * model.beta();
    for j in 0..=LEVELS {
        let g = model.g_constant(level * count::<T>(j) / count::<T>(LEVELS))?;
        if g < -tol || g > bound + tol {
            return Ok(false);
        }
    }
    let grid = *model.grid();
    for shape in shapes {
        let v = Field::new(
            grid,
            shape.iter().map(|&s| s * level).collect(),
            Boundary::Zero,
            Boundary::Zero,
        )?;
        if model.apply_g(&v)?.iter().any(|&g| g < -tol || g > bound + tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn random_shapes<T: Real>(n: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..RANDOM_FIELDS)
        .map(|_| (0..n).map(|_| lit::<T>(rng.gen::<f64>())).collect())
        .collect()
}

/// Largest `λ₀ <= θ` with `0 <= G v <= δ` for all sampled `0 <= v <= λ₀`,
/// by bisection over constant levels and seeded random densities.
pub fn lambda_zero<T: Real>(model: &Model<T>, delta: T, seed: u64) -> Result<T> {
    let shapes = random_shapes::<T>(model.grid().len(), seed);
    if g_bounded(model, model.theta(), delta, &shapes)? {
        return Ok(model.theta());
    }
    let (mut lo, mut hi) = (T::zero(), model.theta());
    for _ in 0..48 {
        let mid = (lo + hi) * lit(0.5);
        if g_bounded(model, mid, delta, &shapes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > T::zero() {
        Ok(lo)
    } else {
        Err(Error::Construction(format!(
            "no positive level keeps G below delta = {delta}"
        )))
    }
}

/// Part of the line a residual was taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Inside the plateau, away from its ends.
    Plateau,
    /// Within `h(r_t)` of a plateau end, on the inside.
    Shoulder,
    /// Outside the plateau.
    Tail,
    /// The one-sided limits at the plateau ends.
    Edge,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Plateau => "plateau",
            Regime::Shoulder => "shoulder",
            Regime::Tail => "tail",
            Regime::Edge => "edge",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubsolutionRow<T> {
    pub t: T,
    pub regime: Regime,
    /// Max of `∂g/∂t − ϰ a*g + (m + δ) g`.
    pub max_residual: T,
    /// Max of `∂g/∂t − ϰ a*g + m g + g G g`.
    pub max_nonlinear: T,
}

#[derive(Debug, Clone)]
pub struct SubsolutionReport<T> {
    pub rows: Vec<SubsolutionRow<T>>,
    /// Smallest sampled time after which every residual stays below `tolerance`.
    pub t0_emp: Option<T>,
    pub tolerance: T,
    pub verdict: Verdict,
}

impl<T: Real> SubsolutionReport<T> {
    /// Largest residual (either form, any regime) at each sampled time.
    pub fn worst_by_time(&self) -> Vec<(T, T)> {
        let mut out: Vec<(T, T)> = Vec::new();
        for r in &self.rows {
            let v = r.max_residual.max(r.max_nonlinear);
            match out.last_mut() {
                Some(last) if last.0 == r.t => last.1 = last.1.max(v),
                _ => out.push((r.t, v)),
            }
        }
        out
    }
}

fn shoulder_width<T: Real>(profile: Option<&TailProfile<T>>) -> HFunction<T> {
    profile
        .and_then(|p| construct_h(p, &SampleOptions::default()).ok())
        .unwrap_or(HFunction {
            coefficient: T::one(),
            gamma: T::one(),
        })
}

/// Evaluates the linear and nonlinear residuals of `g` on the model grid at
/// each of `times`, split by regime. The time derivative is analytic:
/// `β⁻ g` off the plateau and zero on it.
pub fn verify_subsolution<T: Real>(
    sub: &SubSolution<T>,
    model: &Model<T>,
    times: &[T],
    seed: u64,
) -> Result<SubsolutionReport<T>> {
    if (model.beta() - sub.beta).abs() > lit::<T>(1e-12) * model.beta() {
        return Err(invalid("beta", "sub-solution and model disagree on beta"));
    }
    let shapes = random_shapes::<T>(model.grid().len(), seed);
    if !g_bounded(model, sub.lambda.min(model.theta()), sub.delta, &shapes)? {
        return Err(Error::Precondition(format!(
            "G exceeds delta = {} somewhere below lambda = {}",
            sub.delta, sub.lambda
        )));
    }
    let grid = *model.grid();
    let h_right = shoulder_width(Some(&sub.tails.right));
    let h_left = shoulder_width(sub.tails.left_profile());
    let tolerance = lit::<T>(1e-8) * sub.lambda;
    let (kappa, m, delta) = (model.kappa(), model.mortality(), sub.delta);
    let bm = sub.beta_minus();
    let mut rows = Vec::new();
    for &t in times {
        let (lo, hi) = sub.plateau(t)?;
        let edge = grid.half_width() - grid.dx() * lit(10.0);
        if hi >= edge || lo <= -edge {
            return Err(Error::GridTooSmall(format!(
                "plateau ({lo}, {hi}) at t = {t} reaches the grid edge"
            )));
        }
        let g = build_subsolution(sub, t, grid)?;
        let spread = model.disperse(&g)?;
        let gg = model.apply_g(&g)?;
        let (sh_hi, sh_lo) = (hi - h_right.eval(hi), lo + h_left.eval(-lo));
        let mut worst = [(T::neg_infinity(), T::neg_infinity()); 4];
        for (i, x) in grid.nodes().enumerate() {
            let v = g.values()[i];
            let inside = x > lo && x < hi;
            let dg = if inside { T::zero() } else { bm * v };
            let linear = dg - kappa * spread[i] + (m + delta) * v;
            let nonlinear = dg - kappa * spread[i] + m * v + v * gg[i];
            let k = if !inside {
                2
            } else if x >= sh_hi || x <= sh_lo {
                1
            } else {
                0
            };
            worst[k].0 = worst[k].0.max(linear);
            worst[k].1 = worst[k].1.max(nonlinear);
        }
        let lambda = sub.lambda;
        let g_edge = model.g_constant(lambda)?;
        let mut ends = vec![hi];
        if lo.is_finite() {
            ends.push(lo);
        }
        for x in ends {
            let a = interpolate(&grid, &spread, x);
            // plateau side: no time derivative; tail side: β⁻ λ
            for dg in [T::zero(), bm * lambda] {
                worst[3].0 = worst[3].0.max(dg - kappa * a + (m + delta) * lambda);
                worst[3].1 = worst[3].1.max(dg - kappa * a + m * lambda + lambda * g_edge);
            }
        }
        for (k, regime) in [Regime::Plateau, Regime::Shoulder, Regime::Tail, Regime::Edge]
            .into_iter()
            .enumerate()
        {
            if worst[k].0.is_finite() {
                rows.push(SubsolutionRow {
                    t,
                    regime,
                    max_residual: worst[k].0,
                    max_nonlinear: worst[k].1,
                });
            }
        }
    }
    let report = SubsolutionReport {
        rows,
        t0_emp: None,
        tolerance,
        verdict: Verdict::No,
    };
    let by_time = report.worst_by_time();
    let first_good = by_time.iter().rposition(|p| p.1 > tolerance).map_or(0, |i| i + 1);
    let t0_emp = by_time.get(first_good).map(|p| p.0);
    Ok(SubsolutionReport {
        t0_emp,
        verdict: t0_emp.is_some().into(),
        ..report
    })
}

fn interpolate<T: Real>(grid: &Grid<T>, values: &[T], x: T) -> T {
    let last = values.len() - 1;
    let i = grid.index_floor(x).min(last - 1);
    let w = ((x - grid.x(i)) / grid.dx()).max(T::zero()).min(T::one());
    values[i] * (T::one() - w) + values[i + 1] * w
}
