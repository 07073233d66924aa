//! Analytic heavy-tail families and their sampled classification.
//!
//! A [`TailProfile`] describes one side of a function `b` by its logarithm.
//! Everything is evaluated in log space: the acceptance scenarios reach
//! values around `1e-300`, and ratios such as `b(x+y)/b(x)` are formed as
//! `exp(log b(x+y) - log b(x))`.
//!
//! Positions are handled in the *outward coordinate* `s`: `s = x` for a
//! right tail and `s = -x` for a left tail, so left tails reuse the
//! right-tail code by reflection. The family formula is applied to
//! `z = s + shift`.
//!
//! Limits such as `b(x+y)/b(x) -> 1` are only ever *sampled*: a verdict is
//! [`Verdict::Yes`] when the deviation from the limit decreases over the last
//! three geometric samples and ends below the configured tolerance.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::num::{lit, Real};
use crate::quad;
use crate::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Right,
    Left,
}

impl Side {
    /// Maps a position on the real line to the outward coordinate.
    pub fn outward<T: Real>(self, x: T) -> T {
        match self {
            Side::Right => x,
            Side::Left => -x,
        }
    }
}

/// User supplied log-evaluator `z -> log f(z)`.
#[derive(Clone)]
pub struct CustomTail<T> {
    pub name: String,
    pub log_eval: Arc<dyn Fn(T) -> T + Send + Sync>,
    /// Smallest `z` at which `log_eval` may be called.
    pub domain_start: T,
}

impl<T: fmt::Debug> fmt::Debug for CustomTail<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTail")
            .field("name", &self.name)
            .field("domain_start", &self.domain_start)
            .finish_non_exhaustive()
    }
}

/// Heavy-tail families (plus the exponential reference family).
///
/// With `L = ln z`:
/// * `Power`: `L^mu z^-q`
/// * `LogPowerExp`: `L^mu z^nu exp(-p L^q)`
/// * `StretchedExp`: `L^mu z^nu exp(-z^alpha)`
/// * `XOverLog`: `L^mu z^nu exp(-z / L^q)`
/// * `Exponential`: `exp(-k z)`
#[derive(Debug, Clone)]
pub enum TailFamily<T> {
    Power { q: T, mu: T },
    LogPowerExp { p: T, q: T, mu: T, nu: T },
    StretchedExp { alpha: T, mu: T, nu: T },
    XOverLog { q: T, mu: T, nu: T },
    Exponential { k: T },
    Custom(CustomTail<T>),
}

impl<T: Real> TailFamily<T> {
    pub fn power(q: T) -> Self {
        TailFamily::Power { q, mu: T::zero() }
    }

    pub fn log_power_exp(p: T, q: T) -> Self {
        TailFamily::LogPowerExp {
            p,
            q,
            mu: T::zero(),
            nu: T::zero(),
        }
    }

    pub fn stretched_exp(alpha: T) -> Self {
        TailFamily::StretchedExp {
            alpha,
            mu: T::zero(),
            nu: T::zero(),
        }
    }

    pub fn x_over_log(q: T) -> Self {
        TailFamily::XOverLog {
            q,
            mu: T::zero(),
            nu: T::zero(),
        }
    }

    pub fn exponential(k: T) -> Self {
        TailFamily::Exponential { k }
    }

    pub fn name(&self) -> &str {
        match self {
            TailFamily::Power { .. } => "power",
            TailFamily::LogPowerExp { .. } => "log-power-exp",
            TailFamily::StretchedExp { .. } => "stretched-exp",
            TailFamily::XOverLog { .. } => "x-over-log",
            TailFamily::Exponential { .. } => "exponential",
            TailFamily::Custom(c) => &c.name,
        }
    }

    /// Light-tailed reference family; everything else is heavy.
    pub fn is_heavy(&self) -> bool {
        !matches!(self, TailFamily::Exponential { .. })
    }

    fn validate(&self) -> Result<()> {
        let one = T::one();
        match *self {
            TailFamily::Power { q, mu } => {
                if !(q > one) {
                    return Err(invalid("q", format!("power family needs q > 1, got {q}")));
                }
                finite("mu", mu)
            }
            TailFamily::LogPowerExp { p, q, mu, nu } => {
                if !(p > T::zero()) {
                    return Err(invalid("p", format!("needs p > 0, got {p}")));
                }
                if !(q > one) {
                    return Err(invalid("q", format!("needs q > 1, got {q}")));
                }
                finite("mu", mu)?;
                finite("nu", nu)
            }
            TailFamily::StretchedExp { alpha, mu, nu } => {
                if !(alpha > T::zero() && alpha < one) {
                    return Err(invalid("alpha", format!("needs alpha in (0,1), got {alpha}")));
                }
                finite("mu", mu)?;
                finite("nu", nu)
            }
            TailFamily::XOverLog { q, mu, nu } => {
                if !(q > one) {
                    return Err(invalid("q", format!("needs q > 1, got {q}")));
                }
                finite("mu", mu)?;
                finite("nu", nu)
            }
            TailFamily::Exponential { k } => {
                if !(k > T::zero()) {
                    return Err(invalid("k", format!("needs k > 0, got {k}")));
                }
                Ok(())
            }
            TailFamily::Custom(ref c) => finite("domain_start", c.domain_start),
        }
    }

    fn uses_log_log(&self) -> bool {
        match *self {
            TailFamily::Power { mu, .. } | TailFamily::StretchedExp { mu, .. } => mu != T::zero(),
            TailFamily::LogPowerExp { .. } | TailFamily::XOverLog { .. } => true,
            _ => false,
        }
    }

    /// Infimum of the `z` for which the formula is positive and finite, and
    /// whether that infimum itself is admissible.
    fn z_domain(&self) -> (T, bool) {
        match self {
            TailFamily::Exponential { .. } => (T::neg_infinity(), false),
            TailFamily::Custom(c) => (c.domain_start, true),
            f if f.uses_log_log() => (T::one(), false),
            TailFamily::StretchedExp { nu, .. } => (T::zero(), *nu == T::zero()),
            _ => (T::zero(), false),
        }
    }

    fn log_at(&self, z: T) -> T {
        let log_log_term = |mu: T| if mu == T::zero() { T::zero() } else { mu * z.ln().ln() };
        let pow_term = |nu: T| if nu == T::zero() { T::zero() } else { nu * z.ln() };
        match *self {
            TailFamily::Power { q, mu } => -q * z.ln() + log_log_term(mu),
            TailFamily::LogPowerExp { p, q, mu, nu } => log_log_term(mu) + pow_term(nu) - p * z.ln().powf(q),
            TailFamily::StretchedExp { alpha, mu, nu } => log_log_term(mu) + pow_term(nu) - z.powf(alpha),
            TailFamily::XOverLog { q, mu, nu } => log_log_term(mu) + pow_term(nu) - z / z.ln().powf(q),
            TailFamily::Exponential { k } => -k * z,
            TailFamily::Custom(ref c) => (c.log_eval)(z),
        }
    }

    /// `d/dz log f(z)`; analytic for the built-in families.
    fn log_slope_at(&self, z: T) -> T {
        let ln = z.ln();
        let ll = |mu: T| if mu == T::zero() { T::zero() } else { mu / (z * ln) };
        match *self {
            TailFamily::Power { q, mu } => -q / z + ll(mu),
            TailFamily::LogPowerExp { p, q, mu, nu } => ll(mu) + nu / z - p * q * ln.powf(q - T::one()) / z,
            TailFamily::StretchedExp { alpha, mu, nu } => ll(mu) + nu / z - alpha * z.powf(alpha - T::one()),
            TailFamily::XOverLog { q, mu, nu } => ll(mu) + nu / z - T::one() / ln.powf(q) + q / ln.powf(q + T::one()),
            TailFamily::Exponential { k } => -k,
            TailFamily::Custom(ref c) => {
                let h = z.abs().max(T::one()) * lit(1e-6);
                ((c.log_eval)(z + h) - (c.log_eval)(z - h)) / (h + h)
            }
        }
    }
}

fn finite<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "must be finite"))
    }
}

/// One side of an analytic tail `b`, described through `log b`.
#[derive(Debug, Clone)]
pub struct TailProfile<T> {
    family: TailFamily<T>,
    side: Side,
    /// Start of the monotone region, in the outward coordinate.
    rho: T,
    scale: T,
    shift: T,
}

impl<T: Real> TailProfile<T> {
    /// Profile with unit scale, zero shift and the default monotone-region start.
    pub fn new(family: TailFamily<T>, side: Side) -> Result<Self> {
        family.validate()?;
        let mut profile = Self {
            family,
            side,
            rho: T::zero(),
            scale: T::one(),
            shift: T::zero(),
        };
        profile.rho = profile.default_rho();
        Ok(profile)
    }

    pub fn right(family: TailFamily<T>) -> Result<Self> {
        Self::new(family, Side::Right)
    }

    pub fn left(family: TailFamily<T>) -> Result<Self> {
        Self::new(family, Side::Left)
    }

    /// Multiplies the profile by `scale > 0`.
    pub fn with_scale(mut self, scale: T) -> Result<Self> {
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(invalid("scale", format!("must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Evaluates the family at `s + shift`; resets `rho` to the default.
    pub fn with_shift(mut self, shift: T) -> Result<Self> {
        finite("shift", shift)?;
        self.shift = shift;
        self.rho = self.default_rho();
        Ok(self)
    }

    /// Overrides the monotone-region start. It may not precede the default.
    pub fn with_rho(mut self, rho: T) -> Result<Self> {
        if !(rho >= T::zero() && rho.is_finite()) {
            return Err(invalid("rho", format!("must be a finite position >= 0, got {rho}")));
        }
        let floor = self.default_rho();
        if rho < floor * (T::one() - lit(1e-9)) {
            return Err(invalid(
                "rho",
                format!("profile is not decreasing before {floor}, got rho = {rho}"),
            ));
        }
        self.rho = rho;
        Ok(self)
    }

    /// Same profile on the other side of the origin.
    pub fn reflected(&self) -> Self {
        let mut p = self.clone();
        p.side = match self.side {
            Side::Right => Side::Left,
            Side::Left => Side::Right,
        };
        p
    }

    pub fn family(&self) -> &TailFamily<T> {
        &self.family
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn shift(&self) -> T {
        self.shift
    }

    /// Smallest outward coordinate where the profile is defined (may be `-inf`).
    pub fn domain_start(&self) -> T {
        self.family.z_domain().0 - self.shift
    }

    fn in_domain(&self, s: T) -> bool {
        let (z0, inclusive) = self.family.z_domain();
        let z = s + self.shift;
        z > z0 || (inclusive && z == z0)
    }

    /// `log b` at outward coordinate `s`.
    pub fn log_outward(&self, s: T) -> Result<T> {
        if s.is_nan() {
            return Err(Error::Domain("position is NaN".into()));
        }
        if !self.in_domain(s) {
            return Err(Error::Domain(format!(
                "{} tail is not positive at outward position {s} (domain starts at {})",
                self.family.name(),
                self.domain_start()
            )));
        }
        Ok(self.scale.ln() + self.family.log_at(s + self.shift))
    }

    /// `log b(x)` for a position `x` on the real line.
    pub fn eval_log(&self, x: T) -> Result<T> {
        self.log_outward(self.side.outward(x))
    }

    /// `b(x)`; underflows to zero far out, prefer [`Self::eval_log`].
    pub fn eval(&self, x: T) -> Result<T> {
        self.eval_log(x).map(T::exp)
    }

    /// `log b` at outward coordinate `s`, assuming `s` is in the domain.
    pub(crate) fn log_unchecked(&self, s: T) -> T {
        self.scale.ln() + self.family.log_at(s + self.shift)
    }

    /// `log b(s + y) - log b(s)`. Small relative steps integrate the analytic
    /// slope instead of differencing two large logs.
    pub(crate) fn log_increment(&self, s: T, y: T) -> T {
        let custom = matches!(self.family, TailFamily::Custom(_));
        if custom || y.abs() > s.abs() * lit(1e-4) {
            return self.log_unchecked(s + y) - self.log_unchecked(s);
        }
        let z = s + self.shift;
        let slope = |z: T| self.family.log_slope_at(z);
        let half = y * lit(0.5);
        y / lit(6.0) * (slope(z) + lit::<T>(4.0) * slope(z + half) + slope(z + y))
    }

    /// Smallest `s >= 0` after which the log-derivative stays negative.
    fn default_rho(&self) -> T {
        let (z0, _) = self.family.z_domain();
        let z_lo = if z0.is_finite() {
            z0
        } else {
            -self.shift.max(T::zero()) - T::one()
        };
        // probe points from just above the domain start out to 1e15
        let base = z_lo.abs().max(T::one());
        let mut probes = Vec::with_capacity(400);
        let mut step = base * lit(1e-6);
        let mut z = z_lo + step;
        while z < lit(1e15) {
            probes.push(z);
            step = step * lit(1.15);
            z = z_lo + step;
        }
        let slope = |z: T| self.family.log_slope_at(z);
        let last_bad = probes.iter().rposition(|&z| !(slope(z) < T::zero()));
        let z_start = match last_bad {
            None => z_lo,
            Some(i) if i + 1 == probes.len() => probes[i],
            Some(i) => {
                let (mut lo, mut hi) = (probes[i], probes[i + 1]);
                for _ in 0..100 {
                    let mid = (lo + hi) * lit(0.5);
                    if slope(mid) < T::zero() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        };
        (z_start - self.shift).max(T::zero())
    }
}

/// Left-hand behaviour of a two-sided tail.
#[derive(Debug, Clone)]
pub enum LeftTail<T> {
    Tail(TailProfile<T>),
    /// `inf_{x <= -rho} b(x) >= level > 0` (the class `P(R-)`).
    BoundedBelow(T),
}

/// Class memberships of a two-sided tail, as sampled verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassTags {
    /// `L(R+)`
    pub long_right: Verdict,
    /// `L(R-)`
    pub long_left: Verdict,
    /// `P(R-)`
    pub bounded_below_left: bool,
    /// `S(R+)`
    pub subexp_right: Verdict,
    /// `M(R)`
    pub monotone: Verdict,
}

/// A function on the whole line described by its right and left tails.
#[derive(Debug, Clone)]
pub struct TwoSidedTail<T> {
    pub right: TailProfile<T>,
    pub left: LeftTail<T>,
    tags: ClassTags,
}

impl<T: Real> TwoSidedTail<T> {
    pub fn new(right: TailProfile<T>, left: LeftTail<T>) -> Result<Self> {
        if right.side() != Side::Right {
            return Err(invalid("right", "right tail must have side = right"));
        }
        if let LeftTail::Tail(ref l) = left {
            if l.side() != Side::Left {
                return Err(invalid("left", "left tail must have side = left"));
            }
        }
        if let LeftTail::BoundedBelow(level) = left {
            if !(level > T::zero()) {
                return Err(invalid("left", "bounded-below level must be positive"));
            }
        }
        let opts = SampleOptions::default();
        let right_class = classify_tail(&right, &opts);
        let long_left = match left {
            LeftTail::Tail(ref l) => classify_tail(l, &opts).long_tailed,
            LeftTail::BoundedBelow(_) => Verdict::No,
        };
        let subexp_right = if right_class.long_tailed == Verdict::Yes
            && right_class.tail_decreasing == Verdict::Yes
            && right_class.tail_log_convex == Verdict::Yes
        {
            match construct_h(&right, &opts) {
                Ok(_) => Verdict::Yes,
                Err(_) => Verdict::Undetermined,
            }
        } else if right_class.long_tailed == Verdict::No {
            Verdict::No
        } else {
            Verdict::Undetermined
        };
        let bounded_below_left = matches!(left, LeftTail::BoundedBelow(_));
        let monotone = if bounded_below_left {
            right_class.tail_decreasing
        } else {
            Verdict::No
        };
        let tags = ClassTags {
            long_right: right_class.long_tailed,
            long_left,
            bounded_below_left,
            subexp_right,
            monotone,
        };
        Ok(Self { right, left, tags })
    }

    /// Same profile mirrored onto both sides.
    pub fn symmetric(right: TailProfile<T>) -> Result<Self> {
        let left = right.reflected();
        Self::new(right, LeftTail::Tail(left))
    }

    pub fn tags(&self) -> ClassTags {
        self.tags
    }

    /// Whether the left side belongs to `P(R-)`.
    pub fn is_bounded_below_left(&self) -> bool {
        self.tags.bounded_below_left
    }

    pub fn left_profile(&self) -> Option<&TailProfile<T>> {
        match self.left {
            LeftTail::Tail(ref p) => Some(p),
            LeftTail::BoundedBelow(_) => None,
        }
    }

    /// `log b(x)`, using the right profile for `x >= 0` and the left one below.
    pub fn eval_log(&self, x: T) -> Result<T> {
        if x >= T::zero() {
            self.right.eval_log(x)
        } else {
            match self.left {
                LeftTail::Tail(ref p) => p.eval_log(x),
                LeftTail::BoundedBelow(level) => Ok(level.ln()),
            }
        }
    }
}

/// Sample ladders and tolerances for the sampled limit verdicts.
#[derive(Debug, Clone)]
pub struct SampleOptions {
    /// Pass threshold for `|ratio - 1|` at the largest sample.
    pub tolerance: f64,
    /// Decades at which long-tailedness is sampled (times `max(1, rho)`).
    pub long_tail_decades: [i32; 3],
    /// Decades at which `h` candidates are sampled (times `max(1, rho)`).
    pub h_decades: [i32; 3],
    /// Shifts `y` used in `b(x+y)/b(x)`.
    pub shifts: [f64; 3],
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.1,
            long_tail_decades: [5, 10, 15],
            h_decades: [8, 12, 16],
            shifts: [1.0, 5.0, 10.0],
        }
    }
}

/// Sampled answer to "does `dev` tend to zero?" over a short ladder.
pub fn limit_verdict<T: Real>(devs: &[T], tolerance: T) -> Verdict {
    let Some(&last) = devs.last() else {
        return Verdict::Undetermined;
    };
    if !last.is_finite() {
        return Verdict::Undetermined;
    }
    let tail = &devs[devs.len().saturating_sub(3)..];
    let slack = lit::<T>(1e-12);
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] + slack);
    if monotone && last < tolerance {
        return Verdict::Yes;
    }
    let first = tail[0];
    if last >= tolerance && last >= first * lit(0.5) {
        return Verdict::No;
    }
    Verdict::Undetermined
}

/// Sampled tail-class verdicts of one profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TailClass {
    pub long_tailed: Verdict,
    pub tail_decreasing: Verdict,
    pub tail_convex: Verdict,
    pub tail_log_convex: Verdict,
}

fn base_scale<T: Real>(p: &TailProfile<T>) -> T {
    p.rho().max(T::one())
}

/// Deviations `|b(x+y)/b(x) - 1|` at the sample ladder, one row per shift `y`.
pub fn long_tail_deviations<T: Real>(profile: &TailProfile<T>, opts: &SampleOptions) -> Vec<Vec<(T, T)>> {
    let base = base_scale(profile);
    opts.shifts
        .iter()
        .map(|&y| {
            let y = lit::<T>(y);
            opts.long_tail_decades
                .iter()
                .map(|&d| {
                    let s = base * lit::<T>(10f64.powi(d));
                    let delta = profile.log_increment(s, y);
                    (s, delta.exp_m1().abs())
                })
                .collect()
        })
        .collect()
}

/// Classifies a profile by sampling its tail.
pub fn classify_tail<T: Real>(profile: &TailProfile<T>, opts: &SampleOptions) -> TailClass {
    let tol = lit::<T>(opts.tolerance);
    let long_tailed = long_tail_deviations(profile, opts)
        .iter()
        .map(|row| limit_verdict(&row.iter().map(|r| r.1).collect::<Vec<_>>(), tol))
        .fold(Verdict::Yes, Verdict::and);

    let start = base_scale(profile) * lit(10.0);
    let stop = base_scale(profile) * lit(1e12);
    let n = 64;
    let ratio = (stop / start).powf(T::one() / lit(f64::from(n - 1)));
    let samples: Vec<T> = (0..n).map(|i| start * ratio.powi(i)).collect();

    let logs: Vec<T> = samples.iter().map(|&s| profile.log_unchecked(s)).collect();
    let decreasing = logs.windows(2).all(|w| w[1] < w[0]);

    let mut convex = true;
    let mut log_convex = true;
    for &s in &samples {
        let h = s * lit(0.01);
        let l0 = profile.log_unchecked(s);
        let lp = profile.log_unchecked(s + h);
        let lm = profile.log_unchecked(s - h);
        let roundoff = lit::<T>(64.0) * T::epsilon() * (l0.abs() + T::one());
        if (lp - l0).exp() + (lm - l0).exp() < lit::<T>(2.0) - roundoff {
            convex = false;
        }
        if lp + lm - l0 - l0 < -roundoff {
            log_convex = false;
        }
    }
    TailClass {
        long_tailed,
        tail_decreasing: Verdict::from(decreasing),
        tail_convex: Verdict::from(convex),
        tail_log_convex: Verdict::from(log_convex),
    }
}

/// The function `h` of the uniform long-tail property,
/// `h(x) = min(c x^gamma, x/4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HFunction<T> {
    pub coefficient: T,
    pub gamma: T,
}

impl<T: Real> HFunction<T> {
    pub fn eval(&self, x: T) -> T {
        if x <= T::zero() {
            return T::zero();
        }
        (self.coefficient * x.powf(self.gamma)).min(x * lit(0.25))
    }
}

/// Diagnostics of one `h` candidate at the sample ladder.
#[derive(Debug, Clone)]
pub struct HCandidate<T> {
    pub gamma: T,
    /// `(x, sup_{|y|<=h(x)} |b(x+y)/b(x) - 1|, x b(h(x)))`
    pub samples: Vec<(T, T, T)>,
    pub uniform_ok: bool,
    pub decay_ok: bool,
}

/// Exponents tried for `h(x) = x^gamma`.
pub const H_EXPONENTS: [f64; 6] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75];

/// Evaluates one power-form candidate `h(x) = x^gamma`.
pub fn h_candidate<T: Real>(profile: &TailProfile<T>, gamma: T, opts: &SampleOptions) -> HCandidate<T> {
    let h = HFunction {
        coefficient: T::one(),
        gamma,
    };
    let base = base_scale(profile);
    let tol = lit::<T>(opts.tolerance);
    let samples: Vec<(T, T, T)> = opts
        .h_decades
        .iter()
        .map(|&d| {
            let s = base * lit::<T>(10f64.powi(d));
            let hs = h.eval(s);
            let up = profile.log_increment(s, hs).exp_m1().abs();
            let down = if s - hs > profile.rho() {
                profile.log_increment(s, -hs).exp_m1().abs()
            } else {
                T::infinity()
            };
            let decay = if profile.in_domain(hs) {
                (s.ln() + profile.log_unchecked(hs)).exp()
            } else {
                T::infinity()
            };
            (s, up.max(down), decay)
        })
        .collect();
    let devs: Vec<T> = samples.iter().map(|s| s.1).collect();
    let uniform_ok = limit_verdict(&devs, tol) == Verdict::Yes;
    let decay_ok =
        samples.last().is_some_and(|s| s.2 < tol) && samples.windows(2).all(|w| w[1].2 * lit(10.0) <= w[0].2);
    HCandidate {
        gamma,
        samples,
        uniform_ok,
        decay_ok,
    }
}

/// Finds `h` with `sup_{|y|<=h(x)} |b(x+y)/b(x) - 1| -> 0` and `x b(h(x)) -> 0`.
///
/// Only power forms `x^gamma`, `gamma` in [`H_EXPONENTS`], are searched; the
/// first exponent that passes both sampled limits is returned.
pub fn construct_h<T: Real>(profile: &TailProfile<T>, opts: &SampleOptions) -> Result<HFunction<T>> {
    let class = classify_tail(profile, opts);
    if class.long_tailed != Verdict::Yes || class.tail_decreasing != Verdict::Yes {
        return Err(Error::Precondition(format!(
            "h requires a long-tailed, tail-decreasing profile; {} gave long_tailed = {:?}, tail_decreasing = {:?}",
            profile.family().name(),
            class.long_tailed,
            class.tail_decreasing
        )));
    }
    let mut report = Vec::new();
    for &g in &H_EXPONENTS {
        let cand = h_candidate(profile, lit(g), opts);
        if cand.uniform_ok && cand.decay_ok {
            return Ok(HFunction {
                coefficient: T::one(),
                gamma: lit(g),
            });
        }
        let last = cand.samples.last().copied();
        report.push(format!(
            "gamma={g}: uniform ratio limit {} (last {:?}), x*b(h(x)) limit {} (last {:?})",
            if cand.uniform_ok { "ok" } else { "FAILED" },
            last.map(|s| s.1),
            if cand.decay_ok { "ok" } else { "FAILED" },
            last.map(|s| s.2),
        ));
    }
    Err(Error::Construction(format!(
        "no power-form h for {} tail: {}",
        profile.family().name(),
        report.join("; ")
    )))
}

fn ensure_tail_decreasing<T: Real>(profile: &TailProfile<T>, s: T) -> Result<()> {
    if s < profile.rho() {
        return Err(Error::Domain(format!(
            "position {s} lies before the monotone region starting at {}",
            profile.rho()
        )));
    }
    Ok(())
}

/// `log ∫_s^∞ b` in the outward coordinate, relative to `log b(s)`.
fn log_tail_integral_outward<T: Real>(profile: &TailProfile<T>, s: T) -> Result<T> {
    match *profile.family() {
        TailFamily::Power { q, mu } if mu == T::zero() => {
            let z = s + profile.shift();
            Ok(profile.scale().ln() + (T::one() - q) * z.ln() - (q - T::one()).ln())
        }
        TailFamily::Exponential { k } => {
            let z = s + profile.shift();
            Ok(profile.scale().ln() - k * z - k.ln())
        }
        _ => {
            let l0 = profile.log_outward(s)?;
            let rel = quad::integrate_to_infinity(|y: T| (profile.log_unchecked(y) - l0).exp(), s, lit(1e-12))?;
            Ok(l0 + rel.ln())
        }
    }
}

/// Profile of `B(x) = ∫_x^∞ b(y) dy` (outward), as a custom family.
///
/// Power and exponential tails use closed forms; everything else adaptive
/// quadrature in log space.
pub fn tail_integral<T: Real>(profile: &TailProfile<T>) -> Result<TailProfile<T>> {
    match *profile.family() {
        TailFamily::Power { q, .. } if q <= T::one() => {
            return Err(Error::Domain(format!("power tail with q = {q} is not integrable")));
        }
        _ => {}
    }
    // probe integrability once so that failures surface here, not lazily
    let probe = profile.rho().max(profile.domain_start() + T::one()).max(T::zero());
    log_tail_integral_outward(profile, probe)?;

    let inner = profile.clone();
    let shift = profile.shift();
    let custom = CustomTail {
        name: format!("tail-integral({})", profile.family().name()),
        log_eval: Arc::new(move |z: T| log_tail_integral_outward(&inner, z - shift).unwrap_or(T::nan())),
        domain_start: profile.family().z_domain().0.max(lit(-1e300)),
    };
    let mut out = TailProfile {
        family: TailFamily::Custom(custom),
        side: profile.side(),
        rho: T::zero(),
        scale: T::one(),
        shift,
    };
    out.rho = profile.rho();
    Ok(out)
}

/// `∫_0^x b(x-y) b(y) dy / (2 (∫_{R+} b) b(x))` for a right tail defined on `[0, ∞)`.
pub fn subexp_density_ratio<T: Real>(profile: &TailProfile<T>, x: T) -> Result<T> {
    if profile.side() != Side::Right {
        return Err(invalid("profile", "sub-exponential ratio is defined for right tails"));
    }
    ensure_tail_decreasing(profile, x)?;
    if !profile.in_domain(T::zero()) {
        return Err(Error::Domain(format!(
            "{} tail is not defined on all of [0, x]; shift it so that b(0) is finite",
            profile.family().name()
        )));
    }
    let lx = profile.log_outward(x)?;
    let integrand = |y: T| (profile.log_unchecked(x - y) + profile.log_unchecked(y) - lx).exp();
    let half = x * lit(0.5);
    let conv = 2.0_f64;
    let mut total = T::zero();
    let mut lo = T::zero();
    let mut hi = T::one().min(half);
    while lo < half {
        total = total + quad::integrate(integrand, lo, hi, lit(1e-300), lit(1e-11))?;
        lo = hi;
        hi = (hi * lit(2.0)).min(half);
    }
    let mass = log_tail_integral_outward(profile, T::zero())?.exp();
    Ok(lit::<T>(conv) * total / (lit::<T>(2.0) * mass))
}

/// A bounded tail function `B` decreasing to zero, optionally with density `-B'`.
#[derive(Clone)]
pub struct DistributionTail<T> {
    tail: Arc<dyn Fn(T) -> T + Send + Sync>,
    density: Option<Arc<dyn Fn(T) -> T + Send + Sync>>,
    at_neg_infinity: T,
}

impl<T: fmt::Debug> fmt::Debug for DistributionTail<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistributionTail")
            .field("at_neg_infinity", &self.at_neg_infinity)
            .field("has_density", &self.density.is_some())
            .finish_non_exhaustive()
    }
}

impl<T: Real> DistributionTail<T> {
    /// `B(x) = ∫_x^∞ b 1_{[0,∞)}` for a right profile defined on `[0, ∞)`.
    pub fn from_density(profile: &TailProfile<T>) -> Result<Self> {
        if profile.side() != Side::Right || !profile.in_domain(T::zero()) {
            return Err(Error::Domain(
                "distribution tail needs a right profile defined on [0, ∞)".into(),
            ));
        }
        let integral = tail_integral(profile)?;
        let at_zero = integral.eval(T::zero())?;
        let b = profile.clone();
        Ok(Self {
            tail: Arc::new(move |x: T| {
                if x <= T::zero() {
                    at_zero
                } else {
                    integral.eval(x).unwrap_or(T::zero())
                }
            }),
            density: Some(Arc::new(move |x: T| {
                if x < T::zero() {
                    T::zero()
                } else {
                    b.eval(x).unwrap_or(T::zero())
                }
            })),
            at_neg_infinity: at_zero,
        })
    }

    /// Arbitrary tail function; the Stieltjes integral is then summed directly.
    pub fn from_fn(tail: impl Fn(T) -> T + Send + Sync + 'static, at_neg_infinity: T) -> Self {
        Self {
            tail: Arc::new(tail),
            density: None,
            at_neg_infinity,
        }
    }

    pub fn eval(&self, x: T) -> T {
        (self.tail)(x)
    }

    pub fn at_neg_infinity(&self) -> T {
        self.at_neg_infinity
    }

    fn check_monotone(&self, x: T) -> Result<()> {
        let n = 256;
        let mut prev = self.at_neg_infinity;
        for i in 0..=n {
            let y = x * lit::<T>(i as f64 / n as f64);
            let v = self.eval(y);
            if !(v.is_finite() && v >= T::zero()) {
                return Err(Error::Domain(format!(
                    "tail value {v} at {y} is not a finite non-negative number"
                )));
            }
            if v > prev * (T::one() + lit(1e-12)) {
                return Err(Error::Domain(format!("tail function increases near {y}")));
            }
            prev = v;
        }
        if !(self.eval(x) < self.at_neg_infinity * (T::one() - lit(1e-12))) {
            return Err(Error::Domain("tail function does not decay".into()));
        }
        Ok(())
    }
}

/// `-∫_0^x B(x-y) dB(y) / (2 B(-∞) B(x))`.
pub fn subexp_distribution_ratio<T: Real>(tail: &DistributionTail<T>, x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::Domain(format!("position must be positive, got {x}")));
    }
    tail.check_monotone(x)?;
    let bx = tail.eval(x);
    let numerator = match tail.density {
        Some(ref b) => {
            let f = |y: T| tail.eval(x - y) * b(y);
            let mut total = T::zero();
            let mut lo = T::zero();
            let mut hi = T::one().min(x);
            while lo < x {
                total = total + quad::integrate(f, lo, hi, T::min_positive_value(), lit(1e-11))?;
                lo = hi;
                hi = (hi * lit(2.0)).min(x);
            }
            total
        }
        None => {
            // jump at the origin, then a midpoint Riemann–Stieltjes sum
            let eps = x * lit(1e-12);
            let jump = (tail.eval(-eps) - tail.eval(T::zero())).max(T::zero()) * bx;
            let n = 200_000usize;
            let dy = x / lit(n as f64);
            let mut acc = T::zero();
            let mut b_prev = tail.eval(T::zero());
            for i in 0..n {
                let y1 = dy * lit((i + 1) as f64);
                let b_next = tail.eval(y1);
                let mid = dy * lit(i as f64 + 0.5);
                acc = acc + tail.eval(x - mid) * (b_prev - b_next);
                b_prev = b_next;
            }
            jump + acc
        }
    };
    Ok(numerator / (lit::<T>(2.0) * tail.at_neg_infinity * bx))
}

/// Sampled log-equivalence of two tails.
#[derive(Debug, Clone)]
pub struct LogEquivalence<T> {
    pub verdict: Verdict,
    /// `(x, log b1(x) / log b2(x))`
    pub ratios: Vec<(T, T)>,
    /// Fitted `r` in `|ratio - 1| ~ (log x)^-r`; `None` when the ratio is exactly 1.
    pub rate: Option<T>,
}

/// Samples `log b1 / log b2` at `x = 10^2, 10^4, ..., 10^300`.
pub fn log_equivalent<T: Real>(
    b1: &TailProfile<T>,
    b2: &TailProfile<T>,
    opts: &SampleOptions,
) -> Result<LogEquivalence<T>> {
    let start = b1.rho().max(b2.rho()).max(T::one());
    let max_exp = if T::max_value() > lit(1e300) { 300 } else { 36 };
    let mut ratios = Vec::new();
    for d in (2..=max_exp).step_by(2) {
        let x = start * lit::<T>(10f64.powi(d));
        if !x.is_finite() {
            break;
        }
        let r = b1.log_outward(x)? / b2.log_outward(x)?;
        ratios.push((x, r));
    }
    let devs: Vec<T> = ratios.iter().map(|r| (r.1 - T::one()).abs()).collect();
    let verdict = limit_verdict(&devs, lit(opts.tolerance));
    // least squares of ln|dev| against ln ln x over the second half
    let pts: Vec<(T, T)> = ratios[ratios.len() / 2..]
        .iter()
        .zip(&devs[devs.len() / 2..])
        .filter(|(_, &d)| d > T::zero())
        .map(|(r, &d)| (r.0.ln().ln(), d.ln()))
        .collect();
    let rate = if pts.len() >= 2 {
        let n = lit::<T>(pts.len() as f64);
        let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
        let my = pts.iter().map(|p| p.1).sum::<T>() / n;
        let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(-sxy / sxx)
    } else {
        None
    };
    Ok(LogEquivalence { verdict, ratios, rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(q: f64) -> TailProfile<f64> {
        TailProfile::right(TailFamily::power(q)).unwrap()
    }

    #[test]
    fn eval_log_examples() {
        let v = power(2.0).eval_log(10.0).unwrap();
        assert!((v + 2.0 * 10f64.ln()).abs() < 1e-12);
        let s = TailProfile::right(TailFamily::stretched_exp(0.5)).unwrap();
        assert!((s.eval_log(4.0).unwrap() + 2.0f64).abs() < 1e-12);
        let e = TailProfile::right(TailFamily::exponential(1.0)).unwrap();
        assert!((e.eval_log(3.0).unwrap() + 3.0f64).abs() < 1e-12);
    }

    #[test]
    fn eval_log_far_out_does_not_underflow() {
        let v = power(3.0).eval_log(1e12).unwrap();
        assert!((v + 36.0 * 10f64.ln()).abs() < 1e-9);
        let s = TailProfile::right(TailFamily::stretched_exp(0.5)).unwrap();
        assert_eq!(s.eval_log(1e12).unwrap(), -1e6);
    }

    #[test]
    fn outside_domain_is_error() {
        assert!(matches!(power(2.0).eval_log(-1.0), Err(Error::Domain(_))));
        let lp = TailProfile::right(TailFamily::log_power_exp(1.0, 2.0)).unwrap();
        assert!(lp.eval_log(0.5).is_err());
    }

    #[test]
    fn parameter_ranges_enforced() {
        assert!(TailProfile::right(TailFamily::power(1.0)).is_err());
        assert!(TailProfile::right(TailFamily::stretched_exp(1.0)).is_err());
        assert!(TailProfile::right(TailFamily::exponential(0.0)).is_err());
        assert!(TailProfile::right(TailFamily::<f64>::log_power_exp(0.0, 2.0)).is_err());
        assert!(power(2.0).with_scale(-1.0).is_err());
    }

    #[test]
    fn left_tail_reflects() {
        let r = power(2.0);
        let l = r.reflected();
        assert_eq!(l.eval_log(-10.0).unwrap(), r.eval_log(10.0).unwrap());
        assert!(l.eval_log(10.0).is_err());
    }

    #[test]
    fn default_rho_tracks_monotone_start() {
        // (log z)^3 z^-2 increases until log z = 3/2
        let p = TailProfile::right(TailFamily::Power { q: 2.0, mu: 3.0 }).unwrap();
        assert!((p.rho() - 1.5f64.exp()).abs() < 1e-6, "rho = {}", p.rho());
        // z / log(z)^2 decreases once log z > 2
        let x = TailProfile::right(TailFamily::x_over_log(2.0)).unwrap();
        assert!((x.rho() - 2f64.exp()).abs() < 1e-6, "rho = {}", x.rho());
        assert_eq!(power(3.0).rho(), 0.0);
        // shift moves the monotone region
        let p = TailProfile::right(TailFamily::Power { q: 2.0, mu: 3.0 })
            .unwrap()
            .with_shift(1.0)
            .unwrap();
        assert!((p.rho() - (1.5f64.exp() - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn classify_power_all_flags() {
        let c = classify_tail(&power(3.0), &SampleOptions::default());
        assert_eq!(c.long_tailed, Verdict::Yes);
        assert_eq!(c.tail_decreasing, Verdict::Yes);
        assert_eq!(c.tail_convex, Verdict::Yes);
        assert_eq!(c.tail_log_convex, Verdict::Yes);
    }

    #[test]
    fn classify_exponential_not_long_tailed() {
        for k in [0.1, 1.0, 3.0] {
            let e = TailProfile::right(TailFamily::exponential(k)).unwrap();
            assert_eq!(classify_tail(&e, &SampleOptions::default()).long_tailed, Verdict::No);
        }
    }

    #[test]
    fn stretched_exp_ratio_near_one_at_a_million() {
        let s = TailProfile::right(TailFamily::stretched_exp(0.5)).unwrap();
        for y in [1.0f64, 5.0, 10.0] {
            let r: f64 = (s.eval_log(1e6 + y).unwrap() - s.eval_log(1e6).unwrap()).exp();
            // exp(1000 - sqrt(1e6 + y)) rationalized
            let exact = (-y / ((1e6 + y).sqrt() + 1000.0)).exp();
            assert!((r - exact).abs() < 1e-10);
        }
        assert_eq!(classify_tail(&s, &SampleOptions::default()).long_tailed, Verdict::Yes);
    }

    #[test]
    fn construct_h_examples() {
        let opts = SampleOptions::default();
        let h = construct_h(&power(3.0), &opts).unwrap();
        assert_eq!(h.gamma, 0.5);
        for x in [1e4, 1e6, 1e8] {
            let hx: f64 = h.eval(x);
            assert!(hx < x / 2.0);
            // x b(h(x)) = x^{-1/2}
            assert!((x * hx.powf(-3.0) - x.powf(-0.5)).abs() < 1e-12);
        }
        let s = TailProfile::right(TailFamily::stretched_exp(0.5)).unwrap();
        assert_eq!(construct_h(&s, &opts).unwrap().gamma, 0.25);
        let e = TailProfile::right(TailFamily::exponential(1.0)).unwrap();
        assert!(matches!(construct_h(&e, &opts), Err(Error::Precondition(_))));
    }

    #[test]
    fn tail_integral_power_closed_form() {
        let b = power(3.0);
        let big_b = tail_integral(&b).unwrap();
        for x in [1.0, 2.0, 10.0, 1e6] {
            let v: f64 = big_b.eval(x).unwrap();
            assert!((v / (0.5 * x.powi(-2)) - 1.0).abs() < 1e-12);
        }
        assert!(tail_integral(&TailProfile::right(TailFamily::Power { q: 1.0 + 1e-9, mu: 0.0 }).unwrap()).is_ok());
    }

    #[test]
    fn subexp_density_ratio_exponential_closed_form() {
        let e = TailProfile::right(TailFamily::exponential(1.0)).unwrap();
        for x in [2.0f64, 10.0, 40.0] {
            let r = subexp_density_ratio(&e, x).unwrap();
            assert!((r - x / 2.0).abs() < 1e-8 * x, "x={x}: {r}");
        }
    }

    #[test]
    fn subexp_ratio_below_rho_is_domain_error() {
        let p = TailProfile::right(TailFamily::Power { q: 2.0, mu: 3.0 })
            .unwrap()
            .with_shift(1.0)
            .unwrap();
        assert!(matches!(subexp_density_ratio(&p, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn distribution_ratio_light_tail_grows() {
        let b = DistributionTail::from_fn(|x: f64| (-x.max(0.0)).exp(), 1.0);
        for x in [5.0, 20.0] {
            let r = subexp_distribution_ratio(&b, x).unwrap();
            assert!((r - x / 2.0).abs() < 1e-3 * x, "x={x}: {r}");
        }
    }

    #[test]
    fn distribution_ratio_rejects_constant_and_increasing() {
        let c = DistributionTail::from_fn(|_x: f64| 1.0, 1.0);
        assert!(matches!(subexp_distribution_ratio(&c, 5.0), Err(Error::Domain(_))));
        let inc = DistributionTail::from_fn(|x: f64| 0.5 + 0.01 * x.clamp(0.0, 10.0), 1.0);
        assert!(matches!(subexp_distribution_ratio(&inc, 5.0), Err(Error::Domain(_))));
    }

    #[test]
    fn log_equivalence_examples() {
        let opts = SampleOptions::default();
        let b1 = power(2.0);
        let b2 = TailProfile::right(TailFamily::Power { q: 2.0, mu: 3.0 })
            .unwrap()
            .with_scale(5.0)
            .unwrap();
        assert_eq!(log_equivalent(&b1, &b2, &opts).unwrap().verdict, Verdict::Yes);
        let b3 = power(3.0);
        let le = log_equivalent(&b1, &b3, &opts).unwrap();
        assert_eq!(le.verdict, Verdict::No);
        assert!((le.ratios.last().unwrap().1 - 2.0 / 3.0).abs() < 1e-12);
        let same = log_equivalent(&b1, &b1, &opts).unwrap();
        assert_eq!(same.verdict, Verdict::Yes);
        assert!(same.ratios.iter().all(|r| r.1 == 1.0));
    }

    #[test]
    fn two_sided_tags_consistent() {
        let t = TwoSidedTail::symmetric(power(3.0).with_shift(1.0).unwrap()).unwrap();
        let tags = t.tags();
        assert_eq!(tags.long_right, Verdict::Yes);
        assert_eq!(tags.subexp_right, Verdict::Yes);
        assert!(!tags.bounded_below_left);
        let pl = TwoSidedTail::new(power(3.0), LeftTail::BoundedBelow(1.0)).unwrap();
        assert!(pl.tags().bounded_below_left);
        assert_eq!(pl.tags().long_left, Verdict::No);
        assert_eq!(pl.eval_log(-5.0).unwrap(), 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let p = TailProfile::<f32>::right(TailFamily::power(2.0)).unwrap();
        assert!((p.eval_log(10.0).unwrap() + 2.0 * 10f32.ln()).abs() < 1e-5);
    }
}
