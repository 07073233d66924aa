//! Predicted front positions `r(t)`, `l(t)` from `b(r(t)) = e^{-βt}`.
//!
//! Inversion works on `log b` by bisection on the monotone region of the
//! profile. The time-sampled checks (`check_*`) only certify their
//! properties on the ladder of times they were given.

use std::sync::RwLock;

use crate::error::{invalid, Error, Result};
use crate::num::{lit, Real};
use crate::tails::{
    classify_tail, log_equivalent, LeftTail, SampleOptions, Side, TailFamily, TailProfile, TwoSidedTail,
};
use crate::Verdict;

/// Largest bracket endpoint tried before giving up.
const BRACKET_LIMIT: f64 = 1e300;

/// Behaviour of the left front.
#[derive(Debug, Clone)]
pub enum LeftLaw<T> {
    Tail(TailProfile<T>),
    /// Left side bounded below: `l(t) = ∞`.
    Infinite,
}

/// Pairing of a tail with a growth rate `β`.
#[derive(Debug)]
pub struct FrontLaw<T> {
    right: TailProfile<T>,
    left: LeftLaw<T>,
    beta: T,
    tau: T,
    // largest upper bracket seen per side; only ever grows, so concurrent
    // fills are idempotent
    brackets: RwLock<[Option<T>; 2]>,
}

impl<T: Real> Clone for FrontLaw<T> {
    fn clone(&self) -> Self {
        Self {
            right: self.right.clone(),
            left: self.left.clone(),
            beta: self.beta,
            tau: self.tau,
            brackets: RwLock::new(*self.brackets.read().expect("bracket cache poisoned")),
        }
    }
}

/// Which end of `Λ±_ε` to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSign {
    /// Uses `t - εt`.
    Minus,
    /// Uses `t + εt`.
    Plus,
}

/// Space region `[-l, r]`, or `(-∞, r]` when the left side is bounded below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region<T> {
    TwoSided { left: T, right: T },
    LeftInfinite { right: T },
}

impl<T: Real> Region<T> {
    pub fn right(&self) -> T {
        match *self {
            Region::TwoSided { right, .. } | Region::LeftInfinite { right } => right,
        }
    }

    /// Left endpoint (`-∞` for the one-sided case).
    pub fn left(&self) -> T {
        match *self {
            Region::TwoSided { left, .. } => left,
            Region::LeftInfinite { .. } => T::neg_infinity(),
        }
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.left() && x <= self.right()
    }
}

fn tau_of<T: Real>(profile: &TailProfile<T>, beta: T) -> T {
    let start = profile.rho();
    match profile.log_outward(start) {
        Ok(l) if l.is_finite() => (-l / beta).max(T::zero()),
        _ => T::zero(),
    }
}

impl<T: Real> FrontLaw<T> {
    /// Law for a right tail with the left side bounded below (`l = ∞`).
    pub fn new(right: TailProfile<T>, beta: T) -> Result<Self> {
        Self::build(right, LeftLaw::Infinite, beta)
    }

    pub fn two_sided(tail: &TwoSidedTail<T>, beta: T) -> Result<Self> {
        let left = match tail.left {
            LeftTail::Tail(ref p) => LeftLaw::Tail(p.clone()),
            LeftTail::BoundedBelow(_) => LeftLaw::Infinite,
        };
        Self::build(tail.right.clone(), left, beta)
    }

    /// Same profile mirrored on both sides.
    pub fn symmetric(right: TailProfile<T>, beta: T) -> Result<Self> {
        let left = LeftLaw::Tail(right.reflected());
        Self::build(right, left, beta)
    }

    fn build(right: TailProfile<T>, left: LeftLaw<T>, beta: T) -> Result<Self> {
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(invalid("beta", format!("growth rate must be positive, got {beta}")));
        }
        if right.side() != Side::Right {
            return Err(invalid("right", "right law needs a right tail profile"));
        }
        let mut tau = tau_of(&right, beta);
        if let LeftLaw::Tail(ref l) = left {
            if l.side() != Side::Left {
                return Err(invalid("left", "left law needs a left tail profile"));
            }
            tau = tau.max(tau_of(l, beta));
        }
        Ok(Self {
            right,
            left,
            beta,
            tau,
            brackets: RwLock::new([None, None]),
        })
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Earliest time at which both fronts are defined.
    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn right_profile(&self) -> &TailProfile<T> {
        &self.right
    }

    pub fn left_law(&self) -> &LeftLaw<T> {
        &self.left
    }

    pub fn is_left_infinite(&self) -> bool {
        matches!(self.left, LeftLaw::Infinite)
    }

    /// `r(t)` for `Side::Right`, `l(t)` (a distance) for `Side::Left`.
    pub fn front_position(&self, t: T, side: Side) -> Result<T> {
        if !(t > self.tau) {
            return Err(Error::Domain(format!(
                "front is defined only for t > tau = {}, got t = {t}",
                self.tau
            )));
        }
        let (profile, slot) = match side {
            Side::Right => (&self.right, 0),
            Side::Left => match self.left {
                LeftLaw::Tail(ref p) => (p, 1),
                LeftLaw::Infinite => return Ok(T::infinity()),
            },
        };
        let target = -self.beta * t;
        let lo0 = profile.rho();
        let cached = self.brackets.read().expect("bracket cache poisoned")[slot];
        let mut hi = cached.unwrap_or_else(|| (lo0 + lo0).max(lo0 + T::one()));
        let mut lo = lo0;
        while profile.log_unchecked(hi) >= target {
            lo = hi;
            hi = hi + hi;
            if hi > lit(BRACKET_LIMIT) {
                return Err(Error::Overflow(format!(
                    "front at t = {t} lies beyond {BRACKET_LIMIT:e}"
                )));
            }
        }
        {
            let mut cache = self.brackets.write().expect("bracket cache poisoned");
            if cache[slot].is_none_or(|c| hi > c) {
                cache[slot] = Some(hi);
            }
        }
        // the cached bracket may overshoot by a lot; bisect geometrically while wide
        for _ in 0..2000 {
            if hi - lo <= lit::<T>(4.0) * T::epsilon() * hi {
                break;
            }
            let mid = if lo > T::zero() && hi > lo * lit(4.0) {
                lo.sqrt() * hi.sqrt()
            } else {
                (lo + hi) * lit(0.5)
            };
            if mid <= lo || mid >= hi {
                break;
            }
            if profile.log_unchecked(mid) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo + hi) * lit(0.5))
    }

    pub fn r(&self, t: T) -> Result<T> {
        self.front_position(t, Side::Right)
    }

    pub fn l(&self, t: T) -> Result<T> {
        self.front_position(t, Side::Left)
    }

    /// `Λ⁻_ε(t) = [-l(t-εt), r(t-εt)]` or `Λ⁺_ε(t) = [-l(t+εt), r(t+εt)]`.
    pub fn front_region(&self, t: T, eps: T, sign: RegionSign) -> Result<Region<T>> {
        if !(eps >= T::zero() && eps < T::one()) {
            return Err(invalid("eps", format!("needs eps in [0,1), got {eps}")));
        }
        let shifted = match sign {
            RegionSign::Minus => t - eps * t,
            RegionSign::Plus => t + eps * t,
        };
        let right = self.r(shifted)?;
        Ok(match self.left {
            LeftLaw::Infinite => Region::LeftInfinite { right },
            LeftLaw::Tail(_) => Region::TwoSided {
                left: -self.l(shifted)?,
                right,
            },
        })
    }
}

/// Closed-form front of a family with unit scale and no shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm<T> {
    pub value: T,
    /// Only the leading asymptotic of `r(t)` is known.
    pub asymptotic: bool,
}

pub fn closed_form_front<T: Real>(family: &TailFamily<T>, beta: T, t: T) -> Result<ClosedForm<T>> {
    let zero = T::zero();
    let bt = beta * t;
    let exact = |value| {
        Ok(ClosedForm {
            value,
            asymptotic: false,
        })
    };
    match *family {
        TailFamily::Power { q, mu } if mu == zero => exact((bt / q).exp()),
        TailFamily::LogPowerExp { p, q, mu, nu } if mu == zero && nu == zero => {
            exact((bt / p).powf(T::one() / q).exp())
        }
        TailFamily::StretchedExp { alpha, mu, nu } if mu == zero && nu == zero => exact(bt.powf(T::one() / alpha)),
        TailFamily::XOverLog { q, mu, nu } if mu == zero && nu == zero => Ok(ClosedForm {
            value: bt * t.ln().powf(q),
            asymptotic: true,
        }),
        TailFamily::Exponential { k } => exact(bt / k),
        _ => Err(Error::Domain(format!(
            "no closed-form front for the {} family with these parameters",
            family.name()
        ))),
    }
}

/// Times `start, start·ratio, ...` not exceeding `horizon`.
pub fn time_ladder<T: Real>(start: T, horizon: T, ratio: T) -> Result<Vec<T>> {
    if !(start > T::zero() && ratio > T::one() && horizon >= start) {
        return Err(invalid(
            "ladder",
            format!("needs 0 < start <= horizon and ratio > 1 (start {start}, horizon {horizon}, ratio {ratio})"),
        ));
    }
    let mut out = Vec::new();
    let mut t = start;
    while t <= horizon * (T::one() + lit(1e-12)) {
        out.push(t);
        t = t * ratio;
    }
    Ok(out)
}

fn ladder_start<T: Real>(earliest: T, horizon: T) -> T {
    let floor = horizon * lit(1e-4);
    (earliest * (T::one() + lit(1e-9)) + floor * lit(1e-3)).max(floor)
}

#[derive(Debug, Clone)]
pub struct SuperlinearReport<T> {
    pub verdict: Verdict,
    /// Start of the final run of samples where `r(t) - kt` is positive and increasing.
    pub first_positive: Option<T>,
    /// `(t, r(t) - kt)`
    pub samples: Vec<(T, T)>,
}

/// Samples `r(t) - kt` up to `horizon`; passes when it ends in a run that is
/// positive and increasing.
pub fn check_superlinear<T: Real>(law: &FrontLaw<T>, k: T, horizon: T, ratio: T) -> Result<SuperlinearReport<T>> {
    if !(k > T::zero()) {
        return Err(invalid("k", "speed must be positive"));
    }
    let ladder = time_ladder(ladder_start(law.tau(), horizon), horizon, ratio)?;
    let mut samples = Vec::new();
    for t in ladder {
        match law.r(t) {
            Ok(r) => samples.push((t, r - k * t)),
            Err(Error::Overflow(_)) => break,
            Err(e) => return Err(e),
        }
    }
    if samples.len() < 4 {
        return Err(Error::Domain("too few sampled times before the front overflows".into()));
    }
    // the early samples may be positive and then dip before the divergence
    let rising: Vec<(T, bool)> = samples
        .windows(2)
        .map(|w| (w[1].0, w[1].1 > T::zero() && w[1].1 > w[0].1))
        .collect();
    let first_positive = settled_from(&rising, |ok| ok);
    let verdict = Verdict::from(first_positive.is_some());
    Ok(SuperlinearReport {
        verdict,
        first_positive,
        samples,
    })
}

#[derive(Debug, Clone)]
pub struct ShiftReport<T> {
    /// Smallest sampled `τ` with `r(t-ε₁t) >= r(t-ε₂t) + kt` on all later samples.
    pub tau_emp: Option<T>,
    /// `(t, r(t-ε₁t) - r(t-ε₂t) - kt)`
    pub curve: Vec<(T, T)>,
}

/// Scan for the time after which `r(t-ε₁t) - r(t-ε₂t)` outruns `kt`.
pub fn check_linear_shift<T: Real>(
    law: &FrontLaw<T>,
    eps1: T,
    eps2: T,
    k: T,
    horizon: T,
    ratio: T,
) -> Result<ShiftReport<T>> {
    if !(T::zero() < eps1 && eps1 < eps2 && eps2 < T::one()) {
        return Err(Error::Precondition(format!(
            "needs 0 < eps1 < eps2 < 1, got eps1 = {eps1}, eps2 = {eps2}"
        )));
    }
    let class = classify_tail(law.right_profile(), &SampleOptions::default());
    if class.tail_convex != Verdict::Yes {
        return Err(Error::Precondition("linear shift needs a tail-convex profile".into()));
    }
    let earliest = law.tau() / (T::one() - eps2);
    let ladder = time_ladder(ladder_start(earliest, horizon), horizon, ratio)?;
    let mut curve = Vec::with_capacity(ladder.len());
    for t in ladder {
        let gap = match (law.r(t - eps1 * t), law.r(t - eps2 * t)) {
            (Ok(a), Ok(b)) => a - b - k * t,
            (Err(Error::Overflow(_)), _) | (_, Err(Error::Overflow(_))) => break,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        curve.push((t, gap));
    }
    let tau_emp = settled_from(&curve, |g| g >= T::zero());
    Ok(ShiftReport { tau_emp, curve })
}

/// First sample after which `ok` holds for every remaining sample.
fn settled_from<T: Real, V: Copy>(curve: &[(T, V)], ok: impl Fn(V) -> bool) -> Option<T> {
    let mut first = None;
    for &(t, v) in curve.iter().rev() {
        if ok(v) {
            first = Some(t);
        } else {
            break;
        }
    }
    first
}

/// One sampled time of the log-equivalence chain.
#[derive(Debug, Clone)]
pub struct ChainRow<T> {
    pub t: T,
    /// `η⁻_{ε₂}(b₂), η⁻_ε(b₁), η⁻_{ε₁}(b₂), η⁺_{ε₁}(b₂), η⁺_ε(b₁), η⁺_{ε₂}(b₂)`
    pub chain: [T; 6],
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct ChainReport<T> {
    pub tau_emp: Option<T>,
    pub rows: Vec<ChainRow<T>>,
}

/// Verifies the six-term chain between the fronts of two log-equivalent
/// tails, with `η±_ε(t, b) = r(t ± εt, b)`.
pub fn check_sandwich_equivalence<T: Real>(
    b1: &TailProfile<T>,
    b2: &TailProfile<T>,
    beta: T,
    eps: (T, T, T),
    horizon: T,
    ratio: T,
) -> Result<ChainReport<T>> {
    let (e1, e, e2) = eps;
    if !(T::zero() < e1 && e1 < e && e < e2 && e2 < T::one()) {
        return Err(Error::Precondition(format!(
            "needs 0 < eps1 < eps < eps2 < 1, got ({e1}, {e}, {e2})"
        )));
    }
    let opts = SampleOptions::default();
    for b in [b1, b2] {
        if classify_tail(b, &opts).tail_decreasing != Verdict::Yes {
            return Err(Error::Precondition(format!(
                "{} tail is not tail-decreasing",
                b.family().name()
            )));
        }
    }
    if log_equivalent(b1, b2, &opts)?.verdict != Verdict::Yes {
        return Err(Error::Precondition("tails are not log-equivalent".into()));
    }
    let law1 = FrontLaw::new(b1.clone(), beta)?;
    let law2 = FrontLaw::new(b2.clone(), beta)?;
    let earliest = law1.tau().max(law2.tau()) / (T::one() - e2);
    let ladder = time_ladder(ladder_start(earliest, horizon), horizon, ratio)?;
    let mut rows = Vec::with_capacity(ladder.len());
    for t in ladder {
        let values = [
            law2.r(t - e2 * t),
            law1.r(t - e * t),
            law2.r(t - e1 * t),
            law2.r(t + e1 * t),
            law1.r(t + e * t),
            law2.r(t + e2 * t),
        ];
        if values.iter().any(|v| matches!(v, Err(Error::Overflow(_)))) {
            break;
        }
        let mut chain = [T::zero(); 6];
        for (slot, v) in chain.iter_mut().zip(values) {
            *slot = v?;
        }
        let holds = chain.windows(2).all(|w| w[0] <= w[1]);
        rows.push(ChainRow { t, chain, holds });
    }
    if rows.is_empty() {
        return Err(Error::Domain("no sampled time fits below the horizon".into()));
    }
    let curve: Vec<(T, bool)> = rows.iter().map(|r| (r.t, r.holds)).collect();
    let tau_emp = settled_from(&curve, |h| h);
    Ok(ChainReport { tau_emp, rows })
}
