//! Adaptive Gauss–Kronrod quadrature and Gauss–Legendre cell rules.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::num::{lit, Real};

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 5-point Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) const GL5: [(f64, f64); 5] = [
    (
        -0.906_179_845_938_663_992_797_626_878_299_392,
        0.236_926_885_056_189_087_514_264_040_719_918,
    ),
    (
        -0.538_469_310_105_683_091_036_314_420_700_208,
        0.478_628_670_499_366_468_041_291_514_835_639,
    ),
    (0.0, 0.568_888_888_888_888_888_888_888_888_888_889),
    (
        0.538_469_310_105_683_091_036_314_420_700_208,
        0.478_628_670_499_366_468_041_291_514_835_639,
    ),
    (
        0.906_179_845_938_663_992_797_626_878_299_392,
        0.236_926_885_056_189_087_514_264_040_719_918,
    ),
];

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = (b - a) * lit(0.5);
    let center = (a + b) * lit(0.5);
    let fc = f(center);
    let mut kronrod = fc * lit(WGK[7]);
    let mut gauss = fc * lit(WG[3]);
    for j in 0..7 {
        let dx = half * lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * lit(WG[j / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let (lo, hi, sign) = if a < b { (a, b, T::one()) } else { (b, a, -T::one()) };
    let mut segments = vec![{
        let (v, e) = gk15(&f, lo, hi);
        (lo, hi, v, e)
    }];
    for _ in 0..2000 {
        let total: T = segments.iter().map(|s| s.2).sum();
        let err: T = segments.iter().map(|s| s.3).sum();
        if !total.is_finite() {
            return Err(Error::Convergence("integrand is not finite".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(sign * total);
        }
        let (idx, _) =
            segments.iter().enumerate().fold(
                (0, T::neg_infinity()),
                |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc },
            );
        let (s_lo, s_hi, _, _) = segments.swap_remove(idx);
        let mid = (s_lo + s_hi) * lit(0.5);
        if mid <= s_lo || mid >= s_hi {
            break;
        }
        let (v1, e1) = gk15(&f, s_lo, mid);
        let (v2, e2) = gk15(&f, mid, s_hi);
        segments.push((s_lo, mid, v1, e1));
        segments.push((mid, s_hi, v2, e2));
    }
    let total: T = segments.iter().map(|s| s.2).sum();
    let err: T = segments.iter().map(|s| s.3).sum();
    if err <= lit::<T>(1e3) * abs_tol.max(rel_tol * total.abs()) {
        Ok(sign * total)
    } else {
        Err(Error::Convergence(format!(
            "adaptive quadrature error estimate {err} exceeds tolerance"
        )))
    }
}

/// `∫_a^∞ f`, integrated over geometrically growing segments until a segment
/// contributes less than `rel_tol` of the running total.
pub fn integrate_to_infinity<T: Real, F: Fn(T) -> T>(f: F, a: T, rel_tol: T) -> Result<T> {
    let mut width = a.abs().max(T::one());
    let mut lo = a;
    let mut total = T::zero();
    for _ in 0..2000 {
        let hi = lo + width;
        let piece = integrate(&f, lo, hi, T::min_positive_value(), rel_tol * lit(0.1))?;
        total = total + piece;
        if piece.abs() <= rel_tol * total.abs() * lit(1e-2) && total != T::zero() {
            return Ok(total);
        }
        if !hi.is_finite() {
            break;
        }
        lo = hi;
        width = width * lit(2.0);
    }
    Err(Error::Convergence(format!("tail integral from {a} did not converge")))
}
