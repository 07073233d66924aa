use crate::error::{invalid, Error, Result};
use crate::num::{count, lit, Real};
use crate::tails::TwoSidedTail;
use crate::Verdict;

use super::{conv_powers, Grid, GridFunction};

/// Tail function `B(x_i) = ∫_{x_i}^∞ f` tabulated on a grid.
#[derive(Debug, Clone)]
pub struct GridTail<T> {
    grid: Grid<T>,
    values: Vec<T>,
    at_neg_infinity: T,
}

impl<T: Real> GridTail<T> {
    /// Tail sums of `f`, accumulated from the right end inward and starting
    /// from the mass `f` carries beyond the grid.
    pub fn of(f: &GridFunction<T>) -> Self {
        let dx = f.grid().dx();
        let (outer_left, outer_right) = f.outer_mass();
        let mut values = vec![T::zero(); f.values().len()];
        let mut acc = outer_right;
        for (i, v) in f.values().iter().enumerate().rev() {
            acc = acc + *v * dx;
            values[i] = acc;
        }
        Self {
            grid: *f.grid(),
            values,
            at_neg_infinity: acc + outer_left,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn at_neg_infinity(&self) -> T {
        self.at_neg_infinity
    }

    /// Value at the node nearest to `x`.
    pub fn at(&self, x: T) -> T {
        self.values[self.grid.index_nearest(x)]
    }
}

/// `B^{⋆n}` as the right tail sum of `b^{*n}`.
pub fn stieltjes_conv_power<T: Real>(b: &GridFunction<T>, n: usize) -> Result<GridTail<T>> {
    Ok(GridTail::of(&super::conv_power(b, n)?))
}

/// Settings shared by the density and distribution Kesten checks.
#[derive(Debug, Clone)]
pub struct KestenOptions<T> {
    pub delta: T,
    pub n_max: usize,
    /// Start of the checked region; excludes the pre-asymptotic head.
    pub x_lo: T,
    /// Ratios are only read on `x <= window_fraction * L`.
    pub window_fraction: T,
    /// Values below this fraction of their maximum count as FFT noise.
    pub noise_floor: T,
    /// Empirical constants above this are reported as failures.
    pub fail_constant: T,
}

impl<T: Real> Default for KestenOptions<T> {
    fn default() -> Self {
        Self {
            delta: lit(0.5),
            n_max: 8,
            x_lo: T::zero(),
            window_fraction: lit(0.8),
            noise_floor: lit(1e-13),
            fail_constant: lit(1e6),
        }
    }
}

/// One reported sample of a Kesten check.
#[derive(Debug, Clone, PartialEq)]
pub struct KestenRow<T> {
    pub n: usize,
    pub x: T,
    /// `b^{*n}(x) / b(x)` (or the distribution analogue).
    pub ratio: T,
    /// `C_emp (1+δ)^n m^{n-1}` with `m` the total mass.
    pub bound: T,
    pub pass: bool,
}

/// Limit estimate `b^{*n}(x)/b(x)` against `n m^{n-1}` at the largest reliable `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct KestenLimit<T> {
    pub n: usize,
    pub x: T,
    pub measured: T,
    pub target: T,
}

#[derive(Debug, Clone)]
pub struct KestenReport<T> {
    /// Smallest `C >= 1` with `r_n(x) <= C` on the checked region.
    pub c_emp: T,
    /// Smallest checked `x` beyond which every `r_n <= 1`.
    pub x_emp: Option<T>,
    pub mass: T,
    pub limits: Vec<KestenLimit<T>>,
    pub rows: Vec<KestenRow<T>>,
    /// `b^{*n}/b` still grows at the end of the window for some `n`.
    pub growth_detected: bool,
    pub verdict: Verdict,
}

fn validate<T: Real>(opts: &KestenOptions<T>) -> Result<()> {
    if !(opts.delta > T::zero() && opts.delta < T::one()) {
        return Err(invalid("delta", format!("needs delta in (0,1), got {}", opts.delta)));
    }
    if opts.n_max == 0 {
        return Err(invalid("n_max", "needs n_max >= 1"));
    }
    if !(opts.window_fraction > T::zero() && opts.window_fraction <= T::one()) {
        return Err(invalid("window_fraction", "needs a fraction in (0,1]"));
    }
    Ok(())
}

/// Shared ratio scan: `series[n-1][i]` against `base[i]`.
fn scan<T: Real>(
    grid: &Grid<T>,
    base: &[T],
    series: &[Vec<T>],
    mass: T,
    opts: &KestenOptions<T>,
) -> Result<KestenReport<T>> {
    let hi = opts.window_fraction * grid.half_width();
    let maxima: Vec<T> = series
        .iter()
        .map(|s| s.iter().copied().fold(T::zero(), T::max))
        .collect();
    let reliable = |i: usize| series.iter().zip(&maxima).all(|(s, &m)| s[i] > opts.noise_floor * m);
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.x(i);
            x >= opts.x_lo && x <= hi
        })
        .skip_while(|&i| !reliable(i))
        .take_while(|&i| reliable(i))
        .collect();
    if nodes.len() < 4 {
        return Err(Error::GridTooSmall(format!(
            "fewer than four reliable nodes in [{}, {hi}]",
            opts.x_lo
        )));
    }
    let one_plus = T::one() + opts.delta;
    let scale = |n: usize| one_plus.powi(n as i32) * mass.powi(n as i32 - 1);

    let mut c_emp = T::one();
    let mut tail_sup = vec![T::zero(); nodes.len()];
    let mut running = T::zero();
    for (k, &i) in nodes.iter().enumerate().rev() {
        for (n0, s) in series.iter().enumerate() {
            let r = s[i] / (scale(n0 + 1) * base[i]);
            running = running.max(r);
            c_emp = c_emp.max(r);
        }
        tail_sup[k] = running;
    }
    let x_emp = tail_sup.iter().position(|&s| s <= T::one()).map(|k| grid.x(nodes[k]));

    let last = *nodes.last().expect("non-empty");
    let x_last = grid.x(last);
    let x_first = grid.x(nodes[0]);
    let mid_x = (x_first + x_last) * lit(0.5);
    let mid = nodes[nodes.partition_point(|&i| grid.x(i) < mid_x).min(nodes.len() - 1)];
    let mut growth_detected = false;
    let mut limits = Vec::new();
    for (n0, s) in series.iter().enumerate() {
        let n = n0 + 1;
        let end = s[last] / base[last];
        let middle = s[mid] / base[mid];
        if n >= 2 && end > middle * lit(2.0) {
            growth_detected = true;
        }
        limits.push(KestenLimit {
            n,
            x: x_last,
            measured: end,
            target: count::<T>(n) * mass.powi(n as i32 - 1),
        });
    }

    let mut rows = Vec::new();
    let samples = 48usize.min(nodes.len());
    for (n0, power) in series.iter().enumerate() {
        let bound = c_emp * scale(n0 + 1);
        for k in 0..samples {
            let idx = nodes[(k * (nodes.len() - 1)) / (samples - 1).max(1)];
            let ratio = power[idx] / base[idx];
            rows.push(KestenRow {
                n: n0 + 1,
                x: grid.x(idx),
                ratio,
                bound,
                pass: ratio <= bound * (T::one() + lit(1e-12)),
            });
        }
    }
    let verdict = Verdict::from(!growth_detected && c_emp <= opts.fail_constant);
    Ok(KestenReport {
        c_emp,
        x_emp,
        mass,
        limits,
        rows,
        growth_detected,
        verdict,
    })
}

/// Empirical constants in `b^{*n}(x) <= C (1+δ)^n (∫b)^{n-1} b(x)`, `n <= n_max`.
pub fn kesten_density_check<T: Real>(b: &GridFunction<T>, opts: &KestenOptions<T>) -> Result<KestenReport<T>> {
    validate(opts)?;
    let powers = conv_powers(b, opts.n_max)?;
    if powers.iter().any(GridFunction::aliased) {
        return Err(Error::GridTooSmall(
            "density carries mass next to the grid edge; the tail region is aliased".into(),
        ));
    }
    let series: Vec<Vec<T>> = powers.into_iter().map(GridFunction::into_values).collect();
    scan(b.grid(), b.values(), &series, b.total_mass(), opts)
}

/// Empirical constant in `B^{⋆n}(x) <= C (1+δ)^n B(-∞)^{n-1} B(x)` for `x >= 0`.
pub fn kesten_distribution_check<T: Real>(b: &GridFunction<T>, opts: &KestenOptions<T>) -> Result<KestenReport<T>> {
    validate(opts)?;
    let powers = conv_powers(b, opts.n_max)?;
    if powers.iter().any(GridFunction::aliased) {
        return Err(Error::GridTooSmall(
            "density carries mass next to the grid edge; the tail region is aliased".into(),
        ));
    }
    let tails: Vec<GridTail<T>> = powers.iter().map(GridTail::of).collect();
    let base = tails[0].values().to_vec();
    let mass = tails[0].at_neg_infinity();
    let series: Vec<Vec<T>> = tails.into_iter().map(|t| t.values).collect();
    let mut opts = opts.clone();
    opts.x_lo = opts.x_lo.max(T::zero());
    scan(b.grid(), &base, &series, mass, &opts)
}

/// `D = inf_{|x| >= ρ} (g * f)(x) / g(x)`, sampled.
///
/// The samples run geometrically from `ρ` to `10^6 max(ρ, 1)` (right side
/// only when `g` is bounded below on the left). Since the ratio tends to
/// `∫f` for long-tailed `g`, that limit is included in the infimum.
pub fn conv_lower_constant<T: Real>(g: &TwoSidedTail<T>, f: &GridFunction<T>, rho: T) -> Result<T> {
    let tags = g.tags();
    let left_ok = g.is_bounded_below_left() || tags.long_left == Verdict::Yes;
    if tags.long_right != Verdict::Yes || !left_ok {
        return Err(Error::Precondition(
            "lower convolution constant needs a long-tailed g".into(),
        ));
    }
    if !(rho >= T::zero()) {
        return Err(invalid("rho", "must be non-negative"));
    }
    let grid = f.grid();
    let dx = grid.dx();
    let support: Vec<(T, T)> = grid
        .nodes()
        .zip(f.values())
        .filter(|(_, v)| **v > T::zero())
        .map(|(y, v)| (y, *v))
        .collect();
    let ratio = |x: T| -> Result<T> {
        let gx = g.eval_log(x)?;
        let mut acc = T::zero();
        for &(y, v) in &support {
            acc = acc + (g.eval_log(x - y)? - gx).exp() * v;
        }
        Ok(acc * dx)
    };
    let start = rho.max(lit(1e-3));
    let stop = rho.max(T::one()) * lit(1e6);
    let n = 60;
    let step = (stop / start).powf(T::one() / count(n - 1));
    let mut positions: Vec<T> = (0..n).map(|i| start * step.powi(i as i32)).collect();
    if !g.is_bounded_below_left() {
        let left: Vec<T> = positions.iter().map(|&x| -x).collect();
        positions.extend(left);
    }
    let mass = f.grid_mass();
    let mut d = mass;
    let mut last_right = Vec::new();
    for (k, &x) in positions.iter().enumerate() {
        let r = ratio(x)?;
        d = d.min(r);
        if k >= n - 3 && k < n {
            last_right.push(r);
        }
    }
    if !(d > T::zero()) {
        return Err(Error::Domain(format!("lower convolution constant {d} is not positive")));
    }
    if last_right.iter().any(|r| (*r - mass).abs() > lit::<T>(0.1) * mass) {
        return Err(Error::Convergence(format!(
            "(g*f)/g does not settle at ∫f = {mass}: last samples {last_right:?}"
        )));
    }
    Ok(d)
}
