use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::num::{count, lit, Real};
use crate::Verdict;

use super::{Boundary, Field, Model, Reaction};

const LEVELS: usize = 40;
const RANDOM_FIELDS: usize = 20;

#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct AssumptionReport<T> {
    pub checks: Vec<AssumptionCheck>,
    /// Smallest scanned `p` making `u ↦ ϰ a*u − u G u + p u` order preserving.
    pub best_p: Option<T>,
}

impl<T> AssumptionReport<T> {
    pub fn verdict(&self) -> Verdict {
        self.checks.iter().fold(Verdict::Yes, |acc, c| acc.and(c.verdict))
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Sampled checks of the structural hypotheses on `G` (and on the kernels for
/// the nonlocal reaction) over constant levels and seeded random densities.
pub fn check_assumptions<T: Real>(model: &Model<T>, seed: u64) -> Result<AssumptionReport<T>> {
    let grid = *model.grid();
    let theta = model.theta();
    let beta = model.beta();
    let tol = model.bound_tolerance() * beta.max(T::one());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let levels: Vec<T> = (0..=LEVELS)
        .map(|j| theta * count::<T>(j) / count::<T>(LEVELS))
        .collect();
    let g_levels = levels
        .iter()
        .map(|&c| model.g_constant(c))
        .collect::<Result<Vec<T>>>()?;

    let g0 = g_levels[0];
    checks.push(AssumptionCheck {
        name: "g_zero",
        verdict: (g0.abs() <= tol).into(),
        detail: format!("G(0) = {g0}"),
    });
    let g_theta = model.apply_g(&Field::constant(grid, theta)?)?;
    let worst = g_theta.iter().map(|&g| (g - beta).abs()).fold(T::zero(), T::max);
    checks.push(AssumptionCheck {
        name: "g_theta",
        verdict: (worst <= tol).into(),
        detail: format!("max |G(theta) - beta| = {worst}"),
    });

    let random_field = |rng: &mut ChaCha8Rng, cap: &[T]| -> Result<Field<T>> {
        let values = cap.iter().map(|&c| c * lit::<T>(rng.gen::<f64>())).collect();
        Field::new(grid, values, Boundary::Zero, Boundary::Zero)
    };
    let full = vec![theta; grid.len()];
    let mut pairs = Vec::with_capacity(RANDOM_FIELDS);
    for _ in 0..RANDOM_FIELDS {
        let v = random_field(&mut rng, &full)?;
        let room: Vec<T> = v.values().iter().map(|&x| theta - x).collect();
        let bump = random_field(&mut rng, &room)?;
        let w_values = v.values().iter().zip(bump.values()).map(|(a, b)| *a + *b).collect();
        let w = Field::new(grid, w_values, Boundary::Zero, Boundary::Zero)?;
        pairs.push((v, w));
    }

    let mut range_ok = g_levels.iter().all(|&g| g >= -tol && g <= beta + tol);
    let mut monotone_ok = g_levels.windows(2).all(|w| w[0] <= w[1] + tol);
    let mut g_pairs = Vec::with_capacity(pairs.len());
    for (v, w) in &pairs {
        let gv = model.apply_g(v)?;
        let gw = model.apply_g(w)?;
        range_ok &= gv.iter().chain(&gw).all(|&g| g >= -tol && g <= beta + tol);
        monotone_ok &= gv.iter().zip(&gw).all(|(a, b)| *a <= *b + tol);
        g_pairs.push((gv, gw));
    }
    checks.push(AssumptionCheck {
        name: "g_range",
        verdict: range_ok.into(),
        detail: format!(
            "0 <= G <= beta on {} levels and {} random densities",
            LEVELS + 1,
            2 * RANDOM_FIELDS
        ),
    });
    checks.push(AssumptionCheck {
        name: "g_monotone",
        verdict: monotone_ok.into(),
        detail: format!("G v <= G w for v <= w on {RANDOM_FIELDS} random pairs"),
    });

    let below = g_levels[..LEVELS].iter().zip(&levels).find(|(g, _)| !(**g < beta));
    checks.push(AssumptionCheck {
        name: "g_below_beta",
        verdict: below.is_none().into(),
        detail: match below {
            Some((g, r)) => format!("G({r}) = {g} is not below beta"),
            None => "G(r) < beta for every sampled r < theta".into(),
        },
    });

    let kappa = model.kappa();
    let mut best_p = None;
    let mut spreads = Vec::with_capacity(pairs.len());
    for (v, w) in &pairs {
        spreads.push((model.disperse(v)?, model.disperse(w)?));
    }
    for p in [T::zero(), beta, beta + beta] {
        let ok = pairs
            .iter()
            .zip(&spreads)
            .zip(&g_pairs)
            .all(|(((v, w), (av, aw)), (gv, gw))| {
                (0..grid.len()).all(|i| {
                    let (x, y) = (v.values()[i], w.values()[i]);
                    let qv = kappa * av[i] - x * gv[i] + p * x;
                    let qw = kappa * aw[i] - y * gw[i] + p * y;
                    qv <= qw + tol
                })
            });
        if ok {
            best_p = Some(p);
            break;
        }
    }
    checks.push(AssumptionCheck {
        name: "quasi_monotone",
        verdict: best_p.is_some().into(),
        detail: match best_p {
            Some(p) => format!("order preserving with p = {p}"),
            None => "no p in {0, beta, 2 beta} works on the sampled pairs".into(),
        },
    });

    if let Reaction::NonlocalLogistic { competition, .. } = model.reaction() {
        let kg = model.kernel().grid();
        let centre = kg.len() / 2;
        let margin = |i: usize| kappa * model.kernel().values()[i] - beta * competition.values()[i];
        let mut reach = 0;
        while reach < centre && margin(centre + reach) > T::zero() && margin(centre - reach) > T::zero() {
            reach += 1;
        }
        let delta = kg.dx() * count::<T>(reach);
        checks.push(AssumptionCheck {
            name: "kernel_dominance",
            verdict: (reach >= 2).into(),
            detail: format!("kappa a - beta a_minus > 0 for |x| < {delta}"),
        });
    }

    Ok(AssumptionReport { checks, best_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::{Grid, Kernel};

    fn grid() -> Grid<f64> {
        Grid::new(16.0, 256).unwrap()
    }

    #[test]
    fn logistic_passes_with_some_p() {
        let m = Model::new(
            2.0,
            1.0,
            1.0,
            Kernel::gaussian(grid(), 1.0).unwrap(),
            Reaction::logistic(),
        )
        .unwrap();
        let r = check_assumptions(&m, 7).unwrap();
        assert_eq!(r.verdict(), Verdict::Yes, "{:?}", r.checks);
        assert_eq!(r.best_p, Some(2.0));
    }

    #[test]
    fn wrong_value_at_theta_is_reported() {
        let r = Reaction::custom("half", |s: f64| 0.5 * s);
        let m = Model::new(2.0, 1.0, 1.0, Kernel::gaussian(grid(), 1.0).unwrap(), r).unwrap();
        let rep = check_assumptions(&m, 1).unwrap();
        assert_eq!(rep.get("g_theta").unwrap().verdict, Verdict::No);
        assert_eq!(rep.verdict(), Verdict::No);
    }

    #[test]
    fn nonlocal_dominance() {
        let comp = Kernel::gaussian(grid(), 3.0).unwrap();
        let m = Model::new(
            2.0,
            1.0,
            1.0,
            Kernel::gaussian(grid(), 1.0).unwrap(),
            Reaction::nonlocal(comp, 1.0).unwrap(),
        )
        .unwrap();
        let rep = check_assumptions(&m, 3).unwrap();
        assert_eq!(rep.get("kernel_dominance").unwrap().verdict, Verdict::Yes);
        assert_eq!(rep.get("g_theta").unwrap().verdict, Verdict::Yes);
    }
}
