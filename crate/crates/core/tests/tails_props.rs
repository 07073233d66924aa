use accelfront::tails::{
    classify_tail, construct_h, long_tail_deviations, subexp_density_ratio, tail_integral, SampleOptions, TailFamily,
    TailProfile,
};
use accelfront::Verdict;
use proptest::prelude::*;

fn heavy_family() -> impl Strategy<Value = TailFamily<f64>> {
    prop_oneof![
        (1.2f64..6.0).prop_map(TailFamily::power),
        (0.5f64..3.0, 1.1f64..3.0).prop_map(|(p, q)| TailFamily::log_power_exp(p, q)),
        (0.1f64..0.8).prop_map(TailFamily::stretched_exp),
        (2.0f64..3.0).prop_map(TailFamily::x_over_log),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heavy_families_are_long_tailed(family in heavy_family()) {
        let p = TailProfile::right(family).unwrap();
        for row in long_tail_deviations(&p, &SampleOptions::default()) {
            let devs: Vec<f64> = row.iter().map(|r| r.1).collect();
            prop_assert!(devs.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(*devs.last().unwrap() < 0.01);
        }
    }

    #[test]
    fn exponential_is_never_long_tailed(k in 0.01f64..10.0) {
        let p = TailProfile::right(TailFamily::exponential(k)).unwrap();
        prop_assert_eq!(classify_tail(&p, &SampleOptions::default()).long_tailed, Verdict::No);
    }

    #[test]
    fn power_tail_integral_closed_form(q in 1.1f64..8.0, x in 2.0f64..1e6) {
        let p = TailProfile::right(TailFamily::power(q)).unwrap();
        let big = tail_integral(&p).unwrap();
        let exact = x.powf(1.0 - q) / (q - 1.0);
        prop_assert!((big.eval(x).unwrap() / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn h_function_is_small_and_kills_the_tail(q in 2.0f64..5.0) {
        let p = TailProfile::right(TailFamily::power(q)).unwrap().with_shift(1.0).unwrap();
        let h = construct_h(&p, &SampleOptions::default()).unwrap();
        let mut last = f64::INFINITY;
        for d in SampleOptions::default().h_decades {
            let x = 10f64.powi(d);
            prop_assert!(h.eval(x) < x / 2.0);
            let decay = x * p.eval(h.eval(x)).unwrap();
            prop_assert!(decay * 10.0 <= last);
            last = decay;
        }
    }
}

#[test]
fn power_density_ratio_approaches_one() {
    for q in [2.0, 3.0, 4.0] {
        let p = TailProfile::right(TailFamily::power(q))
            .unwrap()
            .with_shift(1.0)
            .unwrap();
        let r: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&x| subexp_density_ratio(&p, x).unwrap())
            .collect();
        let last = *r.last().unwrap();
        assert!((0.8..=1.2).contains(&last), "q = {q}: {r:?}");
        assert!(
            r.windows(2).all(|w| (w[1] - 1.0).abs() <= (w[0] - 1.0).abs()),
            "q = {q}: {r:?}"
        );
    }
}
