use enscal::bma::{crps_normal_mixture, Component, Mixture};
use enscal::dist::{crps_of, GammaMeanSd, Normal, PredictiveDist, TruncNormal};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn normal_closed_form(mu in -50.0f64..50.0, sigma in 0.05f64..20.0, z in -6.0f64..6.0) {
        let d = Normal::new(mu, sigma).unwrap();
        let x = mu + z * sigma;
        prop_assert!((d.crps(x).unwrap() - crps_of(&d, x).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn truncated_closed_form(r in -3.0f64..8.0, sigma in 0.05f64..10.0, x in 0.0f64..60.0) {
        let d = TruncNormal::new(r * sigma, sigma).unwrap();
        prop_assert!((d.crps(x).unwrap() - crps_of(&d, x).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn normal_mixture_closed_form(
        mus in prop::collection::vec(-5.0f64..5.0, 1..6),
        sigma in 0.2f64..3.0,
        raw_w in prop::collection::vec(0.05f64..1.0, 6),
        x in -8.0f64..8.0,
    ) {
        let total: f64 = raw_w[..mus.len()].iter().sum();
        let comps: Vec<(f64, Component)> = mus
            .iter()
            .zip(&raw_w)
            .map(|(&m, &w)| (w / total, Component::Normal(Normal::new(m, sigma).unwrap())))
            .collect();
        let weights: Vec<f64> = comps.iter().map(|c| c.0).collect();
        let closed = crps_normal_mixture(&weights, &mus, sigma, x);
        let mix = Mixture::new(comps).unwrap();
        prop_assert!((closed - crps_of(&mix, x).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn crps_is_nonnegative_and_minimal_near_median(mean in 0.5f64..10.0, cv in 0.1f64..1.5) {
        let d = GammaMeanSd::new(mean, cv * mean).unwrap();
        let m = d.quantile(0.5).unwrap();
        let at_median = d.crps(m).unwrap();
        prop_assert!(at_median >= 0.0);
        prop_assert!(at_median <= d.crps(m + 0.1 * mean).unwrap());
        prop_assert!(at_median <= d.crps((m - 0.1 * mean).max(0.0)).unwrap());
    }
}
