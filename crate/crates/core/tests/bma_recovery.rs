use enscal::bma::{fit_bma_gamma, fit_bma_truncnormal_ml, EmOptions};
use enscal::dist::TruncNormal;
use enscal::grouping::{make_grouping, GroupingKind, GroupingScheme};
use enscal::synth::{generate, Scenario, SynthConfig};
use enscal::window::TrainingSet;

fn two_group() -> GroupingScheme {
    make_grouping(&GroupingKind::TwoGroup, 11).unwrap()
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] - w[0] >= -1e-10)
}

#[test]
fn gamma_parameters_recovered() {
    let out = generate(&SynthConfig::new(Scenario::BmaGamma, 17, 300, 10)).unwrap();
    let set = TrainingSet::new(out.dataset.cases().iter(), &two_group()).unwrap();
    let fit = fit_bma_gamma(&set, None, &EmOptions::default()).unwrap();
    let m = &fit.model;
    for (got, want) in [(m.b0, 0.2), (m.b1, 0.9), (m.c0, 0.4), (m.c1, 0.2)] {
        assert!((got - want).abs() <= 0.1, "{m:?}");
    }
    assert!(monotone(&fit.diagnostics.loglik_trace));
}

#[test]
fn truncated_normal_weights_and_scale_recovered() {
    let out = generate(&SynthConfig::new(Scenario::BmaTruncNormal, 23, 300, 10)).unwrap();
    let set = TrainingSet::new(out.dataset.cases().iter(), &two_group()).unwrap();
    let fit = fit_bma_truncnormal_ml(&set, None, &EmOptions::default()).unwrap();
    let m = &fit.model;
    assert!((m.weights[0] - 0.2).abs() <= 0.05, "{m:?}");
    assert!((m.sigma - 0.8).abs() <= 0.1, "{m:?}");
    assert!(monotone(&fit.diagnostics.loglik_trace));
}

/// With identical members the mixture is one truncated normal; at the fitted
/// location the scale must maximize the likelihood on its own.
#[test]
fn single_component_scale_is_profile_maximum() {
    let mut cfg = SynthConfig::new(Scenario::BmaTruncNormal, 5, 200, 10);
    cfg.members = 2;
    let out = generate(&cfg).unwrap();
    let g = GroupingScheme::from_index_sets(&[vec![1, 2]], 2).unwrap();
    let rows: Vec<(Vec<f64>, f64)> = out
        .dataset
        .cases()
        .iter()
        .map(|c| (vec![c.members[0]; 2], c.observation.unwrap()))
        .collect();
    let set = TrainingSet::from_rows(rows, &g).unwrap();
    let fit = fit_bma_truncnormal_ml(&set, None, &EmOptions::default()).unwrap();
    let (b0, b1) = fit.model.coefficients[0];
    let loglik = |sigma: f64| -> f64 {
        set.rows()
            .map(|(row, y)| TruncNormal::new(b0 + b1 * row[0], sigma).unwrap().ln_pdf(y))
            .sum()
    };
    let mut best = fit.model.sigma;
    let mut step = 1e-2;
    while step > 1e-7 {
        let centre = best;
        for k in -20..=20 {
            let s = centre + k as f64 * step;
            if s > 0.0 && loglik(s) > loglik(best) {
                best = s;
            }
        }
        step /= 10.0;
    }
    assert!(
        (best - fit.model.sigma).abs() < 1e-4,
        "grid {best} fit {}",
        fit.model.sigma
    );
}
