use enscal::optimize::{minimize, ObjectiveSpec, Options, Transform};
use proptest::prelude::*;

fn rosenbrock(p: &[f64]) -> f64 {
    (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2)
}

/// Textbook simplex search with fixed coefficients, written independently of
/// the library version: sorted vertices, reflect, expand, contract, shrink.
fn reference_simplex(f: impl Fn(&[f64]) -> f64, start: &[f64], max_iter: usize) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i] != 0.0 { 0.05 * v[i] } else { 0.00025 };
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 < 1e-16 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].0.clone();
        let r = lerp(&centroid, &worst, -1.0);
        let fr = f(&r);
        if fr < simplex[0].1 {
            let e = lerp(&centroid, &worst, -2.0);
            let fe = f(&e);
            simplex[n] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (r, fr);
        } else {
            let c = if fr < simplex[n].1 {
                lerp(&centroid, &r, 0.5)
            } else {
                lerp(&centroid, &worst, 0.5)
            };
            let fc = f(&c);
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (c, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    v.0 = lerp(&best, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

#[test]
fn rosenbrock_agrees_with_reference_simplex() {
    let spec =
        ObjectiveSpec::new(rosenbrock, vec![Transform::Identity; 2], vec![-1.2, 1.0]).unwrap();
    let opts = Options {
        max_iter: 5000,
        ..Options::default()
    };
    let got = minimize(&spec, &opts).unwrap();
    let reference = reference_simplex(rosenbrock, &[-1.2, 1.0], 5000);
    for j in 0..2 {
        assert!((reference[j] - 1.0).abs() < 1e-4, "reference {reference:?}");
        assert!((got.argmin[j] - 1.0).abs() < 1e-4, "{:?}", got.argmin);
        assert!((got.argmin[j] - reference[j]).abs() < 1e-4);
    }
}

#[test]
fn restart_from_argmin_is_stable() {
    let f =
        |p: &[f64]| (p[0] - 0.7).powi(2) + 3.0 * (p[1] + 0.2).powi(2) + (p[0] * p[1]).sin().powi(2);
    let opts = Options::default();
    let first = minimize(
        &ObjectiveSpec::new(f, vec![Transform::Identity; 2], vec![2.0, 2.0]).unwrap(),
        &opts,
    )
    .unwrap();
    let again = minimize(
        &ObjectiveSpec::new(
            f,
            vec![Transform::Identity; 2],
            first.argmin_unconstrained.clone(),
        )
        .unwrap(),
        &opts,
    )
    .unwrap();
    assert!((first.value - again.value).abs() < opts.tol);
}

proptest! {
    #[test]
    fn transforms_round_trip(c in 1e-6f64..1e3, p in 1e-6f64..(1.0 - 1e-6)) {
        for (t, v) in [(Transform::Identity, c - 500.0), (Transform::Square, c), (Transform::Logistic, p)] {
            let back = t.to_constrained(t.to_unconstrained(v).unwrap());
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0), "{t:?} {v} {back}");
        }
    }
}
