use awsde_core::estimator::{estimate_aw, moment_diagnostic, strong_error_curve, EstimateResult, McOptions};
use awsde_core::models::{builtin_model, CoefficientSpec, ModelParams};
use awsde_core::randomness::TimeGrid;
use awsde_core::schemes::{SchemeKind, StepperConfig};

fn model(name: &str, params: &[(&str, f64)]) -> CoefficientSpec {
    let params: ModelParams = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_model(name, &params).unwrap()
}

fn em(spec: CoefficientSpec, steps: usize) -> StepperConfig {
    StepperConfig::new(SchemeKind::ExplicitEm, spec, TimeGrid::new(1.0, steps).unwrap()).unwrap()
}

fn perturbed(k: f64, x0: f64, steps: usize) -> StepperConfig {
    em(model("perturbed_sign", &[("k", k), ("x0", x0)]), steps)
}

/// Distance and its delta-method standard error.
fn distance(r: &EstimateResult, p: f64) -> (f64, f64) {
    let d = r.distance.unwrap();
    (d, r.std_error * r.estimate.powf(1.0 / p - 1.0) / p)
}

#[test]
fn results_depend_only_on_seed_and_paths() {
    let a = perturbed(0.0, 0.0, 128);
    let b = perturbed(5.0, 0.0, 128);
    let base = estimate_aw(&a, &b, 2.0, &McOptions::new(300, 4)).unwrap();
    for workers in [1, 2, 3] {
        let r = estimate_aw(&a, &b, 2.0, &McOptions::new(300, 4).with_workers(workers)).unwrap();
        assert_eq!(r.estimate.to_bits(), base.estimate.to_bits());
        assert_eq!(r.std_error.to_bits(), base.std_error.to_bits());
    }
    let other = estimate_aw(&a, &b, 2.0, &McOptions::new(300, 5)).unwrap();
    assert_ne!(other.estimate, base.estimate);
}

#[test]
fn adapted_distances_satisfy_the_triangle_inequality() {
    let p = 2.0;
    let opts = McOptions::new(2000, 21);
    let legs = [perturbed(0.0, 0.0, 256), perturbed(3.0, 0.0, 256), perturbed(6.0, 0.0, 256)];
    let d = |i: usize, j: usize| distance(&estimate_aw(&legs[i], &legs[j], p, &opts).unwrap(), p);
    let (d01, s01) = d(0, 1);
    let (d12, s12) = d(1, 2);
    let (d02, s02) = d(0, 2);
    assert!(d02 <= d01 + d12 + 3.0 * (s01 + s12 + s02), "{d02} > {d01} + {d12}");
    assert_eq!(estimate_aw(&legs[1], &legs[1], p, &opts).unwrap().estimate, 0.0);
}

#[test]
fn estimate_grows_with_drift_size() {
    let opts = McOptions::new(1000, 2);
    let base = perturbed(0.0, 0.0, 256);
    let mut prev = 0.0;
    for k in [2.0, 5.0, 10.0] {
        let r = estimate_aw(&base, &perturbed(k, 0.0, 256), 2.0, &opts).unwrap();
        assert!(r.estimate > prev);
        assert!(r.certified);
        prev = r.estimate;
    }
}

#[test]
fn cubic_strong_errors_decrease() {
    let hs: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
    let curve = strong_error_curve(
        &model("cubic", &[]),
        SchemeKind::TransformedSemiImplicit { monotone: false },
        2.0,
        &hs,
        2f64.powi(-11),
        &McOptions::new(400, 1),
    )
    .unwrap();
    for w in curve.points.windows(2) {
        assert!(w[1].err_sup < w[0].err_sup);
        assert!(w[1].err_int < w[0].err_int);
    }
    assert!(curve.sup_fit.as_ref().unwrap().slope() > 0.3);
}

#[test]
fn cubic_moments_are_uniform_in_h() {
    let hs: Vec<f64> = (4..=10).map(|k| 2f64.powi(-k)).collect();
    let rows = moment_diagnostic(
        &model("cubic", &[]),
        SchemeKind::TransformedSemiImplicit { monotone: false },
        4.0,
        &hs,
        &McOptions::new(10_000, 8),
    )
    .unwrap();
    let (lo, hi) =
        rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.sup_moment), hi.max(r.sup_moment)));
    assert!(hi / lo < 2.0, "moments range over [{lo}, {hi}]");
}

#[test]
fn explicit_scheme_blows_up_where_semi_implicit_does_not() {
    let spec = model("cubic", &[("x0", 10.0)]);
    let opts = McOptions::new(200, 3);
    let explicit = moment_diagnostic(&spec, SchemeKind::ExplicitEm, 2.0, &[0.25], &opts).unwrap();
    let implicit = moment_diagnostic(&spec, SchemeKind::SemiImplicitEm, 2.0, &[0.25], &opts).unwrap();
    assert!(explicit[0].sup_moment > 1e6);
    // The starting point enters the running maximum.
    assert!(implicit[0].sup_moment <= 100.0 + 1e-9, "{}", implicit[0].sup_moment);
    let after_start =
        moment_diagnostic(&spec.with_initial_value(1.0), SchemeKind::SemiImplicitEm, 2.0, &[0.25], &opts).unwrap();
    assert!(after_start[0].sup_moment < 10.0);
}

#[test]
fn brownian_running_maximum_is_stable() {
    let hs: Vec<f64> = (3..=9).map(|k| 2f64.powi(-k)).collect();
    let rows = moment_diagnostic(
        &model("brownian", &[("x0", 0.0)]),
        SchemeKind::ExplicitEm,
        2.0,
        &hs,
        &McOptions::new(4000, 6),
    )
    .unwrap();
    // E[max_{t<=1} |W_t|^2] is below E[max W^2] <= 4 E[W_1^2] = 4 and grows as h shrinks.
    for w in rows.windows(2) {
        assert!(w[1].sup_moment > w[0].sup_moment - 3.0 * (w[0].std_error + w[1].std_error));
    }
    for r in &rows {
        assert!(r.sup_moment > 1.0 && r.sup_moment < 4.0, "h {}: {}", r.h, r.sup_moment);
    }
}

#[test]
fn legs_on_different_grids_are_rejected() {
    assert!(estimate_aw(&perturbed(0.0, 0.0, 64), &perturbed(1.0, 0.0, 128), 2.0, &McOptions::new(10, 0)).is_err());
    assert!(estimate_aw(&perturbed(0.0, 0.0, 64), &perturbed(1.0, 0.0, 64), 0.5, &McOptions::new(10, 0)).is_err());
}

#[test]
fn discontinuous_multiplicative_model_converges_at_guarded_steps() {
    // The transformed drift has one-sided Lipschitz bound 480, so h must stay below 1/480.
    let hs: Vec<f64> = (9..=12).map(|k| 2f64.powi(-k)).collect();
    let curve = strong_error_curve(
        &model("sign_drift", &[]),
        SchemeKind::TransformedSemiImplicit { monotone: false },
        4.0,
        &hs,
        2f64.powi(-14),
        &McOptions::new(256, 0),
    )
    .unwrap();
    let sup = curve.sup_fit.as_ref().unwrap().slope();
    let int = curve.int_fit.as_ref().unwrap().slope();
    assert!(sup >= 0.2 && int >= 0.2, "slopes {sup}, {int}");
}
