use std::collections::BTreeSet;

use awsde_core::bicausal::fixtures::{kr_suboptimal_pair, martingale_pair};
use awsde_core::bicausal::random::random_tree;
use awsde_core::bicausal::{
    antitone_then_monotone, check_stochastic_monotone, exact_bicausal_value, knothe_rosenblatt, plan_cost, rational,
    CostFunctional, DominanceOrder, FiniteAdaptedProcess, Mass,
};
use awsde_core::estimator::{
    estimate_aw, fit_line, moment_diagnostic, monotonicity_witness, strong_error_curve, EstimateResult, McOptions,
};
use awsde_core::models::{builtin_model, CoefficientSpec, ModelParams};
use awsde_core::randomness::{sample_increments, TimeGrid};
use awsde_core::schemes::{simulate_path, SchemeKind, StepperConfig};
use awsde_core::stopping::{snell_value, stopping_stability_gap, Objective, PathPayoff};
use awsde_core::transform::build_transform;
use num_traits::{Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::output::num;
use crate::{CliError, Experiment, ExperimentConfig, ModelChoice, Outcome, Result, Table};

const ESTIMATE_HEADER: [&str; 6] = ["k_or_delta", "estimate", "stderr", "paths", "h", "seed"];

fn model(name: &str, params: &[(&str, f64)]) -> Result<CoefficientSpec> {
    let params: ModelParams = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_model(name, &params).map_err(CliError::core(format!("model {name}")))
}

fn options(config: &ExperimentConfig) -> McOptions {
    McOptions { paths: config.paths(), seed: config.seed, workers: config.workers, truncate: false }
}

fn stepper(kind: SchemeKind, spec: CoefficientSpec, grid: TimeGrid) -> Result<StepperConfig> {
    let context = format!("scheme {kind} for model {} at h = {}", spec.name, grid.step());
    StepperConfig::new(kind, spec, grid).map_err(CliError::core(context))
}

fn estimate_row(x: f64, r: &EstimateResult) -> Vec<String> {
    vec![num(x), num(r.estimate), num(r.std_error), r.paths.to_string(), num(r.grid.step()), r.seed.to_string()]
}

fn exact(q: &Mass) -> Value {
    json!({ "exact": q.to_string(), "value": q.to_f64() })
}

fn reject_model(config: &ExperimentConfig) -> Result<()> {
    if config.model.is_some() {
        return Err(CliError::Usage(format!(
            "experiment {} compares fixed models; --model does not apply",
            config.experiment
        )));
    }
    Ok(())
}

pub(crate) fn fig_disc(config: &ExperimentConfig) -> Result<Outcome> {
    reject_model(config)?;
    let grid = TimeGrid::new(1.0, config.steps()).map_err(CliError::core("time grid"))?;
    let kind = config.scheme_or(SchemeKind::ExplicitEm)?;
    let p = config.p.unwrap_or(2.0);
    let opts = options(config);
    let reference = stepper(SchemeKind::ExplicitEm, model("brownian", &[])?, grid)?;
    let mut table = Table::new(&ESTIMATE_HEADER);
    let mut rows = Vec::new();
    let mut warnings = BTreeSet::new();
    let mut certified = true;
    let mut previous: Option<EstimateResult> = None;
    let mut increasing = true;
    for k in 0..=10 {
        let other = stepper(kind, model("perturbed_sign", &[("k", k as f64)])?, grid)?;
        let r = estimate_aw(&reference, &other, p, &opts)
            .map_err(CliError::core(format!("fig_disc estimate at k = {k}")))?;
        if let Some(prev) = &previous {
            increasing &= r.estimate + r.std_error > prev.estimate;
        }
        table.push(estimate_row(k as f64, &r));
        rows.push(json!({ "k": k, "estimate": r.estimate, "std_error": r.std_error, "distance": r.distance }));
        warnings.extend(r.warnings.iter().cloned());
        certified &= r.certified;
        previous = Some(r);
    }
    Ok(Outcome {
        tables: vec![("aw_estimates.csv".into(), table)],
        report: json!({
            "p": p,
            "h": grid.step(),
            "paths": opts.paths,
            "seed": opts.seed,
            "schemes": ["em", kind.tag()],
            "rows": rows,
            "increasing_within_one_se": increasing,
            "certified": certified,
            "warnings": warnings,
        }),
    })
}

/// Perturbation sizes of the CIR sweep.
pub(crate) const CIR_DELTAS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// Series name, perturbed parameter.
pub(crate) const CIR_SERIES: [(&str, &str); 3] = [("speed", "kappa"), ("level", "eta"), ("diffusion", "gamma")];

pub(crate) fn fig_cir(config: &ExperimentConfig) -> Result<Outcome> {
    reject_model(config)?;
    let grid = TimeGrid::new(1.0, config.steps()).map_err(CliError::core("time grid"))?;
    let kind = config.scheme_or(SchemeKind::SymmetrisedEm)?;
    let p = config.p.unwrap_or(2.0);
    let opts = options(config);
    let reference = stepper(kind, model("cir", &[])?, grid)?;
    let mut tables = Vec::new();
    let mut series = serde_json::Map::new();
    let mut at_largest = Vec::new();
    let mut warnings = BTreeSet::new();
    for (name, param) in CIR_SERIES {
        let mut table = Table::new(&ESTIMATE_HEADER);
        let mut estimates = Vec::new();
        for delta in CIR_DELTAS {
            let other = stepper(kind, model("cir", &[(param, 1.0 + delta)])?, grid)?;
            let r = estimate_aw(&reference, &other, p, &opts)
                .map_err(CliError::core(format!("fig_cir estimate for {name} at delta = {delta}")))?;
            table.push(estimate_row(delta, &r));
            warnings.extend(r.warnings.iter().cloned());
            estimates.push((r.estimate, r.std_error));
        }
        let logs: Vec<f64> = estimates.iter().map(|(e, _)| e.ln()).collect();
        let fit = fit_line(&CIR_DELTAS, &logs);
        series.insert(
            name.to_string(),
            json!({
                "parameter": param,
                "deltas": CIR_DELTAS,
                "estimates": estimates.iter().map(|e| e.0).collect::<Vec<_>>(),
                "std_errors": estimates.iter().map(|e| e.1).collect::<Vec<_>>(),
                "log_fit_slope": fit.map(|f| f.slope),
                "log_fit_r_squared": fit.map(|f| f.r_squared),
            }),
        );
        at_largest.push((name, *estimates.last().expect("five deltas")));
        tables.push((format!("aw_estimates_{name}.csv"), table));
    }
    let get = |n: &str| at_largest.iter().find(|(s, _)| *s == n).expect("series exists").1;
    let (speed, level, diffusion) = (get("speed"), get("level"), get("diffusion"));
    let gap = |a: (f64, f64), b: (f64, f64)| json!({ "gap": a.0 - b.0, "combined_se": a.1 + b.1 });
    Ok(Outcome {
        tables,
        report: json!({
            "p": p,
            "h": grid.step(),
            "paths": opts.paths,
            "seed": opts.seed,
            "scheme": kind.tag(),
            "series": series,
            "ordering_at_largest_delta": {
                "delta": CIR_DELTAS[CIR_DELTAS.len() - 1],
                "diffusion_minus_level": gap(diffusion, level),
                "level_minus_speed": gap(level, speed),
            },
            "warnings": warnings,
        }),
    })
}

/// Step sizes `2^-6, ..., 2^-11` of the rate experiment.
pub(crate) fn rate_steps() -> Vec<f64> {
    (6..=11).map(|e| 2f64.powi(-e)).collect()
}

/// Reference step count of the rate experiment unless `--steps` is given.
pub(crate) const RATE_REFERENCE_STEPS: usize = 1 << 14;

pub(crate) fn rates(config: &ExperimentConfig) -> Result<Outcome> {
    let choice = config.model.clone().unwrap_or(ModelChoice::Name("cubic".into()));
    let spec = choice.build()?;
    let kind = config.scheme_or(SchemeKind::TransformedSemiImplicit { monotone: true })?;
    let p = config.p.unwrap_or(2.0);
    let opts = options(config);
    let ref_steps = config.steps.unwrap_or(RATE_REFERENCE_STEPS);
    let h_ref = 1.0 / ref_steps as f64;
    let hs: Vec<f64> = rate_steps().into_iter().filter(|&h| h > h_ref).collect();
    if hs.is_empty() {
        return Err(CliError::Usage(format!("reference step 1/{ref_steps} is not finer than 2^-6")));
    }
    let context = format!("rates for model {} with scheme {kind}", spec.name);
    let curve = strong_error_curve(&spec, kind, p, &hs, h_ref, &opts).map_err(CliError::core(context.clone()))?;
    let moments = moment_diagnostic(&spec, kind, p, &hs, &opts).map_err(CliError::core(context))?;
    let mut rate_table = Table::new(&["h", "err_sup", "err_int", "stderr"]);
    for q in &curve.points {
        rate_table.push(vec![num(q.h), num(q.err_sup), num(q.err_int), num(q.se_sup.max(q.se_int))]);
    }
    let mut moment_table = Table::new(&["h", "p", "sup_moment"]);
    for m in &moments {
        moment_table.push(vec![num(m.h), num(m.p), num(m.sup_moment)]);
    }
    let finite: Vec<f64> = moments.iter().map(|m| m.sup_moment).filter(|m| m.is_finite()).collect();
    let ratio = if finite.len() == moments.len() && !finite.is_empty() {
        Some(finite.iter().cloned().fold(f64::MIN, f64::max) / finite.iter().cloned().fold(f64::MAX, f64::min))
    } else {
        None
    };
    Ok(Outcome {
        tables: vec![("rate_curve.csv".into(), rate_table), ("moments.csv".into(), moment_table)],
        report: json!({
            "model": spec.name,
            "scheme": kind.tag(),
            "p": p,
            "h_ref": h_ref,
            "paths": opts.paths,
            "seed": opts.seed,
            "slope_sup": curve.sup_fit.map(|f| f.slope()),
            "slope_int": curve.int_fit.map(|f| f.slope()),
            "fit_sup": curve.sup_fit,
            "fit_int": curve.int_fit,
            "points": curve.points,
            "moment_ratio": ratio,
        }),
    })
}

fn monotonicity_json(proc: &FiniteAdaptedProcess) -> Value {
    let first = check_stochastic_monotone(proc, DominanceOrder::First);
    let second = check_stochastic_monotone(proc, DominanceOrder::Second);
    json!({ "first_order": first.classification(), "second_order": second.classification() })
}

pub(crate) fn counterexamples(config: &ExperimentConfig) -> Result<Outcome> {
    reject_model(config)?;
    let square = CostFunctional::power(2.0);
    let (mu, nu) = kr_suboptimal_pair();
    let kr = plan_cost(&knothe_rosenblatt(&mu, &nu).map_err(CliError::core("knothe_rosenblatt"))?, &square);
    let alt = plan_cost(&antitone_then_monotone(&mu, &nu).map_err(CliError::core("antitone plan"))?, &square);
    let (optimal, _) = exact_bicausal_value(&mu, &nu, &square).map_err(CliError::core("exact_bicausal_value"))?;
    let mut perturbation = Vec::new();
    for eps in [0.1, 0.5] {
        for p in [1u32, 2] {
            let (x, y) = martingale_pair(eps);
            let (value, _) = exact_bicausal_value(&x, &y, &CostFunctional::power(p as f64))
                .map_err(CliError::core("exact_bicausal_value"))?;
            let expected = num_traits::pow(rational(eps), p as usize) + rational(2f64.powi(p as i32 - 1));
            perturbation.push(json!({
                "eps": eps,
                "p": p,
                "aw_pp": exact(&value),
                "expected": exact(&expected),
                "matches": value == expected,
            }));
        }
    }
    let coordinate = PathPayoff::coordinate(2.0, Objective::Sup);
    let mut snell = Vec::new();
    for eps in [0.1, 0.3] {
        let (x, y) = martingale_pair(eps);
        let expected = (rational(1.0) - rational(eps)) / rational(2.0);
        let (vx, vy) = (snell_value(&x, &coordinate), snell_value(&y, &coordinate));
        snell.push(json!({
            "eps": eps,
            "martingale": exact(&vx),
            "perturbed": exact(&vy),
            "expected_perturbed": exact(&expected),
            "matches": vx == rational(0.0) && vy == expected,
        }));
    }
    let h = 2f64.powi(-4);
    let witness = monotonicity_witness(|x: f64| 1.0 + x.abs().sqrt().min(1.0), h, -2.0, 2.0, 4001)
        .map_err(CliError::core("monotonicity_witness"))?;
    Ok(Outcome {
        tables: Vec::new(),
        report: json!({
            "kr_suboptimal": {
                "kr_cost": kr.to_f64(),
                "alt_cost": alt.to_f64(),
                "optimal": optimal.to_f64(),
                "kr_cost_exact": kr.to_string(),
                "alt_cost_exact": alt.to_string(),
                "optimal_exact": optimal.to_string(),
                "optimal_le_alt": optimal <= alt,
                "optimal_lt_kr": optimal < kr,
                "monotonicity": { "mu": monotonicity_json(&mu), "nu": monotonicity_json(&nu) },
            },
            "martingale_perturbation": perturbation,
            "snell": snell,
            "holder_diffusion_witness": { "sigma": "1 + min(sqrt|x|, 1)", "h": h, "outcome": witness },
        }),
    })
}

/// Random payoff `a_k x_k + b_k |x_k - c_k|` with `|a_k| + |b_k| <= 1`.
pub(crate) fn random_separable_payoff<R: Rng>(rng: &mut R, stages: usize, p: f64) -> PathPayoff {
    let terms = (0..stages)
        .map(|_| {
            let a: f64 = rng.random_range(-1.0..=1.0);
            let b = rng.random_range(-1.0..=1.0) * (1.0 - a.abs());
            (a, b, rng.random_range(-2.0..=2.0))
        })
        .collect();
    let objective = if rng.random_bool(0.5) { Objective::Sup } else { Objective::Inf };
    PathPayoff::separable(terms, p, objective)
}

/// Instances in the stopping sweep.
pub(crate) const STOPPING_INSTANCES: usize = 100;

pub(crate) fn stopping(config: &ExperimentConfig) -> Result<Outcome> {
    reject_model(config)?;
    let p = config.p.unwrap_or(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut table = Table::new(&["instance", "stages", "p", "objective", "lhs", "rhs", "holds"]);
    let mut violations = 0;
    for i in 0..STOPPING_INSTANCES {
        let stages = rng.random_range(1..=3);
        let mu = random_tree(&mut rng, stages, 3, 4);
        let nu = random_tree(&mut rng, stages, 3, 4);
        let payoff = match &config.payoff {
            None => random_separable_payoff(&mut rng, stages, p),
            Some(choice) => PathPayoff::builtin(
                &choice.name,
                choice.params.get("strike").copied().unwrap_or(0.0),
                choice.params.get("h").copied().unwrap_or(1.0 / stages as f64),
                stages,
                p,
                choice.objective,
            )
            .map_err(|e| CliError::Usage(e.to_string()))?,
        };
        let gap =
            stopping_stability_gap(&mu, &nu, &payoff, p).map_err(CliError::core(format!("stopping instance {i}")))?;
        violations += usize::from(!gap.holds());
        table.push(vec![
            i.to_string(),
            stages.to_string(),
            num(p),
            format!("{:?}", payoff.objective).to_lowercase(),
            num(gap.lhs),
            num(gap.rhs),
            gap.holds().to_string(),
        ]);
    }
    let (x, y) = martingale_pair(0.1);
    let coordinate = PathPayoff::coordinate(2.0, Objective::Sup);
    let pair = stopping_stability_gap(&x, &y, &coordinate, 2.0).map_err(CliError::core("martingale pair"))?;
    let diff = (snell_value(&x, &coordinate) - snell_value(&y, &coordinate)).abs();
    Ok(Outcome {
        tables: vec![("stopping.csv".into(), table)],
        report: json!({
            "instances": STOPPING_INSTANCES,
            "p": p,
            "payoff": config.payoff.as_ref().map_or("random_separable", |c| c.name.as_str()),
            "violations": violations,
            "martingale_pair": { "eps": 0.1, "lhs": pair.lhs, "lhs_exact": diff.to_string(), "rhs": pair.rhs },
        }),
    })
}

fn transform_model(config: &ExperimentConfig) -> Result<CoefficientSpec> {
    config.model.clone().unwrap_or(ModelChoice::Name("sign_drift".into())).build()
}

/// `x, G(x), G'(x), G''(x), G^-1(x)` on a grid covering every window.
pub(crate) fn transform_table(config: &ExperimentConfig) -> Result<Table> {
    let spec = transform_model(config)?;
    let t = build_transform(&spec).map_err(CliError::core(format!("transform of model {}", spec.name)))?;
    let lo = t.breakpoints.first().map_or(-1.0, |b| b - 1.0);
    let hi = t.breakpoints.last().map_or(1.0, |b| b + 1.0);
    let mut table = Table::new(&["x", "g", "g_prime", "g_second", "g_inverse"]);
    for i in 0..=2000 {
        let x = lo + (hi - lo) * i as f64 / 2000.0;
        table.push(vec![num(x), num(t.g(x)), num(t.g1(x)), num(t.g2(x)), num(t.inverse(x))]);
    }
    Ok(table)
}

pub(crate) fn transform_dump(config: &ExperimentConfig) -> Result<Outcome> {
    let spec = transform_model(config)?;
    let t = build_transform(&spec).map_err(CliError::core(format!("transform of model {}", spec.name)))?;
    Ok(Outcome {
        tables: vec![("transform.csv".into(), transform_table(config)?)],
        report: json!({
            "model": spec.name,
            "breakpoints": t.breakpoints,
            "alphas": t.alphas,
            "c0": t.c0,
            "lipschitz": t.lipschitz(),
            "inverse_lipschitz": t.inverse_lipschitz(),
        }),
    })
}

/// `(path_index, k, t, value)` for the first `n` paths of the experiment's model.
pub(crate) fn path_table(config: &ExperimentConfig, n: usize) -> Result<Table> {
    let (spec, default) = match config.experiment {
        Experiment::FigDisc => (model("perturbed_sign", &[("k", 10.0)])?, SchemeKind::ExplicitEm),
        Experiment::FigCir => (model("cir", &[])?, SchemeKind::SymmetrisedEm),
        Experiment::Rates => (
            config.model.clone().unwrap_or(ModelChoice::Name("cubic".into())).build()?,
            SchemeKind::TransformedSemiImplicit { monotone: true },
        ),
        _ => (transform_model(config)?, SchemeKind::TransformedSemiImplicit { monotone: false }),
    };
    let grid = TimeGrid::new(1.0, config.steps()).map_err(CliError::core("time grid"))?;
    let stepper = stepper(config.scheme_or(default)?, spec, grid)?;
    let mut table = Table::new(&["path_index", "k", "t", "value"]);
    for i in 0..n as u64 {
        let path = simulate_path(&stepper, &sample_increments(&grid, config.seed, i))
            .map_err(CliError::core(format!("path {i}")))?;
        for (k, v) in path.values.iter().enumerate() {
            table.push(vec![i.to_string(), k.to_string(), num(grid.time(k)), num(*v)]);
        }
    }
    Ok(table)
}
