//! SDE coefficients, their regularity metadata, and sampled assumption checks.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{sign, Error, Result};

/// Coefficient function of `(t, x)`.
pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityClass {
    /// Globally Lipschitz drift and diffusion.
    Lipschitz,
    /// Piecewise one-sided Lipschitz drift with exponential local growth,
    /// finitely many jumps and a Lipschitz, non-vanishing diffusion at the jumps.
    GrowthDisc,
    /// Continuous coefficients with pathwise uniqueness.
    Regular,
    /// Bounded measurable drift with bounded, non-degenerate Hölder diffusion.
    Zvonkin,
}

impl RegularityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Lipschitz => "lipschitz",
            Self::GrowthDisc => "growth_disc",
            Self::Regular => "regular",
            Self::Zvonkin => "zvonkin",
        }
    }
}

/// Constants `(K_b, gamma, eta)` of the local growth bound
/// `|b(x) - b(y)| <= K_b (exp(gamma |x|^eta) + exp(gamma |y|^eta)) |x - y|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub k_b: f64,
    pub gamma: f64,
    pub eta: f64,
}

/// Declared bounds for the coefficients after the jump-removing transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedBounds {
    pub one_sided_lipschitz: f64,
    pub diffusion_lipschitz: f64,
}

/// Parameters of `dX = kappa (eta - X) dt + gamma sqrt(X) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub kappa: f64,
    pub eta: f64,
    pub gamma: f64,
}

impl CirParams {
    pub fn feller(&self) -> bool {
        2.0 * self.kappa * self.eta >= self.gamma * self.gamma
    }
}

/// A scalar SDE `dX = b(t, X) dt + sigma(t, X) dW` with metadata.
#[derive(Clone)]
pub struct CoefficientSpec {
    pub name: String,
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub initial_value: f64,
    pub breakpoints: Vec<f64>,
    pub one_sided_lipschitz_bound: Option<f64>,
    pub diffusion_lipschitz_bound: Option<f64>,
    pub growth_constants: Option<GrowthConstants>,
    pub regularity_class: RegularityClass,
    pub time_homogeneous: bool,
    pub transformed_bounds: Option<TransformedBounds>,
    pub cir: Option<CirParams>,
    pub warnings: Vec<String>,
}

impl fmt::Debug for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSpec")
            .field("name", &self.name)
            .field("initial_value", &self.initial_value)
            .field("breakpoints", &self.breakpoints)
            .field("one_sided_lipschitz_bound", &self.one_sided_lipschitz_bound)
            .field("diffusion_lipschitz_bound", &self.diffusion_lipschitz_bound)
            .field("growth_constants", &self.growth_constants)
            .field("regularity_class", &self.regularity_class)
            .field("time_homogeneous", &self.time_homogeneous)
            .field("transformed_bounds", &self.transformed_bounds)
            .field("cir", &self.cir)
            .finish_non_exhaustive()
    }
}

impl CoefficientSpec {
    pub fn new<B, S>(
        name: impl Into<String>,
        drift: B,
        diffusion: S,
        initial_value: f64,
        class: RegularityClass,
    ) -> Self
    where
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            initial_value,
            breakpoints: Vec::new(),
            one_sided_lipschitz_bound: None,
            diffusion_lipschitz_bound: None,
            growth_constants: None,
            regularity_class: class,
            time_homogeneous: true,
            transformed_bounds: None,
            cir: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn with_lipschitz(mut self, drift_one_sided: f64, diffusion: f64) -> Self {
        self.one_sided_lipschitz_bound = Some(drift_one_sided);
        self.diffusion_lipschitz_bound = Some(diffusion);
        self
    }

    pub fn with_growth(mut self, k_b: f64, gamma: f64, eta: f64) -> Self {
        self.growth_constants = Some(GrowthConstants { k_b, gamma, eta });
        self
    }

    pub fn with_transformed_bounds(mut self, one_sided_lipschitz: f64, diffusion_lipschitz: f64) -> Self {
        self.transformed_bounds = Some(TransformedBounds { one_sided_lipschitz, diffusion_lipschitz });
        self
    }

    pub fn time_dependent(mut self) -> Self {
        self.time_homogeneous = false;
        self
    }

    pub fn with_initial_value(mut self, x0: f64) -> Self {
        self.initial_value = x0;
        self
    }

    pub fn b(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    /// Breakpoints strictly increasing and finite.
    pub fn check_breakpoints(&self) -> Result<()> {
        if let Some(x) = self.breakpoints.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("breakpoint {x} is not finite")));
        }
        if let Some(w) = self.breakpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("breakpoints must be strictly increasing: {} then {}", w[0], w[1])));
        }
        Ok(())
    }

    /// Transformed bounds, defaulting to the raw ones when there is nothing to transform.
    pub fn effective_transformed_bounds(&self) -> Option<TransformedBounds> {
        self.transformed_bounds.or_else(|| {
            if self.breakpoints.is_empty() {
                Some(TransformedBounds {
                    one_sided_lipschitz: self.one_sided_lipschitz_bound?,
                    diffusion_lipschitz: self.diffusion_lipschitz_bound?,
                })
            } else {
                None
            }
        })
    }
}

/// Sampling grid for [`validate_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub times: Vec<f64>,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0, points: 1000, times: vec![0.0, 0.5, 1.0] }
    }
}

impl ProbeGrid {
    pub fn xs(&self) -> Vec<f64> {
        if self.points < 2 {
            return vec![self.lo];
        }
        let dx = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + i as f64 * dx).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    BreakpointsSorted,
    DiffusionNonNegative,
    TimeHomogeneous,
    /// `(x - y)(b(x) - b(y)) <= L_b |x - y|^2` within each interval.
    OneSidedLipschitz,
    /// Exponential local Lipschitz growth within each interval.
    ExponentialGrowth,
    /// `|sigma(x) - sigma(y)| <= L_sigma |x - y|`.
    DiffusionLipschitz,
    /// `|b(x) - b(y)| <= L_b |x - y|`.
    DriftLipschitz,
    /// `sigma(xi_k) != 0` at every breakpoint.
    BreakpointNonDegenerate,
    DriftContinuous,
    DiffusionContinuous,
    DriftBounded,
    DiffusionBounded,
    DiffusionNonDegenerate,
    LinearGrowth,
    HolderDiffusion,
}

/// Sampled point at which the inequality `lhs <= rhs` fails.
///
/// For the strict conditions ([`Condition::BreakpointNonDegenerate`],
/// [`Condition::DiffusionNonDegenerate`]) the inequality reads `lhs < rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: f64,
    pub y: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Pass,
    Fail { witness: Witness },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub verdict: Verdict,
    /// Slack allowed before a sampled inequality counts as violated.
    pub tolerance: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub model: String,
    pub class: RegularityClass,
    pub checks: Vec<ConditionCheck>,
}

impl AssumptionReport {
    pub fn verdict(&self, condition: Condition) -> Option<&Verdict> {
        self.checks.iter().find(|c| c.condition == condition).map(|c| &c.verdict)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| matches!(c.verdict, Verdict::Fail { .. }))
    }

    pub fn all_pass_or_inconclusive(&self) -> bool {
        self.failures().next().is_none()
    }
}

const PROBE_TOL: f64 = 1e-9;
const CONTINUITY_DELTA: f64 = 1e-7;
const CONTINUITY_JUMP: f64 = 1e-3;

fn tol(rhs: f64) -> f64 {
    PROBE_TOL * (1.0 + rhs.abs())
}

/// Evaluates the sampled inequality of `condition` at the witness coordinates.
///
/// Returns `(lhs, rhs)`; `None` when the condition has no pointwise form or
/// the constants it needs are absent.
pub fn evaluate_condition(
    spec: &CoefficientSpec,
    condition: Condition,
    t: f64,
    x: f64,
    y: Option<f64>,
) -> Option<(f64, f64)> {
    let b = |x: f64| spec.b(t, x);
    let s = |x: f64| spec.sigma(t, x);
    match condition {
        Condition::BreakpointsSorted => Some((x, y?)),
        Condition::DiffusionNonNegative => Some((0.0, s(x))),
        Condition::TimeHomogeneous => {
            Some(((spec.b(t, x) - spec.b(0.0, x)).abs() + (spec.sigma(t, x) - spec.sigma(0.0, x)).abs(), 0.0))
        }
        Condition::OneSidedLipschitz => {
            let y = y?;
            let l = spec.one_sided_lipschitz_bound?;
            Some(((x - y) * (b(x) - b(y)), l * (x - y) * (x - y)))
        }
        Condition::ExponentialGrowth => {
            let y = y?;
            let g = spec.growth_constants?;
            let e = |z: f64| (g.gamma * z.abs().powf(g.eta)).exp();
            Some(((b(x) - b(y)).abs(), g.k_b * (e(x) + e(y)) * (x - y).abs()))
        }
        Condition::DiffusionLipschitz => {
            let y = y?;
            let l = spec.diffusion_lipschitz_bound?;
            Some(((s(x) - s(y)).abs(), l * (x - y).abs()))
        }
        Condition::DriftLipschitz => {
            let y = y?;
            let l = spec.one_sided_lipschitz_bound?;
            Some(((b(x) - b(y)).abs(), l * (x - y).abs()))
        }
        Condition::BreakpointNonDegenerate | Condition::DiffusionNonDegenerate => Some((0.0, s(x).abs())),
        Condition::DriftContinuous => Some(((b(x) - b(y?)).abs(), CONTINUITY_JUMP)),
        Condition::DiffusionContinuous => Some(((s(x) - s(y?)).abs(), CONTINUITY_JUMP)),
        Condition::DriftBounded => Some((b(x).abs(), f64::MAX)),
        Condition::DiffusionBounded => Some((s(x).abs(), f64::MAX)),
        Condition::LinearGrowth | Condition::HolderDiffusion => None,
    }
}

fn is_strict(condition: Condition) -> bool {
    matches!(condition, Condition::BreakpointNonDegenerate | Condition::DiffusionNonDegenerate)
}

fn violated(condition: Condition, lhs: f64, rhs: f64) -> bool {
    if lhs.is_nan() || rhs.is_nan() {
        return true;
    }
    if is_strict(condition) {
        lhs >= rhs
    } else {
        lhs > rhs + tol(rhs)
    }
}

/// Re-evaluates a failed check from scratch; true when the witness still violates it.
pub fn recheck(spec: &CoefficientSpec, check: &ConditionCheck) -> bool {
    match &check.verdict {
        Verdict::Fail { witness } => evaluate_condition(spec, check.condition, witness.t, witness.x, witness.y)
            .map(|(l, r)| violated(check.condition, l, r))
            .unwrap_or(false),
        _ => false,
    }
}

struct Prober<'a> {
    spec: &'a CoefficientSpec,
    xs: Vec<f64>,
    times: Vec<f64>,
    checks: Vec<ConditionCheck>,
}

impl Prober<'_> {
    fn push(&mut self, condition: Condition, verdict: Verdict, note: Option<String>) {
        self.checks.push(ConditionCheck { condition, verdict, tolerance: PROBE_TOL, note });
    }

    fn pointwise(&mut self, condition: Condition, points: &[f64]) {
        let mut verdict = Verdict::Pass;
        'outer: for &t in &self.times {
            for &x in points {
                if let Some((lhs, rhs)) = evaluate_condition(self.spec, condition, t, x, None) {
                    if violated(condition, lhs, rhs) {
                        verdict = Verdict::Fail { witness: Witness { t, x, y: None, lhs, rhs } };
                        break 'outer;
                    }
                }
            }
        }
        self.push(condition, verdict, None);
    }

    /// Checks a two-point inequality on all pairs inside each group of points.
    fn pairwise(&mut self, condition: Condition, groups: &[Vec<f64>], times: &[f64]) {
        let mut verdict = Verdict::Pass;
        'outer: for &t in times {
            for group in groups {
                for (i, &x) in group.iter().enumerate() {
                    for &y in &group[i + 1..] {
                        if let Some((lhs, rhs)) = evaluate_condition(self.spec, condition, t, x, Some(y)) {
                            if violated(condition, lhs, rhs) {
                                verdict = Verdict::Fail { witness: Witness { t, x, y: Some(y), lhs, rhs } };
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        self.push(condition, verdict, None);
    }

    /// Probe points split into the open intervals between breakpoints.
    fn intervals(&self) -> Vec<Vec<f64>> {
        let bps = &self.spec.breakpoints;
        let mut groups = vec![Vec::new(); bps.len() + 1];
        for &x in &self.xs {
            if bps.contains(&x) {
                continue;
            }
            let idx = bps.partition_point(|&xi| xi < x);
            groups[idx].push(x);
        }
        groups
    }

    /// Bisects every probe cell whose endpoint values differ by more than the
    /// jump threshold; a jump that survives down to width `2 delta` is a witness.
    fn continuity(&mut self, condition: Condition) {
        let mut verdict = Verdict::Pass;
        'outer: for &t in &self.times {
            for w in self.xs.windows(2) {
                let gap = |a: f64, b: f64| evaluate_condition(self.spec, condition, t, a, Some(b));
                let (mut a, mut b) = (w[0], w[1]);
                let Some((mut lhs, _)) = gap(a, b) else { continue };
                if lhs <= CONTINUITY_JUMP {
                    continue;
                }
                while b - a > 2.0 * CONTINUITY_DELTA {
                    let m = 0.5 * (a + b);
                    let (left, right) = (gap(a, m).unwrap().0, gap(m, b).unwrap().0);
                    if left >= right {
                        b = m;
                        lhs = left;
                    } else {
                        a = m;
                        lhs = right;
                    }
                    if lhs <= CONTINUITY_JUMP {
                        break;
                    }
                }
                if lhs > CONTINUITY_JUMP {
                    verdict = Verdict::Fail { witness: Witness { t, x: a, y: Some(b), lhs, rhs: CONTINUITY_JUMP } };
                    break 'outer;
                }
            }
        }
        self.push(condition, verdict, None);
    }

    fn supremum(&mut self, condition: Condition, f: impl Fn(f64, f64) -> f64) {
        let mut sup = 0.0f64;
        let mut bad = None;
        for &t in &self.times {
            for &x in &self.xs {
                let v = f(t, x).abs();
                if !v.is_finite() {
                    bad = Some(Witness { t, x, y: None, lhs: v, rhs: f64::MAX });
                }
                sup = sup.max(v);
            }
        }
        match bad {
            Some(witness) => self.push(condition, Verdict::Fail { witness }, None),
            None => self.push(condition, Verdict::Pass, Some(format!("sampled supremum {sup}"))),
        }
    }
}

fn require(value: Option<f64>, what: &str, class: RegularityClass) -> Result<()> {
    match value {
        Some(v) if v.is_finite() && v >= 0.0 => Ok(()),
        Some(v) => Err(Error::Config(format!("{what} must be a nonnegative finite number, got {v}"))),
        None => Err(Error::Config(format!("class {} requires {what}", class.as_str()))),
    }
}

/// Samples the assumptions of the declared regularity class on `probe`.
pub fn validate_assumptions(spec: &CoefficientSpec, probe: &ProbeGrid) -> Result<AssumptionReport> {
    if probe.points == 0 || !(probe.lo.is_finite() && probe.hi.is_finite()) || probe.lo > probe.hi {
        return Err(Error::Config("probe grid must be finite and nonempty".into()));
    }
    let class = spec.regularity_class;
    match class {
        RegularityClass::Lipschitz => {
            require(spec.one_sided_lipschitz_bound, "a drift Lipschitz bound", class)?;
            require(spec.diffusion_lipschitz_bound, "a diffusion Lipschitz bound", class)?;
        }
        RegularityClass::GrowthDisc => {
            require(spec.one_sided_lipschitz_bound, "a one-sided Lipschitz bound", class)?;
            require(spec.diffusion_lipschitz_bound, "a diffusion Lipschitz bound", class)?;
            if spec.growth_constants.is_none() {
                return Err(Error::Config("class growth_disc requires growth constants (K_b, gamma, eta)".into()));
            }
            if !spec.time_homogeneous {
                return Err(Error::Config("class growth_disc requires time-homogeneous coefficients".into()));
            }
        }
        RegularityClass::Regular | RegularityClass::Zvonkin => {}
    }

    let mut p = Prober { spec, xs: probe.xs(), times: probe.times.clone(), checks: Vec::new() };

    let sorted = match spec.breakpoints.windows(2).find(|w| w[0] >= w[1]) {
        Some(w) => Verdict::Fail { witness: Witness { t: 0.0, x: w[0], y: Some(w[1]), lhs: w[0], rhs: w[1] } },
        None => Verdict::Pass,
    };
    p.push(Condition::BreakpointsSorted, sorted, None);
    let xs = p.xs.clone();
    p.pointwise(Condition::DiffusionNonNegative, &xs);

    let intervals = p.intervals();
    let all = vec![xs.clone()];
    match class {
        RegularityClass::Lipschitz => {
            let times = p.times.clone();
            p.pairwise(Condition::DriftLipschitz, &all, &times);
            p.pairwise(Condition::DiffusionLipschitz, &all, &times);
        }
        RegularityClass::GrowthDisc => {
            let t0 = [0.0];
            p.pointwise(Condition::TimeHomogeneous, &xs);
            p.pairwise(Condition::OneSidedLipschitz, &intervals, &t0);
            p.pairwise(Condition::ExponentialGrowth, &intervals, &t0);
            p.pairwise(Condition::DiffusionLipschitz, &all, &t0);
            let bps = spec.breakpoints.clone();
            let saved = std::mem::replace(&mut p.times, vec![0.0]);
            p.pointwise(Condition::BreakpointNonDegenerate, &bps);
            p.times = saved;
        }
        RegularityClass::Regular => {
            p.continuity(Condition::DriftContinuous);
            p.continuity(Condition::DiffusionContinuous);
            if spec.one_sided_lipschitz_bound.is_some() {
                let times = p.times.clone();
                p.pairwise(Condition::OneSidedLipschitz, &all, &times);
            }
            p.push(
                Condition::LinearGrowth,
                Verdict::Inconclusive {
                    reason: "growth and pathwise uniqueness are not certifiable by sampling".into(),
                },
                None,
            );
        }
        RegularityClass::Zvonkin => {
            let s = spec.clone();
            p.supremum(Condition::DriftBounded, move |t, x| s.b(t, x));
            let s = spec.clone();
            p.supremum(Condition::DiffusionBounded, move |t, x| s.sigma(t, x));
            p.pointwise(Condition::DiffusionNonDegenerate, &xs);
            if let Some(last) = p.checks.last_mut() {
                let inf = xs
                    .iter()
                    .flat_map(|&x| probe.times.iter().map(move |&t| (t, x)))
                    .map(|(t, x)| spec.sigma(t, x).abs())
                    .fold(f64::INFINITY, f64::min);
                last.note = Some(format!("sampled infimum {inf}"));
            }
            p.push(
                Condition::HolderDiffusion,
                Verdict::Inconclusive { reason: "Hölder continuity is not certifiable by sampling".into() },
                None,
            );
        }
    }

    Ok(AssumptionReport { model: spec.name.clone(), class, checks: p.checks })
}

pub type ModelParams = BTreeMap<String, f64>;

fn param(params: &ModelParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check_params(name: &str, params: &ModelParams, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| k.as_str() != "x0" && !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Config(format!("model {name} has no parameter `{k}`"))),
        None => Ok(()),
    }
}

/// Names accepted by [`builtin_model`].
pub const BUILTIN_MODELS: &[&str] =
    &["cubic", "sign_drift", "sign_drift_additive", "brownian", "perturbed_sign", "cir", "sign_sin_holder"];

/// Builtin model zoo. Every model accepts an `x0` parameter.
///
/// * `cubic`: `b = -x^3`, `sigma = 1`.
/// * `sign_drift`: `b = 1/2 - 2 sign(x - 1)`, `sigma = |x|`.
/// * `sign_drift_additive`: the same drift with `sigma = 1`.
/// * `brownian`: `b = 0`, `sigma = 1`.
/// * `perturbed_sign` (`k`): `b = (k/10) sign(x)`, `sigma = 1`.
/// * `cir` (`kappa`, `eta`, `gamma`): `b = kappa (eta - x)`, `sigma = gamma sqrt(x+)`.
/// * `sign_sin_holder`: `b = sign(sin x)`, `sigma = 1 + sqrt|x|` for `|x| <= 4`, `3` beyond.
///
/// Transformed bounds were obtained from a dense evaluation of the
/// transformed coefficients and rounded up.
pub fn builtin_model(name: &str, params: &ModelParams) -> Result<CoefficientSpec> {
    use RegularityClass::*;
    let spec = match name {
        "cubic" => {
            check_params(name, params, &[])?;
            CoefficientSpec::new(name, |_, x| -x * x * x, |_, _| 1.0, param(params, "x0", 1.0), GrowthDisc)
                .with_lipschitz(0.0, 0.0)
                .with_growth(3.0, 1.0, 1.0)
        }
        "sign_drift" => {
            check_params(name, params, &[])?;
            CoefficientSpec::new(
                name,
                |_, x| 0.5 - 2.0 * sign(x - 1.0),
                |_, x: f64| x.abs(),
                param(params, "x0", 1.0),
                GrowthDisc,
            )
            .with_breakpoints(vec![1.0])
            .with_lipschitz(0.0, 1.0)
            .with_growth(1.0, 1.0, 1.0)
            .with_transformed_bounds(480.0, 5.5)
        }
        "sign_drift_additive" => {
            check_params(name, params, &[])?;
            CoefficientSpec::new(
                name,
                |_, x| 0.5 - 2.0 * sign(x - 1.0),
                |_, _| 1.0,
                param(params, "x0", 1.0),
                GrowthDisc,
            )
            .with_breakpoints(vec![1.0])
            .with_lipschitz(0.0, 0.0)
            .with_growth(1.0, 1.0, 1.0)
            .with_transformed_bounds(450.0, 4.55)
        }
        "brownian" => {
            check_params(name, params, &[])?;
            CoefficientSpec::new(name, |_, _| 0.0, |_, _| 1.0, param(params, "x0", 0.0), Lipschitz)
                .with_lipschitz(0.0, 0.0)
        }
        "perturbed_sign" => {
            check_params(name, params, &["k"])?;
            let beta = param(params, "k", 1.0) / 10.0;
            let spec = CoefficientSpec::new(
                name,
                move |_, x| beta * sign(x),
                |_, _| 1.0,
                param(params, "x0", 0.0),
                GrowthDisc,
            )
            .with_lipschitz(0.0, 0.0)
            .with_growth(1.0, 1.0, 1.0);
            if beta == 0.0 {
                spec
            } else {
                spec.with_breakpoints(vec![0.0]).with_transformed_bounds(290.0 * beta * beta, 2.27 * beta.abs())
            }
        }
        "cir" => {
            check_params(name, params, &["kappa", "eta", "gamma"])?;
            let cir = CirParams {
                kappa: param(params, "kappa", 1.0),
                eta: param(params, "eta", 1.0),
                gamma: param(params, "gamma", 1.0),
            };
            let CirParams { kappa, eta, gamma } = cir;
            let mut spec = CoefficientSpec::new(
                name,
                move |_, x| kappa * (eta - x),
                move |_, x: f64| gamma * x.max(0.0).sqrt(),
                param(params, "x0", 1.0),
                Regular,
            );
            spec.one_sided_lipschitz_bound = Some((-kappa).max(0.0));
            spec.cir = Some(cir);
            if !cir.feller() {
                spec.warnings.push(format!(
                    "Feller condition 2 kappa eta >= gamma^2 fails ({} < {}); the symmetrised scheme's rate guarantee does not apply",
                    2.0 * kappa * eta,
                    gamma * gamma
                ));
            }
            spec
        }
        "sign_sin_holder" => {
            check_params(name, params, &[])?;
            CoefficientSpec::new(
                name,
                |_, x: f64| sign(x.sin()),
                |_, x: f64| if x.abs() <= 4.0 { 1.0 + x.abs().sqrt() } else { 3.0 },
                param(params, "x0", 0.0),
                Zvonkin,
            )
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(spec)
}
