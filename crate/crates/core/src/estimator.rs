//! Monte Carlo estimation under the synchronous coupling, strong-error
//! curves, moment diagnostics and the non-monotonicity witness for the
//! truncated Euler step of a driftless SDE.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bicausal::CostFunctional;
use crate::models::{validate_assumptions, CoefficientSpec, ProbeGrid};
use crate::randomness::{sample_increments, truncate_increments, TimeGrid, TruncationLevel};
use crate::schemes::{simulate_path, CoupledSimulator, SchemeKind, StepperConfig};
use crate::{Error, Result};

/// Paths per reduction chunk. Chunk results are merged in index order, so
/// the outcome does not depend on how chunks are scheduled.
pub const PATH_CHUNK: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub paths: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Clip the shared increments to `±a_h` before either leg sees them.
    pub truncate: bool,
}

impl McOptions {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self { paths, seed, workers: None, truncate: false }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_truncation(mut self, truncate: bool) -> Self {
        self.truncate = truncate;
        self
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Sample standard deviation over `sqrt(n)`.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Runs `per_chunk` over fixed path ranges and returns the results in order.
fn map_chunks<T, F>(paths: usize, workers: Option<usize>, per_chunk: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<u64>) -> Result<T> + Sync,
{
    let paths = paths as u64;
    let chunks: Vec<Range<u64>> =
        (0..paths.div_ceil(PATH_CHUNK)).map(|c| c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(paths)).collect();
    let run = || chunks.par_iter().map(|r| per_chunk(r.clone())).collect::<Result<Vec<T>>>();
    match workers {
        Some(0) => Err(Error::Config("worker count must be positive".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(run),
        None => run(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegMetadata {
    pub model: String,
    pub scheme: SchemeKind,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    /// `V_c`, or `AW_p^p` for [`estimate_aw`].
    pub estimate: f64,
    pub std_error: f64,
    /// `AW_p` itself, for [`estimate_aw`].
    pub distance: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub legs: [LegMetadata; 2],
    /// False when either model failed its assumption checks, in which case
    /// the synchronous coupling is not known to be optimal.
    pub certified: bool,
    pub warnings: Vec<String>,
}

fn assumption_warnings(spec: &CoefficientSpec) -> Vec<String> {
    let mut out: Vec<String> = spec.warnings.iter().map(|w| format!("{}: {w}", spec.name)).collect();
    match validate_assumptions(spec, &ProbeGrid::default()) {
        Ok(report) => out.extend(report.failures().map(|c| {
            format!(
                "{}: {:?} fails for class {}; optimality not certified",
                spec.name,
                c.condition,
                spec.regularity_class.as_str()
            )
        })),
        Err(e) => out.push(format!("{}: assumptions not checked ({e}); optimality not certified", spec.name)),
    }
    out
}

/// Estimates `V_c(mu, nu) = E[int_0^T c_t(X_t, Xbar_t) dt]` with both legs
/// driven by the same increments.
///
/// The time integral is discretised with equal weights `T / (N + 1)` on the
/// `N + 1` grid nodes; the cost at node `j` is evaluated as stage `j`.
pub fn estimate_vc(
    mu: &StepperConfig,
    nu: &StepperConfig,
    cost: &CostFunctional,
    opts: &McOptions,
) -> Result<EstimateResult> {
    if mu.grid != nu.grid {
        return Err(Error::Config("both legs must use the same time grid".into()));
    }
    if opts.paths == 0 {
        return Err(Error::Config("at least one path is required".into()));
    }
    let grid = mu.grid;
    let weight = grid.horizon() / (grid.steps() + 1) as f64;
    let chunks = map_chunks(opts.paths, opts.workers, |range| {
        let mut acc = Moments::default();
        for i in range {
            let mut inc = sample_increments(&grid, opts.seed, i);
            if opts.truncate {
                inc = truncate_increments(&inc)?;
            }
            let x = simulate_path(mu, &inc)?;
            let y = simulate_path(nu, &inc)?;
            let v: f64 = x.values.iter().zip(&y.values).enumerate().map(|(j, (a, b))| cost.eval(j, *a, *b)).sum();
            acc.push(weight * v);
        }
        Ok(acc)
    })?;
    let mut total = Moments::default();
    for c in &chunks {
        total.merge(c);
    }
    let mut warnings = assumption_warnings(&mu.spec);
    warnings.extend(assumption_warnings(&nu.spec));
    let certified = !warnings.iter().any(|w| w.ends_with("optimality not certified"));
    let leg = |c: &StepperConfig| LegMetadata {
        model: c.spec.name.clone(),
        scheme: c.kind,
        truncated: opts.truncate || c.truncation.is_some(),
    };
    Ok(EstimateResult {
        estimate: total.mean,
        std_error: total.std_error(),
        distance: None,
        paths: opts.paths,
        seed: opts.seed,
        grid,
        legs: [leg(mu), leg(nu)],
        certified,
        warnings,
    })
}

/// Estimates `AW_p^p` as `V_c` for `c = |x - y|^p`.
pub fn estimate_aw(mu: &StepperConfig, nu: &StepperConfig, p: f64, opts: &McOptions) -> Result<EstimateResult> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Config(format!("p must be at least 1, got {p}")));
    }
    let mut r = estimate_vc(mu, nu, &CostFunctional::power(p), opts)?;
    r.distance = Some(r.estimate.max(0.0).powf(1.0 / p));
    Ok(r)
}

/// Least-squares line through `(ln h, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals.
    pub rms: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LineFit {
        slope,
        intercept,
        rms: (ss_res / n as f64).sqrt(),
        r_squared: if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy },
        points: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub all: LineFit,
    /// Fit without the largest `h`, present when that point lies more than
    /// three RMS residuals away from the line through the other points.
    pub trimmed: Option<LineFit>,
}

impl SlopeFit {
    pub fn slope(&self) -> f64 {
        self.trimmed.unwrap_or(self.all).slope
    }
}

/// Log-log slope of `errors` against `hs`; `None` if any error is zero or
/// not finite, or fewer than two points are given.
pub fn fit_slope(hs: &[f64], errors: &[f64]) -> Option<SlopeFit> {
    if errors.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let all = fit_line(&xs, &ys)?;
    let largest = (0..xs.len()).max_by(|&a, &b| xs[a].total_cmp(&xs[b]))?;
    if xs.len() < 3 {
        return Some(SlopeFit { all, trimmed: None });
    }
    let keep = |v: &[f64]| v.iter().enumerate().filter(|(i, _)| *i != largest).map(|(_, x)| *x).collect::<Vec<_>>();
    let rest = fit_line(&keep(&xs), &keep(&ys))?;
    let residual = (ys[largest] - rest.intercept - rest.slope * xs[largest]).abs();
    let trimmed = (residual > 3.0 * rest.rms.max(1e-9)).then_some(rest);
    Some(SlopeFit { all, trimmed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub h: f64,
    /// `sup_k E[|X_kh - X^h_kh|^p]^(1/p)`.
    pub err_sup: f64,
    /// `E[int_0^T |X_t - X^h_{floor(t/h) h}|^p dt]^(1/p)`.
    pub err_int: f64,
    pub se_sup: f64,
    pub se_int: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub model: String,
    pub scheme: SchemeKind,
    pub p: f64,
    pub h_ref: f64,
    pub paths: usize,
    pub seed: u64,
    /// Strictly decreasing in `h`.
    pub points: Vec<RatePoint>,
    pub sup_fit: Option<SlopeFit>,
    pub int_fit: Option<SlopeFit>,
}

#[derive(Clone)]
struct LevelSums {
    /// Per coarse node: sums of `|d|^p` and of `|d|^2p` over paths.
    node_sum: Vec<f64>,
    node_sq: Vec<f64>,
    integral: Moments,
}

/// Integer ratio `a / b`, if it is one.
fn ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    ((r - n).abs() < 1e-9 * r.max(1.0) && n >= 1.0).then_some(n as usize)
}

/// `x^(1/p)` with its delta-method standard error.
fn root_with_error(m: f64, se: f64, p: f64) -> (f64, f64) {
    let r = m.max(0.0).powf(1.0 / p);
    let se = if m > 0.0 { se * m.powf(1.0 / p - 1.0) / p } else { 0.0 };
    (r, se)
}

/// Strong errors of `kind` at each step in `h_list` against the same scheme
/// at `h_ref`, all driven by one Brownian path per sample, on `[0, 1]`.
pub fn strong_error_curve(
    spec: &CoefficientSpec,
    kind: SchemeKind,
    p: f64,
    h_list: &[f64],
    h_ref: f64,
    opts: &McOptions,
) -> Result<RateCurve> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Config(format!("p must be at least 1, got {p}")));
    }
    if h_list.is_empty() || opts.paths == 0 {
        return Err(Error::Config("need at least one step size and one path".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("step sizes must be strictly decreasing".into()));
    }
    let fine_steps = ratio(1.0, h_ref).ok_or_else(|| Error::Config(format!("h_ref = {h_ref} does not divide 1")))?;
    let fine = TimeGrid::new(1.0, fine_steps)?;
    let mut factors = vec![1];
    for &h in h_list {
        let f = ratio(h, h_ref)
            .filter(|f| fine_steps % f == 0)
            .ok_or_else(|| Error::Config(format!("h_ref = {h_ref} does not divide h = {h}")))?;
        if f == 1 {
            return Err(Error::Config(format!("h = {h} coincides with the reference step")));
        }
        factors.push(f);
    }
    let sim = CoupledSimulator::new(kind, spec, fine, &factors)?;
    let empty: Vec<LevelSums> = factors[1..]
        .iter()
        .map(|f| LevelSums {
            node_sum: vec![0.0; fine_steps / f + 1],
            node_sq: vec![0.0; fine_steps / f + 1],
            integral: Moments::default(),
        })
        .collect();
    let chunks = map_chunks(opts.paths, opts.workers, |range| {
        let mut acc = empty.clone();
        for i in range {
            let paths = sim.simulate(opts.seed, i)?;
            let reference = &paths[&1].values;
            for (level, &f) in acc.iter_mut().zip(&factors[1..]) {
                let coarse = &paths[&f].values;
                for (k, x) in coarse.iter().enumerate() {
                    let d = (reference[k * f] - x).abs().powf(p);
                    level.node_sum[k] += d;
                    level.node_sq[k] += d * d;
                }
                let integral: f64 =
                    (0..fine_steps).map(|m| (reference[m] - coarse[m / f]).abs().powf(p)).sum::<f64>() * h_ref;
                level.integral.push(integral);
            }
        }
        Ok(acc)
    })?;
    let mut total = empty;
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.node_sum.iter_mut().zip(&c.node_sum).for_each(|(a, b)| *a += b);
            t.node_sq.iter_mut().zip(&c.node_sq).for_each(|(a, b)| *a += b);
            t.integral.merge(&c.integral);
        }
    }
    let n = opts.paths as f64;
    let points: Vec<RatePoint> = h_list
        .iter()
        .zip(&total)
        .map(|(&h, level)| {
            let (k, m) = level
                .node_sum
                .iter()
                .map(|s| s / n)
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("grid has nodes");
            let var = if opts.paths > 1 { (level.node_sq[k] / n - m * m).max(0.0) * n / (n - 1.0) } else { 0.0 };
            let (err_sup, se_sup) = root_with_error(m, (var / n).sqrt(), p);
            let (err_int, se_int) = root_with_error(level.integral.mean, level.integral.std_error(), p);
            RatePoint { h, err_sup, err_int, se_sup, se_int }
        })
        .collect();
    let hs: Vec<f64> = points.iter().map(|q| q.h).collect();
    let sup: Vec<f64> = points.iter().map(|q| q.err_sup).collect();
    let int: Vec<f64> = points.iter().map(|q| q.err_int).collect();
    Ok(RateCurve {
        model: spec.name.clone(),
        scheme: kind,
        p,
        h_ref,
        paths: opts.paths,
        seed: opts.seed,
        sup_fit: fit_slope(&hs, &sup),
        int_fit: fit_slope(&hs, &int),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub h: f64,
    pub p: f64,
    /// `E[max_k |X^h_kh|^p]`; infinite once a path leaves the floats.
    pub sup_moment: f64,
    pub std_error: f64,
}

/// Empirical `E[max_k |X^h_kh|^p]` on `[0, 1]` for each step size.
pub fn moment_diagnostic(
    spec: &CoefficientSpec,
    kind: SchemeKind,
    p: f64,
    h_list: &[f64],
    opts: &McOptions,
) -> Result<Vec<MomentRow>> {
    h_list
        .iter()
        .map(|&h| {
            let steps = ratio(1.0, h).ok_or_else(|| Error::Config(format!("h = {h} does not divide 1")))?;
            let config = StepperConfig::new(kind, spec.clone(), TimeGrid::new(1.0, steps)?)?;
            let chunks = map_chunks(opts.paths, opts.workers, |range| {
                let mut acc = Moments::default();
                for i in range {
                    let path = simulate_path(&config, &sample_increments(&config.grid, opts.seed, i))?;
                    let m = path
                        .values
                        .iter()
                        .map(|x| if x.is_finite() { x.abs().powf(p) } else { f64::INFINITY })
                        .fold(0.0, f64::max);
                    acc.push(m);
                }
                Ok(acc)
            })?;
            let mut total = Moments::default();
            for c in &chunks {
                total.merge(c);
            }
            let sup_moment = if total.mean.is_nan() { f64::INFINITY } else { total.mean };
            Ok(MomentRow { h, p, sup_moment, std_error: total.std_error() })
        })
        .collect()
}

/// Pair of starting points whose one-step truncated Euler laws for
/// `dZ = sigma(Z) dW` cross in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingPair {
    pub h: f64,
    pub a_h: f64,
    pub z: f64,
    pub z_bar: f64,
    pub sigma_z: f64,
    pub sigma_z_bar: f64,
    /// Threshold with `F_z(a) < F_zbar(a)`: the step is not increasing.
    pub a_lower: f64,
    /// Threshold with `F_z(a) > F_zbar(a)`: the step is not decreasing.
    pub a_upper: f64,
    pub cdf_z_lower: f64,
    pub cdf_z_bar_lower: f64,
    pub cdf_z_upper: f64,
    pub cdf_z_bar_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WitnessOutcome {
    Found(CrossingPair),
    Inconclusive { reason: String },
}

/// CDF of `z + sigma clip(dW, ±a_h)` with `dW ~ N(0, h)`.
pub fn truncated_step_cdf(z: f64, sigma: f64, h: f64, a_h: f64, a: f64) -> f64 {
    if a < z - sigma * a_h {
        0.0
    } else if a >= z + sigma * a_h {
        1.0
    } else {
        let normal = Normal::standard();
        normal.cdf((a - z) / (sigma * h.sqrt()))
    }
}

/// Searches `points` equally spaced starting points in `[lo, hi]` for a pair
/// `z < zbar` with `|sigma(zbar) - sigma(z)| > (zbar - z) / a_h`, taking the
/// largest margin, and verifies the two crossings by evaluating both CDFs.
pub fn monotonicity_witness<F: Fn(f64) -> f64>(
    sigma: F,
    h: f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<WitnessOutcome> {
    if points < 2 || lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::Config("search grid needs two points on a nonempty interval".into()));
    }
    let a_h = TruncationLevel::for_step(h)?.a_h;
    let zs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let ss: Vec<f64> = zs.iter().map(|&z| sigma(z)).collect();
    if let Some(i) = ss.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Domain(format!("sigma({}) = {} must be positive and finite", zs[i], ss[i])));
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..points {
        for j in i + 1..points {
            let margin = (ss[j] - ss[i]).abs() - (zs[j] - zs[i]) / a_h;
            // Near-ties go to pairs along which sigma increases.
            let beats = |m: f64, bi: usize, bj: usize| {
                margin > m + 1e-12 || (margin > m - 1e-12 && ss[j] > ss[i] && ss[bj] <= ss[bi])
            };
            if margin > 0.0 && best.is_none_or(|(m, bi, bj)| beats(m, bi, bj)) {
                best = Some((margin, i, j));
            }
        }
    }
    let Some((_, i, j)) = best else {
        return Ok(WitnessOutcome::Inconclusive {
            reason: format!("no pair on the grid violates the 1/a_h = {} Lipschitz bound", 1.0 / a_h),
        });
    };
    let (z, zb, s, sb) = (zs[i], zs[j], ss[i], ss[j]);
    let (lo_z, lo_zb, hi_z, hi_zb) = (z - s * a_h, zb - sb * a_h, z + s * a_h, zb + sb * a_h);
    // The support edge that is out of order gives the first threshold.
    let (a_lower, a_upper) = if sb > s {
        (0.5 * (lo_zb + lo_z), 0.5 * (hi_z + hi_zb))
    } else {
        (0.5 * (hi_zb + hi_z), 0.5 * (lo_z + lo_zb))
    };
    let cdf = |x: f64, sig: f64, a: f64| truncated_step_cdf(x, sig, h, a_h, a);
    let pair = CrossingPair {
        h,
        a_h,
        z,
        z_bar: zb,
        sigma_z: s,
        sigma_z_bar: sb,
        a_lower,
        a_upper,
        cdf_z_lower: cdf(z, s, a_lower),
        cdf_z_bar_lower: cdf(zb, sb, a_lower),
        cdf_z_upper: cdf(z, s, a_upper),
        cdf_z_bar_upper: cdf(zb, sb, a_upper),
    };
    if pair.cdf_z_lower < pair.cdf_z_bar_lower && pair.cdf_z_upper > pair.cdf_z_bar_upper {
        Ok(WitnessOutcome::Found(pair))
    } else {
        Ok(WitnessOutcome::Inconclusive { reason: format!("candidate pair ({z}, {zb}) did not verify: {pair:?}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_model, ModelParams};

    fn config(name: &str, kind: SchemeKind, steps: usize) -> StepperConfig {
        let spec = builtin_model(name, &ModelParams::new()).unwrap();
        StepperConfig::new(kind, spec, TimeGrid::new(1.0, steps).unwrap()).unwrap()
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut parts = Moments::default();
        for c in xs.chunks(7) {
            let mut m = Moments::default();
            c.iter().for_each(|&x| m.push(x));
            parts.merge(&m);
        }
        assert!((whole.mean - parts.mean).abs() < 1e-12);
        assert!((whole.variance() - parts.variance()).abs() < 1e-10);
    }

    #[test]
    fn identical_legs_give_zero() {
        let c = config("cubic", SchemeKind::SemiImplicitEm, 64);
        let r = estimate_aw(&c, &c, 2.0, &McOptions::new(50, 4)).unwrap();
        assert_eq!((r.estimate, r.std_error), (0.0, 0.0));
        assert_eq!(r.distance, Some(0.0));
    }

    #[test]
    fn deterministic_drift_gap() {
        // X = W and Xbar = W + t share the noise, so |X - Xbar|^2 = t^2 on every path.
        let a = config("brownian", SchemeKind::ExplicitEm, 8);
        let mut spec = a.spec.clone();
        spec.drift = std::sync::Arc::new(|_, _| 1.0);
        let b = StepperConfig::new(SchemeKind::ExplicitEm, spec, a.grid).unwrap();
        let r = estimate_aw(&a, &b, 2.0, &McOptions::new(10, 1)).unwrap();
        let expected: f64 = (0..=8).map(|j| (j as f64 / 8.0).powi(2)).sum::<f64>() / 9.0;
        assert!((r.estimate - expected).abs() < 1e-12);
        assert!(r.std_error < 1e-12);
    }

    #[test]
    fn worker_count_does_not_change_estimate() {
        let a = config("brownian", SchemeKind::ExplicitEm, 32);
        let b = StepperConfig::new(
            SchemeKind::ExplicitEm,
            builtin_model("perturbed_sign", &ModelParams::from([("k".to_string(), 5.0)])).unwrap(),
            a.grid,
        )
        .unwrap();
        let one = estimate_aw(&a, &b, 2.0, &McOptions::new(200, 9).with_workers(1)).unwrap();
        let four = estimate_aw(&a, &b, 2.0, &McOptions::new(200, 9).with_workers(4)).unwrap();
        assert_eq!(one.estimate.to_bits(), four.estimate.to_bits());
        assert_eq!(one.std_error.to_bits(), four.std_error.to_bits());
    }

    #[test]
    fn slope_fit_recovers_power_law_and_trims_outlier() {
        let hs = [0.5f64, 0.25, 0.125, 0.0625, 0.03125];
        let errs: Vec<f64> = hs.iter().map(|h| 2.0 * h.sqrt()).collect();
        let fit = fit_slope(&hs, &errs).unwrap();
        assert!((fit.slope() - 0.5).abs() < 1e-12);
        assert!(fit.trimmed.is_none());
        let mut bent = errs.clone();
        bent[0] *= 3.0;
        let fit = fit_slope(&hs, &bent).unwrap();
        assert!((fit.trimmed.unwrap().slope - 0.5).abs() < 1e-12);
        assert!(fit_slope(&hs, &[0.0, 1.0, 1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn brownian_errors_vanish_on_shared_nodes() {
        let spec = builtin_model("brownian", &ModelParams::new()).unwrap();
        let curve = strong_error_curve(
            &spec,
            SchemeKind::ExplicitEm,
            2.0,
            &[0.125, 0.0625],
            1.0 / 256.0,
            &McOptions::new(20, 3),
        )
        .unwrap();
        for q in &curve.points {
            assert!(q.err_sup < 1e-12, "{q:?}");
            assert!(q.err_int > 0.0);
        }
    }

    #[test]
    fn rejects_non_dividing_reference() {
        let spec = builtin_model("cubic", &ModelParams::new()).unwrap();
        assert!(
            strong_error_curve(&spec, SchemeKind::SemiImplicitEm, 2.0, &[0.1], 0.03, &McOptions::new(4, 0)).is_err()
        );
    }

    #[test]
    fn truncated_cdf_is_a_cdf() {
        let (h, a) = (0.0625, TruncationLevel::for_step(0.0625).unwrap().a_h);
        let mut prev = 0.0;
        for i in 0..400 {
            let x = -4.0 + 0.02 * i as f64;
            let f = truncated_step_cdf(0.3, 1.2, h, a, x);
            assert!((0.0..=1.0).contains(&f) && f >= prev);
            prev = f;
        }
    }

    #[test]
    fn holder_diffusion_has_witness_at_zero() {
        let h = 0.0625;
        let out = monotonicity_witness(|x: f64| 1.0 + x.abs().sqrt().min(1.0), h, -2.0, 2.0, 401).unwrap();
        let WitnessOutcome::Found(w) = out else { panic!("{out:?}") };
        assert_eq!(w.z, 0.0);
        assert!(w.z_bar > 0.0 && w.z_bar < w.a_h * w.a_h);
        assert!(w.cdf_z_lower < w.cdf_z_bar_lower);
        assert!(w.cdf_z_upper > w.cdf_z_bar_upper);
    }

    #[test]
    fn lipschitz_diffusions_are_inconclusive() {
        let h = 0.0625;
        let a = TruncationLevel::for_step(h).unwrap().a_h;
        let out = monotonicity_witness(|_| 1.0, h, -2.0, 2.0, 101).unwrap();
        assert!(matches!(out, WitnessOutcome::Inconclusive { .. }));
        let out = monotonicity_witness(|x: f64| 1.0 + x.abs() / (2.0 * a), h, -2.0, 2.0, 101).unwrap();
        assert!(matches!(out, WitnessOutcome::Inconclusive { .. }));
    }

    #[test]
    fn explicit_euler_diverges_on_cubic_drift() {
        let spec = builtin_model("cubic", &ModelParams::from([("x0".to_string(), 10.0)])).unwrap();
        let rows = moment_diagnostic(&spec, SchemeKind::ExplicitEm, 2.0, &[0.25], &McOptions::new(8, 0)).unwrap();
        assert!(rows[0].sup_moment > 1e6);
    }
}
