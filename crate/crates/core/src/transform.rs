//! The map `G(x) = x + sum_k alpha_k phibar_k(x)` that removes drift jumps,
//! and the coefficients of the transformed SDE for `Z = G(X)`.
//!
//! With `d = x - xi`, `u = d / c0` and `|u| < 1` the bump is
//! `phibar(x) = sgn(d) d^2 (1 - u^2)^3`; it vanishes outside the window.

use serde::{Deserialize, Serialize};

use crate::models::{CoefficientSpec, RegularityClass, TransformedBounds};
use crate::{Error, Result};

/// Bump `phibar` and its first three derivatives at offset `d` from the breakpoint.
///
/// At `d = 0` the second and third derivatives return their right limits.
pub fn bump(d: f64, c0: f64) -> [f64; 4] {
    let u = d / c0;
    if u.abs() >= 1.0 {
        return [0.0; 4];
    }
    let s = if d >= 0.0 { 1.0 } else { -1.0 };
    let u2 = u * u;
    let w = 1.0 - u2;
    let v0 = s * d * d * w * w * w;
    let v1 = 2.0 * d.abs() * w * w * (1.0 - 4.0 * u2);
    let v2 = 2.0 * s * w * (1.0 - 17.0 * u2 + 28.0 * u2 * u2);
    let v3 = 2.0 * s / c0 * u * (-36.0 + 180.0 * u2 - 168.0 * u2 * u2);
    [v0, v1, v2, v3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTransform {
    pub breakpoints: Vec<f64>,
    pub alphas: Vec<f64>,
    pub c0: f64,
}

const INVERSE_TOL: f64 = 1e-12;

impl PiecewiseTransform {
    pub fn identity() -> Self {
        Self { breakpoints: Vec::new(), alphas: Vec::new(), c0: 1.0 }
    }

    /// Transform with externally chosen constants; bump windows must not overlap
    /// and `6 c0 |alpha_k| < 1` must hold so that `G` stays increasing.
    pub fn with_constants(breakpoints: Vec<f64>, alphas: Vec<f64>, c0: f64) -> Result<Self> {
        if breakpoints.len() != alphas.len() {
            return Err(Error::Config("one alpha per breakpoint is required".into()));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::Config(format!("c0 must be positive, got {c0}")));
        }
        if breakpoints.windows(2).any(|w| w[1] - w[0] < 2.0 * c0) {
            return Err(Error::Config("bump windows overlap: c0 exceeds half the breakpoint spacing".into()));
        }
        if let Some(a) = alphas.iter().find(|a| 6.0 * c0 * a.abs() >= 1.0) {
            return Err(Error::Config(format!("6 c0 |alpha| = {} must be below 1", 6.0 * c0 * a.abs())));
        }
        Ok(Self { breakpoints, alphas, c0 })
    }

    pub fn is_identity(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Index of the breakpoint whose open window contains `x`.
    pub fn window(&self, x: f64) -> Option<usize> {
        let i = self.breakpoints.partition_point(|&xi| xi <= x);
        let near = |k: usize| (x - self.breakpoints[k]).abs() < self.c0;
        if i < self.breakpoints.len() && near(i) {
            Some(i)
        } else if i > 0 && near(i - 1) {
            Some(i - 1)
        } else {
            None
        }
    }

    fn eval(&self, x: f64) -> [f64; 4] {
        match self.window(x) {
            Some(k) => {
                let a = self.alphas[k];
                let [v0, v1, v2, v3] = bump(x - self.breakpoints[k], self.c0);
                [x + a * v0, 1.0 + a * v1, a * v2, a * v3]
            }
            None => [x, 1.0, 0.0, 0.0],
        }
    }

    pub fn g(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }

    pub fn g1(&self, x: f64) -> f64 {
        self.eval(x)[1]
    }

    /// `G''`, returning the right limit `2 alpha_k` exactly at a breakpoint.
    pub fn g2(&self, x: f64) -> f64 {
        self.eval(x)[2]
    }

    pub fn g3(&self, x: f64) -> f64 {
        self.eval(x)[3]
    }

    fn max_alpha(&self) -> f64 {
        self.alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// Bound on `G'`.
    pub fn lipschitz(&self) -> f64 {
        1.0 + 6.0 * self.c0 * self.max_alpha()
    }

    /// Bound on the derivative of `G^{-1}`.
    pub fn inverse_lipschitz(&self) -> f64 {
        1.0 / (1.0 - 6.0 * self.c0 * self.max_alpha())
    }

    /// `G^{-1}(y)` by safeguarded Newton; exact identity outside the windows.
    ///
    /// `G` maps each window onto itself, so `y` outside every window is its own preimage.
    pub fn inverse(&self, y: f64) -> f64 {
        let Some(k) = self.window(y) else { return y };
        let xi = self.breakpoints[k];
        if y == xi {
            return xi;
        }
        let tol = INVERSE_TOL * (1.0 + y.abs());
        let mut lo = (xi - self.c0).max(y - self.c0);
        let mut hi = (xi + self.c0).min(y + self.c0);
        let mut x = y;
        for _ in 0..200 {
            let [g, g1, _, _] = self.eval(x);
            let f = g - y;
            if f.abs() <= tol {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - f / g1;
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
                return x;
            }
        }
        x
    }
}

pub fn invert_transform(t: &PiecewiseTransform, y: f64) -> f64 {
    t.inverse(y)
}

/// One-sided drift limits at `xi` as `(b(xi-), b(xi+))`.
///
/// Each limit is the Richardson extrapolation of `b(xi +- delta)` and
/// `b(xi +- delta/2)` with `delta = 1e-8 (1 + |xi|)`; the two samples must agree.
pub fn one_sided_limits(spec: &CoefficientSpec, xi: f64) -> Result<(f64, f64)> {
    let delta = 1e-8 * (1.0 + xi.abs());
    let limit = |dir: f64| -> Result<f64> {
        let v1 = spec.b(0.0, xi + dir * delta);
        let v2 = spec.b(0.0, xi + dir * 0.5 * delta);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::NumericalLimit { point: xi, detail: format!("samples {v1}, {v2}") });
        }
        if (v1 - v2).abs() > 1e-6 * (1.0 + v2.abs()) {
            return Err(Error::NumericalLimit {
                point: xi,
                detail: format!("samples at delta and delta/2 disagree: {v1} vs {v2}"),
            });
        }
        Ok(2.0 * v2 - v1)
    };
    Ok((limit(-1.0)?, limit(1.0)?))
}

/// Builds `G` for a model with drift jumps.
///
/// `alpha_k = (b(xi_k-) - b(xi_k+)) / (2 sigma(xi_k)^2)` and `c0` is half of
/// `min(min_k 1/(6|alpha_k|), min_k (xi_{k+1} - xi_k)/2)`.
pub fn build_transform(spec: &CoefficientSpec) -> Result<PiecewiseTransform> {
    if spec.regularity_class != RegularityClass::GrowthDisc {
        return Err(Error::Config(format!(
            "the transform needs class growth_disc, model {} is {}",
            spec.name,
            spec.regularity_class.as_str()
        )));
    }
    if !spec.time_homogeneous {
        return Err(Error::Config("the transform needs time-homogeneous coefficients".into()));
    }
    spec.check_breakpoints()?;
    if spec.breakpoints.is_empty() {
        return Ok(PiecewiseTransform::identity());
    }
    let mut alphas = Vec::with_capacity(spec.breakpoints.len());
    for &xi in &spec.breakpoints {
        let s = spec.sigma(0.0, xi);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::Assumption(format!("diffusion vanishes at breakpoint {xi} (sigma = {s})")));
        }
        let (left, right) = one_sided_limits(spec, xi)?;
        alphas.push(0.5 * (left - right) / (s * s));
    }
    let mut bound = f64::INFINITY;
    for a in &alphas {
        if *a != 0.0 {
            bound = bound.min(1.0 / (6.0 * a.abs()));
        }
    }
    for w in spec.breakpoints.windows(2) {
        bound = bound.min(0.5 * (w[1] - w[0]));
    }
    let c0 = if bound.is_finite() { 0.5 * bound } else { 1.0 };
    Ok(PiecewiseTransform { breakpoints: spec.breakpoints.clone(), alphas, c0 })
}

/// Coefficients of `Z = G(X)`:
/// `b~ = (b G' + sigma^2 G'' / 2) o G^{-1}` and `sigma~ = (sigma G') o G^{-1}`.
#[derive(Debug, Clone)]
pub struct TransformedCoefficients {
    pub spec: CoefficientSpec,
    pub transform: PiecewiseTransform,
    pub bounds: TransformedBounds,
    /// Drift right limits at the breakpoints, used exactly at `xi_k`.
    right_limits: Vec<f64>,
}

impl TransformedCoefficients {
    /// `b~(G(x))`. At a breakpoint the drift's right limit pairs with the
    /// right limit of `G''`, which keeps `b~` continuous there.
    pub fn drift_at_preimage(&self, x: f64) -> f64 {
        let t = &self.transform;
        let [_, g1, g2, _] = t.eval(x);
        let b = match t.breakpoints.binary_search_by(|xi| xi.total_cmp(&x)) {
            Ok(k) => self.right_limits[k],
            Err(_) => self.spec.b(0.0, x),
        };
        let s = self.spec.sigma(0.0, x);
        b * g1 + 0.5 * s * s * g2
    }

    /// `sigma~(G(x))`.
    pub fn diffusion_at_preimage(&self, x: f64) -> f64 {
        self.spec.sigma(0.0, x) * self.transform.g1(x)
    }

    pub fn drift(&self, z: f64) -> f64 {
        self.drift_at_preimage(self.transform.inverse(z))
    }

    pub fn diffusion(&self, z: f64) -> f64 {
        self.diffusion_at_preimage(self.transform.inverse(z))
    }
}

/// Largest sampled slopes of the transformed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeProbe {
    pub drift_one_sided: f64,
    pub drift_witness: (f64, f64),
    pub diffusion: f64,
    pub diffusion_witness: (f64, f64),
}

/// Samples difference quotients of `b~` and `sigma~` on consecutive points of
/// a dense grid around each window and a coarse grid on `[-10, 10]`.
pub fn probe_slopes(tc: &TransformedCoefficients) -> SlopeProbe {
    let t = &tc.transform;
    let mut grids: Vec<Vec<f64>> = vec![(0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect()];
    for &xi in &t.breakpoints {
        let (lo, hi) = (xi - 1.25 * t.c0, xi + 1.25 * t.c0);
        let n = 20_000;
        grids.push((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect());
    }
    let mut out = SlopeProbe {
        drift_one_sided: f64::NEG_INFINITY,
        drift_witness: (0.0, 0.0),
        diffusion: 0.0,
        diffusion_witness: (0.0, 0.0),
    };
    for zs in grids {
        let vals: Vec<(f64, f64)> = zs.iter().map(|&z| (tc.drift(z), tc.diffusion(z))).collect();
        for i in 1..zs.len() {
            let dz = zs[i] - zs[i - 1];
            let sb = (vals[i].0 - vals[i - 1].0) / dz;
            let ss = ((vals[i].1 - vals[i - 1].1) / dz).abs();
            if sb > out.drift_one_sided {
                out.drift_one_sided = sb;
                out.drift_witness = (zs[i - 1], zs[i]);
            }
            if ss > out.diffusion {
                out.diffusion = ss;
                out.diffusion_witness = (zs[i - 1], zs[i]);
            }
        }
    }
    out
}

/// Transformed coefficients with declared bounds cross-checked by [`probe_slopes`].
pub fn transformed_coefficients(spec: &CoefficientSpec, t: &PiecewiseTransform) -> Result<TransformedCoefficients> {
    let bounds = spec.effective_transformed_bounds().ok_or_else(|| {
        Error::Config(format!("model {} needs declared bounds for its transformed coefficients", spec.name))
    })?;
    let mut right_limits = Vec::with_capacity(t.breakpoints.len());
    for &xi in &t.breakpoints {
        right_limits.push(one_sided_limits(spec, xi)?.1);
    }
    let tc = TransformedCoefficients { spec: spec.clone(), transform: t.clone(), bounds, right_limits };
    let probe = probe_slopes(&tc);
    let slack = |declared: f64| 1.01 * declared + 1e-9;
    if probe.drift_one_sided > slack(bounds.one_sided_lipschitz) {
        let (a, b) = probe.drift_witness;
        return Err(Error::Config(format!(
            "transformed drift one-sided slope {} between z = {a} and z = {b} exceeds declared bound {}",
            probe.drift_one_sided, bounds.one_sided_lipschitz
        )));
    }
    if probe.diffusion > slack(bounds.diffusion_lipschitz) {
        let (a, b) = probe.diffusion_witness;
        return Err(Error::Config(format!(
            "transformed diffusion slope {} between z = {a} and z = {b} exceeds declared bound {}",
            probe.diffusion, bounds.diffusion_lipschitz
        )));
    }
    Ok(tc)
}
