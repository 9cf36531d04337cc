//! One-step maps of the Euler-type schemes and path drivers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::models::{CirParams, CoefficientSpec};
use crate::randomness::{sample_increments, IncrementBatch, TimeGrid, TruncationLevel};
use crate::transform::{build_transform, transformed_coefficients, TransformedCoefficients};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ExplicitEm,
    SemiImplicitEm,
    /// Semi-implicit step in transformed coordinates; `monotone` clips the increments.
    TransformedSemiImplicit {
        monotone: bool,
    },
    /// Euler step followed by an absolute value, for the CIR family.
    SymmetrisedEm,
}

impl SchemeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::ExplicitEm => "em",
            Self::SemiImplicitEm => "iem",
            Self::TransformedSemiImplicit { monotone: false } => "tiem",
            Self::TransformedSemiImplicit { monotone: true } => "tiem-mono",
            Self::SymmetrisedEm => "sym-em",
        }
    }

    pub fn truncates(&self) -> bool {
        matches!(self, Self::TransformedSemiImplicit { monotone: true })
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "em" => Self::ExplicitEm,
            "iem" => Self::SemiImplicitEm,
            "tiem" => Self::TransformedSemiImplicit { monotone: false },
            "tiem-mono" => Self::TransformedSemiImplicit { monotone: true },
            "sym-em" => Self::SymmetrisedEm,
            other => return Err(Error::Config(format!("unknown scheme `{other}` (em, iem, tiem, tiem-mono, sym-em)"))),
        })
    }
}

/// `x + b(t, x) h + sigma(t, x) dW`.
pub fn em_step(x: f64, t: f64, spec: &CoefficientSpec, h: f64, dw: f64) -> f64 {
    x + spec.b(t, x) * h + spec.sigma(t, x) * dw
}

fn check_implicit_guard(h: f64, lipschitz_bound: f64, what: &str) -> Result<()> {
    if lipschitz_bound > 0.0 && h * lipschitz_bound >= 1.0 {
        return Err(Error::StepSize {
            h,
            bound: format!("invertibility of id - h b ({what} one-sided Lipschitz bound {lipschitz_bound})"),
            relation: "<",
            limit: 1.0 / lipschitz_bound,
        });
    }
    Ok(())
}

/// Solves `z - h drift(z) = y` for `z`.
///
/// `z - h drift(z)` is increasing when `h` is below `1 / lipschitz_bound`, so a
/// bracket always exists; it is found by geometric expansion and refined by
/// Illinois regula falsi with a bisection fallback. When the drift jumps
/// across the root the bracket collapses onto the jump and its right end
/// is returned.
pub fn implicit_solve<F: Fn(f64) -> f64>(y: f64, drift: F, h: f64, lipschitz_bound: f64) -> Result<f64> {
    check_implicit_guard(h, lipschitz_bound, "drift")?;
    let f = |z: f64| z - h * drift(z) - y;
    let tol = 1e-12 * (1.0 + y.abs());
    let fy = f(y);
    if fy.is_nan() {
        return Err(Error::Numerical(format!("drift is NaN at {y}")));
    }
    if fy.abs() <= tol {
        return Ok(y);
    }

    let mut width = (h * drift(y)).abs() + 1.0;
    let (mut a, mut b) = if fy > 0.0 { (y - width, y) } else { (y, y + width) };
    let (mut fa, mut fb) = if fy > 0.0 { (f(a), fy) } else { (fy, f(b)) };
    for _ in 0..200 {
        if fa <= 0.0 && fb >= 0.0 {
            break;
        }
        width *= 2.0;
        if fa > 0.0 {
            a = y - width;
            fa = f(a);
        }
        if fb < 0.0 {
            b = y + width;
            fb = f(b);
        }
        if fa.is_nan() || fb.is_nan() {
            return Err(Error::Numerical(format!("implicit map is NaN while bracketing y = {y}")));
        }
    }
    if !(fa <= 0.0 && fb >= 0.0) {
        return Err(Error::Numerical(format!("no bracket for the implicit step at y = {y}")));
    }
    if fa.abs() <= tol {
        return Ok(a);
    }
    if fb.abs() <= tol {
        return Ok(b);
    }

    // Weighted function values for the Illinois modification.
    let (mut wa, mut wb) = (fa, fb);
    let mut side = 0i8;
    let mut last_width = b - a;
    for iter in 0..400 {
        let mut c = (a * wb - b * wa) / (wb - wa);
        if iter % 3 == 2 && b - a > 0.5 * last_width || !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        if iter % 3 == 2 {
            last_width = b - a;
        }
        if c <= a || c >= b {
            return Ok(b);
        }
        let fc = f(c);
        if fc.is_nan() {
            return Err(Error::Numerical(format!("implicit map is NaN at {c}")));
        }
        if fc.abs() <= tol {
            return Ok(c);
        }
        if fc < 0.0 {
            a = c;
            wa = fc;
            if side == -1 {
                wb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            wb = fc;
            if side == 1 {
                wa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(b)
}

/// Solves `X' = x + b(t, X') h + sigma(t, x) dW`.
pub fn semi_implicit_em_step(x: f64, t: f64, spec: &CoefficientSpec, h: f64, dw: f64) -> Result<f64> {
    let bound = spec
        .one_sided_lipschitz_bound
        .ok_or_else(|| Error::Config(format!("model {} has no one-sided Lipschitz bound", spec.name)))?;
    implicit_solve(x + spec.sigma(t, x) * dw, |z| spec.b(t, z), h, bound)
}

/// `G^{-1}((id - h b~)^{-1}(G(x) + sigma~(G(x)) dW))`.
pub fn transformed_step(x: f64, tc: &TransformedCoefficients, h: f64, dw: f64) -> Result<f64> {
    let t = &tc.transform;
    let y = t.g(x) + tc.diffusion_at_preimage(x) * dw;
    let z = implicit_solve(y, |z| tc.drift(z), h, tc.bounds.one_sided_lipschitz)?;
    Ok(t.inverse(z))
}

/// `|x + kappa (eta - x) h + gamma sqrt(x) dW|`.
pub fn symmetrised_em_step(x: f64, cir: &CirParams, h: f64, dw: f64) -> f64 {
    (x + cir.kappa * (cir.eta - x) * h + cir.gamma * x.max(0.0).sqrt() * dw).abs()
}

/// A scheme bound to a model and a grid, with its step-size guards checked.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub kind: SchemeKind,
    pub spec: CoefficientSpec,
    pub grid: TimeGrid,
    pub transformed: Option<TransformedCoefficients>,
    pub truncation: Option<TruncationLevel>,
    /// Largest step allowed by the invertibility guard.
    pub max_step: f64,
}

impl StepperConfig {
    pub fn new(kind: SchemeKind, spec: CoefficientSpec, grid: TimeGrid) -> Result<Self> {
        let h = grid.step();
        let mut transformed = None;
        let mut truncation = None;
        let mut max_step = f64::INFINITY;
        match kind {
            SchemeKind::ExplicitEm => {}
            SchemeKind::SemiImplicitEm => {
                let l = spec.one_sided_lipschitz_bound.ok_or_else(|| {
                    Error::Config(format!("scheme iem needs a one-sided Lipschitz bound for model {}", spec.name))
                })?;
                check_implicit_guard(h, l, "drift")?;
                if l > 0.0 {
                    max_step = 1.0 / l;
                }
            }
            SchemeKind::TransformedSemiImplicit { monotone } => {
                let t = build_transform(&spec)?;
                let tc = transformed_coefficients(&spec, &t)?;
                let l = tc.bounds.one_sided_lipschitz;
                check_implicit_guard(h, l, "transformed drift")?;
                if l > 0.0 {
                    max_step = 1.0 / l;
                }
                if monotone {
                    let level = TruncationLevel::for_step(h)?;
                    let ls = tc.bounds.diffusion_lipschitz;
                    if 1.0 - ls * level.a_h <= 0.0 {
                        return Err(Error::StepSize {
                            h,
                            bound: format!(
                                "monotonicity of the truncated step: 1 - L_sigma~ a_h > 0 with L_sigma~ = {ls}, a_h = {}",
                                level.a_h
                            ),
                            relation: "<",
                            limit: 1.0 / ls,
                        });
                    }
                    truncation = Some(level);
                }
                transformed = Some(tc);
            }
            SchemeKind::SymmetrisedEm => {
                if spec.cir.is_none() {
                    return Err(Error::Config(format!(
                        "the symmetrised scheme is restricted to the CIR family, got {}",
                        spec.name
                    )));
                }
            }
        }
        Ok(Self { kind, spec, grid, transformed, truncation, max_step })
    }

    /// One step from time index `k` at state `x`.
    pub fn step(&self, k: usize, x: f64, dw: f64) -> Result<f64> {
        let h = self.grid.step();
        let t = self.grid.time(k);
        match self.kind {
            SchemeKind::ExplicitEm => Ok(em_step(x, t, &self.spec, h, dw)),
            SchemeKind::SemiImplicitEm => semi_implicit_em_step(x, t, &self.spec, h, dw),
            SchemeKind::TransformedSemiImplicit { .. } => {
                transformed_step(x, self.transformed.as_ref().expect("built with the scheme"), h, dw)
            }
            SchemeKind::SymmetrisedEm => Ok(symmetrised_em_step(x, self.spec.cir.as_ref().expect("checked"), h, dw)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub scheme: SchemeKind,
    pub path_index: u64,
}

/// Iterates the scheme over `increments`, clipping them first for the monotone variant.
pub fn simulate_path(config: &StepperConfig, increments: &IncrementBatch) -> Result<DiscretePath> {
    if increments.grid != config.grid {
        return Err(Error::Config("increments and scheme use different grids".into()));
    }
    let mut values = Vec::with_capacity(increments.values.len() + 1);
    let mut x = config.spec.initial_value;
    values.push(x);
    for (k, &dw) in increments.values.iter().enumerate() {
        let dw = match config.truncation {
            Some(level) if !increments.truncated => level.clip(dw),
            _ => dw,
        };
        x = config.step(k, x, dw).map_err(|e| Error::AtStep { step: k, source: Box::new(e) })?;
        values.push(x);
    }
    Ok(DiscretePath { grid: config.grid, values, scheme: config.kind, path_index: increments.path_index })
}

/// Sums consecutive blocks of `factor` fine increments.
pub fn coarsen_increments(fine: &IncrementBatch, factor: usize) -> Result<IncrementBatch> {
    let grid = fine.grid.coarsen(factor)?;
    if fine.truncated {
        return Err(Error::Config("cannot coarsen truncated increments".into()));
    }
    Ok(IncrementBatch {
        grid,
        values: fine.values.chunks_exact(factor).map(|c| c.iter().sum()).collect(),
        ..fine.clone()
    })
}

/// One scheme on several grids that share the Brownian path of the finest one.
#[derive(Debug, Clone)]
pub struct CoupledSimulator {
    pub fine_grid: TimeGrid,
    pub configs: Vec<(usize, StepperConfig)>,
}

impl CoupledSimulator {
    pub fn new(kind: SchemeKind, spec: &CoefficientSpec, fine_grid: TimeGrid, factors: &[usize]) -> Result<Self> {
        let configs = factors
            .iter()
            .map(|&f| Ok((f, StepperConfig::new(kind, spec.clone(), fine_grid.coarsen(f)?)?)))
            .collect::<Result<_>>()?;
        Ok(Self { fine_grid, configs })
    }

    pub fn simulate(&self, seed: u64, path_index: u64) -> Result<BTreeMap<usize, DiscretePath>> {
        let fine = sample_increments(&self.fine_grid, seed, path_index);
        self.configs
            .iter()
            .map(|(f, config)| {
                let inc = if *f == 1 { fine.clone() } else { coarsen_increments(&fine, *f)? };
                Ok((*f, simulate_path(config, &inc)?))
            })
            .collect()
    }
}

/// Paths of one Brownian sample on the fine grid coarsened by each factor.
pub fn simulate_coupled(
    kind: SchemeKind,
    spec: &CoefficientSpec,
    fine_grid: TimeGrid,
    factors: &[usize],
    seed: u64,
    path_index: u64,
) -> Result<BTreeMap<usize, DiscretePath>> {
    CoupledSimulator::new(kind, spec, fine_grid, factors)?.simulate(seed, path_index)
}
