use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use super::tree::rational;

/// Stage cost `c_k(x, y)`; stages are numbered from 1.
pub type StageCostFn = Arc<dyn Fn(usize, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    /// `|x - y|^p` at every stage.
    Power {
        p: f64,
    },
    Custom(StageCostFn),
}

#[derive(Clone)]
pub struct CostFunctional {
    pub kind: CostKind,
    /// Exponent of the polynomial growth bound `|c(x, y)| <= K (1 + |x|^p + |y|^p)`.
    pub growth_power: f64,
    pub growth_constant: f64,
    /// Declared quasi-monotonicity (rectangle inequality).
    pub quasi_monotone: bool,
    /// Uniform weight per stage, e.g. the step `h` of a time grid.
    pub stage_weight: f64,
}

impl fmt::Debug for CostFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            CostKind::Power { p } => format!("Power {{ p: {p} }}"),
            CostKind::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("CostFunctional")
            .field("kind", &kind)
            .field("growth_power", &self.growth_power)
            .field("growth_constant", &self.growth_constant)
            .field("quasi_monotone", &self.quasi_monotone)
            .field("stage_weight", &self.stage_weight)
            .finish()
    }
}

impl CostFunctional {
    pub fn power(p: f64) -> Self {
        Self {
            kind: CostKind::Power { p },
            growth_power: p,
            growth_constant: 2f64.powf((p - 1.0).max(0.0)),
            quasi_monotone: p >= 1.0,
            stage_weight: 1.0,
        }
    }

    pub fn custom<F>(f: F, growth_power: f64, growth_constant: f64, quasi_monotone: bool) -> Self
    where
        F: Fn(usize, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { kind: CostKind::Custom(Arc::new(f)), growth_power, growth_constant, quasi_monotone, stage_weight: 1.0 }
    }

    pub fn with_stage_weight(mut self, weight: f64) -> Self {
        self.stage_weight = weight;
        self
    }

    pub fn power_exponent(&self) -> Option<f64> {
        match self.kind {
            CostKind::Power { p } => Some(p),
            CostKind::Custom(_) => None,
        }
    }

    pub fn eval(&self, stage: usize, x: f64, y: f64) -> f64 {
        let c = match &self.kind {
            CostKind::Power { p } => (x - y).abs().powf(*p),
            CostKind::Custom(f) => f(stage, x, y),
        };
        self.stage_weight * c
    }

    /// Exact value: integer powers are evaluated in rationals, everything else
    /// is the rational value of the float result.
    pub fn exact(&self, stage: usize, x: f64, y: f64) -> BigRational {
        let c = match &self.kind {
            CostKind::Power { p } if p.fract() == 0.0 && *p >= 0.0 && *p <= 64.0 => {
                let d = (rational(x) - rational(y)).abs();
                num_traits::pow(d, *p as usize)
            }
            _ => {
                let v = match &self.kind {
                    CostKind::Power { p } => (x - y).abs().powf(*p),
                    CostKind::Custom(f) => f(stage, x, y),
                };
                rational(v)
            }
        };
        if self.stage_weight == 1.0 {
            c
        } else {
            c * rational(self.stage_weight)
        }
    }

    pub fn is_unit_weight(&self) -> bool {
        rational(self.stage_weight).is_one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleWitness {
    pub stage: usize,
    pub x: f64,
    pub x_prime: f64,
    pub y: f64,
    pub y_prime: f64,
    /// `c(x, y') + c(x', y) - c(x, y) - c(x', y')`, negative for a violation.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiMonotoneReport {
    pub holds: bool,
    pub rectangles_checked: usize,
    pub witness: Option<RectangleWitness>,
}

/// Checks the rectangle inequality `c(x, y') + c(x', y) >= c(x, y) + c(x', y')`
/// for all probed `x < x'`, `y < y'`.
///
/// This is the orientation under which pairing small with small is cheaper,
/// so that monotone couplings are optimal for a minimisation problem; every
/// `|x - y|^p` with `p >= 1` satisfies it.
pub fn check_quasi_monotone(cost: &CostFunctional, stage: usize, xs: &[f64], ys: &[f64]) -> QuasiMonotoneReport {
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let c: Vec<Vec<f64>> = xs.iter().map(|&x| ys.iter().map(|&y| cost.eval(stage, x, y)).collect()).collect();
    let mut checked = 0;
    for i in 0..xs.len() {
        for i2 in i + 1..xs.len() {
            for j in 0..ys.len() {
                for j2 in j + 1..ys.len() {
                    checked += 1;
                    let value = c[i][j2] + c[i2][j] - c[i][j] - c[i2][j2];
                    let scale = c[i][j].abs() + c[i2][j2].abs() + c[i][j2].abs() + c[i2][j].abs();
                    if value < -1e-12 * (1.0 + scale) {
                        return QuasiMonotoneReport {
                            holds: false,
                            rectangles_checked: checked,
                            witness: Some(RectangleWitness {
                                stage,
                                x: xs[i],
                                x_prime: xs[i2],
                                y: ys[j],
                                y_prime: ys[j2],
                                value,
                            }),
                        };
                    }
                }
            }
        }
    }
    QuasiMonotoneReport { holds: true, rectangles_checked: checked, witness: None }
}
