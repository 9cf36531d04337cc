//! Small hand-built trees with known transport and stopping values.

use super::tree::{mass, FiniteAdaptedProcess};

/// Two-stage pair on which the Knothe-Rosenblatt plan is not optimal.
///
/// Both first marginals are uniform on `{-1/2, 1/2}`. Under `mu` the second
/// value is `±2` after `-1/2` and `0` after `1/2`; under `nu` it is `{-2, 0}`
/// after `-1/2` and `±2` after `1/2`, all branches uniform. For `|x - y|^2`
/// the stagewise monotone plan costs 3 and the plan that is antitone at the
/// first stage costs 2.
pub fn kr_suboptimal_pair() -> (FiniteAdaptedProcess, FiniteAdaptedProcess) {
    let mu = FiniteAdaptedProcess::from_paths(
        2,
        &[(vec![-0.5, -2.0], mass(1, 4)), (vec![-0.5, 2.0], mass(1, 4)), (vec![0.5, 0.0], mass(1, 2))],
    )
    .expect("valid tree");
    let nu = FiniteAdaptedProcess::from_paths(
        2,
        &[
            (vec![-0.5, -2.0], mass(1, 4)),
            (vec![-0.5, 0.0], mass(1, 4)),
            (vec![0.5, -2.0], mass(1, 4)),
            (vec![0.5, 2.0], mass(1, 4)),
        ],
    )
    .expect("valid tree");
    (mu, nu)
}

/// The martingale `0, ±1` and its perturbation `(eps, 1)`, `(-eps, -1)`,
/// each path with probability 1/2.
///
/// The pair is close in the weak topology but `AW_p^p = eps^p + 2^(p-1)`.
pub fn martingale_pair(eps: f64) -> (FiniteAdaptedProcess, FiniteAdaptedProcess) {
    let x = FiniteAdaptedProcess::from_paths(2, &[(vec![0.0, -1.0], mass(1, 2)), (vec![0.0, 1.0], mass(1, 2))])
        .expect("valid tree");
    let y = FiniteAdaptedProcess::from_paths(2, &[(vec![-eps, -1.0], mass(1, 2)), (vec![eps, 1.0], mass(1, 2))])
        .expect("valid tree");
    (x, y)
}
