//! Two-channel blind identification from the cross-relation `x_i ⊛ h_j = x_j ⊛ h_i`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Rir;
use crate::linalg::lstsq_real;

/// `Π = [χ_i(L), −χ_j(L)]` for one microphone pair.
///
/// Row `r` of `χ(L)` holds `x(L + r), …, x(2L + r)` with the signal indexed
/// from 1, so `Π · [h_j; h_i] = 0` when each filter is stored reversed as
/// `[h(L), …, h(0)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossRelationSystem {
    pub pi: DMatrix<f64>,
    /// Taps per channel, `L + 1`.
    pub taps: usize,
    pub pair: (usize, usize),
}

impl CrossRelationSystem {
    pub fn order(&self) -> usize {
        self.taps - 1
    }

    pub fn rows(&self) -> usize {
        self.pi.nrows()
    }
}

/// Hankel matrix `χ(L)` of one signal.
pub fn chi(x: &[f64], l: usize) -> Result<DMatrix<f64>> {
    if l == 0 {
        return Err(Error::Argument("filter order L must be at least 1".into()));
    }
    if x.len() < 2 * l + 1 {
        return Err(Error::Argument(format!(
            "signal of length {} is too short for {} taps (needs at least {})",
            x.len(),
            l + 1,
            2 * l + 1
        )));
    }
    let rows = x.len() - 2 * l + 1;
    // 1-indexed x(L + r + k) is x[L - 1 + r + k] here
    Ok(DMatrix::from_fn(rows, l + 1, |r, k| x[l - 1 + r + k]))
}

/// Cross-relation system for the pair `(i, j)`.
pub fn build_cross_relation(x_i: &[f64], x_j: &[f64], l: usize) -> Result<CrossRelationSystem> {
    build_cross_relation_pair(x_i, x_j, l, (0, 1))
}

pub fn build_cross_relation_pair(x_i: &[f64], x_j: &[f64], l: usize, pair: (usize, usize)) -> Result<CrossRelationSystem> {
    if x_i.len() != x_j.len() {
        return Err(Error::Argument("signals must have the same length".into()));
    }
    if l == 0 {
        return Err(Error::Argument("filter order L must be at least 1".into()));
    }
    let ci = chi(x_i, l)?;
    let cj = chi(x_j, l)?;
    let mut pi = DMatrix::zeros(ci.nrows(), 2 * (l + 1));
    pi.view_mut((0, 0), (ci.nrows(), l + 1)).copy_from(&ci);
    pi.view_mut((0, l + 1), (ci.nrows(), l + 1)).copy_from(&(-cj));
    Ok(CrossRelationSystem { pi, taps: l + 1, pair })
}

/// Stacks two filters in natural tap order into `𝓗 = [h_j; h_i]`, each reversed.
pub fn stack_filters(h_j: &[f64], h_i: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        h_j.len() + h_i.len(),
        h_j.iter().rev().chain(h_i.iter().rev()).copied(),
    )
}

/// Inverse of [`stack_filters`]: returns `(h_j, h_i)` in natural tap order.
pub fn split_filters(h: &DVector<f64>, taps: usize) -> (Vec<f64>, Vec<f64>) {
    let hj = h.rows(0, taps).iter().rev().copied().collect();
    let hi = h.rows(taps, taps).iter().rev().copied().collect();
    (hj, hi)
}

/// Tap constraints of one filter, in natural tap indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSupport {
    /// Direct-path taps, fixed to `direct_values`.
    pub direct: Vec<usize>,
    pub direct_values: Vec<f64>,
    /// Reflection taps, constrained positive.
    pub reflections: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum EpsilonRule {
    Absolute(f64),
    /// `factor` times the least-squares residual with the direct taps fixed.
    RelativeToLeastSquares(f64),
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::Absolute(0.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredRirEstimate {
    pub h_i: Rir,
    pub h_j: Rir,
    pub eps: f64,
    /// Least-squares residual with only the direct taps fixed.
    pub min_residual: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RirSolverOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub sample_rate: f64,
}

impl Default for RirSolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 20000,
            tol: 1e-9,
            sample_rate: 8000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TapKind {
    Free,
    Fixed,
    Positive,
}

/// Structured sparse filter estimate
/// `min ‖𝓗‖₁ s.t. ‖Π𝓗‖₂ ≤ eps, 𝓗(Ω_d) = ϑ, 𝓗(Ω_r) ≥ 0`.
///
/// `support_i` and `support_j` constrain `h_i` and `h_j`. The norm constraint
/// is evaluated through a square factor `R` with `RᵀR = ΠᵀΠ`, and the program
/// is solved with a primal-dual hybrid gradient method whose primal proximal
/// step enforces the tap constraints.
pub fn estimate_rir_structured(
    system: &CrossRelationSystem,
    support_i: &FilterSupport,
    support_j: &FilterSupport,
    eps_rule: EpsilonRule,
    opts: RirSolverOptions,
) -> Result<StructuredRirEstimate> {
    let taps = system.taps;
    let n = 2 * taps;
    let mut kind = vec![TapKind::Free; n];
    let mut fixed = vec![0.0; n];
    // stacked index of natural tap t: h_j occupies the first block, h_i the second
    let place = |block: usize, t: usize| block * taps + (taps - 1 - t);
    for (block, sup) in [(0usize, support_j), (1usize, support_i)] {
        if sup.direct.len() != sup.direct_values.len() {
            return Err(Error::Argument("direct taps and values differ in length".into()));
        }
        if sup.direct.is_empty() {
            return Err(Error::Argument("each filter needs at least one direct-path tap".into()));
        }
        for (&t, &v) in sup.direct.iter().zip(&sup.direct_values) {
            if t >= taps {
                return Err(Error::Argument(format!("direct tap {t} outside 0..{taps}")));
            }
            if !(v > 0.0) {
                return Err(Error::Argument(format!("direct value must be positive, got {v}")));
            }
            kind[place(block, t)] = TapKind::Fixed;
            fixed[place(block, t)] = v;
        }
        for &t in &sup.reflections {
            if t >= taps {
                return Err(Error::Argument(format!("reflection tap {t} outside 0..{taps}")));
            }
            let k = place(block, t);
            if kind[k] == TapKind::Fixed {
                return Err(Error::Argument(format!("tap {t} is both direct and reflection")));
            }
            kind[k] = TapKind::Positive;
        }
    }

    let gram = system.pi.transpose() * &system.pi;
    let eig = SymmetricEigen::new(gram);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let k_op = DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let k_norm = sqrt_vals.max();

    // least-squares residual with only the direct taps fixed
    let free: Vec<usize> = (0..n).filter(|&i| kind[i] != TapKind::Fixed).collect();
    let fixed_vec = DVector::from_vec(fixed.clone());
    let base = &k_op * &fixed_vec;
    let k_free = k_op.select_columns(&free);
    let z = lstsq_real(&k_free, &(-&base));
    let min_residual = (&k_free * &z + &base).norm();

    let eps = match eps_rule {
        EpsilonRule::Absolute(e) => e,
        EpsilonRule::RelativeToLeastSquares(f) => f * min_residual,
    };
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("eps must be nonnegative, got {eps}")));
    }
    if min_residual > eps * (1.0 + 1e-9) {
        return Err(Error::Infeasible(format!(
            "smallest achievable residual {min_residual:.6e} exceeds eps {eps:.6e}"
        )));
    }

    let prox = |v: &DVector<f64>, t: f64| -> DVector<f64> {
        DVector::from_iterator(
            n,
            (0..n).map(|i| match kind[i] {
                TapKind::Fixed => fixed[i],
                TapKind::Positive => (v[i] - t).max(0.0),
                TapKind::Free => v[i].signum() * (v[i].abs() - t).max(0.0),
            }),
        )
    };

    // feasible start: the least-squares point
    let mut x = fixed_vec.clone();
    for (k, &i) in free.iter().enumerate() {
        x[i] = z[k];
    }
    if k_norm == 0.0 {
        x = prox(&x, f64::INFINITY);
    }
    let mut kx = &k_op * &x;
    let mut kxbar = kx.clone();
    let mut y = DVector::zeros(n);
    let mut tau = 0.95 / k_norm.max(f64::MIN_POSITIVE);
    let mut sigma = 0.95 / k_norm.max(f64::MIN_POSITIVE);
    let mut alpha = 0.5;
    let mut iterations = 0;
    let mut converged = false;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let l1 = |h: &DVector<f64>| h.iter().map(|v| v.abs()).sum::<f64>();
    let feas = eps * (1.0 + 1e-6) + 1e-12;

    while iterations < opts.max_iter && k_norm > 0.0 {
        iterations += 1;
        let v = &y + &kxbar * sigma;
        let w = &v / sigma;
        let wn = w.norm();
        let proj = if wn > eps { w * (eps / wn) } else { w };
        let y_new = &v - proj * sigma;
        let x_new = prox(&(&x - k_op.tr_mul(&y_new) * tau), tau);
        let kx_new = &k_op * &x_new;

        let dx = &x_new - &x;
        let dy = &y - &y_new;
        let p_res = (&dx / tau - k_op.tr_mul(&dy)).norm();
        let d_res = (&dy / sigma - (&kx_new - &kx)).norm();
        kxbar = &kx_new * 2.0 - &kx;
        let step = dx.norm();
        x = x_new;
        kx = kx_new;
        y = y_new;

        let r = kx.norm();
        if r <= feas {
            let obj = l1(&x);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x.clone()));
            }
            if iterations > 10 && step <= opts.tol * x.norm() {
                converged = true;
                break;
            }
        }
        if p_res > 1.5 * d_res {
            tau /= 1.0 - alpha;
            sigma *= 1.0 - alpha;
            alpha *= 0.95;
        } else if p_res < d_res / 1.5 {
            tau *= 1.0 - alpha;
            sigma /= 1.0 - alpha;
            alpha *= 0.95;
        }
    }
    let h = if converged {
        x
    } else {
        best.map(|(_, b)| b).unwrap_or(x)
    };
    let residual = (&system.pi * &h).norm();
    let (hj, hi) = split_filters(&h, taps);
    Ok(StructuredRirEstimate {
        h_i: Rir::new(hi, opts.sample_rate)?,
        h_j: Rir::new(hj, opts.sample_rate)?,
        eps,
        min_residual,
        residual,
        iterations,
        converged,
    })
}
