use crate::error::{Error, Result};
use crate::forward::MeasurementMatrix;
use crate::linalg::{lstsq, CMat, C64};

use super::structure::StructureModel;
use super::{adjoint, apply, check_problem, norm, sub, zeros_like_cells, SparseEstimate};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L1l2Options {
    pub max_iter: usize,
    /// Relative objective change below which the run may stop.
    pub tol: f64,
    /// With `eps = 0`, refit the detected support by least squares.
    pub polish: bool,
}

impl Default for L1l2Options {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-6,
            polish: true,
        }
    }
}

/// Mixed `L1,L2` minimization `min Σ‖group‖₂ s.t. ‖X − ΦS‖ ≤ eps`.
///
/// Solved with an adaptive primal-dual hybrid gradient method: the primal
/// step is group soft-thresholding, the dual step projects onto the ball of
/// radius `eps` around the observations.
pub fn l1l2(
    op: &MeasurementMatrix,
    obs: &[CMat],
    structure: &StructureModel,
    eps: f64,
    opts: L1l2Options,
) -> Result<SparseEstimate> {
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("eps must be nonnegative, got {eps}")));
    }
    let frames = check_problem(op, obs)?;
    if structure.n_bins() != op.n_bins() {
        return Err(Error::Argument("structure and operator disagree on bin count".into()));
    }
    let xnorm = norm(obs);
    let zero = zeros_like_cells(op, frames);
    if xnorm <= eps {
        return Ok(SparseEstimate::from_coeffs(zero, xnorm, 0, true));
    }
    let corr = adjoint(op, obs);
    let bands = structure.layouts()[structure.best_layout(&corr, 1)].clone();
    let l = super::operator_norm_sq(op).sqrt();
    if !(l > 0.0) {
        return Err(Error::Argument("operator is identically zero".into()));
    }
    let feas_tol = eps + 1e-6 * xnorm;
    let objective = |s: &[CMat]| group_norms(s, &bands).iter().sum::<f64>();

    let mut tau = 0.95 / l;
    let mut sigma = 0.95 / l;
    let mut alpha = 0.5;
    let mut x = zero.clone();
    let mut ax = apply(op, &x);
    let mut axbar = ax.clone();
    let mut y: Vec<CMat> = obs.iter().map(|o| CMat::zeros(o.nrows(), o.ncols())).collect();
    let mut prev_obj = f64::INFINITY;
    let mut best: Option<(f64, Vec<CMat>)> = None;
    let mut least_violation = (f64::INFINITY, zero.clone());
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        // dual step: y <- v - sigma * P_B(v / sigma)
        let v: Vec<CMat> = y.iter().zip(&axbar).map(|(yi, ai)| yi + ai * C64::from(sigma)).collect();
        let proj = project_ball(&v, obs, sigma, eps);
        let dual_ball: Vec<CMat> = v.iter().zip(&proj).map(|(vi, pi)| vi - pi * C64::from(sigma)).collect();
        // primal step
        let grad = adjoint(op, &dual_ball);
        let mut x_new: Vec<CMat> = x.iter().zip(&grad).map(|(a, g)| a - g * C64::from(tau)).collect();
        group_shrink(&mut x_new, &bands, tau);
        let ax_new = apply(op, &x_new);

        let dx = sub(&x_new, &x);
        let dax = sub(&ax_new, &ax);
        let dy = sub(&y, &dual_ball);
        let primal_res = {
            let aty = adjoint(op, &dy);
            norm(&dx.iter().zip(&aty).map(|(a, b)| a * C64::from(1.0 / tau) - b).collect::<Vec<_>>())
        };
        let dual_res = norm(&dy.iter().zip(&dax).map(|(a, b)| a * C64::from(1.0 / sigma) - b).collect::<Vec<_>>());

        axbar = ax_new.iter().zip(&ax).map(|(n, o)| n * C64::from(2.0) - o).collect();
        let step = norm(&dx);
        x = x_new;
        ax = ax_new;
        y = dual_ball;

        let viol = norm(&sub(&ax, obs));
        let obj = objective(&x);
        if viol <= feas_tol {
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x.clone()));
            }
        } else if viol < least_violation.0 {
            least_violation = (viol, x.clone());
        }
        let rel = (prev_obj - obj).abs() / obj.max(f64::MIN_POSITIVE);
        prev_obj = obj;
        if iterations > 10 && viol <= feas_tol && rel < opts.tol && step <= opts.tol * norm(&x).max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }

        // residual balancing keeps tau·sigma fixed
        if primal_res > 1.5 * dual_res {
            tau /= 1.0 - alpha;
            sigma *= 1.0 - alpha;
            alpha *= 0.95;
        } else if primal_res < dual_res / 1.5 {
            tau *= 1.0 - alpha;
            sigma /= 1.0 - alpha;
            alpha *= 0.95;
        }
    }

    let mut s = if converged {
        x
    } else {
        match best {
            Some((_, b)) => b,
            None => {
                if norm(&sub(&ax, obs)) <= least_violation.0 {
                    x
                } else {
                    least_violation.1
                }
            }
        }
    };
    let mut regularized = false;
    if opts.polish && eps == 0.0 {
        if let Some((refit, reg)) = polish(op, obs, &s, &bands) {
            let r = norm(&sub(obs, &apply(op, &refit)));
            if r <= 1e-9 * xnorm {
                s = refit;
                regularized = reg;
                converged = true;
            }
        }
    }
    let resid = norm(&sub(obs, &apply(op, &s)));
    let mut est = SparseEstimate::from_coeffs(s, resid, iterations, converged);
    est.regularized = regularized;
    Ok(est)
}

/// `P_B(v / σ)` for the ball of radius `eps` centred at the observations.
fn project_ball(v: &[CMat], centre: &[CMat], sigma: f64, eps: f64) -> Vec<CMat> {
    let d: Vec<CMat> = v.iter().zip(centre).map(|(vi, ci)| vi * C64::from(1.0 / sigma) - ci).collect();
    let n = norm(&d);
    let scale = if n > eps { eps / n } else { 1.0 };
    centre.iter().zip(&d).map(|(c, di)| c + di * C64::from(scale)).collect()
}

fn group_norms(s: &[CMat], bands: &[Vec<usize>]) -> Vec<f64> {
    let g = s.first().map(|m| m.nrows()).unwrap_or(0);
    let mut out = Vec::with_capacity(g * bands.len());
    for band in bands {
        for cell in 0..g {
            let e: f64 = band.iter().map(|&f| s[f].row(cell).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum();
            out.push(e.sqrt());
        }
    }
    out
}

fn group_shrink(s: &mut [CMat], bands: &[Vec<usize>], t: f64) {
    let g = s.first().map(|m| m.nrows()).unwrap_or(0);
    for band in bands {
        for cell in 0..g {
            let e: f64 = band.iter().map(|&f| s[f].row(cell).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum();
            let n = e.sqrt();
            let scale = if n > t { 1.0 - t / n } else { 0.0 };
            for &f in band {
                let mut row = s[f].row_mut(cell);
                row *= C64::from(scale);
            }
        }
    }
}

fn polish(op: &MeasurementMatrix, obs: &[CMat], s: &[CMat], bands: &[Vec<usize>]) -> Option<(Vec<CMat>, bool)> {
    let g = s.first()?.nrows();
    let norms = group_norms(s, bands);
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return None;
    }
    let mut out: Vec<CMat> = s.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect();
    let mut reg = false;
    for (b, band) in bands.iter().enumerate() {
        let sel: Vec<usize> = (0..g).filter(|&c| norms[b * g + c] > 1e-6 * max).collect();
        if sel.is_empty() {
            continue;
        }
        for &f in band {
            let sub_phi = op.blocks[f].select_columns(&sel);
            let sol = lstsq(&sub_phi, &obs[f], 1e-12, 1e-12);
            reg |= sol.regularized;
            for (k, &c) in sel.iter().enumerate() {
                out[f].set_row(c, &sol.x.row(k));
            }
        }
    }
    Some((out, reg))
}
