use crate::error::{Error, Result};
use crate::forward::MeasurementMatrix;
use crate::linalg::{CMat, C64};

use super::structure::{model_approx_bins, StructureModel};
use super::{adjoint, apply, check_problem, norm, operator_norm_sq, sub, zeros_like_cells, SparseEstimate};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IhtOptions {
    pub max_iter: usize,
    /// Stop once the residual norm changes by less than `tol · ‖X‖`.
    pub tol: f64,
}

impl Default for IhtOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-8 }
    }
}

/// Model-based iterative hard thresholding with step `1 / σ_max(Φ)²`.
pub fn iht(
    op: &MeasurementMatrix,
    obs: &[CMat],
    structure: &StructureModel,
    n_active: usize,
    opts: IhtOptions,
) -> Result<SparseEstimate> {
    let frames = check_problem(op, obs)?;
    if n_active == 0 {
        return Err(Error::Argument("n_active must be at least 1".into()));
    }
    let xnorm = norm(obs);
    let mut s = zeros_like_cells(op, frames);
    if xnorm == 0.0 {
        return Ok(SparseEstimate::from_coeffs(s, 0.0, 1, true));
    }
    let l = operator_norm_sq(op);
    if !(l > 0.0) {
        return Err(Error::Argument("operator is identically zero".into()));
    }
    let kappa = C64::from(1.0 / l);
    let mut resid = obs.to_vec();
    let mut rnorm = xnorm;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = adjoint(op, &resid);
        let step: Vec<CMat> = s.iter().zip(&grad).map(|(a, g)| a + g * kappa).collect();
        s = model_approx_bins(&step, structure, n_active)?;
        resid = sub(obs, &apply(op, &s));
        let next = norm(&resid);
        let change = (rnorm - next).abs();
        rnorm = next;
        if change < opts.tol * xnorm || rnorm <= opts.tol * xnorm {
            converged = true;
            break;
        }
    }
    Ok(SparseEstimate::from_coeffs(s, rnorm, iterations, converged))
}

/// Residual norms after every iteration, for monotonicity checks.
pub fn iht_trace(
    op: &MeasurementMatrix,
    obs: &[CMat],
    structure: &StructureModel,
    n_active: usize,
    iters: usize,
) -> Result<Vec<f64>> {
    let frames = check_problem(op, obs)?;
    let l = operator_norm_sq(op);
    let kappa = C64::from(1.0 / l);
    let mut s = zeros_like_cells(op, frames);
    let mut resid = obs.to_vec();
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let grad = adjoint(op, &resid);
        let step: Vec<CMat> = s.iter().zip(&grad).map(|(a, g)| a + g * kappa).collect();
        s = model_approx_bins(&step, structure, n_active)?;
        resid = sub(obs, &apply(op, &s));
        out.push(norm(&resid));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CVec, ZERO};
    use crate::recovery::single_bin;

    #[test]
    fn zero_observation() {
        let phi = CMat::identity(3, 3);
        let (op, obs) = single_bin(&phi, &CVec::from_element(3, ZERO));
        let est = iht(&op, &obs, &StructureModel::plain(1), 1, IhtOptions::default()).unwrap();
        assert_eq!(est.iterations, 1);
        assert!(est.support.is_empty());
    }

    #[test]
    fn identity_recovers_in_one_step() {
        let phi = CMat::identity(4, 4);
        let x = CVec::from_vec(vec![ZERO, C64::new(2.0, 1.0), ZERO, C64::from(-1.0)]);
        let (op, obs) = single_bin(&phi, &x);
        let est = iht(&op, &obs, &StructureModel::plain(1), 2, IhtOptions::default()).unwrap();
        assert_eq!(est.support, vec![1, 3]);
        assert!((est.coeffs[0].column(0) - &x).norm() < 1e-12);
        let trace = iht_trace(&op, &obs, &StructureModel::plain(1), 2, 1).unwrap();
        assert!(trace[0] < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let phi = CMat::identity(2, 2);
        let x = CVec::from_vec(vec![C64::new(f64::NAN, 0.0), ZERO]);
        let (op, obs) = single_bin(&phi, &x);
        assert!(matches!(
            iht(&op, &obs, &StructureModel::plain(1), 1, IhtOptions::default()),
            Err(Error::Argument(_))
        ));
    }
}
