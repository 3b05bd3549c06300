use crate::error::{Error, Result};
use crate::forward::MeasurementMatrix;
use crate::linalg::{lstsq, CMat, CVec};

use super::structure::StructureModel;
use super::{adjoint, apply, check_problem, norm, sub, zeros_like_cells, SparseEstimate};

/// Per-band selection trace of an OMP run.
#[derive(Clone, Debug, PartialEq)]
pub struct OmpTrace {
    pub estimate: SparseEstimate,
    /// Bands of the layout that was used.
    pub bands: Vec<Vec<usize>>,
    /// Cells in selection order, per band.
    pub order: Vec<Vec<usize>>,
    /// Band residual norm before the first and after every selection.
    pub residuals: Vec<Vec<f64>>,
}

/// Model-based orthogonal matching pursuit.
///
/// Each step adds the cell whose inclusion most reduces the band's
/// least-squares residual; coefficients are refitted on the final support.
pub fn omp(
    op: &MeasurementMatrix,
    obs: &[CMat],
    structure: &StructureModel,
    n_active: usize,
    residual_tol: f64,
) -> Result<SparseEstimate> {
    Ok(omp_trace(op, obs, structure, n_active, residual_tol)?.estimate)
}

pub fn omp_trace(
    op: &MeasurementMatrix,
    obs: &[CMat],
    structure: &StructureModel,
    n_active: usize,
    residual_tol: f64,
) -> Result<OmpTrace> {
    let frames = check_problem(op, obs)?;
    if n_active == 0 {
        return Err(Error::Argument("n_active must be at least 1".into()));
    }
    if structure.n_bins() != op.n_bins() {
        return Err(Error::Argument("structure and operator disagree on bin count".into()));
    }
    for (f, b) in op.blocks.iter().enumerate() {
        if let Some(g) = b.column_iter().position(|c| c.norm() == 0.0) {
            return Err(Error::Argument(format!("bin {f}: column {g} is zero")));
        }
    }
    let corr = adjoint(op, obs);
    let layout = structure.best_layout(&corr, n_active);
    let bands = structure.layouts()[layout].clone();
    let mut coeffs = zeros_like_cells(op, frames);
    let mut orders = Vec::with_capacity(bands.len());
    let mut history = Vec::with_capacity(bands.len());
    let mut regularized = false;

    for band in &bands {
        let (sel, hist) = select_band(op, obs, band, n_active, residual_tol);
        if !sel.is_empty() {
            for &f in band {
                let sub_phi = op.blocks[f].select_columns(&sel);
                let sol = lstsq(&sub_phi, &obs[f], 1e-12, 1e-10);
                regularized |= sol.regularized;
                for (k, &g) in sel.iter().enumerate() {
                    coeffs[f].set_row(g, &sol.x.row(k));
                }
            }
        }
        orders.push(sel);
        history.push(hist);
    }
    let resid = norm(&sub(obs, &apply(op, &coeffs)));
    let mut estimate = SparseEstimate::from_coeffs(coeffs, resid, orders.iter().map(|o| o.len()).max().unwrap_or(0), true);
    estimate.regularized = regularized;
    Ok(OmpTrace {
        estimate,
        bands,
        order: orders,
        residuals: history,
    })
}

fn select_band(
    op: &MeasurementMatrix,
    obs: &[CMat],
    band: &[usize],
    n_active: usize,
    residual_tol: f64,
) -> (Vec<usize>, Vec<f64>) {
    let g_count = op.n_columns();
    let mut bases: Vec<Vec<CVec>> = vec![Vec::new(); band.len()];
    let mut resid: Vec<CMat> = band.iter().map(|&f| obs[f].clone()).collect();
    let mut selected: Vec<usize> = Vec::new();
    let band_norm = |r: &[CMat]| r.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let mut hist = vec![band_norm(&resid)];
    let max_sel = n_active.min(g_count);

    while selected.len() < max_sel {
        let current = *hist.last().unwrap();
        if current <= residual_tol || current == 0.0 {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for g in 0..g_count {
            if selected.contains(&g) {
                continue;
            }
            let mut gain = 0.0;
            for (k, &f) in band.iter().enumerate() {
                let col = op.blocks[f].column(g);
                let u = orthogonalize(&col.into_owned(), &bases[k]);
                let nu = u.norm_squared();
                if nu <= 1e-24 * col.norm_squared() {
                    continue;
                }
                let proj = u.adjoint() * &resid[k];
                gain += proj.norm_squared() / nu;
            }
            if best.is_none_or(|(_, b)| gain > b) {
                best = Some((g, gain));
            }
        }
        let Some((g, gain)) = best else { break };
        if gain <= 1e-28 * current * current {
            break;
        }
        for (k, &f) in band.iter().enumerate() {
            let col = op.blocks[f].column(g).into_owned();
            let u = orthogonalize(&col, &bases[k]);
            let nu = u.norm();
            if nu <= 1e-12 * col.norm() {
                continue;
            }
            let q = u / crate::linalg::C64::from(nu);
            let p = q.adjoint() * &resid[k];
            resid[k] -= &q * p;
            bases[k].push(q);
        }
        selected.push(g);
        hist.push(band_norm(&resid));
    }
    (selected, hist)
}

fn orthogonalize(v: &CVec, basis: &[CVec]) -> CVec {
    let mut u = v.clone();
    for _ in 0..2 {
        for q in basis {
            let p = q.dotc(&u);
            u -= q * p;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{C64, ZERO};
    use crate::recovery::single_bin;

    #[test]
    fn zero_observation_gives_empty_support() {
        let phi = CMat::identity(3, 3);
        let (op, obs) = single_bin(&phi, &CVec::from_element(3, ZERO));
        let est = omp(&op, &obs, &StructureModel::plain(1), 2, 0.0).unwrap();
        assert!(est.support.is_empty());
    }

    #[test]
    fn single_column_selected_first() {
        let phi = CMat::from_row_slice(2, 3, &[C64::from(1.0), C64::from(0.6), C64::from(0.0), C64::from(0.0), C64::from(0.8), C64::from(1.0)]);
        let x = phi.column(1).into_owned();
        let (op, obs) = single_bin(&phi, &x);
        let tr = omp_trace(&op, &obs, &StructureModel::plain(1), 2, 1e-12).unwrap();
        assert_eq!(tr.order[0][0], 1);
        assert_eq!(tr.order[0].len(), 1);
        assert!(tr.estimate.residual_norm < 1e-12);
    }

    #[test]
    fn orthogonal_dictionary_order() {
        let raw = CMat::from_fn(5, 4, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64));
        let q = crate::linalg::orthonormal_basis(&raw, 1e-12);
        assert_eq!(q.ncols(), 4);
        let s = [C64::new(0.3, 0.1), C64::from(-2.0), C64::new(0.0, 4.0), C64::from(1.0)];
        let x = &q * CVec::from_row_slice(&s);
        let corr: Vec<f64> = (0..4).map(|g| q.column(g).dotc(&x).norm()).collect();
        let mut expected: Vec<usize> = (0..4).collect();
        expected.sort_by(|&a, &b| corr[b].total_cmp(&corr[a]));
        let (op, obs) = single_bin(&q, &x);
        let tr = omp_trace(&op, &obs, &StructureModel::plain(1), 4, 0.0).unwrap();
        assert_eq!(tr.order[0], expected);
        assert!(tr.residuals[0].windows(2).all(|w| w[1] < w[0]));
    }
}
