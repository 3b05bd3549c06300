//! Structured sparse solvers over per-bin acoustic operators.
//!
//! Coefficients are stored per frequency bin as `cells × frames` matrices and
//! observations as `mics × frames` matrices, so the block-diagonal operator of
//! the stacked formulation is applied one bin at a time.

mod iht;
mod l1l2;
mod omp;
pub mod structure;

pub use iht::{iht, iht_trace, IhtOptions};
pub use l1l2::{l1l2, L1l2Options};
pub use omp::{omp, omp_trace, OmpTrace};
pub use structure::{model_approx, model_approx_bins, StructureKind, StructureModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::MeasurementMatrix;
use crate::linalg::{sigma_max_sq, CMat, CVec};
use crate::scene::{PlanarGrid, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseEstimate {
    /// Per-bin `cells × frames` coefficients.
    pub coeffs: Vec<CMat>,
    /// Cells with any nonzero coefficient, ascending.
    pub support: Vec<usize>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a rank-deficient least-squares step fell back to ridge regularization.
    pub regularized: bool,
}

impl SparseEstimate {
    pub fn from_coeffs(coeffs: Vec<CMat>, residual_norm: f64, iterations: usize, converged: bool) -> Self {
        let support = support_of(&coeffs);
        Self {
            coeffs,
            support,
            residual_norm,
            iterations,
            converged,
            regularized: false,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.coeffs.first().map(|m| m.nrows()).unwrap_or(0)
    }

    /// Energy of each cell summed over bins and frames.
    pub fn cell_energies(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.n_cells()];
        for m in &self.coeffs {
            for (g, row) in m.row_iter().enumerate() {
                e[g] += row.iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
        }
        e
    }

    /// Spectrum of one cell: `bins × frames`.
    pub fn cell_spectrum(&self, cell: usize) -> CMat {
        let frames = self.coeffs.first().map(|m| m.ncols()).unwrap_or(0);
        CMat::from_fn(self.coeffs.len(), frames, |f, t| self.coeffs[f][(cell, t)])
    }

    pub fn report(&self) -> SolverReport {
        SolverReport {
            support: self.support.clone(),
            energies: self.support.iter().map(|&g| self.cell_energies()[g]).collect(),
            residual: self.residual_norm,
            iterations: self.iterations,
            converged: self.converged,
            regularized: self.regularized,
        }
    }
}

/// Serializable summary of a solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub support: Vec<usize>,
    pub energies: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub regularized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Iht,
    Omp,
    L1l2,
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iht" => Ok(Solver::Iht),
            "omp" => Ok(Solver::Omp),
            "l1l2" => Ok(Solver::L1l2),
            other => Err(Error::Argument(format!("unknown solver '{other}'"))),
        }
    }
}

/// Solver choice plus the parameters every solver needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub solver: Solver,
    /// Structure spec understood by [`StructureModel::parse`].
    pub structure: String,
    /// Active cells per band for the greedy solvers.
    pub n_active: usize,
    /// Constraint radius for `l1l2`, relative to the observation norm.
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            solver: Solver::Omp,
            structure: "plain".into(),
            n_active: 1,
            eps_rel: 1e-3,
            max_iter: 1000,
        }
    }
}

/// Runs the configured solver on `op` and `obs`.
pub fn solve(op: &MeasurementMatrix, obs: &[CMat], cfg: &SolverConfig) -> Result<SparseEstimate> {
    let structure = StructureModel::parse(&cfg.structure, &op.freqs_hz)?;
    match cfg.solver {
        Solver::Omp => omp(op, obs, &structure, cfg.n_active, 0.0),
        Solver::Iht => iht(
            op,
            obs,
            &structure,
            cfg.n_active,
            IhtOptions {
                max_iter: cfg.max_iter,
                ..Default::default()
            },
        ),
        Solver::L1l2 => l1l2(
            op,
            obs,
            &structure,
            cfg.eps_rel * norm(obs),
            L1l2Options {
                max_iter: cfg.max_iter.max(1),
                ..Default::default()
            },
        ),
    }
}

pub(crate) fn support_of(coeffs: &[CMat]) -> Vec<usize> {
    let g = coeffs.first().map(|m| m.nrows()).unwrap_or(0);
    (0..g)
        .filter(|&i| coeffs.iter().any(|m| m.row(i).iter().any(|v| v.norm_sqr() > 0.0)))
        .collect()
}

pub(crate) fn check_problem(op: &MeasurementMatrix, obs: &[CMat]) -> Result<usize> {
    if op.n_bins() != obs.len() {
        return Err(Error::Argument(format!(
            "operator has {} bins, observations {}",
            op.n_bins(),
            obs.len()
        )));
    }
    let frames = obs.first().map(|o| o.ncols()).unwrap_or(0);
    for (f, (b, o)) in op.blocks.iter().zip(obs).enumerate() {
        if b.nrows() != o.nrows() || o.ncols() != frames {
            return Err(Error::Argument(format!("bin {f}: observation shape does not match operator")));
        }
        if o.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) || b.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Argument(format!("bin {f}: non-finite input")));
        }
    }
    Ok(frames)
}

pub(crate) fn apply(op: &MeasurementMatrix, coeffs: &[CMat]) -> Vec<CMat> {
    op.blocks.iter().zip(coeffs).map(|(b, s)| b * s).collect()
}

pub(crate) fn adjoint(op: &MeasurementMatrix, resid: &[CMat]) -> Vec<CMat> {
    op.blocks.iter().zip(resid).map(|(b, r)| b.adjoint() * r).collect()
}

pub(crate) fn sub(a: &[CMat], b: &[CMat]) -> Vec<CMat> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn norm(a: &[CMat]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

pub(crate) fn zeros_like_cells(op: &MeasurementMatrix, frames: usize) -> Vec<CMat> {
    op.blocks.iter().map(|b| CMat::zeros(b.ncols(), frames)).collect()
}

/// Squared spectral norm of the block-diagonal operator.
pub fn operator_norm_sq(op: &MeasurementMatrix) -> f64 {
    op.blocks.iter().map(sigma_max_sq).fold(0.0, f64::max)
}

/// Wraps a single dense matrix and a stacked observation vector as a one-bin problem.
pub fn single_bin(phi: &CMat, x: &CVec) -> (MeasurementMatrix, Vec<CMat>) {
    (
        MeasurementMatrix {
            blocks: vec![phi.clone()],
            freqs_hz: vec![0.0],
            column_cells: (0..phi.ncols()).collect(),
        },
        vec![CMat::from_column_slice(x.len(), 1, x.as_slice())],
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedCell {
    pub cell: usize,
    pub position: [f64; 3],
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub cells: Vec<LocalizedCell>,
    /// Set when the estimate carried no energy at all.
    pub all_zero: bool,
}

/// The `n_sources` most energetic cells of `estimate`, descending, ties to lowest index.
pub fn localize(estimate: &SparseEstimate, grid: &PlanarGrid, n_sources: usize) -> Result<Localization> {
    if n_sources == 0 {
        return Err(Error::Argument("n_sources must be at least 1".into()));
    }
    if estimate.n_cells() != grid.len() {
        return Err(Error::Argument(format!(
            "estimate has {} cells, grid {}",
            estimate.n_cells(),
            grid.len()
        )));
    }
    Ok(localize_energies(&estimate.cell_energies(), grid.cells(), n_sources))
}

pub fn localize_energies(energies: &[f64], cells: &[Point], n_sources: usize) -> Localization {
    if energies.iter().all(|e| *e == 0.0) {
        return Localization {
            cells: Vec::new(),
            all_zero: true,
        };
    }
    let mut idx: Vec<usize> = (0..energies.len()).filter(|&i| energies[i] > 0.0).collect();
    idx.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    idx.truncate(n_sources);
    Localization {
        cells: idx
            .into_iter()
            .map(|i| LocalizedCell {
                cell: i,
                position: [cells[i].x, cells[i].y, cells[i].z],
                energy: energies[i],
            })
            .collect(),
        all_zero: false,
    }
}
