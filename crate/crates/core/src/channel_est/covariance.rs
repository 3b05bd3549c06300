//! Multi-source absorption estimation by block-sparse recovery of the source covariance.
//!
//! With free-space steering matrix `O` over an actual-virtual lattice and
//! sources that are mutually orthogonal over frames, the per-bin observation
//! covariance is `C = Σ_i O_{Ω_i} Σ^i O_{Ω_i}^*`, where `Ω_i` holds cell `i`
//! and its images and `Σ^i = ‖S_i‖² P_{Ω_i} P_{Ω_i}^*`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_est::absorption::fit_log_gains;
use crate::error::{Error, Result};
use crate::linalg::{nnls, power_sigma_max_sq, CMat, CVec, C64};
use crate::scene::Surface;

/// Relative scale of the default constraint radius.
pub const DEFAULT_EPS_SCALE: f64 = 1e-6;

/// `C = X X^*` for an `M × frames` observation matrix.
pub fn observation_covariance(x: &CMat) -> Result<CMat> {
    if x.ncols() == 0 {
        return Err(Error::Argument("observation needs at least one frame".into()));
    }
    Ok(x * x.adjoint())
}

/// Explicit stacked system: block `i` is `conj(O_Ω_i) ⊗ O_Ω_i`, of shape `M² × |Ω_i|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct KroneckerSystem {
    pub blocks: Vec<CMat>,
    pub groups: Vec<Vec<usize>>,
}

impl KroneckerSystem {
    /// All blocks side by side.
    pub fn stacked(&self) -> CMat {
        let rows = self.blocks.first().map(|b| b.nrows()).unwrap_or(0);
        let cols: usize = self.blocks.iter().map(|b| b.ncols()).sum();
        let mut out = CMat::zeros(rows, cols);
        let mut off = 0;
        for b in &self.blocks {
            out.view_mut((0, off), (rows, b.ncols())).copy_from(b);
            off += b.ncols();
        }
        out
    }

    /// `𝓑 𝓥` with `𝓥` the column-major vectorizations of `sigmas` stacked.
    pub fn apply(&self, sigmas: &[CMat]) -> CVec {
        let rows = self.blocks.first().map(|b| b.nrows()).unwrap_or(0);
        let mut out = CVec::zeros(rows);
        for (b, s) in self.blocks.iter().zip(sigmas) {
            out += b * CVec::from_column_slice(s.as_slice());
        }
        out
    }
}

fn check_groups(n_cols: usize, groups: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n_cols];
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Argument(format!("group {i} is empty")));
        }
        for &k in g {
            if k >= n_cols {
                return Err(Error::Argument(format!("group {i} references column {k} of {n_cols}")));
            }
            if seen[k] {
                return Err(Error::Ambiguity(format!("column {k} belongs to more than one group")));
            }
            seen[k] = true;
        }
    }
    Ok(())
}

fn group_columns(o: &CMat, group: &[usize]) -> CMat {
    CMat::from_fn(o.nrows(), group.len(), |m, k| o[(m, group[k])])
}

pub fn build_kronecker_system(o: &CMat, groups: &[Vec<usize>]) -> Result<KroneckerSystem> {
    check_groups(o.ncols(), groups)?;
    let blocks = groups
        .iter()
        .map(|g| {
            let og = group_columns(o, g);
            og.map(|v| v.conj()).kronecker(&og)
        })
        .collect();
    Ok(KroneckerSystem {
        blocks,
        groups: groups.to_vec(),
    })
}

/// One frequency bin of the covariance problem.
#[derive(Clone, Debug)]
pub struct CovarianceBin {
    pub covariance: CMat,
    /// Free-space steering matrix `M × points`.
    pub steering: CMat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Constraint radius; `None` uses `1e-6 · ‖C‖_F`.
    pub eps: Option<f64>,
    /// Least-squares refit on the detected support when it stays feasible.
    pub polish: bool,
    /// One `Σ^i` for all bins, for sources with flat spectra and frequency-independent reflections.
    pub shared: bool,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self {
            max_iter: 10000,
            tol: 1e-7,
            eps: None,
            polish: true,
            shared: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceRecovery {
    /// `blocks[f][i]` is `Σ^i` at bin `f`, real symmetric with nonnegative entries;
    /// a single entry when the blocks are shared across bins.
    pub blocks: Vec<Vec<DMatrix<f64>>>,
    pub groups: Vec<Vec<usize>>,
    pub eps: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the reported iterate after each iteration at which it changed.
    pub objective_trace: Vec<f64>,
}

impl CovarianceRecovery {
    /// Frobenius norm of every group, taken jointly over bins.
    pub fn group_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.groups.len()];
        for bin in &self.blocks {
            for (i, b) in bin.iter().enumerate() {
                out[i] += b.norm_squared();
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }
}

struct Problem {
    /// Per bin, per group, the `M × |Ω|` steering columns.
    cols: Vec<Vec<CMat>>,
    /// One set of blocks serves every bin.
    shared: bool,
}

type Blocks = Vec<Vec<DMatrix<f64>>>;

impl Problem {
    /// Index into the block set used by bin `f`.
    fn var(&self, f: usize) -> usize {
        if self.shared {
            0
        } else {
            f
        }
    }

    fn n_vars(&self) -> usize {
        if self.shared {
            1
        } else {
            self.cols.len()
        }
    }

    fn forward(&self, s: &Blocks) -> Vec<CMat> {
        self.cols
            .par_iter()
            .enumerate()
            .map(|(f, cols)| {
                let m = cols.first().map(|c| c.nrows()).unwrap_or(0);
                let mut out = CMat::zeros(m, m);
                for (og, sig) in cols.iter().zip(&s[self.var(f)]) {
                    if sig.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let sc = sig.map(C64::from);
                    out += og * sc * og.adjoint();
                }
                out
            })
            .collect()
    }

    fn adjoint(&self, y: &[CMat]) -> Blocks {
        let per_bin: Blocks = self
            .cols
            .par_iter()
            .zip(y.par_iter())
            .map(|(cols, yb)| cols.iter().map(|og| (og.adjoint() * yb * og).map(|v| v.re)).collect())
            .collect();
        if !self.shared {
            return per_bin;
        }
        let mut acc = self.zeros();
        for bin in per_bin {
            for (a, b) in acc[0].iter_mut().zip(bin) {
                *a += b;
            }
        }
        acc
    }

    fn zeros(&self) -> Blocks {
        let sizes: Vec<usize> = self.cols.first().map(|c| c.iter().map(|g| g.ncols()).collect()).unwrap_or_default();
        (0..self.n_vars())
            .map(|_| sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect())
            .collect()
    }

    fn norm_sq(&self) -> f64 {
        // real-domain operator norm is bounded by the complex extension
        let sizes: Vec<usize> = self.cols.first().map(|c| c.iter().map(|g| g.ncols()).collect()).unwrap_or_default();
        let per_set: usize = sizes.iter().map(|n| n * n).sum();
        let dim = per_set * self.n_vars();
        let unpack = |v: &CVec| -> Vec<Vec<CMat>> {
            let mut off = 0;
            (0..self.n_vars())
                .map(|_| {
                    sizes
                        .iter()
                        .map(|&n| {
                            let m = CMat::from_column_slice(n, n, &v.as_slice()[off..off + n * n]);
                            off += n * n;
                            m
                        })
                        .collect()
                })
                .collect()
        };
        let apply = |v: &CVec| -> CVec {
            let s = unpack(v);
            let mut out = Vec::new();
            for (f, cols) in self.cols.iter().enumerate() {
                let m = cols.first().map(|c| c.nrows()).unwrap_or(0);
                let mut acc = CMat::zeros(m, m);
                for (og, sig) in cols.iter().zip(&s[self.var(f)]) {
                    acc += og * sig * og.adjoint();
                }
                out.extend_from_slice(acc.as_slice());
            }
            CVec::from_vec(out)
        };
        let adjoint = |v: &CVec| -> CVec {
            let mut out = CVec::zeros(dim);
            let mut off = 0;
            for (f, cols) in self.cols.iter().enumerate() {
                let m = cols.first().map(|c| c.nrows()).unwrap_or(0);
                let y = CMat::from_column_slice(m, m, &v.as_slice()[off..off + m * m]);
                off += m * m;
                let mut pos = self.var(f) * per_set;
                for og in cols {
                    let b = og.adjoint() * &y * og;
                    for (k, z) in b.iter().enumerate() {
                        out[pos + k] += *z;
                    }
                    pos += b.len();
                }
            }
            out
        };
        power_sigma_max_sq(apply, adjoint, dim, 50)
    }
}

fn residual_norm(bins: &[CovarianceBin], model: &[CMat]) -> f64 {
    bins.iter()
        .zip(model)
        .map(|(b, m)| (&b.covariance - m).norm_squared())
        .sum::<f64>()
        .sqrt()
}

fn objective(s: &Blocks) -> f64 {
    let g = s.first().map(|b| b.len()).unwrap_or(0);
    (0..g)
        .map(|i| s.iter().map(|bin| bin[i].norm_squared()).sum::<f64>().sqrt())
        .sum()
}

/// Projection onto real symmetric matrices with nonnegative entries.
fn project_cone(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |r, c| (0.5 * (m[(r, c)] + m[(c, r)])).max(0.0))
}

/// Group soft-thresholding of cone-projected blocks, groups joint over bins.
fn prox(v: &Blocks, t: f64) -> Blocks {
    let mut p: Blocks = v.iter().map(|bin| bin.iter().map(project_cone).collect()).collect();
    let g = p.first().map(|b| b.len()).unwrap_or(0);
    for i in 0..g {
        let n = p.iter().map(|bin| bin[i].norm_squared()).sum::<f64>().sqrt();
        let scale = if n > t { 1.0 - t / n } else { 0.0 };
        for bin in p.iter_mut() {
            bin[i] *= scale;
        }
    }
    p
}

fn blocks_diff_norm(a: &Blocks, b: &Blocks) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

fn blocks_norm(a: &Blocks) -> f64 {
    a.iter().flatten().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// Block-sparse covariance recovery at a single bin.
pub fn block_sparse_covariance_recovery(
    covariance: &CMat,
    steering: &CMat,
    groups: &[Vec<usize>],
    opts: &CovarianceOptions,
) -> Result<CovarianceRecovery> {
    let bins = [CovarianceBin {
        covariance: covariance.clone(),
        steering: steering.clone(),
    }];
    joint_covariance_recovery(&bins, groups, opts)
}

/// Recover `Σ^i` at every bin, with group `i` shared across bins.
///
/// Minimizes `Σ_i (Σ_f ‖Σ^i_f‖_F²)^½` subject to `‖C − 𝓑𝓥‖ ≤ eps` over all
/// bins, with every block real symmetric and entrywise nonnegative. Solved by a
/// primal-dual splitting whose primal step is the cone projection followed by
/// group shrinkage. If the iteration cap is hit the best feasible iterate is
/// returned with `converged = false`.
pub fn joint_covariance_recovery(
    bins: &[CovarianceBin],
    groups: &[Vec<usize>],
    opts: &CovarianceOptions,
) -> Result<CovarianceRecovery> {
    if bins.is_empty() {
        return Err(Error::Argument("no frequency bins".into()));
    }
    let m = bins[0].steering.nrows();
    for (f, b) in bins.iter().enumerate() {
        if b.covariance.nrows() != m || b.covariance.ncols() != m || b.steering.nrows() != m {
            return Err(Error::Argument(format!("bin {f}: covariance and steering shapes disagree")));
        }
        if b.steering.ncols() != bins[0].steering.ncols() {
            return Err(Error::Argument(format!("bin {f}: steering column count differs")));
        }
        if b.covariance.iter().chain(b.steering.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Argument(format!("bin {f}: non-finite input")));
        }
    }
    check_groups(bins[0].steering.ncols(), groups)?;
    let c_norm = bins.iter().map(|b| b.covariance.norm_squared()).sum::<f64>().sqrt();
    let eps = opts.eps.unwrap_or(DEFAULT_EPS_SCALE * c_norm);
    if !(eps >= 0.0) {
        return Err(Error::Argument("eps must be nonnegative".into()));
    }

    let problem = Problem {
        cols: bins
            .iter()
            .map(|b| groups.iter().map(|g| group_columns(&b.steering, g)).collect())
            .collect(),
        shared: opts.shared,
    };
    let zero = problem.zeros();
    let done = |s: Blocks, residual, iterations, converged, trace| CovarianceRecovery {
        blocks: s,
        groups: groups.to_vec(),
        eps,
        residual,
        iterations,
        converged,
        objective_trace: trace,
    };
    if c_norm <= eps {
        return Ok(done(zero, c_norm, 0, true, vec![0.0]));
    }

    // unit-norm scaling keeps step sizes and tolerances well conditioned
    let scale = 1.0 / c_norm;
    let scaled: Vec<CMat> = bins.iter().map(|b| b.covariance.map(|v| v * scale)).collect();
    let eps_s = eps * scale;
    let l = problem.norm_sq();
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Degenerate("steering operator is zero".into()));
    }
    let step = 0.99 / l.sqrt();
    let (tau, sigma) = (step, step);

    let mut x = zero.clone();
    let mut x_bar = x.clone();
    let mut y: Vec<CMat> = scaled.iter().map(|c| CMat::zeros(c.nrows(), c.ncols())).collect();
    let mut best: Option<(f64, Blocks, f64)> = None;
    let mut trace = Vec::new();
    let mut prev_obj = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let feas_slack = 1e-6;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        // dual step on the indicator of the ball around C
        let ax = problem.forward(&x_bar);
        let v: Vec<CMat> = y.iter().zip(&ax).map(|(yi, a)| yi + a.map(|z| z * sigma)).collect();
        let w: Vec<CMat> = v.iter().map(|vi| vi.map(|z| z / sigma)).collect();
        let d: Vec<CMat> = w.iter().zip(&scaled).map(|(wi, c)| wi - c).collect();
        let dn = d.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let shrink = if dn > eps_s { eps_s / dn } else { 1.0 };
        y = v
            .iter()
            .zip(&scaled)
            .zip(&d)
            .map(|((vi, c), di)| vi - (c + di.map(|z| z * shrink)).map(|z| z * sigma))
            .collect();

        // primal step
        let aty = problem.adjoint(&y);
        let arg: Blocks = x
            .iter()
            .zip(&aty)
            .map(|(xb, ab)| xb.iter().zip(ab).map(|(a, b)| a - b * tau).collect())
            .collect();
        let x_new = prox(&arg, tau);
        x_bar = x_new
            .iter()
            .zip(&x)
            .map(|(nb, ob)| nb.iter().zip(ob).map(|(n, o)| n * 2.0 - o).collect())
            .collect();
        let dx = blocks_diff_norm(&x_new, &x);
        x = x_new;

        let res = residual_norm_scaled(&scaled, &problem.forward(&x));
        let obj = objective(&x);
        let feasible = res <= eps_s + feas_slack;
        if feasible && best.as_ref().map(|b| obj < b.0).unwrap_or(true) {
            best = Some((obj, x.clone(), res));
            trace.push(obj);
        }
        let rel = (prev_obj - obj).abs() / obj.max(1e-300);
        prev_obj = obj;
        if feasible && rel < opts.tol && dx <= opts.tol * blocks_norm(&x).max(1e-300) {
            converged = true;
            best = Some((obj, x.clone(), res));
            break;
        }
    }

    let (_, mut sol, mut res) = match best {
        Some(b) => b,
        None => {
            let r = residual_norm_scaled(&scaled, &problem.forward(&x));
            (objective(&x), x, r)
        }
    };
    if opts.polish {
        if let Some((p, r)) = polish(&problem, &scaled, &sol) {
            if r <= eps_s.max(res) {
                sol = p;
                res = r;
                if trace.last().map(|t| objective(&sol) <= *t).unwrap_or(true) {
                    trace.push(objective(&sol));
                }
            }
        }
    }
    let out: Blocks = sol
        .into_iter()
        .map(|bin| bin.into_iter().map(|b| b * c_norm).collect())
        .collect();
    let trace = trace.into_iter().map(|t| t * c_norm).collect();
    let residual = residual_norm(bins, &problem.forward(&out));
    let _ = res;
    Ok(done(out, residual, iterations, converged, trace))
}

fn residual_norm_scaled(c: &[CMat], model: &[CMat]) -> f64 {
    c.iter().zip(model).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt()
}

/// Least squares over the upper triangles of the energy-gap active groups, bin
/// by bin (or jointly when the blocks are shared), constrained to be nonnegative.
fn polish(problem: &Problem, c: &[CMat], x: &Blocks) -> Option<(Blocks, f64)> {
    let g = x.first().map(|b| b.len()).unwrap_or(0);
    let norms: Vec<f64> = (0..g)
        .map(|i| x.iter().map(|bin| bin[i].norm_squared()).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return None;
    }
    let active = top_groups(&norms, active_group_count(&norms));
    let sizes: Vec<usize> = problem.cols[0].iter().map(|g| g.ncols()).collect();
    let mut vars: Vec<(usize, usize, usize)> = Vec::new();
    for &i in &active {
        for r in 0..sizes[i] {
            for s in r..sizes[i] {
                vars.push((i, r, s));
            }
        }
    }
    let bin_sets: Vec<Vec<usize>> = if problem.shared {
        vec![(0..problem.cols.len()).collect()]
    } else {
        (0..problem.cols.len()).map(|f| vec![f]).collect()
    };
    let mut out = problem.zeros();
    for (v, fs) in bin_sets.iter().enumerate() {
        let rows: usize = fs.iter().map(|&f| 2 * c[f].nrows().pow(2)).sum();
        if vars.len() > rows {
            return None;
        }
        let mut a = DMatrix::zeros(rows, vars.len());
        let mut b = DVector::zeros(rows);
        let mut off = 0;
        for &f in fs {
            let cols = &problem.cols[f];
            let m = c[f].nrows();
            for (k, &(i, r, s)) in vars.iter().enumerate() {
                let og = &cols[i];
                for p in 0..m {
                    for q in 0..m {
                        let mut z = og[(p, r)] * og[(q, s)].conj();
                        if r != s {
                            z += og[(p, s)] * og[(q, r)].conj();
                        }
                        let row = off + p + q * m;
                        a[(row, k)] = z.re;
                        a[(m * m + row, k)] = z.im;
                    }
                }
            }
            for (k, z) in c[f].iter().enumerate() {
                b[off + k] = z.re;
                b[off + m * m + k] = z.im;
            }
            off += 2 * m * m;
        }
        let sol = nnls(&a, &b);
        for (k, &(i, r, s)) in vars.iter().enumerate() {
            let val = sol[k];
            out[v][i][(r, s)] = val;
            out[v][i][(s, r)] = val;
        }
    }
    let r = residual_norm_scaled(c, &problem.forward(&out));
    Some((out, r))
}

/// Number of active groups by the largest ratio gap in the sorted group norms.
pub fn active_group_count(norms: &[f64]) -> usize {
    let mut sorted: Vec<f64> = norms.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    match sorted.len() {
        0 => 0,
        1 => 1,
        n => {
            let mut best = (0.0, n);
            for k in 0..n - 1 {
                let ratio = sorted[k] / sorted[k + 1];
                if ratio > best.0 {
                    best = (ratio, k + 1);
                }
            }
            best.1
        }
    }
}

/// Indices of the `n` groups with the largest norms, descending, ties to lowest index.
pub fn top_groups(norms: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..norms.len()).collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Source energy and per-image absorption factors from one recovered block.
///
/// Energy is the diagonal entry of the direct path, whose factor is 1 by
/// construction; `P = sqrt(diag(Σ) / energy)`.
pub fn extract_absorption(sigma: &DMatrix<f64>, direct_index: usize) -> Result<(f64, Vec<f64>)> {
    if sigma.nrows() != sigma.ncols() || direct_index >= sigma.nrows() {
        return Err(Error::Argument("block must be square and contain the direct index".into()));
    }
    let energy = sigma[(direct_index, direct_index)];
    if !(energy > 0.0) {
        return Err(Error::Degenerate(format!("direct-path diagonal is {energy}")));
    }
    let p = (0..sigma.nrows()).map(|k| (sigma[(k, k)].max(0.0) / energy).sqrt()).collect();
    Ok((energy, p))
}

/// Per-surface reflection estimates and source energies, optionally per bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProfile {
    /// Bin centre frequencies; one coefficient row per bin.
    pub bins_hz: Vec<f64>,
    /// `coefficients[f][s]` for surface `s` in [`Surface::ALL`] order.
    pub coefficients: Vec<[f64; 6]>,
    /// Surfaces never observed, per bin.
    pub unobserved: Vec<Vec<Surface>>,
    /// Active groups (grid cells).
    pub groups: Vec<usize>,
    /// `energies[f][k]` for active group `groups[k]`.
    pub energies: Vec<Vec<f64>>,
}

impl AbsorptionProfile {
    /// Coefficients averaged across bins.
    pub fn broadband(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        if self.coefficients.is_empty() {
            return out;
        }
        for row in &self.coefficients {
            for s in 0..6 {
                out[s] += row[s];
            }
        }
        out.map(|v| v / self.coefficients.len() as f64)
    }
}

/// Mean per-surface reflection coefficients of the active groups from their absorption factors.
///
/// `counts[k]` gives the reflection counts of every member of `group`.
pub fn absorption_from_image_factors(factors: &[(Vec<f64>, Vec<[u32; 6]>)]) -> ([f64; 6], Vec<Surface>) {
    let rows: Vec<([u32; 6], f64)> = factors
        .iter()
        .flat_map(|(p, counts)| counts.iter().copied().zip(p.iter().copied()))
        .filter(|(c, _)| c.iter().any(|v| *v > 0))
        .collect();
    fit_log_gains(&rows)
}

/// Build an [`AbsorptionProfile`] from a recovery, taking `n_active` groups
/// (or the energy-gap count when `None`).
///
/// `reflection_counts[k]` are the counts of steering column `k`; the first
/// member of each group is its direct path.
pub fn absorption_profile(
    recovery: &CovarianceRecovery,
    bins_hz: &[f64],
    reflection_counts: &[[u32; 6]],
    n_active: Option<usize>,
    per_bin: bool,
) -> Result<AbsorptionProfile> {
    let norms = recovery.group_norms();
    let n = n_active.unwrap_or_else(|| active_group_count(&norms));
    if n == 0 {
        return Err(Error::Estimation("no active source group".into()));
    }
    let active = top_groups(&norms, n);
    let mut coefficients = Vec::new();
    let mut unobserved = Vec::new();
    let mut energies = Vec::new();
    let mut all_factors = Vec::new();
    for bin in &recovery.blocks {
        let mut factors = Vec::new();
        let mut e = Vec::new();
        for &g in &active {
            let group = &recovery.groups[g];
            let counts: Vec<[u32; 6]> = group.iter().map(|&k| reflection_counts[k]).collect();
            match extract_absorption(&bin[g], 0) {
                Ok((energy, p)) => {
                    e.push(energy);
                    factors.push((p, counts));
                }
                Err(Error::Degenerate(_)) => e.push(0.0),
                Err(other) => return Err(other),
            }
        }
        energies.push(e);
        if per_bin {
            let (c, u) = absorption_from_image_factors(&factors);
            coefficients.push(c);
            unobserved.push(u);
        }
        all_factors.extend(factors);
    }
    let bins_hz = if per_bin {
        bins_hz.to_vec()
    } else {
        let (c, u) = absorption_from_image_factors(&all_factors);
        coefficients.push(c);
        unobserved.push(u);
        vec![bins_hz.iter().sum::<f64>() / bins_hz.len().max(1) as f64]
    };
    Ok(AbsorptionProfile {
        bins_hz,
        coefficients,
        unobserved,
        groups: active,
        energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_c(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn covariance_is_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_c(&mut rng, 4, 16);
        let c = observation_covariance(&x).unwrap();
        assert!((&c - c.adjoint()).norm() <= 1e-12);
        let single = random_c(&mut rng, 3, 1);
        let c1 = observation_covariance(&single).unwrap();
        assert_eq!(c1.rank(1e-9 * c1.norm()), 1);
        assert!(observation_covariance(&CMat::zeros(3, 0)).is_err());
    }

    #[test]
    fn rank_one_kronecker_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = random_c(&mut rng, 3, 1);
        let sys = build_kronecker_system(&o, &[vec![0]]).unwrap();
        let sigma = 2.5;
        let lhs = &sys.blocks[0] * C64::from(sigma);
        let rhs = (&o * o.adjoint()) * C64::from(sigma);
        assert!((lhs - CMat::from_column_slice(9, 1, rhs.as_slice())).norm() < 1e-12);
    }

    #[test]
    fn kronecker_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = random_c(&mut rng, 2, 4);
        let sys = build_kronecker_system(&o, &[vec![0, 1], vec![2, 3]]).unwrap();
        let b = sys.stacked();
        assert_eq!(b.shape(), (4, 8));
        for (i, g) in [[0, 1], [2, 3]].iter().enumerate() {
            for p in 0..2 {
                for q in 0..2 {
                    for a in 0..2 {
                        for c in 0..2 {
                            let expect = o[(p, g[a])].conj() * o[(q, g[c])];
                            assert!((b[(p * 2 + q, i * 4 + a * 2 + c)] - expect).norm() < 1e-14);
                        }
                    }
                }
            }
        }
        assert!(matches!(
            build_kronecker_system(&o, &[vec![0, 1], vec![1, 2]]),
            Err(Error::Ambiguity(_))
        ));
    }

    #[test]
    fn kronecker_matches_forward_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = random_c(&mut rng, 4, 5);
        let groups = vec![vec![0, 1, 2], vec![3, 4]];
        let sys = build_kronecker_system(&o, &groups).unwrap();
        let sigmas: Vec<CMat> = groups
            .iter()
            .map(|g| {
                let p = random_c(&mut rng, g.len(), 1);
                &p * p.adjoint()
            })
            .collect();
        let mut c = CMat::zeros(4, 4);
        for (g, s) in groups.iter().zip(&sigmas) {
            let og = group_columns(&o, g);
            c += &og * s * og.adjoint();
        }
        let cv = CVec::from_column_slice(c.as_slice());
        assert!((cv - sys.apply(&sigmas)).norm() <= 1e-10);
    }

    fn planted(rng: &mut ChaCha8Rng, m: usize, groups: &[Vec<usize>], active: usize) -> (CMat, CMat, DMatrix<f64>) {
        let n_cols = groups.iter().map(|g| g.len()).sum();
        let o = random_c(rng, m, n_cols);
        let g = &groups[active];
        let mut p = DVector::from_fn(g.len(), |_, _| 0.2 + 0.6 * rng.random::<f64>());
        p[0] = 1.0;
        let sigma = &p * p.transpose() * 3.0;
        let og = group_columns(&o, g);
        let c = &og * sigma.map(C64::from) * og.adjoint();
        (o, c, sigma)
    }

    #[test]
    fn recovers_single_active_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let groups: Vec<Vec<usize>> = (0..6).map(|i| vec![3 * i, 3 * i + 1, 3 * i + 2]).collect();
        let (o, c, sigma) = planted(&mut rng, 6, &groups, 2);
        let rec = block_sparse_covariance_recovery(&c, &o, &groups, &CovarianceOptions::default()).unwrap();
        let got = &rec.blocks[0][2];
        assert!((got - &sigma).norm() <= 1e-3 * sigma.norm(), "{}", (got - &sigma).norm());
        for (i, b) in rec.blocks[0].iter().enumerate() {
            if i != 2 {
                assert!(b.norm() <= 1e-6 * got.norm(), "group {i}: {}", b.norm());
            }
        }
        assert_eq!(active_group_count(&rec.group_norms()), 1);
    }

    #[test]
    fn zero_covariance_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let o = random_c(&mut rng, 3, 4);
        let rec = block_sparse_covariance_recovery(&CMat::zeros(3, 3), &o, &[vec![0, 1], vec![2, 3]], &Default::default())
            .unwrap();
        assert!(rec.blocks[0].iter().all(|b| b.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn trace_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let groups: Vec<Vec<usize>> = (0..4).map(|i| vec![2 * i, 2 * i + 1]).collect();
        let (o, c, _) = planted(&mut rng, 4, &groups, 1);
        let opts = CovarianceOptions {
            max_iter: 500,
            polish: false,
            ..Default::default()
        };
        let rec = block_sparse_covariance_recovery(&c, &o, &groups, &opts).unwrap();
        for w in rec.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn extract_rank_one_block() {
        let p = DVector::from_vec(vec![1.0, 0.4, 0.7]);
        let sigma = &p * p.transpose() * 2.0;
        let (e, got) = extract_absorption(&sigma, 0).unwrap();
        assert!((e - 2.0).abs() < 1e-12);
        for (a, b) in got.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut bad = sigma.clone();
        bad[(0, 0)] = 0.0;
        assert!(matches!(extract_absorption(&bad, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn extract_perturbed_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = DVector::from_vec(vec![1.0, 0.5, 0.3, 0.8]);
        // second component carries 10% of the energy of each entry of p
        let q = DVector::from_fn(4, |k, _| p[k] * (2.0 * rng.random::<f64>() - 1.0));
        let sigma = &p * p.transpose() + &q * q.transpose() * 0.1;
        let (_, got) = extract_absorption(&sigma, 0).unwrap();
        for (a, b) in got.iter().zip(p.iter()) {
            assert!((a - b).abs() <= 0.15 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn energy_gap_count() {
        assert_eq!(active_group_count(&[5.0, 0.01, 4.0, 0.02, 6.0]), 3);
        assert_eq!(active_group_count(&[0.0, 0.0]), 0);
        assert_eq!(active_group_count(&[0.0, 2.0]), 1);
    }

    #[test]
    fn factors_to_coefficients() {
        let counts = vec![[0u32; 6], [1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [2, 1, 0, 0, 0, 0]];
        let p = vec![1.0, 0.5, 0.25, 0.0625];
        let (c, unobs) = absorption_from_image_factors(&[(p, counts)]);
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.25).abs() < 1e-12);
        assert_eq!(unobs.len(), 4);
    }
}
