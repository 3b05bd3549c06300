//! Spectral structure models and the model-approximation operator.
//!
//! A structure partitions the frequency bins into independent bands. Within a
//! band, each grid cell forms one group spanning the band's bins and all
//! frames; model approximation keeps the `n_active` most energetic cells of
//! every band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, ZERO};

/// Default block length for block sparsity.
pub const DEFAULT_BLOCK: usize = 4;
/// Default fundamental-frequency search range in Hz.
pub const F0_RANGE: (f64, f64) = (150.0, 400.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureKind {
    Plain,
    Block { b: usize },
    Harmonic { f0_grid: Vec<f64>, harmonics: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureModel {
    kind: StructureKind,
    n_bins: usize,
    /// Candidate band layouts; one for plain/block, one per f0 for harmonic.
    layouts: Vec<Vec<Vec<usize>>>,
    /// For harmonic layouts, whether the first band is the harmonic one.
    harmonic_first: Vec<bool>,
}

impl StructureModel {
    pub fn plain(n_bins: usize) -> Self {
        Self {
            kind: StructureKind::Plain,
            n_bins,
            layouts: vec![(0..n_bins).map(|f| vec![f]).collect()],
            harmonic_first: vec![false],
        }
    }

    /// Contiguous runs of `b` bins; the last run may be shorter.
    pub fn block(n_bins: usize, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::Argument("block size must be at least 1".into()));
        }
        let bands = (0..n_bins.div_ceil(b))
            .map(|k| (k * b..((k + 1) * b).min(n_bins)).collect())
            .collect();
        Ok(Self {
            kind: StructureKind::Block { b },
            n_bins,
            layouts: vec![bands],
            harmonic_first: vec![false],
        })
    }

    /// Harmonic bands: for each candidate f0 the bins nearest `k · f0`,
    /// `k = 1..=harmonics`, form one band and every other bin is its own band.
    pub fn harmonic(freqs_hz: &[f64], f0_grid: Vec<f64>, harmonics: usize) -> Result<Self> {
        if f0_grid.is_empty() || harmonics == 0 {
            return Err(Error::Argument("harmonic model needs f0 candidates and at least one harmonic".into()));
        }
        if f0_grid.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Argument("fundamental frequencies must be positive".into()));
        }
        let n_bins = freqs_hz.len();
        let mut layouts = Vec::with_capacity(f0_grid.len());
        let mut harmonic_first = Vec::with_capacity(f0_grid.len());
        for &f0 in &f0_grid {
            let (layout, has_band) = harmonic_layout(freqs_hz, f0, harmonics);
            layouts.push(layout);
            harmonic_first.push(has_band);
        }
        Ok(Self {
            kind: StructureKind::Harmonic { f0_grid, harmonics },
            n_bins,
            layouts,
            harmonic_first,
        })
    }

    /// Harmonic model over the default f0 range with 1 Hz steps.
    pub fn harmonic_default(freqs_hz: &[f64], harmonics: usize) -> Result<Self> {
        let grid = (F0_RANGE.0 as usize..=F0_RANGE.1 as usize).map(|f| f as f64).collect();
        Self::harmonic(freqs_hz, grid, harmonics)
    }

    /// Parses `plain`, `block`, `block:b` or `harmonic[:K]`.
    pub fn parse(spec: &str, freqs_hz: &[f64]) -> Result<Self> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let num = |a: Option<&str>, default: usize| -> Result<usize> {
            match a {
                None => Ok(default),
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::Argument(format!("bad structure parameter '{s}'"))),
            }
        };
        match name {
            "plain" => Ok(Self::plain(freqs_hz.len())),
            "block" => Self::block(freqs_hz.len(), num(arg, DEFAULT_BLOCK)?),
            "harmonic" => Self::harmonic_default(freqs_hz, num(arg, 8)?),
            other => Err(Error::Argument(format!("unknown structure '{other}'"))),
        }
    }

    pub fn kind(&self) -> &StructureKind {
        &self.kind
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn layouts(&self) -> &[Vec<Vec<usize>>] {
        &self.layouts
    }

    /// The band layout used when no data-driven choice is made (first candidate).
    pub fn bands(&self) -> &[Vec<usize>] {
        &self.layouts[0]
    }

    /// Candidate layout whose harmonic band holds the most energy in its
    /// `n_active` strongest cells; ties go to the lowest candidate.
    pub fn best_layout(&self, coeffs: &[CMat], n_active: usize) -> usize {
        if self.layouts.len() == 1 {
            return 0;
        }
        let energies = bin_cell_energies(coeffs);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, layout) in self.layouts.iter().enumerate() {
            let kept = if self.harmonic_first[i] {
                top_cells(&band_energies(&energies, &layout[0]), n_active).1
            } else {
                0.0
            };
            if kept > best.1 {
                best = (i, kept);
            }
        }
        best.0
    }
}

fn harmonic_layout(freqs_hz: &[f64], f0: f64, harmonics: usize) -> (Vec<Vec<usize>>, bool) {
    let n = freqs_hz.len();
    if n == 0 {
        return (Vec::new(), false);
    }
    let spacing = if n > 1 {
        (freqs_hz[n - 1] - freqs_hz[0]) / (n - 1) as f64
    } else {
        f64::INFINITY
    };
    let mut band = Vec::new();
    for k in 1..=harmonics {
        let target = k as f64 * f0;
        if target > freqs_hz[n - 1] + spacing / 2.0 {
            break;
        }
        let idx = nearest(freqs_hz, target);
        if (freqs_hz[idx] - target).abs() <= spacing / 2.0 + 1e-9 && !band.contains(&idx) {
            band.push(idx);
        }
    }
    band.sort_unstable();
    let has_band = !band.is_empty();
    let mut layout = Vec::with_capacity(n);
    if has_band {
        layout.push(band.clone());
    }
    for f in 0..n {
        if !band.contains(&f) {
            layout.push(vec![f]);
        }
    }
    (layout, has_band)
}

fn nearest(freqs: &[f64], target: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, f) in freqs.iter().enumerate() {
        let d = (f - target).abs();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// `energies[f][g]`: energy of cell `g` in bin `f` summed over frames.
pub fn bin_cell_energies(coeffs: &[CMat]) -> Vec<Vec<f64>> {
    coeffs
        .iter()
        .map(|m| m.row_iter().map(|r| r.iter().map(|v| v.norm_sqr()).sum()).collect())
        .collect()
}

fn band_energies(energies: &[Vec<f64>], band: &[usize]) -> Vec<f64> {
    let g = energies.first().map(|e| e.len()).unwrap_or(0);
    let mut out = vec![0.0; g];
    for &f in band {
        for (o, e) in out.iter_mut().zip(&energies[f]) {
            *o += e;
        }
    }
    out
}

/// Indices of the `n` largest entries (ties to lowest index) and their summed value.
pub fn top_cells(energy: &[f64], n: usize) -> (Vec<usize>, f64) {
    let mut idx: Vec<usize> = (0..energy.len()).collect();
    idx.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    idx.truncate(n);
    let kept = idx.iter().map(|&i| energy[i]).sum();
    idx.sort_unstable();
    (idx, kept)
}

/// Keeps the `n_active` most energetic cells in every band of `layout`, zeroing the rest.
pub fn model_approx_with(coeffs: &[CMat], layout: &[Vec<usize>], n_active: usize) -> Vec<CMat> {
    let energies = bin_cell_energies(coeffs);
    let mut out: Vec<CMat> = coeffs.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect();
    for band in layout {
        let (keep, _) = top_cells(&band_energies(&energies, band), n_active);
        for &f in band {
            for &g in &keep {
                out[f].set_row(g, &coeffs[f].row(g));
            }
        }
    }
    out
}

/// Structured hard thresholding of per-bin coefficient matrices (`cells × frames`).
pub fn model_approx_bins(coeffs: &[CMat], structure: &StructureModel, n_active: usize) -> Result<Vec<CMat>> {
    if n_active == 0 {
        return Err(Error::Argument("n_active must be at least 1".into()));
    }
    if coeffs.len() != structure.n_bins() {
        return Err(Error::Argument(format!(
            "structure covers {} bins but coefficients have {}",
            structure.n_bins(),
            coeffs.len()
        )));
    }
    let layout = structure.best_layout(coeffs, n_active);
    Ok(model_approx_with(coeffs, &structure.layouts()[layout], n_active))
}

/// Model approximation on a stacked vector with index `g · F + f`.
pub fn model_approx(v: &CVec, structure: &StructureModel, n_active: usize) -> Result<CVec> {
    let f = structure.n_bins();
    if f == 0 || v.len() % f != 0 {
        return Err(Error::Argument(format!(
            "vector length {} is not a multiple of {} bins",
            v.len(),
            f
        )));
    }
    let g = v.len() / f;
    let coeffs = unstack_cells(v, g, f);
    let out = model_approx_bins(&coeffs, structure, n_active)?;
    Ok(stack_cells(&out))
}

/// Splits a `g · F + f` stacked vector into per-bin single-frame columns.
pub fn unstack_cells(v: &CVec, n_cells: usize, n_bins: usize) -> Vec<CMat> {
    (0..n_bins)
        .map(|f| CMat::from_fn(n_cells, 1, |g, _| v[g * n_bins + f]))
        .collect()
}

/// Inverse of [`unstack_cells`] for single-frame coefficients.
pub fn stack_cells(coeffs: &[CMat]) -> CVec {
    let f = coeffs.len();
    let g = coeffs.first().map(|m| m.nrows()).unwrap_or(0);
    let mut v = CVec::from_element(g * f, ZERO);
    for (k, m) in coeffs.iter().enumerate() {
        for i in 0..g {
            v[i * f + k] = m[(i, 0)];
        }
    }
    v
}
