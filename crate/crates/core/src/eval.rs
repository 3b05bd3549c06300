//! Separation, localization and sparsity metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_real, CMat};
use crate::scene::Point;
use crate::stft::SpectroTemporalTensor;

pub const SIR_CAP_DB: f64 = 80.0;

fn project(basis: &[&[f64]], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let a = DMatrix::from_fn(n, basis.len(), |r, c| basis[c][r]);
    let coef = lstsq_real(&a, &DVector::from_column_slice(v));
    (a * coef).as_slice().to_vec()
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Signal-to-interference ratio in dB by orthogonal projections.
///
/// The target component is the projection of `estimate` onto `target`; the
/// interference is the remainder of its projection onto the span of all
/// sources. Clamped to ±80 dB.
pub fn sir(estimate: &[f64], target: &[f64], interferers: &[&[f64]]) -> Result<f64> {
    let n = estimate.len();
    if target.len() != n || interferers.iter().any(|i| i.len() != n) {
        return Err(Error::Argument("signals must have equal lengths".into()));
    }
    if energy(target) == 0.0 {
        return Err(Error::Argument("target is zero".into()));
    }
    let t_part = project(&[target], estimate);
    let mut all: Vec<&[f64]> = vec![target];
    all.extend_from_slice(interferers);
    let all_part = project(&all, estimate);
    let interf: Vec<f64> = all_part.iter().zip(&t_part).map(|(a, b)| a - b).collect();
    let (et, ei) = (energy(&t_part), energy(&interf));
    let scale = energy(estimate).max(f64::MIN_POSITIVE);
    if ei <= 1e-24 * scale {
        return Ok(SIR_CAP_DB);
    }
    if et <= 1e-24 * scale {
        return Ok(-SIR_CAP_DB);
    }
    Ok((10.0 * (et / ei).log10()).clamp(-SIR_CAP_DB, SIR_CAP_DB))
}

/// `‖diag(X X^*)‖₂ / ‖X X^*‖_F` for an `N × frames` source matrix.
pub fn orthogonality_ratio(x: &CMat) -> Result<f64> {
    let g = x * x.adjoint();
    let f = g.norm();
    if f == 0.0 {
        return Err(Error::Undefined("orthogonality ratio of a zero matrix".into()));
    }
    let d = g.diagonal().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok(d / f)
}

/// Per-bin orthogonality ratio of the sources in `tensor` (one channel per source).
/// Bins where every source is silent give `None`.
pub fn orthogonality_curve(tensor: &SpectroTemporalTensor) -> Vec<Option<f64>> {
    (0..tensor.n_bins())
        .map(|k| orthogonality_ratio(&tensor.bin_matrix(k)).ok())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges over [0, 1] of the max-normalized magnitude.
    pub edges: Vec<f64>,
    /// Fraction of samples per bin; sums to 1.
    pub mass: Vec<f64>,
    /// Largest product magnitude, used for normalization.
    pub max_magnitude: f64,
}

impl Histogram {
    pub fn lowest_mass(&self) -> f64 {
        self.mass[0]
    }
}

/// Histogram of `|S1 ∘ S2|` over all channels, bins and frames, normalized by its maximum.
pub fn product_histogram(s1: &SpectroTemporalTensor, s2: &SpectroTemporalTensor, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::Argument("histogram needs at least one bin".into()));
    }
    if s1.n_channels() != s2.n_channels() || s1.n_bins() != s2.n_bins() || s1.n_frames() != s2.n_frames() {
        return Err(Error::Argument("tensors differ in shape".into()));
    }
    let mags: Vec<f64> = s1
        .channels()
        .iter()
        .zip(s2.channels())
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x * y).norm()).collect::<Vec<_>>())
        .collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    let mut counts = vec![0usize; n_bins];
    for m in &mags {
        let u = if max > 0.0 { m / max } else { 0.0 };
        let k = ((u * n_bins as f64) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let total = mags.len().max(1) as f64;
    Ok(Histogram {
        edges: (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect(),
        mass: counts.iter().map(|&c| c as f64 / total).collect(),
        max_magnitude: max,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub hit_rate: f64,
    /// Mean distance over matched pairs; `None` without any hit.
    pub mean_error: Option<f64>,
    /// `(truth index, estimate index, distance)` of every match.
    pub matches: Vec<(usize, usize, f64)>,
}

/// Greedy nearest-first matching of estimated to true positions within `radius`.
pub fn support_metrics(estimated: &[Point], truth: &[Point], radius: f64) -> Result<SupportMetrics> {
    if truth.is_empty() {
        return Err(Error::Argument("truth set is empty".into()));
    }
    let mut pairs: Vec<(f64, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(i, t)| estimated.iter().enumerate().map(move |(j, e)| ((t - e).norm(), i, j)))
        .filter(|(d, _, _)| *d <= radius * (1.0 + 1e-9))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimated.len()];
    let mut matches = Vec::new();
    for (d, i, j) in pairs {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            matches.push((i, j, d));
        }
    }
    matches.sort_by_key(|m| m.0);
    let hit_rate = matches.len() as f64 / truth.len() as f64;
    let mean_error = if matches.is_empty() {
        None
    } else {
        Some(matches.iter().map(|m| m.2).sum::<f64>() / matches.len() as f64)
    };
    Ok(SupportMetrics {
        hit_rate,
        mean_error,
        matches,
    })
}

/// Root-mean-square difference over the given per-surface values.
pub fn absorption_rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::Argument("coefficient vectors must be nonempty and of equal length".into()));
    }
    Ok((estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::stft::{StftConfig, Window};

    #[test]
    fn sir_caps() {
        let t = [1.0, 0.0, 2.0, -1.0];
        let i = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(sir(&t, &t, &[&i]).unwrap(), 80.0);
        assert_eq!(sir(&i, &t, &[&i]).unwrap(), -80.0);
        assert!(sir(&t, &[0.0; 4], &[&i]).is_err());
    }

    #[test]
    fn sir_twenty_db() {
        let t = [1.0, 2.0, 0.5, -1.0, 0.3];
        let raw = [0.2, -1.0, 1.5, 0.4, 2.0];
        let dot: f64 = t.iter().zip(&raw).map(|(a, b)| a * b).sum();
        let tt: f64 = t.iter().map(|a| a * a).sum();
        let mut orth: Vec<f64> = raw.iter().zip(&t).map(|(r, a)| r - dot / tt * a).collect();
        let s = (tt / orth.iter().map(|v| v * v).sum::<f64>()).sqrt();
        orth.iter_mut().for_each(|v| *v *= s);
        let est: Vec<f64> = t.iter().zip(&orth).map(|(a, b)| a + 0.1 * b).collect();
        let v = sir(&est, &t, &[&raw]).unwrap();
        assert!((v - 20.0).abs() <= 0.1, "{v}");
        let scaled: Vec<f64> = est.iter().map(|v| 3.7 * v).collect();
        assert!((sir(&scaled, &t, &[&raw]).unwrap() - v).abs() < 1e-9);
    }

    #[test]
    fn orthogonality_examples() {
        let orth = CMat::from_row_slice(2, 2, &[C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from(3.0)]);
        assert!((orthogonality_ratio(&orth).unwrap() - 1.0).abs() < 1e-15);
        let ones = CMat::from_element(2, 2, C64::from(1.0));
        assert!((orthogonality_ratio(&ones).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(orthogonality_ratio(&CMat::zeros(2, 2)), Err(Error::Undefined(_))));
    }

    fn tensor(vals: Vec<C64>) -> SpectroTemporalTensor {
        let cfg = StftConfig::new(4, 2, 4, Window::Hann, 8000.0).unwrap();
        let frames = cfg.frame_count(2);
        let m = CMat::from_fn(cfg.n_bins(), frames, |k, t| vals[(k * frames + t) % vals.len()]);
        SpectroTemporalTensor::new(vec![m], cfg, 2).unwrap()
    }

    #[test]
    fn histogram_limits() {
        let a = tensor(vec![C64::from(1.0), C64::from(0.0)]);
        let b = tensor(vec![C64::from(0.0), C64::from(1.0)]);
        let h = product_histogram(&a, &b, 10).unwrap();
        assert_eq!(h.lowest_mass(), 1.0);
        let u = tensor(vec![C64::new(0.6, 0.8)]);
        let h = product_histogram(&u, &u, 10).unwrap();
        assert_eq!(h.mass[9], 1.0);
        assert!((h.max_magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_matching() {
        let truth = vec![Point::new(1.0, 1.0, 1.0), Point::new(2.0, 2.0, 1.0)];
        let same = support_metrics(&truth, &truth, 0.25).unwrap();
        assert_eq!(same.hit_rate, 1.0);
        assert_eq!(same.mean_error, Some(0.0));
        let far = support_metrics(&[Point::new(5.0, 5.0, 1.0)], &truth, 0.25).unwrap();
        assert_eq!(far.hit_rate, 0.0);
        let off = support_metrics(&[Point::new(1.25, 1.0, 1.0)], &truth[..1], 0.25).unwrap();
        assert_eq!(off.hit_rate, 1.0);
        assert!((off.mean_error.unwrap() - 0.25).abs() < 1e-12);
    }
}
