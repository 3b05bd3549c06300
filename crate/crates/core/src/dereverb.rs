//! Joint separation and deconvolution by per-bin inverse filtering, plus a
//! coherence-based post-filter for residual reverberation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, CMat, C64};
use crate::stft::SpectroTemporalTensor;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_RTOL: f64 = 1e-10;
/// Ridge weight relative to `‖H‖²` used for rank-deficient bins.
const RIDGE: f64 = 1e-10;
/// Forgetting factor of the recursive spectral averages.
pub const ZELINSKI_ALPHA: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinDiagnostics {
    pub condition: f64,
    /// Set when `rank(H) < N` and the ridge solve was used.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseFilterResult {
    /// Per-bin `N × frames` source estimates.
    pub sources: Vec<CMat>,
    pub diagnostics: Vec<BinDiagnostics>,
}

/// `Ŝ = (H^* H)^{-1} H^* X` per bin by a rank-revealing least-squares solve.
pub fn inverse_filter(h: &[CMat], x: &[CMat]) -> Result<InverseFilterResult> {
    if h.len() != x.len() {
        return Err(Error::Argument(format!("{} channel bins but {} observation bins", h.len(), x.len())));
    }
    for (f, (hf, xf)) in h.iter().zip(x).enumerate() {
        if hf.nrows() != xf.nrows() {
            return Err(Error::Argument(format!("bin {f}: channel has {} rows, observation {}", hf.nrows(), xf.nrows())));
        }
        if hf.ncols() > hf.nrows() {
            return Err(Error::Argument(format!(
                "bin {f}: {} sources exceed {} microphones",
                hf.ncols(),
                hf.nrows()
            )));
        }
        if hf.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Argument(format!("bin {f}: non-finite channel")));
        }
    }
    let solved: Vec<(CMat, BinDiagnostics)> = h
        .par_iter()
        .zip(x.par_iter())
        .map(|(hf, xf)| {
            let sol = lstsq(hf, xf, RANK_RTOL, RIDGE);
            (
                sol.x,
                BinDiagnostics {
                    condition: sol.condition,
                    degenerate: sol.regularized,
                },
            )
        })
        .collect();
    let (sources, diagnostics) = solved.into_iter().unzip();
    Ok(InverseFilterResult { sources, diagnostics })
}

/// [`inverse_filter`] on a multichannel STFT; returns one channel per source.
pub fn inverse_filter_tensor(h: &[CMat], x: &SpectroTemporalTensor) -> Result<(SpectroTemporalTensor, Vec<BinDiagnostics>)> {
    let obs: Vec<CMat> = (0..x.n_bins()).map(|k| x.bin_matrix(k)).collect();
    let res = inverse_filter(h, &obs)?;
    let out = SpectroTemporalTensor::from_bin_matrices(&res.sources, *x.config(), x.signal_len())?;
    Ok((out, res.diagnostics))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostFilterOutput {
    pub output: SpectroTemporalTensor,
    /// `bins × frames` gains in [0, 1].
    pub gains: nalgebra::DMatrix<f64>,
}

/// Zelinski post-filter applied to the channel average.
///
/// Auto- and cross-spectra are averaged recursively over frames. The gain is
/// `max(0, mean_{i<j} Re Φ_ij) / mean_i Φ_ii`, clamped to [0, 1]. With
/// `aligned = false` the cross-spectrum magnitude is used instead of its real part.
pub fn zelinski_postfilter(x: &SpectroTemporalTensor, aligned: bool) -> Result<PostFilterOutput> {
    let m = x.n_channels();
    if m == 0 {
        return Err(Error::Argument("tensor has no channels".into()));
    }
    let (bins, frames) = (x.n_bins(), x.n_frames());
    let mut avg = CMat::zeros(bins, frames);
    for ch in x.channels() {
        avg += ch;
    }
    avg /= C64::from(m as f64);
    if m == 1 {
        log::warn!("post-filter needs at least two channels; passing input through");
        let output = SpectroTemporalTensor::new(vec![avg], *x.config(), x.signal_len())?;
        return Ok(PostFilterOutput {
            output,
            gains: nalgebra::DMatrix::from_element(bins, frames, 1.0),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let rows: Vec<Vec<f64>> = (0..bins)
        .into_par_iter()
        .map(|k| {
            let mut auto = vec![0.0; m];
            let mut cross = vec![C64::new(0.0, 0.0); pairs.len()];
            let mut out = Vec::with_capacity(frames);
            for t in 0..frames {
                let a = if t == 0 { 0.0 } else { ZELINSKI_ALPHA };
                for (i, v) in auto.iter_mut().enumerate() {
                    *v = a * *v + (1.0 - a) * x.get(i, k, t).norm_sqr();
                }
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    cross[p] = cross[p] * a + x.get(i, k, t) * x.get(j, k, t).conj() * (1.0 - a);
                }
                let num = if aligned {
                    cross.iter().map(|c| c.re).sum::<f64>()
                } else {
                    cross.iter().map(|c| c.norm()).sum::<f64>()
                } / pairs.len() as f64;
                let den = auto.iter().sum::<f64>() / m as f64;
                let w = if den > 0.0 { (num.max(0.0) / den).clamp(0.0, 1.0) } else { 0.0 };
                out.push(w);
            }
            out
        })
        .collect();
    let gains = nalgebra::DMatrix::from_fn(bins, frames, |k, t| rows[k][t]);
    let filtered = CMat::from_fn(bins, frames, |k, t| avg[(k, t)] * gains[(k, t)]);
    let output = SpectroTemporalTensor::new(vec![filtered], *x.config(), x.signal_len())?;
    Ok(PostFilterOutput { output, gains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{analyze_multi, StftConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rand_c(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn identity_channel_returns_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_c(&mut rng, 3, 5);
        let res = inverse_filter(&[CMat::identity(3, 3)], &[x.clone()]).unwrap();
        assert!((&res.sources[0] - x).norm() < 1e-12);
        assert!(!res.diagnostics[0].degenerate);
    }

    #[test]
    fn exact_left_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = rand_c(&mut rng, 4, 2);
        let s = rand_c(&mut rng, 2, 10);
        let x = &h * &s;
        let res = inverse_filter(&[h], &[x]).unwrap();
        assert!((&res.sources[0] - &s).norm() <= 1e-10 * s.norm());
    }

    #[test]
    fn rank_deficient_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col = rand_c(&mut rng, 4, 1);
        let h = CMat::from_columns(&[col.column(0).into_owned(), col.column(0).into_owned()]);
        let res = inverse_filter(&[h], &[rand_c(&mut rng, 4, 3)]).unwrap();
        assert!(res.diagnostics[0].degenerate);
        assert!(res.sources[0].iter().all(|v| v.re.is_finite()));
        assert!(inverse_filter(&[rand_c(&mut rng, 2, 3)], &[rand_c(&mut rng, 2, 1)]).is_err());
    }

    fn cfg() -> StftConfig {
        StftConfig::new(64, 32, 64, crate::stft::Window::Hann, 8000.0).unwrap()
    }

    #[test]
    fn coherent_channels_pass_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = analyze_multi(&[s.clone(), s.clone(), s], &cfg()).unwrap();
        let out = zelinski_postfilter(&x, true).unwrap();
        for (k, t) in [(3, 4), (10, 20)] {
            assert!((out.gains[(k, t)] - 1.0).abs() < 1e-12);
            assert!((out.output.get(0, k, t) - x.get(0, k, t)).norm() < 1e-9);
        }
    }

    #[test]
    fn independent_noise_is_suppressed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let len = 32 * 500;
        let chans: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let x = analyze_multi(&chans, &cfg()).unwrap();
        assert!(x.n_frames() >= 500);
        let out = zelinski_postfilter(&x, true).unwrap();
        assert!(out.gains.mean() <= 0.1, "{}", out.gains.mean());
        assert!(out.gains.iter().all(|g| (0.0..=1.0).contains(g)));
    }

    #[test]
    fn improves_snr_of_common_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let len = 16000;
        let s: Vec<f64> = (0..len)
            .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 8000.0).sin() * 2f64.sqrt())
            .collect();
        let chans: Vec<Vec<f64>> = (0..8)
            .map(|_| s.iter().map(|v| { let z: f64 = StandardNormal.sample(&mut rng); v + z }).collect())
            .collect();
        let c = cfg();
        let x = analyze_multi(&chans, &c).unwrap();
        let clean = crate::stft::analyze(&s, &c).unwrap();
        let out = zelinski_postfilter(&x, true).unwrap();
        let snr = |est: &CMat| {
            let err = est - clean.channel(0);
            10.0 * (clean.channel(0).norm_squared() / err.norm_squared()).log10()
        };
        let input = snr(x.channel(0));
        let output = snr(out.output.channel(0));
        assert!(output - input >= 3.0, "{input} -> {output}");
    }

    #[test]
    fn single_channel_passes_through() {
        let x = analyze_multi(&[vec![1.0; 300]], &cfg()).unwrap();
        let out = zelinski_postfilter(&x, true).unwrap();
        assert_eq!(out.output.channel(0), x.channel(0));
    }
}
