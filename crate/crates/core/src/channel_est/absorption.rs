//! Reflection coefficients from impulse responses, and reverberation time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{fractional_delay_weight, image_delays, Rir, HALF_TAPS};
use crate::linalg::lstsq_real;
use crate::scene::{ImageSourceSet, Point, RoomSpec, Surface};

/// Images whose delays are closer than this (in samples) are fitted jointly and
/// not used for coefficient estimation.
const DELAY_MERGE: f64 = 0.5;
/// Relative floor below which fitted image amplitudes are ignored.
const NOISE_FLOOR: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionFit {
    /// Estimated reflection coefficient per surface, in [`Surface::ALL`] order.
    pub coefficients: [f64; 6],
    /// Surfaces that no usable image constrained; their coefficient is 0.
    pub unobserved: Vec<Surface>,
    /// Fitted amplitude of every image (`gain / d` scale).
    pub amplitudes: Vec<f64>,
}

/// Least-squares fit of per-surface reflection coefficients to an impulse response.
///
/// First the image amplitudes are fitted on the fractional-delay kernel at the
/// known image delays. The surviving amplitudes, converted to gains, are then
/// fitted in the log domain with `log gain = Σ_s count_s · log ι_s`.
pub fn fit_absorption_ls(rir: &Rir, images: &ImageSourceSet, mic: &Point, c: f64) -> Result<AbsorptionFit> {
    let max_tap = rir.taps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_tap == 0.0 {
        return Err(Error::Estimation("impulse response has no taps above the noise floor".into()));
    }
    let fs = rir.sample_rate;
    let delays = image_delays(images, mic, fs, c);
    if let Some(d) = delays.iter().find(|d| d.round() as usize >= rir.len()) {
        return Err(Error::Argument(format!(
            "image delay {d:.1} samples lies beyond the impulse response ({} taps)",
            rir.len()
        )));
    }
    let dists: Vec<f64> = images.iter().map(|i| (i.position - mic).norm()).collect();

    // merge images with coincident delays into one column
    let mut order: Vec<usize> = (0..delays.len()).collect();
    order.sort_by(|&a, &b| delays[a].total_cmp(&delays[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if delays[i] - delays[*g.last().unwrap()] < DELAY_MERGE => g.push(i),
            _ => groups.push(vec![i]),
        }
    }

    let n = rir.len();
    let mut dict = DMatrix::zeros(n, groups.len());
    for (k, g) in groups.iter().enumerate() {
        for &i in g {
            let centre = delays[i].round() as isize;
            for off in -(HALF_TAPS as isize)..=(HALF_TAPS as isize) {
                let t = centre + off;
                if t < 0 || t as usize >= n {
                    continue;
                }
                // unit-amplitude kernel, weighted by the spherical spreading of each member
                dict[(t as usize, k)] += fractional_delay_weight(t as f64 - delays[i]) * dists[g[0]] / dists[i];
            }
        }
    }
    let amps = lstsq_real(&dict, &DVector::from_vec(rir.taps.clone()));

    let mut amplitudes = vec![0.0; images.len()];
    let mut rows: Vec<([u32; 6], f64)> = Vec::new();
    let max_amp = amps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (k, g) in groups.iter().enumerate() {
        for &i in g {
            amplitudes[i] = amps[k] * dists[g[0]] / dists[i];
        }
        if g.len() != 1 {
            continue;
        }
        let i = g[0];
        let img = &images.entries()[i];
        if img.order == 0 || amps[k] <= NOISE_FLOOR * max_amp {
            continue;
        }
        rows.push((img.reflection_counts, amps[k] * dists[i]));
    }

    let (coefficients, unobserved) = fit_log_gains(&rows);
    Ok(AbsorptionFit {
        coefficients,
        unobserved,
        amplitudes,
    })
}

/// Per-surface coefficients from image gains via `log gain = Σ_s count_s · log ι_s`.
///
/// Rows with nonpositive gain are skipped. Surfaces that no row reflects off
/// are reported as unobserved and left at 0.
pub fn fit_log_gains(rows: &[([u32; 6], f64)]) -> ([f64; 6], Vec<Surface>) {
    let rows: Vec<&([u32; 6], f64)> = rows.iter().filter(|r| r.1 > 0.0 && r.1.is_finite()).collect();
    let mut coefficients = [0.0; 6];
    let observed: Vec<usize> = (0..6).filter(|&s| rows.iter().any(|r| r.0[s] > 0)).collect();
    if !observed.is_empty() {
        let a = DMatrix::from_fn(rows.len(), observed.len(), |r, k| rows[r].0[observed[k]] as f64);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1.ln()));
        let logs = lstsq_real(&a, &b);
        for (k, &s) in observed.iter().enumerate() {
            coefficients[s] = logs[k].exp().clamp(0.0, 1.0);
        }
    }
    let unobserved = Surface::ALL.iter().copied().filter(|s| !observed.contains(&s.index())).collect();
    (coefficients, unobserved)
}

/// Reverberation time `24 ln 10 · V / (c Σ W_s (1 − ι_s²))` from broadband coefficients.
pub fn rt60_sabine(room: &RoomSpec) -> Result<f64> {
    rt60_sabine_at(room, None)
}

/// [`rt60_sabine`] with every coefficient looked up at `freq_hz`.
pub fn rt60_sabine_at(room: &RoomSpec, freq_hz: Option<f64>) -> Result<f64> {
    let absorption: f64 = Surface::ALL
        .iter()
        .map(|&s| room.surface_area(s) * (1.0 - room.reflection(s, freq_hz).powi(2)))
        .sum();
    if absorption <= 0.0 {
        return Err(Error::Divergence("no absorbing surface, reverberation time is infinite".into()));
    }
    Ok(24.0 * std::f64::consts::LN_10 * room.volume() / (room.sound_speed() * absorption))
}

/// Schroeder energy decay curve in dB, normalised to 0 dB at the first tap.
pub fn energy_decay_curve(rir: &Rir) -> Vec<f64> {
    let mut acc = 0.0;
    let mut tail: Vec<f64> = rir
        .taps
        .iter()
        .rev()
        .map(|h| {
            acc += h * h;
            acc
        })
        .collect();
    tail.reverse();
    let total = tail[0];
    tail.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// Reverberation time from a line fit to the −5 to −25 dB span of the decay curve.
pub fn rt60_from_edc(rir: &Rir) -> Result<f64> {
    if rir.taps.iter().all(|v| *v == 0.0) {
        return Err(Error::Argument("impulse response is zero".into()));
    }
    let edc = energy_decay_curve(rir);
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite() && **v <= -5.0 && **v >= -25.0)
        .map(|(i, v)| (i as f64, *v))
        .collect();
    let reaches = edc.iter().any(|v| *v < -25.0);
    if pts.len() < 2 || !reaches {
        return Err(Error::InsufficientDecay(
            "energy decay curve does not span -5 to -25 dB".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay("decay curve is not decreasing".into()));
    }
    Ok(-60.0 / slope / rir.sample_rate)
}
