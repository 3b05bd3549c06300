//! Frequency-domain acoustic operators, time-domain impulse responses and
//! simulation of multichannel recordings.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, CMat, ZERO};
use crate::scene::{enumerate_images, ExpandedGrid, ImageSourceSet, MicArray, PlanarGrid, Point, RoomSpec};

/// Half-width of the fractional-delay kernel; the kernel spans `2 · HALF_TAPS + 1` taps.
pub const HALF_TAPS: usize = 40;
const COINCIDENCE_TOL: f64 = 1e-12;

pub fn omega(freq_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq_hz
}

/// Free-space Green's function term `gain / d · exp(−j ω d / c)`.
pub fn green_coeff(src: &Point, mic: &Point, omega: f64, gain: f64, c: f64) -> Result<C64> {
    let d = (mic - src).norm();
    if d <= COINCIDENCE_TOL {
        return Err(Error::Singularity(format!(
            "source and microphone coincide at {:?}",
            src.as_slice()
        )));
    }
    Ok(C64::from_polar(gain / d, -omega * d / c))
}

/// Room transfer function at one frequency: the sum of Green's terms over all images.
pub fn channel_response(images: &ImageSourceSet, mic: &Point, omega: f64, c: f64) -> Result<C64> {
    images
        .iter()
        .try_fold(ZERO, |acc, img| Ok(acc + green_coeff(&img.position, mic, omega, img.gain, c)?))
}

/// Per-bin acoustic operator.
///
/// `blocks[f]` maps the column sources to the microphones at `freqs_hz[f]`.
/// [`to_stacked`](Self::to_stacked) assembles the full `M·F × G·F` matrix where
/// row `m·F + f` and column `g·F + f` address microphone `m`, cell `g`, bin `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    pub blocks: Vec<CMat>,
    pub freqs_hz: Vec<f64>,
    /// Grid cell owning each column.
    pub column_cells: Vec<usize>,
}

impl MeasurementMatrix {
    pub fn n_mics(&self) -> usize {
        self.blocks.first().map(|b| b.nrows()).unwrap_or(0)
    }

    pub fn n_columns(&self) -> usize {
        self.column_cells.len()
    }

    pub fn n_bins(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, f: usize) -> &CMat {
        &self.blocks[f]
    }

    pub fn to_stacked(&self) -> CMat {
        let (m, g, nf) = (self.n_mics(), self.n_columns(), self.n_bins());
        let mut out = CMat::zeros(m * nf, g * nf);
        for (f, b) in self.blocks.iter().enumerate() {
            for i in 0..m {
                for j in 0..g {
                    out[(i * nf + f, j * nf + f)] = b[(i, j)];
                }
            }
        }
        out
    }

    /// Broadband operator for impulsive sources: one column per source, bins stacked
    /// over rows in `(bin, mic)` order.
    pub fn broadband(&self) -> CMat {
        let (m, g, nf) = (self.n_mics(), self.n_columns(), self.n_bins());
        let mut out = CMat::zeros(m * nf, g);
        for (f, b) in self.blocks.iter().enumerate() {
            out.view_mut((f * m, 0), (m, g)).copy_from(b);
        }
        out
    }
}

fn check_bins(bins_hz: &[f64]) -> Result<()> {
    if bins_hz.is_empty() {
        return Err(Error::Argument("at least one frequency bin is required".into()));
    }
    if bins_hz.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::Argument("frequencies must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Reverberant measurement operator over `grid`; `max_order = 0` gives the free-space operator.
pub fn build_phi(
    grid: &PlanarGrid,
    array: &MicArray,
    bins_hz: &[f64],
    room: &RoomSpec,
    max_order: i32,
) -> Result<MeasurementMatrix> {
    check_bins(bins_hz)?;
    array.validate_in(room)?;
    let scalar = room.surfaces().iter().all(|s| s.is_scalar());
    let broadband: Option<Vec<ImageSourceSet>> = if scalar {
        Some(
            grid.cells()
                .iter()
                .map(|c| enumerate_images(room, c, max_order, None))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let c = room.sound_speed();
    let blocks = bins_hz
        .par_iter()
        .map(|&f| {
            let w = omega(f);
            let per_bin;
            let sets: &[ImageSourceSet] = match &broadband {
                Some(s) => s,
                None => {
                    per_bin = grid
                        .cells()
                        .iter()
                        .map(|cell| enumerate_images(room, cell, max_order, Some(f)))
                        .collect::<Result<Vec<_>>>()?;
                    &per_bin
                }
            };
            let mut b = CMat::zeros(array.len(), grid.len());
            for (g, imgs) in sets.iter().enumerate() {
                for (m, mic) in array.positions().iter().enumerate() {
                    b[(m, g)] = channel_response(imgs, mic, w, c)?;
                }
            }
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementMatrix {
        blocks,
        freqs_hz: bins_hz.to_vec(),
        column_cells: (0..grid.len()).collect(),
    })
}

/// Free-space operator with one unit-gain column per point.
pub fn build_free_space(points: &[Point], array: &MicArray, bins_hz: &[f64], c: f64) -> Result<MeasurementMatrix> {
    check_bins(bins_hz)?;
    let blocks = bins_hz
        .par_iter()
        .map(|&f| {
            let w = omega(f);
            let mut b = CMat::zeros(array.len(), points.len());
            for (g, p) in points.iter().enumerate() {
                for (m, mic) in array.positions().iter().enumerate() {
                    b[(m, g)] = green_coeff(p, mic, w, 1.0, c)?;
                }
            }
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementMatrix {
        blocks,
        freqs_hz: bins_hz.to_vec(),
        column_cells: (0..points.len()).collect(),
    })
}

/// Free-space operator over an actual-virtual lattice; columns are tagged with their owning cell.
pub fn build_expanded_operator(
    expanded: &ExpandedGrid,
    array: &MicArray,
    bins_hz: &[f64],
    c: f64,
) -> Result<MeasurementMatrix> {
    let mut op = build_free_space(&expanded.points, array, bins_hz, c)?;
    let mut owner = vec![0; expanded.len()];
    for (i, g) in expanded.groups.iter().enumerate() {
        for &k in g {
            owner[k] = i;
        }
    }
    op.column_cells = owner;
    Ok(op)
}

/// Sampled room impulse response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
}

impl Rir {
    pub fn new(taps: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("impulse response must be nonempty and finite".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        Ok(Self { taps, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Discrete-time Fourier transform at `freq_hz`.
    pub fn response_at(&self, freq_hz: f64) -> C64 {
        let w = omega(freq_hz) / self.sample_rate;
        self.taps
            .iter()
            .enumerate()
            .map(|(n, &h)| C64::from_polar(h, -w * n as f64))
            .sum()
    }
}

/// Windowed-sinc fractional-delay weight for a tap at offset `t` from the delay.
pub fn fractional_delay_weight(t: f64) -> f64 {
    let half = HALF_TAPS as f64 + 1.0;
    if t.abs() >= half {
        return 0.0;
    }
    let w = 0.5 * (1.0 + (std::f64::consts::PI * t / half).cos());
    let s = if t.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
    };
    w * s
}

/// Adds a band-limited pulse of `amp` at fractional position `delay` into `taps`.
pub fn add_fractional_pulse(taps: &mut [f64], delay: f64, amp: f64) {
    let centre = delay.round() as isize;
    let frac = delay - centre as f64;
    if frac.abs() < 1e-12 {
        if centre >= 0 && (centre as usize) < taps.len() {
            taps[centre as usize] += amp;
        }
        return;
    }
    for k in -(HALF_TAPS as isize)..=(HALF_TAPS as isize) {
        let n = centre + k;
        if n < 0 || n as usize >= taps.len() {
            continue;
        }
        taps[n as usize] += amp * fractional_delay_weight(n as f64 - delay);
    }
}

/// Delay of every image in samples.
pub fn image_delays(images: &ImageSourceSet, mic: &Point, sample_rate: f64, c: f64) -> Vec<f64> {
    images
        .iter()
        .map(|img| (img.position - mic).norm() / c * sample_rate)
        .collect()
}

/// Shortest impulse response that holds the pulse centre of every image with nonzero gain.
pub fn required_rir_length(room: &RoomSpec, src: &Point, mic: &Point, sample_rate: f64, max_order: i32) -> Result<usize> {
    let images = enumerate_images(room, src, max_order, None)?;
    let delays = image_delays(&images, mic, sample_rate, room.sound_speed());
    Ok(audible_length(&images, &delays))
}

fn audible_length(images: &ImageSourceSet, delays: &[f64]) -> usize {
    images
        .iter()
        .zip(delays)
        .filter(|(img, _)| img.gain > 0.0)
        .map(|(_, d)| d.round() as usize)
        .max()
        .unwrap_or(0)
        + 1
}

/// Image-model impulse response from `src` to `mic`.
///
/// Each image adds `gain / d` at delay `d / c` seconds. Kernel tails past the
/// end are cut; an image whose pulse centre lies beyond `length` is an error.
pub fn synthesize_rir(
    room: &RoomSpec,
    src: &Point,
    mic: &Point,
    sample_rate: f64,
    max_order: i32,
    length: usize,
) -> Result<Rir> {
    if !(sample_rate > 0.0) {
        return Err(Error::Argument("sample rate must be positive".into()));
    }
    if length == 0 {
        return Err(Error::Argument("impulse response length must be at least 1".into()));
    }
    let images = enumerate_images(room, src, max_order, None)?;
    let c = room.sound_speed();
    let delays = image_delays(&images, mic, sample_rate, c);
    let dropped: Vec<usize> = delays
        .iter()
        .enumerate()
        .filter(|(i, d)| images.entries()[*i].gain > 0.0 && d.round() as usize >= length)
        .map(|(i, _)| i)
        .collect();
    if !dropped.is_empty() {
        let required = audible_length(&images, &delays);
        return Err(Error::Truncation {
            length,
            required,
            dropped,
        });
    }
    let mut taps = vec![0.0; length];
    for (img, &delay) in images.iter().zip(&delays) {
        if img.gain == 0.0 {
            continue;
        }
        let d = (img.position - mic).norm();
        if d <= COINCIDENCE_TOL {
            return Err(Error::Singularity("image coincides with microphone".into()));
        }
        add_fractional_pulse(&mut taps, delay, img.gain / d);
    }
    Rir::new(taps, sample_rate)
}

/// Full linear convolution computed with FFTs.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<C64> = a.iter().map(|&x| C64::from(x)).chain(std::iter::repeat(ZERO)).take(n).collect();
    let mut fb: Vec<C64> = b.iter().map(|&x| C64::from(x)).chain(std::iter::repeat(ZERO)).take(n).collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(out_len).map(|v| v.re / n as f64).collect()
}

/// A source signal placed in the room.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedSource {
    pub signal: Vec<f64>,
    pub sample_rate: f64,
    pub position: Point,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    /// Noisy recordings, one per microphone.
    pub recordings: Vec<Vec<f64>>,
    /// Noise-free mixture.
    pub clean: Vec<Vec<f64>>,
    /// `images[n][m]` per-source per-microphone contribution.
    pub images: Vec<Vec<Vec<f64>>>,
    /// `rirs[n][m]` impulse response from source `n` to microphone `m`.
    pub rirs: Vec<Vec<Rir>>,
    pub sample_rate: f64,
}

/// Convolutive mixture of the sources at every microphone plus optional white noise.
///
/// The noise power is set from the clean mixture power over all channels.
pub fn simulate_recordings<R: Rng>(
    sources: &[PlacedSource],
    room: &RoomSpec,
    array: &MicArray,
    max_order: i32,
    noise_snr_db: Option<f64>,
    rng: &mut R,
) -> Result<Simulation> {
    let first = sources
        .first()
        .ok_or_else(|| Error::Argument("at least one source is required".into()))?;
    let fs = first.sample_rate;
    if sources.iter().any(|s| (s.sample_rate - fs).abs() > 1e-9) {
        return Err(Error::Argument("all sources must share one sample rate".into()));
    }
    if sources.iter().any(|s| s.signal.is_empty()) {
        return Err(Error::Argument("source signals must be nonempty".into()));
    }
    array.validate_in(room)?;

    let rirs: Vec<Vec<Rir>> = sources
        .iter()
        .map(|s| {
            array
                .positions()
                .iter()
                .map(|mic| {
                    let len = required_rir_length(room, &s.position, mic, fs, max_order)?;
                    synthesize_rir(room, &s.position, mic, fs, max_order, len + HALF_TAPS)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let images: Vec<Vec<Vec<f64>>> = sources
        .par_iter()
        .zip(rirs.par_iter())
        .map(|(s, rs)| rs.iter().map(|r| convolve(&s.signal, &r.taps)).collect())
        .collect();
    let out_len = images.iter().flatten().map(|v| v.len()).max().unwrap_or(0);
    let mut clean = vec![vec![0.0; out_len]; array.len()];
    for per_src in &images {
        for (m, sig) in per_src.iter().enumerate() {
            for (o, v) in clean[m].iter_mut().zip(sig) {
                *o += v;
            }
        }
    }

    let mut recordings = clean.clone();
    if let Some(snr) = noise_snr_db {
        if !snr.is_finite() {
            return Err(Error::Argument("noise SNR must be finite".into()));
        }
        let total: usize = clean.iter().map(|c| c.len()).sum();
        let power = clean.iter().flatten().map(|v| v * v).sum::<f64>() / total as f64;
        let sd = (power / 10f64.powf(snr / 10.0)).sqrt();
        for ch in recordings.iter_mut() {
            for v in ch.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd * z;
            }
        }
    }
    Ok(Simulation {
        recordings,
        clean,
        images,
        rirs,
        sample_rate: fs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub mu: f64,
    /// Largest sparsity level with guaranteed recovery; infinite when `mu = 0`.
    pub k_bound: f64,
}

/// Mutual coherence of the columns of `phi`.
pub fn coherence(phi: &CMat) -> Result<Coherence> {
    if phi.ncols() < 2 {
        return Err(Error::Argument("coherence needs at least two columns".into()));
    }
    let norms: Vec<f64> = phi.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|n| *n == 0.0) {
        return Err(Error::Normalization(format!("column {j} is zero")));
    }
    let gram = phi.adjoint() * phi;
    let mut mu: f64 = 0.0;
    for j in 0..phi.ncols() {
        for k in (j + 1)..phi.ncols() {
            mu = mu.max(gram[(j, k)].norm() / (norms[j] * norms[k]));
        }
    }
    let mu = mu.min(1.0);
    let k_bound = if mu == 0.0 { f64::INFINITY } else { (1.0 / mu + 1.0) / 2.0 };
    Ok(Coherence { mu, k_bound })
}

/// Coherence of an operator given per bin, treating each column as broadband.
pub fn broadband_coherence(op: &MeasurementMatrix) -> Result<Coherence> {
    coherence(&op.broadband())
}

/// Real matrix used for debugging exports.
pub fn magnitude_matrix(op: &MeasurementMatrix, f: usize) -> DMatrix<f64> {
    op.blocks[f].map(|v| v.norm())
}
