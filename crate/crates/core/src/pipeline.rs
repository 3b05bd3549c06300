//! End-to-end flows shared by the command-line tool and the experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel_est::{
    absorption_profile, joint_covariance_recovery, observation_covariance, AbsorptionProfile, CovarianceBin,
    CovarianceOptions, CovarianceRecovery,
};
use crate::dereverb::{inverse_filter_tensor, BinDiagnostics};
use crate::error::{Error, Result};
use crate::eval::{sir, SIR_CAP_DB};
use crate::forward::{build_free_space, build_phi, coherence, simulate_recordings, PlacedSource, Simulation};
use crate::geom_est::{
    actual_sources, axis_strips, cluster_images, exterior_grid, fit_room, localize_images, Clustering,
    GeometryEstimate, ImageLocalization, RoomSearch, ACTUAL_SOURCE_RADIUS, MAX_CLUSTER,
};
use crate::io::{read_wav, SceneConfig, SignalSpec};
use crate::linalg::CMat;
use crate::recovery::{localize, solve, Localization, SolverConfig};
use crate::scene::{expand_grid_images, MicArray, PlanarGrid, Point, RoomSpec};
use crate::signals;
use crate::stft::{analyze_multi, SpectroTemporalTensor, StftConfig};

/// Independent stream for each (seed, purpose, index) triple.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_signal(spec: &SignalSpec, len: usize, sample_rate: f64, seed: u64, index: usize) -> Result<Vec<f64>> {
    let mut rng = rng_for(seed, 1 + index as u64);
    match spec {
        SignalSpec::Speech => Ok(signals::speech_like(len, sample_rate, &mut rng)),
        SignalSpec::Noise => Ok(signals::white_noise(len, 0.3, &mut rng)),
        SignalSpec::Impulse => Ok(signals::impulse(len, 0)),
        SignalSpec::Wav(path) => {
            let (ch, fs) = read_wav(path)?;
            if (fs - sample_rate).abs() > 1e-9 {
                return Err(Error::Argument(format!(
                    "{} has sample rate {fs}, scene expects {sample_rate}",
                    path.display()
                )));
            }
            ch.into_iter()
                .next()
                .filter(|c| !c.is_empty())
                .ok_or_else(|| Error::Argument(format!("{} holds no samples", path.display())))
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneSimulation {
    /// Dry source signals.
    pub dry: Vec<Vec<f64>>,
    pub simulation: Simulation,
}

/// Simulate the scene's recordings; fully determined by `seed`.
pub fn simulate_scene(cfg: &SceneConfig, seed: u64) -> Result<SceneSimulation> {
    let len = (cfg.duration_s * cfg.sample_rate).round() as usize;
    let dry = cfg
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| generate_signal(&s.signal, len, cfg.sample_rate, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let placed: Vec<PlacedSource> = dry
        .iter()
        .zip(&cfg.sources)
        .map(|(d, s)| PlacedSource {
            signal: d.clone(),
            sample_rate: cfg.sample_rate,
            position: s.position,
        })
        .collect();
    let mut rng = rng_for(seed, 0);
    let simulation = simulate_recordings(&placed, &cfg.room, &cfg.array, cfg.max_order, cfg.snr_db, &mut rng)?;
    Ok(SceneSimulation { dry, simulation })
}

/// `count` bins spread evenly over `[lo_hz, hi_hz]`, deduplicated.
pub fn band_bins(stft: &StftConfig, lo_hz: f64, hi_hz: f64, count: usize) -> Result<Vec<usize>> {
    if !(hi_hz >= lo_hz) || count == 0 {
        return Err(Error::Argument("bin band must be ordered and nonempty".into()));
    }
    let lo = stft.nearest_bin(lo_hz).max(1);
    let hi = stft.nearest_bin(hi_hz).min(stft.n_bins() - 1).max(lo);
    let mut bins: Vec<usize> = (0..count)
        .map(|k| {
            if count == 1 {
                lo
            } else {
                lo + ((hi - lo) as f64 * k as f64 / (count - 1) as f64).round() as usize
            }
        })
        .collect();
    bins.dedup();
    Ok(bins)
}

fn bin_freqs(stft: &StftConfig, bins: &[usize]) -> Vec<f64> {
    bins.iter().map(|&b| stft.bin_freq(b)).collect()
}

fn bin_obs(x: &SpectroTemporalTensor, bins: &[usize]) -> Vec<CMat> {
    bins.iter().map(|&b| x.bin_matrix(b)).collect()
}

/// Sparse localization of `n_sources` on `grid`; `room = None` uses the free-space model.
pub fn localize_sources(
    x: &SpectroTemporalTensor,
    grid: &PlanarGrid,
    array: &MicArray,
    room: Option<(&RoomSpec, i32)>,
    bins: &[usize],
    solver: &SolverConfig,
    n_sources: usize,
    sound_speed: f64,
) -> Result<Localization> {
    let freqs = bin_freqs(x.config(), bins);
    let op = match room {
        Some((r, order)) => build_phi(grid, array, &freqs, r, order)?,
        None => build_free_space(grid.cells(), array, &freqs, sound_speed)?,
    };
    let est = solve(&op, &bin_obs(x, bins), solver)?;
    localize(&est, grid, n_sources)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub n_sources: usize,
    /// Horizontal region searched for the actual sources, `[x_lo, y_lo, x_hi, y_hi]`.
    pub source_region: [f64; 4],
    pub height: f64,
    pub spacing: f64,
    /// Half-length of the image strips along each axis.
    pub strip_extent: [f64; 3],
    /// Candidates requested from the image localization.
    pub n_candidates: usize,
    pub bins: Vec<usize>,
    pub sound_speed: f64,
    /// Candidates this close to a detected source are taken as the source itself.
    pub actual_radius: f64,
    pub search: RoomSearch,
}

impl GeometryConfig {
    /// Defaults: 0.25 m grid, strips reaching past the largest searched room,
    /// thirteen candidates per source (direct path plus the on-strip images up to second order).
    pub fn new(n_sources: usize, source_region: [f64; 4], height: f64, bins: Vec<usize>) -> Self {
        let search = RoomSearch::default();
        Self {
            n_sources,
            source_region,
            height,
            spacing: 0.25,
            strip_extent: search.max_dims,
            n_candidates: 13 * n_sources,
            bins,
            sound_speed: crate::scene::DEFAULT_SOUND_SPEED,
            actual_radius: ACTUAL_SOURCE_RADIUS,
            search,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryRun {
    pub sources: Vec<[f64; 3]>,
    pub localization: ImageLocalization,
    pub clustering: Clustering,
    pub estimate: GeometryEstimate,
}

/// Actual sources on a horizontal grid, images on axis strips through them,
/// clustering by spectral similarity, then the shoebox fit.
pub fn estimate_geometry(x: &SpectroTemporalTensor, array: &MicArray, cfg: &GeometryConfig) -> Result<GeometryRun> {
    let [x0, y0, x1, y1] = cfg.source_region;
    let grid = exterior_grid([x0, y0], [x1, y1], cfg.spacing, cfg.height)?;
    let joint = SolverConfig {
        structure: format!("block:{}", cfg.bins.len().max(1)),
        n_active: cfg.n_sources,
        ..SolverConfig::default()
    };
    let loc = localize_sources(x, &grid, array, None, &cfg.bins, &joint, cfg.n_sources, cfg.sound_speed)?;
    let centres: Vec<Point> = loc.cells.iter().map(|c| Point::from(c.position)).collect();
    if centres.is_empty() {
        return Err(Error::Estimation("no source energy found".into()));
    }
    let strips = axis_strips(&centres, cfg.strip_extent, cfg.spacing)?;
    let image_solver = SolverConfig {
        n_active: cfg.n_candidates,
        ..joint
    };
    let mut images = localize_images(x, &strips, array, &cfg.bins, &image_solver, cfg.sound_speed, None)?;
    // the candidate nearest each centre stands for the source; others within the radius are dropped
    let mut actual = Vec::new();
    let mut near_any = vec![false; images.candidates.len()];
    for c in &centres {
        let near = actual_sources(&images.candidates, c, cfg.actual_radius);
        for &i in &near {
            near_any[i] = true;
        }
        let best = near.iter().copied().min_by(|&a, &b| {
            let da = (images.candidates[a].point() - c).norm();
            let db = (images.candidates[b].point() - c).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        match best {
            Some(i) => actual.push(i),
            None => return Err(Error::Estimation("actual source missing from image candidates".into())),
        }
    }
    let kept: Vec<usize> = (0..images.candidates.len())
        .filter(|&i| !near_any[i] || actual.contains(&i))
        .collect();
    images.candidates = kept.iter().map(|&i| images.candidates[i].clone()).collect();
    let actual: Vec<usize> = actual.iter().map(|a| kept.iter().position(|k| k == a).unwrap()).collect();
    let clustering = cluster_images(&images.candidates, &actual, MAX_CLUSTER)?;
    let clusters: Vec<Vec<Point>> = clustering
        .clusters
        .iter()
        .map(|c| c.iter().map(|&i| images.candidates[i].point()).collect())
        .collect();
    let estimate = fit_room(&centres, &clusters, array.positions(), &cfg.search)?;
    Ok(GeometryRun {
        sources: centres.iter().map(|p| [p.x, p.y, p.z]).collect(),
        localization: images,
        clustering,
        estimate,
    })
}

/// Covariance-based absorption estimate around the given candidate cells.
///
/// `geometry` supplies the shoebox (its reflection values are ignored). Each
/// cell is expanded to its images up to `max_order`; the steering matrix is
/// free space over the expanded lattice.
#[allow(clippy::too_many_arguments)]
pub fn estimate_absorption_covariance(
    x: &SpectroTemporalTensor,
    array: &MicArray,
    geometry: &RoomSpec,
    cells: &PlanarGrid,
    max_order: i32,
    bins: &[usize],
    n_active: Option<usize>,
    opts: &CovarianceOptions,
    per_bin: bool,
) -> Result<(AbsorptionProfile, CovarianceRecovery)> {
    let unit = RoomSpec::shoebox([geometry.dims().x, geometry.dims().y, geometry.dims().z], 1.0)?
        .with_sound_speed(geometry.sound_speed())?;
    let expanded = expand_grid_images(&unit, cells, max_order, None)?;
    let freqs = bin_freqs(x.config(), bins);
    let op = build_free_space(&expanded.points, array, &freqs, geometry.sound_speed())?;
    let problems = op
        .blocks
        .iter()
        .zip(bins)
        .map(|(o, &b)| {
            Ok(CovarianceBin {
                covariance: observation_covariance(&x.bin_matrix(b))?,
                steering: o.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rec = joint_covariance_recovery(&problems, &expanded.groups, opts)?;
    let profile = absorption_profile(&rec, &freqs, &expanded.reflection_counts, n_active, per_bin)?;
    Ok((profile, rec))
}

/// Channel matrices `H(f)` (mics × sources) of the reverberant model at every STFT bin.
pub fn channel_matrices(
    stft: &StftConfig,
    array: &MicArray,
    room: &RoomSpec,
    sources: &[Point],
    max_order: i32,
) -> Result<Vec<CMat>> {
    let grid = PlanarGrid::from_points(sources.to_vec(), 1.0, sources.first().map(|p| p.z).unwrap_or(0.0))?;
    let op = build_phi(&grid, array, &stft.bin_freqs(), room, max_order)?;
    Ok(op.blocks)
}

/// Separated source signals by inverse filtering every STFT bin.
pub fn separate(
    recordings: &[Vec<f64>],
    stft: &StftConfig,
    channels: &[CMat],
) -> Result<(Vec<Vec<f64>>, Vec<BinDiagnostics>)> {
    let x = analyze_multi(recordings, stft)?;
    let (s, diag) = inverse_filter_tensor(channels, &x)?;
    Ok((crate::stft::synthesize(&s)?, diag))
}

#[derive(Clone, Debug)]
pub struct SeparationRun {
    pub localization: Localization,
    pub positions: Vec<Point>,
    pub signals: Vec<Vec<f64>>,
    pub diagnostics: Vec<BinDiagnostics>,
}

/// Localize the sources with the reverberant model of `room`, then invert the
/// channel built from the estimated positions.
#[allow(clippy::too_many_arguments)]
pub fn separate_localized(
    recordings: &[Vec<f64>],
    stft: &StftConfig,
    array: &MicArray,
    room: &RoomSpec,
    grid: &PlanarGrid,
    max_order: i32,
    bins: &[usize],
    solver: &SolverConfig,
    n_sources: usize,
) -> Result<SeparationRun> {
    let x = analyze_multi(recordings, stft)?;
    let localization = localize_sources(&x, grid, array, Some((room, max_order)), bins, solver, n_sources, room.sound_speed())?;
    if localization.all_zero {
        return Err(Error::Estimation("localization found no source energy".into()));
    }
    let positions: Vec<Point> = localization.cells.iter().map(|c| Point::from(c.position)).collect();
    let channels = channel_matrices(stft, array, room, &positions, max_order)?;
    let (s, diagnostics) = inverse_filter_tensor(&channels, &x)?;
    Ok(SeparationRun {
        localization,
        positions,
        signals: crate::stft::synthesize(&s)?,
        diagnostics,
    })
}

pub fn nearest_mic(array: &MicArray, p: &Point) -> usize {
    let d = |i: usize| (array.positions()[i] - p).norm();
    (0..array.len()).min_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b))).unwrap_or(0)
}

/// Estimated source `k` for each true source: nearest estimated position, one-to-one, greedy by distance.
pub fn match_sources(estimated: &[Point], truth: &[Point]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(t, p)| estimated.iter().enumerate().map(move |(e, q)| ((p - q).norm(), t, e)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; estimated.len()];
    for (_, t, e) in pairs {
        if out[t].is_none() && !used[e] {
            out[t] = Some(e);
            used[e] = true;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub source: usize,
    pub sir_db: f64,
    /// SIR of the raw recording at the microphone nearest the source.
    pub baseline_sir_db: f64,
}

/// Per-source SIR of `estimates[assignment[n]]` against the dry signals, next to the nearest-microphone baseline.
pub fn score_separation(
    estimates: &[Vec<f64>],
    assignment: &[Option<usize>],
    dry: &[Vec<f64>],
    recordings: &[Vec<f64>],
    array: &MicArray,
    truth: &[Point],
) -> Result<Vec<SourceScore>> {
    if dry.len() != truth.len() || assignment.len() != truth.len() {
        return Err(Error::Argument("one dry signal and assignment per true source expected".into()));
    }
    let clip = |v: &[f64], n: usize| -> Vec<f64> {
        let mut out = v[..v.len().min(n)].to_vec();
        out.resize(n, 0.0);
        out
    };
    (0..truth.len())
        .map(|n| {
            let len = dry[n].len();
            let others: Vec<&[f64]> = (0..dry.len()).filter(|&j| j != n).map(|j| dry[j].as_slice()).collect();
            let sir_db = match assignment[n] {
                Some(e) => sir(&clip(&estimates[e], len), &dry[n], &others)?,
                None => -SIR_CAP_DB,
            };
            let raw = clip(&recordings[nearest_mic(array, &truth[n])], len);
            Ok(SourceScore {
                source: n,
                sir_db,
                baseline_sir_db: sir(&raw, &dry[n], &others)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayLayout {
    /// Uniform circular array of radius [`COMPACT_RADIUS`] around a seeded point.
    Compact,
    /// Microphones drawn uniformly in the room volume.
    Random,
}

pub const COMPACT_RADIUS: f64 = 0.1;
const LAYOUT_MARGIN: f64 = 0.3;

/// `m`-microphone array of the given layout inside `room`.
pub fn layout_array<R: Rng>(layout: ArrayLayout, room: &RoomSpec, m: usize, height: f64, rng: &mut R) -> Result<MicArray> {
    let d = room.dims();
    let span = |lo: f64, hi: f64, u: f64| lo + (hi - lo) * u;
    let array = match layout {
        ArrayLayout::Compact => {
            let c = Point::new(
                span(0.25 * d.x, 0.75 * d.x, rng.random()),
                span(0.25 * d.y, 0.75 * d.y, rng.random()),
                height,
            );
            MicArray::circular(c, COMPACT_RADIUS, m)?
        }
        ArrayLayout::Random => MicArray::new(
            (0..m)
                .map(|_| {
                    Point::new(
                        span(LAYOUT_MARGIN, d.x - LAYOUT_MARGIN, rng.random()),
                        span(LAYOUT_MARGIN, d.y - LAYOUT_MARGIN, rng.random()),
                        span(LAYOUT_MARGIN, d.z - LAYOUT_MARGIN, rng.random()),
                    )
                })
                .collect(),
        )?,
    };
    array.validate_in(room)?;
    Ok(array)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow {
    pub layout: ArrayLayout,
    pub trial: usize,
    pub mu: f64,
    pub k_bound: f64,
}

/// Mutual coherence of the reverberant operator over `grid` at `freq_hz` for
/// `trials` seeded layouts of each kind.
pub fn coherence_sweep(
    room: &RoomSpec,
    grid: &PlanarGrid,
    freq_hz: f64,
    m: usize,
    max_order: i32,
    trials: usize,
    seed: u64,
) -> Result<Vec<CoherenceRow>> {
    let mut rows = Vec::with_capacity(2 * trials);
    for trial in 0..trials {
        for (k, layout) in [ArrayLayout::Compact, ArrayLayout::Random].into_iter().enumerate() {
            let mut rng = rng_for(seed, 1000 + 2 * trial as u64 + k as u64);
            let array = layout_array(layout, room, m, grid.height(), &mut rng)?;
            let op = build_phi(grid, &array, &[freq_hz], room, max_order)?;
            let c = coherence(&op.blocks[0])?;
            rows.push(CoherenceRow {
                layout,
                trial,
                mu: c.mu,
                k_bound: c.k_bound,
            });
        }
    }
    Ok(rows)
}
