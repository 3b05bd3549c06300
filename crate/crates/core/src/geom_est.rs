//! Room geometry from localized source images.
//!
//! Images are localized under a free-space model, grouped per actual source
//! by spectral similarity, and a shoebox is fitted to the groups by searching
//! wall positions on a lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::build_free_space;
use crate::recovery::{solve, SolverConfig};
use crate::scene::{MicArray, PlanarGrid, Point, RoomSpec};
use crate::stft::SpectroTemporalTensor;

/// Candidates closer than this to the array centre are taken as actual sources.
pub const ACTUAL_SOURCE_RADIUS: f64 = 1.0;
/// `D (D + 1) / 2` with `D = 6` walls.
pub const MAX_CLUSTER: usize = 21;
const REFINE_ITERS: usize = 10;

/// Axis-aligned lines of cells through every centre, `extent` metres to each side.
pub fn axis_strips(centres: &[Point], extent: [f64; 3], spacing: f64) -> Result<PlanarGrid> {
    if centres.is_empty() {
        return Err(Error::Argument("no strip centres".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::Argument("spacing must be positive".into()));
    }
    let mut cells: Vec<Point> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut push = |p: Point, cells: &mut Vec<Point>| {
        let key = [(p.x / 1e-6).round() as i64, (p.y / 1e-6).round() as i64, (p.z / 1e-6).round() as i64];
        if seen.insert(key) {
            cells.push(p);
        }
    };
    for c in centres {
        push(*c, &mut cells);
    }
    for c in centres {
        for axis in 0..3 {
            let n = (extent[axis] / spacing + 1e-9).floor() as i64;
            for k in -n..=n {
                if k == 0 {
                    continue;
                }
                let mut p = *c;
                p[axis] += k as f64 * spacing;
                push(p, &mut cells);
            }
        }
    }
    PlanarGrid::from_points(cells, spacing, centres[0].z)
}

/// Horizontal grid at `height` spanning `[lo, hi]` in x and y.
pub fn exterior_grid(lo: [f64; 2], hi: [f64; 2], spacing: f64, height: f64) -> Result<PlanarGrid> {
    if !(spacing > 0.0) || hi[0] < lo[0] || hi[1] < lo[1] {
        return Err(Error::Argument("invalid exterior grid bounds".into()));
    }
    let nx = ((hi[0] - lo[0]) / spacing + 1e-9).floor() as usize + 1;
    let ny = ((hi[1] - lo[1]) / spacing + 1e-9).floor() as usize + 1;
    let cells = (0..nx)
        .flat_map(|i| (0..ny).map(move |j| Point::new(lo[0] + i as f64 * spacing, lo[1] + j as f64 * spacing, height)))
        .collect();
    PlanarGrid::from_points(cells, spacing, height)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageCandidate {
    pub cell: usize,
    pub position: [f64; 3],
    pub energy: f64,
    /// Recovered complex spectrum, bins × frames in row-major order, as interleaved `[re, im]` pairs.
    pub spectrum: Vec<f64>,
}

impl ImageCandidate {
    pub fn point(&self) -> Point {
        Point::from(self.position)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageLocalization {
    pub candidates: Vec<ImageCandidate>,
    pub warnings: Vec<String>,
}

/// Localize actual and virtual sources with the free-space operator on `grid`.
///
/// `bins` selects the STFT bins used; candidates are the recovered support,
/// sorted by descending energy.
pub fn localize_images(
    recordings: &SpectroTemporalTensor,
    grid: &PlanarGrid,
    array: &MicArray,
    bins: &[usize],
    solver: &SolverConfig,
    sound_speed: f64,
    room_hint: Option<&RoomSpec>,
) -> Result<ImageLocalization> {
    if recordings.n_channels() != array.len() {
        return Err(Error::Argument(format!(
            "{} recording channels for {} microphones",
            recordings.n_channels(),
            array.len()
        )));
    }
    if bins.is_empty() || bins.iter().any(|&b| b >= recordings.n_bins()) {
        return Err(Error::Argument("bin selection is empty or out of range".into()));
    }
    let mut warnings = Vec::new();
    if let Some(room) = room_hint {
        let d = room.dims();
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for c in grid.cells() {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        for a in 0..3 {
            if lo[a] > -d[a] + grid.spacing() || hi[a] < 2.0 * d[a] - grid.spacing() {
                warnings.push(format!("grid does not extend one room length beyond the walls along axis {a}"));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
    }
    let cfg = recordings.config();
    let freqs: Vec<f64> = bins.iter().map(|&b| cfg.bin_freq(b)).collect();
    let op = build_free_space(grid.cells(), array, &freqs, sound_speed)?;
    let obs: Vec<_> = bins.iter().map(|&b| recordings.bin_matrix(b)).collect();
    let est = solve(&op, &obs, solver)?;
    let energies = est.cell_energies();
    let mut support = est.support.clone();
    support.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    let candidates = support
        .into_iter()
        .map(|g| {
            let spec = est.cell_spectrum(g);
            let p = grid.cells()[g];
            ImageCandidate {
                cell: g,
                position: [p.x, p.y, p.z],
                energy: energies[g],
                spectrum: (0..spec.nrows())
                    .flat_map(|f| (0..spec.ncols()).map(move |t| (f, t)))
                    .flat_map(|(f, t)| [spec[(f, t)].re, spec[(f, t)].im])
                    .collect(),
            }
        })
        .collect();
    Ok(ImageLocalization { candidates, warnings })
}

/// Candidates within `radius` of `centre`, in input order.
pub fn actual_sources(candidates: &[ImageCandidate], centre: &Point, radius: f64) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| (c.point() - centre).norm() <= radius)
        .map(|(i, _)| i)
        .collect()
}

/// Hermitian inner product of two interleaved complex vectors.
fn inner(a: &[f64], b: &[f64]) -> (f64, f64) {
    a.chunks_exact(2).zip(b.chunks_exact(2)).fold((0.0, 0.0), |(re, im), (x, y)| {
        (re + x[0] * y[0] + x[1] * y[1], im + x[0] * y[1] - x[1] * y[0])
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.iter().map(|v| v * v).sum::<f64>().sqrt(), b.iter().map(|v| v * v).sum::<f64>().sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (re, im) = inner(a, b);
    re.hypot(im) / (na * nb)
}

/// `v / ‖v‖` rotated so its inner product with `reference` is real and nonnegative.
fn aligned_unit(v: &[f64], reference: &[f64]) -> Vec<f64> {
    let (re, im) = inner(reference, v);
    let r = re.hypot(im);
    let (c, s) = if r > 0.0 { (re / r, -im / r) } else { (1.0, 0.0) };
    let u = unit(v);
    u.chunks_exact(2).flat_map(|z| [c * z[0] - s * z[1], c * z[1] + s * z[0]]).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Candidate indices per actual source, by descending similarity; the source itself excluded.
    pub clusters: Vec<Vec<usize>>,
    /// Candidates with a zero spectrum.
    pub dropped: Vec<usize>,
}

/// Group candidates by cosine similarity of their spectra to the actual sources.
///
/// Similarity is the modulus of the normalised Hermitian inner product, so an
/// image whose spectrum is a scaled copy of its source scores 1.
/// Centroids start at the actual-source spectra and are refined ten times as
/// the mean unit spectrum of their members, with each actual source pinned to
/// its own cluster. Clusters are truncated to `max_per_cluster` members.
pub fn cluster_images(candidates: &[ImageCandidate], actual: &[usize], max_per_cluster: usize) -> Result<Clustering> {
    if actual.is_empty() {
        return Err(Error::Argument("no actual sources to cluster around".into()));
    }
    if actual.iter().any(|&a| a >= candidates.len()) {
        return Err(Error::Argument("actual-source index out of range".into()));
    }
    let len = candidates[actual[0]].spectrum.len();
    if candidates.iter().any(|c| c.spectrum.len() != len) {
        return Err(Error::Argument("candidate spectra differ in length".into()));
    }
    let zero = |c: &ImageCandidate| c.spectrum.iter().all(|v| *v == 0.0);
    if let Some(&a) = actual.iter().find(|&&a| zero(&candidates[a])) {
        return Err(Error::Degenerate(format!("actual source {a} has a zero spectrum")));
    }
    let dropped: Vec<usize> = (0..candidates.len()).filter(|&i| zero(&candidates[i])).collect();
    let members: Vec<usize> = (0..candidates.len())
        .filter(|i| !actual.contains(i) && !dropped.contains(i))
        .collect();
    let mut centroids: Vec<Vec<f64>> = actual.iter().map(|&a| unit(&candidates[a].spectrum)).collect();
    let assign = |centroids: &[Vec<f64>]| -> Vec<(usize, f64)> {
        members
            .iter()
            .map(|&i| {
                centroids
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, cosine(&candidates[i].spectrum, c)))
                    .fold((0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best })
            })
            .collect()
    };
    let mut labels = assign(&centroids);
    for _ in 0..REFINE_ITERS {
        for (k, c) in centroids.iter_mut().enumerate() {
            let mut acc = unit(&candidates[actual[k]].spectrum);
            for (m, &(lab, _)) in labels.iter().enumerate() {
                if lab == k {
                    for (a, v) in acc.iter_mut().zip(aligned_unit(&candidates[members[m]].spectrum, c)) {
                        *a += v;
                    }
                }
            }
            *c = unit(&acc);
        }
        let next = assign(&centroids);
        let stable = next.iter().zip(&labels).all(|(a, b)| a.0 == b.0);
        labels = next;
        if stable {
            break;
        }
    }
    let mut clusters: Vec<Vec<(usize, f64)>> = vec![Vec::new(); actual.len()];
    for (m, &(lab, sim)) in labels.iter().enumerate() {
        clusters[lab].push((members[m], sim));
    }
    let clusters = clusters
        .into_iter()
        .map(|mut c| {
            c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            c.truncate(max_per_cluster);
            c.into_iter().map(|x| x.0).collect()
        })
        .collect();
    Ok(Clustering { clusters, dropped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSearch {
    pub min_dims: [f64; 3],
    pub max_dims: [f64; 3],
    /// Lattice step for wall positions, anchored at the coordinate origin.
    pub step: f64,
    /// Highest reflection order of the predicted images.
    pub max_order: i32,
    /// Observations farther than this from every prediction count as outliers at this distance.
    pub outlier_distance: f64,
}

impl Default for RoomSearch {
    fn default() -> Self {
        Self {
            min_dims: [1.0; 3],
            max_dims: [12.0, 12.0, 6.0],
            step: 0.25,
            max_order: 2,
            outlier_distance: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryEstimate {
    pub dims: [f64; 3],
    /// Position of the low wall on each axis.
    pub origin: [f64; 3],
    /// RMS distance of observed images to their nearest predictions.
    pub fit_residual: f64,
    pub clusters: Vec<Vec<[f64; 3]>>,
    /// Axes whose extent the observed images do not determine.
    pub unresolved_axes: Vec<usize>,
    /// Evaluated `(dims, residual)` pairs of the joint refinement, best first.
    pub candidates: Vec<([f64; 3], f64)>,
}

/// Image coordinates along one axis produced by walls at `lo` and `hi`.
fn axis_images(s: f64, lo: f64, hi: f64, max_order: i32) -> Vec<(f64, i32)> {
    let l = hi - lo;
    let mut out = Vec::new();
    for n in -max_order..=max_order {
        for p in 0..2 {
            let order = (n - p).abs() + n.abs();
            if order <= max_order {
                let sign = if p == 0 { 1.0 } else { -1.0 };
                out.push((sign * (s - lo) + 2.0 * n as f64 * l + lo, order));
            }
        }
    }
    out
}

/// Predicted image positions (order ≤ `max_order`, direct excluded) of `src`.
fn predicted_images(src: &Point, lo: &[f64; 3], hi: &[f64; 3], max_order: i32) -> Vec<Point> {
    let ax: Vec<Vec<(f64, i32)>> = (0..3).map(|a| axis_images(src[a], lo[a], hi[a], max_order)).collect();
    let mut out = Vec::new();
    for x in &ax[0] {
        for y in &ax[1] {
            for z in &ax[2] {
                let o = x.1 + y.1 + z.1;
                if o >= 1 && o <= max_order {
                    out.push(Point::new(x.0, y.0, z.0));
                }
            }
        }
    }
    out
}

/// Each observation against its nearest prediction; returns (sum of squared distances, count).
fn nearest_cost(observed: &[Point], predicted: &[Point], cap: f64) -> (f64, usize) {
    let cost = observed
        .iter()
        .map(|o| predicted.iter().map(|p| (o - p).norm_squared()).fold(cap, f64::min))
        .sum();
    (cost, observed.len())
}

fn joint_residual(sources: &[Point], clusters: &[Vec<Point>], lo: &[f64; 3], hi: &[f64; 3], search: &RoomSearch) -> f64 {
    let cap = search.outlier_distance.powi(2);
    let (mut cost, mut n) = (0.0, 0);
    for (s, obs) in sources.iter().zip(clusters) {
        if obs.is_empty() {
            continue;
        }
        let (c, k) = nearest_cost(obs, &predicted_images(s, lo, hi, search.max_order), cap);
        cost += c;
        n += k;
    }
    if n == 0 {
        0.0
    } else {
        (cost / n as f64).sqrt()
    }
}

/// Lattice wall positions along one axis that enclose `[bmin, bmax]`.
fn wall_candidates(bmin: f64, bmax: f64, min_dim: f64, max_dim: f64, step: f64) -> Vec<(f64, f64)> {
    let k_lo_max = (bmin / step + 1e-9).floor() as i64;
    let k_hi_min = (bmax / step - 1e-9).ceil() as i64;
    let k_lo_min = ((bmax - max_dim) / step - 1e-9).ceil() as i64;
    let mut out = Vec::new();
    for klo in k_lo_min..=k_lo_max {
        let kmax = ((klo as f64 * step + max_dim) / step + 1e-9).floor() as i64;
        for khi in k_hi_min.max(klo + 1)..=kmax {
            let (lo, hi) = (klo as f64 * step, khi as f64 * step);
            let l = hi - lo;
            if l >= min_dim - 1e-9 && l <= max_dim + 1e-9 {
                out.push((lo, hi));
            }
        }
    }
    out
}

/// Exhaustive search for the shoebox that best explains the observed images.
///
/// Wall positions lie on a lattice with spacing `search.step` and must enclose
/// every source and every point of `enclose` (typically the microphones). The
/// image coordinates along each axis depend only on that axis' walls, so the
/// search runs per axis first; the joint nearest-neighbour residual is then
/// minimized over the neighbouring lattice candidates. Squared distances are
/// capped at `search.outlier_distance²` so stray candidates cannot dominate.
pub fn fit_room(
    sources: &[Point],
    clusters: &[Vec<Point>],
    enclose: &[Point],
    search: &RoomSearch,
) -> Result<GeometryEstimate> {
    if sources.is_empty() || sources.len() != clusters.len() {
        return Err(Error::Argument("need one cluster per actual source".into()));
    }
    if !clusters.iter().any(|c| c.len() >= 3) {
        return Err(Error::Argument("at least one cluster needs three or more images".into()));
    }
    if !(search.step > 0.0) || search.max_order < 1 || !(search.outlier_distance > 0.0) {
        return Err(Error::Argument(
            "search step and outlier distance must be positive and max order at least 1".into(),
        ));
    }
    let cap = search.outlier_distance.powi(2);
    let mut bmin = [f64::INFINITY; 3];
    let mut bmax = [f64::NEG_INFINITY; 3];
    for p in sources.iter().chain(enclose) {
        for a in 0..3 {
            bmin[a] = bmin[a].min(p[a]);
            bmax[a] = bmax[a].max(p[a]);
        }
    }
    let mut walls: Vec<Vec<(f64, f64)>> = Vec::with_capacity(3);
    let mut unresolved = Vec::new();
    let mut best_lo = [0.0; 3];
    let mut best_hi = [0.0; 3];
    for a in 0..3 {
        let cands = wall_candidates(bmin[a], bmax[a], search.min_dims[a], search.max_dims[a], search.step);
        if cands.is_empty() {
            return Err(Error::Argument(format!("empty search range along axis {a}")));
        }
        let costs: Vec<f64> = cands
            .par_iter()
            .map(|&(lo, hi)| {
                let mut cost = 0.0;
                for (s, obs) in sources.iter().zip(clusters) {
                    let pred = axis_images(s[a], lo, hi, search.max_order);
                    for o in obs {
                        cost += pred.iter().map(|p| (o[a] - p.0).powi(2)).fold(cap, f64::min);
                    }
                }
                cost
            })
            .collect();
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let tie = 1e-9 * (1.0 + min);
        let mut best: Option<usize> = None;
        let mut lengths = Vec::new();
        for (k, &c) in costs.iter().enumerate() {
            if c <= min + tie {
                let l = cands[k].1 - cands[k].0;
                if !lengths.iter().any(|x: &f64| (x - l).abs() < 1e-9) {
                    lengths.push(l);
                }
                // smallest room among ties, then the wall nearest the sources
                let better = match best {
                    None => true,
                    Some(b) => {
                        let lb = cands[b].1 - cands[b].0;
                        l < lb - 1e-9 || ((l - lb).abs() < 1e-9 && cands[k].0 > cands[b].0)
                    }
                };
                if better {
                    best = Some(k);
                }
            }
        }
        if lengths.len() > 1 {
            unresolved.push(a);
        }
        let b = best.expect("at least one candidate");
        best_lo[a] = cands[b].0;
        best_hi[a] = cands[b].1;
        walls.push(cands);
    }

    // joint refinement over neighbouring lattice walls
    let step = search.step;
    let mut current = (best_lo, best_hi);
    let mut current_r = joint_residual(sources, clusters, &best_lo, &best_hi, search);
    let mut evaluated: Vec<([f64; 3], f64)> = vec![(dims_of(&best_lo, &best_hi), current_r)];
    for _ in 0..20 {
        let mut neigh = Vec::new();
        for code in 0..729usize {
            let mut c = code;
            let (mut lo, mut hi) = current;
            for a in 0..3 {
                lo[a] += ((c % 3) as f64 - 1.0) * step;
                c /= 3;
                hi[a] += ((c % 3) as f64 - 1.0) * step;
                c /= 3;
            }
            let ok = (0..3).all(|a| {
                let l = hi[a] - lo[a];
                lo[a] <= bmin[a] + 1e-9
                    && hi[a] >= bmax[a] - 1e-9
                    && l >= search.min_dims[a] - 1e-9
                    && l <= search.max_dims[a] + 1e-9
            });
            if ok && code != 364 {
                neigh.push((lo, hi));
            }
        }
        let scored: Vec<(([f64; 3], [f64; 3]), f64)> = neigh
            .par_iter()
            .map(|w| (*w, joint_residual(sources, clusters, &w.0, &w.1, search)))
            .collect();
        evaluated.extend(scored.iter().map(|(w, r)| (dims_of(&w.0, &w.1), *r)));
        let best = scored
            .into_iter()
            .fold(None::<(([f64; 3], [f64; 3]), f64)>, |acc, x| match acc {
                Some(a) if a.1 <= x.1 => Some(a),
                _ => Some(x),
            });
        match best {
            Some((w, r)) if r < current_r - 1e-12 => {
                current = w;
                current_r = r;
            }
            _ => break,
        }
    }
    evaluated.sort_by(|a, b| a.1.total_cmp(&b.1));
    evaluated.dedup_by(|a, b| a.0 == b.0);
    let (lo, hi) = current;
    Ok(GeometryEstimate {
        dims: dims_of(&lo, &hi),
        origin: lo,
        fit_residual: current_r,
        clusters: clusters
            .iter()
            .map(|c| c.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
        unresolved_axes: unresolved,
        candidates: evaluated,
    })
}

fn dims_of(lo: &[f64; 3], hi: &[f64; 3]) -> [f64; 3] {
    [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::enumerate_images;

    fn exact_images(room: &RoomSpec, src: &Point, order: i32) -> Vec<Point> {
        enumerate_images(room, src, order, None)
            .unwrap()
            .iter()
            .filter(|i| i.order >= 1)
            .map(|i| i.position)
            .collect()
    }

    #[test]
    fn exact_second_order_images_give_exact_room() {
        let room = RoomSpec::shoebox([4.0, 3.0, 2.5], 0.5).unwrap();
        let src = Point::new(1.3, 1.1, 1.2);
        let mics = vec![Point::new(2.0, 1.5, 1.0), Point::new(2.2, 1.5, 1.0)];
        let imgs = exact_images(&room, &src, 2);
        let est = fit_room(&[src], &[imgs], &mics, &RoomSearch::default()).unwrap();
        assert_eq!(est.dims, [4.0, 3.0, 2.5]);
        assert_eq!(est.origin, [0.0; 3]);
        assert!(est.fit_residual < 1e-9);
        assert!(est.unresolved_axes.is_empty());
    }

    #[test]
    fn single_wall_leaves_axes_unresolved() {
        let src = Point::new(1.3, 1.1, 1.2);
        let imgs = vec![Point::new(-1.3, 1.1, 1.2); 3];
        let est = fit_room(&[src], &[imgs], &[], &RoomSearch::default()).unwrap();
        assert!(est.unresolved_axes.contains(&0));
        assert!(est.dims.iter().all(|d| *d > 0.0));
    }

    #[test]
    fn fit_errors() {
        let src = Point::new(1.0, 1.0, 1.0);
        assert!(fit_room(&[src], &[vec![src; 2]], &[], &RoomSearch::default()).is_err());
        let bad = RoomSearch {
            min_dims: [5.0; 3],
            max_dims: [4.0; 3],
            ..Default::default()
        };
        assert!(fit_room(&[src], &[vec![src; 3]], &[], &bad).is_err());
    }

    fn cand(spec: Vec<f64>, x: f64) -> ImageCandidate {
        ImageCandidate {
            cell: 0,
            position: [x, 0.0, 0.0],
            energy: 1.0,
            spectrum: spec,
        }
    }

    #[test]
    fn orthogonal_spectra_cluster_perfectly() {
        let a = vec![1.0, 2.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 3.0, 1.0];
        let cands = vec![
            cand(a.clone(), 0.0),
            cand(b.clone(), 0.1),
            cand(a.iter().map(|v| v * 0.5).collect(), 3.0),
            cand(b.iter().map(|v| v * 0.3).collect(), 4.0),
            cand(a.iter().map(|v| v * 0.2).collect(), 5.0),
            cand(vec![0.0; 4], 6.0),
        ];
        let cl = cluster_images(&cands, &[0, 1], MAX_CLUSTER).unwrap();
        assert_eq!(cl.clusters, vec![vec![2, 4], vec![3]]);
        assert_eq!(cl.dropped, vec![5]);
    }

    #[test]
    fn single_source_cluster_is_truncated() {
        let mut cands = vec![cand(vec![1.0, 1.0], 0.0)];
        for k in 0..30 {
            cands.push(cand(vec![1.0, 1.0 + k as f64 * 0.01], k as f64));
        }
        let cl = cluster_images(&cands, &[0], MAX_CLUSTER).unwrap();
        assert_eq!(cl.clusters.len(), 1);
        assert_eq!(cl.clusters[0].len(), 21);
        assert!(!cl.clusters[0].contains(&0));
    }

    #[test]
    fn strips_through_centre() {
        let g = axis_strips(&[Point::new(1.0, 1.0, 1.0)], [1.0, 0.5, 0.0], 0.5).unwrap();
        assert_eq!(g.len(), 1 + 4 + 2);
    }
}
