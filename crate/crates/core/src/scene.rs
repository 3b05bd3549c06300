//! Rooms, microphone arrays, spatial grids and image-source enumeration.
//!
//! Rooms are axis-aligned shoeboxes spanning `[0, dims]`. Surfaces are indexed
//! in the fixed order `x=0, x=Lx, y=0, y=Ly, z=0 (floor), z=Lz (ceiling)`.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Dry air at 20 °C.
pub const DEFAULT_SOUND_SPEED: f64 = 343.0;

/// Tolerance used to merge image positions.
const IMAGE_DEDUP_TOL: f64 = 1e-9;
/// Tolerance used to detect collisions between expanded groups.
const GROUP_COLLISION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    XLow,
    XHigh,
    YLow,
    YHigh,
    Floor,
    Ceiling,
}

impl Surface {
    pub const ALL: [Surface; 6] = [
        Surface::XLow,
        Surface::XHigh,
        Surface::YLow,
        Surface::YHigh,
        Surface::Floor,
        Surface::Ceiling,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Surface> {
        Self::ALL.get(i).copied()
    }

    pub fn axis(self) -> usize {
        self.index() / 2
    }

    /// True for the wall at the upper end of its axis.
    pub fn is_high(self) -> bool {
        self.index() % 2 == 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Surface::XLow => "x_low",
            Surface::XHigh => "x_high",
            Surface::YLow => "y_low",
            Surface::YHigh => "y_high",
            Surface::Floor => "floor",
            Surface::Ceiling => "ceiling",
        }
    }
}

/// Reflection coefficient of one surface, either broadband or tabulated per frequency.
///
/// A scalar coefficient is stored as a single table point at 0 Hz. Lookups at a
/// frequency use the nearest tabulated point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionProfile {
    points: Vec<(f64, f64)>,
}

impl ReflectionProfile {
    pub fn scalar(value: f64) -> Result<Self> {
        Self::table(vec![(0.0, value)])
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("reflection profile needs at least one point".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Argument(format!(
                    "reflection profile frequencies must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(f, v) in &points {
            if !f.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!(
                    "reflection coefficient {v} at {f} Hz outside [0, 1]"
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_scalar(&self) -> bool {
        self.points.len() == 1
    }

    /// Coefficient at `freq_hz` (nearest neighbour), or the broadband value when `None`.
    pub fn at(&self, freq_hz: Option<f64>) -> f64 {
        match freq_hz {
            None => self.broadband(),
            Some(f) => {
                let idx = self.points.partition_point(|p| p.0 < f);
                if idx == 0 {
                    self.points[0].1
                } else if idx == self.points.len() {
                    self.points[idx - 1].1
                } else {
                    let (lo, hi) = (self.points[idx - 1], self.points[idx]);
                    // ties go to the lower frequency
                    if f - lo.0 <= hi.0 - f {
                        lo.1
                    } else {
                        hi.1
                    }
                }
            }
        }
    }

    /// Mean of the tabulated values; equals the value itself for a scalar profile.
    pub fn broadband(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }
}

/// Shoebox room with per-surface reflection profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct RoomSpec {
    dims: Point,
    surfaces: [ReflectionProfile; 6],
    sound_speed: f64,
    surface_areas: Option<[f64; 6]>,
}

impl RoomSpec {
    pub fn new(dims: Point, surfaces: [ReflectionProfile; 6], sound_speed: f64) -> Result<Self> {
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Argument(format!("room dims must be positive, got {dims:?}")));
        }
        if !(sound_speed.is_finite() && sound_speed > 0.0) {
            return Err(Error::Argument(format!("sound speed must be positive, got {sound_speed}")));
        }
        Ok(Self {
            dims,
            surfaces,
            sound_speed,
            surface_areas: None,
        })
    }

    /// Room with the same scalar reflection coefficient on every surface.
    pub fn shoebox(dims: [f64; 3], reflection: f64) -> Result<Self> {
        Self::with_reflections(dims, [reflection; 6])
    }

    pub fn with_reflections(dims: [f64; 3], reflections: [f64; 6]) -> Result<Self> {
        let mut surfaces = Vec::with_capacity(6);
        for r in reflections {
            surfaces.push(ReflectionProfile::scalar(r)?);
        }
        let surfaces: [ReflectionProfile; 6] = surfaces.try_into().expect("six surfaces");
        Self::new(Point::from(dims), surfaces, DEFAULT_SOUND_SPEED)
    }

    pub fn with_sound_speed(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Argument(format!("sound speed must be positive, got {c}")));
        }
        self.sound_speed = c;
        Ok(self)
    }

    /// Override the absorbing area of each surface, e.g. when a table stands in for the floor.
    pub fn with_surface_areas(mut self, areas: [f64; 6]) -> Result<Self> {
        if areas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Argument(format!("surface areas must be nonnegative, got {areas:?}")));
        }
        self.surface_areas = Some(areas);
        Ok(self)
    }

    pub fn with_surface(mut self, surface: Surface, profile: ReflectionProfile) -> Self {
        self.surfaces[surface.index()] = profile;
        self
    }

    pub fn dims(&self) -> Point {
        self.dims
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn surfaces(&self) -> &[ReflectionProfile; 6] {
        &self.surfaces
    }

    pub fn surface(&self, s: Surface) -> &ReflectionProfile {
        &self.surfaces[s.index()]
    }

    pub fn reflection(&self, s: Surface, freq_hz: Option<f64>) -> f64 {
        self.surfaces[s.index()].at(freq_hz)
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    /// Absorbing area of a surface; the geometric wall area unless overridden.
    pub fn surface_area(&self, s: Surface) -> f64 {
        if let Some(areas) = &self.surface_areas {
            return areas[s.index()];
        }
        let d = self.dims;
        match s.axis() {
            0 => d.y * d.z,
            1 => d.x * d.z,
            _ => d.x * d.y,
        }
    }

    pub fn surface_areas(&self) -> Option<[f64; 6]> {
        self.surface_areas
    }

    pub fn contains_strictly(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] > 0.0 && p[a] < self.dims[a])
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.dims[a])
    }
}

/// Microphone positions in room coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct MicArray {
    positions: Vec<Point>,
}

impl MicArray {
    pub fn new(positions: Vec<Point>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::Argument(format!(
                "a microphone array needs at least 2 microphones, got {}",
                positions.len()
            )));
        }
        if positions.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Argument("microphone positions must be finite".into()));
        }
        Ok(Self { positions })
    }

    /// Uniform circular array in the horizontal plane.
    pub fn circular(center: Point, radius: f64, count: usize) -> Result<Self> {
        let positions = (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                center + Point::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        Self::new(positions)
    }

    /// Fails if any microphone is not strictly inside `room`.
    pub fn validate_in(&self, room: &RoomSpec) -> Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            if !room.contains_strictly(p) {
                return Err(Error::Domain(format!("microphone {i} at {:?} is outside the room", p.as_slice())));
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Point {
        self.positions.iter().sum::<Point>() / self.positions.len() as f64
    }
}

/// Candidate source positions. Lattices built by [`build_grid`] are planar and
/// row-major in `(y, x)`; grids built from arbitrary points keep the given order.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarGrid {
    cells: Vec<Point>,
    spacing: f64,
    height: f64,
}

impl PlanarGrid {
    pub fn from_points(cells: Vec<Point>, spacing: f64, height: f64) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyGrid("grid has no cells".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Argument(format!("grid spacing must be positive, got {spacing}")));
        }
        let mut seen = HashMap::new();
        for (i, c) in cells.iter().enumerate() {
            if let Some(j) = seen.insert(quantize(c, 1e-9), i) {
                return Err(Error::Argument(format!("grid cells {j} and {i} coincide")));
            }
        }
        Ok(Self { cells, spacing, height })
    }

    pub fn cells(&self) -> &[Point] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Index of the cell nearest to `p`.
    pub fn nearest(&self, p: &Point) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.cells.iter().enumerate() {
            let d = (c - p).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// One actual or virtual source produced by the image model.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSource {
    pub position: Point,
    /// Total number of wall reflections.
    pub order: u32,
    /// Product over surfaces of `coefficient^count`.
    pub gain: f64,
    /// Reflections per surface, in [`Surface::ALL`] order.
    pub reflection_counts: [u32; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSourceSet {
    entries: Vec<ImageSource>,
}

impl ImageSourceSet {
    pub fn entries(&self) -> &[ImageSource] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn direct(&self) -> &ImageSource {
        &self.entries[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImageSource> {
        self.entries.iter()
    }

    pub fn from_entries(entries: Vec<ImageSource>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Argument("image source set is empty".into()));
        }
        Ok(Self { entries })
    }
}

/// Mirror images of `source` with at most `max_order` wall reflections.
///
/// Uses the shoebox lattice: along each axis an image is `(1 - 2p) x + 2 n L`
/// with `p ∈ {0, 1}`, reflecting `|n - p|` times off the low wall and `|n|`
/// times off the high wall. The direct path comes first; entries are sorted by
/// order and then by lattice index.
pub fn enumerate_images(
    room: &RoomSpec,
    source: &Point,
    max_order: i32,
    freq_hz: Option<f64>,
) -> Result<ImageSourceSet> {
    if max_order < 0 {
        return Err(Error::Argument(format!("max_order must be >= 0, got {max_order}")));
    }
    if !room.contains_strictly(source) {
        return Err(Error::Domain(format!(
            "source {:?} is not strictly inside the room",
            source.as_slice()
        )));
    }
    let r = max_order as i64;
    let coeffs: Vec<f64> = Surface::ALL.iter().map(|s| room.reflection(*s, freq_hz)).collect();

    // per axis: (coordinate, low count, high count)
    let axis_terms: Vec<Vec<(f64, u32, u32)>> = (0..3)
        .map(|a| {
            let mut v = Vec::new();
            for n in -r..=r {
                for p in 0..=1i64 {
                    let lo = (n - p).unsigned_abs() as u32;
                    let hi = n.unsigned_abs() as u32;
                    if (lo + hi) as i64 > r {
                        continue;
                    }
                    let sign = if p == 0 { 1.0 } else { -1.0 };
                    v.push((sign * source[a] + 2.0 * n as f64 * room.dims[a], lo, hi));
                }
            }
            v
        })
        .collect();

    let mut entries = Vec::new();
    for &(x, xl, xh) in &axis_terms[0] {
        for &(y, yl, yh) in &axis_terms[1] {
            let partial = xl + xh + yl + yh;
            if partial as i64 > r {
                continue;
            }
            for &(z, zl, zh) in &axis_terms[2] {
                let order = partial + zl + zh;
                if order as i64 > r {
                    continue;
                }
                let counts = [xl, xh, yl, yh, zl, zh];
                let gain = counts
                    .iter()
                    .zip(&coeffs)
                    .map(|(&k, &c)| if k == 0 { 1.0 } else { c.powi(k as i32) })
                    .product();
                entries.push(ImageSource {
                    position: Point::new(x, y, z),
                    order,
                    gain,
                    reflection_counts: counts,
                });
            }
        }
    }
    entries.sort_by_key(|e| e.order);

    let mut seen: HashMap<[i64; 3], usize> = HashMap::new();
    let mut unique = Vec::with_capacity(entries.len());
    for e in entries {
        let key = quantize(&e.position, IMAGE_DEDUP_TOL);
        if seen.contains_key(&key) {
            continue;
        }
        seen.insert(key, unique.len());
        unique.push(e);
    }
    Ok(ImageSourceSet { entries: unique })
}

/// Uniform lattice at `height`, at least `margin` from every wall, row-major in `(y, x)`.
///
/// The lattice is centred in the admissible span on each axis, so a spacing
/// larger than the span yields a single cell in the middle.
pub fn build_grid(room: &RoomSpec, spacing: f64, height: f64, margin: f64) -> Result<PlanarGrid> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Argument(format!("grid spacing must be positive, got {spacing}")));
    }
    let dims = room.dims();
    if !(height > 0.0 && height < dims.z) {
        return Err(Error::Argument(format!(
            "grid height {height} must lie strictly between floor and ceiling (0, {})",
            dims.z
        )));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::Argument(format!("grid margin must be nonnegative, got {margin}")));
    }
    // with zero margin the walls themselves are excluded
    let eff_margin = margin.max(1e-9);
    let axis = |len: f64| -> Result<Vec<f64>> {
        let span = len - 2.0 * eff_margin;
        if span < 0.0 {
            return Err(Error::EmptyGrid(format!(
                "margin {margin} leaves no room along an axis of length {len}"
            )));
        }
        let n = (span / spacing + 1e-12).floor() as usize + 1;
        let offset = eff_margin + (span - (n - 1) as f64 * spacing) / 2.0;
        Ok((0..n).map(|k| offset + k as f64 * spacing).collect())
    };
    let xs = axis(dims.x)?;
    let ys = axis(dims.y)?;
    let mut cells = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            cells.push(Point::new(x, y, height));
        }
    }
    PlanarGrid::from_points(cells, spacing, height)
}

/// The actual-virtual lattice obtained by expanding every grid cell into its images.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedGrid {
    pub points: Vec<Point>,
    /// `groups[i]` indexes cell `i` and its images in `points`; the first entry is the cell itself.
    pub groups: Vec<Vec<usize>>,
    /// Image gain of every point (1 for actual cells).
    pub gains: Vec<f64>,
    pub orders: Vec<u32>,
    pub reflection_counts: Vec<[u32; 6]>,
}

impl ExpandedGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Expand every cell of `grid` into its image set, keeping one group per cell.
pub fn expand_grid_images(
    room: &RoomSpec,
    grid: &PlanarGrid,
    max_order: i32,
    freq_hz: Option<f64>,
) -> Result<ExpandedGrid> {
    let mut out = ExpandedGrid {
        points: Vec::new(),
        groups: Vec::with_capacity(grid.len()),
        gains: Vec::new(),
        orders: Vec::new(),
        reflection_counts: Vec::new(),
    };
    let mut owner = Vec::new();
    for (i, cell) in grid.cells().iter().enumerate() {
        let images = enumerate_images(room, cell, max_order, freq_hz)?;
        let mut group = Vec::with_capacity(images.len());
        for img in images.iter() {
            group.push(out.points.len());
            out.points.push(img.position);
            out.gains.push(img.gain);
            out.orders.push(img.order);
            out.reflection_counts.push(img.reflection_counts);
            owner.push(i);
        }
        out.groups.push(group);
    }

    // sort-and-sweep along x for collisions between different groups
    let mut order: Vec<usize> = (0..out.points.len()).collect();
    order.sort_by(|&a, &b| out.points[a].x.total_cmp(&out.points[b].x));
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if out.points[b].x - out.points[a].x > GROUP_COLLISION_TOL {
                break;
            }
            if owner[a] != owner[b] && (out.points[a] - out.points[b]).norm() <= GROUP_COLLISION_TOL {
                return Err(Error::Ambiguity(format!(
                    "image of cell {} collides with image of cell {} at {:?}",
                    owner[a],
                    owner[b],
                    out.points[a].as_slice()
                )));
            }
        }
    }
    Ok(out)
}

fn quantize(p: &Point, tol: f64) -> [i64; 3] {
    [
        (p.x / tol).round() as i64,
        (p.y / tol).round() as i64,
        (p.z / tol).round() as i64,
    ]
}
