//! Dense occupancy grid with ray casting, directional clearance and
//! visibility queries.
//!
//! The grid is immutable once built; every query takes `&self` so a single map
//! can be shared by all agent solvers. Anything outside the axis-aligned bounds
//! counts as occupied.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use bitvec::prelude::*;
use nalgebra::Vector3;
use thiserror::Error;

/// World-frame point or direction, in metres.
pub type Point = Vector3<f64>;

/// Number of tangent rays cast around the centre ray (two in the vertical
/// plane, two in the plane perpendicular to it).
pub const DEFAULT_TANGENT_RAYS: usize = 4;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("resolution must be positive, got {0}")]
    NonPositiveResolution(f64),
    #[error("map bounds are empty or degenerate")]
    EmptyBounds,
    #[error("point ({0:.3}, {1:.3}, {2:.3}) is outside the map")]
    OutOfBounds(f64, f64, f64),
    #[error("point ({0:.3}, {1:.3}, {2:.3}) is inside an occupied voxel")]
    Occupied(f64, f64, f64),
    #[error("ray direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("ray range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("attractor and target coincide")]
    CoincidentPoints,
    #[error("voxmap parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn out_of_bounds(p: &Point) -> MapError {
    MapError::OutOfBounds(p.x, p.y, p.z)
}

fn occupied(p: &Point) -> MapError {
    MapError::Occupied(p.x, p.y, p.z)
}

/// Axis-aligned box in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn from_arrays(min: [f64; 3], max: [f64; 3]) -> Self {
        Self::new(Point::from(min), Point::from(max))
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Point {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|a| !(self.max[a] > self.min[a]) || !self.min[a].is_finite() || !self.max[a].is_finite())
    }
}

/// Result of a single ray cast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub hit: bool,
    pub point: Point,
    pub distance: f64,
}

/// Voxel index `[i, j, k]`.
pub type VoxelIndex = [usize; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    origin: Point,
    resolution: f64,
    dims: [usize; 3],
    occupancy: BitVec,
}

impl VoxelGrid {
    /// All-free grid.
    pub fn new(origin: Point, resolution: f64, dims: [usize; 3]) -> Result<Self, MapError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(MapError::NonPositiveResolution(resolution));
        }
        if dims.iter().any(|&d| d == 0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(MapError::EmptyBounds);
        }
        let len = dims[0] * dims[1] * dims[2];
        Ok(Self { origin, resolution, dims, occupancy: bitvec![0; len] })
    }

    /// Rasterises `boxes` into a grid covering `bounds`. A voxel is occupied iff
    /// its centre lies inside at least one box.
    pub fn from_primitives(boxes: &[Aabb], bounds: &Aabb, resolution: f64) -> Result<Self, MapError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(MapError::NonPositiveResolution(resolution));
        }
        if bounds.is_degenerate() {
            return Err(MapError::EmptyBounds);
        }
        let ext = bounds.extent();
        let mut dims = [0usize; 3];
        for a in 0..3 {
            // Tolerate extents that are an integer multiple of the resolution up to rounding.
            dims[a] = ((ext[a] / resolution) - 1e-9).ceil().max(1.0) as usize;
        }
        let mut grid = Self::new(bounds.min, resolution, dims)?;
        for b in boxes {
            let lo = grid.index_range_inside(b);
            let Some((lo, hi)) = lo else { continue };
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        if b.contains(&grid.center([i, j, k])) {
                            grid.set([i, j, k], true);
                        }
                    }
                }
            }
        }
        Ok(grid)
    }

    // Conservative index range of voxels whose centres may fall inside `b`.
    fn index_range_inside(&self, b: &Aabb) -> Option<(VoxelIndex, VoxelIndex)> {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let l = ((b.min[a] - self.origin[a]) / self.resolution - 0.5).floor();
            let h = ((b.max[a] - self.origin[a]) / self.resolution - 0.5).ceil();
            let l = l.max(0.0);
            let h = h.min(self.dims[a] as f64 - 1.0);
            if h < l {
                return None;
            }
            lo[a] = l as usize;
            hi[a] = h as usize;
        }
        Some((lo, hi))
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let size = Point::new(
            self.dims[0] as f64 * self.resolution,
            self.dims[1] as f64 * self.resolution,
            self.dims[2] as f64 * self.resolution,
        );
        Aabb::new(self.origin, self.origin + size)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.count_ones()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_count() as f64 / self.len() as f64
    }

    #[inline]
    pub fn linear(&self, idx: VoxelIndex) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    #[inline]
    pub fn unlinear(&self, lin: usize) -> VoxelIndex {
        let i = lin % self.dims[0];
        let rest = lin / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Voxel containing `p`, or `None` outside the half-open bounds.
    pub fn voxel_of(&self, p: &Point) -> Option<VoxelIndex> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor();
            if !(f >= 0.0) || f >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }

    pub fn center(&self, idx: VoxelIndex) -> Point {
        Point::new(
            self.origin.x + (idx[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (idx[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (idx[2] as f64 + 0.5) * self.resolution,
        )
    }

    pub fn center_linear(&self, lin: usize) -> Point {
        self.center(self.unlinear(lin))
    }

    #[inline]
    pub fn get(&self, idx: VoxelIndex) -> bool {
        self.occupancy[self.linear(idx)]
    }

    #[inline]
    pub fn get_linear(&self, lin: usize) -> bool {
        self.occupancy[lin]
    }

    pub fn set(&mut self, idx: VoxelIndex, value: bool) {
        let lin = self.linear(idx);
        self.occupancy.set(lin, value);
    }

    #[inline]
    fn get_signed(&self, idx: [i64; 3]) -> bool {
        if idx[0] < 0
            || idx[1] < 0
            || idx[2] < 0
            || idx[0] >= self.dims[0] as i64
            || idx[1] >= self.dims[1] as i64
            || idx[2] >= self.dims[2] as i64
        {
            return true;
        }
        self.get([idx[0] as usize, idx[1] as usize, idx[2] as usize])
    }

    /// Occupancy at a world point; out-of-bounds counts as occupied.
    pub fn is_occupied(&self, p: &Point) -> bool {
        match self.voxel_of(p) {
            Some(idx) => self.get(idx),
            None => true,
        }
    }

    pub fn is_free(&self, p: &Point) -> bool {
        !self.is_occupied(p)
    }

    pub fn occupied_voxels(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        self.occupancy.iter_ones().map(move |lin| self.unlinear(lin))
    }

    /// 26-connected neighbours that lie inside the grid.
    pub fn neighbors26(&self, idx: VoxelIndex) -> impl Iterator<Item = (VoxelIndex, [i64; 3])> + '_ {
        NEIGHBOR_OFFSETS.iter().filter_map(move |off| {
            let n = [idx[0] as i64 + off[0], idx[1] as i64 + off[1], idx[2] as i64 + off[2]];
            if (0..3).all(|a| n[a] >= 0 && n[a] < self.dims[a] as i64) {
                Some(([n[0] as usize, n[1] as usize, n[2] as usize], *off))
            } else {
                None
            }
        })
    }

    /// Grows obstacles: an output voxel is occupied iff some occupied input
    /// voxel centre lies within `radius + resolution / 2` of its centre.
    pub fn inflate(&self, radius: f64) -> VoxelGrid {
        let radius = radius.max(0.0);
        if radius == 0.0 {
            return self.clone();
        }
        let reach = radius + 0.5 * self.resolution;
        let kernel = sphere_kernel(reach / self.resolution);
        let mut out = self.clone();
        for lin in self.occupancy.iter_ones() {
            let c = self.unlinear(lin);
            for off in &kernel {
                let n = [c[0] as i64 + off[0], c[1] as i64 + off[1], c[2] as i64 + off[2]];
                if (0..3).all(|a| n[a] >= 0 && n[a] < self.dims[a] as i64) {
                    let l = self.linear([n[0] as usize, n[1] as usize, n[2] as usize]);
                    out.occupancy.set(l, true);
                }
            }
        }
        out
    }

    /// Marks voxels next to the map boundary as occupied, treating the space
    /// beyond the bounds as an obstacle under the same rule as [`inflate`].
    ///
    /// [`inflate`]: VoxelGrid::inflate
    pub fn occupy_border(&self, radius: f64) -> VoxelGrid {
        let mut out = self.clone();
        let reach = radius.max(0.0) + 0.5 * self.resolution + 1e-12;
        // Virtual out-of-bounds voxel at index -1 sits (i + 1) voxels away.
        let layers = (reach / self.resolution).floor() as usize;
        if layers == 0 {
            return out;
        }
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let near = |v: usize, n: usize| v < layers || v + layers >= n;
                    if near(i, nx) || near(j, ny) || near(k, nz) {
                        out.set([i, j, k], true);
                    }
                }
            }
        }
        out
    }

    /// Exact voxel traversal along a ray. The origin must lie in a free voxel
    /// inside the bounds. Reports the entry face of the first occupied (or
    /// out-of-bounds) voxel, or a miss at `max_range`.
    pub fn cast_ray(&self, origin: &Point, direction: &Point, max_range: f64) -> Result<RayHit, MapError> {
        let norm = direction.norm();
        if !((norm - 1.0).abs() <= UNIT_TOL) {
            return Err(MapError::NonUnitDirection(norm));
        }
        if !(max_range > 0.0) {
            return Err(MapError::NonPositiveRange(max_range));
        }
        let start = self.voxel_of(origin).ok_or_else(|| out_of_bounds(origin))?;
        if self.get(start) {
            return Err(occupied(origin));
        }
        Ok(self.traverse(origin, start, direction, max_range))
    }

    fn traverse(&self, origin: &Point, start: VoxelIndex, dir: &Point, max_range: f64) -> RayHit {
        let res = self.resolution;
        let mut idx = [start[0] as i64, start[1] as i64, start[2] as i64];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let d = dir[a];
            if d > 0.0 {
                step[a] = 1;
                let boundary = self.origin[a] + (idx[a] + 1) as f64 * res;
                t_max[a] = ((boundary - origin[a]) / d).max(0.0);
                t_delta[a] = res / d;
            } else if d < 0.0 {
                step[a] = -1;
                let boundary = self.origin[a] + idx[a] as f64 * res;
                t_max[a] = ((boundary - origin[a]) / d).max(0.0);
                t_delta[a] = -res / d;
            }
        }
        loop {
            let mut axis = 0;
            if t_max[1] < t_max[axis] {
                axis = 1;
            }
            if t_max[2] < t_max[axis] {
                axis = 2;
            }
            let t = t_max[axis];
            if t > max_range {
                return RayHit { hit: false, point: origin + dir * max_range, distance: max_range };
            }
            idx[axis] += step[axis];
            t_max[axis] += t_delta[axis];
            if self.get_signed(idx) {
                return RayHit { hit: true, point: origin + dir * t, distance: t };
            }
        }
    }

    /// Directional clearance from `attractor` towards `target` for a sphere of
    /// radius `agent_radius`, using the default five-ray fan.
    pub fn directional_clearance(
        &self,
        attractor: &Point,
        target: &Point,
        agent_radius: f64,
        max_range: f64,
    ) -> Result<f64, MapError> {
        self.directional_clearance_with(attractor, target, agent_radius, max_range, DEFAULT_TANGENT_RAYS)
    }

    /// Casts a centre ray plus `tangent_rays` rays tangent to the sphere of
    /// radius `agent_radius` around `target`, projects the nearest hit onto the
    /// attractor→target axis and subtracts the radius. The result is clamped to
    /// `[0, max_range]`; no hit at all yields `max_range`. The returned point
    /// always passes [`sphere_free`](VoxelGrid::sphere_free) unless the result is 0.
    pub fn directional_clearance_with(
        &self,
        attractor: &Point,
        target: &Point,
        agent_radius: f64,
        max_range: f64,
        tangent_rays: usize,
    ) -> Result<f64, MapError> {
        if !(max_range > 0.0) {
            return Err(MapError::NonPositiveRange(max_range));
        }
        let start = self.voxel_of(attractor).ok_or_else(|| out_of_bounds(attractor))?;
        if self.get(start) {
            return Err(occupied(attractor));
        }
        let offset = target - attractor;
        let len = offset.norm();
        if !(len > 1e-12) {
            return Err(MapError::CoincidentPoints);
        }
        let radius = agent_radius.max(0.0);
        if len <= radius {
            return Ok(0.0);
        }
        let axis = offset / len;
        let mut nearest = f64::INFINITY;
        for dir in ray_fan(&axis, (radius / len).asin(), tangent_rays) {
            let hit = self.traverse(attractor, start, &dir, max_range);
            if hit.hit {
                nearest = nearest.min((hit.point - attractor).dot(&axis));
            }
        }
        let mut d = if nearest.is_infinite() { max_range } else { (nearest - radius).clamp(0.0, max_range) };
        // The fan can miss obstacles between its rays, and a hit on a voxel
        // face leaves the point on the occupied side. Back off until the
        // sphere is clear.
        let step = 0.25 * self.resolution;
        while d > 0.0 && !self.sphere_free(&(attractor + axis * d), radius) {
            d = (d - step).max(0.0);
        }
        Ok(d)
    }

    /// Whether `p` is free in this grid inflated by `radius` (see
    /// [`inflate`](VoxelGrid::inflate)); outside the bounds is never free.
    pub fn sphere_free(&self, p: &Point, radius: f64) -> bool {
        let Some(c) = self.voxel_of(p) else {
            return false;
        };
        let reach = (radius.max(0.0) + 0.5 * self.resolution) / self.resolution;
        let span = reach.floor() as i64;
        let limit = reach * reach + 1e-9;
        for dk in -span..=span {
            for dj in -span..=span {
                for di in -span..=span {
                    if (di * di + dj * dj + dk * dk) as f64 > limit {
                        continue;
                    }
                    let n = [c[0] as i64 + di, c[1] as i64 + dj, c[2] as i64 + dk];
                    if (0..3).all(|a| n[a] >= 0 && n[a] < self.dims[a] as i64)
                        && self.get([n[0] as usize, n[1] as usize, n[2] as usize])
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Visibility of `b` from `a` for a sphere of radius `agent_radius`: the
    /// centre ray and the tangent rays towards the sphere around `b` must all
    /// run their full length through free voxels.
    pub fn is_visible(&self, a: &Point, b: &Point, agent_radius: f64) -> Result<bool, MapError> {
        self.is_visible_with(a, b, agent_radius, DEFAULT_TANGENT_RAYS)
    }

    pub fn is_visible_with(
        &self,
        a: &Point,
        b: &Point,
        agent_radius: f64,
        tangent_rays: usize,
    ) -> Result<bool, MapError> {
        let start = self.voxel_of(a).ok_or_else(|| out_of_bounds(a))?;
        if self.get(start) {
            return Err(occupied(a));
        }
        let end = self.voxel_of(b).ok_or_else(|| out_of_bounds(b))?;
        if self.get(end) {
            return Err(occupied(b));
        }
        let offset = b - a;
        let len = offset.norm();
        if len <= 1e-12 {
            return Ok(true);
        }
        let axis = offset / len;
        if self.traverse(a, start, &axis, len).hit {
            return Ok(false);
        }
        let radius = agent_radius.max(0.0);
        if radius == 0.0 || len <= radius {
            return Ok(true);
        }
        let tangent_len = (len * len - radius * radius).sqrt();
        let half_angle = (radius / len).asin();
        for dir in ray_fan(&axis, half_angle, tangent_rays).into_iter().skip(1) {
            if self.traverse(a, start, &dir, tangent_len).hit {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Distance from `p` to the nearest occupied voxel centre minus half a
    /// voxel, floored at zero. Returns `max_range` when nothing is occupied
    /// within that range. Brute-force scan; see [`DistanceField`] for the
    /// precomputed variant.
    pub fn nearest_obstacle_distance(&self, p: &Point, max_range: f64) -> Result<f64, MapError> {
        let c = self.voxel_of(p).ok_or_else(|| out_of_bounds(p))?;
        let span = ((max_range + self.resolution) / self.resolution).ceil() as i64;
        let mut best = f64::INFINITY;
        for dk in -span..=span {
            for dj in -span..=span {
                for di in -span..=span {
                    let n = [c[0] as i64 + di, c[1] as i64 + dj, c[2] as i64 + dk];
                    if (0..3).any(|a| n[a] < 0 || n[a] >= self.dims[a] as i64) {
                        continue;
                    }
                    let n = [n[0] as usize, n[1] as usize, n[2] as usize];
                    if self.get(n) {
                        best = best.min((self.center(n) - p).norm());
                    }
                }
            }
        }
        let d = (best - 0.5 * self.resolution).max(0.0);
        Ok(if d < max_range { d } else { max_range })
    }

    /// Nearest free voxel centre to `p` within `max_radius`, searching shells
    /// of increasing Chebyshev radius. Ties go to the lowest linear index.
    pub fn nearest_free(&self, p: &Point, max_radius: f64) -> Option<Point> {
        if let Some(idx) = self.voxel_of(p) {
            if !self.get(idx) {
                return Some(*p);
            }
        }
        let res = self.resolution;
        let rel = (p - self.origin) / res;
        let c = [rel.x.floor() as i64, rel.y.floor() as i64, rel.z.floor() as i64];
        let max_shell = (max_radius / res).ceil() as i64 + 1;
        let mut best: Option<(f64, usize)> = None;
        for shell in 1..=max_shell {
            for dk in -shell..=shell {
                for dj in -shell..=shell {
                    for di in -shell..=shell {
                        if di.abs().max(dj.abs()).max(dk.abs()) != shell {
                            continue;
                        }
                        let n = [c[0] + di, c[1] + dj, c[2] + dk];
                        if self.get_signed(n) {
                            continue;
                        }
                        let n = [n[0] as usize, n[1] as usize, n[2] as usize];
                        let d = (self.center(n) - p).norm();
                        let lin = self.linear(n);
                        if d <= max_radius && best.map_or(true, |(bd, bl)| d < bd || (d == bd && lin < bl)) {
                            best = Some((d, lin));
                        }
                    }
                }
            }
            // Anything in a further shell is at least `shell * res` away.
            if let Some((d, _)) = best {
                if d <= shell as f64 * res {
                    break;
                }
            }
        }
        best.map(|(_, lin)| self.center_linear(lin))
    }

    /// Writes the `voxmap v1` text format.
    pub fn write_voxmap<W: Write>(&self, mut w: W) -> Result<(), MapError> {
        writeln!(
            w,
            "voxmap v1 {} {} {} {} {} {} {}",
            self.origin.x, self.origin.y, self.origin.z, self.resolution, self.dims[0], self.dims[1], self.dims[2]
        )?;
        for lin in self.occupancy.iter_ones() {
            let [i, j, k] = self.unlinear(lin);
            writeln!(w, "{i} {j} {k}")?;
        }
        Ok(())
    }

    pub fn read_voxmap<R: BufRead>(r: R) -> Result<Self, MapError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| MapError::Parse { line: 1, msg: "missing header".into() })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 9 || fields[0] != "voxmap" || fields[1] != "v1" {
            return Err(MapError::Parse { line: 1, msg: format!("bad header `{header}`") });
        }
        let float = |s: &str| {
            s.parse::<f64>().map_err(|e| MapError::Parse { line: 1, msg: format!("`{s}`: {e}") })
        };
        let int = |s: &str| {
            s.parse::<usize>().map_err(|e| MapError::Parse { line: 1, msg: format!("`{s}`: {e}") })
        };
        let origin = Point::new(float(fields[2])?, float(fields[3])?, float(fields[4])?);
        let res = float(fields[5])?;
        let dims = [int(fields[6])?, int(fields[7])?, int(fields[8])?];
        let mut grid = Self::new(origin, res, dims)?;
        for (n, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| MapError::Parse { line: n + 1, msg };
            if parts.len() != 3 {
                return Err(bad(format!("expected `i j k`, got `{line}`")));
            }
            let mut idx = [0usize; 3];
            for a in 0..3 {
                idx[a] = parts[a].parse().map_err(|e| bad(format!("`{}`: {e}", parts[a])))?;
                if idx[a] >= dims[a] {
                    return Err(bad(format!("index {} out of range on axis {a}", idx[a])));
                }
            }
            grid.set(idx, true);
        }
        Ok(grid)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MapError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_voxmap(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        Self::read_voxmap(BufReader::new(File::open(path)?))
    }
}

/// Free-function form of [`VoxelGrid::from_primitives`].
pub fn build_from_primitives(boxes: &[Aabb], bounds: &Aabb, resolution: f64) -> Result<VoxelGrid, MapError> {
    VoxelGrid::from_primitives(boxes, bounds, resolution)
}

const NEIGHBOR_OFFSETS: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dk = -1;
    while dk <= 1 {
        let mut dj = -1;
        while dj <= 1 {
            let mut di = -1;
            while di <= 1 {
                if !(di == 0 && dj == 0 && dk == 0) {
                    out[n] = [di, dj, dk];
                    n += 1;
                }
                di += 1;
            }
            dj += 1;
        }
        dk += 1;
    }
    out
};

fn sphere_kernel(reach_voxels: f64) -> Vec<[i64; 3]> {
    let span = reach_voxels.floor() as i64;
    let limit = reach_voxels * reach_voxels + 1e-9;
    let mut out = Vec::new();
    for dk in -span..=span {
        for dj in -span..=span {
            for di in -span..=span {
                if (di * di + dj * dj + dk * dk) as f64 <= limit {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

/// Unit vector perpendicular to `axis`, lying in the plane spanned by `axis`
/// and world z (world x when `axis` is vertical).
fn vertical_plane_normal(axis: &Point) -> Point {
    let z = Point::z();
    let perp = z - axis * axis.dot(&z);
    if perp.norm() > 1e-9 {
        perp.normalize()
    } else {
        let x = Point::x();
        (x - axis * axis.dot(&x)).normalize()
    }
}

/// Centre direction followed by `count` directions on the cone of the given
/// half angle. The first two tangent rays lie in the vertical plane through
/// the axis, the next two in the perpendicular plane; larger counts space the
/// rays evenly around the cone.
pub fn ray_fan(axis: &Point, half_angle: f64, count: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(count + 1);
    out.push(*axis);
    if count == 0 {
        return out;
    }
    let e1 = vertical_plane_normal(axis);
    let e2 = axis.cross(&e1);
    let (s, c) = half_angle.sin_cos();
    if count == 4 {
        for e in [e1, -e1, e2, -e2] {
            out.push((axis * c + e * s).normalize());
        }
    } else {
        for m in 0..count {
            let phi = std::f64::consts::TAU * m as f64 / count as f64;
            let e = e1 * phi.cos() + e2 * phi.sin();
            out.push((axis * c + e * s).normalize());
        }
    }
    out
}

/// Exact Euclidean distance transform of a grid's occupied voxels, with the
/// nearest occupied voxel recorded per cell. Built once per map; queries are
/// constant time.
#[derive(Clone, Debug)]
pub struct DistanceField {
    origin: Point,
    resolution: f64,
    dims: [usize; 3],
    nearest: Vec<u32>,
}

const NO_SITE: u32 = u32::MAX;

impl DistanceField {
    pub fn new(grid: &VoxelGrid) -> Self {
        let [nx, ny, nz] = grid.dims();
        let n = grid.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut site = vec![NO_SITE; n];
        for lin in grid.occupancy.iter_ones() {
            dist[lin] = 0.0;
            site[lin] = lin as u32;
        }
        let mut f = Vec::new();
        let mut fs = Vec::new();
        let mut buf = Envelope::default();
        let strides = [1, nx, nx * ny];
        let lens = [nx, ny, nz];
        for axis in 0..3 {
            let len = lens[axis];
            let stride = strides[axis];
            // Enumerate every line parallel to `axis` by its starting index.
            let (o1, o2) = match axis {
                0 => ((ny, nx), (nz, nx * ny)),
                1 => ((nx, 1), (nz, nx * ny)),
                _ => ((nx, 1), (ny, nx)),
            };
            for b in 0..o2.0 {
                for a in 0..o1.0 {
                    let base = a * o1.1 + b * o2.1;
                    f.clear();
                    fs.clear();
                    for t in 0..len {
                        f.push(dist[base + t * stride]);
                        fs.push(site[base + t * stride]);
                    }
                    buf.transform(&f, &fs, |t, d, s| {
                        dist[base + t * stride] = d;
                        site[base + t * stride] = s;
                    });
                }
            }
        }
        Self { origin: grid.origin(), resolution: grid.resolution(), dims: grid.dims(), nearest: site }
    }

    fn center(&self, lin: usize) -> Point {
        let i = lin % self.dims[0];
        let rest = lin / self.dims[0];
        let (j, k) = (rest % self.dims[1], rest / self.dims[1]);
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
            self.origin.z + (k as f64 + 0.5) * self.resolution,
        )
    }

    /// Same quantity as [`VoxelGrid::nearest_obstacle_distance`], evaluated
    /// from the sites recorded in the voxel containing `p` (clamped into the
    /// grid) and its 26 neighbours. Infinite when the grid has no obstacles.
    pub fn nearest_obstacle_distance(&self, p: &Point) -> f64 {
        let mut c = [0i64; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor();
            c[a] = (f as i64).clamp(0, self.dims[a] as i64 - 1);
        }
        let mut best = f64::INFINITY;
        for dk in -1..=1i64 {
            for dj in -1..=1i64 {
                for di in -1..=1i64 {
                    let n = [c[0] + di, c[1] + dj, c[2] + dk];
                    if (0..3).any(|a| n[a] < 0 || n[a] >= self.dims[a] as i64) {
                        continue;
                    }
                    let lin = n[0] as usize + self.dims[0] * (n[1] as usize + self.dims[1] * n[2] as usize);
                    let s = self.nearest[lin];
                    if s != NO_SITE {
                        best = best.min((self.center(s as usize) - p).norm());
                    }
                }
            }
        }
        (best - 0.5 * self.resolution).max(0.0)
    }
}

/// Scratch space for the 1-D lower-envelope pass of the distance transform.
#[derive(Default)]
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn transform(&mut self, f: &[f64], sites: &[u32], mut out: impl FnMut(usize, f64, u32)) {
        let n = f.len();
        self.v.clear();
        self.z.clear();
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + (q * q) as f64;
            loop {
                let Some(&p) = self.v.last() else { break };
                let fp = f[p] + (p * p) as f64;
                let s = (fq - fp) / (2.0 * (q as f64 - p as f64));
                if s <= *self.z.last().unwrap() {
                    self.v.pop();
                    self.z.pop();
                } else {
                    self.v.push(q);
                    self.z.push(s);
                    break;
                }
            }
            if self.v.is_empty() {
                self.v.push(q);
                self.z.push(f64::NEG_INFINITY);
            }
        }
        if self.v.is_empty() {
            for q in 0..n {
                out(q, f64::INFINITY, NO_SITE);
            }
            return;
        }
        let mut k = 0;
        for q in 0..n {
            while k + 1 < self.v.len() && self.z[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.v[k];
            let dq = q as f64 - p as f64;
            out(q, dq * dq + f[p], sites[p]);
        }
    }
}
