//! Synthetic map generators, deterministic in their seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::voxelmap::{Aabb, MapError, Point, VoxelGrid};

/// Obstacle size limits for the random generators, in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleShape {
    pub min_side: f64,
    pub max_side: f64,
    /// Fraction of room obstacles that are floor-to-ceiling pillars; the rest
    /// are floating blocks.
    pub pillar_fraction: f64,
}

impl Default for ObstacleShape {
    fn default() -> Self {
        Self { min_side: 0.5, max_side: 1.2, pillar_fraction: 0.6 }
    }
}

fn bounds_of(size: [f64; 3]) -> Aabb {
    Aabb::from_arrays([0.0; 3], size)
}

pub fn empty(size: [f64; 3], resolution: f64) -> Result<VoxelGrid, MapError> {
    VoxelGrid::from_primitives(&[], &bounds_of(size), resolution)
}

fn random_block(rng: &mut ChaCha8Rng, size: [f64; 3], shape: &ObstacleShape, pillar: bool) -> Aabb {
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for a in 0..3 {
        if pillar && a == 2 {
            max[2] = size[2];
            continue;
        }
        let side = rng.gen_range(shape.min_side..=shape.max_side).min(size[a]);
        let lo = rng.gen_range(0.0..=(size[a] - side));
        min[a] = lo;
        max[a] = lo + side;
    }
    Aabb::from_arrays(min, max)
}

/// `count` uniformly placed boxes with sides drawn from `shape`.
pub fn random_boxes(
    size: [f64; 3],
    resolution: f64,
    count: usize,
    seed: u64,
    shape: &ObstacleShape,
) -> Result<(VoxelGrid, Vec<Aabb>), MapError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes: Vec<Aabb> = (0..count).map(|_| random_block(&mut rng, size, shape, false)).collect();
    let grid = VoxelGrid::from_primitives(&boxes, &bounds_of(size), resolution)?;
    Ok((grid, boxes))
}

/// Room cluttered with pillars and floating blocks until the occupied voxel
/// fraction reaches `occupancy` (within one percentage point when the
/// obstacle sizes allow it).
pub fn random_room(
    size: [f64; 3],
    resolution: f64,
    occupancy: f64,
    seed: u64,
    shape: &ObstacleShape,
) -> Result<(VoxelGrid, Vec<Aabb>), MapError> {
    let bounds = bounds_of(size);
    let mut grid = VoxelGrid::from_primitives(&[], &bounds, resolution)?;
    let target = occupancy.clamp(0.0, 1.0);
    let total = grid.len() as f64;
    let mut occupied = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes = Vec::new();
    let mut attempts = 0;
    while (occupied as f64) / total < target - 0.01 && attempts < 10_000 {
        attempts += 1;
        let pillar = rng.gen_bool(shape.pillar_fraction.clamp(0.0, 1.0));
        let b = random_block(&mut rng, size, shape, pillar);
        let mut added = Vec::new();
        for_each_center_inside(&grid, &b, |idx| {
            if !grid.get(idx) {
                added.push(idx);
            }
        });
        if (occupied + added.len()) as f64 / total > target + 0.01 {
            continue;
        }
        occupied += added.len();
        for idx in added {
            grid.set(idx, true);
        }
        boxes.push(b);
    }
    Ok((grid, boxes))
}

fn for_each_center_inside(grid: &VoxelGrid, b: &Aabb, mut f: impl FnMut([usize; 3])) {
    let res = grid.resolution();
    let o = grid.origin();
    let dims = grid.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = ((b.min[a] - o[a]) / res - 0.5).ceil().max(0.0);
        let h = ((b.max[a] - o[a]) / res - 0.5).floor().min(dims[a] as f64 - 1.0);
        if h < l {
            return;
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let c: Point = grid.center([i, j, k]);
                if b.contains(&c) {
                    f([i, j, k]);
                }
            }
        }
    }
}
