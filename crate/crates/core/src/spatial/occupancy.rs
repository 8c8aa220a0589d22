use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point3;

use super::{raycast_with, VoxelKey};

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyParams {
    /// Voxel edge length in meters.
    pub resolution: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    /// Log-odds clamp bounds.
    pub l_min: f64,
    pub l_max: f64,
    /// Hits farther than this from the sensor are ignored entirely.
    pub max_range: f64,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            p_hit: 0.7,
            p_miss: 0.4,
            l_min: -2.0,
            l_max: 3.5,
            max_range: 60.0,
        }
    }
}

impl OccupancyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad("resolution must be positive");
        }
        if !(self.p_hit > 0.5 && self.p_hit < 1.0) {
            return bad("p_hit must lie in (0.5, 1)");
        }
        if !(self.p_miss > 0.0 && self.p_miss < 0.5) {
            return bad("p_miss must lie in (0, 0.5)");
        }
        if !(self.l_min < 0.0 && self.l_max > 0.0) {
            return bad("clamp bounds must satisfy l_min < 0 < l_max");
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Cell {
    log_odds: f64,
    ground: bool,
}

/// Counters for one or more `integrate_scan` calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanStats {
    pub rays: u64,
    /// Voxels produced by ray traversal, ground cells included.
    pub voxel_visits: u64,
    pub hit_updates: u64,
    pub miss_updates: u64,
}

impl std::ops::AddAssign for ScanStats {
    fn add_assign(&mut self, o: Self) {
        self.rays += o.rays;
        self.voxel_visits += o.voxel_visits;
        self.hit_updates += o.hit_updates;
        self.miss_updates += o.miss_updates;
    }
}

/// Sparse voxel map of clamped log-odds occupancy.
#[derive(Clone, Debug)]
pub struct OccupancyGrid {
    params: OccupancyParams,
    l_hit: f64,
    l_miss: f64,
    cells: FxHashMap<VoxelKey, Cell>,
}

/// Scans with fewer rays than this are traversed on the calling thread.
const PARALLEL_RAYS: usize = 2048;

impl OccupancyGrid {
    pub fn new(params: OccupancyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            l_hit: logit(params.p_hit),
            l_miss: logit(params.p_miss),
            params,
            cells: FxHashMap::default(),
        })
    }

    pub fn params(&self) -> &OccupancyParams {
        &self.params
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    pub fn key(&self, p: &Point3) -> VoxelKey {
        VoxelKey::of(p, self.params.resolution)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn log_odds(&self, key: &VoxelKey) -> Option<f64> {
        self.cells.get(key).map(|c| c.log_odds)
    }

    /// Occupancy probability; cells never touched report the 0.5 prior.
    pub fn occupancy(&self, key: &VoxelKey) -> f64 {
        self.cells.get(key).map_or(0.5, |c| sigmoid(c.log_odds))
    }

    pub fn is_ground(&self, key: &VoxelKey) -> bool {
        self.cells.get(key).is_some_and(|c| c.ground)
    }

    /// Marks a cell as ground: it is skipped by all later hit and miss updates.
    pub fn flag_ground(&mut self, key: VoxelKey) {
        self.cells.entry(key).or_default().ground = true;
    }

    pub fn set_log_odds(&mut self, key: VoxelKey, value: f64) {
        let c = self.cells.entry(key).or_default();
        c.log_odds = value.clamp(self.params.l_min, self.params.l_max);
    }

    pub fn ground_cells(&self) -> impl Iterator<Item = &VoxelKey> {
        self.cells.iter().filter(|(_, c)| c.ground).map(|(k, _)| k)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&VoxelKey, f64)> {
        self.cells.iter().map(|(k, c)| (k, c.log_odds))
    }

    /// Integrates one scan: each hit voxel gains `logit(p_hit)`, every other
    /// voxel crossed by a ray gains `logit(p_miss)`. Each voxel is updated at
    /// most once per scan, hits taking precedence, and ground cells are left
    /// untouched.
    pub fn integrate_scan(&mut self, origin: Point3, hits: &[Point3]) -> ScanStats {
        let res = self.params.resolution;
        let max_range_sq = self.params.max_range * self.params.max_range;
        let in_range: Vec<&Point3> = hits
            .iter()
            .filter(|p| p.distance_squared(&origin) <= max_range_sq)
            .collect();

        let cells = &self.cells;
        let is_ground = |k: &VoxelKey| cells.get(k).is_some_and(|c| c.ground);
        let trace = |mut acc: (FxHashSet<VoxelKey>, u64), p: &&Point3| {
            acc.1 += raycast_with(origin, **p, res, |k| {
                if !is_ground(&k) {
                    acc.0.insert(k);
                }
            }) as u64;
            acc
        };
        let (free, visits) = if in_range.len() < PARALLEL_RAYS {
            in_range.iter().fold((FxHashSet::default(), 0), trace)
        } else {
            in_range
                .par_iter()
                .fold(|| (FxHashSet::default(), 0u64), trace)
                .reduce(
                    || (FxHashSet::default(), 0),
                    |(mut a, na), (mut b, nb)| {
                        if a.len() < b.len() {
                            std::mem::swap(&mut a, &mut b);
                        }
                        a.extend(b);
                        (a, na + nb)
                    },
                )
        };

        let occupied: FxHashSet<VoxelKey> = in_range
            .iter()
            .map(|p| VoxelKey::of(p, res))
            .filter(|k| !is_ground(k))
            .collect();

        let mut stats = ScanStats {
            rays: in_range.len() as u64,
            voxel_visits: visits,
            ..Default::default()
        };
        let (l_min, l_max) = (self.params.l_min, self.params.l_max);
        for k in free.iter().filter(|k| !occupied.contains(*k)) {
            let c = self.cells.entry(*k).or_default();
            c.log_odds = (c.log_odds + self.l_miss).clamp(l_min, l_max);
            stats.miss_updates += 1;
        }
        for k in occupied {
            let c = self.cells.entry(k).or_default();
            c.log_odds = (c.log_odds + self.l_hit).clamp(l_min, l_max);
            stats.hit_updates += 1;
        }
        stats
    }
}
