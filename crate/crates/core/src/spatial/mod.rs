//! Voxel keys, ray traversal, log-odds occupancy and nearest-neighbor search.

mod kdtree;
mod occupancy;
mod raycast;

pub use kdtree::{Neighbor, NeighborIndex};
pub use occupancy::{logit, sigmoid, OccupancyGrid, OccupancyParams, ScanStats};
pub use raycast::{raycast, raycast_with};

use serde::{Deserialize, Serialize};

use crate::geom::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub ix: i32,
    pub iy: i32,
    pub iz: i32,
}

impl VoxelKey {
    pub const fn new(ix: i32, iy: i32, iz: i32) -> Self {
        Self { ix, iy, iz }
    }

    /// `floor(p / resolution)` per component.
    #[inline]
    pub fn of(p: &Point3, resolution: f64) -> Self {
        Self {
            ix: (p.x / resolution).floor() as i32,
            iy: (p.y / resolution).floor() as i32,
            iz: (p.z / resolution).floor() as i32,
        }
    }

    #[inline]
    pub fn axis(&self, axis: usize) -> i32 {
        match axis {
            0 => self.ix,
            1 => self.iy,
            _ => self.iz,
        }
    }

    #[inline]
    fn axis_mut(&mut self, axis: usize) -> &mut i32 {
        match axis {
            0 => &mut self.ix,
            1 => &mut self.iy,
            _ => &mut self.iz,
        }
    }

    /// Center of the cell in world coordinates.
    pub fn center(&self, resolution: f64) -> Point3 {
        Point3::new(
            (self.ix as f64 + 0.5) * resolution,
            (self.iy as f64 + 0.5) * resolution,
            (self.iz as f64 + 0.5) * resolution,
        )
    }
}
