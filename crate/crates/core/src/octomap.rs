//! Occupancy-mapping cleaners: plain log-odds mapping, plus ground
//! estimation (`G`) and outlier filtering ahead of it (`GF`).

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{LabelMask, Point3, ScanFrame};
use crate::preprocess::{ransac_ground_with, sor_filter, RansacParams};
use crate::spatial::{OccupancyGrid, OccupancyParams, ScanStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    /// Per-frame ground estimation; ground cells skip ray casting.
    G,
    /// `G` preceded by statistical outlier removal.
    GF,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundConfig {
    pub dist_thresh: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        let r = RansacParams::default();
        Self {
            dist_thresh: r.dist_thresh,
            max_iters: r.max_iters,
            seed: r.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub k: usize,
    pub std_mult: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { k: 10, std_mult: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OctomapConfig {
    pub grid: OccupancyParams,
    pub occupancy_threshold: f64,
    pub ground: GroundConfig,
    /// Reject ground planes tilted more than this many degrees.
    pub max_tilt_deg: Option<f64>,
    pub filter: FilterConfig,
}

impl Default for OctomapConfig {
    fn default() -> Self {
        Self {
            grid: OccupancyParams::default(),
            occupancy_threshold: 0.5,
            ground: GroundConfig::default(),
            max_tilt_deg: None,
            filter: FilterConfig::default(),
        }
    }
}

impl OctomapConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(format!("octomap: {e}")))?;
        if !(self.occupancy_threshold > 0.0 && self.occupancy_threshold < 1.0) {
            return Err(Error::Config("octomap: occupancy_threshold must lie in (0, 1)".into()));
        }
        if !(self.ground.dist_thresh > 0.0) || self.ground.max_iters == 0 {
            return Err(Error::Config("octomap.ground: dist_thresh and max_iters must be positive".into()));
        }
        if self.filter.k == 0 || !(self.filter.std_mult > 0.0) {
            return Err(Error::Config("octomap.filter: k and std_mult must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OctomapRun {
    pub variant: Variant,
    pub grid: OccupancyGrid,
    pub occupancy_threshold: f64,
    pub stats: ScanStats,
    /// Accumulated world points that passed filtering, in frame order.
    pub points: Vec<Point3>,
    /// Parallel to `points`: classified as ground by its frame's plane fit.
    pub ground: Vec<bool>,
    pub removed_outliers: usize,
    pub frame_seconds: Vec<f64>,
}

impl OctomapRun {
    /// Total voxel visits performed by ray casting over the run.
    pub fn count_rays(&self) -> u64 {
        self.stats.voxel_visits
    }

    pub fn is_static_at(&self, p: &Point3) -> bool {
        let k = self.grid.key(p);
        self.grid.is_ground(&k) || self.grid.occupancy(&k) >= self.occupancy_threshold
    }

    /// Verdict per reference point: dynamic iff its cell is below threshold and not ground.
    pub fn label_mask(&self, reference: &[Point3]) -> LabelMask {
        let flags: Vec<bool> = reference.iter().map(|p| !self.is_static_at(p)).collect();
        LabelMask::from_dynamic_flags(&flags)
    }

    /// Accumulated points whose cell is static, which includes every ground point.
    pub fn static_cloud(&self) -> Vec<Point3> {
        self.points
            .iter()
            .zip(&self.ground)
            .filter(|(p, &g)| g || self.is_static_at(p))
            .map(|(p, _)| *p)
            .collect()
    }
}

pub fn run_octomap(frames: &[ScanFrame], variant: Variant, cfg: &OctomapConfig) -> Result<OctomapRun> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("octomap needs at least one frame".into()));
    }
    cfg.validate()?;
    let mut grid = OccupancyGrid::new(cfg.grid.clone())?;
    let mut run = OctomapRun {
        variant,
        grid: OccupancyGrid::new(cfg.grid.clone())?,
        occupancy_threshold: cfg.occupancy_threshold,
        stats: ScanStats::default(),
        points: Vec::new(),
        ground: Vec::new(),
        removed_outliers: 0,
        frame_seconds: Vec::with_capacity(frames.len()),
    };
    for frame in frames {
        let start = Instant::now();
        let mut local: Vec<Point3> = frame.points.clone();
        if variant == Variant::GF && local.len() > cfg.filter.k {
            let keep = sor_filter(&local, cfg.filter.k, cfg.filter.std_mult)?;
            let before = local.len();
            local = local.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect();
            run.removed_outliers += before - local.len();
        }
        let ground = match variant {
            Variant::Baseline => vec![false; local.len()],
            Variant::G | Variant::GF => {
                let params = RansacParams {
                    dist_thresh: cfg.ground.dist_thresh,
                    max_iters: cfg.ground.max_iters,
                    seed: cfg.ground.seed.wrapping_add(frame.index),
                    max_tilt_deg: cfg.max_tilt_deg,
                };
                match ransac_ground_with(&local, &params) {
                    Ok((_, mask)) => mask,
                    Err(e) => {
                        warn!("frame {}: no ground plane ({e}); integrating all points", frame.index);
                        vec![false; local.len()]
                    }
                }
            }
        };
        let to_world = frame.pose.transform();
        let world: Vec<Point3> = local.iter().map(|p| to_world.apply(p)).collect();
        let mut hits = Vec::with_capacity(world.len());
        for (p, &g) in world.iter().zip(&ground) {
            if g {
                grid.flag_ground(grid.key(p));
            } else {
                hits.push(*p);
            }
        }
        run.stats += grid.integrate_scan(frame.sensor_origin(), &hits);
        run.frame_seconds.push(start.elapsed().as_secs_f64());
        run.points.extend(world);
        run.ground.extend(ground);
    }
    run.grid = grid;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;

    fn wall_frame(i: u64) -> ScanFrame {
        let pts: Vec<Point3> = (0..40)
            .flat_map(|a| (0..10).map(move |b| Point3::new(10.05, -1.95 + a as f64 * 0.1, 0.05 + b as f64 * 0.1)))
            .collect();
        ScanFrame::new(i, Pose::identity(), pts).unwrap()
    }

    #[test]
    fn static_wall_seen_ten_times() {
        let frames: Vec<ScanFrame> = (0..10).map(wall_frame).collect();
        let run = run_octomap(&frames, Variant::Baseline, &OctomapConfig::default()).unwrap();
        let wall = &frames[0].points;
        for p in wall {
            assert!(run.grid.occupancy(&run.grid.key(p)) > 0.97);
        }
        assert_eq!(run.label_mask(wall).dynamic_count(), 0);
        assert_eq!(run.static_cloud().len(), 4000);
    }

    #[test]
    fn one_ray_counts_its_voxels() {
        let f = ScanFrame::new(0, Pose::from_xyz_yaw(0.05, 0.05, 0.05, 0.0), vec![Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let run = run_octomap(&[f], Variant::Baseline, &OctomapConfig::default()).unwrap();
        assert_eq!(run.count_rays(), 10);
    }

    #[test]
    fn empty_frames_rejected() {
        assert!(run_octomap(&[], Variant::G, &OctomapConfig::default()).is_err());
    }

    #[test]
    fn ground_points_kept_and_skip_rays() {
        // Sensor 1.7 m over a flat floor with a post in front.
        let mut pts = Vec::new();
        for a in 0..60 {
            for b in 0..60 {
                pts.push(Point3::new(-2.95 + a as f64 * 0.1, -2.95 + b as f64 * 0.1, -1.65));
            }
        }
        for b in 0..15 {
            pts.push(Point3::new(2.05, 0.05, -1.35 + b as f64 * 0.1));
        }
        let f = ScanFrame::new(0, Pose::from_xyz_yaw(0.0, 0.0, 1.7, 0.0), pts.clone()).unwrap();
        let g = run_octomap(std::slice::from_ref(&f), Variant::G, &OctomapConfig::default()).unwrap();
        let b = run_octomap(&[f], Variant::Baseline, &OctomapConfig::default()).unwrap();
        assert_eq!(g.ground.iter().filter(|&&x| x).count(), 3600);
        assert_eq!(g.static_cloud().len(), pts.len());
        assert!(g.count_rays() < b.count_rays());
    }
}
