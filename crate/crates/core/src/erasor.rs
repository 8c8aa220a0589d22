//! Pseudo-occupancy cleaning over polar bins.
//!
//! For each query scan, the map cropped to the scan's range is binned by
//! (ring, sector) around the sensor. Bins whose query height span is much
//! smaller than the map's are candidates; a per-bin ground plane fit keeps the
//! ground and marks the rest of the candidate bin dynamic.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{LabelMask, Point3, Pose, ScanFrame};
use crate::preprocess::{fit_plane, PlaneModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErasorConfig {
    pub n_rings: usize,
    pub n_sectors: usize,
    pub max_range: f64,
    /// Candidate when query span / map span falls below this.
    pub ratio_thresh: f64,
    /// Map bins with fewer points are never candidates.
    pub min_map_points: usize,
    pub rgpf_iterations: usize,
    pub ground_thresh: f64,
    /// Fraction of a bin's lowest points seeding the plane fit.
    pub seed_ratio: f64,
    /// Sensor height above ground; converts `min_h`/`max_h` to sensor-relative z.
    pub sensor_height: f64,
    /// Height window above ground; points outside it are not binned.
    pub min_h: f64,
    pub max_h: f64,
}

impl Default for ErasorConfig {
    fn default() -> Self {
        Self {
            n_rings: 20,
            n_sectors: 60,
            max_range: 60.0,
            ratio_thresh: 0.2,
            min_map_points: 5,
            rgpf_iterations: 3,
            ground_thresh: 0.125,
            seed_ratio: 0.2,
            sensor_height: 1.73,
            min_h: -1.0,
            max_h: 3.0,
        }
    }
}

impl ErasorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("erasor: {m}")));
        if self.n_rings == 0 || self.n_sectors == 0 {
            return bad("n_rings and n_sectors must be at least 1");
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive");
        }
        if !(self.ratio_thresh > 0.0) {
            return bad("ratio_thresh must be positive");
        }
        if !(self.ground_thresh > 0.0) {
            return bad("ground_thresh must be positive");
        }
        if !(self.seed_ratio > 0.0 && self.seed_ratio <= 1.0) {
            return bad("seed_ratio must lie in (0, 1]");
        }
        if !(self.min_h < self.max_h) {
            return bad("min_h must be below max_h");
        }
        Ok(())
    }

    fn z_window(&self) -> (f64, f64) {
        (self.min_h - self.sensor_height, self.max_h - self.sensor_height)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bin {
    pub points: Vec<u32>,
    /// Sensor-relative z extremes; meaningless for an empty bin.
    pub min_z: f64,
    pub max_z: f64,
}

impl Bin {
    pub fn height_span(&self) -> f64 {
        if self.points.is_empty() {
            0.0
        } else {
            self.max_z - self.min_z
        }
    }
}

/// Polar (ring, sector) bins around a sensor, row-major by ring.
#[derive(Clone, Debug)]
pub struct BinGrid {
    pub n_rings: usize,
    pub n_sectors: usize,
    pub max_range: f64,
    bins: Vec<Bin>,
    /// Sensor-local coordinates of the binned input, in input order.
    local: Vec<Point3>,
    skipped: usize,
}

impl BinGrid {
    pub fn bin(&self, ring: usize, sector: usize) -> &Bin {
        &self.bins[ring * self.n_sectors + sector]
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn local_point(&self, index: u32) -> Point3 {
        self.local[index as usize]
    }

    /// Points beyond `max_range` or outside the height window.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn same_geometry(&self, o: &Self) -> bool {
        self.n_rings == o.n_rings && self.n_sectors == o.n_sectors && self.max_range == o.max_range
    }
}

/// Bin of a sensor-local point by horizontal range and azimuth, if in range.
pub fn bin_index(local: &Point3, n_rings: usize, n_sectors: usize, max_range: f64) -> Option<(usize, usize)> {
    let r = local.x.hypot(local.y);
    if r > max_range {
        return None;
    }
    let ring = ((r / max_range) * n_rings as f64).floor() as usize;
    let mut az = local.y.atan2(local.x);
    if az < 0.0 {
        az += 2.0 * PI;
    }
    let sector = ((az / (2.0 * PI)) * n_sectors as f64).floor() as usize;
    Some((ring.min(n_rings - 1), sector.min(n_sectors - 1)))
}

pub fn build_bins(
    points: &[Point3],
    sensor_pose: &Pose,
    n_rings: usize,
    n_sectors: usize,
    max_range: f64,
) -> Result<BinGrid> {
    build_bins_windowed(points, sensor_pose, n_rings, n_sectors, max_range, (f64::NEG_INFINITY, f64::INFINITY))
}

fn build_bins_windowed(
    points: &[Point3],
    sensor_pose: &Pose,
    n_rings: usize,
    n_sectors: usize,
    max_range: f64,
    z_window: (f64, f64),
) -> Result<BinGrid> {
    if n_rings == 0 || n_sectors == 0 {
        return Err(Error::InvalidInput("bin grid needs at least one ring and sector".into()));
    }
    let to_local = sensor_pose.inverse_transform();
    let local: Vec<Point3> = points.iter().map(|p| to_local.apply(p)).collect();
    let mut bins = vec![
        Bin {
            points: Vec::new(),
            min_z: f64::INFINITY,
            max_z: f64::NEG_INFINITY,
        };
        n_rings * n_sectors
    ];
    let mut skipped = 0;
    for (i, p) in local.iter().enumerate() {
        let slot = (p.z >= z_window.0 && p.z <= z_window.1)
            .then(|| bin_index(p, n_rings, n_sectors, max_range))
            .flatten();
        match slot {
            Some((ring, sector)) => {
                let b = &mut bins[ring * n_sectors + sector];
                b.points.push(i as u32);
                b.min_z = b.min_z.min(p.z);
                b.max_z = b.max_z.max(p.z);
            }
            None => skipped += 1,
        }
    }
    Ok(BinGrid {
        n_rings,
        n_sectors,
        max_range,
        bins,
        local,
        skipped,
    })
}

/// Flat indices (`ring * n_sectors + sector`) of bins passing the scan-ratio test.
pub fn candidate_bins(query: &BinGrid, map: &BinGrid, ratio_thresh: f64) -> Result<Vec<usize>> {
    candidate_bins_min(query, map, ratio_thresh, 1)
}

fn candidate_bins_min(query: &BinGrid, map: &BinGrid, ratio_thresh: f64, min_map_points: usize) -> Result<Vec<usize>> {
    if !query.same_geometry(map) {
        return Err(Error::DimensionMismatch(format!(
            "query bins {}x{} (r {}) vs map bins {}x{} (r {})",
            query.n_rings, query.n_sectors, query.max_range, map.n_rings, map.n_sectors, map.max_range
        )));
    }
    Ok(query
        .bins
        .iter()
        .zip(&map.bins)
        .enumerate()
        .filter(|(_, (q, m))| {
            if q.points.is_empty() || m.points.len() < min_map_points.max(1) {
                return false;
            }
            let dm = m.height_span();
            dm > 0.0 && q.height_span() / dm < ratio_thresh
        })
        .map(|(i, _)| i)
        .collect())
}

/// Region-wise ground fit on one bin's points. Returns the ground mask;
/// its complement is dynamic. Fewer than three points are all kept as ground.
pub fn rgpf(points: &[Point3], iterations: usize, ground_thresh: f64) -> Vec<bool> {
    rgpf_seeded(points, iterations, ground_thresh, 0.2)
}

fn rgpf_seeded(points: &[Point3], iterations: usize, ground_thresh: f64, seed_ratio: f64) -> Vec<bool> {
    if points.len() < 3 {
        return vec![true; points.len()];
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].z.total_cmp(&points[b].z).then(a.cmp(&b)));
    let n_seed = ((points.len() as f64 * seed_ratio).ceil() as usize).clamp(3, points.len());
    let mut selected: Vec<Point3> = order[..n_seed].iter().map(|&i| points[i]).collect();
    let mut plane = fit_or_flat(&selected);
    for _ in 0..iterations {
        selected = points
            .iter()
            .copied()
            .filter(|p| plane.signed_distance(p).abs() <= ground_thresh)
            .collect();
        if selected.len() < 3 {
            break;
        }
        plane = fit_or_flat(&selected);
    }
    points
        .iter()
        .map(|p| plane.signed_distance(p).abs() <= ground_thresh)
        .collect()
}

/// Plane fit, falling back to a horizontal plane at mean height for
/// degenerate (collinear or coincident) seeds.
fn fit_or_flat(points: &[Point3]) -> PlaneModel {
    fit_plane(points).unwrap_or_else(|_| {
        let z = points.iter().map(|p| p.z).sum::<f64>() / points.len() as f64;
        PlaneModel {
            normal: [0.0, 0.0, 1.0],
            offset: -z,
        }
    })
}

#[derive(Clone, Debug)]
pub struct ErasorOutput {
    pub mask: LabelMask,
    pub frame_seconds: Vec<f64>,
}

/// Labels every point of `map` (the accumulated world cloud of `frames`).
pub fn run_erasor(frames: &[ScanFrame], map: &[Point3], cfg: &ErasorConfig) -> Result<ErasorOutput> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("erasor needs at least one frame".into()));
    }
    cfg.validate()?;
    let window = cfg.z_window();
    let r2 = cfg.max_range * cfg.max_range;
    let per_frame: Vec<(Vec<u32>, f64)> = frames
        .par_iter()
        .map(|frame| -> Result<(Vec<u32>, f64)> {
            let start = Instant::now();
            let origin = frame.sensor_origin();
            let crop: Vec<u32> = (0..map.len() as u32)
                .filter(|&i| {
                    let p = &map[i as usize];
                    (p.x - origin.x).powi(2) + (p.y - origin.y).powi(2) <= r2
                })
                .collect();
            let cropped: Vec<Point3> = crop.iter().map(|&i| map[i as usize]).collect();
            let query = frame.world_points();
            let geom = |pts: &[Point3]| {
                build_bins_windowed(pts, &frame.pose, cfg.n_rings, cfg.n_sectors, cfg.max_range, window)
            };
            let (qb, mb) = (geom(&query)?, geom(&cropped)?);
            let mut dynamic = Vec::new();
            for b in candidate_bins_min(&qb, &mb, cfg.ratio_thresh, cfg.min_map_points)? {
                let members = &mb.bins[b].points;
                let pts: Vec<Point3> = members.iter().map(|&i| mb.local_point(i)).collect();
                let ground = rgpf_seeded(&pts, cfg.rgpf_iterations, cfg.ground_thresh, cfg.seed_ratio);
                dynamic.extend(
                    members
                        .iter()
                        .zip(ground)
                        .filter(|(_, g)| !g)
                        .map(|(&i, _)| crop[i as usize]),
                );
            }
            Ok((dynamic, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut flags = vec![false; map.len()];
    let mut frame_seconds = Vec::with_capacity(frames.len());
    for (dynamic, secs) in per_frame {
        for i in dynamic {
            flags[i as usize] = true;
        }
        frame_seconds.push(secs);
    }
    Ok(ErasorOutput {
        mask: LabelMask::from_dynamic_flags(&flags),
        frame_seconds,
    })
}
