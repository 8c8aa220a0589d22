//! Visibility-based cleaning by range-image differencing.
//!
//! Each query scan and the raw map are projected from the scan's pose. Map
//! points the query sees *through* (query range exceeds the stored map range
//! by more than `tau_d`) are flagged, then coarser projections revert flags
//! that no longer hold.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{LabelMask, Point3, Pose, ScanFrame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemovertConfig {
    /// Angular pixel size of the detection pass, degrees.
    pub resolution_deg: f64,
    /// Coarser pixel sizes used for reverting, degrees.
    pub revert_resolutions_deg: Vec<f64>,
    pub tau_d: f64,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    /// Frames (after reverts) in which a point must be flagged to be dynamic.
    pub vote_threshold: usize,
}

impl Default for RemovertConfig {
    fn default() -> Self {
        Self {
            resolution_deg: 0.4,
            revert_resolutions_deg: vec![0.55, 0.7],
            tau_d: 0.1,
            fov_up_deg: 3.0,
            fov_down_deg: -25.0,
            vote_threshold: 1,
        }
    }
}

impl RemovertConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("removert: {m}")));
        for &r in std::iter::once(&self.resolution_deg).chain(&self.revert_resolutions_deg) {
            if !(r > 0.0 && r <= 90.0) {
                return bad("resolutions must lie in (0, 90] degrees");
            }
        }
        if !(self.fov_down_deg < self.fov_up_deg) {
            return bad("fov_down_deg must be below fov_up_deg");
        }
        if !(self.tau_d >= 0.0) {
            return bad("tau_d must be non-negative");
        }
        if self.vote_threshold == 0 {
            return bad("vote_threshold must be at least 1");
        }
        Ok(())
    }

    /// Image size for a pixel of `res_deg` degrees on both axes.
    pub fn image_size(&self, res_deg: f64) -> (usize, usize) {
        let w = (360.0 / res_deg).round().max(1.0) as usize;
        let h = ((self.fov_up_deg - self.fov_down_deg) / res_deg).round().max(1.0) as usize;
        (w, h)
    }
}

/// Spherical depth image with back-references to the projected points.
#[derive(Clone, Debug)]
pub struct RangeImage {
    width: usize,
    height: usize,
    fov_up: f64,
    fov_down: f64,
    ranges: Vec<f64>,
    /// CSR layout: points of pixel `i` are `indices[offsets[i]..offsets[i + 1]]`.
    offsets: Vec<u32>,
    indices: Vec<u32>,
    /// Per projected point, in input order: its range (infinite if skipped).
    point_ranges: Vec<f64>,
    skipped: usize,
}

impl RangeImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Range at column `u`, row `v` (row 0 at the top of the field of view).
    pub fn range(&self, u: usize, v: usize) -> f64 {
        self.ranges[v * self.width + u]
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn pixel_points(&self, pixel: usize) -> &[u32] {
        &self.indices[self.offsets[pixel] as usize..self.offsets[pixel + 1] as usize]
    }

    /// Points outside the vertical field of view or at zero range.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn pixel_of(&self, local: &Point3) -> Option<usize> {
        pixel_of(local, self.width, self.height, self.fov_up, self.fov_down)
    }

    fn same_geometry(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.fov_up == other.fov_up
            && self.fov_down == other.fov_down
    }
}

fn pixel_of(local: &Point3, width: usize, height: usize, fov_up: f64, fov_down: f64) -> Option<usize> {
    let horiz = local.x.hypot(local.y);
    if horiz == 0.0 && local.z == 0.0 {
        return None;
    }
    let el = local.z.atan2(horiz);
    if el > fov_up || el < fov_down {
        return None;
    }
    let az = local.y.atan2(local.x);
    let u = (((az + PI) / (2.0 * PI)) * width as f64).floor() as usize;
    let v = (((fov_up - el) / (fov_up - fov_down)) * height as f64).floor() as usize;
    Some(v.min(height - 1) * width + u.min(width - 1))
}

/// Projects world points into a range image seen from `sensor_pose`.
/// FOV bounds are in radians.
pub fn project(
    points: &[Point3],
    sensor_pose: &Pose,
    width: usize,
    height: usize,
    fov_up: f64,
    fov_down: f64,
) -> Result<RangeImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("range image must have at least one pixel".into()));
    }
    if !(fov_down < fov_up) {
        return Err(Error::InvalidInput("fov_down must be below fov_up".into()));
    }
    let to_local = sensor_pose.inverse_transform();
    let n_pix = width * height;
    let mut ranges = vec![f64::INFINITY; n_pix];
    let mut pixel = vec![u32::MAX; points.len()];
    let mut point_ranges = vec![f64::INFINITY; points.len()];
    let mut counts = vec![0u32; n_pix + 1];
    let mut skipped = 0;
    for (i, p) in points.iter().enumerate() {
        let local = to_local.apply(p);
        match pixel_of(&local, width, height, fov_up, fov_down) {
            Some(px) => {
                let r = local.norm();
                ranges[px] = ranges[px].min(r);
                point_ranges[i] = r;
                pixel[i] = px as u32;
                counts[px + 1] += 1;
            }
            None => skipped += 1,
        }
    }
    for i in 0..n_pix {
        counts[i + 1] += counts[i];
    }
    let offsets = counts;
    let mut cursor = offsets.clone();
    let mut indices = vec![0u32; points.len() - skipped];
    for (i, &px) in pixel.iter().enumerate() {
        if px != u32::MAX {
            let slot = &mut cursor[px as usize];
            indices[*slot as usize] = i as u32;
            *slot += 1;
        }
    }
    Ok(RangeImage {
        width,
        height,
        fov_up,
        fov_down,
        ranges,
        offsets,
        indices,
        point_ranges,
        skipped,
    })
}

/// Element-wise `query - map`; `None` where either pixel is empty.
pub fn diff_images(query: &RangeImage, map: &RangeImage) -> Result<Vec<Option<f64>>> {
    if !query.same_geometry(map) {
        return Err(Error::DimensionMismatch(format!(
            "query image {}x{} vs map image {}x{}",
            query.width, query.height, map.width, map.height
        )));
    }
    Ok(query
        .ranges
        .iter()
        .zip(&map.ranges)
        .map(|(&q, &m)| (q.is_finite() && m.is_finite()).then_some(q - m))
        .collect())
}

/// Map-point indices behind every pixel whose difference exceeds `tau_d`.
pub fn detect_dynamic(diff: &[Option<f64>], map_image: &RangeImage, tau_d: f64) -> Vec<u32> {
    let mut out = Vec::new();
    for (px, d) in diff.iter().enumerate() {
        if d.is_some_and(|d| d > tau_d) {
            out.extend_from_slice(map_image.pixel_points(px));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug)]
pub struct RemovertOutput {
    pub mask: LabelMask,
    /// Per-frame detection and revert time, seconds.
    pub frame_seconds: Vec<f64>,
}

/// Labels every point of `map` (the accumulated world cloud of `frames`).
pub fn run_removert(frames: &[ScanFrame], map: &[Point3], cfg: &RemovertConfig) -> Result<RemovertOutput> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("removert needs at least one frame".into()));
    }
    if map.is_empty() {
        return Err(Error::InvalidInput("removert needs a non-empty raw map".into()));
    }
    cfg.validate()?;
    let (up, down) = (cfg.fov_up_deg.to_radians(), cfg.fov_down_deg.to_radians());
    let per_frame: Vec<(Vec<u32>, f64)> = frames
        .par_iter()
        .map(|frame| -> Result<(Vec<u32>, f64)> {
            let start = Instant::now();
            let query = frame.world_points();
            let (w, h) = cfg.image_size(cfg.resolution_deg);
            let map_img = project(map, &frame.pose, w, h, up, down)?;
            let query_img = project(&query, &frame.pose, w, h, up, down)?;
            let mut flagged = detect_dynamic(&diff_images(&query_img, &map_img)?, &map_img, cfg.tau_d);
            for &res in &cfg.revert_resolutions_deg {
                if flagged.is_empty() {
                    break;
                }
                let (w, h) = cfg.image_size(res);
                let coarse = project(&query, &frame.pose, w, h, up, down)?;
                let to_local = frame.pose.inverse_transform();
                // A flag survives only if the coarse query still sees past the point.
                flagged.retain(|&i| {
                    let local = to_local.apply(&map[i as usize]);
                    match coarse.pixel_of(&local) {
                        Some(px) => coarse.ranges[px] - map_img.point_ranges[i as usize] > cfg.tau_d,
                        None => false,
                    }
                });
            }
            Ok((flagged, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut votes = vec![0usize; map.len()];
    let mut frame_seconds = Vec::with_capacity(frames.len());
    for (flagged, secs) in per_frame {
        for i in flagged {
            votes[i as usize] += 1;
        }
        frame_seconds.push(secs);
    }
    let flags: Vec<bool> = votes.iter().map(|&v| v >= cfg.vote_threshold).collect();
    Ok(RemovertOutput {
        mask: LabelMask::from_dynamic_flags(&flags),
        frame_seconds,
    })
}
