//! Statistical outlier removal and RANSAC ground-plane estimation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::spatial::NeighborIndex;

/// Plane `normal · p + offset = 0`, with `normal.z >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl PlaneModel {
    /// Normalizes and orients the normal upward (ties broken on y, then x).
    pub fn new(normal: [f64; 3], offset: f64) -> Result<Self> {
        let n = Vector3::from(normal);
        let len = n.norm();
        if !(len > 1e-12) || !offset.is_finite() {
            return Err(Error::Degenerate("plane normal has zero length".into()));
        }
        let (mut n, mut d) = (n / len, offset / len);
        let flip = n.z < 0.0 || (n.z == 0.0 && (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0)));
        if flip {
            n = -n;
            d = -d;
        }
        Ok(Self {
            normal: [n.x, n.y, n.z],
            offset: d,
        })
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z + self.offset
    }

    pub fn rms(&self, points: &[Point3]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let ss: f64 = points.iter().map(|p| self.signed_distance(p).powi(2)).sum();
        (ss / points.len() as f64).sqrt()
    }
}

fn centroid_and_covariance<'a>(points: impl Iterator<Item = &'a Point3> + Clone) -> (Vector3<f64>, Matrix3<f64>, usize) {
    let mut n = 0usize;
    let mut c = Vector3::zeros();
    for p in points.clone() {
        c += p.to_vector();
        n += 1;
    }
    c /= n.max(1) as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.to_vector() - c;
        cov += d * d.transpose();
    }
    (c, cov / n.max(1) as f64, n)
}

/// Total-least-squares plane through `points`.
///
/// Fails when the points do not span a plane (fewer than three, or collinear).
pub fn fit_plane(points: &[Point3]) -> Result<PlaneModel> {
    fit_plane_iter(points.iter())
}

fn fit_plane_iter<'a>(points: impl Iterator<Item = &'a Point3> + Clone) -> Result<PlaneModel> {
    let (c, cov, n) = centroid_and_covariance(points);
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} points cannot define a plane")));
    }
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, hi) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    let normal = eig.eigenvectors.column(idx[0]).into_owned();
    PlaneModel::new([normal.x, normal.y, normal.z], -normal.dot(&c))
}

/// Mask of points whose mean distance to their `k` nearest neighbors is at
/// most `mean + std_mult * stddev` over the whole cloud.
pub fn sor_filter(points: &[Point3], k: usize, std_mult: f64) -> Result<Vec<bool>> {
    if k == 0 || points.len() <= k {
        return Err(Error::InvalidInput(format!(
            "outlier filter needs more than k={k} points, got {}",
            points.len()
        )));
    }
    if !(std_mult > 0.0) {
        return Err(Error::InvalidInput("std_mult must be positive".into()));
    }
    let index = NeighborIndex::new(points.to_vec())?;
    let mean_dists: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut nn = index.nearest(&points[i], k + 1).expect("k < len");
            match nn.iter().position(|n| n.index == i) {
                Some(pos) => {
                    nn.remove(pos);
                }
                None => {
                    nn.pop();
                }
            }
            nn.iter().map(|n| n.distance).sum::<f64>() / k as f64
        })
        .collect();
    Ok(sor_mask_from_mean_distances(&mean_dists, std_mult))
}

pub(crate) fn sor_mask_from_mean_distances(mean_dists: &[f64], std_mult: f64) -> Vec<bool> {
    let n = mean_dists.len() as f64;
    let mean = mean_dists.iter().sum::<f64>() / n;
    let var = if mean_dists.len() > 1 {
        mean_dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let limit = mean + std_mult * var.sqrt();
    mean_dists.iter().map(|&d| d <= limit).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub dist_thresh: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Reject sampled planes tilted more than this from horizontal.
    pub max_tilt_deg: Option<f64>,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            dist_thresh: 0.15,
            max_iters: 200,
            seed: 0,
            max_tilt_deg: None,
        }
    }
}

/// RANSAC plane fit: the best of `max_iters` random three-point planes by
/// inlier count, refined by a least-squares fit over its inliers. The mask
/// returned is the inlier set of the best sampled plane.
pub fn ransac_ground(
    points: &[Point3],
    dist_thresh: f64,
    max_iters: usize,
    seed: u64,
) -> Result<(PlaneModel, Vec<bool>)> {
    ransac_ground_with(
        points,
        &RansacParams {
            dist_thresh,
            max_iters,
            seed,
            max_tilt_deg: None,
        },
    )
}

pub fn ransac_ground_with(points: &[Point3], params: &RansacParams) -> Result<(PlaneModel, Vec<bool>)> {
    if !(params.dist_thresh > 0.0) {
        return Err(Error::InvalidInput("dist_thresh must be positive".into()));
    }
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} points cannot define a plane", points.len())));
    }
    // Rejects collinear and coincident inputs up front.
    fit_plane(points)?;

    let min_up = params.max_tilt_deg.map(|deg| deg.to_radians().cos());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(PlaneModel, usize)> = None;
    for _ in 0..params.max_iters {
        let idx = sample(&mut rng, points.len(), 3);
        let (a, b, c) = (points[idx.index(0)], points[idx.index(1)], points[idx.index(2)]);
        let n = (b - a).cross(&(c - a));
        let Ok(plane) = PlaneModel::new([n.x, n.y, n.z], -n.dot(&a)) else {
            continue;
        };
        if let Some(min_up) = min_up {
            if plane.normal[2] < min_up {
                continue;
            }
        }
        let count = points
            .iter()
            .filter(|p| plane.signed_distance(p).abs() <= params.dist_thresh)
            .count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let (sampled, _) = best.ok_or_else(|| {
        Error::Degenerate("no admissible plane among the sampled triples".into())
    })?;
    let mask: Vec<bool> = points
        .iter()
        .map(|p| sampled.signed_distance(p).abs() <= params.dist_thresh)
        .collect();
    let refined = fit_plane_iter(points.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| p))
        .unwrap_or(sampled);
    Ok((refined, mask))
}
