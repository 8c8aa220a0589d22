//! Exhaustive reference implementations the library is checked against.
//! Each one is written the slow, obvious way and shares no code with the
//! implementation it checks.
#![allow(dead_code)]

use mapclean::spatial::VoxelKey;
use mapclean::{Label, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Published (SA, DA, AA) triples: five methods over four datasets.
pub const PUBLISHED_TRIPLES: [(f64, f64, f64); 20] = [
    (99.44, 41.53, 64.26),
    (99.42, 22.28, 47.06),
    (98.97, 31.16, 55.53),
    (99.96, 12.15, 34.85),
    (66.70, 98.54, 81.07),
    (69.40, 99.06, 82.92),
    (77.51, 99.18, 87.68),
    (94.90, 66.26, 79.30),
    (68.05, 99.69, 82.37),
    (66.28, 99.24, 81.10),
    (65.91, 96.70, 79.84),
    (88.97, 82.18, 85.51),
    (85.92, 98.88, 92.17),
    (86.15, 98.46, 92.10),
    (76.38, 86.26, 81.17),
    (94.95, 73.95, 83.80),
    (93.06, 98.67, 95.83),
    (93.54, 92.48, 93.01),
    (82.66, 82.44, 82.55),
    (96.79, 73.50, 84.34),
];

fn key_at(p: [f64; 3], res: f64) -> VoxelKey {
    VoxelKey::new(
        (p[0] / res).floor() as i32,
        (p[1] / res).floor() as i32,
        (p[2] / res).floor() as i32,
    )
}

/// Voxels the open segment passes through, endpoint voxel excluded.
///
/// Collects every parameter `t` in (0, 1) where the segment meets a voxel
/// boundary plane, then samples the cell at the midpoint of each gap between
/// consecutive crossings. Unlike fixed-step sampling this cannot skip a
/// corner the segment clips for a very short length.
pub fn raycast_oracle(o: Point3, e: Point3, res: f64) -> Vec<VoxelKey> {
    let o = [o.x, o.y, o.z];
    let e = [e.x, e.y, e.z];
    let end = key_at(e, res);
    let mut ts = vec![0.0, 1.0];
    for a in 0..3 {
        let (lo, hi) = (o[a].min(e[a]), o[a].max(e[a]));
        let d = e[a] - o[a];
        if d == 0.0 {
            continue;
        }
        let mut k = (lo / res).floor() as i64;
        while (k as f64) * res <= hi {
            let t = ((k as f64) * res - o[a]) / d;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
            k += 1;
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut out: Vec<VoxelKey> = Vec::new();
    for w in ts.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let p = [o[0] + t * (e[0] - o[0]), o[1] + t * (e[1] - o[1]), o[2] + t * (e[2] - o[2])];
        let k = key_at(p, res);
        if k == end {
            break;
        }
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

/// `(index, distance)` of the `k` nearest points, ties by lower index.
pub fn knn_oracle(points: &[Point3], q: &Point3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
            (d2, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d2, i)| (i, d2.sqrt())).collect()
}

/// Statistical outlier mask from all pairwise distances: keep points whose
/// mean distance to their k nearest others is within mean + mult * sample std.
pub fn sor_oracle(points: &[Point3], k: usize, mult: f64) -> Vec<bool> {
    let n = points.len();
    let mean_d: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let (a, b) = (points[i], points[j]);
                    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let mu = mean_d.iter().sum::<f64>() / n as f64;
    let sd = (mean_d.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    mean_d.iter().map(|&m| m <= mu + mult * sd).collect()
}

/// Distance from each false negative, in input order, to its nearest true positive.
pub fn fn_distance_oracle(points: &[Point3], gt: &[Label], pred: &[Label]) -> Vec<f64> {
    let tp: Vec<Point3> = (0..points.len())
        .filter(|&i| gt[i] == Label::Dynamic && pred[i] == Label::Dynamic)
        .map(|i| points[i])
        .collect();
    (0..points.len())
        .filter(|&i| gt[i] == Label::Dynamic && pred[i] == Label::Static)
        .map(|i| {
            tp.iter()
                .map(|t| points[i].distance(t))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Histogram of `d` over `bins` equal bins of [0, max), plus the count at or past `max`.
pub fn histogram_oracle(d: &[f64], bins: usize, max: f64) -> (Vec<usize>, usize) {
    let w = max / bins as f64;
    let mut counts = vec![0; bins];
    let mut over = 0;
    for &x in d {
        match (0..bins).find(|&b| x >= b as f64 * w && x < (b + 1) as f64 * w) {
            Some(b) => counts[b] += 1,
            None if x >= max => over += 1,
            // Floating edges: the last bin closes at exactly `bins * w`.
            None => counts[bins - 1] += 1,
        }
    }
    (counts, over)
}

pub fn random_cloud(n: usize, seed: u64, extent: f64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            )
        })
        .collect()
}

/// Seeded rays: origins in a 10 m cube, endpoints up to 6 m away per axis.
pub fn random_rays(n: usize, seed: u64) -> Vec<(Point3, Point3)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let o = Point3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let e = Point3::new(
                o.x + rng.random_range(-6.0..6.0),
                o.y + rng.random_range(-6.0..6.0),
                o.z + rng.random_range(-6.0..6.0),
            );
            (o, e)
        })
        .collect()
}

/// Seeded labeled cloud with both classes and a random prediction.
pub fn random_predictions(n: usize, seed: u64) -> (Vec<Point3>, Vec<Label>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = random_cloud(n, seed ^ 0x5eed, 2.0);
    let gt: Vec<Label> = (0..n)
        .map(|i| Label::from_dynamic(i % 4 == 0 || (i % 4 != 1 && rng.random_bool(0.3))))
        .collect();
    let pred: Vec<Label> = (0..n).map(|_| Label::from_dynamic(rng.random_bool(0.5))).collect();
    (points, gt, pred)
}
