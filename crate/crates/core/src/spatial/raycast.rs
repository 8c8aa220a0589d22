use crate::geom::Point3;

use super::VoxelKey;

/// Voxels crossed by the open segment `(origin, endpoint)`, in traversal order.
///
/// The endpoint's own voxel is excluded, so a ray whose ends share a voxel
/// yields nothing. Stepping is incremental (Amanatides–Woo); axes whose
/// boundary crossings coincide exactly are stepped together, so a ray through
/// a voxel corner does not visit the edge-adjacent cells it only touches.
pub fn raycast(origin: Point3, endpoint: Point3, resolution: f64) -> Vec<VoxelKey> {
    let mut out = Vec::new();
    raycast_with(origin, endpoint, resolution, |k| out.push(k));
    out
}

/// Visitor form of [`raycast`]; returns the number of voxels visited.
pub fn raycast_with(
    origin: Point3,
    endpoint: Point3,
    resolution: f64,
    mut visit: impl FnMut(VoxelKey),
) -> usize {
    let start = VoxelKey::of(&origin, resolution);
    let end = VoxelKey::of(&endpoint, resolution);
    if start == end || !origin.is_finite() || !endpoint.is_finite() {
        return 0;
    }
    // Work in voxel units: cell k spans [k, k+1).
    let o = [origin.x / resolution, origin.y / resolution, origin.z / resolution];
    let e = [endpoint.x / resolution, endpoint.y / resolution, endpoint.z / resolution];

    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut remaining = [0i64; 3];
    for a in 0..3 {
        let d = e[a] - o[a];
        let k = start.axis(a);
        remaining[a] = (end.axis(a) as i64 - k as i64).abs();
        if remaining[a] == 0 {
            continue;
        }
        if d > 0.0 {
            step[a] = 1;
            t_max[a] = ((k as f64 + 1.0) - o[a]) / d;
            t_delta[a] = 1.0 / d;
        } else {
            step[a] = -1;
            t_max[a] = (k as f64 - o[a]) / d;
            t_delta[a] = -1.0 / d;
        }
    }

    let mut cur = start;
    let mut visited = 0usize;
    loop {
        let mut t_min = f64::INFINITY;
        for a in 0..3 {
            if remaining[a] > 0 && t_max[a] < t_min {
                t_min = t_max[a];
            }
        }
        if t_min.is_infinite() {
            // Only reachable when an axis still has distance to cover but a
            // non-finite delta; treat the remaining steps as that axis's.
            let a = (0..3).find(|&a| remaining[a] > 0);
            match a {
                Some(a) => t_min = t_max[a],
                None => break,
            }
        }
        // A cell exited at t <= 0 is only touched by the closed origin point.
        if t_min > 0.0 {
            visit(cur);
            visited += 1;
        }
        for a in 0..3 {
            if remaining[a] > 0 && t_max[a] == t_min {
                *cur.axis_mut(a) += step[a];
                t_max[a] += t_delta[a];
                remaining[a] -= 1;
            }
        }
        if remaining.iter().all(|&r| r == 0) {
            break;
        }
    }
    visited
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_ray_excludes_endpoint_voxel() {
        let keys = raycast(Point3::new(0.05, 0.05, 0.05), Point3::new(0.95, 0.05, 0.05), 0.1);
        let expect: Vec<VoxelKey> = (0..9).map(|i| VoxelKey::new(i, 0, 0)).collect();
        assert_eq!(keys, expect);
    }

    #[test]
    fn same_voxel_is_empty() {
        assert!(raycast(Point3::new(0.01, 0.01, 0.01), Point3::new(0.09, 0.02, 0.03), 0.1).is_empty());
        assert!(raycast(Point3::ORIGIN, Point3::ORIGIN, 0.1).is_empty());
    }

    #[test]
    fn exact_diagonal_steps_through_corners() {
        let keys = raycast(Point3::ORIGIN, Point3::new(1.0, 1.0, 1.0), 0.5);
        assert_eq!(keys, vec![VoxelKey::new(0, 0, 0), VoxelKey::new(1, 1, 1)]);
    }

    #[test]
    fn negative_direction() {
        let keys = raycast(Point3::new(0.25, 0.05, 0.05), Point3::new(-0.15, 0.05, 0.05), 0.1);
        let ix: Vec<i32> = keys.iter().map(|k| k.ix).collect();
        assert_eq!(ix, vec![2, 1, 0, -1]);
    }

    #[test]
    fn origin_on_boundary_moving_away_skips_touched_cell() {
        let keys = raycast(Point3::new(0.5, 0.25, 0.25), Point3::new(0.05, 0.25, 0.25), 0.5);
        assert!(keys.is_empty());
        let keys = raycast(Point3::new(1.0, 0.25, 0.25), Point3::new(0.1, 0.25, 0.25), 0.5);
        assert_eq!(keys, vec![VoxelKey::new(1, 0, 0)]);
    }
}
