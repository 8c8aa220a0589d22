mod common;

use common::{knn_oracle, random_cloud, random_rays, raycast_oracle, sor_oracle};
use mapclean::preprocess::sor_filter;
use mapclean::spatial::{logit, raycast, raycast_with, sigmoid, NeighborIndex, OccupancyGrid, OccupancyParams};
use mapclean::Point3;
use proptest::prelude::*;

#[test]
fn raycast_matches_oracle_on_seeded_rays() {
    let rays = random_rays(1000, 42);
    for res in [0.05, 0.1, 0.25] {
        for (i, (o, e)) in rays.iter().enumerate() {
            assert_eq!(raycast(*o, *e, res), raycast_oracle(*o, *e, res), "ray {i} at resolution {res}");
        }
    }
}

#[test]
fn raycast_documented_cases() {
    let keys = raycast(Point3::new(0.05, 0.05, 0.05), Point3::new(0.95, 0.05, 0.05), 0.1);
    assert_eq!(keys.len(), 9);
    assert_eq!(keys, raycast_oracle(Point3::new(0.05, 0.05, 0.05), Point3::new(0.95, 0.05, 0.05), 0.1));
    let diag = raycast(Point3::ORIGIN, Point3::new(1.0, 1.0, 1.0), 0.5);
    assert_eq!(diag, raycast_oracle(Point3::ORIGIN, Point3::new(1.0, 1.0, 1.0), 0.5));
}

fn coord() -> impl Strategy<Value = f64> {
    -20.0f64..20.0
}

proptest! {
    #[test]
    fn raycast_agrees_with_oracle(
        ox in coord(), oy in coord(), oz in coord(),
        ex in coord(), ey in coord(), ez in coord(),
        res in prop::sample::select(vec![0.05, 0.1, 0.2, 0.5]),
    ) {
        let (o, e) = (Point3::new(ox, oy, oz), Point3::new(ex, ey, ez));
        prop_assert_eq!(raycast(o, e, res), raycast_oracle(o, e, res));
    }

    #[test]
    fn raycast_steps_to_neighbors_without_repeats(
        ox in coord(), oy in coord(), oz in coord(),
        ex in coord(), ey in coord(), ez in coord(),
    ) {
        let keys = raycast(Point3::new(ox, oy, oz), Point3::new(ex, ey, ez), 0.1);
        for w in keys.windows(2) {
            let d = [(w[1].ix - w[0].ix).abs(), (w[1].iy - w[0].iy).abs(), (w[1].iz - w[0].iz).abs()];
            prop_assert!(d.iter().all(|&x| x <= 1) && d.contains(&1));
        }
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), keys.len());
        let n = raycast_with(Point3::new(ox, oy, oz), Point3::new(ex, ey, ez), 0.1, |_| {});
        prop_assert_eq!(n, keys.len());
    }

    #[test]
    fn occupancy_stays_within_clamp(ops in prop::collection::vec(any::<bool>(), 1..60)) {
        let params = OccupancyParams::default();
        let mut g = OccupancyGrid::new(params.clone()).unwrap();
        let origin = Point3::new(0.05, 0.05, 0.05);
        let target = Point3::new(1.05, 0.05, 0.05);
        let beyond = Point3::new(2.05, 0.05, 0.05);
        for hit in ops {
            g.integrate_scan(origin, &[if hit { target } else { beyond }]);
        }
        let p = g.occupancy(&g.key(&target));
        prop_assert!(p >= sigmoid(params.l_min) - 1e-15 && p <= sigmoid(params.l_max) + 1e-15);
    }

    #[test]
    fn knn_agrees_with_exhaustive_scan(seed in any::<u64>(), k in 1usize..12) {
        let pts = random_cloud(120, seed, 3.0);
        let index = NeighborIndex::new(pts.clone()).unwrap();
        let q = random_cloud(1, seed.wrapping_add(1), 4.0)[0];
        let got: Vec<(usize, f64)> = index.nearest(&q, k).unwrap().iter().map(|n| (n.index, n.distance)).collect();
        prop_assert_eq!(got, knn_oracle(&pts, &q, k));
    }
}

#[test]
fn occupancy_closed_form_for_repeated_updates() {
    let params = OccupancyParams::default();
    let origin = Point3::new(0.05, 0.05, 0.05);
    let target = Point3::new(1.05, 0.05, 0.05);
    let beyond = Point3::new(2.05, 0.05, 0.05);
    for n in 1..=20u32 {
        let mut hits = OccupancyGrid::new(params.clone()).unwrap();
        let mut misses = OccupancyGrid::new(params.clone()).unwrap();
        for _ in 0..n {
            hits.integrate_scan(origin, &[target]);
            misses.integrate_scan(origin, &[beyond]);
        }
        let closed = |p: f64| sigmoid((n as f64 * logit(p)).clamp(params.l_min, params.l_max));
        assert!((hits.occupancy(&hits.key(&target)) - closed(params.p_hit)).abs() <= 1e-12, "{n} hits");
        assert!((misses.occupancy(&misses.key(&target)) - closed(params.p_miss)).abs() <= 1e-12, "{n} misses");
    }
}

#[test]
fn knn_matches_exhaustive_scan_on_500_points() {
    let pts = random_cloud(500, 7, 10.0);
    let index = NeighborIndex::new(pts.clone()).unwrap();
    for (qi, q) in random_cloud(100, 8, 12.0).iter().chain(&pts[..50]).enumerate() {
        let got: Vec<(usize, f64)> = index.nearest(q, 5).unwrap().iter().map(|n| (n.index, n.distance)).collect();
        assert_eq!(got, knn_oracle(&pts, q, 5), "query {qi}");
    }
}

#[test]
fn sor_matches_exhaustive_oracle_on_500_points() {
    let mut pts = random_cloud(480, 9, 5.0);
    pts.extend(random_cloud(20, 10, 40.0));
    for (k, mult) in [(10, 1.0), (5, 2.0), (20, 0.5)] {
        assert_eq!(sor_filter(&pts, k, mult).unwrap(), sor_oracle(&pts, k, mult), "k={k} mult={mult}");
    }
}

#[test]
fn sor_grid_with_one_far_point() {
    let mut pts: Vec<Point3> = (0..100).map(|i| Point3::new((i % 10) as f64, (i / 10) as f64, 0.0)).collect();
    pts.push(Point3::new(50.0, 50.0, 50.0));
    let mask = sor_filter(&pts, 5, 1.0).unwrap();
    assert_eq!(mask, sor_oracle(&pts, 5, 1.0));
    assert_eq!(mask.iter().filter(|&&k| !k).count(), 1);
    assert!(!mask[100]);
}
