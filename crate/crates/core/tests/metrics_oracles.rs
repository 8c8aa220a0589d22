mod common;

use common::{fn_distance_oracle, histogram_oracle, random_predictions, PUBLISHED_TRIPLES};
use mapclean::metrics::{
    accuracy, associate, associated_accuracy, fn_distance_distribution, runtime_stats, EvalReport, HistogramSpec,
    MethodOutput,
};
use mapclean::{Label, LabelMask, LabeledCloud, Point3};
use proptest::prelude::*;

#[test]
fn published_triples_are_consistent() {
    for (i, (sa, da, aa)) in PUBLISHED_TRIPLES.iter().enumerate() {
        assert!((associated_accuracy(*sa, *da) - aa).abs() <= 0.01, "triple {i}");
    }
}

#[test]
fn fn_distances_match_pairwise_oracle() {
    let (points, gt, pred) = random_predictions(200, 3);
    let cloud = LabeledCloud::new(points.clone(), gt.clone()).unwrap();
    let spec = HistogramSpec { bins: 20, max_m: 1.5 };
    let got = fn_distance_distribution(&cloud, &pred, &spec).unwrap();
    let want = fn_distance_oracle(&points, &gt, &pred);
    assert!(!want.is_empty());
    assert_eq!(got.distances, want);
    let (counts, over) = histogram_oracle(&want, spec.bins, spec.max_m);
    assert_eq!(got.counts, counts);
    assert_eq!(got.overflow, over);
    assert_eq!(got.counts.iter().sum::<usize>() + got.overflow, want.len());
}

#[test]
fn deciles_are_lower_empirical_quantiles() {
    let (points, gt, pred) = random_predictions(300, 5);
    let cloud = LabeledCloud::new(points.clone(), gt.clone()).unwrap();
    let got = fn_distance_distribution(&cloud, &pred, &HistogramSpec::default()).unwrap();
    let mut d = fn_distance_oracle(&points, &gt, &pred);
    d.sort_by(f64::total_cmp);
    for (i, q) in got.deciles.unwrap().iter().enumerate() {
        let p = (i + 1) as f64 / 10.0;
        let below = d.iter().filter(|&&x| x <= *q).count() as f64;
        let strictly = d.iter().filter(|&&x| x < *q).count() as f64;
        assert!(below >= p * d.len() as f64 && strictly < p * d.len() as f64, "decile {}", i + 1);
    }
}

#[test]
fn runtime_of_two_frames() {
    let r = runtime_stats(&[1.0, 3.0]).unwrap();
    assert_eq!(r.mean_s, 2.0);
    assert!((r.std_s - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn perfect_and_all_static_masks() {
    let (points, gt, _) = random_predictions(50, 11);
    let cloud = LabeledCloud::new(points, gt.clone()).unwrap();
    let perfect = EvalReport::build("m", &cloud, &gt, &[]).unwrap();
    assert_eq!((perfect.sa, perfect.da, perfect.aa), (100.0, 100.0, 100.0));
    assert!(perfect.fn_deciles_m.is_none());
    let none = vec![Label::Static; gt.len()];
    let r = EvalReport::build("m", &cloud, &none, &[]).unwrap();
    assert_eq!((r.sa, r.da, r.aa), (100.0, 0.0, 0.0));
}

#[test]
fn exported_cloud_association_by_cell() {
    let pts = vec![Point3::new(0.05, 0.05, 0.05), Point3::new(0.55, 0.05, 0.05), Point3::new(1.05, 0.05, 0.05)];
    let gt = LabeledCloud::new(pts, vec![Label::Static, Label::Dynamic, Label::Static]).unwrap();
    let exported = [Point3::new(0.01, 0.09, 0.02), Point3::new(1.09, 0.01, 0.01)];
    let labels = associate(&gt, MethodOutput::Cloud { points: &exported, resolution: 0.1 }).unwrap();
    assert_eq!(labels, vec![Label::Static, Label::Dynamic, Label::Static]);
    let mask = LabelMask::new(labels.clone());
    assert_eq!(associate(&gt, MethodOutput::Mask(&mask)).unwrap(), labels);
}

proptest! {
    #[test]
    fn aa_is_geometric_mean(seed in any::<u64>(), n in 4usize..200) {
        let (_, gt, pred) = random_predictions(n, seed);
        let a = accuracy(&gt, &pred).unwrap();
        prop_assert!((0.0..=100.0).contains(&a.sa) && (0.0..=100.0).contains(&a.da));
        prop_assert!((a.aa * a.aa - a.sa * a.da).abs() <= 1e-9);
        prop_assert!(a.aa <= a.sa.max(a.da) + 1e-12 && a.aa >= a.sa.min(a.da) - 1e-12);
    }

    #[test]
    fn report_json_round_trips(seed in any::<u64>()) {
        let (points, gt, pred) = random_predictions(60, seed);
        let cloud = LabeledCloud::new(points, gt).unwrap();
        let r = EvalReport::build("octomap_gf", &cloud, &pred, &[0.1, 0.2, 0.4]).unwrap();
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}
