//! Point-wise scoring of method verdicts against labeled ground truth.

use std::io::Write;

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Label, LabelMask, LabeledCloud, Point3};
use crate::spatial::{NeighborIndex, VoxelKey};

/// What a method produced, in one of the two forms the evaluator accepts.
#[derive(Clone, Copy, Debug)]
pub enum MethodOutput<'a> {
    /// Verdicts index-aligned to the ground-truth cloud.
    Mask(&'a LabelMask),
    /// An exported static map, rasterized at `resolution`.
    Cloud { points: &'a [Point3], resolution: f64 },
}

fn bounds(points: &[Point3]) -> Option<(Point3, Point3)> {
    let mut it = points.iter();
    let first = *it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| {
        (
            Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    }))
}

/// Predicted label per ground-truth point. A point whose cell holds no
/// exported point was removed from the map and counts as dynamic.
pub fn associate(gt: &LabeledCloud, output: MethodOutput<'_>) -> Result<Vec<Label>> {
    match output {
        MethodOutput::Mask(mask) => {
            if mask.len() != gt.len() {
                return Err(Error::DimensionMismatch(format!(
                    "mask has {} verdicts for {} ground-truth points",
                    mask.len(),
                    gt.len()
                )));
            }
            Ok(mask.verdicts().to_vec())
        }
        MethodOutput::Cloud { points, resolution } => {
            if !(resolution > 0.0) {
                return Err(Error::InvalidInput("association resolution must be positive".into()));
            }
            if let (Some((glo, ghi)), Some((olo, ohi))) = (bounds(gt.points()), bounds(points)) {
                let disjoint = (0..3).any(|a| {
                    ghi.coord(a) + resolution < olo.coord(a) || ohi.coord(a) + resolution < glo.coord(a)
                });
                if disjoint {
                    return Err(Error::InvalidInput(
                        "ground truth and output bounding boxes do not overlap; frames misaligned?".into(),
                    ));
                }
            }
            let cells: FxHashSet<VoxelKey> = points.iter().map(|p| VoxelKey::of(p, resolution)).collect();
            Ok(gt
                .points()
                .par_iter()
                .map(|p| Label::from_dynamic(!cells.contains(&VoxelKey::of(p, resolution))))
                .collect())
        }
    }
}

/// Confusion counts with dynamic as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(gt: &[Label], predicted: &[Label]) -> Result<Self> {
        if gt.len() != predicted.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ground-truth labels vs {} predictions",
                gt.len(),
                predicted.len()
            )));
        }
        let mut c = Self::default();
        for (&g, &p) in gt.iter().zip(predicted) {
            match (g, p) {
                (Label::Dynamic, Label::Dynamic) => c.tp += 1,
                (Label::Static, Label::Dynamic) => c.fp += 1,
                (Label::Static, Label::Static) => c.tn += 1,
                (Label::Dynamic, Label::Static) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub sa: f64,
    pub da: f64,
    pub aa: f64,
}

/// Geometric mean of static and dynamic accuracy.
pub fn associated_accuracy(sa: f64, da: f64) -> f64 {
    (sa * da).sqrt()
}

pub fn accuracy(gt: &[Label], predicted: &[Label]) -> Result<Accuracy> {
    accuracy_from(&Confusion::from_labels(gt, predicted)?)
}

pub fn accuracy_from(c: &Confusion) -> Result<Accuracy> {
    if c.tn + c.fp == 0 {
        return Err(Error::MissingClass("static"));
    }
    if c.tp + c.fn_ == 0 {
        return Err(Error::MissingClass("dynamic"));
    }
    let sa = 100.0 * c.tn as f64 / (c.tn + c.fp) as f64;
    let da = 100.0 * c.tp as f64 / (c.tp + c.fn_) as f64;
    Ok(Accuracy {
        sa,
        da,
        aa: associated_accuracy(sa, da),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub max_m: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self { bins: 50, max_m: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnDistances {
    /// Per false negative, in ground-truth order: distance to the nearest true positive.
    pub distances: Vec<f64>,
    /// Upper edges of the fixed-width bins `[lo, hi)`.
    pub bin_upper_edges_m: Vec<f64>,
    pub counts: Vec<usize>,
    /// Distances at or beyond the last edge.
    pub overflow: usize,
    /// Empirical 10%, 20%, ... 90% quantiles; `None` without false negatives.
    pub deciles: Option<Vec<f64>>,
}

impl FnDistances {
    pub fn quantile_10(&self) -> Option<f64> {
        self.deciles.as_ref().map(|d| d[0])
    }
}

/// Lower empirical quantile: the smallest value with at least `q` of the sample at or below it.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn fn_distance_distribution(gt: &LabeledCloud, predicted: &[Label], hist: &HistogramSpec) -> Result<FnDistances> {
    if predicted.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} ground-truth points",
            predicted.len(),
            gt.len()
        )));
    }
    if hist.bins == 0 || !(hist.max_m > 0.0) {
        return Err(Error::InvalidInput("histogram needs at least one bin and a positive range".into()));
    }
    let (mut tps, mut fns) = (Vec::new(), Vec::new());
    for ((p, &g), &pred) in gt.points().iter().zip(gt.labels()).zip(predicted) {
        match (g, pred) {
            (Label::Dynamic, Label::Dynamic) => tps.push(*p),
            (Label::Dynamic, Label::Static) => fns.push(*p),
            _ => {}
        }
    }
    if tps.is_empty() {
        return Err(Error::InvalidInput(
            "no true positives: the false-negative distance distribution is undefined".into(),
        ));
    }
    let index = NeighborIndex::new(tps)?;
    let distances: Vec<f64> = fns.par_iter().map(|p| index.nearest_one(p).distance).collect();

    let width = hist.max_m / hist.bins as f64;
    let mut counts = vec![0usize; hist.bins + 1];
    for &d in &distances {
        let b = if d >= hist.max_m { hist.bins } else { ((d / width).floor() as usize).min(hist.bins - 1) };
        counts[b] += 1;
    }
    let overflow = counts.pop().unwrap_or(0);
    let edges: Vec<f64> = (1..=hist.bins).map(|i| i as f64 * width).collect();

    let deciles = (!distances.is_empty()).then(|| {
        let mut sorted = distances.clone();
        sorted.sort_by(f64::total_cmp);
        (1..10).map(|i| quantile(&sorted, i as f64 / 10.0)).collect()
    });
    Ok(FnDistances {
        distances,
        bin_upper_edges_m: edges,
        counts,
        overflow,
        deciles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub frames: usize,
}

/// Sample mean and sample standard deviation of per-frame times.
pub fn runtime_stats(seconds: &[f64]) -> Result<RuntimeStats> {
    if seconds.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "runtime statistics need at least 2 timed frames, got {}",
            seconds.len()
        )));
    }
    let n = seconds.len() as f64;
    let mean = seconds.iter().sum::<f64>() / n;
    let var = seconds.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RuntimeStats {
        mean_s: mean,
        std_s: var.sqrt(),
        frames: seconds.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    #[serde(rename = "SA")]
    pub sa: f64,
    #[serde(rename = "DA")]
    pub da: f64,
    #[serde(rename = "AA")]
    pub aa: f64,
    pub confusion: Confusion,
    pub fn_hist_upper_edges_m: Vec<f64>,
    pub fn_hist_counts: Vec<usize>,
    pub fn_hist_overflow: usize,
    /// `None` when there are no false negatives or no true positives.
    pub fn_deciles_m: Option<Vec<f64>>,
    pub runtime: Option<RuntimeStats>,
}

impl EvalReport {
    pub fn build(method: &str, gt: &LabeledCloud, predicted: &[Label], frame_seconds: &[f64]) -> Result<Self> {
        let confusion = Confusion::from_labels(gt.labels(), predicted)?;
        let acc = accuracy_from(&confusion)?;
        let spec = HistogramSpec::default();
        let (edges, counts, overflow, deciles) = match fn_distance_distribution(gt, predicted, &spec) {
            Ok(d) => (d.bin_upper_edges_m, d.counts, d.overflow, d.deciles),
            Err(_) => (Vec::new(), Vec::new(), 0, None),
        };
        Ok(Self {
            method: method.to_string(),
            sa: acc.sa,
            da: acc.da,
            aa: acc.aa,
            confusion,
            fn_hist_upper_edges_m: edges,
            fn_hist_counts: counts,
            fn_hist_overflow: overflow,
            fn_deciles_m: deciles,
            runtime: runtime_stats(frame_seconds).ok(),
        })
    }

    pub const CSV_HEADER: &'static str = "method,SA,DA,AA,tp,fp,tn,fn,fn_q10_m,runtime_mean_s,runtime_std_s";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.sa,
            self.da,
            self.aa,
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn_,
            opt(self.fn_deciles_m.as_ref().map(|d| d[0])),
            opt(self.runtime.map(|r| r.mean_s)),
            opt(self.runtime.map(|r| r.std_s)),
        )
    }

    /// Two columns: `bin_upper_edge_m,count`; the overflow row has edge `inf`.
    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_upper_edge_m,count")?;
        for (e, c) in self.fn_hist_upper_edges_m.iter().zip(&self.fn_hist_counts) {
            writeln!(w, "{e},{c}")?;
        }
        if !self.fn_hist_counts.is_empty() {
            writeln!(w, "inf,{}", self.fn_hist_overflow)?;
        }
        Ok(())
    }
}
