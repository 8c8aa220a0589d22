//! Deterministic LiDAR simulation over analytic primitives, with an exact
//! static or dynamic label for every returned point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geom::{Label, LabeledCloud, Point3, Pose, ScanFrame};

/// Rays closer than this to their origin are treated as self-hits.
const T_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned solid box.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Solid vertical cylinder with flat caps.
    Cylinder { center: [f64; 2], radius: f64, z_min: f64, z_max: f64 },
    /// Horizontal disc (zero thickness).
    Disc { center: [f64; 3], radius: f64 },
    /// Horizontal rectangle (zero thickness), e.g. a ground patch.
    Rect { min: [f64; 2], max: [f64; 2], z: f64 },
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Box { min, max } => (0..3).all(|a| min[a] < max[a]),
            Shape::Cylinder { radius, z_min, z_max, .. } => *radius > 0.0 && z_min < z_max,
            Shape::Disc { radius, .. } => *radius > 0.0,
            Shape::Rect { min, max, .. } => min[0] < max[0] && min[1] < max[1],
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("degenerate shape {self:?}")))
        }
    }

    fn translated(&self, d: [f64; 3]) -> Shape {
        match *self {
            Shape::Box { min, max } => Shape::Box {
                min: [min[0] + d[0], min[1] + d[1], min[2] + d[2]],
                max: [max[0] + d[0], max[1] + d[1], max[2] + d[2]],
            },
            Shape::Cylinder { center, radius, z_min, z_max } => Shape::Cylinder {
                center: [center[0] + d[0], center[1] + d[1]],
                radius,
                z_min: z_min + d[2],
                z_max: z_max + d[2],
            },
            Shape::Disc { center, radius } => Shape::Disc {
                center: [center[0] + d[0], center[1] + d[1], center[2] + d[2]],
                radius,
            },
            Shape::Rect { min, max, z } => Shape::Rect {
                min: [min[0] + d[0], min[1] + d[1]],
                max: [max[0] + d[0], max[1] + d[1]],
                z: z + d[2],
            },
        }
    }

    /// Smallest `t > 0` with `o + t·d` on the surface. `d` need not be unit.
    pub fn intersect(&self, o: &Point3, d: &Point3) -> Option<f64> {
        match self {
            Shape::Box { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    let (oa, da) = (o.coord(a), d.coord(a));
                    if da == 0.0 {
                        if oa < min[a] || oa > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut lo, mut hi) = ((min[a] - oa) / da, (max[a] - oa) / da);
                    if lo > hi {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    t0 = t0.max(lo);
                    t1 = t1.min(hi);
                }
                if t0 > t1 {
                    None
                } else if t0 > T_EPS {
                    Some(t0)
                } else if t1 > T_EPS {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Cylinder { center, radius, z_min, z_max } => {
                let (px, py) = (o.x - center[0], o.y - center[1]);
                let mut best = f64::INFINITY;
                let a = d.x * d.x + d.y * d.y;
                if a > 0.0 {
                    let b = px * d.x + py * d.y;
                    let c = px * px + py * py - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            let z = o.z + t * d.z;
                            if t > T_EPS && z >= *z_min && z <= *z_max {
                                best = best.min(t);
                            }
                        }
                    }
                }
                if d.z != 0.0 {
                    for zc in [*z_min, *z_max] {
                        let t = (zc - o.z) / d.z;
                        let (x, y) = (px + t * d.x, py + t * d.y);
                        if t > T_EPS && x * x + y * y <= radius * radius {
                            best = best.min(t);
                        }
                    }
                }
                best.is_finite().then_some(best)
            }
            Shape::Disc { center, radius } => {
                if d.z == 0.0 {
                    return None;
                }
                let t = (center[2] - o.z) / d.z;
                let (x, y) = (o.x + t * d.x - center[0], o.y + t * d.y - center[1]);
                (t > T_EPS && x * x + y * y <= radius * radius).then_some(t)
            }
            Shape::Rect { min, max, z } => {
                if d.z == 0.0 {
                    return None;
                }
                let t = (z - o.z) / d.z;
                let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                (t > T_EPS && x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1]).then_some(t)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    /// Frame index (fractional values allowed).
    pub frame: f64,
    pub offset: [f64; 3],
}

/// A moving shape: `shape` translated by a piecewise-linear offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub shape: Shape,
    /// Sorted by frame; the offset is held constant outside the keyframe span.
    pub keyframes: Vec<Keyframe>,
    /// Inclusive frame range in which the shape exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<[usize; 2]>,
}

impl Mover {
    pub fn offset_at(&self, frame: usize) -> [f64; 3] {
        let f = frame as f64;
        let k = &self.keyframes;
        match k.iter().position(|kf| kf.frame >= f) {
            None => k.last().map_or([0.0; 3], |kf| kf.offset),
            Some(0) => k[0].offset,
            Some(i) => {
                let (a, b) = (&k[i - 1], &k[i]);
                let s = (f - a.frame) / (b.frame - a.frame);
                std::array::from_fn(|j| a.offset[j] + s * (b.offset[j] - a.offset[j]))
            }
        }
    }

    pub fn shape_at(&self, frame: usize) -> Option<Shape> {
        if let Some([a, b]) = self.active {
            if frame < a || frame > b {
                return None;
            }
        }
        Some(self.shape.translated(self.offset_at(frame)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub position: [f64; 3],
    pub yaw_deg: f64,
}

impl SensorPose {
    pub fn pose(&self) -> Pose {
        let [x, y, z] = self.position;
        Pose::from_xyz_yaw(x, y, z, self.yaw_deg.to_radians())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    /// Beam elevations in degrees, strictly increasing.
    pub elevations_deg: Vec<f64>,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    #[serde(default)]
    pub min_range: f64,
    /// Gaussian range noise along the ray, truncated at three sigma.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl LidarModel {
    /// `beams` elevations evenly spaced over `[down, up]` degrees.
    pub fn uniform(beams: usize, down: f64, up: f64, azimuth_step_deg: f64, max_range: f64) -> Self {
        let elevations_deg = (0..beams)
            .map(|i| if beams == 1 { down } else { down + (up - down) * i as f64 / (beams - 1) as f64 })
            .collect();
        Self {
            elevations_deg,
            azimuth_step_deg,
            max_range,
            min_range: 0.5,
            noise_sigma: 0.0,
        }
    }

    /// Beam directions in the sensor frame, beam-major.
    fn directions(&self) -> Vec<Point3> {
        let n_az = (360.0 / self.azimuth_step_deg).round() as usize;
        let mut out = Vec::with_capacity(n_az * self.elevations_deg.len());
        for &el in &self.elevations_deg {
            let (se, ce) = el.to_radians().sin_cos();
            for i in 0..n_az {
                let (sa, ca) = (i as f64 * self.azimuth_step_deg).to_radians().sin_cos();
                out.push(Point3::new(ce * ca, ce * sa, se));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub statics: Vec<Shape>,
    pub dynamics: Vec<Mover>,
    /// One entry per frame.
    pub sensor: Vec<SensorPose>,
    pub lidar: LidarModel,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.sensor.is_empty() {
            return bad("scene needs at least one frame".into());
        }
        let l = &self.lidar;
        if l.elevations_deg.is_empty() {
            return bad("lidar model has zero beams".into());
        }
        if l.elevations_deg.windows(2).any(|w| w[0] >= w[1]) {
            return bad("beam elevations must be strictly increasing".into());
        }
        if !(l.azimuth_step_deg > 0.0 && l.azimuth_step_deg <= 360.0) {
            return bad("azimuth step must lie in (0, 360]".into());
        }
        if !(l.noise_sigma >= 0.0) || !(l.max_range > l.min_range) || l.min_range < 0.0 {
            return bad("lidar noise must be non-negative and 0 <= min_range < max_range".into());
        }
        for s in self.statics.iter().chain(self.dynamics.iter().map(|m| &m.shape)) {
            s.validate()?;
        }
        for m in &self.dynamics {
            if m.keyframes.is_empty() || m.keyframes.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return bad("mover keyframes must be non-empty and strictly increasing".into());
            }
        }
        Ok(())
    }
}

/// One simulated frame with per-point labels.
fn simulate_frame(spec: &SceneSpec, frame: usize, dirs: &[Point3]) -> (Vec<Point3>, Vec<Label>) {
    let pose = spec.sensor[frame].pose();
    let tf = pose.transform();
    let origin = pose.origin();
    let movers: Vec<Shape> = spec.dynamics.iter().filter_map(|m| m.shape_at(frame)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(frame as u64));
    let l = &spec.lidar;
    let (mut pts, mut labels) = (Vec::new(), Vec::new());
    for d in dirs {
        let wd = tf.rotate(d);
        let mut best = (f64::INFINITY, Label::Static);
        for s in &spec.statics {
            if let Some(t) = s.intersect(&origin, &wd) {
                if t < best.0 {
                    best = (t, Label::Static);
                }
            }
        }
        for s in &movers {
            if let Some(t) = s.intersect(&origin, &wd) {
                if t < best.0 {
                    best = (t, Label::Dynamic);
                }
            }
        }
        // Noise is drawn for every ray so the stream does not depend on hit order.
        let noise = if l.noise_sigma > 0.0 {
            loop {
                let n: f64 = rng.sample(StandardNormal);
                if n.abs() <= 3.0 {
                    break n * l.noise_sigma;
                }
            }
        } else {
            0.0
        };
        let (t, label) = best;
        if t > l.max_range || t < l.min_range {
            continue;
        }
        pts.push(*d * (t + noise));
        labels.push(label);
    }
    (pts, labels)
}

/// Simulates every frame. Ground truth is the concatenation of all frames'
/// world points, labeled by the primitive each ray hit.
pub fn simulate(spec: &SceneSpec) -> Result<(Vec<ScanFrame>, LabeledCloud)> {
    spec.validate()?;
    let dirs = spec.lidar.directions();
    let raw: Vec<(Vec<Point3>, Vec<Label>)> = (0..spec.sensor.len())
        .into_par_iter()
        .map(|f| simulate_frame(spec, f, &dirs))
        .collect();
    let mut frames = Vec::with_capacity(raw.len());
    let mut gt = LabeledCloud::default();
    for (f, (pts, labels)) in raw.into_iter().enumerate() {
        if pts.is_empty() {
            return Err(Error::InvalidInput(format!("frame {f} of scene '{}' has no returns", spec.name)));
        }
        let frame = ScanFrame::new(f as u64, spec.sensor[f].pose(), pts)?;
        for (p, l) in frame.world_points().into_iter().zip(labels) {
            gt.push(p, l);
        }
        frames.push(frame);
    }
    Ok((frames, gt))
}

pub fn simulate_dataset(spec: &SceneSpec) -> Result<Dataset> {
    let (frames, gt) = simulate(spec)?;
    Ok(Dataset { frames, gt: Some(gt) })
}

pub const PRESETS: [&str; 5] = [
    "grazing_ground",
    "open_truck",
    "tree_pedestrian",
    "semi_indoor_16beam",
    "street_mixed",
];

pub fn preset(name: &str) -> Result<SceneSpec> {
    match name {
        "grazing_ground" => Ok(grazing_ground()),
        "open_truck" => Ok(open_truck()),
        "tree_pedestrian" => Ok(tree_pedestrian()),
        "semi_indoor_16beam" => Ok(semi_indoor_16beam()),
        "street_mixed" => Ok(street_mixed()),
        _ => Err(Error::UnknownPreset {
            name: name.to_string(),
            available: PRESETS.join(", "),
        }),
    }
}

fn boxed(min: [f64; 3], max: [f64; 3]) -> Shape {
    Shape::Box { min, max }
}

fn straight(shape: Shape, from: (f64, [f64; 3]), to: (f64, [f64; 3])) -> Mover {
    Mover {
        shape,
        keyframes: vec![
            Keyframe { frame: from.0, offset: from.1 },
            Keyframe { frame: to.0, offset: to.1 },
        ],
        active: None,
    }
}

fn drive(frames: usize, start: [f64; 3], step: [f64; 3]) -> Vec<SensorPose> {
    (0..frames)
        .map(|i| SensorPose {
            position: std::array::from_fn(|a| start[a] + step[a] * i as f64),
            yaw_deg: 0.0,
        })
        .collect()
}

/// Ground surfaces sit 2 cm above a voxel boundary so coarse grids see one layer.
const GROUND_Z: f64 = 0.02;
const SENSOR_Z: f64 = GROUND_Z + 1.7;

fn hdl64() -> LidarModel {
    LidarModel::uniform(64, -24.8, 2.0, 0.4, 100.0)
}

/// Long flat strip seen at shallow angles, one distant car crossing it.
fn grazing_ground() -> SceneSpec {
    let mut lidar = hdl64();
    lidar.noise_sigma = 0.01;
    SceneSpec {
        name: "grazing_ground".into(),
        statics: vec![Shape::Rect { min: [-10.0, -10.0], max: [70.0, 10.0], z: GROUND_Z }],
        dynamics: vec![straight(
            boxed([48.0, -1.0, GROUND_Z + 0.3], [52.5, 1.0, GROUND_Z + 1.8]),
            (0.0, [0.0, -8.0, 0.0]),
            (19.0, [0.0, 8.0, 0.0]),
        )],
        sensor: drive(20, [0.0, 0.0, SENSOR_Z], [0.5, 0.0, 0.0]),
        lidar,
        seed: 11,
    }
}

/// A tall truck driving alongside the sensor at the same speed, with nothing
/// behind it. The ground ends under the truck's far side and rays reaching the
/// ground beneath it pass under the body, so no sight line from any pose ends
/// behind a place the truck has been.
fn open_truck() -> SceneSpec {
    SceneSpec {
        name: "open_truck".into(),
        statics: vec![Shape::Rect { min: [-20.0, -20.0], max: [40.0, 16.0], z: GROUND_Z }],
        dynamics: vec![straight(
            boxed([-4.0, 13.51, 0.51], [4.0, 16.0, GROUND_Z + 3.8]),
            (0.0, [0.0, 0.0, 0.0]),
            (19.0, [19.0, 0.0, 0.0]),
        )],
        sensor: drive(20, [0.0, 0.0, SENSOR_Z], [1.0, 0.0, 0.0]),
        lidar: LidarModel::uniform(32, -25.0, 10.0, 0.4, 100.0),
        seed: 12,
    }
}

/// A pedestrian walking under a low canopy disc on a pole. The canopy hangs
/// low enough for the upper beams to reach it.
fn tree_pedestrian() -> SceneSpec {
    SceneSpec {
        name: "tree_pedestrian".into(),
        statics: vec![
            Shape::Rect { min: [-30.0, -30.0], max: [30.0, 30.0], z: GROUND_Z },
            Shape::Cylinder { center: [10.0, 3.0], radius: 0.25, z_min: GROUND_Z, z_max: GROUND_Z + 2.0 },
            Shape::Disc { center: [10.0, 3.0, GROUND_Z + 2.0], radius: 3.0 },
            boxed([20.0, -15.0, GROUND_Z], [20.6, 15.0, GROUND_Z + 3.0]),
        ],
        dynamics: vec![straight(
            Shape::Cylinder { center: [9.0, 0.0], radius: 0.3, z_min: GROUND_Z, z_max: GROUND_Z + 1.75 },
            (0.0, [0.0, 0.0, 0.0]),
            (19.0, [2.0, 5.5, 0.0]),
        )],
        sensor: drive(20, [0.0, 0.0, SENSOR_Z], [0.2, 0.0, 0.0]),
        lidar: hdl64(),
        seed: 13,
    }
}

/// A hall with a 16-beam sensor, noisy returns and people walking close to walls.
fn semi_indoor_16beam() -> SceneSpec {
    let mut lidar = LidarModel::uniform(16, -15.0, 15.0, 0.4, 100.0);
    lidar.noise_sigma = 0.03;
    let person = |x: f64, y: f64| Shape::Cylinder { center: [x, y], radius: 0.25, z_min: GROUND_Z, z_max: GROUND_Z + 1.7 };
    SceneSpec {
        name: "semi_indoor_16beam".into(),
        statics: vec![
            Shape::Rect { min: [-20.0, -8.0], max: [40.0, 8.0], z: GROUND_Z },
            boxed([-20.0, 8.01, GROUND_Z], [40.0, 8.5, 4.0]),
            boxed([-20.0, -8.5, GROUND_Z], [40.0, -8.01, 4.0]),
            boxed([40.0, -8.5, GROUND_Z], [40.5, 8.5, 4.0]),
            boxed([-20.5, -8.5, GROUND_Z], [-20.0, 8.5, 4.0]),
            boxed([-20.0, -8.5, 4.0], [40.5, 8.5, 4.3]),
            boxed([10.0, -2.0, GROUND_Z], [11.0, 2.0, 1.0]),
        ],
        dynamics: vec![
            straight(person(0.0, 7.5), (0.0, [0.0, 0.0, 0.0]), (19.0, [12.0, 0.0, 0.0])),
            straight(person(25.0, -7.5), (0.0, [0.0, 0.0, 0.0]), (19.0, [-14.0, 0.0, 0.0])),
        ],
        sensor: drive(20, [0.0, 0.0, SENSOR_Z], [0.4, 0.0, 0.0]),
        lidar,
        seed: 14,
    }
}

/// Urban street canyon: facades, posts, passing vans and cyclists.
///
/// Flat faces sit 1 cm past a 0.1 m voxel boundary on the side away from the
/// street, so range noise below 1 cm never spills into the cell in front.
fn street_mixed() -> SceneSpec {
    let mut lidar = LidarModel::uniform(24, -25.0, 10.0, 1.5, 100.0);
    lidar.noise_sigma = 0.003;
    let van = |x0: f64, len: f64, y0: f64, y1: f64| boxed([x0, y0, GROUND_Z + 0.6], [x0 + len, y1, GROUND_Z + 2.6]);
    let cyclist = |x: f64, y: f64| Shape::Cylinder { center: [x, y], radius: 0.3, z_min: GROUND_Z + 0.1, z_max: GROUND_Z + 1.8 };
    let mut statics = vec![
        Shape::Rect { min: [-40.0, -10.0], max: [100.0, 10.0], z: GROUND_Z },
        boxed([-40.0, 10.01, GROUND_Z], [100.0, 12.0, 5.0]),
        boxed([-40.0, -12.0, GROUND_Z], [100.0, -10.01, 5.0]),
        boxed([100.01, -12.0, GROUND_Z], [102.0, 12.0, 5.0]),
        boxed([-42.0, -12.0, GROUND_Z], [-40.01, 12.0, 5.0]),
    ];
    for x in [4.0, 22.0, 40.0] {
        statics.push(boxed([x + 0.01, 9.51, GROUND_Z], [x + 0.29, 9.79, 5.0]));
        statics.push(boxed([x + 9.01, -9.79, GROUND_Z], [x + 9.29, -9.51, 5.0]));
    }
    let window = |m: Mover, a: usize, b: usize| Mover { active: Some([a, b]), ..m };
    SceneSpec {
        name: "street_mixed".into(),
        statics,
        dynamics: vec![
            window(straight(van(-25.0, 5.0, -8.8, -7.0), (0.0, [0.0, 0.0, 0.0]), (14.0, [70.0, 0.0, 0.0])), 0, 14),
            window(straight(van(50.0, 6.0, 7.0, 8.8), (4.0, [0.0, 0.0, 0.0]), (17.0, [-65.0, 0.0, 0.0])), 4, 17),
            window(straight(van(-20.0, 4.4, -8.8, -7.0), (8.0, [0.0, 0.0, 0.0]), (21.0, [65.0, 0.0, 0.0])), 8, 21),
            window(straight(cyclist(-2.0, 9.1), (0.0, [0.0, 0.0, 0.0]), (26.0, [18.0, 0.0, 0.0])), 0, 26),
            window(straight(cyclist(32.0, -9.1), (2.0, [0.0, 0.0, 0.0]), (28.0, [-18.0, 0.0, 0.0])), 2, 28),
        ],
        sensor: drive(40, [0.0, 0.0, SENSOR_Z], [0.5, 0.0, 0.0]),
        lidar,
        seed: 15,
    }
}
