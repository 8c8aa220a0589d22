//! Points, poses, scan frames and labeled clouds.

use std::ops::{Add, Mul, Sub};

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(&self, other: &Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    #[inline]
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, rhs: f64) -> Point3 {
        Point3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

/// Sensor-to-world rigid transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a translation and a `(w, x, y, z)` quaternion, normalizing the latter.
    pub fn from_parts(translation: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 || translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pose is not a valid rigid transform: t={translation:?} q={wxyz:?}"
            )));
        }
        Ok(Self {
            translation: Vector3::from(translation),
            rotation: UnitQuaternion::from_quaternion(q),
        })
    }

    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            translation: Vector3::new(x, y, z),
            rotation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
        }
    }

    pub fn origin(&self) -> Point3 {
        Point3::from_vector(&self.translation)
    }

    /// `tx ty tz qw qx qy qz`, the PCD VIEWPOINT ordering.
    pub fn to_viewpoint(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        let t = &self.translation;
        [t.x, t.y, t.z, q.w, q.i, q.j, q.k]
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.to_rotation_matrix(),
            translation: self.translation,
        }
    }

    pub fn inverse_transform(&self) -> RigidTransform {
        let inv = self.rotation.inverse().to_rotation_matrix();
        RigidTransform {
            translation: -(inv * self.translation),
            rotation: inv,
        }
    }
}

/// A pose expanded to a rotation matrix for bulk point transforms.
#[derive(Clone, Copy, Debug)]
pub struct RigidTransform {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * p.to_vector() + self.translation))
    }

    #[inline]
    pub fn rotate(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * p.to_vector()))
    }
}

/// One LiDAR sweep in sensor coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanFrame {
    pub index: u64,
    pub pose: Pose,
    pub points: Vec<Point3>,
}

impl ScanFrame {
    pub fn new(index: u64, pose: Pose, points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(format!("frame {index} has no points")));
        }
        Ok(Self { index, pose, points })
    }

    pub fn sensor_origin(&self) -> Point3 {
        self.pose.origin()
    }

    pub fn world_points(&self) -> Vec<Point3> {
        transform_to_world(self)
    }
}

pub fn transform_to_world(frame: &ScanFrame) -> Vec<Point3> {
    let tf = frame.pose.transform();
    frame.points.iter().map(|p| tf.apply(p)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Static,
    Dynamic,
}

impl Label {
    #[inline]
    pub fn is_dynamic(self) -> bool {
        matches!(self, Label::Dynamic)
    }

    #[inline]
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Static => 0,
            Label::Dynamic => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Static),
            1 => Some(Label::Dynamic),
            _ => None,
        }
    }

    #[inline]
    pub fn from_dynamic(dynamic: bool) -> Self {
        if dynamic {
            Label::Dynamic
        } else {
            Label::Static
        }
    }
}

/// World-frame points with a static/dynamic tag each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledCloud {
    points: Vec<Point3>,
    labels: Vec<Label>,
}

impl LabeledCloud {
    pub fn new(points: Vec<Point3>, labels: Vec<Label>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn push(&mut self, p: Point3, label: Label) {
        self.points.push(p);
        self.labels.push(label);
    }

    pub fn into_parts(self) -> (Vec<Point3>, Vec<Label>) {
        (self.points, self.labels)
    }
}

/// Per-point verdicts of a method, index-aligned to a reference cloud.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    verdicts: Vec<Label>,
}

impl LabelMask {
    pub fn new(verdicts: Vec<Label>) -> Self {
        Self { verdicts }
    }

    pub fn all_static(len: usize) -> Self {
        Self::new(vec![Label::Static; len])
    }

    pub fn from_dynamic_flags(flags: &[bool]) -> Self {
        Self::new(flags.iter().map(|&d| Label::from_dynamic(d)).collect())
    }

    pub fn verdicts(&self) -> &[Label] {
        &self.verdicts
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    pub fn dynamic_count(&self) -> usize {
        self.verdicts.iter().filter(|l| l.is_dynamic()).count()
    }

    /// One byte per verdict: 0 static, 1 dynamic.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.verdicts.iter().map(|l| l.as_u8()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        bytes
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                Label::from_u8(b).ok_or_else(|| {
                    Error::InvalidInput(format!("label mask entry {i} has invalid value {b}"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}
