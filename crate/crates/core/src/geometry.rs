//! Coordinate-frame math shared by the simulation and the perception stack.
//!
//! Conventions used throughout the crate:
//!
//! - The world is y-up. Floor-plane coordinates are `(x, z)`.
//! - A robot's heading is the angle of its forward direction, measured
//!   counterclockwise from the world `+x` axis and wrapped to `(-pi, pi]`.
//! - The robot's local floor frame has `+z` pointing forward and `+x`
//!   pointing to the robot's right. A ring straight ahead at distance `d`
//!   is at local `(0, d)`.
//! - The camera frame is the usual pinhole frame: `+x` right in the image,
//!   `+y` down, `+z` along the optical axis. After levelling out the mount
//!   tilt, floor points keep a positive `y` roughly equal to the camera
//!   height; [`drop_up_axis`] discards it.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Pinhole focal lengths and principal point, in pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("fx", self.fx), ("fy", self.fy), ("cx", self.cx), ("cy", self.cy)] {
            if !v.is_finite() {
                return Err(Error::InvalidIntrinsics(format!("{name} is not finite")));
            }
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        // det K = fx * fy for an upper-triangular pinhole matrix.
        if (self.fx * self.fy).abs() <= 1e-9 {
            return Err(Error::InvalidIntrinsics("matrix is numerically singular".into()));
        }
        Ok(())
    }

    /// The 3x3 matrix form, row major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }
}

/// Precomputed inverse of a [`CameraIntrinsics`] matrix.
#[derive(Debug, Clone, Copy)]
pub struct InverseIntrinsics {
    inv_fx: f64,
    inv_fy: f64,
    neg_cx_over_fx: f64,
    neg_cy_over_fy: f64,
}

impl InverseIntrinsics {
    /// The 3x3 matrix form of the inverse, row major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.inv_fx, 0.0, self.neg_cx_over_fx],
            [0.0, self.inv_fy, self.neg_cy_over_fy],
            [0.0, 0.0, 1.0],
        ]
    }
}

/// Precompute the inverse camera matrix.
///
/// Done once per calibration load; the inverse of the upper-triangular
/// pinhole matrix has the closed form
/// `[[1/fx, 0, -cx/fx], [0, 1/fy, -cy/fy], [0, 0, 1]]`.
pub fn invert_intrinsics(k: &CameraIntrinsics) -> Result<InverseIntrinsics> {
    k.validate()?;
    Ok(InverseIntrinsics {
        inv_fx: 1.0 / k.fx,
        inv_fy: 1.0 / k.fy,
        neg_cx_over_fx: -k.cx / k.fx,
        neg_cy_over_fy: -k.cy / k.fy,
    })
}

/// How the camera sits on the robot: downward pitch about the camera x-axis,
/// height above the floor, and forward offset from the robot center.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraMount {
    /// Downward pitch in radians; must lie in `(-pi/2, pi/2)`.
    pub tilt: f64,
    /// Lens height above the floor, meters.
    pub height: f64,
    /// Lens offset forward of the robot center, meters.
    pub forward_offset: f64,
}

impl CameraMount {
    pub fn new(tilt: f64, height: f64, forward_offset: f64) -> Result<Self> {
        if !(tilt.is_finite() && tilt.abs() < PI / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "mount tilt must lie in (-pi/2, pi/2), got {tilt}"
            )));
        }
        if !height.is_finite() || !forward_offset.is_finite() {
            return Err(Error::InvalidConfig("mount offsets must be finite".into()));
        }
        Ok(CameraMount { tilt, height, forward_offset })
    }
}

/// A detector hit: pixel position plus the depth-map reading at it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PixelDetection {
    /// Pixel column.
    pub u: f64,
    /// Pixel row.
    pub v: f64,
    /// Depth along the optical axis, meters; must be positive.
    pub depth: f64,
}

impl PixelDetection {
    pub fn new(u: f64, v: f64, depth: f64) -> Result<Self> {
        if !(u.is_finite() && v.is_finite() && depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "detection must have finite pixel coordinates and positive depth (u={u}, v={v}, depth={depth})"
            )));
        }
        Ok(PixelDetection { u, v, depth })
    }

    /// The homogeneous pixel vector scaled by depth: `[u, v, 1] * depth`.
    pub fn scaled_homogeneous(&self) -> Vec3 {
        Vec3::new(self.u * self.depth, self.v * self.depth, self.depth)
    }
}

/// 3D point or vector in meters; `y` is the upward axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Floor-plane pose: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub z: f64,
    /// Forward direction angle, counterclockwise from `+x`, in `(-pi, pi]`.
    pub heading: f64,
}

impl Pose2D {
    /// Build a pose, wrapping the heading into `(-pi, pi]`.
    pub fn new(x: f64, z: f64, heading: f64) -> Self {
        Pose2D { x, z, heading: wrap_angle(heading) }
    }

    /// Unit forward vector on the floor plane.
    pub fn forward(&self) -> (f64, f64) {
        (self.heading.cos(), self.heading.sin())
    }

    pub fn position(&self) -> PlanarPoint {
        PlanarPoint { x: self.x, z: self.z }
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI); // [0, 2*pi)
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// Point on the floor plane; dimensionless after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub z: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, z: f64) -> Self {
        PlanarPoint { x, z }
    }

    pub fn distance_to(&self, other: &PlanarPoint) -> f64 {
        let dx = self.x - other.x;
        let dz = self.z - other.z;
        (dx * dx + dz * dz).sqrt()
    }
}

/// The two competing sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alliance {
    Red,
    Blue,
}

impl Alliance {
    pub fn opponent(&self) -> Alliance {
        match self {
            Alliance::Red => Alliance::Blue,
            Alliance::Blue => Alliance::Red,
        }
    }
}

/// Back-project a pixel detection into the camera frame.
///
/// Computes `K^-1 * ([u, v, 1] * depth)`. The third row of the pinhole
/// matrix is `[0 0 1]`, so the result's z component equals the depth exactly.
pub fn pixel_to_camera(det: &PixelDetection, inv: &InverseIntrinsics) -> Vec3 {
    let v = det.scaled_homogeneous();
    Vec3::new(
        inv.inv_fx * v.x + inv.neg_cx_over_fx * v.z,
        inv.inv_fy * v.y + inv.neg_cy_over_fy * v.z,
        v.z,
    )
}

/// Rotate a vector about the x-axis by `angle` radians.
pub fn rotate_about_x(v: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(v.x, v.y * c - v.z * s, v.y * s + v.z * c)
}

/// Level out the mount tilt and shift into the robot frame.
///
/// Rotates by `-tilt` about the x-axis, then adds the forward offset to z.
/// The y component keeps the camera's down-positive sense, so a point on
/// the floor comes out with `y` close to the mount height.
pub fn camera_to_robot(r: Vec3, mount: &CameraMount) -> Vec3 {
    let w = rotate_about_x(r, -mount.tilt);
    Vec3::new(w.x, w.y, w.z + mount.forward_offset)
}

/// Discard the vertical component, keeping the floor-plane position.
pub fn drop_up_axis(w: Vec3) -> PlanarPoint {
    PlanarPoint { x: w.x, z: w.z }
}

/// Rotate a pose into the given alliance's reference frame.
///
/// Red sees the field as-is; blue sees it rotated half a turn about the
/// field center, which makes the two alliances' input spaces identical.
pub fn to_alliance_frame(p: Pose2D, alliance: Alliance) -> Pose2D {
    match alliance {
        Alliance::Red => p,
        Alliance::Blue => Pose2D::new(-p.x, -p.z, p.heading + PI),
    }
}

/// Rotate a floor point into the given alliance's reference frame.
pub fn point_to_alliance_frame(p: PlanarPoint, alliance: Alliance) -> PlanarPoint {
    match alliance {
        Alliance::Red => p,
        Alliance::Blue => PlanarPoint { x: -p.x, z: -p.z },
    }
}

/// Scale a floor point by the half field width so in-field points land in
/// `[-1, 1]` per axis.
pub fn normalize_position(p: PlanarPoint, half_field_width: f64) -> Result<PlanarPoint> {
    if !(half_field_width.is_finite() && half_field_width > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "half field width must be positive, got {half_field_width}"
        )));
    }
    Ok(PlanarPoint {
        x: p.x / half_field_width,
        z: p.z / half_field_width,
    })
}

/// Add independent uniform noise from `[-fraction, +fraction]` to each value.
///
/// Applied to already-normalized inputs, so the fraction reads directly as a
/// percentage of full scale. A zero fraction leaves the input untouched and
/// draws nothing from the generator.
pub fn inject_noise<R: rand::Rng>(values: &mut [f64], fraction: f64, rng: &mut R) {
    debug_assert!(fraction >= 0.0);
    if fraction <= 0.0 {
        return;
    }
    for v in values.iter_mut() {
        *v += rng.random_range(-fraction..=fraction);
    }
}

/// Express a world floor point in the robot's local frame.
///
/// Local `+z` is the robot's forward direction, local `+x` its right-hand
/// side. Inverse of the robot's rigid transform: translate by the negated
/// position, then rotate the heading out.
pub fn ring_to_robot_frame(ring: PlanarPoint, robot: &Pose2D) -> PlanarPoint {
    let dx = ring.x - robot.x;
    let dz = ring.z - robot.z;
    let (c, s) = (robot.heading.cos(), robot.heading.sin());
    // forward = (c, s), right = (s, -c)
    PlanarPoint {
        x: dx * s - dz * c,
        z: dx * c + dz * s,
    }
}

/// Bearing of a robot-frame point from the forward axis, counterclockwise
/// positive (a target to the robot's left has positive bearing).
pub fn bearing_of(local: PlanarPoint) -> f64 {
    (-local.x).atan2(local.z)
}

/// On-disk calibration: intrinsics plus mount, loaded from JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Calibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub tilt_rad: f64,
    pub height_m: f64,
    pub forward_offset_m: f64,
}

impl Calibration {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cal: Calibration = serde_json::from_str(&text)?;
        cal.intrinsics()?;
        cal.mount()?;
        Ok(cal)
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy)
    }

    pub fn mount(&self) -> Result<CameraMount> {
        CameraMount::new(self.tilt_rad, self.height_m, self.forward_offset_m)
    }
}
