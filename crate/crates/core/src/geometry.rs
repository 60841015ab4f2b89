//! Pinhole camera geometry.
//!
//! Camera frames follow the usual pinhole convention: +Z forward, +X right,
//! +Y down. The world frame is the robot base with +Z up. Pixel coordinates
//! are continuous with the center of pixel `(i, j)` at `(i, j)`.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on per-entry orthonormality error for a rotation matrix.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) outside image {width}x{height}")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("point is in the {point} frame but camera is {camera}")]
    FrameMismatch { point: CameraId, camera: CameraId },
    #[error("point is behind the camera (Zc = {0})")]
    BehindCamera(f64),
    #[error("matrix is not a proper rotation (max entry error {0:e})")]
    NotARotation(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Rigid body transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = GeometryError;

    fn try_from(repr: TransformRepr) -> Result<Self, Self::Error> {
        let r = repr.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(rotation, Vector3::from(repr.translation))
    }
}

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1 within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = rotation_error(&rotation);
        if !(err <= ROTATION_TOLERANCE) || !translation.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NotARotation(err));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation about world +Z by `yaw` radians followed by a translation.
    pub fn from_yaw_translation(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation,
            translation,
        }
    }

    /// Camera-to-world pose of a camera at `eye` whose optical axis points at
    /// `target`. `up` is the world direction that should appear upward in the
    /// image (camera −Y). Returns `None` when `up` is parallel to the view ray.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Option<Self> {
        let z = (target - eye).try_normalize(1e-12)?;
        let x = z.cross(&up).try_normalize(1e-12)?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Some(Self {
            rotation: nearest_rotation(&rotation),
            translation: eye,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first. The rotation is re-projected onto
    /// SO(3) when round-off pushes it past [`ROTATION_TOLERANCE`].
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if rotation_error(&rotation) > ROTATION_TOLERANCE {
            rotation = nearest_rotation(&rotation);
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest per-entry deviation of `RᵀR` from identity, or of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        rotation_error(&self.rotation)
    }
}

fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let entry = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let det = (r.determinant() - 1.0).abs();
    if entry.is_nan() || det.is_nan() {
        return f64::INFINITY;
    }
    entry.max(det)
}

/// Polar projection onto the closest proper rotation.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidIntrinsics(msg.to_string()));
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return bad("focal lengths must be positive and finite");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx must lie in [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy must lie in [0, height)");
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn contains(&self, pix: PixelPoint) -> bool {
        pix.u >= 0.0 && pix.u < self.width as f64 && pix.v >= 0.0 && pix.v < self.height as f64
    }

    /// `depth · K⁻¹ · [u, v, 1]ᵀ`. The returned z equals `depth` exactly.
    pub fn back_project(&self, pix: PixelPoint, depth: f64) -> Result<Vector3<f64>, GeometryError> {
        if !(depth > 0.0) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        if !self.contains(pix) {
            return Err(GeometryError::OutOfBounds {
                u: pix.u,
                v: pix.v,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Vector3::new(
            depth * (pix.u - self.cx) / self.fx,
            depth * (pix.v - self.cy) / self.fy,
            depth,
        ))
    }

    /// Projects a camera-frame point; `λ = Zc` so the second value is the
    /// camera depth itself.
    pub fn project(&self, p: &Vector3<f64>) -> Result<(PixelPoint, f64), GeometryError> {
        let z = p.z;
        if !(z > 0.0) {
            return Err(GeometryError::BehindCamera(z));
        }
        let pix = PixelPoint::new(self.fx * p.x / z + self.cx, self.fy * p.y / z + self.cy);
        Ok((pix, z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraId {
    Head,
    Wrist,
}

impl CameraId {
    pub fn as_str(self) -> &'static str {
        match self {
            CameraId::Head => "head",
            CameraId::Wrist => "wrist",
        }
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: CameraId,
    pub intrinsics: Intrinsics,
    /// Camera-to-world pose.
    pub world_pose: RigidTransform,
}

impl CameraModel {
    pub fn new(id: CameraId, intrinsics: Intrinsics, world_pose: RigidTransform) -> Self {
        Self {
            id,
            intrinsics,
            world_pose,
        }
    }

    pub fn back_project(&self, pix: PixelPoint, depth: f64) -> Result<CameraPoint, GeometryError> {
        back_project(pix, depth, &self.intrinsics, self.id)
    }

    pub fn project(&self, p: WorldPoint) -> Result<Projection, GeometryError> {
        project(p, self)
    }

    pub fn to_camera(&self, p: WorldPoint) -> CameraPoint {
        let v = self.world_pose.inverse().apply(&p.to_vector());
        CameraPoint::new(self.id, v.x, v.y, v.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// A point expressed in the frame of a named camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPoint {
    pub frame: CameraId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CameraPoint {
    pub fn new(frame: CameraId, x: f64, y: f64, z: f64) -> Self {
        Self { frame, x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Result of projecting a world point: the pixel and the camera depth `Zc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: PixelPoint,
    pub depth: f64,
}

pub fn back_project(
    pix: PixelPoint,
    depth: f64,
    intrinsics: &Intrinsics,
    frame: CameraId,
) -> Result<CameraPoint, GeometryError> {
    let p = intrinsics.back_project(pix, depth)?;
    Ok(CameraPoint::new(frame, p.x, p.y, p.z))
}

pub fn to_world(p: CameraPoint, cam: &CameraModel) -> Result<WorldPoint, GeometryError> {
    if p.frame != cam.id {
        return Err(GeometryError::FrameMismatch {
            point: p.frame,
            camera: cam.id,
        });
    }
    Ok(WorldPoint::from_vector(cam.world_pose.apply(&p.to_vector())))
}

/// World pose of the wrist camera from the end-effector pose and the
/// hand-eye calibration.
pub fn wrist_pose(ee_pose: &RigidTransform, hand_eye: &RigidTransform) -> RigidTransform {
    ee_pose.compose(hand_eye)
}

/// Projection of a world point into `cam`. Points projecting outside the
/// image are not an error; visibility is the caller's call.
pub fn project(p: WorldPoint, cam: &CameraModel) -> Result<Projection, GeometryError> {
    let pc = cam.world_pose.inverse().apply(&p.to_vector());
    let (pixel, depth) = cam.intrinsics.project(&pc)?;
    Ok(Projection { pixel, depth })
}

/// Apparent radius in pixels of a sphere of radius `r` meters at depth `zc`.
pub fn pixel_radius(r: f64, zc: f64, fx: f64) -> Result<f64, GeometryError> {
    if !(zc > 0.0) {
        return Err(GeometryError::NonPositiveDepth(zc));
    }
    Ok(fx * r / zc)
}

/// Homogeneous form of a point, handy for matrix oracles.
pub fn homogeneous(p: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(p.x, p.y, p.z, 1.0)
}
