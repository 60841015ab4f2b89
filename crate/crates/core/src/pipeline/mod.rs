//! Goal construction: ground an instruction into a marked head image, lift
//! the marker to a world anchor through depth, and re-project it into every
//! camera.

mod backend;
mod remote;
pub mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    back_project, pixel_radius, project, to_world, CameraId, GeometryError, PixelPoint, WorldPoint,
};
use crate::marker::{detect_marker, DetectError, HsvThresholds};
use crate::render::{DepthImage, RgbImage};
use crate::scene::CameraRig;

pub use backend::{erase_marker, GroundingBackend, OracleBackend, PerturbedBackend};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV, PROMPT_DIRECTIVE};

/// Default marker sphere radius in meters.
pub const DEFAULT_SPHERE_RADIUS: f64 = 0.015;
/// Side of the square window searched for valid depth around a hole.
pub const DEPTH_WINDOW: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("backend returned {got_width}x{got_height}, expected {width}x{height}")]
    DimensionMismatch {
        width: u32,
        height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("backend refused or sent a malformed reply: {0}")]
    BackendRefusal(String),
}

impl BackendError {
    /// Whether the same request might succeed if sent again.
    pub fn retryable(&self) -> bool {
        matches!(self, BackendError::TransportError(_))
    }

    pub fn class(&self) -> &'static str {
        match self {
            BackendError::TransportError(_) => "TransportError",
            BackendError::DimensionMismatch { .. } => "DimensionMismatch",
            BackendError::BackendRefusal(_) => "BackendRefusal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    NoMarker(#[from] DetectError),
    #[error("no valid depth near pixel ({u}, {v})")]
    DepthHole { u: u32, v: u32 },
    #[error("depth image is {got_width}x{got_height}, head camera is {width}x{height}")]
    Unregistered {
        width: u32,
        height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("sphere radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl PipelineError {
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::Backend(b) => b.class(),
            PipelineError::NoMarker(_) => "NoMarker",
            PipelineError::DepthHole { .. } => "DepthHole",
            PipelineError::Unregistered { .. } => "Unregistered",
            PipelineError::InvalidRadius(_) => "InvalidRadius",
            PipelineError::InvalidSigma(_) => "InvalidSigma",
            PipelineError::Geometry(_) => "Geometry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalView {
    pub camera: CameraId,
    pub pixel: PixelPoint,
    pub radius_px: f64,
}

/// A world anchor and its marker in every camera that sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualGoal {
    pub anchor: WorldPoint,
    pub views: Vec<GoalView>,
    pub sphere_radius: f64,
    pub source_pixel: PixelPoint,
    pub source_depth: f64,
}

impl VisualGoal {
    pub fn view(&self, id: CameraId) -> Option<&GoalView> {
        self.views.iter().find(|v| v.camera == id)
    }
}

/// Head observation at the start of an episode.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub head_rgb: &'a RgbImage,
    pub head_depth: &'a DepthImage,
    pub cameras: &'a CameraRig,
}

/// Depth at the pixel nearest `p`; a hole (0) falls back to the median of
/// valid depths in the surrounding window.
pub fn read_depth(depth: &DepthImage, p: PixelPoint) -> Result<f64, PipelineError> {
    let (w, h) = (depth.width() as i64, depth.height() as i64);
    let u = (p.u.round() as i64).clamp(0, w - 1);
    let v = (p.v.round() as i64).clamp(0, h - 1);
    let d = depth.get(u as u32, v as u32);
    if d > 0.0 {
        return Ok(d);
    }
    let half = (DEPTH_WINDOW / 2) as i64;
    let mut valid: Vec<f64> = Vec::new();
    for y in (v - half).max(0)..=(v + half).min(h - 1) {
        for x in (u - half).max(0)..=(u + half).min(w - 1) {
            let d = depth.get(x as u32, y as u32);
            if d > 0.0 {
                valid.push(d);
            }
        }
    }
    if valid.is_empty() {
        return Err(PipelineError::DepthHole {
            u: u as u32,
            v: v as u32,
        });
    }
    valid.sort_by(f64::total_cmp);
    let n = valid.len();
    Ok(if n % 2 == 1 {
        valid[n / 2]
    } else {
        0.5 * (valid[n / 2 - 1] + valid[n / 2])
    })
}

/// Lifts the marker in an already edited head image to a visual goal.
pub fn goal_from_edited(
    edited: &RgbImage,
    obs: &Observation<'_>,
    r: f64,
    thresholds: &HsvThresholds,
) -> Result<VisualGoal, PipelineError> {
    if !(r > 0.0) {
        return Err(PipelineError::InvalidRadius(r));
    }
    let head = &obs.cameras.head;
    let k = &head.intrinsics;
    if obs.head_depth.width() != k.width || obs.head_depth.height() != k.height {
        return Err(PipelineError::Unregistered {
            width: k.width,
            height: k.height,
            got_width: obs.head_depth.width(),
            got_height: obs.head_depth.height(),
        });
    }
    let det = detect_marker(edited, thresholds)?;
    let z = read_depth(obs.head_depth, det.center)?;
    let pc = back_project(det.center, z, k, CameraId::Head)?;
    let anchor = to_world(pc, head)?;
    let mut views = Vec::new();
    for cam in obs.cameras.all() {
        match project(anchor, cam) {
            Ok(pr) => views.push(GoalView {
                camera: cam.id,
                pixel: pr.pixel,
                radius_px: pixel_radius(r, pr.depth, cam.intrinsics.fx)?,
            }),
            Err(GeometryError::BehindCamera(_)) => {
                log::debug!("anchor behind the {} camera; view dropped", cam.id)
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(VisualGoal {
        anchor,
        views,
        sphere_radius: r,
        source_pixel: det.center,
        source_depth: z,
    })
}

/// Full goal construction: backend grounding followed by [`goal_from_edited`].
pub fn construct_goal(
    obs: &Observation<'_>,
    instruction_text: &str,
    backend: &dyn GroundingBackend,
    r: f64,
    thresholds: &HsvThresholds,
) -> Result<VisualGoal, PipelineError> {
    if !(r > 0.0) {
        return Err(PipelineError::InvalidRadius(r));
    }
    let edited = backend.ground(obs.head_rgb, instruction_text)?;
    goal_from_edited(&edited, obs, r, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::render;
    use crate::scene::{generate_scene, Category, SlotId};

    #[test]
    fn depth_hole_fallback_uses_window_median() {
        let mut d = DepthImage::new(10, 10);
        for (i, (x, y)) in [(3, 3), (4, 3), (5, 5)].into_iter().enumerate() {
            d.set(x, y, 1.0 + i as f64);
        }
        assert_eq!(read_depth(&d, PixelPoint::new(4.2, 4.4)).unwrap(), 2.0);
        d.set(4, 4, 0.7);
        assert_eq!(read_depth(&d, PixelPoint::new(4.2, 4.4)).unwrap(), 0.7);
        let empty = DepthImage::new(10, 10);
        assert_eq!(
            read_depth(&empty, PixelPoint::new(4.0, 4.0)),
            Err(PipelineError::DepthHole { u: 4, v: 4 })
        );
    }

    #[test]
    fn oracle_anchor_lands_on_slot_center() {
        let scene = generate_scene(Category::Ordinal, 1, 2).unwrap();
        let (rgb, depth) = render(&scene, &scene.cameras.head);
        let obs = Observation {
            head_rgb: &rgb,
            head_depth: &depth,
            cameras: &scene.cameras,
        };
        let slot = scene.slot(SlotId::new(2, 2)).unwrap();
        let oracle = OracleBackend::new(&scene, slot.center, DEFAULT_SPHERE_RADIUS);
        let th = HsvThresholds::default();
        let goal = construct_goal(&obs, "x", &oracle, DEFAULT_SPHERE_RADIUS, &th).unwrap();
        assert!(goal.anchor.distance(&slot.center) < 0.002, "{:?}", goal.anchor);
        assert_eq!(goal.views.len(), 2);
        for v in &goal.views {
            let cam = scene.cameras.get(v.camera);
            let pr = project(goal.anchor, cam).unwrap();
            assert!(pr.pixel.distance(&v.pixel) < 1e-6);
        }
    }

    #[test]
    fn no_marker_propagates() {
        struct Blank;
        impl GroundingBackend for Blank {
            fn ground(&self, img: &RgbImage, _: &str) -> Result<RgbImage, BackendError> {
                Ok(img.clone())
            }
        }
        let scene = generate_scene(Category::Size, 1, 0).unwrap();
        let (rgb, depth) = render(&scene, &scene.cameras.head);
        let obs = Observation {
            head_rgb: &rgb,
            head_depth: &depth,
            cameras: &scene.cameras,
        };
        let err = construct_goal(&obs, "x", &Blank, 0.015, &HsvThresholds::default()).unwrap_err();
        assert_eq!(err.class(), "NoMarker");
        assert!(matches!(
            construct_goal(&obs, "x", &Blank, 0.0, &HsvThresholds::default()),
            Err(PipelineError::InvalidRadius(_))
        ));
    }
}
