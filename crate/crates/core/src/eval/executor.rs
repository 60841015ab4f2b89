use nalgebra::Vector3;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, WorldPoint};
use crate::scene::{Scene, SlotId, SlotSet};
use crate::seed;

/// Default lateral execution noise (meters, per axis).
pub const DEFAULT_EXEC_SIGMA: f64 = 0.002;

/// Parametric placement: the object goes to the anchor plus Gaussian lateral
/// noise in the tray frame, aligned with the slot axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutorModel {
    pub lateral_sigma: f64,
    pub seed: u64,
}

impl ExecutorModel {
    pub fn new(lateral_sigma: f64, seed: u64) -> Self {
        assert!(lateral_sigma >= 0.0 && lateral_sigma.is_finite(), "lateral_sigma must be >= 0");
        Self { lateral_sigma, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// World pose of the center of the object's base.
    pub pose: RigidTransform,
    /// Slot whose opening contains the placed center, if any.
    pub slot: Option<SlotId>,
    pub success: bool,
}

/// Places the scene's pick target at `anchor`. Success needs the whole
/// cross-section inside one slot opening, and that slot in `targets`.
pub fn execute_placement(anchor: WorldPoint, scene: &Scene, targets: &SlotSet, exec: &ExecutorModel) -> Placement {
    let (ex, ey) = if exec.lateral_sigma > 0.0 {
        let n = Normal::new(0.0, exec.lateral_sigma).expect("sigma validated");
        let mut rng = seed::rng(exec.seed, "executor");
        (n.sample(&mut rng), n.sample(&mut rng))
    } else {
        (0.0, 0.0)
    };
    let tray = &scene.tray;
    let q = tray.to_tray(anchor);
    let p = Vector3::new(q.x + ex, q.y + ey, q.z);
    let obj = scene.pick_target();
    let [a, b] = obj.footprint;

    let hit = tray.slots.iter().find(|s| {
        let c = tray.to_tray(s.center);
        (p.x - c.x).abs() <= s.inner_extent[0] / 2.0 && (p.y - c.y).abs() <= s.inner_extent[1] / 2.0
    });
    let Some(slot) = hit else {
        let pose = tray.base_pose.compose(&RigidTransform::from_translation(p.x, p.y, p.z));
        return Placement {
            pose,
            slot: None,
            success: false,
        };
    };
    let c = tray.to_tray(slot.center);
    let (dx, dy) = ((p.x - c.x).abs(), (p.y - c.y).abs());
    let [w, h] = slot.inner_extent;
    // slack on the tighter side for each yaw; keep the roomier orientation
    let slack = |fx: f64, fy: f64| (w / 2.0 - dx - fx / 2.0).min(h / 2.0 - dy - fy / 2.0);
    let (s0, s90) = (slack(a, b), slack(b, a));
    let (yaw, margin) = if s90 > s0 {
        (std::f64::consts::FRAC_PI_2, s90)
    } else {
        (0.0, s0)
    };
    let rest = Vector3::new(p.x, p.y, c.z - slot.depth);
    let pose = tray
        .base_pose
        .compose(&RigidTransform::from_yaw_translation(yaw, rest));
    Placement {
        pose,
        slot: Some(slot.id()),
        success: margin >= -1e-12 && targets.contains(&slot.id()),
    }
}
