use crate::geometry::WorldPoint;
use crate::scene::{slot_region_contains, Scene, Slot};

/// Default instruction-accuracy radius in meters.
pub const IA_TOLERANCE: f64 = 0.02;

/// Anchor within `tol` of the target center (closed ball).
pub fn instruction_accuracy(anchor: WorldPoint, gt_center: WorldPoint, tol: f64) -> bool {
    debug_assert!(tol > 0.0);
    anchor.distance(&gt_center) <= tol
}

/// Anchor inside the target slot's region.
pub fn coarse_accuracy(anchor: WorldPoint, scene: &Scene, gt_slot: &Slot) -> bool {
    slot_region_contains(scene, gt_slot, anchor, 0.0)
}
