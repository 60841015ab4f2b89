//! Slot-level placement through explicit spatial visual goals: camera
//! geometry, procedural slot-tray scenes, rendering, marker detection,
//! a constraint language for placement instructions, goal construction and
//! evaluation.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod eval;
pub mod geometry;
pub mod instruct;
pub mod marker;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod seed;

pub use geometry::{CameraId, CameraModel, Intrinsics, PixelPoint, RigidTransform, WorldPoint};
pub use instruct::{Constraint, Instruction};
pub use pipeline::{GroundingBackend, VisualGoal};
pub use scene::{Category, Scene, SceneConfig, Slot, SlotId, SlotSet};
