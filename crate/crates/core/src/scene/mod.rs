//! Slot-tray worlds: a rectangular grid of slots, the object to place,
//! reference objects, and the head/wrist camera rig.

mod generate;
mod knowledge;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraId, CameraModel, RigidTransform, WorldPoint};

pub use generate::{generate_scene, generate_scene_with, SceneConfig, RETRY_BUDGET};
pub use knowledge::{default_knowledge, KnowledgeEntry};

/// Default slot opening (meters per side).
pub const DEFAULT_SLOT_EXTENT: f64 = 0.03;
/// Cross-section of the pick object; it inserts end-on.
pub const OBJECT_WIDTH: f64 = 0.025;
pub const OBJECT_LENGTH: f64 = 0.15;
/// Clearance used by feasibility checks in the resolver.
pub const DEFAULT_CLEARANCE: f64 = 0.001;
/// Largest translation perturbation applied per axis to tray and objects.
pub const MAX_TRANSLATION_NOISE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("could not generate a well-posed {category} scene (variant {variant}, seed {seed}) after {attempts} attempts")]
    DegenerateScene {
        category: Category,
        variant: u32,
        seed: u64,
        attempts: u32,
    },
    #[error("invalid variant {0}: variants are numbered from 1")]
    InvalidVariant(u32),
    #[error("scene document: {0}")]
    Format(#[from] serde_json::Error),
    #[error("scene invariant violated: {0}")]
    Invalid(String),
}

/// The nine reasoning categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Ordinal,
    Size,
    Height,
    Distance,
    Compositional,
    Negation,
    Vague,
    Affordance,
    Knowledge,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Ordinal,
        Category::Size,
        Category::Height,
        Category::Distance,
        Category::Compositional,
        Category::Negation,
        Category::Vague,
        Category::Affordance,
        Category::Knowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Ordinal => "ordinal",
            Category::Size => "size",
            Category::Height => "height",
            Category::Distance => "distance",
            Category::Compositional => "compositional",
            Category::Negation => "negation",
            Category::Vague => "vague",
            Category::Affordance => "affordance",
            Category::Knowledge => "knowledge",
        }
    }

    /// Column heading used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            Category::Ordinal => "Ord.",
            Category::Size => "Size",
            Category::Height => "Hgt.",
            Category::Distance => "Dist.",
            Category::Compositional => "Comp.",
            Category::Negation => "Neg.",
            Category::Vague => "Vague",
            Category::Affordance => "Aff.",
            Category::Knowledge => "World",
        }
    }

    /// Whether instructions of this category name exactly one slot.
    pub fn unique_target(self) -> bool {
        self != Category::Vague
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.short().trim_end_matches('.').eq_ignore_ascii_case(&s))
            .ok_or_else(|| format!("unknown category '{s}'"))
    }
}

/// Grid index of a slot: 1-based, rows from the bottom, columns from the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotId {
    pub row: u32,
    pub col: u32,
}

impl SlotId {
    pub fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

impl FromStr for SlotId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (r, c) = t
            .split_once(',')
            .ok_or_else(|| format!("expected ROW,COL, got '{s}'"))?;
        let row = r.trim().parse().map_err(|_| format!("bad row in '{s}'"))?;
        let col = c.trim().parse().map_err(|_| format!("bad column in '{s}'"))?;
        Ok(SlotId { row, col })
    }
}

pub type SlotSet = BTreeSet<SlotId>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub row: u32,
    pub col: u32,
    /// World-frame center of the slot opening.
    pub center: WorldPoint,
    /// Opening size along the tray x and y axes.
    pub inner_extent: [f64; 2],
    pub depth: f64,
    /// Height of the opening above the tray base.
    pub rim_height: f64,
}

impl Slot {
    pub fn id(&self) -> SlotId {
        SlotId::new(self.row, self.col)
    }

    pub fn area(&self) -> f64 {
        self.inner_extent[0] * self.inner_extent[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tray {
    pub rows: u32,
    pub cols: u32,
    /// Center-to-center spacing of grid cells.
    pub pitch: f64,
    pub wall_thickness: f64,
    pub base_pose: RigidTransform,
    /// Row-major from (1, 1).
    pub slots: Vec<Slot>,
}

impl Tray {
    pub fn slot(&self, id: SlotId) -> Option<&Slot> {
        self.slots.iter().find(|s| s.id() == id)
    }

    pub fn ids(&self) -> SlotSet {
        self.slots.iter().map(Slot::id).collect()
    }

    /// Expresses a world point in the tray frame.
    pub fn to_tray(&self, p: WorldPoint) -> Vector3<f64> {
        self.base_pose.inverse().apply(&p.to_vector())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectRole {
    PickTarget,
    Distractor,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub footprint: [f64; 2],
    pub height: f64,
    /// Pose of the center of the object's base.
    pub pose: RigidTransform,
    pub role: ObjectRole,
}

impl SceneObject {
    pub fn position(&self) -> WorldPoint {
        WorldPoint::from_vector(*self.pose.translation())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub head: CameraModel,
    pub wrist: CameraModel,
    /// End-effector pose at capture time; `wrist.world_pose = ee_pose ∘ hand_eye`.
    pub ee_pose: RigidTransform,
    pub hand_eye: RigidTransform,
}

impl CameraRig {
    pub fn get(&self, id: CameraId) -> &CameraModel {
        match id {
            CameraId::Head => &self.head,
            CameraId::Wrist => &self.wrist,
        }
    }

    pub fn all(&self) -> [&CameraModel; 2] {
        [&self.head, &self.wrist]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub category: Category,
    pub variant: u32,
    pub seed: u64,
    pub tray: Tray,
    pub objects: Vec<SceneObject>,
    pub cameras: CameraRig,
    pub knowledge: Vec<KnowledgeEntry>,
}

impl Scene {
    pub fn pick_target(&self) -> &SceneObject {
        self.objects
            .iter()
            .find(|o| o.role == ObjectRole::PickTarget)
            .expect("scene has a pick target")
    }

    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn slot(&self, id: SlotId) -> Option<&Slot> {
        self.tray.slot(id)
    }

    /// Serializes to the scene document format (pretty JSON, trailing newline).
    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }

    pub fn from_document(src: &str) -> Result<Scene, SceneError> {
        let scene: Scene = serde_json::from_str(src)?;
        scene.validate()?;
        Ok(scene)
    }

    /// Checks the structural invariants that a parsed document must meet.
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if self.tray.slots.is_empty() {
            return bad("tray has no slots".into());
        }
        let ids = self.tray.ids();
        if ids.len() != self.tray.slots.len() {
            return bad("duplicate slot indices".into());
        }
        for s in &self.tray.slots {
            if !(s.inner_extent[0] > 0.0 && s.inner_extent[1] > 0.0 && s.depth > 0.0) {
                return bad(format!("slot {} has non-positive geometry", s.id()));
            }
        }
        let picks = self
            .objects
            .iter()
            .filter(|o| o.role == ObjectRole::PickTarget)
            .count();
        if picks != 1 {
            return bad(format!("expected exactly one pick target, found {picks}"));
        }
        for o in &self.objects {
            if !(o.footprint[0] > 0.0 && o.footprint[1] > 0.0 && o.height > 0.0) {
                return bad(format!("object '{}' has non-positive size", o.name));
            }
        }
        for cam in self.cameras.all() {
            cam.intrinsics
                .validate()
                .map_err(|e| SceneError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

/// Closed-region membership test in the tray frame: lateral offset within
/// half the opening plus `tol`, height between the slot bottom and
/// `center.z + rim_height + tol`.
pub fn slot_region_contains(scene: &Scene, slot: &Slot, p: WorldPoint, tol: f64) -> bool {
    let q = scene.tray.to_tray(p);
    let c = scene.tray.to_tray(slot.center);
    let dx = (q.x - c.x).abs();
    let dy = (q.y - c.y).abs();
    dx <= slot.inner_extent[0] / 2.0 + tol
        && dy <= slot.inner_extent[1] / 2.0 + tol
        && q.z >= c.z - slot.depth
        && q.z <= c.z + slot.rim_height + tol
}

/// Whether a `footprint` cross-section plus `clearance` on every side fits an
/// opening, allowing a 90° yaw.
pub fn fits(footprint: [f64; 2], extent: [f64; 2], clearance: f64) -> bool {
    const EPS: f64 = 1e-12;
    let (a, b) = (footprint[0] + 2.0 * clearance, footprint[1] + 2.0 * clearance);
    (a <= extent[0] + EPS && b <= extent[1] + EPS) || (b <= extent[0] + EPS && a <= extent[1] + EPS)
}

/// Slots whose opening admits `obj` with `clearance` on each side.
pub fn feasible_slots(scene: &Scene, obj: &SceneObject, clearance: f64) -> SlotSet {
    scene
        .tray
        .slots
        .iter()
        .filter(|s| fits(obj.footprint, s.inner_extent, clearance))
        .map(Slot::id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        generate_scene(Category::Ordinal, 1, 0).unwrap()
    }

    #[test]
    fn region_contains_center_and_boundary() {
        let sc = scene();
        let slot = &sc.tray.slots[4];
        assert!(slot_region_contains(&sc, slot, slot.center, 0.0));

        // one full slot width away along the tray x axis
        let x_axis = sc.tray.base_pose.rotation().column(0).into_owned();
        let far = slot.center.to_vector() + x_axis * slot.inner_extent[0];
        assert!(!slot_region_contains(&sc, slot, WorldPoint::from_vector(far), 0.0));
    }

    #[test]
    fn region_boundary_is_closed() {
        // An axis-aligned tray keeps boundary arithmetic exact.
        let mut sc = scene();
        sc.tray.base_pose = RigidTransform::identity();
        let slot = Slot {
            row: 1,
            col: 1,
            center: WorldPoint::new(0.25, 0.5, 0.03125),
            inner_extent: [0.03125, 0.0625],
            depth: 0.0625,
            rim_height: 0.03125,
        };
        let on_edge = WorldPoint::new(0.25 + 0.015625, 0.5 - 0.03125, 0.03125);
        assert!(slot_region_contains(&sc, &slot, on_edge, 0.0));
        let bottom = WorldPoint::new(0.25, 0.5, 0.03125 - 0.0625);
        assert!(slot_region_contains(&sc, &slot, bottom, 0.0));
        let top = WorldPoint::new(0.25, 0.5, 0.0625);
        assert!(slot_region_contains(&sc, &slot, top, 0.0));
        let just_out = WorldPoint::new(0.25 + 0.015625 + 1e-9, 0.5, 0.03125);
        assert!(!slot_region_contains(&sc, &slot, just_out, 0.0));
        assert!(slot_region_contains(&sc, &slot, just_out, 1e-6));
    }

    #[test]
    fn feasibility_examples() {
        let mut sc = scene();
        for s in &mut sc.tray.slots {
            s.inner_extent = [0.03, 0.03];
        }
        let mut obj = sc.pick_target().clone();
        obj.footprint = [0.02, 0.02];
        assert_eq!(feasible_slots(&sc, &obj, 0.004), sc.tray.ids());
        obj.footprint = [0.05, 0.02];
        assert!(feasible_slots(&sc, &obj, 0.0).is_empty());
    }

    #[test]
    fn fit_allows_rotation() {
        assert!(fits([0.02, 0.03], [0.031, 0.021], 0.0));
        assert!(!fits([0.02, 0.03], [0.031, 0.019], 0.0));
    }

    #[test]
    fn category_parsing() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert_eq!("World".parse::<Category>().unwrap(), Category::Knowledge);
        assert!("colour".parse::<Category>().is_err());
    }

    #[test]
    fn slot_id_parsing() {
        assert_eq!("2,3".parse::<SlotId>().unwrap(), SlotId::new(2, 3));
        assert_eq!("(1, 4)".parse::<SlotId>().unwrap(), SlotId::new(1, 4));
        assert!("7".parse::<SlotId>().is_err());
    }

    #[test]
    fn document_round_trip_is_byte_identical() {
        for c in Category::ALL {
            let sc = generate_scene(c, 2, 11).unwrap();
            let doc = sc.to_document();
            let back = Scene::from_document(&doc).unwrap();
            assert_eq!(back, sc);
            assert_eq!(back.to_document(), doc);
        }
    }
}
