use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    default_knowledge, feasible_slots, fits, CameraRig, Category, ObjectRole, Scene, SceneError,
    SceneObject, Slot, Tray, DEFAULT_CLEARANCE, DEFAULT_SLOT_EXTENT, MAX_TRANSLATION_NOISE,
    OBJECT_LENGTH, OBJECT_WIDTH,
};
use crate::geometry::{wrist_pose, CameraId, CameraModel, Intrinsics, RigidTransform, WorldPoint};
use crate::seed;

/// Attempts per scene before giving up with `DegenerateScene`.
pub const RETRY_BUDGET: u32 = 64;

/// Grid sizes cycled by variant number (rows, cols).
const GRIDS: [(u32, u32); 5] = [(3, 3), (3, 4), (4, 4), (2, 4), (4, 5)];

const PITCH: f64 = 0.048;
const WALL: f64 = 0.012;
const DEFAULT_DEPTH: f64 = 0.06;
const DEFAULT_RIM: f64 = 0.03;
const NARROW: f64 = 0.022;
/// Minimum gap between the best and second-best distance for a reference
/// object to count as an unambiguous anchor.
const DISTANCE_MARGIN: f64 = 0.003;
/// Slot centers must project at least this far inside the head image.
const VIEW_MARGIN_PX: f64 = 16.0;

const TRAY_NOMINAL: [f64; 2] = [0.0, 0.45];
const MAX_TRAY_YAW: f64 = 0.15;

/// Nominal parking spots for objects, relative to the nominal tray center.
/// The first one holds the pick target.
const SPOTS: [[f64; 2]; 5] = [
    [0.32, -0.09],
    [0.30, 0.17],
    [0.0, 0.29],
    [-0.30, 0.17],
    [-0.32, -0.09],
];

const REFERENCE_NAMES: [&str; 5] = ["mug", "bowl", "can", "book", "apple"];
const DISTRACTOR_NAMES: [&str; 4] = ["sponge", "tape roll", "cup", "brush"];

/// Rendering resolution shared by both cameras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
        }
    }
}

impl SceneConfig {
    fn head_intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(0.9375 * self.width as f64, self.width, self.height)
            .expect("valid head intrinsics")
    }

    fn wrist_intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(0.7 * self.width as f64, self.width, self.height)
            .expect("valid wrist intrinsics")
    }
}

pub fn generate_scene(category: Category, variant: u32, seed: u64) -> Result<Scene, SceneError> {
    generate_scene_with(&SceneConfig::default(), category, variant, seed)
}

/// Deterministic scene for `(category, variant, seed)`. Retries with fresh
/// randomness until the category's well-posedness condition holds.
pub fn generate_scene_with(
    config: &SceneConfig,
    category: Category,
    variant: u32,
    seed: u64,
) -> Result<Scene, SceneError> {
    if variant == 0 {
        return Err(SceneError::InvalidVariant(variant));
    }
    for attempt in 0..RETRY_BUDGET {
        let mut rng = seed::rng(seed, &format!("scene/{category}/{variant}/{attempt}"));
        let scene = build(config, category, variant, seed, &mut rng);
        if well_posed(&scene) {
            return Ok(scene);
        }
    }
    Err(SceneError::DegenerateScene {
        category,
        variant,
        seed,
        attempts: RETRY_BUDGET,
    })
}

#[derive(Clone, Copy)]
struct SlotSpec {
    extent: [f64; 2],
    depth: f64,
    rim: f64,
}

impl Default for SlotSpec {
    fn default() -> Self {
        Self {
            extent: [DEFAULT_SLOT_EXTENT; 2],
            depth: DEFAULT_DEPTH,
            rim: DEFAULT_RIM,
        }
    }
}

/// Uniform draw on a 0.5 mm lattice in `[lo, hi]`.
fn quantized(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) / 0.0005).round() as u32;
    lo + 0.0005 * rng.random_range(0..=steps) as f64
}

fn feasible_extent(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 2] {
    [quantized(rng, lo, hi), quantized(rng, lo, hi)]
}

fn narrow_extent(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let e = [NARROW, quantized(rng, NARROW, 0.032)];
    if rng.random_bool(0.5) {
        e
    } else {
        [e[1], e[0]]
    }
}

/// Slots in the 2×2 block at the lower-left corner.
pub(crate) fn in_lower_left(row: u32, col: u32) -> bool {
    row <= 2 && col <= 2
}

fn layout(category: Category, rows: u32, cols: u32, rng: &mut ChaCha8Rng) -> Vec<SlotSpec> {
    let n = (rows * cols) as usize;
    let mut specs = vec![SlotSpec::default(); n];
    let rc = |i: usize| ((i as u32) / cols + 1, (i as u32) % cols + 1);
    match category {
        Category::Ordinal | Category::Distance | Category::Knowledge => {}
        Category::Size => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            for s in specs.iter_mut() {
                s.extent = feasible_extent(rng, 0.030, 0.033);
            }
            specs[idx[0]].extent = [0.036, 0.036];
            specs[idx[1]].extent = [0.029, 0.029];
        }
        Category::Height => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            for s in specs.iter_mut() {
                s.rim = 0.025 + 0.005 * rng.random_range(0..=4) as f64;
            }
            specs[idx[0]].rim = 0.05;
            specs[idx[1]].rim = 0.02;
        }
        Category::Compositional => {
            for s in specs.iter_mut() {
                s.extent = feasible_extent(rng, 0.029, 0.036);
                s.rim = 0.02 + 0.005 * rng.random_range(0..=6) as f64;
            }
        }
        Category::Negation => {
            let outside: Vec<usize> = (0..n).filter(|&i| !in_lower_left(rc(i).0, rc(i).1)).collect();
            let keep = *outside.choose(rng).expect("grid has slots outside the corner block");
            for (i, s) in specs.iter_mut().enumerate() {
                let (r, c) = rc(i);
                let feasible = if in_lower_left(r, c) {
                    rng.random_bool(0.6)
                } else {
                    i == keep
                };
                s.extent = if feasible {
                    feasible_extent(rng, 0.030, 0.035)
                } else {
                    narrow_extent(rng)
                };
            }
        }
        Category::Vague => {
            for s in specs.iter_mut() {
                s.extent = if rng.random_bool(0.5) {
                    feasible_extent(rng, 0.030, 0.034)
                } else {
                    narrow_extent(rng)
                };
            }
        }
        Category::Affordance => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let decoys = rng.random_range(1..=2);
            for (k, &i) in idx.iter().enumerate() {
                let s = &mut specs[i];
                if k == 0 {
                    s.extent = feasible_extent(rng, 0.030, 0.033);
                    s.depth = 0.08 + 0.01 * rng.random_range(0..=2) as f64;
                } else if k <= decoys {
                    s.extent = narrow_extent(rng);
                    s.depth = 0.08 + 0.01 * rng.random_range(0..=2) as f64;
                } else {
                    s.extent = if rng.random_bool(0.7) {
                        feasible_extent(rng, 0.030, 0.033)
                    } else {
                        narrow_extent(rng)
                    };
                    s.depth = 0.04 + 0.01 * rng.random_range(0..=2) as f64;
                }
            }
        }
    }
    specs
}

fn uniform(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    rng.random_range(-half..=half)
}

fn object(
    rng: &mut ChaCha8Rng,
    name: &str,
    role: ObjectRole,
    spot: [f64; 2],
    footprint: [f64; 2],
    height: f64,
) -> SceneObject {
    let t = Vector3::new(
        TRAY_NOMINAL[0] + spot[0] + uniform(rng, MAX_TRANSLATION_NOISE),
        TRAY_NOMINAL[1] + spot[1] + uniform(rng, MAX_TRANSLATION_NOISE),
        0.0,
    );
    let yaw = rng.random_range(-PI..PI);
    SceneObject {
        name: name.to_string(),
        footprint,
        height,
        pose: RigidTransform::from_yaw_translation(yaw, t),
        role,
    }
}

fn prop_size(rng: &mut ChaCha8Rng) -> ([f64; 2], f64) {
    (
        [rng.random_range(0.04..0.07), rng.random_range(0.04..0.07)],
        rng.random_range(0.03..0.09),
    )
}

fn build(
    config: &SceneConfig,
    category: Category,
    variant: u32,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Scene {
    let (rows, cols) = GRIDS[((variant - 1) as usize) % GRIDS.len()];
    let specs = layout(category, rows, cols, rng);

    let base_pose = RigidTransform::from_yaw_translation(
        uniform(rng, MAX_TRAY_YAW),
        Vector3::new(
            TRAY_NOMINAL[0] + uniform(rng, MAX_TRANSLATION_NOISE),
            TRAY_NOMINAL[1] + uniform(rng, MAX_TRANSLATION_NOISE),
            0.0,
        ),
    );
    let slots = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let row = i as u32 / cols + 1;
            let col = i as u32 % cols + 1;
            let local = Vector3::new(
                (col as f64 - 1.0 - (cols as f64 - 1.0) / 2.0) * PITCH,
                (row as f64 - 1.0 - (rows as f64 - 1.0) / 2.0) * PITCH,
                spec.rim,
            );
            Slot {
                row,
                col,
                center: WorldPoint::from_vector(base_pose.apply(&local)),
                inner_extent: spec.extent,
                depth: spec.depth,
                rim_height: spec.rim,
            }
        })
        .collect();
    let tray = Tray {
        rows,
        cols,
        pitch: PITCH,
        wall_thickness: WALL,
        base_pose,
        slots,
    };

    let mut spots: Vec<[f64; 2]> = SPOTS[1..].to_vec();
    spots.shuffle(rng);
    let mut spots = spots.into_iter();
    let mut objects = vec![object(
        rng,
        "block",
        ObjectRole::PickTarget,
        SPOTS[0],
        [OBJECT_WIDTH, OBJECT_WIDTH],
        OBJECT_LENGTH,
    )];

    let knowledge = default_knowledge();
    let references: Vec<String> = match category {
        Category::Distance => {
            let k = rng.random_range(2..=3);
            let mut names = REFERENCE_NAMES.to_vec();
            names.shuffle(rng);
            names[..k].iter().map(|s| s.to_string()).collect()
        }
        Category::Compositional => {
            let mut names = REFERENCE_NAMES.to_vec();
            names.shuffle(rng);
            names[..2].iter().map(|s| s.to_string()).collect()
        }
        Category::Knowledge => {
            let mut zones: Vec<String> = knowledge.iter().map(|e| e.zone.clone()).collect();
            zones.dedup();
            zones.shuffle(rng);
            zones.truncate(3);
            zones
        }
        _ => Vec::new(),
    };
    for name in &references {
        let (fp, h) = prop_size(rng);
        let spot = spots.next().expect("enough parking spots");
        objects.push(object(rng, name, ObjectRole::Reference, spot, fp, h));
    }
    let distractors = rng.random_range(1..=2).min(spots.len());
    let mut dnames = DISTRACTOR_NAMES.to_vec();
    dnames.shuffle(rng);
    for name in dnames.into_iter().take(distractors) {
        let (fp, h) = prop_size(rng);
        let spot = spots.next().expect("enough parking spots");
        objects.push(object(rng, name, ObjectRole::Distractor, spot, fp, h));
    }

    let head_pose = RigidTransform::look_at(
        Vector3::new(0.0, 0.30, 0.80),
        Vector3::new(TRAY_NOMINAL[0], TRAY_NOMINAL[1], 0.0),
        Vector3::y(),
    )
    .expect("head camera is not looking along +y");
    let head = CameraModel::new(CameraId::Head, config.head_intrinsics(), head_pose);

    let tool_down = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let ee_pose = RigidTransform::new(
        tool_down,
        Vector3::new(
            TRAY_NOMINAL[0] + uniform(rng, 0.03),
            TRAY_NOMINAL[1] + uniform(rng, 0.03),
            0.42,
        ),
    )
    .expect("tool-down rotation");
    let hand_eye = hand_eye();
    let wrist = CameraModel::new(
        CameraId::Wrist,
        config.wrist_intrinsics(),
        wrist_pose(&ee_pose, &hand_eye),
    );

    Scene {
        category,
        variant,
        seed,
        tray,
        objects,
        cameras: CameraRig {
            head,
            wrist,
            ee_pose,
            hand_eye,
        },
        knowledge,
    }
}

/// Fixed wrist-camera mount: slightly pitched, offset from the flange.
fn hand_eye() -> RigidTransform {
    let (s, c) = 0.1f64.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
    RigidTransform::new(rx, Vector3::new(0.0, -0.05, 0.03)).expect("rotation about x")
}

fn unique_extreme(values: &[f64], margin: f64) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.len() < 2 || (v[1] - v[0] > margin && v[v.len() - 1] - v[v.len() - 2] > margin)
}

fn unique_min(values: &[f64], margin: f64) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.len() < 2 || v[1] - v[0] > margin
}

fn well_posed(scene: &Scene) -> bool {
    let head = &scene.cameras.head;
    let k = &head.intrinsics;
    let in_view = scene.tray.slots.iter().all(|s| match head.project(s.center) {
        Ok(p) => {
            p.pixel.u >= VIEW_MARGIN_PX
                && p.pixel.v >= VIEW_MARGIN_PX
                && p.pixel.u < k.width as f64 - VIEW_MARGIN_PX
                && p.pixel.v < k.height as f64 - VIEW_MARGIN_PX
        }
        Err(_) => false,
    });
    if !in_view || !clear_of_tray(scene) {
        return false;
    }

    let slots = &scene.tray.slots;
    let obj = scene.pick_target();
    let distances = |name: &str| -> Vec<f64> {
        let p = scene.object(name).expect("reference present").position();
        slots.iter().map(|s| s.center.distance(&p)).collect()
    };
    let references: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| o.role == ObjectRole::Reference)
        .collect();
    match scene.category {
        Category::Size => {
            let areas: Vec<f64> = slots.iter().map(Slot::area).collect();
            unique_extreme(&areas, 1e-12)
        }
        Category::Height => {
            let rims: Vec<f64> = slots.iter().map(|s| s.rim_height).collect();
            unique_extreme(&rims, 1e-12)
        }
        Category::Distance => references
            .iter()
            .all(|r| unique_extreme(&distances(&r.name), DISTANCE_MARGIN)),
        Category::Compositional => {
            // some column needs a single lowest rim for the per-column height phrasing
            let column_min = (1..=scene.tray.cols).any(|c| {
                let rims: Vec<f64> = slots.iter().filter(|s| s.col == c).map(|s| s.rim_height).collect();
                unique_min(&rims, 1e-12)
            });
            column_min
                && references
                    .iter()
                    .all(|r| unique_extreme(&distances(&r.name), DISTANCE_MARGIN))
        }
        Category::Knowledge => references
            .iter()
            .all(|r| unique_min(&distances(&r.name), DISTANCE_MARGIN)),
        Category::Negation => {
            let feasible = feasible_slots(scene, obj, DEFAULT_CLEARANCE);
            let outside = feasible
                .iter()
                .filter(|id| !in_lower_left(id.row, id.col))
                .count();
            let mut areas: Vec<f64> = feasible
                .iter()
                .map(|id| scene.slot(*id).expect("slot").area())
                .collect();
            areas.sort_by(f64::total_cmp);
            let distinct = areas.windows(2).all(|w| w[1] - w[0] > 1e-12);
            outside == 1 && feasible.len() >= 2 && distinct
        }
        Category::Vague => {
            let feasible = feasible_slots(scene, obj, DEFAULT_CLEARANCE);
            feasible.len() >= 2 && feasible.iter().any(|id| !in_lower_left(id.row, id.col))
        }
        Category::Affordance => {
            slots
                .iter()
                .filter(|s| {
                    fits(obj.footprint, s.inner_extent, DEFAULT_CLEARANCE)
                        && s.depth >= obj.height / 2.0
                })
                .count()
                == 1
        }
        Category::Ordinal => true,
    }
}

/// Objects must stand clear of the tray and of each other.
fn clear_of_tray(scene: &Scene) -> bool {
    let tray = &scene.tray;
    let tray_center = tray.base_pose.translation();
    let tray_radius =
        (tray.cols as f64 * tray.pitch).hypot(tray.rows as f64 * tray.pitch) / 2.0;
    let radius = |o: &SceneObject| o.footprint[0].hypot(o.footprint[1]) / 2.0;
    let planar = |a: &Vector3<f64>, b: &Vector3<f64>| (a.x - b.x).hypot(a.y - b.y);
    for (i, o) in scene.objects.iter().enumerate() {
        let p = o.pose.translation();
        if planar(p, tray_center) < tray_radius + radius(o) + 0.01 {
            return false;
        }
        for other in &scene.objects[i + 1..] {
            if planar(p, other.pose.translation()) < radius(o) + radius(other) + 0.01 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SlotId;

    #[test]
    fn ordinal_variant_one_is_three_by_three() {
        let sc = generate_scene(Category::Ordinal, 1, 0).unwrap();
        assert_eq!((sc.tray.rows, sc.tray.cols), (3, 3));
        assert_eq!(sc.tray.slots.len(), 9);
        let first = &sc.tray.slots[0];
        assert_eq!(first.id(), SlotId::new(1, 1));
        // (1,1) is bottom-left in the tray frame: smallest x and y
        let q0 = sc.tray.to_tray(first.center);
        for s in &sc.tray.slots {
            let q = sc.tray.to_tray(s.center);
            assert!(q.x >= q0.x - 1e-12 && q.y >= q0.y - 1e-12);
        }
    }

    #[test]
    fn size_scene_has_unique_largest_slot() {
        for seed in 0..20 {
            for variant in 1..=5 {
                let sc = generate_scene(Category::Size, variant, seed).unwrap();
                let max = sc.tray.slots.iter().map(Slot::area).fold(f64::MIN, f64::max);
                let at_max = sc.tray.slots.iter().filter(|s| s.area() == max).count();
                assert_eq!(at_max, 1, "seed {seed} variant {variant}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for c in Category::ALL {
            let a = generate_scene(c, 3, 42).unwrap();
            let b = generate_scene(c, 3, 42).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.to_document(), b.to_document());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_scene(Category::Ordinal, 1, 1).unwrap();
        let b = generate_scene(Category::Ordinal, 1, 2).unwrap();
        assert_ne!(a.tray.base_pose, b.tray.base_pose);
    }

    #[test]
    fn variant_zero_rejected() {
        assert!(matches!(
            generate_scene(Category::Size, 0, 0),
            Err(SceneError::InvalidVariant(0))
        ));
    }

    #[test]
    fn wrist_pose_matches_rig() {
        let sc = generate_scene(Category::Height, 2, 5).unwrap();
        let rig = &sc.cameras;
        assert_eq!(rig.wrist.world_pose, wrist_pose(&rig.ee_pose, &rig.hand_eye));
        // wrist camera looks down at the tray
        let p = rig.wrist.project(sc.tray.slots[0].center).unwrap();
        assert!(p.depth > 0.2 && p.depth < 0.6);
    }

    #[test]
    fn every_category_generates_many_seeds() {
        for c in Category::ALL {
            for seed in 0..10 {
                for variant in 1..=5 {
                    generate_scene(c, variant, seed).unwrap();
                }
            }
        }
    }
}
