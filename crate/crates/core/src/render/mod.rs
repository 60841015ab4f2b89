//! Deterministic software rasterizer for slot-tray scenes plus marker
//! overlays.
//!
//! Every scene element is an oriented box (12 triangles). Depth is
//! interpolated as `1/Zc` across each triangle, which is exact for planar
//! faces, so the depth image holds the true camera depth at each pixel center.

mod image;

use nalgebra::{Vector2, Vector3};

use crate::geometry::{pixel_radius, CameraId, CameraModel, PixelPoint, RigidTransform, WorldPoint};
use crate::scene::{ObjectRole, Scene};

pub use image::{png_text, DepthImage, ImageError, Rgb, RgbImage};

pub const BACKGROUND: Rgb = [40, 40, 40];
/// Marker color. No scene material has a hue anywhere near it.
pub const MARKER_COLOR: Rgb = [0, 0, 255];
pub const TRAY_COLOR: Rgb = [150, 150, 140];
pub const SLOT_COLOR: Rgb = [80, 62, 45];
pub const PICK_COLOR: Rgb = [200, 60, 40];
/// Colors for reference objects and distractors, assigned in scene order.
pub const PALETTE: [Rgb; 6] = [
    [70, 160, 70],
    [215, 190, 60],
    [225, 130, 40],
    [225, 225, 210],
    [150, 90, 60],
    [200, 110, 160],
];

/// Near clipping plane (meters).
const NEAR: f64 = 1e-3;
/// Slot openings sit this far proud of the surrounding cell tops.
const CAP_RELIEF: f64 = 0.001;
const CAP_THICKNESS: f64 = 0.003;

/// Oriented box: `pose` maps box-local coordinates (centered) to world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPrim {
    pub pose: RigidTransform,
    pub half_extents: Vector3<f64>,
    pub color: Rgb,
}

impl BoxPrim {
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.half_extents;
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.pose.apply(&Vector3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        out
    }
}

/// Corner indices of the six faces, each split into two triangles.
const FACES: [[usize; 4]; 6] = [
    [0, 1, 3, 2], // -z
    [4, 5, 7, 6], // +z
    [0, 1, 5, 4], // -y
    [2, 3, 7, 6], // +y
    [0, 2, 6, 4], // -x
    [1, 3, 7, 5], // +x
];

/// The box primitives making up `scene`, in a fixed order.
pub fn scene_boxes(scene: &Scene) -> Vec<BoxPrim> {
    let tray = &scene.tray;
    let mut boxes = Vec::with_capacity(tray.slots.len() * 2 + scene.objects.len());
    for slot in &tray.slots {
        let c = tray.to_tray(slot.center);
        let cell_top = slot.rim_height - CAP_RELIEF;
        boxes.push(BoxPrim {
            pose: tray
                .base_pose
                .compose(&RigidTransform::from_translation(c.x, c.y, cell_top / 2.0)),
            half_extents: Vector3::new(tray.pitch / 2.0, tray.pitch / 2.0, cell_top / 2.0),
            color: TRAY_COLOR,
        });
        boxes.push(BoxPrim {
            pose: tray.base_pose.compose(&RigidTransform::from_translation(
                c.x,
                c.y,
                slot.rim_height - CAP_THICKNESS / 2.0,
            )),
            half_extents: Vector3::new(
                slot.inner_extent[0] / 2.0,
                slot.inner_extent[1] / 2.0,
                CAP_THICKNESS / 2.0,
            ),
            color: SLOT_COLOR,
        });
    }
    let mut palette = PALETTE.iter().cycle();
    for obj in &scene.objects {
        let color = match obj.role {
            ObjectRole::PickTarget => PICK_COLOR,
            _ => *palette.next().expect("cycled palette"),
        };
        boxes.push(BoxPrim {
            pose: obj
                .pose
                .compose(&RigidTransform::from_translation(0.0, 0.0, obj.height / 2.0)),
            half_extents: Vector3::new(obj.footprint[0] / 2.0, obj.footprint[1] / 2.0, obj.height / 2.0),
            color,
        });
    }
    boxes
}

pub fn render(scene: &Scene, cam: &CameraModel) -> (RgbImage, DepthImage) {
    render_boxes(&scene_boxes(scene), cam)
}

/// Z-buffered rasterization of `boxes` as seen from `cam`.
pub fn render_boxes(boxes: &[BoxPrim], cam: &CameraModel) -> (RgbImage, DepthImage) {
    let k = &cam.intrinsics;
    let mut rgb = RgbImage::new(k.width, k.height, BACKGROUND);
    let mut depth = DepthImage::new(k.width, k.height);
    let world_to_cam = cam.world_pose.inverse();
    let light = Vector3::new(0.3, -0.5, 0.8).normalize();

    for b in boxes {
        let corners = b.corners();
        let local: Vec<Vector3<f64>> = corners.iter().map(|c| world_to_cam.apply(c)).collect();
        for face in FACES {
            let [a, bb, _, d] = face.map(|i| corners[i]);
            let normal = (bb - a).cross(&(d - a));
            let Some(normal) = normal.try_normalize(1e-15) else {
                continue;
            };
            let shade = 0.55 + 0.45 * normal.dot(&light).abs();
            let color = b.color.map(|ch| (ch as f64 * shade).round() as u8);
            let quad = face.map(|i| local[i]);
            for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                for clipped in clip_near(&tri) {
                    raster_triangle(&clipped, color, cam, &mut rgb, &mut depth);
                }
            }
        }
    }
    (rgb, depth)
}

/// Clips a camera-frame triangle against `z >= NEAR`, returning a fan.
fn clip_near(tri: &[Vector3<f64>; 3]) -> Vec<[Vector3<f64>; 3]> {
    if tri.iter().all(|v| v.z >= NEAR) {
        return vec![*tri];
    }
    let mut poly: Vec<Vector3<f64>> = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        let cur_in = cur.z >= NEAR;
        let next_in = next.z >= NEAR;
        if cur_in {
            poly.push(cur);
        }
        if cur_in != next_in {
            let t = (NEAR - cur.z) / (next.z - cur.z);
            poly.push(cur + (next - cur) * t);
        }
    }
    (1..poly.len().saturating_sub(1))
        .map(|i| [poly[0], poly[i], poly[i + 1]])
        .collect()
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn raster_triangle(
    tri: &[Vector3<f64>; 3],
    color: Rgb,
    cam: &CameraModel,
    rgb: &mut RgbImage,
    depth: &mut DepthImage,
) {
    let k = &cam.intrinsics;
    let screen = tri.map(|v| Vector2::new(k.fx * v.x / v.z + k.cx, k.fy * v.y / v.z + k.cy));
    let area = edge(&screen[0], &screen[1], &screen[2]);
    if area.abs() < 1e-12 {
        return;
    }
    let min_x = screen.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = screen.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = screen.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = screen.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let x0 = min_x.ceil().max(0.0);
    let x1 = max_x.floor().min(k.width as f64 - 1.0);
    let y0 = min_y.ceil().max(0.0);
    let y1 = max_y.floor().min(k.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let inv_z = tri.map(|v| 1.0 / v.z);
    for y in y0 as u32..=y1 as u32 {
        for x in x0 as u32..=x1 as u32 {
            let p = Vector2::new(x as f64, y as f64);
            let w0 = edge(&screen[1], &screen[2], &p) / area;
            let w1 = edge(&screen[2], &screen[0], &p) / area;
            let w2 = edge(&screen[0], &screen[1], &p) / area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let z = 1.0 / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
            let current = depth.get(x, y);
            if current == 0.0 || z < current {
                depth.set(x, y, z);
                rgb.set(x, y, color);
            }
        }
    }
}

/// Fills the disk `|p − center| ≤ radius_px` (pixel centers sampled, no
/// anti-aliasing). Off-image pixels are clipped. The pixel nearest the center
/// is always painted when in bounds, so a marker never vanishes.
pub fn draw_sphere_marker(img: &mut RgbImage, center: PixelPoint, radius_px: f64, color: Rgb) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = radius_px.max(0.0);
    let (cu, cv) = (center.u.round(), center.v.round());
    if cu >= 0.0 && cv >= 0.0 && (cu as i64) < w && (cv as i64) < h {
        img.set(cu as u32, cv as u32, color);
    }
    if r == 0.0 {
        return;
    }
    let x0 = (center.u - r).ceil().max(0.0) as i64;
    let x1 = ((center.u + r).floor() as i64).min(w - 1);
    let y0 = (center.v - r).ceil().max(0.0) as i64;
    let y1 = ((center.v + r).floor() as i64).min(h - 1);
    let r2 = r * r;
    for y in y0..=y1 {
        let dy = y as f64 - center.v;
        for x in x0..=x1 {
            let dx = x as f64 - center.u;
            if dx * dx + dy * dy <= r2 {
                img.set(x as u32, y as u32, color);
            }
        }
    }
}

/// Draws the marker for a world-space `anchor` of radius `r` meters onto an
/// image from `cam`. Returns the drawn pixel center and radius, or `None`
/// when the anchor is behind the camera.
pub fn overlay_anchor(
    img: &mut RgbImage,
    cam: &CameraModel,
    anchor: WorldPoint,
    r: f64,
) -> Option<(PixelPoint, f64)> {
    let proj = cam.project(anchor).ok()?;
    let radius = pixel_radius(r, proj.depth, cam.intrinsics.fx).ok()?;
    draw_sphere_marker(img, proj.pixel, radius, MARKER_COLOR);
    Some((proj.pixel, radius))
}

/// Renders every camera of the rig and overlays the anchor marker. Cameras
/// that have the anchor behind them get a clean render.
pub fn render_goal_overlays(scene: &Scene, anchor: WorldPoint, r: f64) -> Vec<(CameraId, RgbImage)> {
    scene
        .cameras
        .all()
        .into_iter()
        .map(|cam| {
            let (mut rgb, _) = render(scene, cam);
            if overlay_anchor(&mut rgb, cam, anchor, r).is_none() {
                log::warn!("anchor is behind the {} camera; no marker drawn", cam.id);
            }
            (cam.id, rgb)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, RigidTransform};
    use crate::scene::{generate_scene, Category};

    fn cam() -> CameraModel {
        CameraModel::new(
            CameraId::Head,
            Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap(),
            RigidTransform::identity(),
        )
    }

    #[test]
    fn empty_scene_is_background() {
        let (rgb, depth) = render_boxes(&[], &cam());
        assert!(depth.depths().iter().all(|d| *d == 0.0));
        assert!(rgb.pixels().iter().all(|p| *p == BACKGROUND));
    }

    #[test]
    fn unit_box_near_face_depth() {
        let b = BoxPrim {
            pose: RigidTransform::from_translation(0.0, 0.0, 1.0),
            half_extents: Vector3::new(0.5, 0.5, 0.5),
            color: TRAY_COLOR,
        };
        let (rgb, depth) = render_boxes(&[b], &cam());
        assert!((depth.get(320, 240) - 0.5).abs() < 1e-12);
        assert_ne!(rgb.get(320, 240), BACKGROUND);
    }

    #[test]
    fn box_straddling_camera_is_clipped() {
        let b = BoxPrim {
            pose: RigidTransform::from_translation(0.0, 0.0, 0.0),
            half_extents: Vector3::new(0.5, 0.5, 2.0),
            color: TRAY_COLOR,
        };
        // camera sits inside the box: only the far face (z = 2) is visible
        let (_, depth) = render_boxes(&[b], &cam());
        assert!((depth.get(320, 240) - 2.0).abs() < 1e-9);
        assert!(depth.depths().iter().all(|d| *d == 0.0 || *d >= NEAR));
    }

    #[test]
    fn disk_radius_zero_paints_one_pixel() {
        let mut img = RgbImage::new(50, 50, BACKGROUND);
        draw_sphere_marker(&mut img, PixelPoint::new(10.2, 20.7), 0.0, MARKER_COLOR);
        assert_eq!(img.count(MARKER_COLOR), 1);
        assert_eq!(img.get(10, 21), MARKER_COLOR);
    }

    #[test]
    fn disk_outside_image_is_clipped() {
        let mut img = RgbImage::new(50, 50, BACKGROUND);
        let before = img.clone();
        draw_sphere_marker(&mut img, PixelPoint::new(-30.0, 10.0), 8.0, MARKER_COLOR);
        draw_sphere_marker(&mut img, PixelPoint::new(25.0, 90.0), 8.0, MARKER_COLOR);
        assert_eq!(img, before);
    }

    #[test]
    fn disk_area_matches_circle() {
        // count oracle: the disk covers between π·7.5² and π·8.5² pixels
        let mut img = RgbImage::new(640, 480, BACKGROUND);
        draw_sphere_marker(&mut img, PixelPoint::new(100.0, 150.0), 8.0, MARKER_COLOR);
        let n = img.count(MARKER_COLOR) as f64;
        let pi = std::f64::consts::PI;
        assert!(n >= pi * 7.5 * 7.5 && n <= pi * 8.5 * 8.5, "{n}");
        // untouched outside the disk
        assert_eq!(img.get(100, 140), BACKGROUND);
        assert_eq!(img.get(100, 142), MARKER_COLOR);
    }

    #[test]
    fn scene_render_has_no_background_depth_mismatch() {
        let sc = generate_scene(Category::Compositional, 3, 9).unwrap();
        for cam in sc.cameras.all() {
            let (rgb, depth) = render(&sc, cam);
            for (p, d) in rgb.pixels().iter().zip(depth.depths()) {
                assert_eq!(*d > 0.0, *p != BACKGROUND);
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let sc = generate_scene(Category::Distance, 2, 4).unwrap();
        let a = render(&sc, &sc.cameras.head);
        let b = render(&sc, &sc.cameras.head);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn slot_center_depth_is_opening_depth() {
        let sc = generate_scene(Category::Height, 1, 3).unwrap();
        let head = &sc.cameras.head;
        let (_, depth) = render(&sc, head);
        for s in &sc.tray.slots {
            let p = head.project(s.center).unwrap();
            let d = depth.get(p.pixel.u.round() as u32, p.pixel.v.round() as u32);
            assert!((d - p.depth).abs() < 2e-3, "slot {} depth {d} vs {}", s.id(), p.depth);
        }
    }

    #[test]
    fn overlay_behind_camera_has_no_marker() {
        let mut sc = generate_scene(Category::Ordinal, 1, 0).unwrap();
        // turn the wrist camera to face up, away from the tray
        sc.cameras.wrist.world_pose = RigidTransform::from_translation(0.0, 0.45, 0.42);
        let overlays = render_goal_overlays(&sc, sc.tray.slots[0].center, 0.015);
        let wrist = &overlays.iter().find(|(id, _)| *id == CameraId::Wrist).unwrap().1;
        assert_eq!(wrist.count(MARKER_COLOR), 0);
        let head = &overlays.iter().find(|(id, _)| *id == CameraId::Head).unwrap().1;
        assert!(head.count(MARKER_COLOR) > 50);
    }
}
