use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use slotgoal_core::geometry::{
    back_project, homogeneous, pixel_radius, project, to_world, wrist_pose, CameraId, CameraModel,
    Intrinsics, PixelPoint, RigidTransform, WorldPoint,
};

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (
        -3.2f64..3.2,
        -3.2f64..3.2,
        -3.2f64..3.2,
        prop::array::uniform3(-2.0f64..2.0),
    )
        .prop_map(|(r, p, y, t)| {
            let rot: Matrix3<f64> = Rotation3::from_euler_angles(r, p, y).into_inner();
            RigidTransform::new(rot, Vector3::from(t)).unwrap()
        })
}

fn intrinsics() -> impl Strategy<Value = Intrinsics> {
    (200.0f64..900.0, 0.9f64..1.1, 0.4f64..0.6, 0.4f64..0.6).prop_map(|(fx, aspect, ax, ay)| {
        Intrinsics::new(fx, fx * aspect, 640.0 * ax, 480.0 * ay, 640, 480).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn long_composition_chains_stay_rotations(chain in prop::collection::vec(rigid(), 1000)) {
        let mut acc = RigidTransform::identity();
        for t in &chain {
            acc = acc.compose(t);
            prop_assert!(acc.orthonormality_error() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn compose_matches_homogeneous_product(a in rigid(), b in rigid(), p in prop::array::uniform3(-1.0f64..1.0)) {
        let p = Vector3::from(p);
        let via_compose = a.compose(&b).apply(&p);
        let m = a.to_homogeneous() * b.to_homogeneous() * homogeneous(&p);
        prop_assert!((via_compose - m.xyz()).norm() < 1e-9);
        let back = a.inverse().apply(&a.apply(&p));
        prop_assert!((back - p).norm() < 1e-9);
    }

    #[test]
    fn back_project_then_project_is_identity(
        k in intrinsics(),
        pose in rigid(),
        u in 0.0f64..639.0,
        v in 0.0f64..479.0,
        depth in 0.05f64..5.0,
    ) {
        let cam = CameraModel::new(CameraId::Head, k, pose);
        let pc = back_project(PixelPoint::new(u, v), depth, &k, CameraId::Head).unwrap();
        prop_assert!((pc.z - depth).abs() < 1e-12);
        let w = to_world(pc, &cam).unwrap();
        let pr = project(w, &cam).unwrap();
        prop_assert!(pr.pixel.distance(&PixelPoint::new(u, v)) < 1e-6);
        prop_assert!((pr.depth - depth).abs() < 1e-9);
    }

    #[test]
    fn projection_matches_pinhole_matrix(k in intrinsics(), pose in rigid(), x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let cam = CameraModel::new(CameraId::Head, k, pose);
        let w = Vector3::new(x, y, z);
        let pc = pose.inverse().to_homogeneous() * homogeneous(&w);
        let img = k.matrix() * pc.xyz();
        match project(WorldPoint::from_vector(w), &cam) {
            Ok(pr) => {
                prop_assert!(pc.z > 0.0);
                prop_assert!((pr.pixel.u - img.x / img.z).abs() < 1e-6);
                prop_assert!((pr.pixel.v - img.y / img.z).abs() < 1e-6);
                prop_assert!((pr.depth - pc.z).abs() < 1e-9);
            }
            Err(_) => prop_assert!(pc.z <= 0.0),
        }
    }

    #[test]
    fn head_and_wrist_agree_on_world_points(
        head_pose in rigid(),
        ee in rigid(),
        hand_eye in rigid(),
        k in intrinsics(),
        p in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let head = CameraModel::new(CameraId::Head, k, head_pose);
        let wrist = CameraModel::new(CameraId::Wrist, k, wrist_pose(&ee, &hand_eye));
        let w = WorldPoint::from_vector(Vector3::from(p));
        for cam in [&head, &wrist] {
            let visible = project(w, cam).ok().filter(|pr| cam.intrinsics.contains(pr.pixel));
            if let Some(pr) = visible {
                let pc = back_project(pr.pixel, pr.depth, &cam.intrinsics, cam.id).unwrap();
                let back = to_world(pc, cam).unwrap();
                prop_assert!(back.distance(&w) < 1e-9);
            }
        }
    }

    #[test]
    fn pixel_radius_scales_inversely_with_depth(r in 0.001f64..0.1, z in 0.05f64..5.0, fx in 100.0f64..1000.0) {
        let a = pixel_radius(r, z, fx).unwrap();
        let b = pixel_radius(r, 2.0 * z, fx).unwrap();
        prop_assert!((a - 2.0 * b).abs() < 1e-9 * a.max(1.0));
        prop_assert!((a - fx * r / z).abs() < 1e-12 * a.max(1.0));
    }
}

#[test]
fn frame_mismatch_is_rejected() {
    let k = Intrinsics::centered(500.0, 640, 480).unwrap();
    let wrist = CameraModel::new(CameraId::Wrist, k, RigidTransform::identity());
    let pc = back_project(PixelPoint::new(320.0, 240.0), 1.0, &k, CameraId::Head).unwrap();
    assert!(to_world(pc, &wrist).is_err());
}

#[test]
fn out_of_bounds_and_bad_depth_are_rejected() {
    let k = Intrinsics::centered(500.0, 640, 480).unwrap();
    assert!(back_project(PixelPoint::new(-1.0, 10.0), 1.0, &k, CameraId::Head).is_err());
    assert!(back_project(PixelPoint::new(10.0, 480.0), 1.0, &k, CameraId::Head).is_err());
    assert!(back_project(PixelPoint::new(10.0, 10.0), 0.0, &k, CameraId::Head).is_err());
    assert!(back_project(PixelPoint::new(10.0, 10.0), f64::NAN, &k, CameraId::Head).is_err());
}
