use std::sync::Arc;

use slotgoal_core::marker::HsvThresholds;
use slotgoal_core::pipeline::stub::{StubMode, StubServer};
use slotgoal_core::pipeline::{
    construct_goal, BackendError, GroundingBackend, Observation, OracleBackend, RemoteBackend,
    RemoteConfig, DEFAULT_SPHERE_RADIUS, PROMPT_DIRECTIVE,
};
use slotgoal_core::render::{render, RgbImage};
use slotgoal_core::scene::{generate_scene, Category, SlotId};

fn remote(url: String) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(url);
    cfg.timeout_secs = 10;
    RemoteBackend::new(cfg)
}

fn head_image() -> RgbImage {
    let scene = generate_scene(Category::Ordinal, 1, 0).unwrap();
    render(&scene, &scene.cameras.head).0
}

#[test]
fn echo_round_trips_image_unmodified() {
    let stub = StubServer::start(StubMode::Echo).unwrap();
    let img = head_image();
    assert_eq!((img.width(), img.height()), (640, 480));
    let out = remote(stub.url()).ground(&img, "put it in the largest slot").unwrap();
    assert_eq!(out, img);
    let prompt = stub.last_prompt().unwrap();
    assert!(prompt.contains(PROMPT_DIRECTIVE));
    assert!(prompt.contains("put it in the largest slot"));
}

#[test]
fn resized_reply_is_dimension_mismatch() {
    let stub = StubServer::start(StubMode::Resize { width: 512, height: 512 }).unwrap();
    let err = remote(stub.url()).ground(&head_image(), "x").unwrap_err();
    assert_eq!(
        err,
        BackendError::DimensionMismatch {
            width: 640,
            height: 480,
            got_width: 512,
            got_height: 512
        }
    );
    assert!(!err.retryable());
}

#[test]
fn dropped_connection_is_transport_error() {
    let stub = StubServer::start(StubMode::Drop).unwrap();
    let err = remote(stub.url()).ground(&head_image(), "x").unwrap_err();
    assert!(matches!(err, BackendError::TransportError(_)), "{err:?}");
    assert!(err.retryable());
}

#[test]
fn server_down_is_transport_error() {
    let stub = StubServer::start(StubMode::Echo).unwrap();
    let url = stub.url();
    stub.shutdown();
    let err = remote(url).ground(&head_image(), "x").unwrap_err();
    assert!(matches!(err, BackendError::TransportError(_)), "{err:?}");
}

#[test]
fn malformed_and_refused_replies() {
    let stub = StubServer::start(StubMode::Malformed).unwrap();
    let err = remote(stub.url()).ground(&head_image(), "x").unwrap_err();
    assert!(matches!(err, BackendError::BackendRefusal(_)), "{err:?}");

    let stub = StubServer::start(StubMode::Status(429)).unwrap();
    let err = remote(stub.url()).ground(&head_image(), "x").unwrap_err();
    assert!(matches!(err, BackendError::BackendRefusal(ref m) if m.contains("429")), "{err:?}");
}

/// Oracle edit followed by a remote round trip.
struct Chain<'a>(&'a dyn GroundingBackend, &'a dyn GroundingBackend);

impl GroundingBackend for Chain<'_> {
    fn ground(&self, img: &RgbImage, text: &str) -> Result<RgbImage, BackendError> {
        let mid = self.0.ground(img, text)?;
        self.1.ground(&mid, text)
    }
}

#[test]
fn echoing_the_oracle_image_matches_the_oracle() {
    let scene = generate_scene(Category::Size, 2, 4).unwrap();
    let (rgb, depth) = render(&scene, &scene.cameras.head);
    let obs = Observation {
        head_rgb: &rgb,
        head_depth: &depth,
        cameras: &scene.cameras,
    };
    let target = scene.slot(SlotId::new(1, 2)).unwrap().center;
    let oracle = OracleBackend::new(&scene, target, DEFAULT_SPHERE_RADIUS);
    let stub = StubServer::start(StubMode::Echo).unwrap();
    let rb = remote(stub.url());
    let th = HsvThresholds::default();
    let direct = construct_goal(&obs, "x", &oracle, DEFAULT_SPHERE_RADIUS, &th).unwrap();
    let looped = construct_goal(&obs, "x", &Chain(&oracle, &rb), DEFAULT_SPHERE_RADIUS, &th).unwrap();
    assert_eq!(direct, looped);
}

#[test]
fn offset_stub_moves_the_anchor() {
    let scene = generate_scene(Category::Ordinal, 1, 6).unwrap();
    let (rgb, depth) = render(&scene, &scene.cameras.head);
    let obs = Observation {
        head_rgb: &rgb,
        head_depth: &depth,
        cameras: &scene.cameras,
    };
    let target = scene.slot(SlotId::new(2, 2)).unwrap().center;
    let oracle = OracleBackend::new(&scene, target, DEFAULT_SPHERE_RADIUS);
    let th = HsvThresholds::default();
    let base = construct_goal(&obs, "x", &oracle, DEFAULT_SPHERE_RADIUS, &th).unwrap();
    let stub = StubServer::start(StubMode::Offset { dx: 3.0, dy: 0.0 }).unwrap();
    let rb = remote(stub.url());
    let moved = construct_goal(&obs, "x", &Chain(&oracle, &rb), DEFAULT_SPHERE_RADIUS, &th).unwrap();
    let du = moved.source_pixel.u - base.source_pixel.u;
    let dv = moved.source_pixel.v - base.source_pixel.v;
    assert!((du - 3.0).abs() < 0.5 && dv.abs() < 0.5, "({du}, {dv})");
    assert!(moved.anchor.distance(&target) > base.anchor.distance(&target));
}

#[test]
fn custom_handler_sees_prompt() {
    let handler: Arc<dyn Fn(RgbImage, &str) -> RgbImage + Send + Sync> =
        Arc::new(|img: RgbImage, prompt: &str| {
            assert!(prompt.contains("sphere marker"));
            img
        });
    let stub = StubServer::start(StubMode::Custom(handler)).unwrap();
    let img = head_image();
    assert_eq!(remote(stub.url()).ground(&img, "y").unwrap(), img);
    assert_eq!(stub.requests(), 1);
}
