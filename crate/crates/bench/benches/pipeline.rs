use criterion::{black_box, criterion_group, criterion_main, Criterion};

use slotgoal_core::instruct::{generate_instruction, parse_constraint, resolve};
use slotgoal_core::marker::{detect_marker, HsvThresholds};
use slotgoal_core::pipeline::{construct_goal, Observation, OracleBackend, DEFAULT_SPHERE_RADIUS};
use slotgoal_core::render::render;
use slotgoal_core::scene::{generate_scene, Category, SlotId};

fn bench_render(c: &mut Criterion) {
    let scene = generate_scene(Category::Ordinal, 1, 0).unwrap();
    c.bench_function("render_head_640x480", |b| b.iter(|| render(black_box(&scene), &scene.cameras.head)));
    c.bench_function("generate_scene", |b| b.iter(|| generate_scene(Category::Distance, 3, black_box(7)).unwrap()));
}

fn bench_detect(c: &mut Criterion) {
    let scene = generate_scene(Category::Size, 2, 0).unwrap();
    let (rgb, _) = render(&scene, &scene.cameras.head);
    let target = scene.slot(SlotId::new(2, 2)).unwrap().center;
    let marked = slotgoal_core::GroundingBackend::ground(
        &OracleBackend::new(&scene, target, DEFAULT_SPHERE_RADIUS),
        &rgb,
        "",
    )
    .unwrap();
    let th = HsvThresholds::default();
    c.bench_function("detect_marker", |b| b.iter(|| detect_marker(black_box(&marked), &th).unwrap()));
}

fn bench_resolve(c: &mut Criterion) {
    let scene = generate_scene(Category::Compositional, 1, 0).unwrap();
    let ins = generate_instruction(&scene, Category::Compositional, 1, 0).unwrap();
    let text = ins.constraint.to_string();
    c.bench_function("parse_constraint", |b| b.iter(|| parse_constraint(black_box(&text)).unwrap()));
    c.bench_function("resolve", |b| b.iter(|| resolve(&scene, black_box(&ins.constraint)).unwrap()));
}

fn bench_goal(c: &mut Criterion) {
    let scene = generate_scene(Category::Ordinal, 1, 0).unwrap();
    let (rgb, depth) = render(&scene, &scene.cameras.head);
    let obs = Observation {
        head_rgb: &rgb,
        head_depth: &depth,
        cameras: &scene.cameras,
    };
    let oracle = OracleBackend::new(&scene, scene.slot(SlotId::new(1, 3)).unwrap().center, DEFAULT_SPHERE_RADIUS);
    let th = HsvThresholds::default();
    c.bench_function("construct_goal_oracle", |b| {
        b.iter(|| construct_goal(&obs, "x", &oracle, DEFAULT_SPHERE_RADIUS, &th).unwrap())
    });
}

criterion_group!(benches, bench_render, bench_detect, bench_resolve, bench_goal);
criterion_main!(benches);
