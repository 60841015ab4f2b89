//! Benchmark generation and its on-disk layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<category>/<variant>/scene.json
//!                            /instr_<k>.txt, instr_<k>.sexp
//!                            /calib.toml
//!                            /head_rgb.png, head_depth.png, wrist_rgb.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{CameraId, CameraModel, Intrinsics, RigidTransform};
use crate::instruct::{generate_instruction, parse_constraint, InstructError, Instruction, TargetMode};
use crate::render::{png_text, render, ImageError};
use crate::scene::{generate_scene_with, CameraRig, Category, Scene, SceneConfig, SceneError};
use crate::seed;

pub const MANIFEST: &str = "manifest.json";
/// PNG text key carrying the configuration fingerprint.
pub const FINGERPRINT_KEY: &str = "slotgoal-fingerprint";

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Instruct(#[from] InstructError),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("fingerprint mismatch in {path}: expected {expected}, found {found}")]
    FingerprintMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchmarkError + '_ {
    move |source| BenchmarkError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl std::fmt::Display) -> BenchmarkError {
    BenchmarkError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Everything that determines the generated benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub categories: Vec<Category>,
    pub variants: u32,
    pub instructions: u32,
    pub seed: u64,
    pub resolution: SceneConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            categories: Category::ALL.to_vec(),
            variants: 5,
            instructions: 5,
            seed: 0,
            resolution: SceneConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    pub fn scene_seed(&self, category: Category, variant: u32) -> u64 {
        seed::derive(self.seed, &format!("scene/{category}/{variant}"))
    }

    pub fn instruction_seed(&self, category: Category, variant: u32, k: u32) -> u64 {
        seed::derive(self.seed, &format!("instruction/{category}/{variant}/{k}"))
    }
}

/// SHA-256 (hex) of the compact JSON form of `value`. Struct fields
/// serialize in declaration order, so equal configs hash equally.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// One scene with its instruction variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub category: Category,
    pub variant: u32,
    pub scene: Scene,
    pub instructions: Vec<Instruction>,
}

pub fn build_task(cfg: &BenchmarkConfig, category: Category, variant: u32) -> Result<Task, BenchmarkError> {
    let scene = generate_scene_with(&cfg.resolution, category, variant, cfg.scene_seed(category, variant))?;
    let instructions = (1..=cfg.instructions)
        .map(|k| generate_instruction(&scene, category, k, cfg.instruction_seed(category, variant, k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Task {
        category,
        variant,
        scene,
        instructions,
    })
}

pub fn build_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<Task>, BenchmarkError> {
    let mut tasks = Vec::new();
    for &c in &cfg.categories {
        for v in 1..=cfg.variants {
            tasks.push(build_task(cfg, c, v)?);
        }
    }
    Ok(tasks)
}

/// Calibration document: intrinsics and world pose per camera, plus the
/// end-effector pose and hand-eye transform that produce the wrist pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibFile {
    pub fingerprint: String,
    pub head: CameraCalib,
    pub wrist: CameraCalib,
    pub ee_pose: PoseCalib,
    pub hand_eye: PoseCalib,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalib {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: PoseCalib,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseCalib {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for PoseCalib {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation();
        let tr = t.translation();
        Self {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [tr.x, tr.y, tr.z],
        }
    }
}

impl PoseCalib {
    pub fn to_transform(&self) -> Result<RigidTransform, crate::geometry::GeometryError> {
        let r = self.rotation;
        let m = nalgebra::Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(m, nalgebra::Vector3::from(self.translation))
    }
}

impl CameraCalib {
    fn from_model(m: &CameraModel) -> Self {
        let k = &m.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            pose: (&m.world_pose).into(),
        }
    }

    fn to_model(&self, id: CameraId) -> Result<CameraModel, crate::geometry::GeometryError> {
        let k = Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        Ok(CameraModel::new(id, k, self.pose.to_transform()?))
    }
}

impl CalibFile {
    pub fn from_rig(rig: &CameraRig, fingerprint: &str) -> Self {
        Self {
            fingerprint: fingerprint.to_string(),
            head: CameraCalib::from_model(&rig.head),
            wrist: CameraCalib::from_model(&rig.wrist),
            ee_pose: (&rig.ee_pose).into(),
            hand_eye: (&rig.hand_eye).into(),
        }
    }

    pub fn to_rig(&self) -> Result<CameraRig, crate::geometry::GeometryError> {
        Ok(CameraRig {
            head: self.head.to_model(CameraId::Head)?,
            wrist: self.wrist.to_model(CameraId::Wrist)?,
            ee_pose: self.ee_pose.to_transform()?,
            hand_eye: self.hand_eye.to_transform()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub config: BenchmarkConfig,
    pub files: Vec<ManifestEntry>,
}

pub fn task_dir(root: &Path, category: Category, variant: u32) -> PathBuf {
    root.join(category.as_str()).join(variant.to_string())
}

fn write(path: &Path, bytes: &[u8], files: &mut Vec<ManifestEntry>, root: &Path) -> Result<(), BenchmarkError> {
    fs::write(path, bytes).map_err(io_err(path))?;
    let rel = path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/");
    files.push(ManifestEntry {
        path: rel,
        sha256: hex::encode(Sha256::digest(bytes)),
    });
    Ok(())
}

/// Writes `tasks` under `root` and returns the manifest (also written).
pub fn write_benchmark(root: &Path, cfg: &BenchmarkConfig, tasks: &[Task]) -> Result<Manifest, BenchmarkError> {
    let fp = cfg.fingerprint();
    let text = [(FINGERPRINT_KEY, fp.as_str())];
    let mut files = Vec::new();
    fs::create_dir_all(root).map_err(io_err(root))?;
    for t in tasks {
        let dir = task_dir(root, t.category, t.variant);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write(&dir.join("scene.json"), t.scene.to_document().as_bytes(), &mut files, root)?;
        for (i, ins) in t.instructions.iter().enumerate() {
            let k = i + 1;
            write(&dir.join(format!("instr_{k}.txt")), format!("{}\n", ins.text).as_bytes(), &mut files, root)?;
            write(&dir.join(format!("instr_{k}.sexp")), format!("{}\n", ins.constraint).as_bytes(), &mut files, root)?;
        }
        let calib = toml::to_string(&CalibFile::from_rig(&t.scene.cameras, &fp)).map_err(|e| invalid(&dir, e))?;
        write(&dir.join("calib.toml"), calib.as_bytes(), &mut files, root)?;
        let (head_rgb, head_depth) = render(&t.scene, &t.scene.cameras.head);
        let (wrist_rgb, _) = render(&t.scene, &t.scene.cameras.wrist);
        let png = |p: &Path, r: Result<Vec<u8>, ImageError>| {
            r.map_err(|source| BenchmarkError::Image {
                path: p.to_path_buf(),
                source,
            })
        };
        let p = dir.join("head_rgb.png");
        write(&p, &png(&p, head_rgb.encode_png(&text))?, &mut files, root)?;
        let p = dir.join("head_depth.png");
        write(&p, &png(&p, head_depth.encode_png(&text))?, &mut files, root)?;
        let p = dir.join("wrist_rgb.png");
        write(&p, &png(&p, wrist_rgb.encode_png(&text))?, &mut files, root)?;
    }
    let manifest = Manifest {
        fingerprint: fp,
        config: cfg.clone(),
        files,
    };
    let path = root.join(MANIFEST);
    let mut doc = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    doc.push('\n');
    fs::write(&path, doc).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest, BenchmarkError> {
    let path = root.join(MANIFEST);
    let src = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&src).map_err(|e| invalid(&path, e))?;
    if m.config.fingerprint() != m.fingerprint {
        return Err(BenchmarkError::FingerprintMismatch {
            path,
            expected: m.config.fingerprint(),
            found: m.fingerprint,
        });
    }
    Ok(m)
}

fn read_line(path: &Path) -> Result<String, BenchmarkError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(s.trim_end_matches(['\n', '\r']).to_string())
}

/// Loads one task directory, checking it belongs to a benchmark with the
/// given fingerprint.
pub fn load_task(root: &Path, manifest: &Manifest, category: Category, variant: u32) -> Result<Task, BenchmarkError> {
    let dir = task_dir(root, category, variant);
    let scene_path = dir.join("scene.json");
    let src = fs::read_to_string(&scene_path).map_err(io_err(&scene_path))?;
    let scene = Scene::from_document(&src).map_err(|e| invalid(&scene_path, e))?;
    if scene.category != category || scene.variant != variant {
        return Err(invalid(&scene_path, format!("expected {category} variant {variant}")));
    }
    let calib_path = dir.join("calib.toml");
    let calib_src = fs::read_to_string(&calib_path).map_err(io_err(&calib_path))?;
    let calib: CalibFile = toml::from_str(&calib_src).map_err(|e| invalid(&calib_path, e))?;
    for (path, found) in [
        (calib_path.clone(), Some(calib.fingerprint.clone())),
        (dir.join("head_rgb.png"), png_fingerprint(&dir.join("head_rgb.png"))?),
    ] {
        if found.as_deref() != Some(manifest.fingerprint.as_str()) {
            return Err(BenchmarkError::FingerprintMismatch {
                path,
                expected: manifest.fingerprint.clone(),
                found: found.unwrap_or_default(),
            });
        }
    }
    let mut instructions = Vec::new();
    for k in 1..=manifest.config.instructions {
        let text = read_line(&dir.join(format!("instr_{k}.txt")))?;
        let sexp_path = dir.join(format!("instr_{k}.sexp"));
        let constraint = parse_constraint(&read_line(&sexp_path)?).map_err(|e| invalid(&sexp_path, e))?;
        instructions.push(Instruction {
            text,
            constraint,
            category,
            target_mode: if category.unique_target() {
                TargetMode::Unique
            } else {
                TargetMode::AnyOfSet
            },
        });
    }
    Ok(Task {
        category,
        variant,
        scene,
        instructions,
    })
}

fn png_fingerprint(path: &Path) -> Result<Option<String>, BenchmarkError> {
    let chunks = png_text(path).map_err(|source| BenchmarkError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(chunks.into_iter().find(|(k, _)| k == FINGERPRINT_KEY).map(|(_, v)| v))
}

pub fn load_benchmark(root: &Path) -> Result<(Manifest, Vec<Task>), BenchmarkError> {
    let manifest = read_manifest(root)?;
    let mut tasks = Vec::new();
    for &c in &manifest.config.categories {
        for v in 1..=manifest.config.variants {
            tasks.push(load_task(root, &manifest, c, v)?);
        }
    }
    Ok((manifest, tasks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            categories: vec![Category::Size, Category::Vague],
            variants: 2,
            instructions: 3,
            seed: 11,
            resolution: SceneConfig::default(),
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let tasks = build_benchmark(&cfg).unwrap();
        assert_eq!(tasks.len(), 4);
        let m = write_benchmark(dir.path(), &cfg, &tasks).unwrap();
        assert_eq!(m.files.len(), 4 * (1 + 2 * 3 + 1 + 3));
        let (m2, loaded) = load_benchmark(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(loaded, tasks);
    }

    #[test]
    fn calib_round_trips_the_rig() {
        let t = build_task(&small(), Category::Size, 1).unwrap();
        let c = CalibFile::from_rig(&t.scene.cameras, "fp");
        let back: CalibFile = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.to_rig().unwrap(), t.scene.cameras);
    }

    #[test]
    fn tampered_fingerprint_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        write_benchmark(dir.path(), &cfg, &build_benchmark(&cfg).unwrap()).unwrap();
        let calib = task_dir(dir.path(), Category::Size, 1).join("calib.toml");
        let src = fs::read_to_string(&calib).unwrap();
        let fp = cfg.fingerprint();
        fs::write(&calib, src.replace(&fp, "deadbeef")).unwrap();
        assert!(matches!(
            load_benchmark(dir.path()),
            Err(BenchmarkError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = small();
        let mut b = small();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
