//! Command implementations behind the `slotgoal` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use slotgoal_core::benchmark::{build_benchmark, load_benchmark, write_benchmark, BenchmarkConfig, BenchmarkError};
use slotgoal_core::eval::{run_suite, write_run, BackendSpec, EvalError, SuiteConfig, SuiteReport, DEFAULT_EXEC_SIGMA};
use slotgoal_core::geometry::WorldPoint;
use slotgoal_core::marker::HsvThresholds;
use slotgoal_core::pipeline::stub::{StubMode, StubServer};
use slotgoal_core::pipeline::DEFAULT_SPHERE_RADIUS;
use slotgoal_core::render::render_goal_overlays;
use slotgoal_core::scene::{Category, Scene, SceneConfig, SlotId};

pub const EXIT_HARNESS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Harness(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Harness(_) => EXIT_HARNESS,
        }
    }
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "slotgoal", version, about = "Slot-tray benchmark generation and visual-goal grounding evaluation")]
pub struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark directory.
    Gen(GenArgs),
    /// Evaluate a grounding backend on a generated benchmark.
    Eval(EvalArgs),
    /// Render head and wrist overlays for a slot or world point.
    Overlay(OverlayArgs),
    /// Serve the bundled image-editing stub over HTTP.
    ServeStub(StubArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Comma-separated categories (default: all nine).
    #[arg(long, value_delimiter = ',')]
    pub categories: Vec<Category>,
    /// Randomized scenes per category.
    #[arg(long, default_value_t = 5)]
    pub variants: u32,
    /// Instruction variants per scene.
    #[arg(long, default_value_t = 5)]
    pub instructions: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "640x480", value_parser = parse_resolution)]
    pub resolution: SceneConfig,
    #[arg(long, default_value = "benchmark")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Oracle,
    Perturbed,
    Remote,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `gen`.
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Subset of the benchmark's categories (default: all of them).
    #[arg(long, value_delimiter = ',')]
    pub categories: Vec<Category>,
    /// Trials per category.
    #[arg(long, default_value_t = 50)]
    pub trials: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BackendKind::Oracle)]
    pub backend: BackendKind,
    /// Marker noise for the perturbed backend, in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_px: f64,
    /// Executor lateral noise in meters.
    #[arg(long, default_value_t = DEFAULT_EXEC_SIGMA)]
    pub exec_sigma: f64,
    /// Marker sphere radius in meters.
    #[arg(long, default_value_t = DEFAULT_SPHERE_RADIUS)]
    pub radius: f64,
    /// Remote backend URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Remote request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Marker thresholds as HUE_LO,HUE_HI,SAT_LO,VAL_LO.
    #[arg(long, value_parser = parse_thresholds)]
    pub hsv: Option<HsvThresholds>,
    /// Parent directory for run outputs.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Run directory name (default: UTC timestamp).
    #[arg(long)]
    pub run_name: Option<String>,
    /// Keep overlays for successful trials too.
    #[arg(long)]
    pub verbose_artifacts: bool,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Scene document (scene.json).
    #[arg(long)]
    pub scene: PathBuf,
    /// Slot as ROW,COL.
    #[arg(long, conflicts_with = "anchor", required_unless_present = "anchor")]
    pub slot: Option<String>,
    /// World point as X,Y,Z.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub anchor: Option<WorldPoint>,
    #[arg(long, default_value_t = DEFAULT_SPHERE_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// echo | malformed | drop | status:CODE | resize:WxH | offset:DX,DY
    #[arg(long, default_value = "echo")]
    pub mode: String,
}

pub fn parse_resolution(s: &str) -> Result<SceneConfig, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let width: u32 = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let height: u32 = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    if width < 16 || height < 16 {
        return Err(format!("resolution {width}x{height} is too small"));
    }
    Ok(SceneConfig { width, height })
}

fn floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated numbers, got '{s}'"))
}

pub fn parse_point(s: &str) -> Result<WorldPoint, String> {
    let [x, y, z] = floats::<3>(s)?;
    Ok(WorldPoint::new(x, y, z))
}

pub fn parse_thresholds(s: &str) -> Result<HsvThresholds, String> {
    let [hue_lo, hue_hi, sat_lo, val_lo] = floats::<4>(s)?;
    let th = HsvThresholds {
        hue_lo,
        hue_hi,
        sat_lo,
        val_lo,
    };
    th.validate().map_err(|e| e.to_string())?;
    Ok(th)
}

pub fn parse_stub_mode(s: &str) -> Result<StubMode, String> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "echo" => Ok(StubMode::Echo),
        "malformed" => Ok(StubMode::Malformed),
        "drop" => Ok(StubMode::Drop),
        "status" => arg.parse().map(StubMode::Status).map_err(|_| format!("bad status '{arg}'")),
        "resize" => parse_resolution(arg).map(|r| StubMode::Resize {
            width: r.width,
            height: r.height,
        }),
        "offset" => floats::<2>(arg).map(|[dx, dy]| StubMode::Offset { dx, dy }),
        _ => Err(format!("unknown stub mode '{s}'")),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Overlay(a) => cmd_overlay(&a).map(|_| ()),
        Command::ServeStub(a) => cmd_serve_stub(&a),
    }
}

fn or_all(c: &[Category]) -> Vec<Category> {
    if c.is_empty() {
        Category::ALL.to_vec()
    } else {
        c.to_vec()
    }
}

pub fn gen_config(a: &GenArgs) -> BenchmarkConfig {
    BenchmarkConfig {
        categories: or_all(&a.categories),
        variants: a.variants,
        instructions: a.instructions,
        seed: a.seed,
        resolution: a.resolution,
    }
}

/// Generates and writes a benchmark; returns its fingerprint.
pub fn cmd_gen(a: &GenArgs) -> Result<String, CliError> {
    let cfg = gen_config(a);
    if cfg.variants == 0 || cfg.instructions == 0 {
        return Err(config("--variants and --instructions must be at least 1"));
    }
    ensure_writable(&a.out)?;
    let tasks = build_benchmark(&cfg).map_err(config)?;
    let manifest = write_benchmark(&a.out, &cfg, &tasks).map_err(|e| match e {
        BenchmarkError::Io { .. } => config(e),
        other => CliError::Harness(other.to_string()),
    })?;
    println!(
        "wrote {} tasks ({} files) to {} [fingerprint {}]",
        tasks.len(),
        manifest.files.len(),
        a.out.display(),
        manifest.fingerprint
    );
    Ok(manifest.fingerprint)
}

pub fn suite_config(a: &EvalArgs, benchmark_categories: &[Category]) -> Result<SuiteConfig, CliError> {
    let backend = match a.backend {
        BackendKind::Oracle => BackendSpec::Oracle,
        BackendKind::Perturbed => BackendSpec::Perturbed { sigma_px: a.sigma_px },
        BackendKind::Remote => BackendSpec::Remote {
            endpoint: a
                .endpoint
                .clone()
                .ok_or_else(|| config("--backend remote needs --endpoint"))?,
            timeout_secs: a.timeout,
        },
    };
    let categories = if a.categories.is_empty() {
        benchmark_categories.to_vec()
    } else {
        a.categories.clone()
    };
    if let Some(c) = categories.iter().find(|c| !benchmark_categories.contains(c)) {
        return Err(config(format!("category {c} is not in the benchmark")));
    }
    let cfg = SuiteConfig {
        categories,
        trials: a.trials,
        seed: a.seed,
        backend,
        exec_sigma: a.exec_sigma,
        radius: a.radius,
        thresholds: a.hsv.unwrap_or_default(),
        ..SuiteConfig::default()
    };
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

/// Runs an evaluation and writes its outputs; returns the run directory and
/// report.
pub fn cmd_eval(a: &EvalArgs) -> Result<(PathBuf, SuiteReport), CliError> {
    let (manifest, tasks) = load_benchmark(&a.benchmark).map_err(config)?;
    let cfg = suite_config(a, &manifest.config.categories)?;
    let name = match &a.run_name {
        Some(n) if n.is_empty() || n.contains(['/', '\\']) => {
            return Err(config(format!("invalid run name '{n}'")))
        }
        Some(n) => n.clone(),
        None => chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(),
    };
    let dir = a.out.join(name);
    ensure_writable(&dir)?;

    let run = run_suite(&tasks, &cfg, &manifest.fingerprint).map_err(|e| match e {
        EvalError::Config(m) => CliError::Config(m),
        other => CliError::Harness(other.to_string()),
    })?;
    let doc = json!({
        "benchmark": a.benchmark,
        "benchmark_fingerprint": manifest.fingerprint,
        "suite": cfg,
        "fingerprint": run.report.fingerprint,
    });
    let path = dir.join("config.json");
    fs::write(&path, format!("{doc:#}\n")).map_err(|e| CliError::Harness(format!("{}: {e}", path.display())))?;
    write_run(&dir, &run, &tasks, cfg.radius, a.verbose_artifacts).map_err(|e| CliError::Harness(e.to_string()))?;
    print!("{}", run.report.to_table());
    println!("outputs in {}", dir.display());
    Ok((dir, run.report))
}

fn overlay_target(scene: &Scene, a: &OverlayArgs) -> Result<WorldPoint, CliError> {
    if let Some(p) = a.anchor {
        return Ok(p);
    }
    let raw = a.slot.as_deref().unwrap_or_default();
    let id = SlotId::from_str(raw).map_err(config)?;
    scene
        .slot(id)
        .map(|s| s.center)
        .ok_or_else(|| config(format!("slot {id} is not in a {}x{} tray", scene.tray.rows, scene.tray.cols)))
}

/// Writes `head_overlay.png` and `wrist_overlay.png`; returns their paths.
pub fn cmd_overlay(a: &OverlayArgs) -> Result<Vec<PathBuf>, CliError> {
    let src = fs::read_to_string(&a.scene).map_err(|e| config(format!("{}: {e}", a.scene.display())))?;
    let scene = Scene::from_document(&src).map_err(|e| config(format!("{}: {e}", a.scene.display())))?;
    if !(a.radius > 0.0) {
        return Err(config(format!("--radius must be positive, got {}", a.radius)));
    }
    let anchor = overlay_target(&scene, a)?;
    ensure_writable(&a.out)?;
    let mut written = Vec::new();
    for (cam, img) in render_goal_overlays(&scene, anchor, a.radius) {
        let path = a.out.join(format!("{cam}_overlay.png"));
        img.save_png(&path, &[]).map_err(|e| CliError::Harness(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
        written.push(path);
    }
    Ok(written)
}

fn cmd_serve_stub(a: &StubArgs) -> Result<(), CliError> {
    let mode = parse_stub_mode(&a.mode).map_err(config)?;
    let server = StubServer::bind(&a.addr, mode).map_err(|e| config(format!("cannot bind {}: {e}", a.addr)))?;
    println!("stub listening on {}", server.url());
    loop {
        std::thread::park();
    }
}

/// Checks that `path` names a writable directory, creating it if needed.
pub fn ensure_writable(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| config(format!("cannot create {}: {e}", path.display())))?;
    let probe = path.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| config(format!("{} is not writable: {e}", path.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_value_flags() {
        assert_eq!(parse_resolution("320x240").unwrap(), SceneConfig { width: 320, height: 240 });
        assert!(parse_resolution("320").is_err());
        assert_eq!(parse_point("-0.1, 0.2,3").unwrap(), WorldPoint::new(-0.1, 0.2, 3.0));
        assert!(parse_point("1,2").is_err());
        assert!(parse_thresholds("200,260,0.5,0.3").is_ok());
        assert!(parse_thresholds("200,400,0.5,0.3").is_err());
    }

    #[test]
    fn parses_stub_modes() {
        assert!(matches!(parse_stub_mode("echo"), Ok(StubMode::Echo)));
        assert!(matches!(parse_stub_mode("status:503"), Ok(StubMode::Status(503))));
        assert!(matches!(
            parse_stub_mode("resize:512x512"),
            Ok(StubMode::Resize { width: 512, height: 512 })
        ));
        assert!(matches!(parse_stub_mode("offset:3,-1"), Ok(StubMode::Offset { dx, dy }) if dx == 3.0 && dy == -1.0));
        assert!(parse_stub_mode("teapot").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
