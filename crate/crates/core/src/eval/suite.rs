use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::executor::{execute_placement, ExecutorModel, DEFAULT_EXEC_SIGMA};
use super::metrics::{coarse_accuracy, instruction_accuracy, IA_TOLERANCE};
use crate::benchmark::{fingerprint, Task, FINGERPRINT_KEY};
use crate::geometry::{RigidTransform, WorldPoint};
use crate::instruct::resolve;
use crate::marker::HsvThresholds;
use crate::pipeline::{
    goal_from_edited, GroundingBackend, Observation, OracleBackend, PerturbedBackend, PipelineError,
    RemoteBackend, RemoteConfig, DEFAULT_SPHERE_RADIUS,
};
use crate::render::{render, render_goal_overlays, DepthImage, ImageError, RgbImage};
use crate::scene::{Category, SlotId, SlotSet};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    Config(String),
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
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Which grounding backend a suite uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    /// Marks the ground-truth slot center.
    Oracle,
    /// Oracle marker moved by Gaussian pixel noise.
    Perturbed { sigma_px: f64 },
    /// HTTP image-editing service.
    Remote { endpoint: String, timeout_secs: u64 },
}

impl BackendSpec {
    pub fn label(&self) -> String {
        match self {
            BackendSpec::Oracle => "oracle".into(),
            BackendSpec::Perturbed { sigma_px } => format!("perturbed(sigma={sigma_px}px)"),
            BackendSpec::Remote { endpoint, .. } => format!("remote({endpoint})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub categories: Vec<Category>,
    /// Trials per category.
    pub trials: u32,
    pub seed: u64,
    pub backend: BackendSpec,
    pub exec_sigma: f64,
    pub radius: f64,
    pub thresholds: HsvThresholds,
    pub ia_tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            categories: Category::ALL.to_vec(),
            trials: 50,
            seed: 0,
            backend: BackendSpec::Oracle,
            exec_sigma: DEFAULT_EXEC_SIGMA,
            radius: DEFAULT_SPHERE_RADIUS,
            thresholds: HsvThresholds::default(),
            ia_tolerance: IA_TOLERANCE,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if !(self.exec_sigma >= 0.0 && self.exec_sigma.is_finite()) {
            return bad(format!("executor sigma must be >= 0, got {}", self.exec_sigma));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("sphere radius must be > 0, got {}", self.radius));
        }
        if !(self.ia_tolerance > 0.0) {
            return bad(format!("IA tolerance must be > 0, got {}", self.ia_tolerance));
        }
        if let BackendSpec::Perturbed { sigma_px } = self.backend {
            if !(sigma_px >= 0.0 && sigma_px.is_finite()) {
                return bad(format!("pixel sigma must be >= 0, got {sigma_px}"));
            }
        }
        if let BackendSpec::Remote { endpoint, .. } = &self.backend {
            if !endpoint.starts_with("http://") && !endpoint.starts_with("https://") {
                return bad(format!("endpoint must be an http(s) URL, got '{endpoint}'"));
            }
        }
        self.thresholds.validate().map_err(|e| EvalError::Config(e.to_string()))
    }
}

/// One grounded and executed placement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub category: Category,
    pub trial: u32,
    pub variant: u32,
    pub instruction_index: u32,
    pub scene_id: String,
    pub instruction: String,
    pub constraint: String,
    /// Target for unique instructions; absent for vague ones.
    pub gt_slot: Option<SlotId>,
    /// All acceptable slots.
    pub targets: Vec<SlotId>,
    pub anchor: Option<WorldPoint>,
    pub placed_pose: Option<RigidTransform>,
    pub placed_slot: Option<SlotId>,
    pub sr: bool,
    pub ia: bool,
    pub ca: bool,
    pub latency_s: f64,
    pub error_class: Option<String>,
    pub error: Option<String>,
    pub fingerprint: String,
}

/// Latency is wall-clock and so left out of equality.
impl PartialEq for TrialRecord {
    fn eq(&self, o: &Self) -> bool {
        self.category == o.category
            && self.trial == o.trial
            && self.variant == o.variant
            && self.instruction_index == o.instruction_index
            && self.scene_id == o.scene_id
            && self.instruction == o.instruction
            && self.constraint == o.constraint
            && self.gt_slot == o.gt_slot
            && self.targets == o.targets
            && self.anchor == o.anchor
            && self.placed_pose == o.placed_pose
            && self.placed_slot == o.placed_slot
            && (self.sr, self.ia, self.ca) == (o.sr, o.ia, o.ca)
            && self.error_class == o.error_class
            && self.error == o.error
            && self.fingerprint == o.fingerprint
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    /// `None` for the overall row.
    pub category: Option<Category>,
    pub trials: u32,
    pub sr_count: u32,
    pub ia_count: u32,
    pub ca_count: u32,
    pub sr: f64,
    pub ia: f64,
    pub ca: f64,
}

impl CategoryStats {
    fn from_records<'a>(category: Option<Category>, recs: impl Iterator<Item = &'a TrialRecord>) -> Self {
        let (mut n, mut sr, mut ia, mut ca) = (0u32, 0u32, 0u32, 0u32);
        for r in recs {
            n += 1;
            sr += r.sr as u32;
            ia += r.ia as u32;
            ca += r.ca as u32;
        }
        let pct = |k: u32| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
        Self {
            category,
            trials: n,
            sr_count: sr,
            ia_count: ia,
            ca_count: ca,
            sr: pct(sr),
            ia: pct(ia),
            ca: pct(ca),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub fingerprint: String,
    pub backend: String,
    pub trials: u32,
    pub categories: Vec<CategoryStats>,
    pub overall: CategoryStats,
    pub mean_latency_s: f64,
    /// Failed trials by error class.
    pub errors: BTreeMap<String, u32>,
}

impl SuiteReport {
    /// Aggregates records in the given category order.
    pub fn from_records(fingerprint: &str, backend: &str, categories: &[Category], records: &[TrialRecord]) -> Self {
        let cats = categories
            .iter()
            .map(|&c| CategoryStats::from_records(Some(c), records.iter().filter(|r| r.category == c)))
            .collect();
        let mut errors = BTreeMap::new();
        for r in records {
            if let Some(e) = &r.error_class {
                *errors.entry(e.clone()).or_insert(0) += 1;
            }
        }
        let mean_latency_s = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.latency_s).sum::<f64>() / records.len() as f64
        };
        Self {
            fingerprint: fingerprint.to_string(),
            backend: backend.to_string(),
            trials: records.len() as u32,
            categories: cats,
            overall: CategoryStats::from_records(None, records.iter()),
            mean_latency_s,
            errors,
        }
    }

    pub fn category(&self, c: Category) -> Option<&CategoryStats> {
        self.categories.iter().find(|s| s.category == Some(c))
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "backend: {}\nfingerprint: {}\ntrials: {}  mean latency: {:.4} s\n\n{:<14}{:>8}{:>8}{:>8}{:>8}\n",
            self.backend, self.fingerprint, self.trials, self.mean_latency_s, "category", "trials", "SR", "IA", "CA"
        );
        let row = |name: &str, st: &CategoryStats| {
            format!("{:<14}{:>8}{:>8.1}{:>8.1}{:>8.1}\n", name, st.trials, st.sr, st.ia, st.ca)
        };
        for st in &self.categories {
            s += &row(st.category.map_or("?", |c| c.as_str()), st);
        }
        s += &row("overall", &self.overall);
        if !self.errors.is_empty() {
            s += "\nfailed trials by error:\n";
            for (k, v) in &self.errors {
                s += &format!("  {k}: {v}\n");
            }
        }
        s
    }

    /// Method x metric rows, one column per category plus the average.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["method".to_string(), "metric".to_string()];
        header.extend(self.categories.iter().map(|c| c.category.map_or("?", |c| c.short()).to_string()));
        header.push("Avg.".into());
        out.write_record(&header)?;
        let metrics: [(&str, fn(&CategoryStats) -> f64); 3] =
            [("SR", |s| s.sr), ("IA", |s| s.ia), ("CA", |s| s.ca)];
        for (name, get) in metrics {
            let mut row = vec![self.backend.clone(), name.to_string()];
            row.extend(self.categories.iter().map(|c| format!("{:.1}", get(c))));
            row.push(format!("{:.1}", get(&self.overall)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Records (ordered by category, then trial) and their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub records: Vec<TrialRecord>,
    pub report: SuiteReport,
}

struct HeadView {
    rgb: RgbImage,
    depth: DepthImage,
}

/// Runs `cfg.trials` trials per category over `tasks`. Trial `t` of a
/// category uses scene variant `t mod V` and instruction `(t div V) mod N`.
/// Backend and pipeline failures become failed trials; only an invalid
/// configuration is an error.
pub fn run_suite(tasks: &[Task], cfg: &SuiteConfig, benchmark_fingerprint: &str) -> Result<SuiteRun, EvalError> {
    cfg.validate()?;
    let fp = fingerprint(&(benchmark_fingerprint, cfg));
    let remote = match &cfg.backend {
        BackendSpec::Remote { endpoint, timeout_secs } => {
            let mut rc = RemoteConfig::new(endpoint.clone());
            rc.timeout_secs = *timeout_secs;
            Some(RemoteBackend::new(rc))
        }
        _ => None,
    };
    let mut records = Vec::new();
    for &cat in &cfg.categories {
        let group: Vec<&Task> = tasks.iter().filter(|t| t.category == cat).collect();
        if group.is_empty() {
            return Err(EvalError::Config(format!("benchmark has no tasks for category {cat}")));
        }
        if let Some(t) = group.iter().find(|t| t.instructions.is_empty()) {
            return Err(EvalError::Config(format!("{cat}/{} has no instructions", t.variant)));
        }
        let mut views: Vec<Option<HeadView>> = (0..group.len()).map(|_| None).collect();
        for t in 0..cfg.trials {
            let vi = t as usize % group.len();
            let task = group[vi];
            let head = views[vi].get_or_insert_with(|| {
                let (rgb, depth) = render(&task.scene, &task.scene.cameras.head);
                HeadView { rgb, depth }
            });
            records.push(run_trial(cat, t, task, group.len(), head, cfg, remote.as_ref(), &fp));
        }
    }
    let report = SuiteReport::from_records(&fp, &cfg.backend.label(), &cfg.categories, &records);
    Ok(SuiteRun { records, report })
}

fn run_trial(
    cat: Category,
    t: u32,
    task: &Task,
    n_variants: usize,
    head: &HeadView,
    cfg: &SuiteConfig,
    remote: Option<&RemoteBackend>,
    fp: &str,
) -> TrialRecord {
    let scene = &task.scene;
    let k = (t as usize / n_variants) % task.instructions.len();
    let ins = &task.instructions[k];
    let mut rec = TrialRecord {
        category: cat,
        trial: t,
        variant: task.variant,
        instruction_index: k as u32 + 1,
        scene_id: format!("{}/{}", cat, task.variant),
        instruction: ins.text.clone(),
        constraint: ins.constraint.to_string(),
        gt_slot: None,
        targets: Vec::new(),
        anchor: None,
        placed_pose: None,
        placed_slot: None,
        sr: false,
        ia: false,
        ca: false,
        latency_s: 0.0,
        error_class: None,
        error: None,
        fingerprint: fp.to_string(),
    };
    let targets: SlotSet = match resolve(scene, &ins.constraint) {
        Ok(s) if !s.is_empty() => s,
        Ok(_) => {
            rec.error_class = Some("EmptyTarget".into());
            rec.error = Some("instruction resolves to no slot".into());
            return rec;
        }
        Err(e) => {
            rec.error_class = Some("Resolve".into());
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.targets = targets.iter().copied().collect();
    let gt = *targets.iter().next().expect("non-empty");
    if cat.unique_target() {
        rec.gt_slot = Some(gt);
    }
    let gt_center = scene.slot(gt).expect("resolved slot exists").center;

    let oracle = OracleBackend::new(scene, gt_center, cfg.radius);
    let perturbed;
    let backend: &dyn GroundingBackend = match (&cfg.backend, remote) {
        (BackendSpec::Remote { .. }, Some(r)) => r,
        (BackendSpec::Perturbed { sigma_px }, _) => {
            let s = seed::derive(cfg.seed, &format!("perturb/{cat}/{t}"));
            perturbed = PerturbedBackend::new(&oracle, *sigma_px, s).expect("sigma validated");
            &perturbed
        }
        _ => &oracle,
    };
    let obs = Observation {
        head_rgb: &head.rgb,
        head_depth: &head.depth,
        cameras: &scene.cameras,
    };
    let start = Instant::now();
    let edited = backend.ground(&head.rgb, &ins.text);
    rec.latency_s = start.elapsed().as_secs_f64();
    let goal = edited
        .map_err(PipelineError::from)
        .and_then(|img| goal_from_edited(&img, &obs, cfg.radius, &cfg.thresholds));
    let goal = match goal {
        Ok(g) => g,
        Err(e) => {
            log::info!("{cat} trial {t}: {} ({e})", e.class());
            rec.error_class = Some(e.class().to_string());
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let anchor = goal.anchor;
    rec.anchor = Some(anchor);
    let slots = || targets.iter().filter_map(|id| scene.slot(*id));
    rec.ia = slots().any(|s| instruction_accuracy(anchor, s.center, cfg.ia_tolerance));
    rec.ca = slots().any(|s| coarse_accuracy(anchor, scene, s));
    let exec = ExecutorModel::new(cfg.exec_sigma, seed::derive(cfg.seed, &format!("exec/{cat}/{t}")));
    let placed = execute_placement(anchor, scene, &targets, &exec);
    rec.placed_pose = Some(placed.pose);
    rec.placed_slot = placed.slot;
    rec.sr = placed.success;
    rec
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `report.json`, `report.txt`, `report.csv`, `trials.jsonl` and
/// overlay images under `artifacts/` for failed trials (all trials when
/// `verbose`).
pub fn write_run(dir: &Path, run: &SuiteRun, tasks: &[Task], radius: f64, verbose: bool) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&run.report).expect("report serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    let path = dir.join("report.txt");
    fs::write(&path, run.report.to_table()).map_err(io_err(&path))?;
    let path = dir.join("report.csv");
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    run.report.write_csv(f)?;

    let path = dir.join("trials.jsonl");
    let mut f = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    for r in &run.records {
        serde_json::to_writer(&mut f, r).expect("record serializes");
        f.write_all(b"\n").map_err(io_err(&path))?;
    }
    f.flush().map_err(io_err(&path))?;

    let art = dir.join("artifacts");
    for r in run.records.iter().filter(|r| verbose || !r.sr) {
        let Some(task) = tasks.iter().find(|t| t.category == r.category && t.variant == r.variant) else {
            continue;
        };
        fs::create_dir_all(&art).map_err(io_err(&art))?;
        let images = match r.anchor {
            Some(a) => render_goal_overlays(&task.scene, a, radius),
            None => task
                .scene
                .cameras
                .all()
                .into_iter()
                .map(|c| (c.id, render(&task.scene, c).0))
                .collect(),
        };
        for (cam, img) in images {
            let p = art.join(format!("{}_{:04}_{}.png", r.category, r.trial, cam));
            img.save_png(&p, &[(FINGERPRINT_KEY, &r.fingerprint)])
                .map_err(|source| EvalError::Image { path: p.clone(), source })?;
        }
    }
    Ok(())
}
