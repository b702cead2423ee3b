//! Config-driven experiment orchestration: parses and validates TOML
//! experiment descriptions, runs the requested pipeline (teacher, students,
//! comparison, diagnostics, or PCFG generation), and emits a result bundle
//! whose manifest lists every artifact with its SHA-256 content hash.
//!
//! Identical configs on the same build produce byte-identical artifacts: no
//! wall-clock values or absolute paths enter any emitted file, and every
//! random stream is derived from the single config seed.

use crate::diagnostics::{
    correlation_report_exact, correlation_report_sampled, gradient_decomposition_exact,
    weight_gap_report,
};
use crate::distill::{
    teacher_eta1, train_student_curriculum, train_student_oneshot, train_teacher, EvalSet,
    Stage1Mode, Stage2Scope, StudentConfig, SymmetricProjection, TeacherConfig, TrainedModel,
    MAX_EXACT_DIM,
};
use crate::error::{Error, Result};
use crate::mlp::TwoLayerMlp;
use crate::parity_data::ParityTask;
use crate::pcfg::{
    cfg3b, length_percentiles, write_corpus, write_corpus_meta, write_masked_dataset,
};
use crate::rng::derive_rng;
use crate::util::rms;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

/// Which pipeline a config requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Two-stage teacher training plus its weight-gap report.
    Teacher,
    /// Teacher, then the projected-curriculum student.
    Curriculum,
    /// Teacher, then the output-matching baseline student.
    Oneshot,
    /// Teacher, then both students on equal sample budgets, plus a merged
    /// accuracy-versus-samples table.
    Compare,
    /// Teacher stage-1 structure diagnostics: weight gaps, projected
    /// correlations with histograms, and the gradient decomposition.
    Diagnostics,
    /// Grammar sampling: corpus, length percentiles, masked dataset.
    Pcfg,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Teacher => "teacher",
            Self::Curriculum => "curriculum",
            Self::Oneshot => "oneshot",
            Self::Compare => "compare",
            Self::Diagnostics => "diagnostics",
            Self::Pcfg => "pcfg",
        }
    }
}

/// Parity-task description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub d: u32,
    pub k: u32,
    /// Explicit support coordinates; defaults to the leading `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<u32>>,
}

impl TaskSection {
    pub fn build(&self) -> Result<ParityTask> {
        match &self.support {
            Some(s) => ParityTask::new(self.d, self.k, s),
            None => ParityTask::leading(self.d, self.k),
        }
    }
}

fn default_eval_samples() -> usize {
    4096
}

/// Held-out evaluation settings shared by every trained model in a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluation-set size (ignored when `exact`).
    #[serde(default = "default_eval_samples")]
    pub samples: usize,
    /// Evaluate on the full cube instead (needs `d <=` the enumeration cap).
    #[serde(default)]
    pub exact: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { samples: default_eval_samples(), exact: false }
    }
}

fn default_mask_fraction() -> f64 {
    0.30
}

/// Grammar-pipeline settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcfgSection {
    /// Corpus size in sentences (also the percentile sample count).
    pub n: usize,
    #[serde(default = "default_mask_fraction")]
    pub mask_fraction: f64,
    /// Sentences in the masked dataset; defaults to `min(n, 10_000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked_sentences: Option<usize>,
}

fn default_projection_rows() -> usize {
    200
}
fn default_bins() -> usize {
    41
}
fn default_correlation_samples() -> u64 {
    1 << 15
}
fn default_true() -> bool {
    true
}

/// Diagnostics-pipeline settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Projection coordinates for the correlation report.
    #[serde(default = "default_projection_rows")]
    pub projection_rows: usize,
    /// Histogram bins for the correlation CSVs.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Monte-Carlo points when `d` exceeds the enumeration cap.
    #[serde(default = "default_correlation_samples")]
    pub correlation_samples: u64,
    /// Also emit the student-gradient decomposition (exact mode only,
    /// requires a `[student]` section for the width).
    #[serde(default = "default_true")]
    pub decomposition: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            projection_rows: default_projection_rows(),
            bins: default_bins(),
            correlation_samples: default_correlation_samples(),
            decomposition: true,
        }
    }
}

/// A full experiment description. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Bundle directory name; `[A-Za-z0-9._-]`, not starting with a dot.
    pub run_id: String,
    /// Root seed for every random stream in the run.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<TeacherConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student: Option<StudentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcfg: Option<PcfgSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    /// Hold hyperparameters to the analytical prescriptions: overriding a
    /// stage-1 step size is flagged and decoupling the decay relation
    /// `lambda_1 = 1/(2 eta_1)` is an error. Setting this to `false` switches
    /// to exploration mode, where tuned overrides pass silently and the
    /// decay decoupling is downgraded to a warning.
    #[serde(default = "default_true")]
    pub paper_faithful: bool,
    /// Also write model checkpoints and list them in the manifest.
    #[serde(default)]
    pub save_checkpoints: bool,
}

impl ExperimentConfig {
    /// Parse a TOML document; serde errors carry the offending field path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

/// One validation finding, tied to the config field that triggered it.
#[derive(Debug, Clone)]
pub struct Finding {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} [{}]: {}", self.field, self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

/// Heuristic stage-1 batch floor below which the in/out gradient gap is not
/// expected to survive sampling noise: `(2k)^2 ln(10 m d)`.
fn b1_floor(d: u32, k: u32, m: usize) -> f64 {
    let g = 2.0 * k as f64;
    g * g * (10.0 * m as f64 * d as f64).ln()
}

/// Check a config against the schema's semantic rules and the default
/// hyperparameter relations (stage-1 step-size formulas, the decay coupling
/// `lambda_1 = 1/(2 eta_1)`, stage-1 batch floors). Overridden defaults
/// produce warnings; contradictions and capacity violations produce errors.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Finding> {
    let mut out = Vec::new();
    let err = |field: &str, message: String| Finding {
        severity: Severity::Error,
        field: field.to_string(),
        message,
    };
    let warn = |field: &str, message: String| Finding {
        severity: Severity::Warning,
        field: field.to_string(),
        message,
    };

    if cfg.run_id.is_empty()
        || cfg.run_id.starts_with('.')
        || !cfg.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
    {
        out.push(err(
            "run_id",
            format!("{:?} must be non-empty, use [A-Za-z0-9._-], and not start with '.'", cfg.run_id),
        ));
    }

    let kind = cfg.kind;
    let needs_task = kind != ExperimentKind::Pcfg;
    let needs_student = matches!(
        kind,
        ExperimentKind::Curriculum | ExperimentKind::Oneshot | ExperimentKind::Compare
    );

    // section presence
    if needs_task && cfg.task.is_none() {
        out.push(err("task", format!("kind = {:?} needs a [task] section", kind.as_str())));
    }
    if needs_task && cfg.teacher.is_none() {
        out.push(err("teacher", format!("kind = {:?} needs a [teacher] section", kind.as_str())));
    }
    if needs_student && cfg.student.is_none() {
        out.push(err("student", format!("kind = {:?} needs a [student] section", kind.as_str())));
    }
    if kind == ExperimentKind::Pcfg && cfg.pcfg.is_none() {
        out.push(err("pcfg", "kind = \"pcfg\" needs a [pcfg] section".into()));
    }
    // unused sections are suspicious but harmless
    if kind == ExperimentKind::Pcfg {
        for (name, present) in [
            ("task", cfg.task.is_some()),
            ("eval", cfg.eval.is_some()),
            ("teacher", cfg.teacher.is_some()),
            ("student", cfg.student.is_some()),
            ("diagnostics", cfg.diagnostics.is_some()),
        ] {
            if present {
                out.push(warn(name, "section is ignored by the pcfg pipeline".into()));
            }
        }
    } else {
        if cfg.pcfg.is_some() {
            out.push(warn("pcfg", "section is ignored by this experiment kind".into()));
        }
        if cfg.diagnostics.is_some() && kind != ExperimentKind::Diagnostics {
            out.push(warn("diagnostics", "section is ignored by this experiment kind".into()));
        }
        if cfg.student.is_some()
            && !needs_student
            && kind != ExperimentKind::Diagnostics
        {
            out.push(warn("student", "section is ignored by this experiment kind".into()));
        }
    }

    // task geometry
    let task = cfg.task.as_ref().and_then(|t| match t.build() {
        Ok(task) => Some(task),
        Err(e) => {
            out.push(err("task", e.to_string()));
            None
        }
    });
    let dims = task.as_ref().map(|t| (t.d(), t.k()));

    let mut exact_requested: Vec<&'static str> = Vec::new();
    if let Some(eval) = &cfg.eval {
        if eval.samples == 0 && !eval.exact {
            out.push(err("eval.samples", "evaluation set cannot be empty".into()));
        }
        if eval.exact {
            exact_requested.push("eval.exact");
        }
    }

    if let Some(tc) = &cfg.teacher {
        if tc.m == 0 || tc.m % 2 != 0 {
            out.push(err("teacher.m", format!("width {} must be even and positive", tc.m)));
        }
        if tc.stage1 == Stage1Mode::Exact {
            exact_requested.push("teacher.stage1");
        }
        if tc.exact_stage2 {
            exact_requested.push("teacher.exact_stage2");
        }
        if let Some((d, k)) = dims {
            let default_eta1 = teacher_eta1(d, k, tc.m).ok();
            if let Some(e) = tc.eta1 {
                if !(e.is_finite() && e > 0.0) {
                    out.push(err("teacher.eta1", format!("{e} is not a positive step size")));
                } else if cfg.paper_faithful {
                    out.push(warn(
                        "teacher.eta1",
                        match default_eta1 {
                            Some(v) => format!("overrides the default m/(k|zeta_(k-1)|) = {v}"),
                            None => "no default exists here (vanishing majority coefficient)".into(),
                        },
                    ));
                }
            } else if default_eta1.is_none() {
                out.push(err(
                    "teacher.eta1",
                    format!(
                        "the default step size m/(k|zeta_(k-1)|) is undefined at d = {d}, k = {k} \
                         (the majority coefficient vanishes); set eta1 explicitly"
                    ),
                ));
            }
            if let Some(l) = tc.lambda1 {
                match tc.eta1.or(default_eta1) {
                    Some(e) if (l * 2.0 * e - 1.0).abs() > 1e-9 => {
                        let message = format!(
                            "{l} breaks the decay coupling lambda_1 = 1/(2 eta_1) = {}",
                            1.0 / (2.0 * e)
                        );
                        out.push(if cfg.paper_faithful {
                            err("teacher.lambda1", message)
                        } else {
                            warn("teacher.lambda1", message)
                        });
                    }
                    _ => {}
                }
            }
            if tc.stage1 == Stage1Mode::Sampled {
                let floor = b1_floor(d, k, tc.m);
                if (tc.b1 as f64) < floor {
                    out.push(warn(
                        "teacher.b1",
                        format!(
                            "{} is below the concentration floor (2k)^2 ln(10 m d) = {:.0}; \
                             the stage-1 gap may drown in sampling noise",
                            tc.b1, floor
                        ),
                    ));
                }
            }
        }
        if tc.t2 > 0 && tc.eval_stride == 0 {
            out.push(err("teacher.eval_stride", "must be at least 1".into()));
        }
    }

    if let Some(sc) = &cfg.student {
        if sc.m == 0 || sc.m % 2 != 0 {
            out.push(err("student.m", format!("width {} must be even and positive", sc.m)));
        }
        if sc.stage1 == Stage1Mode::Population {
            out.push(err(
                "student.stage1",
                "population mode is teacher-only (students have no closed-form stage-1 gradient)"
                    .into(),
            ));
        }
        if sc.stage1 == Stage1Mode::Exact {
            exact_requested.push("student.stage1");
        }
        if sc.exact_stage2 {
            exact_requested.push("student.exact_stage2");
        }
        if needs_student {
            if let (Some((d, k)), Some(tc)) = (dims, cfg.teacher.as_ref()) {
                // resolved stage-1 step per arm: sqrt(m_teacher) for the
                // curriculum, the teacher formula at the student width for
                // the output-matching baseline
                let mut defaults: Vec<(&str, Option<f64>)> = Vec::new();
                if matches!(kind, ExperimentKind::Curriculum | ExperimentKind::Compare) {
                    defaults.push(("curriculum", Some((tc.m as f64).sqrt())));
                }
                if matches!(kind, ExperimentKind::Oneshot | ExperimentKind::Compare) {
                    defaults.push(("oneshot", teacher_eta1(d, k, sc.m).ok()));
                }
                if let Some(e) = sc.eta1 {
                    if !(e.is_finite() && e > 0.0) {
                        out.push(err("student.eta1", format!("{e} is not a positive step size")));
                    } else if cfg.paper_faithful {
                        out.push(warn("student.eta1", "overrides the default stage-1 step size".into()));
                    }
                } else if defaults.iter().any(|(_, v)| v.is_none()) {
                    out.push(err(
                        "student.eta1",
                        "the output-matching default step size is undefined here (vanishing \
                         majority coefficient); set eta1 explicitly"
                            .into(),
                    ));
                }
                if let Some(l) = sc.lambda1 {
                    let etas: Vec<f64> = match sc.eta1 {
                        Some(e) => vec![e],
                        None => defaults.iter().filter_map(|&(_, v)| v).collect(),
                    };
                    for e in etas {
                        if (l * 2.0 * e - 1.0).abs() > 1e-9 {
                            let message = format!(
                                "{l} breaks the decay coupling lambda_1 = 1/(2 eta_1) for the \
                                 resolved step size {e}"
                            );
                            out.push(if cfg.paper_faithful {
                                err("student.lambda1", message)
                            } else {
                                warn("student.lambda1", message)
                            });
                        }
                    }
                }
                if sc.stage1 == Stage1Mode::Sampled {
                    let floor = b1_floor(d, k, sc.m);
                    if (sc.b1 as f64) < floor {
                        out.push(warn(
                            "student.b1",
                            format!(
                                "{} is below the concentration floor (2k)^2 ln(10 m d) = {:.0}",
                                sc.b1, floor
                            ),
                        ));
                    }
                }
            }
            if sc.stage2_scope == Stage2Scope::Full && cfg.paper_faithful {
                out.push(warn(
                    "student.stage2_scope",
                    "full-network stage 2 follows the generic-schedule reading; the \
                     two-stage reading updates outer weights only"
                        .into(),
                ));
            }
            if sc.t2 > 0 && sc.eval_stride == 0 {
                out.push(err("student.eval_stride", "must be at least 1".into()));
            }
        }
    }

    if let (Some((d, _)), false) = (dims, exact_requested.is_empty()) {
        if d > MAX_EXACT_DIM {
            for field in exact_requested {
                out.push(err(
                    field,
                    format!("exact enumeration needs d <= {MAX_EXACT_DIM}, got d = {d}"),
                ));
            }
        }
    }

    if kind == ExperimentKind::Diagnostics {
        let diag = cfg.diagnostics.clone().unwrap_or_default();
        if diag.projection_rows == 0 || diag.projection_rows % 2 != 0 {
            out.push(err(
                "diagnostics.projection_rows",
                format!("{} must be even and positive", diag.projection_rows),
            ));
        }
        if diag.bins == 0 {
            out.push(err("diagnostics.bins", "at least one histogram bin is required".into()));
        }
        if let Some((d, _)) = dims {
            if d > MAX_EXACT_DIM && diag.correlation_samples == 0 {
                out.push(err(
                    "diagnostics.correlation_samples",
                    "sampled correlation needs a positive sample count".into(),
                ));
            }
            if diag.decomposition && d > MAX_EXACT_DIM {
                out.push(warn(
                    "diagnostics.decomposition",
                    format!("skipped: the exact identity needs d <= {MAX_EXACT_DIM}"),
                ));
            }
        }
        if diag.decomposition && cfg.student.is_none() {
            out.push(warn(
                "diagnostics.decomposition",
                "skipped: needs a [student] section for the student width".into(),
            ));
        }
    }

    if let Some(p) = &cfg.pcfg {
        if kind == ExperimentKind::Pcfg {
            if p.n < 100 {
                out.push(err(
                    "pcfg.n",
                    format!("{} sentences cannot support the percentile report (minimum 100)", p.n),
                ));
            }
            if !(p.mask_fraction > 0.0 && p.mask_fraction < 1.0) {
                out.push(err(
                    "pcfg.mask_fraction",
                    format!("{} must lie strictly between 0 and 1", p.mask_fraction),
                ));
            }
            if p.masked_sentences == Some(0) {
                out.push(err("pcfg.masked_sentences", "must be positive when set".into()));
            }
        }
    }

    out
}

// ---------------------------------------------------------------------------
// Result bundles
// ---------------------------------------------------------------------------

/// One artifact in a bundle manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// The bundle manifest: environment fingerprint plus hashed artifact list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Numeric precision of every tolerance-sensitive computation.
    pub precision: String,
    pub run_id: String,
    pub kind: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

/// A completed run: where it lives, what it contains, and its report body.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// The parsed content of `report.json`.
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

struct BundleWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl BundleWriter {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn add(&mut self, name: &str, content: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), content)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: content.len() as u64,
            sha256: sha256_hex(content),
        });
        Ok(())
    }

    /// Hash a file written directly to disk (checkpoints).
    fn add_existing(&mut self, name: &str) -> Result<()> {
        let content = fs::read(self.dir.join(name))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: content.len() as u64,
            sha256: sha256_hex(&content),
        });
        Ok(())
    }

    fn finish(mut self, cfg: &ExperimentConfig) -> Result<(PathBuf, Manifest)> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            tool: "distill-lab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            precision: "f64".into(),
            run_id: cfg.run_id.clone(),
            kind: cfg.kind.as_str().into(),
            seed: cfg.seed,
            files: self.files,
        };
        let mut body = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Parse(e.to_string()))?;
        body.push(b'\n');
        fs::write(self.dir.join("manifest.json"), body)?;
        Ok((self.dir, manifest))
    }
}

/// Re-hash every file listed in a bundle's manifest. Returns `(name, ok)`
/// per entry; missing files count as failures.
pub fn verify_bundle(dir: &Path) -> Result<(Manifest, Vec<(String, bool)>)> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut checks = Vec::with_capacity(manifest.files.len());
    for entry in &manifest.files {
        let ok = match fs::read(dir.join(&entry.name)) {
            Ok(content) => {
                content.len() as u64 == entry.bytes && sha256_hex(&content) == entry.sha256
            }
            Err(_) => false,
        };
        checks.push((entry.name.clone(), ok));
    }
    Ok((manifest, checks))
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn csv_bytes(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w)?;
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `run_id,method,stage,step,samples_consumed,eval_loss,eval_accuracy`.
fn trace_csv(run_id: &str, method: &str, model: &TrainedModel) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record([
            "run_id",
            "method",
            "stage",
            "step",
            "samples_consumed",
            "eval_loss",
            "eval_accuracy",
        ])
        .map_err(csv_err)?;
        for r in &model.trace.records {
            w.write_record([
                run_id.to_string(),
                method.to_string(),
                r.stage.to_string(),
                r.step.to_string(),
                r.samples_consumed.to_string(),
                r.eval_loss.to_string(),
                r.eval_accuracy.to_string(),
            ])
            .map_err(csv_err)?;
        }
        Ok(())
    })
}

/// Merged accuracy-versus-samples table for the two comparison arms. The
/// arms share one schedule shape, so their evaluation grids must agree.
fn compare_csv(curriculum: &TrainedModel, oneshot: &TrainedModel) -> Result<Vec<u8>> {
    if curriculum.trace.records.len() != oneshot.trace.records.len() {
        return Err(Error::Shape("comparison arms have different evaluation grids".into()));
    }
    csv_bytes(|w| {
        w.write_record(["samples_consumed", "curriculum_accuracy", "oneshot_accuracy"])
            .map_err(csv_err)?;
        for (c, o) in curriculum.trace.records.iter().zip(&oneshot.trace.records) {
            if (c.stage, c.step, c.samples_consumed) != (o.stage, o.step, o.samples_consumed) {
                return Err(Error::Shape(
                    "comparison arms have different evaluation grids".into(),
                ));
            }
            w.write_record([
                c.samples_consumed.to_string(),
                c.eval_accuracy.to_string(),
                o.eval_accuracy.to_string(),
            ])
            .map_err(csv_err)?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Pipeline execution
// ---------------------------------------------------------------------------

fn method_summary(model: &TrainedModel) -> serde_json::Value {
    json!({
        "final_eval_loss": model.final_eval_loss,
        "final_eval_accuracy": model.final_eval_accuracy,
        "best_eval_loss": model.best_eval_loss,
        "best_eval_accuracy": model.best_eval_accuracy,
        "samples_total": model.trace.samples_total,
        "eval_points": model.trace.records.len(),
    })
}

fn build_eval(cfg: &ExperimentConfig, task: &ParityTask) -> Result<EvalSet> {
    let eval = cfg.eval.clone().unwrap_or_default();
    if eval.exact {
        EvalSet::exact(task)
    } else {
        EvalSet::sampled(task, eval.samples, cfg.seed)
    }
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    writer: BundleWriter,
    report: serde_json::Map<String, serde_json::Value>,
}

impl RunContext<'_> {
    fn add_trace(&mut self, method: &str, model: &TrainedModel) -> Result<()> {
        let bytes = trace_csv(&self.cfg.run_id, method, model)?;
        self.writer.add(&format!("{method}_trace.csv"), &bytes)?;
        self.report.insert(method.to_string(), method_summary(model));
        Ok(())
    }

    /// Post-stage-1 weight structure of a trained model: how well its rows
    /// separate the support, summarized next to the trace.
    fn add_structure(
        &mut self,
        method: &str,
        model: &TrainedModel,
        task: &ParityTask,
    ) -> Result<()> {
        let gap = weight_gap_report(&model.post_stage1, task)?;
        self.report.insert(format!("{method}_stage1_structure"), weight_gap_json(&gap));
        Ok(())
    }

    fn maybe_checkpoint(&mut self, name: &str, net: &TwoLayerMlp) -> Result<()> {
        if self.cfg.save_checkpoints {
            net.save_checkpoint(&self.writer.dir.join(name))?;
            self.writer.add_existing(name)?;
        }
        Ok(())
    }
}

fn teacher_section(cfg: &ExperimentConfig) -> Result<&TeacherConfig> {
    cfg.teacher.as_ref().ok_or_else(|| Error::Config("missing [teacher] section".into()))
}

fn student_section(cfg: &ExperimentConfig) -> Result<&StudentConfig> {
    cfg.student.as_ref().ok_or_else(|| Error::Config("missing [student] section".into()))
}

fn run_training(ctx: &mut RunContext<'_>, task: &ParityTask) -> Result<()> {
    let cfg = ctx.cfg;
    let eval = build_eval(cfg, task)?;
    let teacher = train_teacher(task, teacher_section(cfg)?, &eval, cfg.seed)?;
    ctx.add_trace("teacher", &teacher)?;
    ctx.maybe_checkpoint("teacher_final.ckpt", &teacher.net)?;
    ctx.maybe_checkpoint("teacher_post_stage1.ckpt", &teacher.post_stage1)?;

    match cfg.kind {
        ExperimentKind::Teacher => {
            let gap = weight_gap_report(&teacher.post_stage1, task)?;
            let mut buf = Vec::new();
            gap.write_csv(&mut buf)?;
            ctx.writer.add("teacher_weight_gap.csv", &buf)?;
            ctx.report.insert("weight_gap".into(), weight_gap_json(&gap));
        }
        ExperimentKind::Curriculum => {
            let run = train_student_curriculum(task, &teacher.net, student_section(cfg)?, &eval, cfg.seed)?;
            ctx.add_trace("curriculum", &run.model)?;
            ctx.add_structure("curriculum", &run.model, task)?;
            ctx.maybe_checkpoint("curriculum_final.ckpt", &run.model.net)?;
            ctx.maybe_checkpoint("curriculum_post_stage1.ckpt", &run.model.post_stage1)?;
        }
        ExperimentKind::Oneshot => {
            let run = train_student_oneshot(task, &teacher.net, student_section(cfg)?, &eval, cfg.seed)?;
            ctx.add_trace("oneshot", &run.model)?;
            ctx.add_structure("oneshot", &run.model, task)?;
            ctx.maybe_checkpoint("oneshot_final.ckpt", &run.model.net)?;
            ctx.maybe_checkpoint("oneshot_post_stage1.ckpt", &run.model.post_stage1)?;
        }
        ExperimentKind::Compare => {
            let sc = student_section(cfg)?;
            // one [student] section drives both arms, so the sample budgets
            // agree by construction; the assertion keeps that contract hard
            let cur = train_student_curriculum(task, &teacher.net, sc, &eval, cfg.seed)?;
            let one = train_student_oneshot(task, &teacher.net, sc, &eval, cfg.seed)?;
            if cur.model.trace.samples_total != one.model.trace.samples_total {
                return Err(Error::Shape(format!(
                    "arm budgets diverged: curriculum {} vs oneshot {}",
                    cur.model.trace.samples_total, one.model.trace.samples_total
                )));
            }
            ctx.add_trace("curriculum", &cur.model)?;
            ctx.add_trace("oneshot", &one.model)?;
            ctx.add_structure("curriculum", &cur.model, task)?;
            ctx.add_structure("oneshot", &one.model, task)?;
            ctx.maybe_checkpoint("curriculum_final.ckpt", &cur.model.net)?;
            ctx.maybe_checkpoint("curriculum_post_stage1.ckpt", &cur.model.post_stage1)?;
            ctx.maybe_checkpoint("oneshot_final.ckpt", &one.model.net)?;
            ctx.maybe_checkpoint("oneshot_post_stage1.ckpt", &one.model.post_stage1)?;
            let bytes = compare_csv(&cur.model, &one.model)?;
            ctx.writer.add("compare.csv", &bytes)?;
            ctx.report.insert(
                "comparison".into(),
                json!({
                    "samples_per_arm": cur.model.trace.samples_total,
                    "accuracy_gap": cur.model.final_eval_accuracy - one.model.final_eval_accuracy,
                }),
            );
        }
        ExperimentKind::Diagnostics => run_diagnostics(ctx, task, &teacher)?,
        ExperimentKind::Pcfg => unreachable!("dispatched before run_training"),
    }
    Ok(())
}

fn weight_gap_json(gap: &crate::diagnostics::WeightGapReport) -> serde_json::Value {
    json!({
        "min_in": gap.min_in,
        "mean_in": gap.mean_in,
        "max_out": gap.max_out,
        "mean_out": gap.mean_out,
        "gap_ratio": gap.gap_ratio,
        "predicted_in": gap.predicted_in,
        "predicted_out": gap.predicted_out,
        "support_recovery": gap.support_recovery,
    })
}

fn run_diagnostics(
    ctx: &mut RunContext<'_>,
    task: &ParityTask,
    teacher: &TrainedModel,
) -> Result<()> {
    let cfg = ctx.cfg;
    let diag = cfg.diagnostics.clone().unwrap_or_default();
    let net = &teacher.post_stage1;
    let d = task.d();

    let gap = weight_gap_report(net, task)?;
    let mut buf = Vec::new();
    gap.write_csv(&mut buf)?;
    ctx.writer.add("teacher_weight_gap.csv", &buf)?;
    ctx.report.insert("weight_gap".into(), weight_gap_json(&gap));

    let projection = SymmetricProjection::sample(
        diag.projection_rows,
        net.m(),
        &mut derive_rng(cfg.seed, "projection", 0),
    )?;
    let (corr, mode) = if d <= MAX_EXACT_DIM {
        (correlation_report_exact(net, &projection, task)?, json!("exact"))
    } else {
        let mut rng = derive_rng(cfg.seed, "diag-correlation", 0);
        (
            correlation_report_sampled(net, &projection, task, diag.correlation_samples, &mut rng)?,
            json!({"sampled": diag.correlation_samples}),
        )
    };
    let mut buf = Vec::new();
    corr.histogram_s(diag.bins).write_csv(&mut buf)?;
    ctx.writer.add("correlation_s_histogram.csv", &buf)?;
    let mut buf = Vec::new();
    corr.histogram_c(diag.bins).write_csv(&mut buf)?;
    ctx.writer.add("correlation_c_histogram.csv", &buf)?;
    ctx.report.insert(
        "correlation".into(),
        json!({
            "mode": mode,
            "pairs": corr.pairs,
            "rows": corr.rows,
            "rms_s_in": corr.rms_s_in,
            "rms_s_out": corr.rms_s_out,
            "dispersion_ratio": corr.rms_s_in / corr.rms_s_out,
            "sigma_in": corr.sigma_in,
            "sigma_out": corr.sigma_out,
            "std_c_in": corr.std_c_in,
            "std_c_out": corr.std_c_out,
            "max_abs_c_in": corr.max_abs_c_in,
            "max_abs_c_out": corr.max_abs_c_out,
        }),
    );

    if diag.decomposition && d <= MAX_EXACT_DIM {
        if let Some(sc) = &cfg.student {
            let student = TwoLayerMlp::symmetric_init(
                d,
                task.k(),
                sc.m,
                &mut derive_rng(cfg.seed, "student-init", 0),
            )?;
            let sproj = SymmetricProjection::sample(
                sc.m,
                net.m(),
                &mut derive_rng(cfg.seed, "projection", 0),
            )?;
            let decomp = gradient_decomposition_exact(&student, net, &sproj, task)?;
            ctx.report.insert(
                "decomposition".into(),
                json!({
                    "max_residual": decomp.max_residual,
                    "rms_total": rms(&decomp.total),
                    "rms_linear_term": rms(&decomp.linear_term),
                    "rms_majority_term": rms(&decomp.majority_term),
                }),
            );
        }
    }
    Ok(())
}

fn run_pcfg(ctx: &mut RunContext<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let section = cfg.pcfg.as_ref().ok_or_else(|| Error::Config("missing [pcfg] section".into()))?;
    let grammar = cfg3b();

    let mut corpus = Vec::new();
    let stats = write_corpus(&grammar, section.n, cfg.seed, 0, &mut corpus)?;
    ctx.writer.add("corpus.txt", &corpus)?;
    drop(corpus);
    let mut meta = Vec::new();
    write_corpus_meta(&grammar, cfg.seed, 0, &stats, &mut meta)?;
    ctx.writer.add("corpus.meta.toml", &meta)?;

    let mut rng = derive_rng(cfg.seed, "pcfg-stats", 0);
    let p = length_percentiles(&grammar, section.n, &mut rng)?;

    let masked_n = section.masked_sentences.unwrap_or_else(|| section.n.min(10_000));
    let mut masked = Vec::new();
    let mstats =
        write_masked_dataset(&grammar, masked_n, section.mask_fraction, cfg.seed, 0, &mut masked)?;
    ctx.writer.add("masked.tsv", &masked)?;
    drop(masked);

    ctx.report.insert(
        "pcfg".into(),
        json!({
            "grammar": grammar.id(),
            "corpus": {
                "sentences": stats.sentences,
                "tokens": stats.tokens,
                "min_len": stats.min_len,
                "max_len": stats.max_len,
            },
            "length_percentiles": {
                "p25": p.p25, "p50": p.p50, "p75": p.p75, "p95": p.p95,
            },
            "masking": {
                "sentences": mstats.sentences,
                "tokens": mstats.tokens,
                "selected": mstats.selected,
                "selected_fraction": mstats.selected as f64 / mstats.tokens as f64,
                "mask_token": mstats.mask_token,
                "random_token": mstats.random_token,
                "unchanged": mstats.unchanged,
            },
        }),
    );
    Ok(())
}

/// Validate and execute a config, writing the bundle under
/// `out_root/<run_id>/`. Validation errors abort before any work.
pub fn run(cfg: &ExperimentConfig, out_root: &Path) -> Result<ResultBundle> {
    let findings = validate(cfg);
    if has_errors(&findings) {
        let msgs: Vec<String> = findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .map(|f| f.to_string())
            .collect();
        return Err(Error::Config(msgs.join("; ")));
    }

    let writer = BundleWriter::create(out_root.join(&cfg.run_id))?;
    let mut ctx = RunContext { cfg, writer, report: serde_json::Map::new() };
    ctx.report.insert("run_id".into(), json!(cfg.run_id));
    ctx.report.insert("kind".into(), json!(cfg.kind.as_str()));
    ctx.report.insert("seed".into(), json!(cfg.seed));
    if let Some(t) = &cfg.task {
        let task = t.build()?;
        ctx.report.insert(
            "task".into(),
            json!({"d": task.d(), "k": task.k(), "support": task.support()}),
        );
    }

    let snapshot = cfg.to_toml_string()?;
    ctx.writer.add("config.snapshot.toml", snapshot.as_bytes())?;

    match cfg.kind {
        ExperimentKind::Pcfg => run_pcfg(&mut ctx)?,
        _ => {
            let task = cfg
                .task
                .as_ref()
                .ok_or_else(|| Error::Config("missing [task] section".into()))?
                .build()?;
            run_training(&mut ctx, &task)?;
        }
    }

    let summary = serde_json::Value::Object(ctx.report);
    let mut body =
        serde_json::to_vec_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    body.push(b'\n');
    ctx.writer.add("report.json", &body)?;

    let (dir, manifest) = ctx.writer.finish(cfg)?;
    Ok(ResultBundle { dir, manifest, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_compare_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
kind = "compare"
run_id = "tiny"
seed = 11

[task]
d = 8
k = 2

[eval]
samples = 512

[teacher]
m = 32
stage1 = "exact"
t2 = 300
b2 = 4
eta2 = 0.05
eval_stride = 50

[student]
m = 16
b1 = 2048
t2 = 200
b2 = 4
eta2 = 0.05
eval_stride = 50
"#,
        )
        .unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected_with_field_path() {
        let err = ExperimentConfig::from_toml_str(
            "kind = \"pcfg\"\nrun_id = \"x\"\nseed = 1\nbogus_key = 3\n[pcfg]\nn = 100\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = ExperimentConfig::from_toml_str(
            "kind = \"pcfg\"\nrun_id = \"x\"\nseed = 1\n[pcfg]\nn = 100\nextra = 1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn validation_flags_relation_breaks_and_capacity() {
        // lambda decoupled from eta -> error finding on the right field
        let mut cfg = tiny_compare_config();
        cfg.teacher.as_mut().unwrap().lambda1 = Some(0.123);
        let findings = validate(&cfg);
        assert!(findings
            .iter()
            .any(|f| f.severity == Severity::Error && f.field == "teacher.lambda1"));

        // exact enumeration beyond the cap -> capacity error
        let mut cfg = tiny_compare_config();
        cfg.task.as_mut().unwrap().d = 30;
        cfg.task.as_mut().unwrap().k = 4;
        let findings = validate(&cfg);
        assert!(findings
            .iter()
            .any(|f| f.severity == Severity::Error && f.field == "teacher.stage1"
                && f.message.contains("d = 30")));

        // eta1 override is legal but warned in paper-faithful mode
        let mut cfg = tiny_compare_config();
        cfg.teacher.as_mut().unwrap().eta1 = Some(3.0);
        let findings = validate(&cfg);
        assert!(findings
            .iter()
            .any(|f| f.severity == Severity::Warning && f.field == "teacher.eta1"));
        assert!(!has_errors(&findings));

        // exploration mode passes tuned overrides silently and downgrades
        // the decay decoupling to a warning
        let mut cfg = tiny_compare_config();
        cfg.paper_faithful = false;
        cfg.teacher.as_mut().unwrap().eta1 = Some(3.0);
        cfg.student.as_mut().unwrap().eta1 = Some(2.0);
        assert!(validate(&cfg).is_empty());
        cfg.teacher.as_mut().unwrap().lambda1 = Some(0.123);
        let findings = validate(&cfg);
        assert!(findings
            .iter()
            .any(|f| f.severity == Severity::Warning && f.field == "teacher.lambda1"));
        assert!(!has_errors(&findings));

        // vanishing majority coefficient without an explicit step size
        let mut cfg = tiny_compare_config();
        cfg.task.as_mut().unwrap().d = 9;
        cfg.task.as_mut().unwrap().k = 3; // zeta_2 = 0 at odd d
        cfg.teacher.as_mut().unwrap().stage1 = Stage1Mode::Sampled;
        let findings = validate(&cfg);
        assert!(findings
            .iter()
            .any(|f| f.severity == Severity::Error && f.field == "teacher.eta1"));

        // students cannot use population mode
        let mut cfg = tiny_compare_config();
        cfg.student.as_mut().unwrap().stage1 = Stage1Mode::Population;
        assert!(validate(&cfg)
            .iter()
            .any(|f| f.severity == Severity::Error && f.field == "student.stage1"));

        // missing sections per kind
        let mut cfg = tiny_compare_config();
        cfg.student = None;
        assert!(validate(&cfg).iter().any(|f| f.field == "student"));
        let base = tiny_compare_config();
        assert!(!has_errors(&validate(&base)));
    }

    #[test]
    fn shipped_configs_parse_and_validate_cleanly() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for name in ["desk_compare.toml", "exact_mechanism.toml", "pcfg_stats.toml"] {
            let text = fs::read_to_string(dir.join(name)).unwrap();
            let cfg = ExperimentConfig::from_toml_str(&text)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            let findings = validate(&cfg);
            assert!(findings.is_empty(), "{name}: {:?}", findings);
            seen += 1;
        }
        assert_eq!(seen, 3);
    }

    #[test]
    fn compare_run_enforces_budget_parity_and_rehashes_identically() {
        let cfg = tiny_compare_config();
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let a = run(&cfg, dir_a.path()).unwrap();
        let b = run(&cfg, dir_b.path()).unwrap();

        // identical configs -> identical content hashes, any directory
        assert_eq!(a.manifest.files, b.manifest.files);
        assert!(!a.manifest.files.is_empty());

        // both arms consumed the same budget and share the eval grid
        let cur = a.summary["curriculum"]["samples_total"].as_u64().unwrap();
        let one = a.summary["oneshot"]["samples_total"].as_u64().unwrap();
        assert_eq!(cur, one);
        assert_eq!(cur, 2048 + 200 * 4);
        let names: Vec<&str> = a.manifest.files.iter().map(|f| f.name.as_str()).collect();
        for expected in [
            "compare.csv",
            "config.snapshot.toml",
            "curriculum_trace.csv",
            "oneshot_trace.csv",
            "report.json",
            "teacher_trace.csv",
        ] {
            assert!(names.contains(&expected), "missing {expected}");
        }

        // the bundle verifies, and corruption is caught
        let (_, checks) = verify_bundle(&a.dir).unwrap();
        assert!(checks.iter().all(|(_, ok)| *ok));
        fs::write(a.dir.join("compare.csv"), b"tampered").unwrap();
        let (_, checks) = verify_bundle(&a.dir).unwrap();
        assert!(checks.iter().any(|(name, ok)| name == "compare.csv" && !ok));

        // the trace CSV grid columns line up with the merged table
        let compare = fs::read_to_string(b.dir.join("compare.csv")).unwrap();
        let lines: Vec<&str> = compare.lines().collect();
        assert_eq!(lines[0], "samples_consumed,curriculum_accuracy,oneshot_accuracy");
        assert!(lines.len() > 3);
    }

    #[test]
    fn teacher_run_emits_weight_gap_and_checkpoints() {
        let mut cfg = tiny_compare_config();
        cfg.kind = ExperimentKind::Teacher;
        cfg.student = None;
        cfg.run_id = "teach".into();
        cfg.save_checkpoints = true;
        let dir = tempdir().unwrap();
        let bundle = run(&cfg, dir.path()).unwrap();
        let names: Vec<&str> = bundle.manifest.files.iter().map(|f| f.name.as_str()).collect();
        assert!(names.contains(&"teacher_weight_gap.csv"));
        assert!(names.contains(&"teacher_final.ckpt"));
        assert!(names.contains(&"teacher_post_stage1.ckpt"));
        // checkpoints round-trip
        let net = TwoLayerMlp::load_checkpoint(&bundle.dir.join("teacher_final.ckpt")).unwrap();
        assert_eq!(net.m(), 32);
        // the report carries the stage-1 structure summary
        assert!(bundle.summary["weight_gap"]["support_recovery"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn diagnostics_run_emits_histograms_and_decomposition() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
kind = "diagnostics"
run_id = "diag"
seed = 5

[task]
# odd dimension: no preactivation ties, so the decomposition identity is
# exact instead of carrying the tie-mass residual
d = 11
k = 4

[teacher]
m = 64
stage1 = "exact"
t2 = 0

[student]
m = 8
t2 = 0

[diagnostics]
projection_rows = 16
bins = 11
"#,
        )
        .unwrap();
        assert!(!has_errors(&validate(&cfg)));
        let dir = tempdir().unwrap();
        let bundle = run(&cfg, dir.path()).unwrap();
        let names: Vec<&str> = bundle.manifest.files.iter().map(|f| f.name.as_str()).collect();
        assert!(names.contains(&"correlation_s_histogram.csv"));
        assert!(names.contains(&"correlation_c_histogram.csv"));
        assert!(names.contains(&"teacher_weight_gap.csv"));
        // exact mode: the decomposition identity holds to near machine level
        let residual = bundle.summary["decomposition"]["max_residual"].as_f64().unwrap();
        assert!(residual < 1e-10, "residual {residual}");
        assert_eq!(bundle.summary["correlation"]["mode"], json!("exact"));
        let ratio = bundle.summary["correlation"]["dispersion_ratio"].as_f64().unwrap();
        assert!(ratio > 1.0, "in-support dispersion should dominate, got {ratio}");
    }

    #[test]
    fn pcfg_run_reports_percentiles_and_masking() {
        let cfg = ExperimentConfig::from_toml_str(
            "kind = \"pcfg\"\nrun_id = \"gram\"\nseed = 3\n[pcfg]\nn = 150\n",
        )
        .unwrap();
        assert!(!has_errors(&validate(&cfg)));
        let dir = tempdir().unwrap();
        let bundle = run(&cfg, dir.path()).unwrap();
        let names: Vec<&str> = bundle.manifest.files.iter().map(|f| f.name.as_str()).collect();
        for expected in ["corpus.txt", "corpus.meta.toml", "masked.tsv", "report.json"] {
            assert!(names.contains(&expected), "missing {expected}");
        }
        let corpus = fs::read_to_string(bundle.dir.join("corpus.txt")).unwrap();
        assert_eq!(corpus.lines().count(), 150);
        assert_eq!(bundle.summary["pcfg"]["corpus"]["sentences"], json!(150));
        let frac = bundle.summary["pcfg"]["masking"]["selected_fraction"].as_f64().unwrap();
        assert!((frac - 0.30).abs() < 0.05, "fraction {frac}");
        let p50 = bundle.summary["pcfg"]["length_percentiles"]["p50"].as_u64().unwrap();
        assert!((200..400).contains(&p50), "median length {p50}");
        // rerun -> identical bytes
        let dir2 = tempdir().unwrap();
        let bundle2 = run(&cfg, dir2.path()).unwrap();
        assert_eq!(bundle.manifest.files, bundle2.manifest.files);
    }

    #[test]
    fn config_snapshot_round_trips() {
        let cfg = tiny_compare_config();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.run_id, cfg.run_id);
        assert_eq!(back.kind, cfg.kind);
        assert_eq!(back.teacher.as_ref().unwrap().m, 32);
        assert_eq!(back.student.as_ref().unwrap().eta2, Some(0.05));
    }

    #[test]
    fn run_refuses_invalid_configs_with_config_error() {
        let mut cfg = tiny_compare_config();
        cfg.teacher.as_mut().unwrap().lambda1 = Some(9.0);
        let dir = tempdir().unwrap();
        match run(&cfg, dir.path()) {
            Err(Error::Config(msg)) => assert!(msg.contains("teacher.lambda1"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        // nothing was written
        assert!(!dir.path().join("tiny").exists());
    }
}
