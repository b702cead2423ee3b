//! Two-stage training: a wide teacher network, a narrow student distilled
//! through a random symmetric projection of the teacher's hidden layer, and
//! an output-matching baseline, plus a general stage scheduler covering all
//! three.
//!
//! The shared recipe: stage 1 takes weight-decayed gradient steps on the
//! hidden weights (biases frozen throughout), stage 2 runs SGD on the outer
//! weights only and returns the minimum-evaluation-loss checkpoint. With
//! decay `lambda = 1/(2 eta)` a stage-1 step leaves the weights exactly
//! proportional to the (sub)gradient, which the structure diagnostics rely
//! on.
//!
//! Budget accounting: `samples_total` adds `steps * batch` for every stage,
//! where exact full-cube gradient evaluations count their batch as `2^d`.
//! Evaluation points are held out and never counted.

use crate::boolean_fourier::{balanced_character_value, majority_zeta_closed};
use crate::error::{Error, Result};
use crate::mlp::TwoLayerMlp;
use crate::parity_data::{dim_mask, sample_point, LabeledSample, ParityTask};
use crate::rng::derive_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Full-cube gradient evaluations are capped at this dimension.
pub const MAX_EXACT_DIM: u32 = 20;

/// Cap on `2^d * m` for precomputing the hidden matrix in exact outer stages.
const EXACT_HIDDEN_CACHE_ENTRIES: u64 = 1 << 23;

#[inline]
fn sign_plus(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// How a hidden-layer stage obtains its gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Mode {
    /// Monte Carlo batch of fresh samples.
    #[default]
    Sampled,
    /// Deterministic full-cube enumeration (`d <= MAX_EXACT_DIM`); the stage
    /// batch counts as `2^d` toward the sample budget.
    Exact,
    /// Closed-form expected gradient at a hypercube-weight initialization,
    /// from exact majority Fourier coefficients (teacher only). Assumes every
    /// point is margin-active at initialization, which the odd symmetric
    /// initialization guarantees up to exponentially small failure mass at
    /// the widths used here.
    Population,
}

fn default_b1() -> u64 {
    4096
}
fn default_b2() -> u64 {
    1
}
fn default_stride() -> u64 {
    1000
}

/// Teacher training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    /// Hidden width (even).
    pub m: usize,
    #[serde(default)]
    pub stage1: Stage1Mode,
    /// Stage-1 batch size (sampled mode).
    #[serde(default = "default_b1")]
    pub b1: u64,
    /// Number of outer-weight SGD steps.
    pub t2: u64,
    /// Batch per outer step.
    #[serde(default = "default_b2")]
    pub b2: u64,
    /// Stage-1 step size; default `m / (k |zeta_{k-1}|)`.
    #[serde(default)]
    pub eta1: Option<f64>,
    /// Stage-1 weight decay; default `1 / (2 eta1)`.
    #[serde(default)]
    pub lambda1: Option<f64>,
    /// Outer step size; default `4 k^1.5 / (d m max(t2 - 1, 1))`.
    #[serde(default)]
    pub eta2: Option<f64>,
    /// Evaluate (and checkpoint) every this many outer steps.
    #[serde(default = "default_stride")]
    pub eval_stride: u64,
    /// Use deterministic full-cube gradients in stage 2 as well.
    #[serde(default)]
    pub exact_stage2: bool,
}

/// Student training configuration (both the projected-distillation student
/// and the output-matching baseline).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    /// Hidden width (even).
    pub m: usize,
    #[serde(default)]
    pub stage1: Stage1Mode,
    /// Stage-1 batch size (sampled mode).
    #[serde(default = "default_b1")]
    pub b1: u64,
    pub t2: u64,
    #[serde(default = "default_b2")]
    pub b2: u64,
    /// Stage-1 step size; default `sqrt(m_teacher)` for the projected
    /// student and `m / (k |zeta_{k-1}|)` for the output-matching baseline.
    #[serde(default)]
    pub eta1: Option<f64>,
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub eta2: Option<f64>,
    #[serde(default = "default_stride")]
    pub eval_stride: u64,
    #[serde(default)]
    pub exact_stage2: bool,
    /// Baseline only: regress raw teacher outputs (squared error) instead of
    /// hinge loss on teacher signs.
    #[serde(default)]
    pub soft: bool,
    /// Which parameters stage 2 updates (outer weights only, or the entire
    /// network). Applies to both the projected student and the baseline.
    #[serde(default)]
    pub stage2_scope: Stage2Scope,
}

/// Default outer-stage step size `4 k^1.5 / (d m max(t2-1, 1))`.
pub fn default_eta2(d: u32, k: u32, m: usize, t2: u64) -> f64 {
    4.0 * f64::from(k).powf(1.5) / (f64::from(d) * m as f64 * (t2.saturating_sub(1)).max(1) as f64)
}

/// Default teacher stage-1 step size `m / (k |zeta_{k-1}|)`.
pub fn teacher_eta1(d: u32, k: u32, m: usize) -> Result<f64> {
    let zeta = majority_zeta_closed(d, k - 1)?;
    if zeta == 0.0 {
        return Err(Error::Argument(format!(
            "degree-{} majority coefficient vanishes at d = {d}; \
             the default stage-1 step size is undefined, supply eta1 explicitly",
            k - 1
        )));
    }
    Ok(m as f64 / (f64::from(k) * zeta.abs()))
}

// ---------------------------------------------------------------------------
// Traces and results
// ---------------------------------------------------------------------------

/// One evaluation point on the training trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// 1-based stage index (0 for the initial state).
    pub stage: u32,
    /// Step within the stage (0 = before the first step).
    pub step: u64,
    /// Cumulative training samples consumed so far.
    pub samples_consumed: u64,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
}

/// Evaluation trajectory of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    /// Total training samples consumed (exact stages count `2^d` per step).
    pub samples_total: u64,
    /// Wall-clock duration of the run. Not part of any serialized artifact;
    /// kept for in-process reporting only so outputs stay byte-deterministic.
    pub elapsed_secs: f64,
}

/// A trained two-stage model plus its trajectory.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Minimum-evaluation-loss checkpoint (falls back to the final state
    /// when no outer stage ran).
    pub net: TwoLayerMlp,
    /// Snapshot right after the hidden-weight stage(s): the representation
    /// the structural diagnostics inspect.
    pub post_stage1: TwoLayerMlp,
    pub best_eval_loss: f64,
    pub best_eval_accuracy: f64,
    pub final_eval_loss: f64,
    pub final_eval_accuracy: f64,
    pub trace: TrainingTrace,
}

/// A trained student together with the projection it distilled through
/// (absent for the output-matching baseline).
#[derive(Debug, Clone)]
pub struct StudentRun {
    pub model: TrainedModel,
    pub projection: Option<SymmetricProjection>,
}

// ---------------------------------------------------------------------------
// Evaluation sets
// ---------------------------------------------------------------------------

/// Held-out labeled points used for evaluation; never counted against the
/// training budget.
#[derive(Debug, Clone)]
pub struct EvalSet {
    samples: Vec<LabeledSample>,
}

impl EvalSet {
    /// Fresh i.i.d. evaluation points from a dedicated seed stream.
    pub fn sampled(task: &ParityTask, n: usize, seed: u64) -> Result<Self> {
        let samples =
            crate::parity_data::sample_batch(task, n, &mut derive_rng(seed, "eval-set", 0))?;
        Ok(Self { samples })
    }

    /// The full cube as the evaluation set (exact losses; `d <= MAX_EXACT_DIM`).
    pub fn exact(task: &ParityTask) -> Result<Self> {
        if task.d() > MAX_EXACT_DIM {
            return Err(Error::Capacity(format!(
                "exact evaluation needs d <= {MAX_EXACT_DIM}, got {}",
                task.d()
            )));
        }
        Ok(Self {
            samples: crate::parity_data::enumerate_all(task)?.collect(),
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Symmetric random projection
// ---------------------------------------------------------------------------

/// Random sign projection from a width-`cols` hidden layer down to `rows`
/// outputs. Entries are `+/- 1/cols` with the mirrored-column constraint
/// `A[l][i + cols/2] = -A[l][i]`, so projecting a mirrored hidden layer
/// reduces to projecting the odd part of each neuron pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricProjection {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SymmetricProjection {
    pub fn sample(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if rows == 0 || cols == 0 || cols % 2 != 0 {
            return Err(Error::Argument(format!(
                "projection needs rows >= 1 and even cols, got {rows} x {cols}"
            )));
        }
        let half = cols / 2;
        let scale = 1.0 / cols as f64;
        let mut data = vec![0.0; rows * cols];
        for l in 0..rows {
            for i in 0..half {
                let v = if rng.random_bool(0.5) { scale } else { -scale };
                data[l * cols + i] = v;
                data[l * cols + i + half] = -v;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.cols..(l + 1) * self.cols]
    }

    /// Dense projection of a full hidden vector.
    pub fn apply_into(&self, h: &[f64], out: &mut [f64]) {
        assert_eq!(h.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.row(l).iter().zip(h).map(|(a, v)| a * v).sum();
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(h, &mut out);
        out
    }

    /// Projection applied to per-pair differences `h[i] - h[i + cols/2]`
    /// using only the first half of each row. Thanks to the mirrored-column
    /// constraint this equals [`apply_into`](Self::apply_into) on the full
    /// vector (up to summation rounding) at half the cost.
    pub fn apply_folded_into(&self, diff: &[f64], out: &mut [f64]) {
        let half = self.cols / 2;
        assert_eq!(diff.len(), half);
        assert_eq!(out.len(), self.rows);
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.row(l)[..half].iter().zip(diff).map(|(a, v)| a * v).sum();
        }
    }
}

// ---------------------------------------------------------------------------
// Packed fast path for two-magnitude hidden layers
// ---------------------------------------------------------------------------

/// Popcount-based evaluator for hidden layers whose first-half weight rows
/// carry exactly one magnitude on the task support and one off it (the
/// structure a decayed stage-1 step imprints), with the second half mirrored.
///
/// Row i's pre-activation reduces to two popcounts:
/// `w_i . x = alpha_i (2 A_in - k) + beta_i (2 A_out - (d - k))`, where
/// `A_in`/`A_out` count sign agreements between x and the row inside/outside
/// the support.
#[derive(Debug, Clone)]
pub(crate) struct PackedHidden {
    d: u32,
    k: u32,
    half: usize,
    support: u128,
    mask: u128,
    /// Per first-half row: in-support magnitude.
    alpha: Vec<f64>,
    /// Per first-half row: off-support magnitude.
    beta: Vec<f64>,
    /// Per first-half row: bit j set iff w_ij > 0.
    sign: Vec<u128>,
    /// All m biases.
    bias: Vec<f64>,
}

impl PackedHidden {
    /// Detect the two-magnitude mirrored structure exactly (f64 equality).
    pub(crate) fn detect(net: &TwoLayerMlp, support: u128) -> Option<Self> {
        if !net.mirrored_hidden() {
            return None;
        }
        let d = net.d();
        let dim = d as usize;
        let mask = dim_mask(d);
        if support == 0 || support & !mask != 0 {
            return None;
        }
        let k = support.count_ones();
        let half = net.m() / 2;
        let mut alpha = Vec::with_capacity(half);
        let mut beta = Vec::with_capacity(half);
        let mut sign = Vec::with_capacity(half);
        for i in 0..half {
            let row = net.weight_row(i);
            let mut a: Option<f64> = None;
            let mut bt: Option<f64> = None;
            let mut s = 0u128;
            for (j, &w) in row.iter().enumerate().take(dim) {
                if w > 0.0 {
                    s |= 1 << j;
                }
                let mag = w.abs();
                let slot = if support >> j & 1 == 1 { &mut a } else { &mut bt };
                match slot {
                    Some(v) if *v == mag => {}
                    Some(_) => return None,
                    None => *slot = Some(mag),
                }
            }
            alpha.push(a.unwrap_or(0.0));
            beta.push(bt.unwrap_or(0.0));
            sign.push(s);
        }
        Some(Self {
            d,
            k,
            half,
            support,
            mask,
            alpha,
            beta,
            sign,
            bias: net.biases().to_vec(),
        })
    }

    /// Weight-row inner product for first-half row i.
    #[inline]
    pub(crate) fn z(&self, i: usize, x: u128) -> f64 {
        let agree = !(x ^ self.sign[i]) & self.mask;
        let a_in = (agree & self.support).count_ones() as i32;
        let a_out = (agree & !self.support & self.mask).count_ones() as i32;
        self.alpha[i] * f64::from(2 * a_in - self.k as i32)
            + self.beta[i] * f64::from(2 * a_out - (self.d - self.k) as i32)
    }

    /// All m hidden activations (mirrored second half).
    pub(crate) fn hidden_into(&self, x: u128, out: &mut [f64]) {
        assert_eq!(out.len(), 2 * self.half);
        for i in 0..self.half {
            let z = self.z(i, x);
            out[i] = (z + self.bias[i]).max(0.0);
            out[i + self.half] = (-z + self.bias[i + self.half]).max(0.0);
        }
    }

    /// Per-pair odd parts `relu(z + b) - relu(-z + b)` (length m/2).
    pub(crate) fn phi_diff_into(&self, x: u128, out: &mut [f64]) {
        assert_eq!(out.len(), self.half);
        for (i, o) in out.iter_mut().enumerate() {
            let z = self.z(i, x);
            *o = (z + self.bias[i]).max(0.0) - (-z + self.bias[i + self.half]).max(0.0);
        }
    }
}

/// Hidden-layer evaluation dispatch: popcount fast path when the structure
/// allows it, straightforward dot products otherwise.
#[derive(Debug, Clone)]
pub(crate) enum HiddenPath {
    Generic,
    Packed(PackedHidden),
}

impl HiddenPath {
    pub(crate) fn detect(net: &TwoLayerMlp, support: u128) -> Self {
        match PackedHidden::detect(net, support) {
            Some(p) => Self::Packed(p),
            None => Self::Generic,
        }
    }

    pub(crate) fn hidden_into(&self, net: &TwoLayerMlp, x: u128, out: &mut [f64]) {
        match self {
            Self::Generic => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (net.dot_mask(i, x) + net.biases()[i]).max(0.0);
                }
            }
            Self::Packed(p) => p.hidden_into(x, out),
        }
    }

    pub(crate) fn forward_buf(&self, net: &TwoLayerMlp, x: u128, buf: &mut [f64]) -> f64 {
        self.hidden_into(net, x, buf);
        net.outer().iter().zip(buf.iter()).map(|(a, h)| a * h).sum()
    }
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Loss driving one schedule stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLoss {
    /// Maximize correlation between the student's hidden layer and the
    /// projected teacher hidden layer: `-<hidden_s(x), A hidden_t(x)>`.
    ProjectedCorrelation,
    /// Squared error against the projected teacher hidden layer.
    ProjectedMse,
    /// Hinge loss of the network output against labels.
    FullOutput,
    /// Squared error of the network output against raw teacher outputs.
    OutputMse,
}

/// Which parameters a stage trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedLayer {
    Hidden,
    Outer,
    /// Every parameter: hidden weights, biases, and outer weights jointly.
    Full,
}

/// Which parameters the terminal output-supervised stage of a student run
/// updates: the outer weights alone (the two-stage reading, mirroring the
/// teacher), or the entire network (the generic-schedule reading, where the
/// final stage trains the whole student against the output signal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Scope {
    #[default]
    Outer,
    Full,
}

impl Stage2Scope {
    fn layer(self) -> TrainedLayer {
        match self {
            Self::Outer => TrainedLayer::Outer,
            Self::Full => TrainedLayer::Full,
        }
    }
}

/// Where hinge-stage labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// True task labels.
    #[default]
    TaskTruth,
    /// Signs of the trained teacher's outputs.
    TeacherSign,
}

/// One stage of a training schedule. Stages with `steps = 0` are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleStage {
    pub layer: TrainedLayer,
    pub steps: u64,
    pub batch: u64,
    pub loss: StageLoss,
    pub eta: f64,
    /// Weight decay; only meaningful for hidden stages.
    pub lambda: f64,
    /// Deterministic full-cube gradients (batch counted as `2^d`).
    pub exact: bool,
}

/// A full training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub stages: Vec<ScheduleStage>,
    pub labels: LabelSource,
}

// ---------------------------------------------------------------------------
// Shared internals
// ---------------------------------------------------------------------------

fn eval_model(net: &TwoLayerMlp, path: &HiddenPath, eval: &EvalSet, buf: &mut [f64]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut hits = 0usize;
    for s in eval.samples() {
        let f = path.forward_buf(net, s.x, buf);
        loss += (1.0 - s.y * f).max(0.0);
        if sign_plus(f) == s.y {
            hits += 1;
        }
    }
    let n = eval.len() as f64;
    (loss / n, hits as f64 / n)
}

#[derive(Debug, Default)]
struct BestTracker {
    snapshot: Option<(f64, f64, TwoLayerMlp)>,
}

impl BestTracker {
    fn observe(&mut self, loss: f64, acc: f64, net: &TwoLayerMlp) {
        let better = match &self.snapshot {
            Some((best, _, _)) => loss < *best,
            None => true,
        };
        if better {
            self.snapshot = Some((loss, acc, net.clone()));
        }
    }
}

enum Labeler<'a> {
    Task(&'a ParityTask),
    TeacherSign {
        net: &'a TwoLayerMlp,
        path: &'a HiddenPath,
        buf: Vec<f64>,
    },
    TeacherLogit {
        net: &'a TwoLayerMlp,
        path: &'a HiddenPath,
        buf: Vec<f64>,
    },
}

impl Labeler<'_> {
    fn target(&mut self, x: u128) -> f64 {
        match self {
            Self::Task(task) => task.label(x),
            Self::TeacherSign { net, path, buf } => sign_plus(path.forward_buf(net, x, buf)),
            Self::TeacherLogit { net, path, buf } => path.forward_buf(net, x, buf),
        }
    }
}

struct RunState<'a> {
    eval: &'a EvalSet,
    trace: Vec<TraceRecord>,
    samples: u64,
    best: BestTracker,
}

impl RunState<'_> {
    fn record(&mut self, net: &TwoLayerMlp, path: &HiddenPath, stage: u32, step: u64, buf: &mut [f64]) -> (f64, f64) {
        let (loss, acc) = eval_model(net, path, self.eval, buf);
        self.trace.push(TraceRecord {
            stage,
            step,
            samples_consumed: self.samples,
            eval_loss: loss,
            eval_accuracy: acc,
        });
        (loss, acc)
    }
}

/// Gradient of the configured hidden-stage loss over a batch of points.
fn hidden_stage_gradient(
    net: &TwoLayerMlp,
    loss: StageLoss,
    labeler: &mut Option<Labeler<'_>>,
    teacher: Option<(&TwoLayerMlp, &HiddenPath)>,
    projection: Option<&SymmetricProjection>,
    xs: &[u128],
) -> Result<Vec<f64>> {
    match loss {
        StageLoss::FullOutput => {
            let labeler = labeler
                .as_mut()
                .ok_or_else(|| Error::Argument("hinge stage needs a label source".into()))?;
            let samples: Vec<LabeledSample> = xs
                .iter()
                .map(|&x| LabeledSample { x, y: labeler.target(x) })
                .collect();
            Ok(net.grad_hidden_hinge(&samples))
        }
        StageLoss::ProjectedCorrelation | StageLoss::ProjectedMse => {
            let (tnet, tpath) = teacher.ok_or_else(|| {
                Error::Argument("projected losses need a teacher network".into())
            })?;
            let proj = projection.ok_or_else(|| {
                Error::Argument("projected losses need a projection matrix".into())
            })?;
            if proj.cols() != tnet.m() || proj.rows() != net.m() {
                return Err(Error::Shape(format!(
                    "projection is {} x {}, expected {} x {}",
                    proj.rows(),
                    proj.cols(),
                    net.m(),
                    tnet.m()
                )));
            }
            let m_s = net.m();
            let mut targets = vec![0.0; xs.len() * m_s];
            match tpath {
                HiddenPath::Packed(p) => {
                    let mut diff = vec![0.0; tnet.m() / 2];
                    for (s, &x) in xs.iter().enumerate() {
                        p.phi_diff_into(x, &mut diff);
                        proj.apply_folded_into(&diff, &mut targets[s * m_s..(s + 1) * m_s]);
                    }
                }
                HiddenPath::Generic => {
                    let mut h = vec![0.0; tnet.m()];
                    for (s, &x) in xs.iter().enumerate() {
                        tpath.hidden_into(tnet, x, &mut h);
                        proj.apply_into(&h, &mut targets[s * m_s..(s + 1) * m_s]);
                    }
                }
            }
            if loss == StageLoss::ProjectedCorrelation {
                Ok(net.grad_hidden_alignment(xs, &targets))
            } else {
                Ok(net.grad_hidden_mse_targets(xs, &targets))
            }
        }
        StageLoss::OutputMse => {
            let (tnet, tpath) = teacher.ok_or_else(|| {
                Error::Argument("output regression needs a teacher network".into())
            })?;
            let mut buf = vec![0.0; tnet.m()];
            let targets: Vec<f64> = xs
                .iter()
                .map(|&x| tpath.forward_buf(tnet, x, &mut buf))
                .collect();
            Ok(net.grad_hidden_output_mse(xs, &targets))
        }
    }
}

fn cube_points(d: u32) -> Result<Vec<u128>> {
    if d > MAX_EXACT_DIM {
        return Err(Error::Capacity(format!(
            "exact gradients need d <= {MAX_EXACT_DIM}, got {d}"
        )));
    }
    Ok((0..1u128 << d).collect())
}

/// SGD (or exact full-batch descent) on the outer weights under hinge or
/// output-regression loss, tracking the minimum-eval-loss checkpoint.
#[allow(clippy::too_many_arguments)]
fn run_outer_stage(
    net: &mut TwoLayerMlp,
    path: &HiddenPath,
    labeler: &mut Labeler<'_>,
    loss: StageLoss,
    stage: &ScheduleStage,
    stage_no: u32,
    state: &mut RunState<'_>,
    eval_stride: u64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let m = net.m();
    let d = net.d();
    let mut hbuf = vec![0.0; m];
    let mut gbuf = vec![0.0; m];
    if loss != StageLoss::FullOutput && loss != StageLoss::OutputMse {
        return Err(Error::Argument(
            "outer stages support hinge or output-regression losses only".into(),
        ));
    }

    // baseline evaluation before the first step, seeding the checkpoint
    let (l0, a0) = state.record(net, path, stage_no, 0, &mut hbuf);
    state.best.observe(l0, a0, net);

    // exact mode: fixed point set, targets, and optional hidden cache
    let exact_ctx = if stage.exact {
        let points = cube_points(d)?;
        let targets: Vec<f64> = points.iter().map(|&x| labeler.target(x)).collect();
        let cache = if (points.len() as u64) * (m as u64) <= EXACT_HIDDEN_CACHE_ENTRIES {
            let mut h = vec![0.0; points.len() * m];
            for (r, &x) in points.iter().enumerate() {
                path.hidden_into(net, x, &mut h[r * m..(r + 1) * m]);
            }
            Some(h)
        } else {
            None
        };
        Some((points, targets, cache))
    } else {
        None
    };

    for step in 1..=stage.steps {
        gbuf.fill(0.0);
        let batch_consumed = match &exact_ctx {
            Some((points, targets, cache)) => {
                for (r, &x) in points.iter().enumerate() {
                    let h: &[f64] = match cache {
                        Some(hc) => &hc[r * m..(r + 1) * m],
                        None => {
                            path.hidden_into(net, x, &mut hbuf);
                            &hbuf
                        }
                    };
                    let f: f64 = net.outer().iter().zip(h).map(|(a, v)| a * v).sum();
                    match loss {
                        StageLoss::FullOutput => {
                            let y = targets[r];
                            if y * f < 1.0 {
                                for i in 0..m {
                                    gbuf[i] -= y * h[i];
                                }
                            }
                        }
                        _ => {
                            let r2 = 2.0 * (f - targets[r]);
                            for i in 0..m {
                                gbuf[i] += r2 * h[i];
                            }
                        }
                    }
                }
                points.len() as u64
            }
            None => {
                for _ in 0..stage.batch {
                    let x = sample_point(d, rng);
                    let y = labeler.target(x);
                    path.hidden_into(net, x, &mut hbuf);
                    let f: f64 = net.outer().iter().zip(hbuf.iter()).map(|(a, v)| a * v).sum();
                    match loss {
                        StageLoss::FullOutput => {
                            if y * f < 1.0 {
                                for i in 0..m {
                                    gbuf[i] -= y * hbuf[i];
                                }
                            }
                        }
                        _ => {
                            let r2 = 2.0 * (f - y);
                            for i in 0..m {
                                gbuf[i] += r2 * hbuf[i];
                            }
                        }
                    }
                }
                stage.batch
            }
        };
        let scale = stage.eta / batch_consumed as f64;
        {
            let outer = net.outer_mut();
            for i in 0..m {
                outer[i] -= scale * gbuf[i];
            }
        }
        state.samples += batch_consumed;
        if step % eval_stride == 0 || step == stage.steps {
            let (l, a) = state.record(net, path, stage_no, step, &mut hbuf);
            state.best.observe(l, a, net);
        }
    }
    Ok(())
}

/// SGD (or exact full-batch descent) on every parameter of the network under
/// hinge or output-regression loss, tracking the minimum-eval-loss
/// checkpoint. Unlike the outer stage, hidden activations cannot be cached
/// in exact mode because the hidden weights move every step.
#[allow(clippy::too_many_arguments)]
fn run_full_stage(
    net: &mut TwoLayerMlp,
    path: &HiddenPath,
    labeler: &mut Labeler<'_>,
    loss: StageLoss,
    stage: &ScheduleStage,
    stage_no: u32,
    state: &mut RunState<'_>,
    eval_stride: u64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let d = net.d();
    let mut hbuf = vec![0.0; net.m()];
    if loss != StageLoss::FullOutput && loss != StageLoss::OutputMse {
        return Err(Error::Argument(
            "full-network stages support hinge or output-regression losses only".into(),
        ));
    }

    let (l0, a0) = state.record(net, path, stage_no, 0, &mut hbuf);
    state.best.observe(l0, a0, net);

    // exact mode: fixed point set with cached supervision targets
    let exact_ctx = if stage.exact {
        let points = cube_points(d)?;
        let targets: Vec<f64> = points.iter().map(|&x| labeler.target(x)).collect();
        Some((points, targets))
    } else {
        None
    };

    let mut xs: Vec<u128> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for step in 1..=stage.steps {
        let batch_consumed = match &exact_ctx {
            Some((points, targets)) => {
                xs.clone_from(points);
                ys.clone_from(targets);
                points.len() as u64
            }
            None => {
                if stage.batch == 0 {
                    return Err(Error::Argument("stage batch must be at least 1".into()));
                }
                xs.clear();
                ys.clear();
                for _ in 0..stage.batch {
                    let x = sample_point(d, rng);
                    xs.push(x);
                    ys.push(labeler.target(x));
                }
                stage.batch
            }
        };
        let g = match loss {
            StageLoss::FullOutput => {
                let samples: Vec<LabeledSample> = xs
                    .iter()
                    .zip(&ys)
                    .map(|(&x, &y)| LabeledSample { x, y })
                    .collect();
                net.grad_full_hinge(&samples)
            }
            _ => net.grad_full_output_mse(&xs, &ys),
        };
        net.full_step(&g, stage.eta);
        state.samples += batch_consumed;
        if step % eval_stride == 0 || step == stage.steps {
            let (l, a) = state.record(net, path, stage_no, step, &mut hbuf);
            state.best.observe(l, a, net);
        }
    }
    Ok(())
}

/// Run an arbitrary stage schedule starting from `net`.
///
/// Hidden stages apply weight-decayed gradient steps (`w <- (1 - 2 eta
/// lambda) w - eta g`, biases frozen); outer stages run SGD on the outer
/// weights and full stages run SGD on every parameter, both tracking the
/// minimum-eval-loss checkpoint. Stage i draws its data from an independent
/// stream derived from `seed` and the stage index, so a run is reproducible
/// from `(inputs, seed)` alone.
#[allow(clippy::too_many_arguments)]
pub fn run_schedule(
    task: &ParityTask,
    mut net: TwoLayerMlp,
    teacher: Option<&TwoLayerMlp>,
    projection: Option<&SymmetricProjection>,
    schedule: &Schedule,
    eval: &EvalSet,
    eval_stride: u64,
    seed: u64,
) -> Result<TrainedModel> {
    let start = Instant::now();
    if eval.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    if eval_stride == 0 {
        return Err(Error::Argument("eval_stride must be at least 1".into()));
    }
    if net.d() != task.d() {
        return Err(Error::Shape(format!(
            "network dimension {} does not match task dimension {}",
            net.d(),
            task.d()
        )));
    }
    if let Some(t) = teacher {
        if t.d() != task.d() {
            return Err(Error::Shape("teacher dimension does not match task".into()));
        }
    }
    let teacher_path = teacher.map(|t| HiddenPath::detect(t, task.support_mask()));
    let teacher_ctx = teacher.map(|t| (t, teacher_path.as_ref().expect("path set with teacher")));
    let student_path = HiddenPath::Generic; // hidden weights change during training

    let mut state = RunState {
        eval,
        trace: Vec::new(),
        samples: 0,
        best: BestTracker::default(),
    };
    let mut buf = vec![0.0; net.m()];
    state.record(&net, &student_path, 0, 0, &mut buf);

    let mut post_stage1 = net.clone();
    for (idx, stage) in schedule.stages.iter().enumerate() {
        if stage.steps == 0 {
            continue;
        }
        let stage_no = idx as u32 + 1;
        let mut rng = derive_rng(seed, "stage-data", idx as u64);
        let mut labeler = match (schedule.labels, stage.loss) {
            (_, StageLoss::OutputMse) => {
                let (tnet, tpath) = teacher_ctx
                    .ok_or_else(|| Error::Argument("output regression needs a teacher".into()))?;
                Some(Labeler::TeacherLogit { net: tnet, path: tpath, buf: vec![0.0; tnet.m()] })
            }
            (LabelSource::TaskTruth, _) => Some(Labeler::Task(task)),
            (LabelSource::TeacherSign, _) => {
                let (tnet, tpath) = teacher_ctx.ok_or_else(|| {
                    Error::Argument("teacher-sign labels need a teacher network".into())
                })?;
                Some(Labeler::TeacherSign { net: tnet, path: tpath, buf: vec![0.0; tnet.m()] })
            }
        };
        match stage.layer {
            TrainedLayer::Hidden => {
                for step in 1..=stage.steps {
                    let (xs, consumed): (Vec<u128>, u64) = if stage.exact {
                        let pts = cube_points(task.d())?;
                        let n = pts.len() as u64;
                        (pts, n)
                    } else {
                        if stage.batch == 0 {
                            return Err(Error::Argument("stage batch must be at least 1".into()));
                        }
                        (
                            (0..stage.batch).map(|_| sample_point(task.d(), &mut rng)).collect(),
                            stage.batch,
                        )
                    };
                    let g = hidden_stage_gradient(
                        &net,
                        stage.loss,
                        &mut labeler,
                        teacher_ctx,
                        projection,
                        &xs,
                    )?;
                    net.hidden_decay_step(&g, stage.eta, stage.lambda);
                    state.samples += consumed;
                    state.record(&net, &student_path, stage_no, step, &mut buf);
                }
                post_stage1 = net.clone();
            }
            TrainedLayer::Outer => {
                run_outer_stage(
                    &mut net,
                    &student_path,
                    labeler.as_mut().expect("outer labeler always built"),
                    stage.loss,
                    stage,
                    stage_no,
                    &mut state,
                    eval_stride,
                    &mut rng,
                )?;
            }
            TrainedLayer::Full => {
                run_full_stage(
                    &mut net,
                    &student_path,
                    labeler.as_mut().expect("full-stage labeler always built"),
                    stage.loss,
                    stage,
                    stage_no,
                    &mut state,
                    eval_stride,
                    &mut rng,
                )?;
            }
        }
    }

    let (final_loss, final_acc) = eval_model(&net, &student_path, eval, &mut buf);
    let (best_net, best_loss, best_acc) = match state.best.snapshot {
        Some((l, a, n)) => (n, l, a),
        None => (net.clone(), final_loss, final_acc),
    };
    Ok(TrainedModel {
        net: best_net,
        post_stage1,
        best_eval_loss: best_loss,
        best_eval_accuracy: best_acc,
        final_eval_loss: final_loss,
        final_eval_accuracy: final_acc,
        trace: TrainingTrace {
            records: state.trace,
            samples_total: state.samples,
            elapsed_secs: start.elapsed().as_secs_f64(),
        },
    })
}

// ---------------------------------------------------------------------------
// Teacher training
// ---------------------------------------------------------------------------

/// Hinge gradient of the first-half hidden rows from explicit points,
/// accumulated with integer counters so that symmetric columns come out
/// exactly equal in floating point.
fn teacher_stage1_counted(
    net: &TwoLayerMlp,
    points: impl Iterator<Item = (u128, f64)>,
    n: u64,
) -> Vec<f64> {
    let d = net.d();
    let dim = d as usize;
    let m = net.m();
    let half = m / 2;
    let mask = dim_mask(d);
    let sign_masks: Vec<u128> = (0..half)
        .map(|i| {
            let row = net.weight_row(i);
            (0..dim).filter(|&j| row[j] > 0.0).map(|j| 1u128 << j).sum()
        })
        .collect();
    let b = net.biases();
    let a = net.outer();
    let mut counts = vec![0i64; half * dim];
    let mut z = vec![0.0; half];
    for (x, y) in points {
        for i in 0..half {
            let agree = (!(x ^ sign_masks[i]) & mask).count_ones() as i32;
            z[i] = f64::from(2 * agree - d as i32);
        }
        let f: f64 = (0..half)
            .map(|i| a[i] * (z[i] + b[i]).max(0.0) + a[i + half] * (-z[i] + b[i + half]).max(0.0))
            .sum();
        if y * f < 1.0 {
            let yi = y as i64;
            for i in 0..half {
                if z[i] + b[i] > 0.0 {
                    let row = &mut counts[i * dim..(i + 1) * dim];
                    for (j, c) in row.iter_mut().enumerate() {
                        *c += if x >> j & 1 == 1 { yi } else { -yi };
                    }
                }
            }
        }
    }
    let mut g = vec![0.0; m * dim];
    let inv = 1.0 / n as f64;
    for i in 0..half {
        for j in 0..dim {
            let v = -a[i] * counts[i * dim + j] as f64 * inv;
            g[i * dim + j] = v;
            g[(i + half) * dim + j] = -v;
        }
    }
    g
}

/// Closed-form expected stage-1 hinge gradient at a hypercube-weight
/// initialization, for the first-half rows (second half mirrored).
///
/// For row i and coordinate j, with T = S symmetric-difference {j} and
/// r = |T|:
/// `G_ij = -a_i [ 1{r = 0}/2 + chi_T(w_i) (zeta_r / 2 + c_i tau_r) ]`,
/// where `zeta_r` is the degree-r majority coefficient, `tau_r` the
/// balanced-slice character value, and `c_i = -1{b_i <= 0}` at even d (0 at
/// odd d) corrects the activity indicator on tied pre-activations.
fn teacher_stage1_population(net: &TwoLayerMlp, task: &ParityTask) -> Result<Vec<f64>> {
    let d = net.d();
    let dim = d as usize;
    let k = task.k();
    let m = net.m();
    let half = m / 2;
    let support = task.support_mask();
    let zeta_of = |r: u32| -> Result<f64> {
        if r == 0 {
            balanced_character_value(d, 0)
        } else {
            majority_zeta_closed(d, r)
        }
    };
    let r_in = k - 1;
    let r_out = k + 1;
    let (zeta_in, tau_in) = (zeta_of(r_in)?, balanced_character_value(d, r_in)?);
    let (zeta_out, tau_out) = (zeta_of(r_out)?, balanced_character_value(d, r_out)?);
    let a = net.outer();
    let b = net.biases();
    let mut g = vec![0.0; m * dim];
    for i in 0..half {
        let row = net.weight_row(i);
        let mut wmask = 0u128;
        for (j, &w) in row.iter().enumerate() {
            if w == 1.0 {
                wmask |= 1 << j;
            } else if w != -1.0 {
                return Err(Error::Argument(
                    "population gradients require hypercube initial weights".into(),
                ));
            }
        }
        let tie_c = if d % 2 == 0 && b[i] <= 0.0 { -1.0 } else { 0.0 };
        for j in 0..dim {
            let t_set = support ^ (1u128 << j);
            let in_support = support >> j & 1 == 1;
            let (zeta, tau) = if in_support { (zeta_in, tau_in) } else { (zeta_out, tau_out) };
            let delta = if in_support && k == 1 { 0.5 } else { 0.0 };
            let chi = if (!wmask & t_set).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let v = -a[i] * (delta + chi * (zeta / 2.0 + tie_c * tau));
            g[i * dim + j] = v;
            g[(i + half) * dim + j] = -v;
        }
    }
    Ok(g)
}

/// Train a teacher: one weight-decayed hinge step on the hidden weights,
/// then `t2` outer-weight SGD steps, returning the minimum-eval-loss
/// checkpoint.
///
/// The hidden gradient is computed for the first half of the neurons and the
/// second half is set to its exact mirror in every mode. For odd sparsity
/// this equals the unconstrained expected step (mirrored pairs receive
/// exactly opposite gradients); for even sparsity the unconstrained step
/// would send both halves to the *same* rows, a collapse that erases the
/// network's odd symmetry and zeroes every symmetric projection of the pair
/// structure, so the mirror is imposed by construction and sampled gradients
/// are documented as half-width estimates.
pub fn train_teacher(
    task: &ParityTask,
    cfg: &TeacherConfig,
    eval: &EvalSet,
    seed: u64,
) -> Result<TrainedModel> {
    let start = Instant::now();
    if eval.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    if cfg.eval_stride == 0 {
        return Err(Error::Argument("eval_stride must be at least 1".into()));
    }
    let d = task.d();
    let k = task.k();
    let mut net = TwoLayerMlp::symmetric_init(d, k, cfg.m, &mut derive_rng(seed, "teacher-init", 0))?;
    let eta1 = match cfg.eta1 {
        Some(v) => v,
        None => teacher_eta1(d, k, cfg.m)?,
    };
    let lambda1 = cfg.lambda1.unwrap_or(1.0 / (2.0 * eta1));
    let eta2 = cfg.eta2.unwrap_or_else(|| default_eta2(d, k, cfg.m, cfg.t2));

    let mut state = RunState {
        eval,
        trace: Vec::new(),
        samples: 0,
        best: BestTracker::default(),
    };
    let path0 = HiddenPath::Generic;
    let mut buf = vec![0.0; cfg.m];
    state.record(&net, &path0, 0, 0, &mut buf);

    // stage 1: one decayed step on the hidden weights
    let (g, consumed) = match cfg.stage1 {
        Stage1Mode::Population => (teacher_stage1_population(&net, task)?, 0),
        Stage1Mode::Exact => {
            let n = 1u64 << cube_guard(d)?;
            let g =
                teacher_stage1_counted(&net, (0..1u128 << d).map(|x| (x, task.label(x))), n);
            (g, n)
        }
        Stage1Mode::Sampled => {
            if cfg.b1 == 0 {
                return Err(Error::Argument("stage-1 batch must be at least 1".into()));
            }
            let mut rng = derive_rng(seed, "teacher-stage1", 0);
            let batch = crate::parity_data::sample_batch(task, cfg.b1 as usize, &mut rng)?;
            let g = teacher_stage1_counted(&net, batch.iter().map(|s| (s.x, s.y)), cfg.b1);
            (g, cfg.b1)
        }
    };
    net.hidden_decay_step(&g, eta1, lambda1);
    net.mirror_hidden_from_first_half();
    state.samples += consumed;
    let path = HiddenPath::detect(&net, task.support_mask());
    state.record(&net, &path, 1, 1, &mut buf);
    let post_stage1 = net.clone();

    // stage 2: outer-weight SGD with task labels
    if cfg.t2 > 0 {
        let stage = ScheduleStage {
            layer: TrainedLayer::Outer,
            steps: cfg.t2,
            batch: cfg.b2,
            loss: StageLoss::FullOutput,
            eta: eta2,
            lambda: 0.0,
            exact: cfg.exact_stage2,
        };
        if !cfg.exact_stage2 && cfg.b2 == 0 {
            return Err(Error::Argument("stage-2 batch must be at least 1".into()));
        }
        let mut rng = derive_rng(seed, "teacher-stage2", 0);
        let mut labeler = Labeler::Task(task);
        run_outer_stage(
            &mut net,
            &path,
            &mut labeler,
            StageLoss::FullOutput,
            &stage,
            2,
            &mut state,
            cfg.eval_stride,
            &mut rng,
        )?;
    }

    let (final_loss, final_acc) = eval_model(&net, &path, eval, &mut buf);
    let (best_net, best_loss, best_acc) = match state.best.snapshot {
        Some((l, a, n)) => (n, l, a),
        None => (net.clone(), final_loss, final_acc),
    };
    Ok(TrainedModel {
        net: best_net,
        post_stage1,
        best_eval_loss: best_loss,
        best_eval_accuracy: best_acc,
        final_eval_loss: final_loss,
        final_eval_accuracy: final_acc,
        trace: TrainingTrace {
            records: state.trace,
            samples_total: state.samples,
            elapsed_secs: start.elapsed().as_secs_f64(),
        },
    })
}

fn cube_guard(d: u32) -> Result<u32> {
    if d > MAX_EXACT_DIM {
        return Err(Error::Capacity(format!(
            "exact gradients need d <= {MAX_EXACT_DIM}, got {d}"
        )));
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Student training
// ---------------------------------------------------------------------------

fn student_stage1_exact(mode: Stage1Mode) -> Result<bool> {
    match mode {
        Stage1Mode::Sampled => Ok(false),
        Stage1Mode::Exact => Ok(true),
        Stage1Mode::Population => Err(Error::Argument(
            "population gradients are only defined for hinge stages at a \
             hypercube initialization; student stages use sampled or exact mode"
                .into(),
        )),
    }
}

/// Distill a student through a random symmetric projection of the teacher's
/// hidden layer: one decayed step maximizing the projected-hidden
/// correlation, then hinge SGD on true task labels — over the outer weights
/// alone or the entire network, per `cfg.stage2_scope`.
pub fn train_student_curriculum(
    task: &ParityTask,
    teacher: &TwoLayerMlp,
    cfg: &StudentConfig,
    eval: &EvalSet,
    seed: u64,
) -> Result<StudentRun> {
    if teacher.m() % 2 != 0 {
        return Err(Error::Argument("teacher width must be even to project pairs".into()));
    }
    let d = task.d();
    let k = task.k();
    let net = TwoLayerMlp::symmetric_init(d, k, cfg.m, &mut derive_rng(seed, "student-init", 0))?;
    let projection =
        SymmetricProjection::sample(cfg.m, teacher.m(), &mut derive_rng(seed, "projection", 0))?;
    let eta1 = cfg.eta1.unwrap_or_else(|| (teacher.m() as f64).sqrt());
    let lambda1 = cfg.lambda1.unwrap_or(1.0 / (2.0 * eta1));
    let eta2 = cfg.eta2.unwrap_or_else(|| default_eta2(d, k, cfg.m, cfg.t2));
    let schedule = Schedule {
        stages: vec![
            ScheduleStage {
                layer: TrainedLayer::Hidden,
                steps: 1,
                batch: cfg.b1,
                loss: StageLoss::ProjectedCorrelation,
                eta: eta1,
                lambda: lambda1,
                exact: student_stage1_exact(cfg.stage1)?,
            },
            ScheduleStage {
                layer: cfg.stage2_scope.layer(),
                steps: cfg.t2,
                batch: cfg.b2,
                loss: StageLoss::FullOutput,
                eta: eta2,
                lambda: 0.0,
                exact: cfg.exact_stage2,
            },
        ],
        labels: LabelSource::TaskTruth,
    };
    let model = run_schedule(
        task,
        net,
        Some(teacher),
        Some(&projection),
        &schedule,
        eval,
        cfg.eval_stride,
        seed,
    )?;
    Ok(StudentRun { model, projection: Some(projection) })
}

/// Output-matching baseline: the same two-stage shape, but both stages see
/// only the teacher's output (hinge on its signs, or squared error on its
/// raw outputs when `cfg.soft` is set). No projection of the hidden layer is
/// used anywhere. Stage 2 honors `cfg.stage2_scope` exactly as the projected
/// student does, keeping the two arms structurally identical.
pub fn train_student_oneshot(
    task: &ParityTask,
    teacher: &TwoLayerMlp,
    cfg: &StudentConfig,
    eval: &EvalSet,
    seed: u64,
) -> Result<StudentRun> {
    let d = task.d();
    let k = task.k();
    let net = TwoLayerMlp::symmetric_init(d, k, cfg.m, &mut derive_rng(seed, "student-init", 0))?;
    let eta1 = match cfg.eta1 {
        Some(v) => v,
        None => teacher_eta1(d, k, cfg.m)?,
    };
    let lambda1 = cfg.lambda1.unwrap_or(1.0 / (2.0 * eta1));
    let eta2 = cfg.eta2.unwrap_or_else(|| default_eta2(d, k, cfg.m, cfg.t2));
    let loss = if cfg.soft { StageLoss::OutputMse } else { StageLoss::FullOutput };
    let schedule = Schedule {
        stages: vec![
            ScheduleStage {
                layer: TrainedLayer::Hidden,
                steps: 1,
                batch: cfg.b1,
                loss,
                eta: eta1,
                lambda: lambda1,
                exact: student_stage1_exact(cfg.stage1)?,
            },
            ScheduleStage {
                layer: cfg.stage2_scope.layer(),
                steps: cfg.t2,
                batch: cfg.b2,
                loss,
                eta: eta2,
                lambda: 0.0,
                exact: cfg.exact_stage2,
            },
        ],
        labels: LabelSource::TeacherSign,
    };
    let model = run_schedule(task, net, Some(teacher), None, &schedule, eval, cfg.eval_stride, seed)?;
    Ok(StudentRun { model, projection: None })
}
