//! Structural diagnostics for trained networks: in/out-of-support weight-gap
//! statistics, correlations between projected hidden targets and input
//! coordinates, a dual-route decomposition of the distillation gradient, and
//! empirical batch-concentration curves.
//!
//! Everything here reads networks produced by the training module and reduces
//! them to small deterministic summaries; file output is CSV through the
//! writers on each report type.

use crate::boolean_fourier::{majority_mask, majority_zeta_closed};
use crate::distill::{HiddenPath, PackedHidden, SymmetricProjection, MAX_EXACT_DIM};
use crate::error::{Error, Result};
use crate::mlp::TwoLayerMlp;
use crate::parity_data::{dim_mask, LabeledSample, ParityTask};
use crate::util::{ls_slope, rms, std_dev};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

// ---------------------------------------------------------------------------
// Weight-gap report
// ---------------------------------------------------------------------------

/// Per-neuron magnitude statistics of the hidden weights, split by whether
/// the coordinate lies on the task support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronGap {
    pub min_in: f64,
    pub mean_in: f64,
    pub max_in: f64,
    pub min_out: f64,
    pub mean_out: f64,
    pub max_out: f64,
}

/// Support separation of a hidden layer: how much larger the weights on the
/// task support are than those off it.
#[derive(Debug, Clone)]
pub struct WeightGapReport {
    pub d: u32,
    pub k: u32,
    pub neurons: Vec<NeuronGap>,
    /// Smallest on-support magnitude over all neurons.
    pub min_in: f64,
    /// Mean on-support magnitude over all neurons and coordinates.
    pub mean_in: f64,
    /// Largest off-support magnitude over all neurons.
    pub max_out: f64,
    pub mean_out: f64,
    /// `min_in / max_out`; infinite when every off-support weight is zero.
    pub gap_ratio: f64,
    /// The on-support magnitude `1/(2k)` that one decayed expected hinge step
    /// from a symmetric initialization produces.
    pub predicted_in: f64,
    /// The matching off-support magnitude `|zeta_{k+1} / zeta_{k-1}| / (2k)`;
    /// absent when the degree-(k-1) majority coefficient vanishes.
    pub predicted_out: Option<f64>,
    /// Fraction of neurons whose k largest-magnitude coordinates are exactly
    /// the task support.
    pub support_recovery: f64,
}

/// Fraction of hidden rows whose top-k coordinates by |weight| recover the
/// task support exactly. Ties in magnitude are broken toward the lower
/// coordinate index, deterministically.
pub fn support_recovery_score(net: &TwoLayerMlp, task: &ParityTask) -> Result<f64> {
    if net.d() != task.d() {
        return Err(Error::Shape("network and task dimensions differ".into()));
    }
    let d = net.d() as usize;
    let k = task.k() as usize;
    let support = task.support_mask();
    let mut hits = 0usize;
    let mut order: Vec<usize> = Vec::with_capacity(d);
    for i in 0..net.m() {
        let row = net.weight_row(i);
        order.clear();
        order.extend(0..d);
        order.sort_by(|&p, &q| {
            row[q]
                .abs()
                .partial_cmp(&row[p].abs())
                .expect("weights must be finite")
                .then(p.cmp(&q))
        });
        let mut picked = 0u128;
        for &j in &order[..k] {
            picked |= 1 << j;
        }
        if picked == support {
            hits += 1;
        }
    }
    Ok(hits as f64 / net.m() as f64)
}

/// Summarize the hidden layer's support separation.
pub fn weight_gap_report(net: &TwoLayerMlp, task: &ParityTask) -> Result<WeightGapReport> {
    if net.d() != task.d() {
        return Err(Error::Shape("network and task dimensions differ".into()));
    }
    let d = net.d();
    let k = task.k();
    let dim = d as usize;
    let support = task.support_mask();
    let mut neurons = Vec::with_capacity(net.m());
    let (mut sum_in, mut sum_out) = (0.0, 0.0);
    let (mut min_in, mut max_out) = (f64::INFINITY, 0.0f64);
    for i in 0..net.m() {
        let row = net.weight_row(i);
        let mut n = NeuronGap {
            min_in: f64::INFINITY,
            mean_in: 0.0,
            max_in: 0.0,
            min_out: f64::INFINITY,
            mean_out: 0.0,
            max_out: 0.0,
        };
        for (j, &w) in row.iter().enumerate().take(dim) {
            let mag = w.abs();
            if support >> j & 1 == 1 {
                n.min_in = n.min_in.min(mag);
                n.max_in = n.max_in.max(mag);
                n.mean_in += mag;
            } else {
                n.min_out = n.min_out.min(mag);
                n.max_out = n.max_out.max(mag);
                n.mean_out += mag;
            }
        }
        n.mean_in /= f64::from(k);
        n.mean_out /= f64::from(d - k);
        sum_in += n.mean_in;
        sum_out += n.mean_out;
        min_in = min_in.min(n.min_in);
        max_out = max_out.max(n.max_out);
        neurons.push(n);
    }
    let m = net.m() as f64;
    let predicted_in = 1.0 / (2.0 * f64::from(k));
    let zeta_lo = majority_zeta_closed(d, k - 1).unwrap_or(0.0);
    let predicted_out = if zeta_lo == 0.0 {
        None
    } else {
        Some((majority_zeta_closed(d, k + 1)? / zeta_lo).abs() * predicted_in)
    };
    Ok(WeightGapReport {
        d,
        k,
        support_recovery: support_recovery_score(net, task)?,
        neurons,
        min_in,
        mean_in: sum_in / m,
        max_out,
        mean_out: sum_out / m,
        gap_ratio: if max_out == 0.0 { f64::INFINITY } else { min_in / max_out },
        predicted_in,
        predicted_out,
    })
}

impl WeightGapReport {
    /// One CSV row per neuron with its six magnitude statistics.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["neuron", "min_in", "mean_in", "max_in", "min_out", "mean_out", "max_out"])
            .map_err(io_err)?;
        for (i, n) in self.neurons.iter().enumerate() {
            w.write_record([
                i.to_string(),
                n.min_in.to_string(),
                n.mean_in.to_string(),
                n.max_in.to_string(),
                n.min_out.to_string(),
                n.mean_out.to_string(),
                n.max_out.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

// ---------------------------------------------------------------------------
// Correlation report
// ---------------------------------------------------------------------------

/// Correlations behind the distillation signal.
///
/// For a mirrored teacher, `s[i][j] = E[phi_i(x) * x_j]` measures how the odd
/// part of hidden pair i co-varies with coordinate j; `c[l][j] = E[(A
/// h(x))_l * x_j]` is the same for the projected targets the student actually
/// sees. Because the projection is column-mirrored, `c = A_fold s` exactly,
/// and the entry scale predicted from `s` is `sigma = rms(s) / sqrt(2 m_t)`.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub d: u32,
    pub k: u32,
    /// Task support as a bit mask (bit j set when coordinate j+1 is in it).
    pub support: u128,
    /// Teacher pair count (m_t / 2).
    pub pairs: usize,
    /// Projection rows.
    pub rows: usize,
    /// pairs x d, row-major.
    pub s: Vec<f64>,
    /// rows x d, row-major.
    pub c: Vec<f64>,
    /// First-half teacher biases, one per pair.
    pub biases: Vec<f64>,
    pub rms_s_in: f64,
    pub rms_s_out: f64,
    /// Predicted on/off-support standard deviation of `c` entries.
    pub sigma_in: f64,
    pub sigma_out: f64,
    /// Empirical standard deviation of `c` entries by side.
    pub std_c_in: f64,
    pub std_c_out: f64,
    pub max_abs_c_in: f64,
    pub max_abs_c_out: f64,
}

enum PhiSource<'a> {
    Packed(PackedHidden),
    Dense(&'a TwoLayerMlp),
}

impl PhiSource<'_> {
    fn phi_into(&self, x: u128, out: &mut [f64]) {
        match self {
            Self::Packed(p) => p.phi_diff_into(x, out),
            Self::Dense(net) => {
                let h = net.hidden(x);
                let half = out.len();
                for i in 0..half {
                    out[i] = h[i] - h[i + half];
                }
            }
        }
    }
}

fn correlation_core(
    teacher: &TwoLayerMlp,
    projection: &SymmetricProjection,
    task: &ParityTask,
    points: impl Iterator<Item = u128>,
    n: u64,
) -> Result<CorrelationReport> {
    if teacher.d() != task.d() {
        return Err(Error::Shape("teacher and task dimensions differ".into()));
    }
    if !teacher.mirrored_hidden() {
        return Err(Error::Argument(
            "correlation report needs a mirrored teacher hidden layer".into(),
        ));
    }
    if projection.cols() != teacher.m() {
        return Err(Error::Shape(format!(
            "projection has {} columns, teacher width is {}",
            projection.cols(),
            teacher.m()
        )));
    }
    if n == 0 {
        return Err(Error::Argument("correlation report needs at least one point".into()));
    }
    let d = task.d();
    let dim = d as usize;
    let k = task.k();
    let half = teacher.m() / 2;
    let source = match PackedHidden::detect(teacher, task.support_mask()) {
        Some(p) => PhiSource::Packed(p),
        None => PhiSource::Dense(teacher),
    };
    let mut s = vec![0.0; half * dim];
    let mut phi = vec![0.0; half];
    for x in points {
        source.phi_into(x, &mut phi);
        for (i, &p) in phi.iter().enumerate() {
            let row = &mut s[i * dim..(i + 1) * dim];
            for (j, sj) in row.iter_mut().enumerate() {
                *sj += if x >> j & 1 == 1 { p } else { -p };
            }
        }
    }
    let inv = 1.0 / n as f64;
    s.iter_mut().for_each(|v| *v *= inv);

    // project: c[l][j] = sum_i A[l][i] s[i][j] over first-half columns
    let rows = projection.rows();
    let mut c = vec![0.0; rows * dim];
    for l in 0..rows {
        let arow = &projection.row(l)[..half];
        let crow = &mut c[l * dim..(l + 1) * dim];
        for (i, &a) in arow.iter().enumerate() {
            let srow = &s[i * dim..(i + 1) * dim];
            for (j, cj) in crow.iter_mut().enumerate() {
                *cj += a * srow[j];
            }
        }
    }

    let support = task.support_mask();
    let split = |mat: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for (idx, &v) in mat.iter().enumerate() {
            if support >> (idx % dim) & 1 == 1 {
                inside.push(v);
            } else {
                outside.push(v);
            }
        }
        (inside, outside)
    };
    let (s_in, s_out) = split(&s);
    let (c_in, c_out) = split(&c);
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let sigma = |r: f64| r / (2.0 * teacher.m() as f64).sqrt();
    Ok(CorrelationReport {
        d,
        k,
        support,
        pairs: half,
        rows,
        biases: teacher.biases()[..half].to_vec(),
        rms_s_in: rms(&s_in),
        rms_s_out: rms(&s_out),
        sigma_in: sigma(rms(&s_in)),
        sigma_out: sigma(rms(&s_out)),
        std_c_in: std_dev(&c_in),
        std_c_out: std_dev(&c_out),
        max_abs_c_in: max_abs(&c_in),
        max_abs_c_out: max_abs(&c_out),
        s,
        c,
    })
}

/// Exact correlation report over the full cube (`d <= MAX_EXACT_DIM`).
pub fn correlation_report_exact(
    teacher: &TwoLayerMlp,
    projection: &SymmetricProjection,
    task: &ParityTask,
) -> Result<CorrelationReport> {
    let d = task.d();
    if d > MAX_EXACT_DIM {
        return Err(Error::Capacity(format!(
            "exact correlation report needs d <= {MAX_EXACT_DIM}, got {d}"
        )));
    }
    let n = 1u64 << d;
    correlation_core(teacher, projection, task, 0..1u128 << d, n)
}

/// Monte Carlo correlation report from `n` fresh points.
pub fn correlation_report_sampled(
    teacher: &TwoLayerMlp,
    projection: &SymmetricProjection,
    task: &ParityTask,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> Result<CorrelationReport> {
    let d = task.d();
    let points = (0..n).map(|_| crate::parity_data::sample_point(d, rng));
    correlation_core(teacher, projection, task, points, n)
}

impl CorrelationReport {
    /// Histogram of the per-pair correlations `s`, split by support side.
    pub fn histogram_s(&self, bins: usize) -> SignedHistogram {
        self.histogram_of(&self.s, bins)
    }

    /// Histogram of the projected-target correlations `c`, split by side.
    pub fn histogram_c(&self, bins: usize) -> SignedHistogram {
        self.histogram_of(&self.c, bins)
    }

    fn histogram_of(&self, mat: &[f64], bins: usize) -> SignedHistogram {
        let dim = self.d as usize;
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for (idx, &v) in mat.iter().enumerate() {
            if self.support >> (idx % dim) & 1 == 1 {
                inside.push(v);
            } else {
                outside.push(v);
            }
        }
        signed_histogram(&inside, &outside, bins)
    }
}

// ---------------------------------------------------------------------------
// Signed histograms
// ---------------------------------------------------------------------------

/// Fixed-width histogram over a symmetric range, with separate counts for
/// on-support and off-support values.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedHistogram {
    /// bins + 1 edges, symmetric around zero.
    pub edges: Vec<f64>,
    pub count_in: Vec<u64>,
    pub count_out: Vec<u64>,
}

/// Histogram both value sets over `[-w, w]` where `w` is the largest
/// magnitude present (1.0 when all values are zero).
pub fn signed_histogram(in_vals: &[f64], out_vals: &[f64], bins: usize) -> SignedHistogram {
    assert!(bins >= 1);
    let w = in_vals
        .iter()
        .chain(out_vals)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let w = if w == 0.0 { 1.0 } else { w };
    let edges: Vec<f64> = (0..=bins)
        .map(|b| -w + 2.0 * w * b as f64 / bins as f64)
        .collect();
    let mut count_in = vec![0u64; bins];
    let mut count_out = vec![0u64; bins];
    let index = |v: f64| -> usize {
        let t = (v + w) / (2.0 * w) * bins as f64;
        (t as usize).min(bins - 1)
    };
    for &v in in_vals {
        count_in[index(v)] += 1;
    }
    for &v in out_vals {
        count_out[index(v)] += 1;
    }
    SignedHistogram { edges, count_in, count_out }
}

impl SignedHistogram {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_left", "bin_right", "count_in_support", "count_out_support"])
            .map_err(io_err)?;
        for b in 0..self.count_in.len() {
            w.write_record([
                self.edges[b].to_string(),
                self.edges[b + 1].to_string(),
                self.count_in[b].to_string(),
                self.count_out[b].to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Gradient decomposition
// ---------------------------------------------------------------------------

/// Dual-route check of the distillation gradient at a hypercube student
/// initialization.
///
/// Route one evaluates the alignment gradient directly. Route two uses the
/// identity `1{w.x + b > 0} = (1 + Maj(w o x)) / 2`, exact at odd d where no
/// pre-activation can tie, to split the gradient into a linear term
/// `E[t_i(x) x_j]` and a majority term `E[t_i(x) Maj(w_i o x) x_j]`, with
/// `total = -(linear + majority) / 2`. At even d tied pre-activations break
/// the identity on the tie slice and `max_residual` reports the gap.
#[derive(Debug, Clone)]
pub struct GradientDecomposition {
    /// m_s x d: the alignment gradient, route one.
    pub total: Vec<f64>,
    /// m_s x d: `E[t_i(x) x_j]`.
    pub linear_term: Vec<f64>,
    /// m_s x d: `E[t_i(x) Maj(w_i o x) x_j]`.
    pub majority_term: Vec<f64>,
    /// `max_ij |total_ij + (linear_ij + majority_ij) / 2|`.
    pub max_residual: f64,
}

pub fn gradient_decomposition_exact(
    student: &TwoLayerMlp,
    teacher: &TwoLayerMlp,
    projection: &SymmetricProjection,
    task: &ParityTask,
) -> Result<GradientDecomposition> {
    let d = task.d();
    if d > MAX_EXACT_DIM {
        return Err(Error::Capacity(format!(
            "exact decomposition needs d <= {MAX_EXACT_DIM}, got {d}"
        )));
    }
    if student.d() != d || teacher.d() != d {
        return Err(Error::Shape("network and task dimensions differ".into()));
    }
    if projection.cols() != teacher.m() || projection.rows() != student.m() {
        return Err(Error::Shape("projection shape does not match the networks".into()));
    }
    let dim = d as usize;
    let m_s = student.m();
    // the majority identity applies to sign-pattern rows only
    let sign_masks: Vec<u64> = (0..m_s)
        .map(|i| {
            let row = student.weight_row(i);
            let mut mask = 0u64;
            for (j, &w) in row.iter().enumerate() {
                if w == 1.0 {
                    mask |= 1 << j;
                } else if w != -1.0 {
                    return Err(Error::Argument(
                        "decomposition requires hypercube student weights".into(),
                    ));
                }
            }
            Ok(mask)
        })
        .collect::<Result<_>>()?;

    let xs: Vec<u128> = (0..1u128 << d).collect();
    let n = xs.len() as f64;
    let full = dim_mask(d) as u64;
    let mut targets = vec![0.0; xs.len() * m_s];
    let tpath = HiddenPath::detect(teacher, task.support_mask());
    let mut h = vec![0.0; teacher.m()];
    let mut linear = vec![0.0; m_s * dim];
    let mut majority = vec![0.0; m_s * dim];
    for (r, &x) in xs.iter().enumerate() {
        tpath.hidden_into(teacher, x, &mut h);
        projection.apply_into(&h, &mut targets[r * m_s..(r + 1) * m_s]);
        let t = &targets[r * m_s..(r + 1) * m_s];
        let xbits = x as u64;
        for i in 0..m_s {
            let agree = !(xbits ^ sign_masks[i]) & full;
            let maj = majority_mask(agree, d);
            let (lrow, mrow) = (
                &mut linear[i * dim..(i + 1) * dim],
                &mut majority[i * dim..(i + 1) * dim],
            );
            for j in 0..dim {
                let xj = if x >> j & 1 == 1 { 1.0 } else { -1.0 };
                lrow[j] += t[i] * xj;
                mrow[j] += t[i] * maj * xj;
            }
        }
    }
    linear.iter_mut().for_each(|v| *v /= n);
    majority.iter_mut().for_each(|v| *v /= n);
    let total = student.grad_hidden_alignment(&xs, &targets);
    let max_residual = total
        .iter()
        .zip(linear.iter().zip(&majority))
        .map(|(t, (l, m))| (t + (l + m) / 2.0).abs())
        .fold(0.0f64, f64::max);
    Ok(GradientDecomposition { total, linear_term: linear, majority_term: majority, max_residual })
}

// ---------------------------------------------------------------------------
// Concentration curves
// ---------------------------------------------------------------------------

/// Root-mean-square deviation of a batch statistic from its reference value,
/// as a function of batch size, with the fitted log-log slope. A statistic
/// concentrating like `1/sqrt(B)` fits slope -1/2.
#[derive(Debug, Clone)]
pub struct ConcentrationCurve {
    pub batch_sizes: Vec<u64>,
    /// RMS deviation from the reference at each batch size.
    pub deviations: Vec<f64>,
    /// Least-squares slope of log2(deviation) against log2(batch size);
    /// forced to 0 when the statistic is degenerate.
    pub slope: f64,
    /// True when some deviation was exactly zero (constant statistic), which
    /// makes the log-log fit undefined.
    pub degenerate: bool,
}

pub fn concentration_curve(
    task: &ParityTask,
    mut statistic: impl FnMut(&[LabeledSample]) -> f64,
    reference: f64,
    batch_sizes: &[u64],
    repeats: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ConcentrationCurve> {
    if batch_sizes.is_empty() || repeats == 0 {
        return Err(Error::Argument("need at least one batch size and one repeat".into()));
    }
    if batch_sizes.iter().any(|&b| b == 0) {
        return Err(Error::Argument("batch sizes must be positive".into()));
    }
    let mut deviations = Vec::with_capacity(batch_sizes.len());
    for &b in batch_sizes {
        let mut acc = 0.0;
        for _ in 0..repeats {
            let batch = crate::parity_data::sample_batch(task, b as usize, rng)?;
            let dev = statistic(&batch) - reference;
            acc += dev * dev;
        }
        deviations.push((acc / repeats as f64).sqrt());
    }
    let degenerate = deviations.iter().any(|&v| v == 0.0);
    let slope = if degenerate || batch_sizes.len() < 2 {
        0.0
    } else {
        let xs: Vec<f64> = batch_sizes.iter().map(|&b| (b as f64).log2()).collect();
        let ys: Vec<f64> = deviations.iter().map(|&v| v.log2()).collect();
        ls_slope(&xs, &ys)
    };
    Ok(ConcentrationCurve { batch_sizes: batch_sizes.to_vec(), deviations, slope, degenerate })
}

impl ConcentrationCurve {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["batch_size", "rms_deviation"]).map_err(io_err)?;
        for (b, dev) in self.batch_sizes.iter().zip(&self.deviations) {
            w.write_record([b.to_string(), dev.to_string()]).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
