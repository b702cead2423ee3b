//! Two-layer ReLU networks with sign-symmetric initialization.
//!
//! The architecture is `f(x) = sum_i a_i * relu(w_i . x + b_i)` with hidden
//! width m over d inputs. Initialization draws hypercube weight rows, grid
//! biases, and +/-(1/m) outer weights for the first half of the neurons, then
//! mirrors them (`w -> -w`, `b` kept, `a -> -a`) so the network is an odd
//! function at initialization.
//!
//! Subgradient conventions used throughout: `relu'(0) = 0` (activity tests
//! are strict `> 0`) and the hinge subgradient at margin exactly 1 is 0.

use crate::error::{Error, Result};
use crate::parity_data::{sample_point, LabeledSample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// hinge(z) = max(0, 1 - z).
#[inline]
pub fn hinge(z: f64) -> f64 {
    (1.0 - z).max(0.0)
}

/// Odd fold of a ReLU pair: phi_b(t) = relu(t + b) - relu(-t + b).
///
/// Piecewise linear and odd in t, with slopes in {0, 1, 2} depending on how
/// t compares against |b|.
#[inline]
pub fn phi(b: f64, t: f64) -> f64 {
    (t + b).max(0.0) - (b - t).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerMlp {
    d: u32,
    m: usize,
    /// Hidden weights, m x d row-major.
    w: Vec<f64>,
    /// Hidden biases, length m.
    b: Vec<f64>,
    /// Outer weights, length m.
    a: Vec<f64>,
}

/// Gradient with respect to every parameter of a [`TwoLayerMlp`], in the
/// same layouts as the network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGradient {
    /// Hidden-weight gradient, m x d row-major.
    pub w: Vec<f64>,
    /// Bias gradient, length m.
    pub b: Vec<f64>,
    /// Outer-weight gradient, length m.
    pub a: Vec<f64>,
}

impl FullGradient {
    fn zeros(m: usize, d: usize) -> Self {
        Self { w: vec![0.0; m * d], b: vec![0.0; m], a: vec![0.0; m] }
    }

    fn scale(&mut self, c: f64) {
        self.w.iter_mut().for_each(|v| *v *= c);
        self.b.iter_mut().for_each(|v| *v *= c);
        self.a.iter_mut().for_each(|v| *v *= c);
    }
}

impl TwoLayerMlp {
    /// Build from explicit parameters (shape-checked).
    pub fn from_parts(d: u32, w: Vec<f64>, b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Shape("input dimension must be positive".into()));
        }
        let m = b.len();
        if m == 0 || a.len() != m || w.len() != m * d as usize {
            return Err(Error::Shape(format!(
                "inconsistent shapes: |w| = {}, |b| = {}, |a| = {}, d = {d}",
                w.len(),
                b.len(),
                a.len()
            )));
        }
        Ok(Self { d, m, w, b, a })
    }

    /// Sign-symmetric initialization for a sparsity-k task.
    ///
    /// For i < m/2: `w_i ~ U({+/-1}^d)`, `b_i` uniform on the grid
    /// `{-1 + 1/k, ..., -1/k, 0, 1/k, ..., 1 - 1/k}` (2k-1 values), and
    /// `a_i ~ U({+/-1/m})`. Neuron i + m/2 mirrors neuron i with `w` and `a`
    /// negated and the same bias, making the network odd.
    pub fn symmetric_init(d: u32, k: u32, m: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if d == 0 || d > crate::parity_data::MAX_PACKED_DIM {
            return Err(Error::Argument(format!("dimension {d} out of range")));
        }
        if k == 0 {
            return Err(Error::Argument("sparsity must be positive".into()));
        }
        if m == 0 || m % 2 != 0 {
            return Err(Error::Argument(format!("width {m} must be even and positive")));
        }
        let half = m / 2;
        let dim = d as usize;
        let mut w = vec![0.0; m * dim];
        let mut b = vec![0.0; m];
        let mut a = vec![0.0; m];
        let grid = i64::from(k) - 1;
        for i in 0..half {
            let mask = sample_point(d, rng);
            for j in 0..dim {
                w[i * dim + j] = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
            }
            b[i] = rng.random_range(-grid..=grid) as f64 / f64::from(k);
            a[i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 } / m as f64;
            for j in 0..dim {
                w[(i + half) * dim + j] = -w[i * dim + j];
            }
            b[i + half] = b[i];
            a[i + half] = -a[i];
        }
        Self::from_parts(d, w, b, a)
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.d as usize..(i + 1) * self.d as usize]
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }

    pub fn outer(&self) -> &[f64] {
        &self.a
    }

    pub fn outer_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    /// Do the halves mirror exactly in the hidden layer (w negated, b kept)?
    pub fn mirrored_hidden(&self) -> bool {
        if self.m % 2 != 0 {
            return false;
        }
        let half = self.m / 2;
        let d = self.d as usize;
        (0..half).all(|i| {
            self.b[i] == self.b[i + half]
                && (0..d).all(|j| self.w[(i + half) * d + j] == -self.w[i * d + j])
        })
    }

    /// Fully mirrored: hidden mirroring plus negated outer weights.
    pub fn mirrored(&self) -> bool {
        if !self.mirrored_hidden() {
            return false;
        }
        let half = self.m / 2;
        (0..half).all(|i| self.a[i + half] == -self.a[i])
    }

    /// Inner product of weight row i with a packed point.
    #[inline]
    pub fn dot_mask(&self, i: usize, x: u128) -> f64 {
        let d = self.d as usize;
        let row = &self.w[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for (j, wj) in row.iter().enumerate() {
            acc += if x >> j & 1 == 1 { *wj } else { -*wj };
        }
        acc
    }

    /// Pre-activations w_i . x + b_i for a packed point.
    pub fn pre_activations(&self, x: u128) -> Vec<f64> {
        (0..self.m).map(|i| self.dot_mask(i, x) + self.b[i]).collect()
    }

    /// Hidden activations relu(w_i . x + b_i) for a packed point.
    pub fn hidden(&self, x: u128) -> Vec<f64> {
        (0..self.m)
            .map(|i| (self.dot_mask(i, x) + self.b[i]).max(0.0))
            .collect()
    }

    /// Network output for a packed point.
    pub fn forward(&self, x: u128) -> f64 {
        (0..self.m)
            .map(|i| self.a[i] * (self.dot_mask(i, x) + self.b[i]).max(0.0))
            .sum()
    }

    /// Network output from explicit coordinates.
    pub fn forward_coords(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d as usize);
        let d = self.d as usize;
        (0..self.m)
            .map(|i| {
                let pre: f64 = self.w[i * d..(i + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(wj, xj)| wj * xj)
                    .sum::<f64>()
                    + self.b[i];
                self.a[i] * pre.max(0.0)
            })
            .sum()
    }

    /// Mean hinge loss of y * f(x) over a batch.
    pub fn hinge_loss(&self, samples: &[LabeledSample]) -> f64 {
        assert!(!samples.is_empty());
        samples
            .iter()
            .map(|s| hinge(s.y * self.forward(s.x)))
            .sum::<f64>()
            / samples.len() as f64
    }

    /// Fraction of the batch where sign(f(x)) matches the label
    /// (sign(0) counts as +1).
    pub fn accuracy(&self, samples: &[LabeledSample]) -> f64 {
        assert!(!samples.is_empty());
        let hits = samples
            .iter()
            .filter(|s| {
                let pred = if self.forward(s.x) >= 0.0 { 1.0 } else { -1.0 };
                pred == s.y
            })
            .count();
        hits as f64 / samples.len() as f64
    }

    /// Batch gradient of the mean hinge loss with respect to the hidden
    /// weights, returned as an m x d row-major matrix. Biases are frozen by
    /// convention and have no gradient here.
    pub fn grad_hidden_hinge(&self, samples: &[LabeledSample]) -> Vec<f64> {
        assert!(!samples.is_empty());
        let d = self.d as usize;
        let mut g = vec![0.0; self.m * d];
        for s in samples {
            let pre = self.pre_activations(s.x);
            let out: f64 = (0..self.m).map(|i| self.a[i] * pre[i].max(0.0)).sum();
            if s.y * out < 1.0 {
                for i in 0..self.m {
                    if pre[i] > 0.0 {
                        let c = -s.y * self.a[i];
                        let row = &mut g[i * d..(i + 1) * d];
                        for (j, gj) in row.iter_mut().enumerate() {
                            *gj += if s.x >> j & 1 == 1 { c } else { -c };
                        }
                    }
                }
            }
        }
        let inv = 1.0 / samples.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Batch gradient of the mean hinge loss with respect to the outer
    /// weights, returned as a length-m vector.
    pub fn grad_outer_hinge(&self, samples: &[LabeledSample]) -> Vec<f64> {
        assert!(!samples.is_empty());
        let mut g = vec![0.0; self.m];
        for s in samples {
            let pre = self.pre_activations(s.x);
            let out: f64 = (0..self.m).map(|i| self.a[i] * pre[i].max(0.0)).sum();
            if s.y * out < 1.0 {
                for i in 0..self.m {
                    g[i] -= s.y * pre[i].max(0.0);
                }
            }
        }
        let inv = 1.0 / samples.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Mean of the alignment loss `-<hidden(x), target(x)>` over a batch.
    /// `targets` is sample-major with m entries per point.
    pub fn alignment_loss(&self, xs: &[u128], targets: &[f64]) -> f64 {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len() * self.m);
        let mut acc = 0.0;
        for (s, x) in xs.iter().enumerate() {
            let t = &targets[s * self.m..(s + 1) * self.m];
            for i in 0..self.m {
                acc -= t[i] * (self.dot_mask(i, *x) + self.b[i]).max(0.0);
            }
        }
        acc / xs.len() as f64
    }

    /// Batch gradient of the alignment loss with respect to the hidden
    /// weights: row i accumulates `-target_i(x) * 1{pre_i > 0} * x`.
    pub fn grad_hidden_alignment(&self, xs: &[u128], targets: &[f64]) -> Vec<f64> {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len() * self.m);
        let d = self.d as usize;
        let mut g = vec![0.0; self.m * d];
        for (s, x) in xs.iter().enumerate() {
            let t = &targets[s * self.m..(s + 1) * self.m];
            for i in 0..self.m {
                if self.dot_mask(i, *x) + self.b[i] > 0.0 {
                    let c = -t[i];
                    let row = &mut g[i * d..(i + 1) * d];
                    for (j, gj) in row.iter_mut().enumerate() {
                        *gj += if x >> j & 1 == 1 { c } else { -c };
                    }
                }
            }
        }
        let inv = 1.0 / xs.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Mean squared error between the hidden activations and per-neuron
    /// targets (sample-major, m entries per point).
    pub fn hidden_mse_loss(&self, xs: &[u128], targets: &[f64]) -> f64 {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len() * self.m);
        let mut acc = 0.0;
        for (s, x) in xs.iter().enumerate() {
            let t = &targets[s * self.m..(s + 1) * self.m];
            for i in 0..self.m {
                let r = (self.dot_mask(i, *x) + self.b[i]).max(0.0) - t[i];
                acc += r * r;
            }
        }
        acc / xs.len() as f64
    }

    /// Batch gradient of [`hidden_mse_loss`](Self::hidden_mse_loss) with
    /// respect to the hidden weights: row i accumulates
    /// `2 (hidden_i(x) - target_i(x)) * 1{pre_i > 0} * x`.
    pub fn grad_hidden_mse_targets(&self, xs: &[u128], targets: &[f64]) -> Vec<f64> {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len() * self.m);
        let d = self.d as usize;
        let mut g = vec![0.0; self.m * d];
        for (s, x) in xs.iter().enumerate() {
            let t = &targets[s * self.m..(s + 1) * self.m];
            for i in 0..self.m {
                let pre = self.dot_mask(i, *x) + self.b[i];
                if pre > 0.0 {
                    let c = 2.0 * (pre - t[i]);
                    let row = &mut g[i * d..(i + 1) * d];
                    for (j, gj) in row.iter_mut().enumerate() {
                        *gj += if x >> j & 1 == 1 { c } else { -c };
                    }
                }
            }
        }
        let inv = 1.0 / xs.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Mean squared error between the network output and scalar targets.
    pub fn output_mse_loss(&self, xs: &[u128], targets: &[f64]) -> f64 {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len());
        let acc: f64 = xs
            .iter()
            .zip(targets)
            .map(|(&x, &t)| {
                let r = self.forward(x) - t;
                r * r
            })
            .sum();
        acc / xs.len() as f64
    }

    /// Batch gradient of [`output_mse_loss`](Self::output_mse_loss) with
    /// respect to the hidden weights: row i accumulates
    /// `2 (f(x) - target(x)) * a_i * 1{pre_i > 0} * x`.
    pub fn grad_hidden_output_mse(&self, xs: &[u128], targets: &[f64]) -> Vec<f64> {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len());
        let d = self.d as usize;
        let mut g = vec![0.0; self.m * d];
        for (&x, &t) in xs.iter().zip(targets) {
            let pre = self.pre_activations(x);
            let out: f64 = (0..self.m).map(|i| self.a[i] * pre[i].max(0.0)).sum();
            let r2 = 2.0 * (out - t);
            for i in 0..self.m {
                if pre[i] > 0.0 {
                    let c = r2 * self.a[i];
                    let row = &mut g[i * d..(i + 1) * d];
                    for (j, gj) in row.iter_mut().enumerate() {
                        *gj += if x >> j & 1 == 1 { c } else { -c };
                    }
                }
            }
        }
        let inv = 1.0 / xs.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Batch-mean gradient of the hinge loss with respect to every
    /// parameter: hidden weights, biases, and outer weights jointly.
    pub fn grad_full_hinge(&self, samples: &[LabeledSample]) -> FullGradient {
        assert!(!samples.is_empty());
        let d = self.d as usize;
        let mut g = FullGradient::zeros(self.m, d);
        for s in samples {
            let pre = self.pre_activations(s.x);
            let out: f64 = (0..self.m).map(|i| self.a[i] * pre[i].max(0.0)).sum();
            if s.y * out < 1.0 {
                for i in 0..self.m {
                    g.a[i] -= s.y * pre[i].max(0.0);
                    if pre[i] > 0.0 {
                        let c = -s.y * self.a[i];
                        g.b[i] += c;
                        let row = &mut g.w[i * d..(i + 1) * d];
                        for (j, gj) in row.iter_mut().enumerate() {
                            *gj += if s.x >> j & 1 == 1 { c } else { -c };
                        }
                    }
                }
            }
        }
        g.scale(1.0 / samples.len() as f64);
        g
    }

    /// Batch-mean gradient of [`output_mse_loss`](Self::output_mse_loss)
    /// with respect to every parameter.
    pub fn grad_full_output_mse(&self, xs: &[u128], targets: &[f64]) -> FullGradient {
        assert!(!xs.is_empty());
        assert_eq!(targets.len(), xs.len());
        let d = self.d as usize;
        let mut g = FullGradient::zeros(self.m, d);
        for (&x, &t) in xs.iter().zip(targets) {
            let pre = self.pre_activations(x);
            let out: f64 = (0..self.m).map(|i| self.a[i] * pre[i].max(0.0)).sum();
            let r2 = 2.0 * (out - t);
            for i in 0..self.m {
                g.a[i] += r2 * pre[i].max(0.0);
                if pre[i] > 0.0 {
                    let c = r2 * self.a[i];
                    g.b[i] += c;
                    let row = &mut g.w[i * d..(i + 1) * d];
                    for (j, gj) in row.iter_mut().enumerate() {
                        *gj += if x >> j & 1 == 1 { c } else { -c };
                    }
                }
            }
        }
        g.scale(1.0 / xs.len() as f64);
        g
    }

    /// One plain gradient step on every parameter.
    pub fn full_step(&mut self, g: &FullGradient, eta: f64) {
        assert_eq!(g.w.len(), self.w.len());
        assert_eq!(g.b.len(), self.b.len());
        assert_eq!(g.a.len(), self.a.len());
        for (v, gv) in self.w.iter_mut().zip(&g.w) {
            *v -= eta * gv;
        }
        for (v, gv) in self.b.iter_mut().zip(&g.b) {
            *v -= eta * gv;
        }
        for (v, gv) in self.a.iter_mut().zip(&g.a) {
            *v -= eta * gv;
        }
    }

    /// One weight-decayed gradient step on the hidden weights:
    /// `w <- (1 - 2 eta lambda) w - eta g`.
    ///
    /// When `lambda = 1/(2 eta)` the shrink factor is 0 and the update is
    /// taken literally as `w = -eta g`, so the proportionality between the
    /// post-step weights and the gradient is exact rather than subject to a
    /// rounded near-zero shrink.
    pub fn hidden_decay_step(&mut self, g: &[f64], eta: f64, lambda: f64) {
        assert_eq!(g.len(), self.w.len());
        let shrink = 1.0 - 2.0 * eta * lambda;
        if shrink.abs() < 1e-12 {
            for (wv, gv) in self.w.iter_mut().zip(g) {
                *wv = -eta * gv;
            }
        } else {
            for (wv, gv) in self.w.iter_mut().zip(g) {
                *wv = shrink * *wv - eta * gv;
            }
        }
    }

    /// One plain gradient step on the outer weights: `a <- a - eta g`.
    pub fn outer_step(&mut self, g: &[f64], eta: f64) {
        assert_eq!(g.len(), self.a.len());
        for (av, gv) in self.a.iter_mut().zip(g) {
            *av -= eta * gv;
        }
    }

    /// Overwrite the second hidden half with the exact mirror of the first
    /// (w negated, b copied). Outer weights are left untouched.
    pub fn mirror_hidden_from_first_half(&mut self) {
        assert!(self.m % 2 == 0, "mirroring requires even width");
        let half = self.m / 2;
        let d = self.d as usize;
        for i in 0..half {
            for j in 0..d {
                self.w[(i + half) * d + j] = -self.w[i * d + j];
            }
            self.b[i + half] = self.b[i];
        }
    }

    /// Serialize to a line-oriented text file that round-trips f64 values
    /// exactly (17 significant digits).
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "two-layer-mlp 1")?;
        writeln!(out, "{} {}", self.m, self.d)?;
        let d = self.d as usize;
        for i in 0..self.m {
            let row: Vec<String> = self.w[i * d..(i + 1) * d]
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        let line: Vec<String> = self.b.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
        let line: Vec<String> = self.a.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
        out.flush()?;
        Ok(())
    }

    /// Load a checkpoint written by [`save_checkpoint`](Self::save_checkpoint).
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Parse(format!("checkpoint truncated before {what}")))
        };
        let header = next("header")?;
        if header.trim() != "two-layer-mlp 1" {
            return Err(Error::Parse(format!("unrecognized checkpoint header {header:?}")));
        }
        let shape = next("shape line")?;
        let mut it = shape.split_whitespace();
        let m: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("bad width in shape line".into()))?;
        let d: u32 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("bad dimension in shape line".into()))?;
        if it.next().is_some() {
            return Err(Error::Parse("trailing tokens in shape line".into()));
        }
        let parse_row = |line: String, n: usize, what: &str| -> Result<Vec<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|e| Error::Parse(format!("bad float in {what}: {e}")))?;
            if vals.len() != n {
                return Err(Error::Parse(format!(
                    "{what} has {} values, expected {n}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let mut w = Vec::with_capacity(m * d as usize);
        for i in 0..m {
            w.extend(parse_row(next("weight row")?, d as usize, &format!("weight row {i}"))?);
        }
        let b = parse_row(next("bias line")?, m, "bias line")?;
        let a = parse_row(next("outer line")?, m, "outer line")?;
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after checkpoint body".into()));
        }
        Self::from_parts(d, w, b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolean_fourier::majority_mask;
    use crate::parity_data::{dim_mask, sample_batch, ParityTask};
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_continuous(d: u32, m: usize, rng: &mut ChaCha8Rng) -> TwoLayerMlp {
        let w: Vec<f64> = (0..m * d as usize).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 0.8 - 0.4).collect();
        let a: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        TwoLayerMlp::from_parts(d, w, b, a).unwrap()
    }

    #[test]
    fn init_layout_and_ranges() {
        let (d, k, m) = (16u32, 4u32, 64usize);
        let net = TwoLayerMlp::symmetric_init(d, k, m, &mut derive_rng(3, "init", 0)).unwrap();
        assert!(net.weights().iter().all(|&v| v == 1.0 || v == -1.0));
        for &bv in net.biases() {
            let scaled = bv * f64::from(k);
            assert_relative_eq!(scaled, scaled.round(), epsilon = 1e-12);
            assert!(bv.abs() <= (f64::from(k) - 1.0) / f64::from(k) + 1e-12);
        }
        assert!(net.outer().iter().all(|&v| v.abs() * m as f64 == 1.0));
        assert!(net.mirrored());
    }

    #[test]
    fn init_network_is_odd() {
        let net = TwoLayerMlp::symmetric_init(12, 3, 32, &mut derive_rng(4, "init", 1)).unwrap();
        let full = dim_mask(12);
        let mut r = derive_rng(4, "points", 0);
        for _ in 0..200 {
            let x: u128 = u128::from(r.random::<u64>()) & full;
            // the mirrored halves accumulate in swapped order, so oddness
            // holds up to summation rounding, not bit-exactly
            assert!((net.forward(x) + net.forward(!x & full)).abs() < 1e-12);
        }
    }

    #[test]
    fn init_bias_grid_includes_zero_and_extremes() {
        let mut seen = std::collections::BTreeSet::new();
        let net = TwoLayerMlp::symmetric_init(8, 4, 4096, &mut derive_rng(5, "init", 2)).unwrap();
        for &bv in net.biases() {
            seen.insert((bv * 4.0).round() as i64);
        }
        assert_eq!(seen, (-3..=3).collect()); // all 2k-1 = 7 grid points reached
    }

    #[test]
    fn phi_is_odd_with_slopes_zero_one_two() {
        let mut r = derive_rng(6, "phi", 0);
        for _ in 0..10_000 {
            let b = r.random::<f64>() * 2.0 - 1.0;
            let t = r.random::<f64>() * 6.0 - 3.0;
            assert_relative_eq!(phi(b, -t), -phi(b, t), epsilon = 1e-12);
            let h = 1e-6;
            let slope = (phi(b, t + h) - phi(b, t - h)) / (2.0 * h);
            // skip points straddling a kink at |t| = |b|
            if (t.abs() - b.abs()).abs() > 1e-5 {
                // both ReLUs live for |t| < b (slope 2), neither for
                // |t| < -b (slope 0), exactly one otherwise (slope 1)
                let expected = if t.abs() > b.abs() {
                    1.0
                } else if b >= 0.0 {
                    2.0
                } else {
                    0.0
                };
                assert_relative_eq!(slope, expected, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn mirrored_network_folds_to_phi() {
        let net = TwoLayerMlp::symmetric_init(10, 5, 16, &mut derive_rng(7, "fold", 0)).unwrap();
        let half = net.m() / 2;
        let mut r = derive_rng(7, "fold-points", 0);
        for _ in 0..100 {
            let x: u128 = u128::from(r.random::<u64>()) & dim_mask(10);
            let folded: f64 = (0..half)
                .map(|i| net.outer()[i] * phi(net.biases()[i], net.dot_mask(i, x)))
                .sum();
            assert_relative_eq!(net.forward(x), folded, epsilon = 1e-12);
        }
    }

    #[test]
    fn activity_indicator_matches_majority_at_odd_dimension() {
        // For hypercube rows and |b| < 1 at odd d, the pre-activation never
        // lands on a tie, so 1{w.x + b > 0} = (1 + maj(w o x)) / 2 exactly.
        let d = 11u32;
        let mut r = derive_rng(8, "indicator", 0);
        for _ in 0..20 {
            let net = TwoLayerMlp::symmetric_init(d, 4, 2, &mut r).unwrap();
            let w_mask: u128 = (0..d as usize)
                .filter(|&j| net.weight_row(0)[j] == 1.0)
                .map(|j| 1u128 << j)
                .sum();
            for x in 0u128..(1 << d) {
                let pre = net.dot_mask(0, x) + net.biases()[0];
                let agree = !(w_mask ^ x) & dim_mask(d);
                let maj = majority_mask(agree as u64, d);
                let lhs = if pre > 0.0 { 1.0 } else { 0.0 };
                assert_eq!(lhs, (1.0 + maj) / 2.0, "x = {x:#x}, pre = {pre}");
            }
        }
    }

    /// Central-difference check of an analytic weight gradient at coordinates
    /// far from ReLU kinks and hinge kinks.
    fn fd_check_hidden<L, G>(net: &mut TwoLayerMlp, loss: L, grad: G, rng: &mut ChaCha8Rng)
    where
        L: Fn(&TwoLayerMlp) -> f64,
        G: Fn(&TwoLayerMlp) -> Vec<f64>,
    {
        let d = net.d() as usize;
        let g = grad(net);
        let eps = 1e-6;
        for _ in 0..8 {
            let i = rng.random_range(0..net.m());
            let j = rng.random_range(0..d);
            let idx = i * d + j;
            let orig = net.w[idx];
            net.w[idx] = orig + eps;
            let up = loss(net);
            net.w[idx] = orig - eps;
            let down = loss(net);
            net.w[idx] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert_relative_eq!(fd, g[idx], epsilon = 1e-6, max_relative = 1e-5);
        }
    }

    /// True when no pre-activation or hinge margin sits within `slack` of its
    /// kink for any sample, so finite differences stay on one linear piece.
    fn away_from_kinks(net: &TwoLayerMlp, samples: &[LabeledSample], slack: f64) -> bool {
        samples.iter().all(|s| {
            let pre = net.pre_activations(s.x);
            let out: f64 = (0..net.m()).map(|i| net.outer()[i] * pre[i].max(0.0)).sum();
            pre.iter().all(|p| p.abs() > slack) && (s.y * out - 1.0).abs() > slack
        })
    }

    #[test]
    fn hinge_hidden_gradient_matches_finite_differences() {
        let task = ParityTask::leading(6, 2).unwrap();
        let mut r = derive_rng(9, "fd-hinge", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let samples = sample_batch(&task, 32, &mut r).unwrap();
            if !away_from_kinks(&net, &samples, 1e-4) {
                continue;
            }
            fd_check_hidden(
                &mut net,
                |n| n.hinge_loss(&samples),
                |n| n.grad_hidden_hinge(&samples),
                &mut r,
            );
            done += 1;
        }
    }

    #[test]
    fn hinge_outer_gradient_matches_finite_differences() {
        let task = ParityTask::leading(6, 2).unwrap();
        let mut r = derive_rng(10, "fd-outer", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let samples = sample_batch(&task, 32, &mut r).unwrap();
            if !away_from_kinks(&net, &samples, 1e-4) {
                continue;
            }
            let g = net.grad_outer_hinge(&samples);
            let eps = 1e-6;
            for i in 0..net.m() {
                let orig = net.a[i];
                net.a[i] = orig + eps;
                let up = net.hinge_loss(&samples);
                net.a[i] = orig - eps;
                let down = net.hinge_loss(&samples);
                net.a[i] = orig;
                let fd = (up - down) / (2.0 * eps);
                assert_relative_eq!(fd, g[i], epsilon = 1e-6, max_relative = 1e-5);
            }
            done += 1;
        }
    }

    #[test]
    fn alignment_gradient_matches_finite_differences() {
        let mut r = derive_rng(11, "fd-align", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let xs: Vec<u128> = (0..32).map(|_| u128::from(r.random::<u64>()) & dim_mask(6)).collect();
            let targets: Vec<f64> = (0..xs.len() * net.m())
                .map(|_| r.random::<f64>() * 2.0 - 1.0)
                .collect();
            let clear = xs
                .iter()
                .all(|&x| net.pre_activations(x).iter().all(|p| p.abs() > 1e-4));
            if !clear {
                continue;
            }
            fd_check_hidden(
                &mut net,
                |n| n.alignment_loss(&xs, &targets),
                |n| n.grad_hidden_alignment(&xs, &targets),
                &mut r,
            );
            done += 1;
        }
    }

    #[test]
    fn hidden_mse_gradient_matches_finite_differences() {
        let mut r = derive_rng(14, "fd-hmse", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let xs: Vec<u128> = (0..24).map(|_| u128::from(r.random::<u64>()) & dim_mask(6)).collect();
            let targets: Vec<f64> = (0..xs.len() * net.m())
                .map(|_| r.random::<f64>() * 2.0 - 1.0)
                .collect();
            let clear = xs
                .iter()
                .all(|&x| net.pre_activations(x).iter().all(|p| p.abs() > 1e-4));
            if !clear {
                continue;
            }
            fd_check_hidden(
                &mut net,
                |n| n.hidden_mse_loss(&xs, &targets),
                |n| n.grad_hidden_mse_targets(&xs, &targets),
                &mut r,
            );
            done += 1;
        }
    }

    #[test]
    fn output_mse_gradient_matches_finite_differences() {
        let mut r = derive_rng(15, "fd-omse", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let xs: Vec<u128> = (0..24).map(|_| u128::from(r.random::<u64>()) & dim_mask(6)).collect();
            let targets: Vec<f64> = (0..xs.len()).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let clear = xs
                .iter()
                .all(|&x| net.pre_activations(x).iter().all(|p| p.abs() > 1e-4));
            if !clear {
                continue;
            }
            fd_check_hidden(
                &mut net,
                |n| n.output_mse_loss(&xs, &targets),
                |n| n.grad_hidden_output_mse(&xs, &targets),
                &mut r,
            );
            done += 1;
        }
    }

    /// Central-difference check of a [`FullGradient`] across all three
    /// parameter blocks at coordinates away from kinks.
    fn fd_check_full<L>(net: &mut TwoLayerMlp, loss: L, g: &FullGradient, rng: &mut ChaCha8Rng)
    where
        L: Fn(&TwoLayerMlp) -> f64,
    {
        let d = net.d() as usize;
        let eps = 1e-6;
        for _ in 0..6 {
            let i = rng.random_range(0..net.m());
            let j = rng.random_range(0..d);
            let idx = i * d + j;

            let orig = net.w[idx];
            net.w[idx] = orig + eps;
            let up = loss(net);
            net.w[idx] = orig - eps;
            let down = loss(net);
            net.w[idx] = orig;
            assert_relative_eq!((up - down) / (2.0 * eps), g.w[idx], epsilon = 1e-6, max_relative = 1e-5);

            let orig = net.b[i];
            net.b[i] = orig + eps;
            let up = loss(net);
            net.b[i] = orig - eps;
            let down = loss(net);
            net.b[i] = orig;
            assert_relative_eq!((up - down) / (2.0 * eps), g.b[i], epsilon = 1e-6, max_relative = 1e-5);

            let orig = net.a[i];
            net.a[i] = orig + eps;
            let up = loss(net);
            net.a[i] = orig - eps;
            let down = loss(net);
            net.a[i] = orig;
            assert_relative_eq!((up - down) / (2.0 * eps), g.a[i], epsilon = 1e-6, max_relative = 1e-5);
        }
    }

    #[test]
    fn full_hinge_gradient_matches_finite_differences_and_partial_grads() {
        let task = ParityTask::leading(6, 2).unwrap();
        let mut r = derive_rng(16, "fd-full-hinge", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let samples = sample_batch(&task, 32, &mut r).unwrap();
            if !away_from_kinks(&net, &samples, 1e-4) {
                continue;
            }
            let g = net.grad_full_hinge(&samples);
            // the joint gradient's blocks agree exactly with the per-layer ones
            assert_eq!(g.w, net.grad_hidden_hinge(&samples));
            assert_eq!(g.a, net.grad_outer_hinge(&samples));
            fd_check_full(&mut net, |n| n.hinge_loss(&samples), &g, &mut r);
            done += 1;
        }
    }

    #[test]
    fn full_output_mse_gradient_matches_finite_differences_and_partial_grads() {
        let mut r = derive_rng(17, "fd-full-omse", 0);
        let mut done = 0;
        while done < 5 {
            let mut net = random_continuous(6, 6, &mut r);
            let xs: Vec<u128> = (0..24).map(|_| u128::from(r.random::<u64>()) & dim_mask(6)).collect();
            let targets: Vec<f64> = (0..xs.len()).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let clear = xs
                .iter()
                .all(|&x| net.pre_activations(x).iter().all(|p| p.abs() > 1e-4));
            if !clear {
                continue;
            }
            let g = net.grad_full_output_mse(&xs, &targets);
            assert_eq!(g.w, net.grad_hidden_output_mse(&xs, &targets));
            fd_check_full(&mut net, |n| n.output_mse_loss(&xs, &targets), &g, &mut r);
            done += 1;
        }
    }

    #[test]
    fn full_step_moves_every_parameter_block() {
        let mut net = random_continuous(5, 4, &mut derive_rng(18, "full-step", 0));
        let before = net.clone();
        let g = FullGradient {
            w: (0..net.w.len()).map(|i| 0.01 * (i as f64 + 1.0)).collect(),
            b: (0..net.m()).map(|i| -0.02 * (i as f64 + 1.0)).collect(),
            a: (0..net.m()).map(|i| 0.03 * (i as f64 + 1.0)).collect(),
        };
        let eta = 0.25;
        net.full_step(&g, eta);
        for (idx, (new, old)) in net.w.iter().zip(&before.w).enumerate() {
            assert_eq!(*new, old - eta * g.w[idx]);
        }
        for (i, (new, old)) in net.b.iter().zip(&before.b).enumerate() {
            assert_eq!(*new, old - eta * g.b[i]);
        }
        for (i, (new, old)) in net.a.iter().zip(&before.a).enumerate() {
            assert_eq!(*new, old - eta * g.a[i]);
        }
    }

    #[test]
    fn decay_step_with_critical_lambda_is_exact_proportionality() {
        let mut net = random_continuous(5, 4, &mut derive_rng(12, "decay", 0));
        let g: Vec<f64> = (0..net.w.len()).map(|i| (i as f64 + 1.0) * 0.01).collect();
        let eta = 0.37;
        net.hidden_decay_step(&g, eta, 1.0 / (2.0 * eta));
        for (wv, gv) in net.w.iter().zip(&g) {
            assert_eq!(*wv, -eta * gv);
        }
    }

    #[test]
    fn decay_step_general_shrink() {
        let mut net = random_continuous(5, 4, &mut derive_rng(13, "decay", 1));
        let before = net.w.clone();
        let g: Vec<f64> = (0..net.w.len()).map(|i| i as f64 * -0.02).collect();
        let (eta, lambda) = (0.1, 0.5);
        net.hidden_decay_step(&g, eta, lambda);
        for ((wv, old), gv) in net.w.iter().zip(&before).zip(&g) {
            assert_relative_eq!(*wv, 0.9 * old - eta * gv, epsilon = 1e-15);
        }
    }

    #[test]
    fn hinge_zero_network_loss_is_one() {
        let task = ParityTask::leading(8, 3).unwrap();
        let samples = sample_batch(&task, 100, &mut derive_rng(14, "loss", 0)).unwrap();
        let net =
            TwoLayerMlp::from_parts(8, vec![0.0; 4 * 8], vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert_eq!(net.hinge_loss(&samples), 1.0);
        // sign(0) = +1, so accuracy equals the fraction of +1 labels
        let plus = samples.iter().filter(|s| s.y > 0.0).count() as f64;
        assert_eq!(net.accuracy(&samples), plus / 100.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut net =
            TwoLayerMlp::symmetric_init(16, 4, 32, &mut derive_rng(15, "ckpt", 0)).unwrap();
        // make values non-trivial
        let g: Vec<f64> = (0..net.w.len()).map(|i| (i as f64).sin() * 0.123).collect();
        net.hidden_decay_step(&g, 0.7, 0.05);
        net.save_checkpoint(&path).unwrap();
        let back = TwoLayerMlp::load_checkpoint(&path).unwrap();
        assert_eq!(net.d(), back.d());
        assert!(net.w.iter().zip(&back.w).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(net.b.iter().zip(&back.b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(net.a.iter().zip(&back.a).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn checkpoint_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "wrong-header\n2 3\n").unwrap();
        assert!(TwoLayerMlp::load_checkpoint(&path).is_err());
        std::fs::write(&path, "two-layer-mlp 1\n2 3\n1 2 3\n").unwrap();
        assert!(TwoLayerMlp::load_checkpoint(&path).is_err()); // truncated
        std::fs::write(
            &path,
            "two-layer-mlp 1\n1 2\n1.0 2.0 3.0\n0.0\n1.0\n",
        )
        .unwrap();
        assert!(TwoLayerMlp::load_checkpoint(&path).is_err()); // row too long
    }

    #[test]
    fn mirror_hidden_overwrites_second_half() {
        let mut net = random_continuous(6, 8, &mut derive_rng(16, "mirror", 0));
        assert!(!net.mirrored_hidden());
        net.mirror_hidden_from_first_half();
        assert!(net.mirrored_hidden());
    }
}
