//! Sparse-parity tasks and labeled-sample streams.
//!
//! Points are packed into `u128` bitmasks (bit `j-1` holds coordinate `j`, a
//! set bit means `+1`), which keeps wide-dimension sampling cheap; the small
//! enumeration dimensions reuse the same encoding truncated to `u64`.

use crate::boolean_fourier::BooleanPoint;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Packed-point dimension limit.
pub const MAX_PACKED_DIM: u32 = 120;

/// A k-sparse parity task on d coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityTask {
    d: u32,
    k: u32,
    support: u128,
}

impl ParityTask {
    /// Task with an explicit support (1-indexed coordinates).
    pub fn new(d: u32, k: u32, support: &[u32]) -> Result<Self> {
        if d == 0 || d > MAX_PACKED_DIM {
            return Err(Error::Argument(format!(
                "dimension {d} out of range 1..={MAX_PACKED_DIM}"
            )));
        }
        if k == 0 || k >= d {
            return Err(Error::Argument(format!(
                "sparsity {k} must satisfy 1 <= k < d = {d}"
            )));
        }
        if support.len() != k as usize {
            return Err(Error::Argument(format!(
                "support has {} elements, expected k = {k}",
                support.len()
            )));
        }
        let mut mask = 0u128;
        for &j in support {
            if j == 0 || j > d {
                return Err(Error::Argument(format!(
                    "support coordinate {j} out of range 1..={d}"
                )));
            }
            let bit = 1u128 << (j - 1);
            if mask & bit != 0 {
                return Err(Error::Argument(format!("duplicate support coordinate {j}")));
            }
            mask |= bit;
        }
        Ok(Self { d, k, support: mask })
    }

    /// Canonical task with support {1, ..., k}.
    pub fn leading(d: u32, k: u32) -> Result<Self> {
        let support: Vec<u32> = (1..=k).collect();
        Self::new(d, k, &support)
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Support as a bitmask (bit j-1 for coordinate j).
    pub fn support_mask(&self) -> u128 {
        self.support
    }

    /// Support as sorted 1-indexed coordinates.
    pub fn support(&self) -> Vec<u32> {
        (1..=self.d).filter(|&j| self.contains(j)).collect()
    }

    /// Is 1-indexed coordinate j in the support?
    pub fn contains(&self, j: u32) -> bool {
        j >= 1 && j <= self.d && self.support >> (j - 1) & 1 == 1
    }

    /// Parity label of a packed point.
    #[inline]
    pub fn label(&self, x: u128) -> f64 {
        if (!x & self.support).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// All-coordinates mask for this dimension.
    pub fn dim_mask(&self) -> u128 {
        dim_mask(self.d)
    }
}

pub(crate) fn dim_mask(d: u32) -> u128 {
    if d >= 128 {
        u128::MAX
    } else {
        (1u128 << d) - 1
    }
}

/// A labeled point: packed coordinates plus its parity label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub x: u128,
    pub y: f64,
}

impl LabeledSample {
    /// Decode to explicit coordinates.
    pub fn point(&self, d: u32) -> BooleanPoint {
        point_from_mask(self.x, d)
    }
}

/// Decode a packed point to explicit coordinates.
pub fn point_from_mask(x: u128, d: u32) -> BooleanPoint {
    let coords: Vec<f64> = (0..d)
        .map(|j| if x >> j & 1 == 1 { 1.0 } else { -1.0 })
        .collect();
    BooleanPoint::new(coords).expect("packed decode yields +/-1 coordinates")
}

/// One uniform point. Always consumes exactly two u64 draws so sampling
/// positions stay aligned across dimensions.
#[inline]
pub fn sample_point(d: u32, rng: &mut ChaCha8Rng) -> u128 {
    let lo: u64 = rng.random();
    let hi: u64 = rng.random();
    ((u128::from(hi) << 64) | u128::from(lo)) & dim_mask(d)
}

/// B i.i.d. uniform labeled samples.
pub fn sample_batch(task: &ParityTask, b: usize, rng: &mut ChaCha8Rng) -> Result<Vec<LabeledSample>> {
    if b == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    Ok((0..b)
        .map(|_| {
            let x = sample_point(task.d, rng);
            LabeledSample { x, y: task.label(x) }
        })
        .collect())
}

/// All 2^d labeled points in ascending bitmask order.
pub fn enumerate_all(task: &ParityTask) -> Result<impl Iterator<Item = LabeledSample> + '_> {
    if task.d > crate::boolean_fourier::MAX_ENUM_DIM {
        return Err(Error::Capacity(format!(
            "d = {} exceeds the enumeration cutoff {}",
            task.d,
            crate::boolean_fourier::MAX_ENUM_DIM
        )));
    }
    let n = 1u128 << task.d;
    Ok((0..n).map(move |x| LabeledSample { x, y: task.label(x) }))
}

/// Split a root seed into an independent per-worker sample stream.
pub fn worker_stream(root_seed: u64, worker: u64) -> ChaCha8Rng {
    rng::derive_rng(root_seed, "sample-worker", worker)
}
