//! Exact Boolean-function analysis over `{-1,+1}^d`.
//!
//! Points are encoded as bitmasks: bit `i-1` holds coordinate `i`, a set bit
//! means `+1`. Full-cube expectations enumerate all `2^d` masks with a fixed
//! chunked reduction so results are bit-reproducible. Majority Fourier
//! coefficients additionally have a closed-form signed-binomial route that is
//! exact far beyond the enumeration cutoff.

use crate::error::{Error, Result};
use crate::util::{pairwise_sum, CHUNK};
use rayon::prelude::*;
use std::io::Write;

/// Enumeration cutoff: 2^24 function evaluations.
pub const MAX_ENUM_DIM: u32 = 24;
/// Cutoff for full coefficient tables (2^d entries each touched d times).
pub const MAX_TABLE_DIM: u32 = 20;
/// Cutoff for the closed-form majority coefficients: partial sums of the
/// signed binomial double sum are bounded by 2^d, which fits i128 up to here.
pub const MAX_CLOSED_FORM_DIM: u32 = 120;

/// A point of the Boolean cube with explicit `{-1,+1}` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanPoint {
    coords: Vec<f64>,
}

impl BooleanPoint {
    /// Validates that every coordinate is exactly -1 or +1.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coords.iter().find(|c| c.abs() != 1.0) {
            return Err(Error::Argument(format!(
                "boolean point coordinate {bad} is not in {{-1,+1}}"
            )));
        }
        Ok(Self { coords })
    }

    /// Decode a bitmask (bit i-1 set means coordinate i is +1).
    pub fn from_mask(mask: u64, d: u32) -> Self {
        let coords = (0..d)
            .map(|j| if mask >> j & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> u32 {
        self.coords.len() as u32
    }

    /// Bitmask encoding of this point.
    pub fn mask(&self) -> u64 {
        self.coords
            .iter()
            .enumerate()
            .fold(0u64, |m, (j, &c)| if c > 0.0 { m | 1 << j } else { m })
    }
}

/// Parity over a subset given as a bitmask: the product of the selected
/// coordinates. Empty subset gives +1.
#[inline]
pub fn parity_mask(x: u64, subset: u64) -> f64 {
    // product over S of x_i = (-1)^{# cleared bits of x inside S}
    if (!x & subset).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Parity over an explicit 1-indexed subset of a point's coordinates.
pub fn parity(x: &BooleanPoint, subset: &[usize]) -> Result<f64> {
    let d = x.coords.len();
    let mut prod = 1.0;
    for &i in subset {
        if i == 0 || i > d {
            return Err(Error::Argument(format!(
                "subset index {i} out of range 1..={d}"
            )));
        }
        prod *= x.coords[i - 1];
    }
    Ok(prod)
}

/// Majority of an arbitrary real vector: sign of the sum, sign(0) = +1.
pub fn majority_slice(v: &[f64]) -> f64 {
    let s = pairwise_sum(v);
    if s >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Majority of the first `d` bitmask coordinates, sign(0) = +1.
#[inline]
pub fn majority_mask(x: u64, d: u32) -> f64 {
    // sum = 2*popcount - d; sign(0)=+1 becomes 2*popcount >= d
    if 2 * (x & mask_of(d)).count_ones() >= d {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub(crate) fn mask_of(d: u32) -> u64 {
    if d >= 64 {
        u64::MAX
    } else {
        (1u64 << d) - 1
    }
}

fn check_enum_dim(d: u32, cap: u32) -> Result<()> {
    if d == 0 {
        return Err(Error::Argument("dimension must be positive".into()));
    }
    if d > cap {
        return Err(Error::Capacity(format!(
            "d = {d} exceeds the enumeration cutoff {cap}"
        )));
    }
    Ok(())
}

/// Exact expectation of `f` over the uniform cube: `2^-d * sum over masks`.
///
/// Chunks of `CHUNK` consecutive masks are summed sequentially and the chunk
/// partials combined in a fixed pairwise tree, so the result is identical for
/// any worker count.
pub fn exact_expectation(d: u32, f: impl Fn(u64) -> f64 + Sync) -> Result<f64> {
    check_enum_dim(d, MAX_ENUM_DIM)?;
    let n = 1u64 << d;
    let chunks = n.div_ceil(CHUNK as u64);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK as u64;
            let hi = (lo + CHUNK as u64).min(n);
            let mut acc = 0.0;
            for x in lo..hi {
                acc += f(x);
            }
            acc
        })
        .collect();
    Ok(pairwise_sum(&partials) / n as f64)
}

/// Convenience wrapper evaluating `f` on decoded points (slower; tests/UI).
pub fn exact_expectation_points(d: u32, f: impl Fn(&BooleanPoint) -> f64 + Sync) -> Result<f64> {
    exact_expectation(d, |x| f(&BooleanPoint::from_mask(x, d)))
}

/// Exact integer sum of `Maj(x) * chi_S(x)` over the cube; the independent
/// enumeration route the closed form is tested against.
#[cfg(test)]
fn majority_character_sum(d: u32, subset: u64) -> i64 {
    let n = 1u64 << d;
    (0..n)
        .map(|x| {
            let m = if 2 * x.count_ones() >= d { 1i64 } else { -1 };
            let c = if (!x & subset).count_ones() % 2 == 0 {
                1i64
            } else {
                -1
            };
            m * c
        })
        .sum()
}

fn binomial_i128(n: u32, k: u32) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// Degree-`i` Fourier coefficient of the d-variable majority (sign(0) = +1)
/// by the exact signed-binomial closed form. Valid for any `d` up to
/// [`MAX_CLOSED_FORM_DIM`]; this is how wide-dimension learning-rate scales
/// (for example d = 100) get exact coefficient values without enumeration.
///
/// Grouping points by p = #(+1 inside S) and q = #(+1 outside S):
/// `zeta_i = 2^-d * sum_{p,q} C(i,p) C(d-i,q) (-1)^{i-p} sign(2(p+q)-d)`.
pub fn majority_zeta_closed(d: u32, i: u32) -> Result<f64> {
    if i == 0 || i > d {
        return Err(Error::Argument(format!("degree {i} out of range 1..={d}")));
    }
    if d > MAX_CLOSED_FORM_DIM {
        return Err(Error::Capacity(format!(
            "d = {d} exceeds the closed-form overflow guard {MAX_CLOSED_FORM_DIM}"
        )));
    }
    let mut sum: i128 = 0;
    for p in 0..=i {
        let cp = binomial_i128(i, p);
        let sign_char: i128 = if (i - p) % 2 == 0 { 1 } else { -1 };
        for q in 0..=(d - i) {
            let cq = binomial_i128(d - i, q);
            let sign_maj: i128 = if 2 * (p + q) >= d { 1 } else { -1 };
            sum += cp * cq * sign_char * sign_maj;
        }
    }
    Ok(sum as f64 / 2f64.powi(d as i32))
}

/// Mode selector for [`majority_zeta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaMode {
    /// Exact value; subject to the enumeration cutoff `d <= MAX_ENUM_DIM`.
    Exact,
    /// Order-of-growth estimate `i^(-1/3) / C(d,i)` with constant 1 for odd
    /// degrees (0 for even). Approximate by construction; never used by
    /// tolerance-sensitive code.
    Asymptotic,
}

/// Degree-`i` Fourier coefficient of the d-variable majority function.
///
/// The exact mode is capped at `d <= MAX_ENUM_DIM`; for wider dimensions use
/// [`majority_zeta_closed`] (still exact) or the asymptotic mode.
pub fn majority_zeta(d: u32, i: u32, mode: ZetaMode) -> Result<f64> {
    if i == 0 || i > d {
        return Err(Error::Argument(format!("degree {i} out of range 1..={d}")));
    }
    match mode {
        ZetaMode::Exact => {
            check_enum_dim(d, MAX_ENUM_DIM)?;
            majority_zeta_closed(d, i)
        }
        ZetaMode::Asymptotic => {
            if i % 2 == 0 {
                return Ok(0.0);
            }
            let mut c = 1.0f64;
            for t in 0..i {
                c = c * (d - t) as f64 / (t + 1) as f64;
            }
            Ok((i as f64).powf(-1.0 / 3.0) / c)
        }
    }
}

/// All Fourier coefficients of a function up to a degree cap.
#[derive(Debug, Clone)]
pub struct FourierCoefficientTable {
    d: u32,
    max_degree: u32,
    /// (subset bitmask, coefficient), ascending bitmask order.
    entries: Vec<(u64, f64)>,
}

impl FourierCoefficientTable {
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    /// Coefficient for a subset bitmask (0.0 if absent from the degree cap).
    pub fn coefficient(&self, subset: u64) -> f64 {
        self.entries
            .binary_search_by_key(&subset, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Sum of squared coefficients (Parseval mass within the degree cap).
    pub fn squared_mass(&self) -> f64 {
        let sq: Vec<f64> = self.entries.iter().map(|(_, c)| c * c).collect();
        pairwise_sum(&sq)
    }

    /// Evaluate the Fourier expansion at a point mask.
    pub fn reconstruct(&self, x: u64) -> f64 {
        let terms: Vec<f64> = self
            .entries
            .iter()
            .map(|&(s, c)| c * parity_mask(x, s))
            .collect();
        pairwise_sum(&terms)
    }

    /// CSV serialization: header `subset_bitmask,degree,coefficient`, rows in
    /// ascending bitmask order, LF endings.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(b"subset_bitmask,degree,coefficient\n")?;
        for &(s, c) in &self.entries {
            writeln!(out, "{},{},{}", s, s.count_ones(), c)?;
        }
        Ok(())
    }
}

/// In-place Walsh-Hadamard butterfly.
fn fwht(vals: &mut [f64]) {
    let n = vals.len();
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let a = vals[j];
                let b = vals[j + h];
                vals[j] = a + b;
                vals[j + h] = a - b;
            }
            i += h * 2;
        }
        h *= 2;
    }
}

/// Exact Fourier table of `f` up to `max_degree`, via the fast transform.
///
/// The transform computes `sum_x f(x) (-1)^{|S & x|}`; under the set-bit=+1
/// encoding that equals `(-1)^{|S|} * sum_x f(x) chi_S(x)`, so a parity flip
/// per subset recovers the chi-basis coefficients.
pub fn fourier_table(
    d: u32,
    max_degree: u32,
    f: impl Fn(u64) -> f64 + Sync,
) -> Result<FourierCoefficientTable> {
    check_enum_dim(d, MAX_TABLE_DIM)?;
    if max_degree > d {
        return Err(Error::Argument(format!(
            "max_degree {max_degree} exceeds dimension {d}"
        )));
    }
    let n = 1usize << d;
    let mut vals: Vec<f64> = (0..n as u64).map(&f).collect();
    fwht(&mut vals);
    let scale = 1.0 / n as f64;
    let entries = (0..n as u64)
        .filter(|s| s.count_ones() <= max_degree)
        .map(|s| {
            let flip = if s.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            // + 0.0 canonicalizes -0.0 so serialized tables never print "-0"
            (s, flip * vals[s as usize] * scale + 0.0)
        })
        .collect();
    Ok(FourierCoefficientTable {
        d,
        max_degree,
        entries,
    })
}

/// Mean of the majority function itself: `E[Maj]`, which is `Pr[sum = 0]`
/// under sign(0) = +1 — exactly 0 for odd `d` and `C(d, d/2)/2^d` for even.
pub fn majority_mean(d: u32) -> Result<f64> {
    check_enum_dim(d, MAX_ENUM_DIM)?;
    let n = 1u64 << d;
    let sum: i64 = (0..n)
        .map(|x| if 2 * x.count_ones() >= d { 1i64 } else { -1 })
        .sum();
    Ok(sum as f64 / n as f64)
}

/// `E[chi_T(z) * 1{sum_j z_j = 0}]` for any size-`r` subset T, by the exact
/// signed-binomial closed form (valid for `d <= MAX_CLOSED_FORM_DIM`).
///
/// Zero coordinate-sums only exist at even `d`, so the value is 0 at odd `d`,
/// and it also vanishes for odd `r` because negating z flips the character
/// while preserving the balanced slice. This is the correction weight needed
/// wherever an activity indicator is rewritten through the majority function:
/// the rewrite is off by a constant exactly on the tied slice.
pub fn balanced_character_value(d: u32, r: u32) -> Result<f64> {
    if r > d {
        return Err(Error::Argument(format!("degree {r} out of range 0..={d}")));
    }
    if d == 0 || d > MAX_CLOSED_FORM_DIM {
        return Err(Error::Capacity(format!(
            "d = {d} exceeds the closed-form overflow guard {MAX_CLOSED_FORM_DIM}"
        )));
    }
    if d % 2 == 1 {
        return Ok(0.0);
    }
    let half = d / 2;
    let mut sum: i128 = 0;
    for p in 0..=r.min(half) {
        if half - p > d - r {
            continue;
        }
        let sign: i128 = if (r - p) % 2 == 0 { 1 } else { -1 };
        sum += sign * binomial_i128(r, p) * binomial_i128(d - r, half - p);
    }
    Ok(sum as f64 / 2f64.powi(d as i32))
}
