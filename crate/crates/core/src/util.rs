//! Deterministic reductions and small statistics helpers.
//!
//! Enumeration-based expectations must be bit-reproducible regardless of how
//! many workers computed them, so every summation here happens in a fixed
//! tree order defined by the data layout alone.

/// Chunk width for fixed-boundary reductions; partial sums are always taken
/// over `[i*CHUNK, (i+1)*CHUNK)` windows so the combine tree never depends on
/// the number of workers.
pub const CHUNK: usize = 4096;

/// Sum in a fixed pairwise (tree) order. Bounds rounding error growth to
/// O(log n) and gives the same bits no matter who produced the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean of `term(i)` over `i in 0..n` with fixed-chunk pairwise reduction.
pub fn indexed_mean(n: u64, term: impl Fn(u64) -> f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let chunks = n.div_ceil(CHUNK as u64);
    let partials: Vec<f64> = (0..chunks)
        .map(|c| {
            let lo = c * CHUNK as u64;
            let hi = (lo + CHUNK as u64).min(n);
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        })
        .collect();
    pairwise_sum(&partials) / n as f64
}

/// Arithmetic mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Population standard deviation (divides by n).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / xs.len() as f64).sqrt()
}

/// Root mean square.
pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    (pairwise_sum(&sq) / xs.len() as f64).sqrt()
}

/// Nearest-rank percentile (p in [0,100]) of unsorted data.
pub fn percentile_nearest_rank(xs: &[usize], p: f64) -> usize {
    assert!(!xs.is_empty(), "percentile of empty data");
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
