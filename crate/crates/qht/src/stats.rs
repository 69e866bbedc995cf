//! Block statistics for kernel averages over homodyne datasets.
//!
//! Estimates are sample means of a kernel over every record in a dataset.
//! Error bars come from the spread of per-block means, so they remain honest
//! even when the phase strategy correlates samples within a block.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::homodyne::HomodyneDataset;
use crate::kernels::KernelExpr;

/// Outcome of averaging a kernel over a dataset.
///
/// `variance` is the single-sample noise estimate used in noise ratios:
/// for real kernels the empirical variance of the kernel values, for complex
/// kernels half the total spread `(avg |K|^2 - |mean|^2) / 2`, which matches
/// the per-component noise of an isotropic estimator.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    /// Grand mean of the kernel over all samples.
    pub mean: C64,
    /// Per-block means, in block order.
    pub block_means: Vec<C64>,
    /// Total number of samples averaged.
    pub n_samples: usize,
    /// Number of blocks.
    pub n_blocks: usize,
    /// Single-sample variance estimate (see type docs).
    pub variance: f64,
    /// Standard error of `mean` from the block spread; `None` when fewer
    /// than two blocks are available.
    pub std_error: Option<f64>,
    /// Block-spread error of `Re(mean)`.
    pub err_re: Option<f64>,
    /// Block-spread error of `Im(mean)`.
    pub err_im: Option<f64>,
}

/// Histogram of the real part of kernel values.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    /// Bin edges, length `counts.len() + 1`, uniformly spaced.
    pub edges: Vec<f64>,
    /// Samples per bin.
    pub counts: Vec<u64>,
}

struct BlockAccum {
    sum: C64,
    sum_abs2: f64,
    n: usize,
}

/// Average `kernel` over every sample of `dataset`, reporting block errors.
///
/// The mean is `sum K(x_i, phi_i) / N`. The standard error is the population
/// rms of the per-block means divided by `sqrt(B)`, which estimates the error
/// of the grand mean when blocks are independent repetitions.
pub fn tomo_average(dataset: &HomodyneDataset, kernel: &KernelExpr) -> Result<EstimateReport> {
    if dataset.is_empty() {
        return Err(Error::BadDataset("cannot average over an empty dataset".into()));
    }
    let blocks = dataset.blocks();
    let per: Vec<BlockAccum> = (0..blocks)
        .into_par_iter()
        .map_init(Vec::new, |scratch, b| -> Result<BlockAccum> {
            let mut sum = C64::new(0.0, 0.0);
            let mut sum_abs2 = 0.0;
            let slice = dataset.block_slice(b);
            for s in slice {
                let k = kernel.eval_with_scratch(s.x, s.phi, scratch)?;
                sum += k;
                sum_abs2 += k.norm_sqr();
            }
            Ok(BlockAccum { sum, sum_abs2, n: slice.len() })
        })
        .collect::<Result<_>>()?;

    // Serial reduction in block order keeps results bit-stable across
    // thread counts.
    let mut total = C64::new(0.0, 0.0);
    let mut total_abs2 = 0.0;
    let mut n_samples = 0usize;
    let mut block_means = Vec::with_capacity(blocks as usize);
    for acc in &per {
        total += acc.sum;
        total_abs2 += acc.sum_abs2;
        n_samples += acc.n;
        block_means.push(acc.sum / acc.n as f64);
    }
    let mean = total / n_samples as f64;
    let mean_abs2 = total_abs2 / n_samples as f64;

    let variance = if kernel.target().is_real() {
        // K is real up to roundoff; this is avg(K^2) - mean^2.
        (mean_abs2 - mean.re * mean.re).max(0.0)
    } else {
        0.5 * (mean_abs2 - mean.norm_sqr()).max(0.0)
    };

    let (std_error, err_re, err_im) = if blocks >= 2 {
        let b = blocks as f64;
        let mut dev_abs2 = 0.0;
        let mut dev_re2 = 0.0;
        let mut dev_im2 = 0.0;
        for bm in &block_means {
            let d = bm - mean;
            dev_abs2 += d.norm_sqr();
            dev_re2 += d.re * d.re;
            dev_im2 += d.im * d.im;
        }
        (
            Some((dev_abs2 / b).sqrt() / b.sqrt()),
            Some((dev_re2 / b).sqrt() / b.sqrt()),
            Some((dev_im2 / b).sqrt() / b.sqrt()),
        )
    } else {
        (None, None, None)
    };

    Ok(EstimateReport {
        mean,
        block_means,
        n_samples,
        n_blocks: blocks as usize,
        variance,
        std_error,
        err_re,
        err_im,
    })
}

/// Ratio of estimator noise to the intrinsic quantum noise of an observable.
///
/// Returns `sqrt(variance / intrinsic)`. Values above 1 quantify how much
/// statistical noise the reconstruction adds on top of the unavoidable
/// quantum fluctuations.
pub fn noise_ratio(variance: f64, intrinsic: f64) -> Result<f64> {
    if !(intrinsic > 0.0) {
        return Err(Error::InvalidParameter {
            name: "intrinsic",
            why: format!("intrinsic noise must be positive, got {intrinsic}"),
        });
    }
    if variance < 0.0 {
        return Err(Error::InvalidParameter {
            name: "variance",
            why: format!("variance must be nonnegative, got {variance}"),
        });
    }
    Ok((variance / intrinsic).sqrt())
}

/// Histogram of `Re(K)` over every sample of a dataset.
///
/// With `range = None` the bins span the observed min and max; a degenerate
/// span (constant kernel) collapses to a single unit-width bin centred on the
/// value. Samples outside an explicit `range` are dropped.
pub fn kernel_histogram(
    dataset: &HomodyneDataset,
    kernel: &KernelExpr,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidParameter { name: "bins", why: "need at least one bin".into() });
    }
    if dataset.is_empty() {
        return Err(Error::BadDataset("cannot histogram an empty dataset".into()));
    }
    let values: Vec<f64> = dataset
        .samples()
        .par_iter()
        .map_init(Vec::new, |scratch, s| {
            kernel.eval_with_scratch(s.x, s.phi, scratch).map(|k| k.re)
        })
        .collect::<Result<_>>()?;

    let (mut lo, mut hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi) {
                return Err(Error::InvalidParameter {
                    name: "range",
                    why: format!("need lo < hi, got [{lo}, {hi}]"),
                });
            }
            (lo, hi)
        }
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    if lo == hi {
        // Constant kernel: one bin of unit width around the value.
        lo -= 0.5;
        hi += 0.5;
    }

    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in &values {
        if v < lo || v > hi {
            continue;
        }
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    Ok(Histogram { edges, counts })
}
