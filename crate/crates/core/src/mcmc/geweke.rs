use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance};

/// Minimum chain length accepted by [`geweke`].
pub const GEWEKE_MIN_LEN: usize = 100;

/// Long-run variance of a segment by non-overlapping batch means with
/// `floor(sqrt(n))` batches. A trailing partial batch is dropped.
pub fn batch_means_variance(x: &[f64]) -> f64 {
    let n = x.len();
    let batches = (libm::sqrt(n as f64) as usize).max(2);
    let size = n / batches;
    if size == 0 {
        return sample_variance(x);
    }
    let means: alloc::vec::Vec<f64> = x
        .chunks_exact(size)
        .take(batches)
        .map(mean)
        .collect();
    size as f64 * sample_variance(&means)
}

/// Geweke z-score comparing the first 10% of a chain with the last 50%.
///
/// Returns `Ok(None)` when the chain has no variation, in which case the
/// statistic is undefined.
pub fn geweke(x: &[f64]) -> Result<Option<f64>> {
    let n = x.len();
    if n < GEWEKE_MIN_LEN {
        return Err(Error::TooFewDraws {
            need: GEWEKE_MIN_LEN,
            got: n,
        });
    }
    let a = &x[..n / 10];
    let b = &x[n - n / 2..];
    let va = batch_means_variance(a);
    let vb = batch_means_variance(b);
    let se2 = va / a.len() as f64 + vb / b.len() as f64;
    if !(se2 > 0.0) || !se2.is_finite() {
        return Ok(None);
    }
    Ok(Some((mean(a) - mean(b)) / libm::sqrt(se2)))
}
