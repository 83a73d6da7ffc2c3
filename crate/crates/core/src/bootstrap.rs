//! Bootstrap percentile bands for error rates.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Mean of a sample with the requested percentiles of its bootstrap means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub lo: f64,
    pub mean: f64,
    pub hi: f64,
}

impl BootstrapSummary {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Resamples `samples` with replacement `replicates` times and reports the
/// `lo` and `hi` quantiles (fractions in `[0, 1]`) of the replicate means.
///
/// The band is widened to contain the sample mean when resampling noise
/// would otherwise put the mean outside it.
pub fn bootstrap_percentiles<R: Rng + ?Sized>(
    samples: &[bool],
    replicates: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<BootstrapSummary> {
    if samples.is_empty() {
        return Err(Error::InvalidValue("bootstrap needs at least one sample".into()));
    }
    if replicates == 0 {
        return Err(Error::InvalidValue("bootstrap needs at least one replicate".into()));
    }
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidValue(format!("bad percentile pair ({lo}, {hi})")));
    }
    let n = samples.len();
    let mean = samples.iter().filter(|s| **s).count() as f64 / n as f64;
    let mut means: Vec<f64> = (0..replicates)
        .map(|_| {
            let hits = (0..n).filter(|_| samples[rng.random_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        lo: quantile(&means, lo).min(mean),
        mean,
        hi: quantile(&means, hi).max(mean),
    })
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// A ChaCha stream derived from a seed; independent streams per run index
/// keep parallel experiments reproducible.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
