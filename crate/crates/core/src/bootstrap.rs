//! Seeded percentile bootstrap shared by the ROC and FROC analyses.
//!
//! Replicate `i` draws from a ChaCha8 generator seeded with the user seed
//! (via `seed_from_u64`) and switched to stream `i`. Replicates are therefore
//! independent of evaluation order and of the number of worker threads, and
//! a given seed reproduces the same resamples on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_REPLICATES: usize = 10_000;
pub const DEFAULT_INTERVAL: f64 = 95.0;
pub const DEFAULT_SEED: u64 = 0;

/// Redraw cap per replicate; reaching it means the input almost never
/// yields a usable resample.
const MAX_REDRAWS_PER_REPLICATE: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    replicates: usize,
    interval: f64,
    seed: u64,
}

impl BootstrapConfig {
    /// `interval` is the central percentile width, e.g. `95.0`.
    pub fn new(replicates: usize, interval: f64, seed: u64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::Config(
                "bootstrap needs at least one replicate".into(),
            ));
        }
        if !(interval > 0.0 && interval < 100.0) {
            return Err(Error::Config(format!(
                "bootstrap interval must lie strictly between 0 and 100, got {interval}"
            )));
        }
        Ok(BootstrapConfig {
            replicates,
            interval,
            seed,
        })
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Lower and upper tail probabilities of the central interval.
    pub fn tail_probabilities(&self) -> (f64, f64) {
        let alpha = (100.0 - self.interval) / 200.0;
        (alpha, 1.0 - alpha)
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: DEFAULT_REPLICATES,
            interval: DEFAULT_INTERVAL,
            seed: DEFAULT_SEED,
        }
    }
}

pub(crate) fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Multiplicity of each of `n` units in one resample of size `n`.
pub(crate) fn draw_counts<R: Rng>(rng: &mut R, n: usize, counts: &mut Vec<u32>) {
    counts.clear();
    counts.resize(n, 0);
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
}

/// Evaluates `stat` on `cfg.replicates` resamples of `n` units.
///
/// Resamples rejected by `usable` are redrawn from the same replicate
/// stream; the total number of redraws is returned alongside the per
/// replicate statistics, which are in replicate-index order.
pub(crate) fn run_replicates<T, U, S>(
    cfg: &BootstrapConfig,
    n: usize,
    usable: U,
    stat: S,
) -> Result<(Vec<T>, u64)>
where
    T: Send,
    U: Fn(&[u32]) -> bool + Sync,
    S: Fn(&[u32]) -> T + Sync,
{
    let results: Vec<Result<(T, u32)>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(cfg.seed, i);
            let mut counts = Vec::with_capacity(n);
            let mut redraws = 0u32;
            loop {
                draw_counts(&mut rng, n, &mut counts);
                if usable(&counts) {
                    return Ok((stat(&counts), redraws));
                }
                redraws += 1;
                if redraws >= MAX_REDRAWS_PER_REPLICATE {
                    return Err(Error::Degenerate(format!(
                        "replicate {i}: no usable resample after {redraws} draws"
                    )));
                }
            }
        })
        .collect();

    let mut stats = Vec::with_capacity(cfg.replicates);
    let mut redraws = 0u64;
    for r in results {
        let (s, k) = r?;
        stats.push(s);
        redraws += u64::from(k);
    }
    Ok((stats, redraws))
}

/// Nearest-rank percentile of ascending `sorted` data: the smallest value
/// whose empirical CDF reaches `p`. Always returns an observed value.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let n = sorted.len();
    let x = p.clamp(0.0, 1.0) * n as f64;
    // p * n is often an integer up to representation error (0.975 * 10000)
    let rank = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    let rank = (rank as usize).clamp(1, n);
    sorted[rank - 1]
}

/// `(lo, hi)` central interval of `values` at `cfg`'s width.
pub(crate) fn central_interval(values: &mut [f64], cfg: &BootstrapConfig) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let (pl, ph) = cfg.tail_probabilities();
    (
        percentile_nearest_rank(values, pl),
        percentile_nearest_rank(values, ph),
    )
}
