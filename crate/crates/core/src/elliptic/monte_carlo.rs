//! Monte Carlo statistics of real eigenvalues.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::trial_rng;
use crate::stats::{MeanEstimate, RunningStats};

use super::{real_eigenvalues, sample_elliptic_with, EllipticParams};

/// Trials per work unit. Units are merged in index order so the result does
/// not depend on the thread count.
const CHUNK: u64 = 512;

fn chunk_ranges(trials: u64) -> Vec<(u64, u64)> {
    (0..trials.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(trials)))
        .collect()
}

/// The real eigenvalues of trial `index`.
fn trial_eigenvalues(p: &EllipticParams, seed: u64, index: u64) -> Result<Vec<f64>> {
    let mut rng = trial_rng(seed, index);
    real_eigenvalues(&sample_elliptic_with(p, &mut rng))
}

/// Estimate of the mean number of real eigenvalues over `trials` draws.
pub fn mean_real_count(p: &EllipticParams, trials: u64, seed: u64) -> Result<MeanEstimate> {
    Ok(real_eigenvalue_histogram(p, trials, seed, &[])?.count)
}

/// Per-bin mean density of real eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealCountHistogram {
    pub n: usize,
    pub tau: f64,
    pub seed: u64,
    pub edges: Vec<f64>,
    /// Mean number of real eigenvalues per trial in each bin, divided by the
    /// bin width, with its standard error.
    pub density: Vec<MeanEstimate>,
    /// Mean total number of real eigenvalues per trial.
    pub count: MeanEstimate,
}

impl RealCountHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// z-score of bin `b` against the density `expected` averaged over the bin.
    ///
    /// A bin with no hits has zero sample standard error; it is then scored
    /// against the Poisson error `sqrt(p / trials) / width` of the expected hit
    /// rate `p = expected * width`.
    pub fn bin_z_score(&self, b: usize, expected: f64) -> f64 {
        let est = &self.density[b];
        if est.stderr > 0.0 {
            return est.z_score(expected);
        }
        let width = self.edges[b + 1] - self.edges[b];
        let null = (expected.max(0.0) * width / est.samples.max(1) as f64).sqrt() / width;
        MeanEstimate {
            stderr: null,
            ..*est
        }
        .z_score(expected)
    }
}

/// Histogram of real eigenvalues on the bins given by ascending `edges`
/// (empty `edges` gives only the total count).
pub fn real_eigenvalue_histogram(
    p: &EllipticParams,
    trials: u64,
    seed: u64,
    edges: &[f64],
) -> Result<RealCountHistogram> {
    p.validate()?;
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    if edges.len() == 1 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("edges", "need at least two strictly ascending bin edges"));
    }
    let bins = edges.len().saturating_sub(1);
    let chunks: Vec<Result<(RunningStats, Vec<RunningStats>)>> = chunk_ranges(trials)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut total = RunningStats::new();
            let mut per_bin = vec![RunningStats::new(); bins];
            let mut hits = vec![0usize; bins];
            for i in lo..hi {
                let ev = trial_eigenvalues(p, seed, i)?;
                total.push(ev.len() as f64);
                if bins > 0 {
                    hits.iter_mut().for_each(|h| *h = 0);
                    for &v in &ev {
                        if v >= edges[0] && v < edges[bins] {
                            let b = edges.partition_point(|&e| e <= v) - 1;
                            hits[b] += 1;
                        }
                    }
                    for (b, s) in per_bin.iter_mut().enumerate() {
                        s.push(hits[b] as f64 / (edges[b + 1] - edges[b]));
                    }
                }
            }
            Ok((total, per_bin))
        })
        .collect();
    let mut total = RunningStats::new();
    let mut per_bin = vec![RunningStats::new(); bins];
    for c in chunks {
        let (t, b) = c?;
        total.merge(&t);
        for (acc, s) in per_bin.iter_mut().zip(&b) {
            acc.merge(s);
        }
    }
    Ok(RealCountHistogram {
        n: p.n,
        tau: p.tau,
        seed,
        edges: edges.to_vec(),
        density: per_bin.iter().map(RunningStats::estimate).collect(),
        count: total.estimate(),
    })
}
