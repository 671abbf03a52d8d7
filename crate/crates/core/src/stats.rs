//! Empirical-distribution utilities backing the experiment suites:
//! Kolmogorov–Smirnov distances with asymptotic p-values, chi-square
//! independence on quantile-binned tables, and the overshoot-uniformity
//! check for the ladder structure.

use crate::luka::{sample_ladder_epoch, LadderSample};
use crate::numeric::kolmogorov_survival;
use crate::rng::RngStream;
use crate::stick::StickLaw;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample of size {got} below the minimum {need}")]
    Undersized { got: usize, need: usize },
    #[error("paired samples differ in length ({x} vs {y})")]
    UnpairedSamples { x: usize, y: usize },
}

/// Empirical CDF over a sorted copy of the sample.
#[derive(Clone, Debug)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Self {
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
        Ecdf { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Right-continuous: the fraction of the sample `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: f64,
}

const KS_MIN_SAMPLES: usize = 10;

/// One-sample KS against an analytic CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsReport, StatsError> {
    if sample.len() < KS_MIN_SAMPLES {
        return Err(StatsError::Undersized {
            got: sample.len(),
            need: KS_MIN_SAMPLES,
        });
    }
    let ecdf = Ecdf::new(sample);
    let n = ecdf.len() as f64;
    let mut stat = 0.0f64;
    for (i, &x) in ecdf.sorted().iter().enumerate() {
        let f = cdf(x);
        stat = stat
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    Ok(KsReport {
        statistic: stat,
        p_value: kolmogorov_survival(n.sqrt() * stat),
        n_effective: n,
    })
}

/// Two-sample KS.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport, StatsError> {
    let small = a.len().min(b.len());
    if small < KS_MIN_SAMPLES {
        return Err(StatsError::Undersized {
            got: small,
            need: KS_MIN_SAMPLES,
        });
    }
    let ea = Ecdf::new(a);
    let eb = Ecdf::new(b);
    let mut stat = 0.0f64;
    for &x in ea.sorted().iter().chain(eb.sorted().iter()) {
        stat = stat.max((ea.eval(x) - eb.eval(x)).abs());
    }
    let n_eff = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok(KsReport {
        statistic: stat,
        p_value: kolmogorov_survival(n_eff.sqrt() * stat),
        n_effective: n_eff,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Chi2Report {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    pub n: usize,
}

/// Chi-square independence test on a `k×k` quantile-binned contingency
/// table. Quantile (not equal-width) bins keep heavy-tailed marginals from
/// collapsing into a single cell, and make the statistic invariant under
/// strictly monotone transforms of either coordinate. Tied bin edges are
/// merged, so heavily discrete marginals may end up with fewer bins.
pub fn chi2_independence(x: &[f64], y: &[f64], k: usize) -> Result<Chi2Report, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::UnpairedSamples {
            x: x.len(),
            y: y.len(),
        });
    }
    let need = 20 * k * k;
    if x.len() < need {
        return Err(StatsError::Undersized {
            got: x.len(),
            need,
        });
    }
    let ex = quantile_edges(x, k);
    let ey = quantile_edges(y, k);
    let rows = ex.len() + 1;
    let cols = ey.len() + 1;
    let mut table = vec![0u64; rows * cols];
    for (&xi, &yi) in x.iter().zip(y) {
        let r = ex.partition_point(|&e| e < xi);
        let c = ey.partition_point(|&e| e < yi);
        table[r * cols + c] += 1;
    }
    let n = x.len() as f64;
    let row_sums: Vec<f64> = (0..rows)
        .map(|r| (0..cols).map(|c| table[r * cols + c] as f64).sum())
        .collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| table[r * cols + c] as f64).sum())
        .collect();
    let mut stat = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let expected = row_sums[r] * col_sums[c] / n;
            if expected > 0.0 {
                let d = table[r * cols + c] as f64 - expected;
                stat += d * d / expected;
            }
        }
    }
    let live_rows = row_sums.iter().filter(|&&s| s > 0.0).count();
    let live_cols = col_sums.iter().filter(|&&s| s > 0.0).count();
    let dof = live_rows.saturating_sub(1) * live_cols.saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
    };
    Ok(Chi2Report {
        statistic: stat,
        p_value,
        dof,
        n: x.len(),
    })
}

/// Interior bin edges at the `i/k` quantiles, deduplicated. A value equal to
/// an edge falls in the bin to its left... strictly: bin(r) = #{edges < v}.
fn quantile_edges(sample: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let mut edges: Vec<f64> = (1..k)
        .map(|i| sorted[i * sorted.len() / k])
        .collect();
    edges.dedup();
    edges
}

/// Per-conditioning-value report of the overshoot-uniformity check:
/// conditionally on the ladder stick having `xi` children, the overshoot is
/// uniform on `{0, ..., xi-1}`.
#[derive(Clone, Debug, Serialize)]
pub struct OvershootCell {
    pub xi: u64,
    pub samples: u64,
    pub counts: Vec<u64>,
    pub statistic: f64,
    pub p_value: f64,
    /// Below the sample floor: reported but not to be asserted on.
    pub sparse: bool,
}

/// Simulates `budget` independent first-ladder epochs of the law's walk and
/// chi-squares each conditional overshoot histogram against the uniform law.
pub fn overshoot_uniformity(
    law: &StickLaw,
    budget: usize,
    min_samples: u64,
    rng: &mut RngStream,
) -> Vec<OvershootCell> {
    let sampler = law.sampler();
    let cap = 1_000_000;
    let mut by_xi: std::collections::BTreeMap<u64, Vec<u64>> = std::collections::BTreeMap::new();
    let mut done = 0usize;
    while done < budget {
        let Some(LadderSample { z, xi, .. }) = sample_ladder_epoch(law, &sampler, cap, rng) else {
            continue; // censored excursion: retry
        };
        by_xi.entry(xi).or_insert_with(|| vec![0; xi as usize])[z as usize] += 1;
        done += 1;
    }
    by_xi
        .into_iter()
        .map(|(xi, counts)| {
            let samples: u64 = counts.iter().sum();
            let expected = samples as f64 / xi as f64;
            let statistic: f64 = counts
                .iter()
                .map(|&o| {
                    let d = o as f64 - expected;
                    d * d / expected
                })
                .sum();
            let dof = xi as usize - 1;
            let p_value = if dof == 0 {
                1.0
            } else {
                1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
            };
            OvershootCell {
                xi,
                samples,
                counts,
                statistic,
                p_value,
                sparse: samples < min_samples,
            }
        })
        .collect()
}
