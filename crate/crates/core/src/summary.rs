//! Posterior summaries: means, equal-tailed and HPD intervals, batch-means
//! Monte Carlo standard errors, fitted surfaces and effect correlations.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::{self, EffectBasis};
use crate::sampler::Chain;

/// Shortest chain accepted by [`mcse`].
pub const MIN_MCSE_LENGTH: usize = 100;

pub fn mean(draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    Ok(draws.iter().sum::<f64>() / draws.len() as f64)
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// ascending `sorted` data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn sorted_copy(draws: &[f64]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    if draws.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN among draws".into()));
    }
    let mut s = draws.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(s)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("interval level must lie in (0, 1), got {level}")))
    }
}

pub fn equal_tailed(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let s = sorted_copy(draws)?;
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail)))
}

/// Shortest interval `[Q(a), Q(a + level)]` of the type-7 quantile function
/// `Q`. The width is piecewise linear in `a`, so only the points where `a`
/// or `a + level` meets an order statistic need checking.
pub fn hpd(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let s = sorted_copy(draws)?;
    let n = s.len();
    if n == 1 {
        return Ok((s[0], s[0]));
    }
    let grid = (n - 1) as f64;
    let max_a = 1.0 - level;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut consider = |a: f64| {
        let a = a.clamp(0.0, max_a);
        let lo = quantile_sorted(&s, a);
        let hi = quantile_sorted(&s, a + level);
        if hi - lo < best.0 {
            best = (hi - lo, lo, hi);
        }
    };
    for i in 0..n {
        let u = i as f64 / grid;
        if u <= max_a {
            consider(u);
        }
        if u >= level {
            consider(u - level);
        }
    }
    consider(max_a);
    Ok((best.1, best.2))
}

/// Batch-means Monte Carlo standard error of the mean with batch size
/// `floor(sqrt(N))`.
pub fn mcse(draws: &[f64]) -> Result<f64> {
    let n = draws.len();
    if n < MIN_MCSE_LENGTH {
        return Err(Error::ChainTooShort {
            len: n,
            min: MIN_MCSE_LENGTH,
        });
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = n / b;
    let used = &draws[..a * b];
    let overall = used.iter().sum::<f64>() / used.len() as f64;
    let ss: f64 = used
        .chunks_exact(b)
        .map(|c| {
            let m = c.iter().sum::<f64>() / b as f64;
            (m - overall).powi(2)
        })
        .sum();
    let sigma2 = b as f64 * ss / (a - 1) as f64;
    Ok((sigma2 / used.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub eqt_lo: f64,
    pub eqt_hi: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    /// Absent when the chain is shorter than [`MIN_MCSE_LENGTH`].
    pub mcse: Option<f64>,
}

impl ParameterSummary {
    pub fn from_draws(name: &str, draws: &[f64], level: f64) -> Result<Self> {
        let (eqt_lo, eqt_hi) = equal_tailed(draws, level)?;
        let (hpd_lo, hpd_hi) = hpd(draws, level)?;
        Ok(ParameterSummary {
            name: name.to_string(),
            mean: mean(draws)?,
            eqt_lo,
            eqt_hi,
            hpd_lo,
            hpd_hi,
            mcse: mcse(draws).ok(),
        })
    }

    pub fn eqt_covers(&self, value: f64) -> bool {
        self.eqt_lo <= value && value <= self.eqt_hi
    }

    pub fn hpd_covers(&self, value: f64) -> bool {
        self.hpd_lo <= value && value <= self.hpd_hi
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub level: f64,
    pub draws: usize,
    pub parameters: Vec<ParameterSummary>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub acceptance_rates: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl FitSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Summaries of named columns of draws.
pub fn summarize_columns(names: &[String], columns: &[Vec<f64>], level: f64) -> Result<FitSummary> {
    if names.len() != columns.len() {
        return Err(Error::mismatch("column count", names.len(), columns.len()));
    }
    let draws = columns.first().map_or(0, Vec::len);
    if draws == 0 {
        return Err(Error::EmptyChain);
    }
    let parameters = names
        .iter()
        .zip(columns)
        .map(|(n, c)| ParameterSummary::from_draws(n, c, level))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitSummary {
        level,
        draws,
        parameters,
        acceptance_rates: BTreeMap::new(),
        wall_time: None,
    })
}

/// Summaries of every retained column of `chain`.
pub fn summarize_chain(chain: &Chain, level: f64) -> Result<FitSummary> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let columns: Vec<Vec<f64>> = (0..chain.width()).map(|j| chain.column_at(j)).collect();
    let mut s = summarize_columns(&chain.columns, &columns, level)?;
    s.acceptance_rates = chain.acceptance_rates.clone();
    s.wall_time = Some(chain.wall_time());
    Ok(s)
}

/// Posterior mean of `g^{-1}(eta)` over the retained draws.
pub fn fitted_surface(chain: &Chain, x: &DesignMatrix, basis: &EffectBasis) -> Result<Vec<f64>> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let link = chain.spec.family.canonical_link();
    let mut sum = vec![0.0; x.n()];
    for i in 0..chain.len() {
        let state = chain.state(i)?;
        let eta = model::linear_predictor(&chain.spec, x, basis, &state)?;
        sum.iter_mut().zip(&eta).for_each(|(s, e)| *s += link.inverse(*e));
    }
    let m = chain.len() as f64;
    Ok(sum.into_iter().map(|s| s / m).collect())
}

/// Euclidean distance between a true mean surface and a fitted one.
pub fn error_norm(truth: &[f64], fitted: &[f64]) -> Result<f64> {
    if truth.len() != fitted.len() {
        return Err(Error::mismatch("surface length", truth.len(), fitted.len()));
    }
    Ok(truth
        .iter()
        .zip(fitted)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Above this many pairs, correlations are computed on a random subset.
pub const MAX_EXACT_PAIRS: usize = 100_000;
/// Size of that random subset.
pub const SAMPLED_PAIRS: usize = 20_000;

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationHistogram {
    /// `bins + 1` edges spanning `[-1, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub pairs: usize,
    pub sampled: bool,
    /// Indices of zero-variance effects left out of every pair.
    pub excluded: Vec<usize>,
    pub mean_abs: f64,
    pub max_abs: f64,
}

impl CorrelationHistogram {
    /// Fraction of pairs with `|r| <= bound`.
    pub fn fraction_within(&self, bound: f64) -> f64 {
        let mut inside = 0;
        for (i, c) in self.counts.iter().enumerate() {
            let mid = 0.5 * (self.edges[i] + self.edges[i + 1]);
            if mid.abs() <= bound {
                inside += c;
            }
        }
        inside as f64 / self.pairs.max(1) as f64
    }
}

/// Pairwise sample correlations between columns, binned on `[-1, 1]`.
pub fn correlation_histogram(columns: &[Vec<f64>], bins: usize, seed: u64) -> Result<CorrelationHistogram> {
    if columns.len() < 2 {
        return Err(Error::InvalidArgument("correlations need at least 2 effects".into()));
    }
    let n = columns[0].len();
    if n < MIN_MCSE_LENGTH {
        return Err(Error::ChainTooShort {
            len: n,
            min: MIN_MCSE_LENGTH,
        });
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let mut excluded = Vec::new();
    let mut unit: Vec<Vec<f64>> = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        let m = c.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = c.iter().map(|v| v - m).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * (1.0 + m.abs()) * (n as f64).sqrt() {
            excluded.push(j);
        } else {
            unit.push(centered.into_iter().map(|v| v / norm).collect());
        }
    }
    let k = unit.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "fewer than 2 effects with non-zero variance ({} excluded)",
            excluded.len()
        )));
    }
    let total = k * (k - 1) / 2;
    let pair = |idx: usize| -> (usize, usize) {
        // row i holds pairs (i, i+1..k); find i by walking the row starts
        let mut i = 0;
        let mut start = 0;
        loop {
            let len = k - 1 - i;
            if idx < start + len {
                return (i, i + 1 + idx - start);
            }
            start += len;
            i += 1;
        }
    };
    let corr = |i: usize, j: usize| -> f64 {
        unit[i]
            .iter()
            .zip(&unit[j])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    };
    let mut values = Vec::new();
    let sampled = total > MAX_EXACT_PAIRS;
    if sampled {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut picks = index::sample(&mut rng, total, SAMPLED_PAIRS).into_vec();
        picks.sort_unstable();
        // walk rows once for the sorted picks
        let (mut i, mut start) = (0usize, 0usize);
        for idx in picks {
            while idx >= start + (k - 1 - i) {
                start += k - 1 - i;
                i += 1;
            }
            values.push(corr(i, i + 1 + idx - start));
        }
    } else {
        for idx in 0..total {
            let (i, j) = pair(idx);
            values.push(corr(i, j));
        }
    }
    let width = 2.0 / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| -1.0 + b as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for r in &values {
        let b = (((r + 1.0) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mean_abs = values.iter().map(|r| r.abs()).sum::<f64>() / values.len() as f64;
    let max_abs = values.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(CorrelationHistogram {
        edges,
        counts,
        pairs: values.len(),
        sampled,
        excluded,
        mean_abs,
        max_abs,
    })
}

/// Histogram of pairwise posterior correlations among a chain's effects.
pub fn effect_correlations(chain: &Chain, bins: usize, seed: u64) -> Result<CorrelationHistogram> {
    if chain.effects < 2 {
        return Err(Error::InvalidArgument("correlations need at least 2 effects".into()));
    }
    let columns: Vec<Vec<f64>> = (0..chain.effects)
        .map(|j| {
            chain
                .effect_draws(j)
                .ok_or_else(|| Error::InvalidArgument("random-effect draws were not retained".into()))
        })
        .collect::<Result<_>>()?;
    correlation_histogram(&columns, bins, seed)
}
