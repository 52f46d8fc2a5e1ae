use serde::{Deserialize, Serialize};

use super::convergence::{bgr_statistic, effective_sample_size};
use crate::model::{param_names, PathogenPanel};
use crate::sampler::ChainSet;

pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// At [`SUMMARY_PROBS`].
    pub quantiles: [f64; 5],
    /// `None` with fewer than two chains or too few draws.
    pub bgr: Option<f64>,
    pub ess: f64,
}

impl ParamSummary {
    pub fn interval95(&self) -> (f64, f64) {
        (self.quantiles[0], self.quantiles[4])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_chains: usize,
    pub n_draws: usize,
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Largest finite BGR statistic among parameters whose name starts with
    /// `prefix`.
    pub fn max_bgr(&self, prefix: &str) -> Option<f64> {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .filter_map(|p| p.bgr.filter(|r| r.is_finite()))
            .reduce(f64::max)
    }
}

/// Quantile of sorted data, linear interpolation between order statistics
/// (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn summarize_traces(name: impl Into<String>, traces: &[Vec<f64>]) -> ParamSummary {
    let mut pooled: Vec<f64> = traces.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let sd = if pooled.len() > 1 {
        (pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    pooled.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.into(),
        mean,
        sd,
        quantiles: SUMMARY_PROBS.map(|p| quantile_sorted(&pooled, p)),
        bgr: bgr_statistic(traces).ok(),
        ess: effective_sample_size(traces),
    }
}

/// Mean, SD, quantiles, BGR and effective sample size of every parameter.
pub fn posterior_summary(chains: &ChainSet, panel: &PathogenPanel) -> PosteriorSummary {
    let names = param_names(panel);
    let flat: Vec<Vec<Vec<f64>>> = chains
        .chains
        .iter()
        .map(|c| c.draws.iter().map(|d| d.to_flat()).collect())
        .collect();
    let params = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let traces: Vec<Vec<f64>> = flat.iter().map(|c| c.iter().map(|d| d[k]).collect()).collect();
            summarize_traces(name, &traces)
        })
        .collect();
    PosteriorSummary {
        n_chains: chains.n_chains(),
        n_draws: chains.n_draws(),
        params,
    }
}
