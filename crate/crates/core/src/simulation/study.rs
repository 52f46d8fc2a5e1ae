use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_dataset, SimTruth};
use crate::diagnostics::{
    credible_region_simplex, posterior_summary, ppc_slor, quantile, PpcOptions, RegionOptions,
};
use crate::error::{PlcmError, Result};
use crate::likelihood::all_patterns;
use crate::model::Dataset;
use crate::prediction::predict_individual;
use crate::priors::{default_hyperpriors, BetaPrior, HyperPriors};
use crate::rng::stream_rng;
use crate::sampler::{draw_dirichlet, run_chains, McmcOptions};

/// Data mix used for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Bronze data only, gold-standard results discarded.
    BrsOnly,
    BrsGs,
    /// Gold-standard cases only. Fitted with the exact Dirichlet posterior.
    GsOnly,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::BrsOnly, Arm::BrsGs, Arm::GsOnly];
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arm::BrsOnly => "brs_only",
            Arm::BrsGs => "brs_gs",
            Arm::GsOnly => "gs_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub mcmc: McmcOptions,
    /// `None`: non-informative defaults.
    pub hyper: Option<HyperPriors>,
    pub arms: Vec<Arm>,
    pub region: RegionOptions,
    /// Credible level of the marginal intervals.
    pub interval_level: f64,
    /// Pairwise SLOR check on each MCMC fit when set.
    pub ppc: Option<PpcOptions>,
    /// Draws from the exact posterior of the gold-standard-only arm.
    pub gs_only_draws: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            mcmc: McmcOptions::default(),
            hyper: None,
            arms: Arm::ALL.to_vec(),
            region: RegionOptions::default(),
            interval_level: 0.95,
            ppc: None,
            gs_only_draws: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateArm {
    pub arm: Arm,
    pub pi_mean: Vec<f64>,
    pub pi_lower: Vec<f64>,
    pub pi_upper: Vec<f64>,
    pub covered: Vec<bool>,
    /// Three pathogens only.
    pub region_area: Option<f64>,
    pub region_covers: Option<bool>,
    /// Largest BGR statistic over the etiology fractions (MCMC arms).
    pub max_pi_bgr: Option<f64>,
    /// Predicted cause probabilities for every bronze pattern, in binary
    /// counting order (MCMC arms, at most four pathogens).
    pub predictions: Vec<Vec<f64>>,
    /// Fraction of defined SLORs beyond 2 in absolute value.
    pub slor_exceedance: Option<f64>,
}

impl ReplicateArm {
    pub fn all_covered(&self) -> bool {
        self.covered.iter().all(|&c| c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub data_seed: u64,
    pub mcmc_seed: u64,
    pub arms: Vec<ReplicateArm>,
}

impl ReplicateRecord {
    pub fn arm(&self, arm: Arm) -> Option<&ReplicateArm> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub n_replicates: usize,
    /// Average posterior mean minus truth, per component.
    pub bias: Vec<f64>,
    pub coverage: Vec<f64>,
    /// Replicates whose intervals cover every component.
    pub n_all_covered: usize,
    pub mean_region_area: Option<f64>,
    pub region_coverage: Option<f64>,
    pub max_pi_bgr: Option<f64>,
    pub mean_slor_exceedance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub truth: SimTruth,
    pub options: StudyOptions,
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<ArmSummary>,
}

impl StudyReport {
    pub fn summary(&self, arm: Arm) -> Option<&ArmSummary> {
        self.summaries.iter().find(|s| s.arm == arm)
    }
}

fn mcmc_seed(base: u64, replicate: usize) -> u64 {
    base.wrapping_add(1000 * replicate as u64)
}

fn interval_bounds(level: f64) -> (f64, f64) {
    ((1.0 - level) / 2.0, (1.0 + level) / 2.0)
}

fn fit_mcmc(arm: Arm, ds: &Dataset, truth: &SimTruth, hyper: &HyperPriors, opts: &StudyOptions, seed: u64) -> Result<ReplicateArm> {
    let data = match arm {
        Arm::BrsOnly => ds.without_gs(),
        _ => ds.clone(),
    };
    let mcmc = McmcOptions { seed, ..opts.mcmc.clone() };
    let chains = run_chains(&data, hyper, &mcmc)?;
    let j = truth.panel.len();
    let (lo_p, hi_p) = interval_bounds(opts.interval_level);
    let summary = posterior_summary(&chains, &data.panel);
    let mut pi_mean = Vec::with_capacity(j);
    let (mut pi_lower, mut pi_upper) = (Vec::with_capacity(j), Vec::with_capacity(j));
    for k in 0..j {
        let d: Vec<f64> = chains.draws().map(|p| p.pi[k]).collect();
        pi_mean.push(d.iter().sum::<f64>() / d.len() as f64);
        pi_lower.push(quantile(&d, lo_p));
        pi_upper.push(quantile(&d, hi_p));
    }
    let (region_area, region_covers) = if j == 3 {
        let draws: Vec<Vec<f64>> = chains.draws().map(|p| p.pi.clone()).collect();
        let r = credible_region_simplex(&draws, &opts.region)?;
        (Some(r.area), Some(r.contains(&truth.params.pi)))
    } else {
        (None, None)
    };
    let predictions = if j <= 4 {
        all_patterns(j)
            .map(|m| predict_individual(&m, &chains).map(|p| p.p_hat))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let slor_exceedance = match &opts.ppc {
        Some(p) => ppc_slor(&data, &chains, p)?.exceedance_fraction(2.0),
        None => None,
    };
    Ok(ReplicateArm {
        arm,
        covered: covered(&truth.params.pi, &pi_lower, &pi_upper),
        pi_mean,
        pi_lower,
        pi_upper,
        region_area,
        region_covers,
        max_pi_bgr: summary.max_bgr("pi_"),
        predictions,
        slor_exceedance,
    })
}

fn covered(truth: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    truth.iter().zip(lo.iter().zip(hi)).map(|(t, (l, h))| l <= t && t <= h).collect()
}

/// Exact posterior `Dirichlet(a + gold-standard cause counts)`.
fn fit_gs_only(ds: &Dataset, truth: &SimTruth, hyper: &HyperPriors, opts: &StudyOptions, seed: u64) -> Result<ReplicateArm> {
    let mut w = hyper.pi_weights.clone();
    for c in ds.cases().filter_map(|s| s.gs_cause()) {
        w[c] += 1.0;
    }
    let total: f64 = w.iter().sum();
    let (lo_p, hi_p) = interval_bounds(opts.interval_level);
    let marg: Vec<BetaPrior> = w.iter().map(|&a| BetaPrior::new(a, total - a)).collect();
    let pi_lower: Vec<f64> = marg.iter().map(|b| b.quantile(lo_p)).collect();
    let pi_upper: Vec<f64> = marg.iter().map(|b| b.quantile(hi_p)).collect();
    let (region_area, region_covers) = if w.len() == 3 {
        let mut rng = stream_rng(seed, 0);
        let draws: Vec<Vec<f64>> = (0..opts.gs_only_draws).map(|_| draw_dirichlet(&w, &mut rng)).collect();
        let r = credible_region_simplex(&draws, &opts.region)?;
        (Some(r.area), Some(r.contains(&truth.params.pi)))
    } else {
        (None, None)
    };
    Ok(ReplicateArm {
        arm: Arm::GsOnly,
        covered: covered(&truth.params.pi, &pi_lower, &pi_upper),
        pi_mean: w.iter().map(|a| a / total).collect(),
        pi_lower,
        pi_upper,
        region_area,
        region_covers,
        max_pi_bgr: None,
        predictions: Vec::new(),
        slor_exceedance: None,
    })
}

fn run_replicate(truth: &SimTruth, r: usize, hyper: &HyperPriors, opts: &StudyOptions) -> Result<ReplicateRecord> {
    let data_seed = truth.seed.wrapping_add(r as u64);
    let ds = simulate_dataset(&SimTruth { seed: data_seed, ..truth.clone() })?;
    let seed = mcmc_seed(opts.mcmc.seed, r);
    let arms = opts
        .arms
        .iter()
        .map(|&arm| match arm {
            Arm::GsOnly => fit_gs_only(&ds, truth, hyper, opts, seed),
            _ => fit_mcmc(arm, &ds, truth, hyper, opts, seed),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateRecord {
        replicate: r,
        data_seed,
        mcmc_seed: seed,
        arms,
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(arm: Arm, truth: &SimTruth, records: &[ReplicateRecord]) -> ArmSummary {
    let fits: Vec<&ReplicateArm> = records.iter().filter_map(|r| r.arm(arm)).collect();
    let n = fits.len();
    let j = truth.panel.len();
    let bias = (0..j)
        .map(|k| fits.iter().map(|f| f.pi_mean[k] - truth.params.pi[k]).sum::<f64>() / n as f64)
        .collect();
    let coverage = (0..j)
        .map(|k| fits.iter().filter(|f| f.covered[k]).count() as f64 / n as f64)
        .collect();
    ArmSummary {
        arm,
        n_replicates: n,
        bias,
        coverage,
        n_all_covered: fits.iter().filter(|f| f.all_covered()).count(),
        mean_region_area: mean_of(fits.iter().filter_map(|f| f.region_area)),
        region_coverage: mean_of(fits.iter().filter_map(|f| f.region_covers.map(|c| f64::from(u8::from(c))))),
        max_pi_bgr: fits.iter().filter_map(|f| f.max_pi_bgr).reduce(f64::max),
        mean_slor_exceedance: mean_of(fits.iter().filter_map(|f| f.slor_exceedance)),
    }
}

/// Simulates `n_replicates` datasets (data seed `truth.seed + r`), fits
/// every requested arm (MCMC base seed `mcmc.seed + 1000 r`) and aggregates
/// bias, interval coverage and region size per arm. Replicates run
/// concurrently; records are returned in replicate order.
pub fn replicate_study(truth: &SimTruth, n_replicates: usize, opts: &StudyOptions) -> Result<StudyReport> {
    truth.check()?;
    if n_replicates == 0 || opts.arms.is_empty() {
        return Err(PlcmError::usage("a study needs at least one replicate and one arm"));
    }
    let hyper = opts.hyper.clone().unwrap_or_else(|| default_hyperpriors(&truth.panel));
    let records = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            run_replicate(truth, r, &hyper, opts).map_err(|e| PlcmError::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = opts.arms.iter().map(|&a| summarize(a, truth, &records)).collect();
    Ok(StudyReport {
        truth: truth.clone(),
        options: opts.clone(),
        records,
        summaries,
    })
}
