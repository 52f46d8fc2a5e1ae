//! Data-augmented Gibbs sampler.
//!
//! Each sweep updates, in order:
//!
//! 1. the latent cause of every case without gold-standard data, from
//!    `Pr(I = j | .) ∝ pi_j * bronze_j(m) * silver_j(m_ss)`;
//! 2. bronze false positive rates,
//!    `psi_j ~ Beta(N_j + b1, n1 - U_j + n0 - N_j + b2)` where `N_j` counts
//!    positives at `j` among controls and among cases not caused by `j`;
//! 3. bronze true positive rates, `theta_j ~ Beta(S_j + c1, U_j - S_j + c2)`
//!    with `S_j` the positives at `j` among cases caused by `j`;
//! 4. silver true positive rates, `Beta(T_j + d1, V_j - T_j + d2)` counted over
//!    silver-measured cases only;
//! 5. etiology fractions, `pi ~ Dirichlet(a + U)` with `U_j` the number of
//!    cases currently caused by `j`.
//!
//! Cases with a gold-standard measurement keep their gold-standard cause.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PlcmError, Result};
use crate::likelihood::{bernoulli_ln, brs_component_loglik, ss_component_loglik, SsSemantics};
use crate::model::{Dataset, LatentAssignment, ModelParams, PathogenPanel, SubjectRecord};
use crate::priors::{BetaPrior, HyperPriors};
use crate::rng::{chain_seed, stream_rng, PlcmRng};

/// Rates are kept this far away from 0 and 1.
pub const RATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcOptions {
    pub n_burnin: usize,
    /// Post burn-in iterations per chain; every `thin`-th is stored.
    pub n_keep: usize,
    pub n_chains: usize,
    pub thin: usize,
    pub seed: u64,
    pub ss_mode: SsSemantics,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            n_burnin: 10_000,
            n_keep: 50_000,
            n_chains: 3,
            thin: 1,
            seed: 1,
            ss_mode: SsSemantics::Strict,
        }
    }
}

impl McmcOptions {
    pub fn check(&self) -> Result<()> {
        if self.n_keep == 0 || self.n_chains == 0 || self.thin == 0 {
            return Err(PlcmError::usage("n_keep, n_chains and thin must be positive"));
        }
        if self.n_keep < self.thin {
            return Err(PlcmError::usage("n_keep must be at least thin"));
        }
        Ok(())
    }

    /// Stored draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        self.n_keep / self.thin
    }
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub seed: u64,
    pub n_burnin: usize,
    pub thin: usize,
    pub draws: Vec<ModelParams>,
    /// `cause_counts[i][j]`: stored iterations in which case `i` had cause `j`.
    /// Empty when the chain was loaded from a draws file.
    pub cause_counts: Vec<Vec<u32>>,
}

impl Chain {
    /// Sweep number (1-based, counting burn-in) of stored draw `k`.
    pub fn iteration(&self, k: usize) -> usize {
        self.n_burnin + (k + 1) * self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    pub chains: Vec<Chain>,
}

impl ChainSet {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_draws() == 0
    }

    pub fn n_pathogens(&self) -> usize {
        self.draws().next().map_or(0, |d| d.pi.len())
    }

    /// All stored draws, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &ModelParams> + Clone {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    /// Within-sample cause probabilities of every case, pooled over chains.
    /// `None` if cause frequencies were not recorded.
    pub fn within_sample_probabilities(&self) -> Option<Vec<Vec<f64>>> {
        let first = self.chains.first()?;
        if first.cause_counts.is_empty() && !first.draws.is_empty() {
            return None;
        }
        let n_cases = first.cause_counts.len();
        let j = self.n_pathogens();
        let mut acc = vec![vec![0.0; j]; n_cases];
        for chain in &self.chains {
            if chain.cause_counts.len() != n_cases {
                return None;
            }
            for (row, counts) in acc.iter_mut().zip(&chain.cause_counts) {
                for (a, &c) in row.iter_mut().zip(counts) {
                    *a += f64::from(c);
                }
            }
        }
        let total = self.n_draws() as f64;
        for row in &mut acc {
            for a in row.iter_mut() {
                *a /= total;
            }
        }
        Some(acc)
    }

    /// Scalar trace of one parameter in every chain.
    pub fn traces(&self, f: impl Fn(&ModelParams) -> f64 + Copy) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.draws.iter().map(f).collect()).collect()
    }
}

/// Counts that the rate and etiology conditionals depend on, tallied from a
/// dataset and a latent assignment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SufficientStats {
    pub n_cases: u64,
    pub n_controls: u64,
    /// `U_j`: cases with cause `j`.
    pub cause_counts: Vec<u64>,
    /// `S_j`: bronze positives at `j` among cases caused by `j`.
    pub own_positives: Vec<u64>,
    /// Bronze positives at `j` among all cases.
    pub case_positives: Vec<u64>,
    /// Bronze positives at `j` among controls.
    pub control_positives: Vec<u64>,
    /// Per silver column: silver-measured cases caused by the column's pathogen.
    pub ss_trials: Vec<u64>,
    /// Per silver column: positives among those cases (`T_j`).
    pub ss_positives: Vec<u64>,
}

impl SufficientStats {
    pub fn tally(ds: &Dataset, assign: &LatentAssignment) -> Self {
        let j = ds.panel.len();
        let mut st = SufficientStats {
            cause_counts: vec![0; j],
            own_positives: vec![0; j],
            case_positives: vec![0; j],
            control_positives: vec![0; j],
            ss_trials: vec![0; ds.panel.n_ss()],
            ss_positives: vec![0; ds.panel.n_ss()],
            ..Default::default()
        };
        let mut causes = assign.causes.iter();
        for s in &ds.subjects {
            if !s.case {
                st.n_controls += 1;
                for (acc, &m) in st.control_positives.iter_mut().zip(&s.brs) {
                    *acc += u64::from(m);
                }
                continue;
            }
            st.n_cases += 1;
            let c = *causes.next().expect("assignment shorter than case list");
            for (acc, &m) in st.case_positives.iter_mut().zip(&s.brs) {
                *acc += u64::from(m);
            }
            st.add_case(c, &s.brs, s.ss_measured(), &ds.panel);
        }
        st
    }

    fn add_case(&mut self, c: usize, brs: &[bool], ss: Option<&[bool]>, panel: &PathogenPanel) {
        self.cause_counts[c] += 1;
        self.own_positives[c] += u64::from(brs[c]);
        if let (Some(ss), Some(k)) = (ss, panel.ss_slot(c)) {
            self.ss_trials[k] += 1;
            self.ss_positives[k] += u64::from(ss[k]);
        }
    }

    /// `N_j`: positives at `j` among controls and cases not caused by `j`.
    pub fn false_positive_count(&self, j: usize) -> u64 {
        self.case_positives[j] - self.own_positives[j] + self.control_positives[j]
    }

    pub fn fpr_shape(&self, j: usize, hyper: &HyperPriors) -> BetaPrior {
        let n = self.false_positive_count(j);
        let trials = self.n_cases - self.cause_counts[j] + self.n_controls;
        BetaPrior::new(n as f64 + hyper.psi_brs[j].alpha, (trials - n) as f64 + hyper.psi_brs[j].beta)
    }

    pub fn tpr_brs_shape(&self, j: usize, hyper: &HyperPriors) -> BetaPrior {
        let s = self.own_positives[j];
        BetaPrior::new(
            s as f64 + hyper.theta_brs[j].alpha,
            (self.cause_counts[j] - s) as f64 + hyper.theta_brs[j].beta,
        )
    }

    /// Silver TPR posterior shape for silver column `k`.
    pub fn tpr_ss_shape(&self, k: usize, hyper: &HyperPriors) -> BetaPrior {
        let t = self.ss_positives[k];
        BetaPrior::new(
            t as f64 + hyper.theta_ss[k].alpha,
            (self.ss_trials[k] - t) as f64 + hyper.theta_ss[k].beta,
        )
    }

    pub fn etiology_weights(&self, hyper: &HyperPriors) -> Vec<f64> {
        hyper
            .pi_weights
            .iter()
            .zip(&self.cause_counts)
            .map(|(a, &u)| a + u as f64)
            .collect()
    }
}

/// Conditional shape of `psi_j` given the data and an assignment.
pub fn fpr_shape(j: usize, ds: &Dataset, assign: &LatentAssignment, hyper: &HyperPriors) -> BetaPrior {
    SufficientStats::tally(ds, assign).fpr_shape(j, hyper)
}

pub fn tpr_brs_shape(j: usize, ds: &Dataset, assign: &LatentAssignment, hyper: &HyperPriors) -> BetaPrior {
    SufficientStats::tally(ds, assign).tpr_brs_shape(j, hyper)
}

/// Conditional shape of the silver TPR of silver column `k`.
pub fn tpr_ss_shape(k: usize, ds: &Dataset, assign: &LatentAssignment, hyper: &HyperPriors) -> BetaPrior {
    SufficientStats::tally(ds, assign).tpr_ss_shape(k, hyper)
}

pub fn etiology_weights(assign: &LatentAssignment, hyper: &HyperPriors) -> Vec<f64> {
    let mut w = hyper.pi_weights.clone();
    for &c in &assign.causes {
        w[c] += 1.0;
    }
    w
}

pub fn draw_beta<R: Rng + ?Sized>(shape: BetaPrior, rng: &mut R) -> f64 {
    let d = Beta::new(shape.alpha, shape.beta).expect("positive Beta shape");
    d.sample(rng).clamp(RATE_FLOOR, 1.0 - RATE_FLOOR)
}

/// Dirichlet draw as normalized independent Gamma variates.
pub fn draw_dirichlet<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = weights
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive Dirichlet weight").sample(rng))
        .collect();
    let total: f64 = x.iter().sum();
    if total > 0.0 && total.is_finite() {
        x.iter_mut().for_each(|v| *v /= total);
    } else {
        // every Gamma variate underflowed; only possible with tiny weights
        let a: f64 = weights.iter().sum();
        x = weights.iter().map(|w| w / a).collect();
    }
    x
}

pub fn sample_fpr<R: Rng + ?Sized>(
    j: usize,
    ds: &Dataset,
    assign: &LatentAssignment,
    hyper: &HyperPriors,
    rng: &mut R,
) -> f64 {
    draw_beta(fpr_shape(j, ds, assign, hyper), rng)
}

pub fn sample_tpr_brs<R: Rng + ?Sized>(
    j: usize,
    ds: &Dataset,
    assign: &LatentAssignment,
    hyper: &HyperPriors,
    rng: &mut R,
) -> f64 {
    draw_beta(tpr_brs_shape(j, ds, assign, hyper), rng)
}

pub fn sample_tpr_ss<R: Rng + ?Sized>(
    k: usize,
    ds: &Dataset,
    assign: &LatentAssignment,
    hyper: &HyperPriors,
    rng: &mut R,
) -> f64 {
    draw_beta(tpr_ss_shape(k, ds, assign, hyper), rng)
}

pub fn sample_etiology<R: Rng + ?Sized>(assign: &LatentAssignment, hyper: &HyperPriors, rng: &mut R) -> Vec<f64> {
    draw_dirichlet(&etiology_weights(assign, hyper), rng)
}

/// Unnormalized log conditional weights of every cause for one case
/// without gold-standard data.
pub fn cause_log_weights(
    s: &SubjectRecord,
    panel: &PathogenPanel,
    params: &ModelParams,
    mode: SsSemantics,
) -> Vec<f64> {
    (0..params.pi.len())
        .map(|j| {
            let mut w = params.pi[j].ln() + brs_component_loglik(j, &s.brs, &params.theta_brs, &params.psi_brs);
            if let Some(ss) = s.ss_measured() {
                w += ss_component_loglik(j, ss, &params.theta_ss, panel.ss_panel(), mode);
            }
            w
        })
        .collect()
}

/// Draws the latent cause of a case. A gold-standard measurement fixes the
/// cause; otherwise the cause is drawn from its full conditional.
pub fn sample_latent_cause<R: Rng + ?Sized>(
    s: &SubjectRecord,
    panel: &PathogenPanel,
    params: &ModelParams,
    mode: SsSemantics,
    rng: &mut R,
) -> Result<usize> {
    if let Some(c) = s.gs_cause() {
        return Ok(c);
    }
    let cumulative = cumulative_probs(&cause_log_weights(s, panel, params, mode))
        .ok_or_else(|| PlcmError::ImpossibleRecord { case_id: s.id.clone() })?;
    Ok(pick(&cumulative, rng.random()))
}

/// Normalized cumulative probabilities from log weights, `None` if all
/// weights are zero.
fn cumulative_probs(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut acc = 0.0;
    let mut cum: Vec<f64> = log_w
        .iter()
        .map(|&w| {
            acc += (w - max).exp();
            acc
        })
        .collect();
    cum.iter_mut().for_each(|c| *c /= acc);
    Some(cum)
}

#[inline]
fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Cases without gold-standard data that share bronze and silver
/// measurements share a cause conditional.
struct Group {
    brs: Vec<bool>,
    ss: Option<Vec<bool>>,
    first_id: String,
    members: Vec<usize>,
}

struct Prepared<'a> {
    ds: &'a Dataset,
    j: usize,
    n_cases: usize,
    gs_cause: Vec<Option<usize>>,
    case_brs: Vec<&'a [bool]>,
    case_ss: Vec<Option<&'a [bool]>>,
    groups: Vec<Group>,
    case_positives: Vec<u64>,
    control_positives: Vec<u64>,
    n_controls: u64,
}

impl<'a> Prepared<'a> {
    fn new(ds: &'a Dataset) -> Result<Self> {
        ds.validate().into_result()?;
        let j = ds.panel.len();
        let mut gs_cause = Vec::new();
        let mut case_brs = Vec::new();
        let mut case_ss = Vec::new();
        let mut groups: Vec<Group> = Vec::new();
        let mut index: HashMap<(&[bool], Option<&[bool]>), usize> = HashMap::new();
        let mut case_positives = vec![0u64; j];
        let mut control_positives = vec![0u64; j];
        let mut n_controls = 0;
        for s in &ds.subjects {
            if !s.case {
                n_controls += 1;
                for (acc, &m) in control_positives.iter_mut().zip(&s.brs) {
                    *acc += u64::from(m);
                }
                continue;
            }
            let i = case_brs.len();
            for (acc, &m) in case_positives.iter_mut().zip(&s.brs) {
                *acc += u64::from(m);
            }
            let ss = s.ss_measured();
            case_brs.push(s.brs.as_slice());
            case_ss.push(ss);
            let gs = s.gs_cause();
            gs_cause.push(gs);
            if gs.is_none() {
                let g = *index.entry((s.brs.as_slice(), ss)).or_insert_with(|| {
                    groups.push(Group {
                        brs: s.brs.clone(),
                        ss: ss.map(|v| v.to_vec()),
                        first_id: s.id.clone(),
                        members: Vec::new(),
                    });
                    groups.len() - 1
                });
                groups[g].members.push(i);
            }
        }
        Ok(Prepared {
            ds,
            j,
            n_cases: case_brs.len(),
            gs_cause,
            case_brs,
            case_ss,
            groups,
            case_positives,
            control_positives,
            n_controls,
        })
    }

    fn stats(&self, causes: &[usize]) -> SufficientStats {
        let mut st = SufficientStats {
            n_cases: self.n_cases as u64,
            n_controls: self.n_controls,
            cause_counts: vec![0; self.j],
            own_positives: vec![0; self.j],
            case_positives: self.case_positives.clone(),
            control_positives: self.control_positives.clone(),
            ss_trials: vec![0; self.ds.panel.n_ss()],
            ss_positives: vec![0; self.ds.panel.n_ss()],
        };
        for (i, &c) in causes.iter().enumerate() {
            st.add_case(c, self.case_brs[i], self.case_ss[i], &self.ds.panel);
        }
        st
    }

    fn sample_causes(&self, params: &ModelParams, mode: SsSemantics, causes: &mut [usize], rng: &mut PlcmRng) -> Result<()> {
        let ln_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();
        let panel = self.ds.panel.ss_panel();
        let mut log_w = vec![0.0; self.j];
        for g in &self.groups {
            let base: f64 = g.brs.iter().zip(&params.psi_brs).map(|(&m, &p)| bernoulli_ln(m, p)).sum();
            for (c, w) in log_w.iter_mut().enumerate() {
                let m = g.brs[c];
                *w = ln_pi[c] + base - bernoulli_ln(m, params.psi_brs[c]) + bernoulli_ln(m, params.theta_brs[c]);
                if let Some(ss) = &g.ss {
                    *w += ss_component_loglik(c, ss, &params.theta_ss, panel, mode);
                }
            }
            let cum = cumulative_probs(&log_w).ok_or_else(|| PlcmError::ImpossibleRecord {
                case_id: g.first_id.clone(),
            })?;
            for &i in &g.members {
                causes[i] = pick(&cum, rng.random());
            }
        }
        for (c, gs) in causes.iter_mut().zip(&self.gs_cause) {
            if let Some(g) = gs {
                *c = *g;
            }
        }
        Ok(())
    }
}

fn initial_params(hyper: &HyperPriors) -> ModelParams {
    let a: f64 = hyper.pi_weights.iter().sum();
    ModelParams {
        pi: hyper.pi_weights.iter().map(|w| w / a).collect(),
        theta_brs: hyper.theta_brs.iter().map(BetaPrior::mean).collect(),
        psi_brs: hyper.psi_brs.iter().map(BetaPrior::mean).collect(),
        theta_ss: hyper.theta_ss.iter().map(BetaPrior::mean).collect(),
    }
}

/// Runs one chain. Deterministic given its arguments.
///
/// Starts from the prior means of every parameter and draws the initial
/// latent causes from their conditional at that point.
pub fn run_chain(ds: &Dataset, hyper: &HyperPriors, opts: &McmcOptions, chain_seed: u64) -> Result<Chain> {
    opts.check()?;
    hyper.check(&ds.panel)?;
    let prep = Prepared::new(ds)?;
    let mut rng = stream_rng(chain_seed, 0);
    let mut params = initial_params(hyper);
    let mut causes = vec![0usize; prep.n_cases];
    let n_store = opts.draws_per_chain();
    let mut draws = Vec::with_capacity(n_store);
    let mut cause_counts = vec![vec![0u32; prep.j]; prep.n_cases];

    for iter in 0..opts.n_burnin + n_store * opts.thin {
        prep.sample_causes(&params, opts.ss_mode, &mut causes, &mut rng)?;
        let st = prep.stats(&causes);
        for j in 0..prep.j {
            params.psi_brs[j] = draw_beta(st.fpr_shape(j, hyper), &mut rng);
        }
        for j in 0..prep.j {
            params.theta_brs[j] = draw_beta(st.tpr_brs_shape(j, hyper), &mut rng);
        }
        for k in 0..params.theta_ss.len() {
            params.theta_ss[k] = draw_beta(st.tpr_ss_shape(k, hyper), &mut rng);
        }
        params.pi = draw_dirichlet(&st.etiology_weights(hyper), &mut rng);

        if iter >= opts.n_burnin && (iter - opts.n_burnin + 1) % opts.thin == 0 {
            draws.push(params.clone());
            for (row, &c) in cause_counts.iter_mut().zip(&causes) {
                row[c] += 1;
            }
        }
    }
    Ok(Chain {
        seed: chain_seed,
        n_burnin: opts.n_burnin,
        thin: opts.thin,
        draws,
        cause_counts,
    })
}

/// Runs `opts.n_chains` chains concurrently; chain `k` uses seed
/// `opts.seed + k`. Results are collated in chain order.
pub fn run_chains(ds: &Dataset, hyper: &HyperPriors, opts: &McmcOptions) -> Result<ChainSet> {
    opts.check()?;
    let chains = (0..opts.n_chains)
        .into_par_iter()
        .map(|k| run_chain(ds, hyper, opts, chain_seed(opts.seed, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSet { chains })
}
