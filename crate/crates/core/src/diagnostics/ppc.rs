//! Posterior predictive checks on bronze data.
//!
//! Replicate `r` takes an evenly spaced posterior draw and simulates a
//! dataset with the observed numbers of cases and controls on stream
//! `PREDICTIVE + r` of the check seed, through the same generators used by
//! the simulation module.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summary::quantile_sorted;
use crate::error::{PlcmError, Result};
use crate::model::{Dataset, ModelParams};
use crate::rng::{stream, stream_rng};
use crate::sampler::ChainSet;
use crate::simulation::{draw_case_bronze, draw_control_bronze};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcOptions {
    pub top_k: usize,
    /// Defaults to `min(1000, stored draws)`.
    pub n_replicates: Option<usize>,
    pub seed: u64,
}

impl Default for PpcOptions {
    fn default() -> Self {
        PpcOptions {
            top_k: 10,
            n_replicates: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Case,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub group: Group,
    pub pattern: Vec<bool>,
    pub observed: usize,
    pub pred_mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl PatternRow {
    pub fn observed_in_interval(&self) -> bool {
        let o = self.observed as f64;
        self.q025 <= o && o <= self.q975
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternFrequencyTable {
    pub n_replicates: usize,
    pub cases: Vec<PatternRow>,
    pub controls: Vec<PatternRow>,
}

/// Pairwise standardized log odds ratios.
///
/// Entry `[r][c]` with `r > c` is the case SLOR of pathogens `(r, c)`; with
/// `r < c` it is the control SLOR. The diagonal and pairs involving a
/// pathogen with no variation in the observed group are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlorTable {
    pub names: Vec<String>,
    pub n_replicates: usize,
    pub slor: Vec<Vec<Option<f64>>>,
    pub observed: Vec<Vec<Option<f64>>>,
    pub pred_mean: Vec<Vec<Option<f64>>>,
    pub pred_sd: Vec<Vec<Option<f64>>>,
}

impl SlorTable {
    pub fn case_slor(&self, a: usize, b: usize) -> Option<f64> {
        self.slor[a.max(b)][a.min(b)]
    }

    pub fn control_slor(&self, a: usize, b: usize) -> Option<f64> {
        self.slor[a.min(b)][a.max(b)]
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.slor.iter().flatten().filter_map(|x| *x)
    }

    /// Fraction of defined SLORs with absolute value above `threshold`.
    pub fn exceedance_fraction(&self, threshold: f64) -> Option<f64> {
        let (mut n, mut hit) = (0usize, 0usize);
        for s in self.defined() {
            n += 1;
            hit += usize::from(s.abs() > threshold);
        }
        (n > 0).then(|| hit as f64 / n as f64)
    }
}

/// 2x2 log odds ratio between columns `a` and `b` with 0.5 added to every
/// cell.
pub fn log_odds_ratio<'a>(rows: impl Iterator<Item = &'a [bool]>, a: usize, b: usize) -> f64 {
    let mut n = [[0.5f64; 2]; 2];
    for r in rows {
        n[usize::from(r[a])][usize::from(r[b])] += 1.0;
    }
    (n[1][1] * n[0][0] / (n[1][0] * n[0][1])).ln()
}

struct Replicate {
    cases: Vec<Vec<bool>>,
    controls: Vec<Vec<bool>>,
}

fn replicate_draws(chains: &ChainSet, requested: Option<usize>) -> Result<Vec<&ModelParams>> {
    let pooled: Vec<&ModelParams> = chains.draws().collect();
    if pooled.is_empty() {
        return Err(PlcmError::usage("posterior predictive checks need posterior draws"));
    }
    let n = requested.unwrap_or(1000).min(pooled.len()).max(1);
    Ok((0..n).map(|r| pooled[r * pooled.len() / n]).collect())
}

fn simulate_replicate(params: &ModelParams, n_cases: usize, n_controls: usize, seed: u64, r: usize) -> Replicate {
    let mut rng = stream_rng(seed, stream::PREDICTIVE + r as u64);
    let cases = (0..n_cases).map(|_| draw_case_bronze(params, &mut rng).1).collect();
    let controls = (0..n_controls)
        .map(|_| draw_control_bronze(&params.psi_brs, &mut rng))
        .collect();
    Replicate { cases, controls }
}

fn check_inputs(ds: &Dataset, chains: &ChainSet) -> Result<()> {
    if chains.n_pathogens() != ds.panel.len() {
        return Err(PlcmError::usage(format!(
            "draws have {} pathogens, dataset has {}",
            chains.n_pathogens(),
            ds.panel.len()
        )));
    }
    Ok(())
}

fn count_patterns<'a>(rows: impl Iterator<Item = &'a [bool]>) -> HashMap<&'a [bool], usize> {
    let mut m = HashMap::new();
    for r in rows {
        *m.entry(r).or_insert(0) += 1;
    }
    m
}

fn top_patterns<'a>(rows: impl Iterator<Item = &'a [bool]>, k: usize) -> Vec<(Vec<bool>, usize)> {
    let mut v: Vec<(Vec<bool>, usize)> = count_patterns(rows).into_iter().map(|(p, c)| (p.to_vec(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

fn pattern_rows(group: Group, top: &[(Vec<bool>, usize)], reps: &[Vec<usize>]) -> Vec<PatternRow> {
    top.iter()
        .enumerate()
        .map(|(i, (pattern, observed))| {
            let mut c: Vec<f64> = reps.iter().map(|r| r[i] as f64).collect();
            c.sort_by(f64::total_cmp);
            PatternRow {
                group,
                pattern: pattern.clone(),
                observed: *observed,
                pred_mean: c.iter().sum::<f64>() / c.len() as f64,
                q025: quantile_sorted(&c, 0.025),
                q50: quantile_sorted(&c, 0.5),
                q975: quantile_sorted(&c, 0.975),
            }
        })
        .collect()
}

/// Observed counts of the `top_k` most frequent case and control bronze
/// patterns with their posterior predictive distribution.
pub fn ppc_pattern_frequencies(ds: &Dataset, chains: &ChainSet, opts: &PpcOptions) -> Result<PatternFrequencyTable> {
    let draws = replicate_draws(chains, opts.n_replicates)?;
    check_inputs(ds, chains)?;
    let top_cases = top_patterns(ds.cases().map(|s| s.brs.as_slice()), opts.top_k);
    let top_controls = top_patterns(ds.controls().map(|s| s.brs.as_slice()), opts.top_k);
    let (n1, n0) = (ds.n_cases(), ds.n_controls());

    let reps: Vec<(Vec<usize>, Vec<usize>)> = draws
        .par_iter()
        .enumerate()
        .map(|(r, params)| {
            let rep = simulate_replicate(params, n1, n0, opts.seed, r);
            let cc = count_patterns(rep.cases.iter().map(Vec::as_slice));
            let ck = count_patterns(rep.controls.iter().map(Vec::as_slice));
            (
                top_cases.iter().map(|(p, _)| cc.get(p.as_slice()).copied().unwrap_or(0)).collect(),
                top_controls.iter().map(|(p, _)| ck.get(p.as_slice()).copied().unwrap_or(0)).collect(),
            )
        })
        .collect();
    let (case_reps, control_reps): (Vec<_>, Vec<_>) = reps.into_iter().unzip();
    Ok(PatternFrequencyTable {
        n_replicates: draws.len(),
        cases: pattern_rows(Group::Case, &top_cases, &case_reps),
        controls: pattern_rows(Group::Control, &top_controls, &control_reps),
    })
}

/// Packs case LORs below the diagonal and control LORs above it.
fn lor_matrix(cases: &[Vec<bool>], controls: &[Vec<bool>], j: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![f64::NAN; j]; j];
    for r in 0..j {
        for c in 0..j {
            if r > c {
                m[r][c] = log_odds_ratio(cases.iter().map(Vec::as_slice), r, c);
            } else if r < c {
                m[r][c] = log_odds_ratio(controls.iter().map(Vec::as_slice), r, c);
            }
        }
    }
    m
}

fn varies(rows: &[Vec<bool>], k: usize) -> bool {
    rows.iter().any(|r| r[k]) && rows.iter().any(|r| !r[k])
}

/// Standardized log odds ratios of every bronze pair, among cases and among
/// controls. Positive values mean the observed association exceeds the
/// model-predicted one.
pub fn ppc_slor(ds: &Dataset, chains: &ChainSet, opts: &PpcOptions) -> Result<SlorTable> {
    let draws = replicate_draws(chains, opts.n_replicates)?;
    check_inputs(ds, chains)?;
    let j = ds.panel.len();
    let cases: Vec<Vec<bool>> = ds.cases().map(|s| s.brs.clone()).collect();
    let controls: Vec<Vec<bool>> = ds.controls().map(|s| s.brs.clone()).collect();
    let observed = lor_matrix(&cases, &controls, j);
    let (n1, n0) = (cases.len(), controls.len());

    let reps: Vec<Vec<Vec<f64>>> = draws
        .par_iter()
        .enumerate()
        .map(|(r, params)| {
            let rep = simulate_replicate(params, n1, n0, opts.seed, r);
            lor_matrix(&rep.cases, &rep.controls, j)
        })
        .collect();

    let n = reps.len() as f64;
    let mut out = SlorTable {
        names: ds.panel.names().to_vec(),
        n_replicates: reps.len(),
        slor: vec![vec![None; j]; j],
        observed: vec![vec![None; j]; j],
        pred_mean: vec![vec![None; j]; j],
        pred_sd: vec![vec![None; j]; j],
    };
    for r in 0..j {
        for c in 0..j {
            if r == c {
                continue;
            }
            let rows = if r > c { &cases } else { &controls };
            if !varies(rows, r) || !varies(rows, c) {
                continue;
            }
            let mean = reps.iter().map(|m| m[r][c]).sum::<f64>() / n;
            let sd = if reps.len() > 1 {
                (reps.iter().map(|m| (m[r][c] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            out.observed[r][c] = Some(observed[r][c]);
            out.pred_mean[r][c] = Some(mean);
            if sd > 0.0 && sd.is_finite() {
                out.pred_sd[r][c] = Some(sd);
                out.slor[r][c] = Some((observed[r][c] - mean) / sd);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PathogenPanel, SubjectRecord};
    use crate::sampler::Chain;

    fn single_draw(params: ModelParams, copies: usize) -> ChainSet {
        ChainSet {
            chains: vec![Chain {
                seed: 0,
                n_burnin: 0,
                thin: 1,
                draws: vec![params; copies],
                cause_counts: vec![],
            }],
        }
    }

    fn toy_dataset() -> Dataset {
        let panel = PathogenPanel::lettered(3).unwrap();
        let mut subjects = Vec::new();
        for i in 0..40 {
            let m = vec![i % 2 == 0, i % 3 == 0, i % 5 == 0];
            subjects.push(SubjectRecord::case(format!("a{i}"), m.clone()));
            subjects.push(SubjectRecord::control(format!("b{i}"), m));
        }
        Dataset::new(panel, subjects)
    }

    #[test]
    fn lor_with_correction() {
        let rows = [vec![true, true], vec![false, false]];
        let l = log_odds_ratio(rows.iter().map(Vec::as_slice), 0, 1);
        assert!((l - (1.5f64 * 1.5 / 0.25).ln()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_predictive_patterns_are_one_hot() {
        let p = ModelParams::bronze(vec![0.5, 0.3, 0.2], vec![1.0; 3], vec![0.0; 3]).unwrap();
        let ds = toy_dataset();
        let t = ppc_pattern_frequencies(&ds, &single_draw(p, 400), &PpcOptions::default()).unwrap();
        let mut draws_seen = 0.0;
        for row in &t.cases {
            let ones = row.pattern.iter().filter(|&&b| b).count();
            if ones == 1 {
                let k = row.pattern.iter().position(|&b| b).unwrap();
                let expect = 40.0 * [0.5, 0.3, 0.2][k];
                assert!((row.pred_mean - expect).abs() < 1.0, "{row:?}");
                draws_seen += row.pred_mean;
            } else {
                assert_eq!(row.q975, 0.0);
            }
        }
        assert!(draws_seen > 39.0);
        for row in &t.controls {
            let expect = if row.pattern.iter().any(|&b| b) { 0.0 } else { 40.0 };
            assert_eq!(row.q50, expect);
        }
    }

    #[test]
    fn reproducible_and_ranked() {
        let p = ModelParams::bronze(vec![0.5, 0.3, 0.2], vec![0.8; 3], vec![0.3; 3]).unwrap();
        let ds = toy_dataset();
        let cs = single_draw(p, 50);
        let o = PpcOptions { top_k: 4, ..Default::default() };
        let a = ppc_pattern_frequencies(&ds, &cs, &o).unwrap();
        assert_eq!(a, ppc_pattern_frequencies(&ds, &cs, &o).unwrap());
        assert_eq!(a.n_replicates, 50);
        assert_eq!(a.cases.len(), 4);
        assert!(a.cases.windows(2).all(|w| w[0].observed >= w[1].observed));
        assert_eq!(ppc_slor(&ds, &cs, &o).unwrap(), ppc_slor(&ds, &cs, &o).unwrap());
    }

    #[test]
    fn slor_layout_and_masking() {
        let panel = PathogenPanel::lettered(3).unwrap();
        let mut subjects = Vec::new();
        for i in 0..30 {
            subjects.push(SubjectRecord::case(format!("a{i}"), vec![i % 2 == 0, i % 3 == 0, false]));
            subjects.push(SubjectRecord::control(format!("b{i}"), vec![i % 2 == 0, i % 4 == 0, i % 5 == 0]));
        }
        let ds = Dataset::new(panel, subjects);
        let p = ModelParams::bronze(vec![0.4, 0.4, 0.2], vec![0.7; 3], vec![0.4; 3]).unwrap();
        let t = ppc_slor(&ds, &single_draw(p, 200), &PpcOptions::default()).unwrap();
        assert!(t.slor[0][0].is_none());
        assert!(t.case_slor(1, 0).is_some());
        // C never positive among cases
        assert!(t.case_slor(2, 0).is_none() && t.case_slor(2, 1).is_none());
        assert!(t.control_slor(0, 2).is_some());
        assert_eq!(t.case_slor(0, 1), t.slor[1][0]);
        assert_eq!(t.control_slor(2, 0), t.slor[0][2]);
    }

    #[test]
    fn empty_chains_rejected() {
        assert!(ppc_slor(&toy_dataset(), &ChainSet { chains: vec![] }, &PpcOptions::default()).is_err());
    }
}
