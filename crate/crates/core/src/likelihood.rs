//! Likelihood components of the partially-latent class model, all on the
//! log scale. Zero-probability configurations evaluate to `-inf`; rates of
//! exactly 0 or 1 are accepted and never clamped.

use serde::{Deserialize, Serialize};

use crate::model::{Dataset, ModelParams, PathogenPanel, SubjectRecord};

/// How a silver-standard measurement informs causes outside the silver panel.
///
/// `Strict` follows the generative story: the silver assay has perfect
/// specificity, so a case caused by a pathogen the assay does not target has
/// an all-negative silver vector. `PanelOnly` makes the silver factor equal to
/// one for such causes (silver data uninformative outside the panel), which
/// is how the Gibbs full conditional for the latent cause is usually written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsSemantics {
    #[default]
    Strict,
    PanelOnly,
}

impl std::str::FromStr for SsSemantics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(SsSemantics::Strict),
            "panel_only" => Ok(SsSemantics::PanelOnly),
            other => Err(format!("unknown SS semantics {other:?} (expected strict|panel_only)")),
        }
    }
}

#[inline]
pub fn bernoulli_ln(m: bool, p: f64) -> f64 {
    if m {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// `log(sum(exp(xs)))`, `-inf` for an empty slice or all `-inf` terms.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Bronze log-likelihood of a control: independent Bernoulli false
/// positives.
pub fn control_brs_loglik(m: &[bool], psi_brs: &[f64]) -> f64 {
    debug_assert_eq!(m.len(), psi_brs.len());
    m.iter().zip(psi_brs).map(|(&mj, &p)| bernoulli_ln(mj, p)).sum()
}

/// Log of the bronze mixture component of cause `cause`: true-positive rate
/// at the cause coordinate, false-positive rates elsewhere.
pub fn brs_component_loglik(cause: usize, m: &[bool], theta_brs: &[f64], psi_brs: &[f64]) -> f64 {
    m.iter()
        .enumerate()
        .map(|(l, &ml)| {
            if l == cause {
                bernoulli_ln(ml, theta_brs[l])
            } else {
                bernoulli_ln(ml, psi_brs[l])
            }
        })
        .sum()
}

/// Bronze log-likelihood of a case, marginal over the latent cause.
pub fn case_brs_loglik(m: &[bool], params: &ModelParams) -> f64 {
    let terms: Vec<f64> = (0..params.pi.len())
        .map(|j| params.pi[j].ln() + brs_component_loglik(j, m, &params.theta_brs, &params.psi_brs))
        .collect();
    log_sum_exp(&terms)
}

/// Log of the silver factor for a case whose cause is `cause`.
///
/// `ss_panel[k]` is the pathogen measured by silver column `k`.
pub fn ss_component_loglik(
    cause: usize,
    m: &[bool],
    theta_ss: &[f64],
    ss_panel: &[usize],
    mode: SsSemantics,
) -> f64 {
    match ss_panel.iter().position(|&p| p == cause) {
        Some(k) => {
            if m.iter().enumerate().any(|(l, &ml)| ml && l != k) {
                f64::NEG_INFINITY
            } else {
                bernoulli_ln(m[k], theta_ss[k])
            }
        }
        None => match mode {
            SsSemantics::PanelOnly => 0.0,
            SsSemantics::Strict => {
                if m.iter().any(|&ml| ml) {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
        },
    }
}

/// Silver log-likelihood of a case, marginal over the latent cause.
///
/// Under `Strict` semantics this is a normalized distribution over the
/// `J' + 1` feasible silver patterns. Two or more positives are impossible
/// under either semantics.
pub fn case_ss_loglik(
    m: &[bool],
    pi: &[f64],
    theta_ss: &[f64],
    ss_panel: &[usize],
    mode: SsSemantics,
) -> f64 {
    if m.iter().filter(|&&x| x).count() >= 2 {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (0..pi.len())
        .map(|j| pi[j].ln() + ss_component_loglik(j, m, theta_ss, ss_panel, mode))
        .collect();
    log_sum_exp(&terms)
}

/// Gold-standard log-likelihood: `log pi_j` for a one-hot vector at `j`.
pub fn case_gs_loglik(m: &[bool], pi: &[f64]) -> f64 {
    let mut pos = m.iter().enumerate().filter(|(_, &x)| x);
    match (pos.next(), pos.next()) {
        (Some((j, _)), None) => pi[j].ln(),
        _ => f64::NEG_INFINITY,
    }
}

/// Total log-likelihood in the factorized form: control bronze terms, case
/// bronze terms, and for cases that have them, silver and gold terms, each
/// marginal over the latent cause.
pub fn total_loglik(ds: &Dataset, params: &ModelParams, mode: SsSemantics) -> f64 {
    let ss_panel = ds.panel.ss_panel();
    ds.subjects
        .iter()
        .map(|s| {
            if !s.case {
                return control_brs_loglik(&s.brs, &params.psi_brs);
            }
            let mut ll = case_brs_loglik(&s.brs, params);
            if let Some(ss) = s.ss_measured() {
                ll += case_ss_loglik(ss, &params.pi, &params.theta_ss, ss_panel, mode);
            }
            if s.gs_available {
                if let Some(gs) = &s.gs {
                    ll += case_gs_loglik(gs, &params.pi);
                }
            }
            ll
        })
        .sum()
}

/// Log-likelihood of all measurements of one case jointly, marginal over a
/// single shared latent cause. This is the likelihood the Gibbs sampler
/// targets.
pub fn case_joint_loglik(
    s: &SubjectRecord,
    panel: &PathogenPanel,
    params: &ModelParams,
    mode: SsSemantics,
) -> f64 {
    let gs_cause = if s.gs_available { s.gs_cause() } else { None };
    if s.gs_available && gs_cause.is_none() {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (0..params.pi.len())
        .map(|j| {
            if gs_cause.is_some_and(|g| g != j) {
                return f64::NEG_INFINITY;
            }
            let mut t = params.pi[j].ln() + brs_component_loglik(j, &s.brs, &params.theta_brs, &params.psi_brs);
            if let Some(ss) = s.ss_measured() {
                t += ss_component_loglik(j, ss, &params.theta_ss, panel.ss_panel(), mode);
            }
            t
        })
        .collect();
    log_sum_exp(&terms)
}

/// Marginal positive rate of pathogen `j` among cases: a convex combination
/// of its true and false positive rates weighted by its etiology fraction.
pub fn case_positive_rate(pi_j: f64, theta_j: f64, psi_j: f64) -> f64 {
    pi_j * theta_j + (1.0 - pi_j) * psi_j
}

/// Enumerates all `2^j` binary patterns in counting order; bit `j - 1 - l`
/// of the counter is entry `l`, so the first pathogen is the most
/// significant digit and the all-ones pattern comes last.
pub fn all_patterns(j: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u64 << j).map(move |k| (0..j).map(|l| (k >> (j - 1 - l)) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PathogenPanel;

    fn truth() -> ModelParams {
        ModelParams::bronze(vec![0.67, 0.26, 0.07], vec![0.9; 3], vec![0.6, 0.02, 0.05]).unwrap()
    }

    #[test]
    fn control_examples() {
        assert_eq!(control_brs_loglik(&[false; 3], &[0.0; 3]), 0.0);
        let psi = [0.6, 0.02, 0.05];
        let v = control_brs_loglik(&[true, false, false], &psi);
        assert!((v - 0.5586f64.ln()).abs() < 1e-12);
        let v = control_brs_loglik(&[false; 3], &psi);
        assert!((v - 0.3724f64.ln()).abs() < 1e-12);
        assert!((v - -0.98778).abs() < 1e-5);
        assert_eq!(control_brs_loglik(&[true], &[0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn case_brs_examples() {
        let p = ModelParams::bronze(vec![1.0], vec![1.0], vec![0.3]).unwrap();
        assert_eq!(case_brs_loglik(&[true], &p), 0.0);
        let v = case_brs_loglik(&[false; 3], &truth());
        assert!((v - 0.0750010f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn case_brs_j2_enumeration_sums_to_one() {
        let p = ModelParams::bronze(vec![0.3, 0.7], vec![0.8, 0.55], vec![0.2, 0.1]).unwrap();
        let total: f64 = all_patterns(2).map(|m| case_brs_loglik(&m, &p).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ss_examples() {
        let pi = [0.2, 0.3, 0.5];
        let th = [0.1, 0.1];
        let panel = [0, 1];
        let expected = (0.2 * 0.9 + 0.3 * 0.9 + 0.5f64).ln();
        for mode in [SsSemantics::Strict, SsSemantics::PanelOnly] {
            let v = case_ss_loglik(&[false, false], &pi, &th, &panel, mode);
            assert!((v - expected).abs() < 1e-12);
            assert_eq!(case_ss_loglik(&[true, true], &pi, &th, &panel, mode), f64::NEG_INFINITY);
        }
        let v = case_ss_loglik(&[true, false], &[0.5, 0.5], &[0.1, 0.1], &[0, 1], SsSemantics::Strict);
        assert!((v - 0.05f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ss_modes_differ_outside_panel() {
        // cause 2 is not measured by the silver assay
        let strict = ss_component_loglik(2, &[true, false], &[0.1, 0.1], &[0, 1], SsSemantics::Strict);
        let panel_only = ss_component_loglik(2, &[true, false], &[0.1, 0.1], &[0, 1], SsSemantics::PanelOnly);
        assert_eq!(strict, f64::NEG_INFINITY);
        assert_eq!(panel_only, 0.0);
    }

    #[test]
    fn gs_examples() {
        assert!((case_gs_loglik(&[false, true], &[0.3, 0.7]) - 0.7f64.ln()).abs() < 1e-15);
        assert_eq!(case_gs_loglik(&[false, false], &[0.3, 0.7]), f64::NEG_INFINITY);
        assert_eq!(case_gs_loglik(&[true, true], &[0.3, 0.7]), f64::NEG_INFINITY);
    }

    #[test]
    fn total_examples() {
        let panel = PathogenPanel::lettered(3).unwrap();
        let ctrl = SubjectRecord::control("c", vec![false; 3]);
        let ds = Dataset::new(panel.clone(), vec![ctrl]);
        let v = total_loglik(&ds, &truth(), SsSemantics::Strict);
        assert!((v - -0.987786733579225).abs() < 1e-12);
        let empty = Dataset::new(panel, vec![]);
        assert_eq!(total_loglik(&empty, &truth(), SsSemantics::Strict), 0.0);
    }

    #[test]
    fn positive_rate_examples() {
        assert!((case_positive_rate(0.67, 0.9, 0.6) - 0.801).abs() < 1e-12);
        assert_eq!(case_positive_rate(0.0, 0.9, 0.3), 0.3);
        assert_eq!(case_positive_rate(1.0, 0.9, 0.3), 0.9);
    }

    #[test]
    fn pattern_order_is_counting_order() {
        let pats: Vec<Vec<bool>> = all_patterns(2).collect();
        assert_eq!(
            pats,
            vec![vec![false, false], vec![false, true], vec![true, false], vec![true, true]]
        );
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
