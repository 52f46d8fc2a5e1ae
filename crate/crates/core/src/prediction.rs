//! Individual etiology prediction from bronze measurements.
//!
//! For a new case with bronze pattern `m`, the cause posterior at fixed
//! parameters is the normalized mixture responsibility
//! `pi_j * l_j(m) / sum_l pi_l * l_l(m)`. The predictive probability averages it
//! over posterior draws, using the posterior given the current data in place
//! of the posterior that would also condition on `m`.

use serde::{Deserialize, Serialize};

use crate::error::{PlcmError, Result};
use crate::likelihood::{bernoulli_ln, brs_component_loglik};
use crate::model::ModelParams;
use crate::sampler::ChainSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtiologyPrediction {
    pub p_hat: Vec<f64>,
    pub n_draws_used: usize,
}

impl EtiologyPrediction {
    /// Most probable cause, the Bayes decision under 0-1 misclassification
    /// loss.
    pub fn argmax(&self) -> usize {
        argmax(&self.p_hat)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Cause posterior of a case with bronze pattern `m` at fixed parameters.
pub fn plugin_cause_posterior(m: &[bool], params: &ModelParams) -> Vec<f64> {
    let log_w: Vec<f64> = (0..params.pi.len())
        .map(|j| params.pi[j].ln() + brs_component_loglik(j, m, &params.theta_brs, &params.psi_brs))
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = log_w.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Posterior predictive cause probabilities: [`plugin_cause_posterior`]
/// averaged over every stored draw of every chain.
pub fn predict_individual(m: &[bool], chains: &ChainSet) -> Result<EtiologyPrediction> {
    let n = chains.n_draws();
    if n == 0 {
        return Err(PlcmError::usage("prediction needs at least one posterior draw"));
    }
    let j = chains.n_pathogens();
    if m.len() != j {
        return Err(PlcmError::usage(format!("pattern has {} entries, model has {j} pathogens", m.len())));
    }
    let mut acc = vec![0.0; j];
    for d in chains.draws() {
        for (a, p) in acc.iter_mut().zip(plugin_cause_posterior(m, d)) {
            *a += p;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(EtiologyPrediction {
        p_hat: acc,
        n_draws_used: n,
    })
}

/// Log relative probability of cause `j` versus cause `l` given bronze
/// pattern `m`: the prior log odds plus the measurement evidence at the two
/// coordinates.
pub fn log_relative_probability(j: usize, l: usize, m: &[bool], params: &ModelParams) -> f64 {
    let (th, ps) = (&params.theta_brs, &params.psi_brs);
    (params.pi[j] / params.pi[l]).ln()
        + (bernoulli_ln(m[j], th[j]) - bernoulli_ln(m[j], ps[j]))
        + (bernoulli_ln(m[l], ps[l]) - bernoulli_ln(m[l], th[l]))
}

/// Kullback-Leibler divergence between Bernoulli(v1) and Bernoulli(v2), in
/// nats. Infinite when `v2` rules out an outcome `v1` allows.
pub fn info_divergence(v1: f64, v2: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    }
    (term(v1, v2) + term(1.0 - v1, 1.0 - v2)).max(0.0)
}

/// Expected log relative probability of `j` versus `l` for a case truly
/// caused by `j`.
pub fn expected_discrimination(j: usize, l: usize, params: &ModelParams) -> f64 {
    (params.pi[j] / params.pi[l]).ln()
        + info_divergence(params.theta_brs[j], params.psi_brs[j])
        + info_divergence(params.psi_brs[l], params.theta_brs[l])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Chain;

    fn truth() -> ModelParams {
        ModelParams::bronze(vec![0.67, 0.26, 0.07], vec![0.9; 3], vec![0.6, 0.02, 0.05]).unwrap()
    }

    fn b(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn plugin_at_truth() {
        let p = plugin_cause_posterior(&b(&[0, 0, 0]), &truth());
        for (x, e) in p.iter().zip([0.8317, 0.1317, 0.0366]) {
            assert!((x - e).abs() < 1e-4);
        }
        assert_eq!(argmax(&plugin_cause_posterior(&b(&[1, 1, 1]), &truth())), 1);
        for j in 0..3 {
            let mut m = vec![false; 3];
            m[j] = true;
            assert_eq!(argmax(&plugin_cause_posterior(&m, &truth())), j);
        }
    }

    #[test]
    fn uninformative_measurements_return_prior() {
        let p = ModelParams::bronze(vec![0.35, 0.65], vec![0.4, 0.7], vec![0.4, 0.7]).unwrap();
        for m in [b(&[0, 0]), b(&[1, 0]), b(&[1, 1])] {
            let post = plugin_cause_posterior(&m, &p);
            assert!((post[0] - 0.35).abs() < 1e-12);
            assert!((log_relative_probability(0, 1, &m, &p) - (0.35f64 / 0.65).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_draw_prediction() {
        let cs = ChainSet {
            chains: vec![Chain {
                seed: 0,
                n_burnin: 0,
                thin: 1,
                draws: vec![truth()],
                cause_counts: vec![],
            }],
        };
        let m = b(&[0, 1, 0]);
        let pred = predict_individual(&m, &cs).unwrap();
        assert_eq!(pred.p_hat, plugin_cause_posterior(&m, &truth()));
        assert_eq!(pred.n_draws_used, 1);
        assert!(predict_individual(&m, &ChainSet { chains: vec![] }).is_err());
    }

    #[test]
    fn divergence_values() {
        assert_eq!(info_divergence(0.3, 0.3), 0.0);
        assert!((info_divergence(0.9, 0.6) - 0.226_289_161_185_358_88).abs() < 1e-12);
        assert!((info_divergence(0.0, 0.5) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(info_divergence(0.2, 0.0), f64::INFINITY);
        assert_eq!(info_divergence(0.0, 0.0), 0.0);
    }

    #[test]
    fn expected_discrimination_cases() {
        let p = ModelParams::bronze(vec![0.2, 0.8], vec![0.3, 0.6], vec![0.3, 0.6]).unwrap();
        assert!((expected_discrimination(0, 1, &p) - 0.25f64.ln()).abs() < 1e-12);
        let p = ModelParams::bronze(vec![0.5, 0.5], vec![0.8, 0.8], vec![0.1, 0.1]).unwrap();
        let e = expected_discrimination(0, 1, &p);
        assert!((e - (info_divergence(0.8, 0.1) + info_divergence(0.1, 0.8))).abs() < 1e-12);
        assert!(e > 0.0);
    }
}
