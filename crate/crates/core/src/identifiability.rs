//! Numerical identifiability audit of the bronze-only model.
//!
//! The forward map sends the `3J - 1` free parameters to the case and
//! control bronze pattern distributions. Its Jacobian is estimated by
//! central differences in logit coordinates and its singular values are
//! counted against a relative threshold.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PlcmError, Result};
use crate::likelihood::{all_patterns, case_brs_loglik, control_brs_loglik};
use crate::model::ModelParams;
use crate::sampler::draw_dirichlet;

pub const MAX_AUDIT_PATHOGENS: usize = 12;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-8;
/// Parameters must lie in `(INTERIOR_EPS, 1 - INTERIOR_EPS)`.
pub const INTERIOR_EPS: f64 = 1e-3;
const STEP_HALVING_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub n_pathogens: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub n_effective_zeros: usize,
    pub param_dim: usize,
    pub image_dim: usize,
    /// Relative to the largest singular value.
    pub threshold: f64,
    pub fd_step: f64,
    /// Whether the etiology fractions (gold-standard pattern
    /// probabilities) were appended to the image.
    pub augmented: bool,
    /// Rank of the control-distribution block with respect to the false
    /// positive rates.
    pub fpr_rank: usize,
    pub warnings: Vec<String>,
}

impl IdentifiabilityReport {
    pub fn rank(&self) -> usize {
        self.param_dim - self.n_effective_zeros
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub fd_step: f64,
    pub threshold: f64,
    pub augmented: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            fd_step: DEFAULT_FD_STEP,
            threshold: DEFAULT_ZERO_THRESHOLD,
            augmented: false,
        }
    }
}

/// Case and control bronze pattern probabilities over all `2^J` patterns in
/// binary counting order with the last (all positive) pattern dropped.
pub fn forward_map(params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let j = params.n_pathogens();
    if j > MAX_AUDIT_PATHOGENS {
        return Err(PlcmError::usage(format!(
            "the forward map enumerates 2^J patterns; J = {j} exceeds {MAX_AUDIT_PATHOGENS}"
        )));
    }
    let keep = (1usize << j) - 1;
    let mut p1 = Vec::with_capacity(keep);
    let mut p0 = Vec::with_capacity(keep);
    for m in all_patterns(j).take(keep) {
        p1.push(case_brs_loglik(&m, params).exp());
        p0.push(control_brs_loglik(&m, &params.psi_brs).exp());
    }
    Ok((p1, p0))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Free coordinates: logits of `pi_1..pi_{J-1}`, `theta_brs`, `psi_brs`.
fn to_coords(p: &ModelParams) -> Vec<f64> {
    let j = p.n_pathogens();
    p.pi[..j - 1]
        .iter()
        .chain(&p.theta_brs)
        .chain(&p.psi_brs)
        .map(|&x| logit(x))
        .collect()
}

fn from_coords(x: &[f64], j: usize) -> ModelParams {
    let mut pi: Vec<f64> = x[..j - 1].iter().map(|&v| expit(v)).collect();
    pi.push(1.0 - pi.iter().sum::<f64>());
    ModelParams {
        pi,
        theta_brs: x[j - 1..2 * j - 1].iter().map(|&v| expit(v)).collect(),
        psi_brs: x[2 * j - 1..].iter().map(|&v| expit(v)).collect(),
        theta_ss: Vec::new(),
    }
}

fn image(p: &ModelParams, augmented: bool) -> Vec<f64> {
    let (mut p1, p0) = forward_map(p).expect("size checked");
    p1.extend(p0);
    if augmented {
        p1.extend_from_slice(&p.pi[..p.pi.len() - 1]);
    }
    p1
}

/// Central-difference Jacobian, one column per free coordinate.
fn jacobian(x: &[f64], j: usize, h: f64, augmented: bool) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|k| {
            let (mut up, mut dn) = (x.to_vec(), x.to_vec());
            up[k] += h;
            dn[k] -= h;
            let (fu, fd) = (image(&from_coords(&up, j), augmented), image(&from_coords(&dn, j), augmented));
            fu.iter().zip(&fd).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect();
    DMatrix::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r])
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn count_below(s: &[f64], rel: f64) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&v| v <= rel * top).count()
}

/// Singular value spectrum of the forward-map Jacobian at `params`.
pub fn jacobian_spectrum(params: &ModelParams, opts: &AuditOptions) -> Result<IdentifiabilityReport> {
    params.check()?;
    let j = params.n_pathogens();
    if j < 2 {
        return Err(PlcmError::usage("the audit needs at least two pathogens"));
    }
    if j > MAX_AUDIT_PATHOGENS {
        return Err(PlcmError::usage(format!("J = {j} exceeds {MAX_AUDIT_PATHOGENS}")));
    }
    let interior = |v: f64| v > INTERIOR_EPS && v < 1.0 - INTERIOR_EPS;
    if !params.pi.iter().chain(&params.theta_brs).chain(&params.psi_brs).all(|&v| interior(v)) {
        return Err(PlcmError::usage(format!(
            "the audit needs every parameter in ({INTERIOR_EPS}, {})",
            1.0 - INTERIOR_EPS
        )));
    }
    if !(opts.fd_step > 0.0) || !(opts.threshold > 0.0) {
        return Err(PlcmError::usage("fd_step and threshold must be positive"));
    }
    let x = to_coords(params);
    let jac = jacobian(&x, j, opts.fd_step, opts.augmented);
    let half = jacobian(&x, j, opts.fd_step / 2.0, opts.augmented);

    let mut warnings = Vec::new();
    let scale = jac.amax();
    let diff = (&jac - &half).amax();
    if diff > STEP_HALVING_TOL * scale {
        warnings.push(format!(
            "Jacobian changed by {:.3e} (relative) when halving the step; finite differences may be inaccurate",
            diff / scale
        ));
    }
    let s = singular_values(&jac);
    let n_effective_zeros = count_below(&s, opts.threshold);
    let near = s
        .iter()
        .filter(|&&v| v > opts.threshold * s[0] && v < 1e3 * opts.threshold * s[0])
        .count();
    if near > 0 {
        warnings.push(format!("{near} singular value(s) within three decades of the threshold"));
    }

    // rows of p0, columns of psi
    let n_pat = (1usize << j) - 1;
    let fpr_block = jac.view((n_pat, 2 * j - 1), (n_pat, j)).clone_owned();
    let fpr_s = singular_values(&fpr_block);
    let fpr_rank = fpr_s.len() - count_below(&fpr_s, opts.threshold);

    Ok(IdentifiabilityReport {
        n_pathogens: j,
        param_dim: x.len(),
        image_dim: jac.nrows(),
        singular_values: s,
        n_effective_zeros,
        threshold: opts.threshold,
        fd_step: opts.fd_step,
        augmented: opts.augmented,
        fpr_rank,
        warnings,
    })
}

/// Random point with etiology fractions at least 0.02 and rates in
/// (0.05, 0.95).
pub fn random_interior_point<R: Rng + ?Sized>(j: usize, rng: &mut R) -> ModelParams {
    let pi = loop {
        let pi = draw_dirichlet(&vec![2.0; j], rng);
        if pi.iter().all(|&p| p > 0.02) {
            break pi;
        }
    };
    let mut rate = || rng.random_range(0.05..0.95);
    let theta_brs = (0..j).map(|_| rate()).collect();
    let psi_brs = (0..j).map(|_| rate()).collect();
    ModelParams {
        pi,
        theta_brs,
        psi_brs,
        theta_ss: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn one_pathogen_map() {
        let p = ModelParams::bronze(vec![1.0], vec![0.8], vec![0.3]).unwrap();
        let (p1, p0) = forward_map(&p).unwrap();
        // the only kept pattern is "0"
        assert!((p1[0] - 0.2).abs() < 1e-15);
        assert!((p0[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn coordinates_round_trip() {
        let p = random_interior_point(4, &mut stream_rng(2, 0));
        let q = from_coords(&to_coords(&p), 4);
        for (a, b) in p.to_flat().iter().zip(q.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_at_truth() {
        let p = ModelParams::bronze(vec![0.67, 0.26, 0.07], vec![0.9; 3], vec![0.6, 0.02, 0.05]).unwrap();
        let r = jacobian_spectrum(&p, &AuditOptions::default()).unwrap();
        assert_eq!(r.param_dim, 8);
        assert_eq!(r.image_dim, 14);
        assert_eq!(r.n_effective_zeros, 2);
        assert_eq!(r.fpr_rank, 3);
        assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let aug = jacobian_spectrum(&p, &AuditOptions { augmented: true, ..Default::default() }).unwrap();
        assert_eq!(aug.n_effective_zeros, 0);
        assert_eq!(aug.image_dim, 16);
    }

    #[test]
    fn rejects_boundary_and_large_panels() {
        let p = ModelParams::bronze(vec![0.5, 0.5], vec![1.0, 0.9], vec![0.1, 0.1]).unwrap();
        assert!(jacobian_spectrum(&p, &AuditOptions::default()).is_err());
        let mut pi = vec![0.05; 13];
        pi[12] = 0.4;
        let big = ModelParams::bronze(pi, vec![0.5; 13], vec![0.5; 13]).unwrap();
        assert!(forward_map(&big).is_err());
    }
}
