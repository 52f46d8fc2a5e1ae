//! Synthetic data from the generative model, and replicate studies that
//! simulate, fit and score repeatedly.

mod study;

pub use study::{
    replicate_study, Arm, ArmSummary, ReplicateArm, ReplicateRecord, StudyOptions, StudyReport,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlcmError, Result};
use crate::model::{Dataset, ModelParams, PathogenPanel, SubjectRecord};
use crate::rng::{stream, stream_rng};

/// Ground truth and design of a simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub panel: PathogenPanel,
    pub params: ModelParams,
    pub n_cases: usize,
    pub n_controls: usize,
    /// Fraction of cases with a gold-standard measurement.
    pub delta_frac: f64,
    /// Fraction of cases with silver-standard measurements.
    pub ss_frac: f64,
    pub seed: u64,
}

impl SimTruth {
    /// Three pathogens A, B, C with etiology (0.67, 0.26, 0.07), bronze
    /// sensitivity 0.9 and false positive rates (0.6, 0.02, 0.05); 500 cases,
    /// 500 controls, no silver data.
    pub fn three_pathogen(delta_frac: f64, seed: u64) -> Self {
        SimTruth {
            panel: PathogenPanel::lettered(3).expect("valid panel"),
            params: ModelParams::bronze(vec![0.67, 0.26, 0.07], vec![0.9; 3], vec![0.6, 0.02, 0.05])
                .expect("valid truth"),
            n_cases: 500,
            n_controls: 500,
            delta_frac,
            ss_frac: 0.0,
            seed,
        }
    }

    /// Eleven-pathogen pneumonia panel, 432 cases and 479 controls, silver
    /// data on every case and gold-standard data on 1% of cases.
    pub fn perch_like(seed: u64) -> Self {
        let panel = PathogenPanel::perch_preset();
        // HINF PNEU SASP SAUR | ADENO COR_43 FLU_C HMPV PARA1 RHINO RSV
        let pi = vec![0.04, 0.12, 0.02, 0.07, 0.05, 0.03, 0.02, 0.10, 0.06, 0.20, 0.29];
        let theta_brs = vec![0.5, 0.6, 0.5, 0.5, 0.8, 0.75, 0.8, 0.85, 0.8, 0.7, 0.9];
        let psi_brs = vec![0.45, 0.5, 0.02, 0.15, 0.1, 0.04, 0.02, 0.03, 0.015, 0.25, 0.05];
        let theta_ss = vec![0.1, 0.12, 0.08, 0.1];
        SimTruth {
            panel,
            params: ModelParams::new(pi, theta_brs, psi_brs, theta_ss).expect("valid truth"),
            n_cases: 432,
            n_controls: 479,
            delta_frac: 0.01,
            ss_frac: 1.0,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.params.check_panel(&self.panel)?;
        for (name, f) in [("delta_frac", self.delta_frac), ("ss_frac", self.ss_frac)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(PlcmError::usage(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

pub fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return j;
        }
    }
    // rounding: fall back to the last category with positive mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Latent cause and bronze vector of one simulated case.
pub fn draw_case_bronze<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> (usize, Vec<bool>) {
    let cause = draw_categorical(&params.pi, rng);
    let m = (0..params.pi.len())
        .map(|l| {
            let rate = if l == cause { params.theta_brs[l] } else { params.psi_brs[l] };
            rng.random::<f64>() < rate
        })
        .collect();
    (cause, m)
}

pub fn draw_control_bronze<R: Rng + ?Sized>(psi_brs: &[f64], rng: &mut R) -> Vec<bool> {
    psi_brs.iter().map(|&p| rng.random::<f64>() < p).collect()
}

fn n_selected(frac: f64, n: usize) -> usize {
    ((frac * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Case indices selected by a seeded shuffle; the first `ceil(frac * n)`.
/// For a fixed seed, selections are nested as `frac` grows.
fn select(frac: f64, n: usize, seed: u64, stream_id: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, stream_id));
    let mut chosen = vec![false; n];
    for &i in &order[..n_selected(frac, n)] {
        chosen[i] = true;
    }
    chosen
}

/// Simulates a dataset and returns it with the true latent causes.
///
/// Causes and bronze data, controls, gold-standard selection, silver
/// selection and silver measurements use separate random streams, so
/// changing the gold-standard fraction leaves the bronze data untouched.
pub fn simulate_with_causes(truth: &SimTruth) -> Result<(Dataset, Vec<usize>)> {
    truth.check()?;
    let p = &truth.params;
    let panel = &truth.panel;
    let mut rng = stream_rng(truth.seed, stream::CAUSES_AND_BRONZE);
    let cases: Vec<(usize, Vec<bool>)> = (0..truth.n_cases).map(|_| draw_case_bronze(p, &mut rng)).collect();
    let gs_sel = select(truth.delta_frac, truth.n_cases, truth.seed, stream::GS_SELECTION);
    let ss_sel = select(truth.ss_frac, truth.n_cases, truth.seed, stream::SS_SELECTION);
    let mut ss_rng = stream_rng(truth.seed, stream::SS_MEASUREMENT);

    let width = (truth.n_cases.max(truth.n_controls).max(1)).to_string().len().max(4);
    let mut subjects = Vec::with_capacity(truth.n_cases + truth.n_controls);
    let mut causes = Vec::with_capacity(truth.n_cases);
    for (i, (cause, brs)) in cases.into_iter().enumerate() {
        let mut s = SubjectRecord::case(format!("case{:0width$}", i + 1), brs);
        let u: f64 = ss_rng.random();
        if ss_sel[i] {
            let mut ss = vec![false; panel.n_ss()];
            if let Some(k) = panel.ss_slot(cause) {
                ss[k] = u < p.theta_ss[k];
            }
            s = s.with_ss(ss);
        }
        if gs_sel[i] {
            let mut gs = vec![false; panel.len()];
            gs[cause] = true;
            s = s.with_gs(gs);
        }
        subjects.push(s);
        causes.push(cause);
    }
    let mut ctrl_rng = stream_rng(truth.seed, stream::CONTROLS);
    for i in 0..truth.n_controls {
        subjects.push(SubjectRecord::control(
            format!("ctrl{:0width$}", i + 1),
            draw_control_bronze(&p.psi_brs, &mut ctrl_rng),
        ));
    }
    Ok((Dataset::new(panel.clone(), subjects), causes))
}

pub fn simulate_dataset(truth: &SimTruth) -> Result<Dataset> {
    simulate_with_causes(truth).map(|(ds, _)| ds)
}

/// Simulates from the model, then breaks conditional independence for one
/// pair of pathogens among cases: with probability `strength`, a case's
/// bronze result at `second` is overwritten by its result at `first`.
pub fn simulate_with_planted_dependence(
    truth: &SimTruth,
    first: usize,
    second: usize,
    strength: f64,
) -> Result<Dataset> {
    if first == second || first >= truth.panel.len() || second >= truth.panel.len() {
        return Err(PlcmError::usage("planted dependence needs two distinct pathogens"));
    }
    let mut ds = simulate_dataset(truth)?;
    let mut rng = stream_rng(truth.seed, stream::CONTROLS + 1);
    for s in ds.subjects.iter_mut().filter(|s| s.case) {
        if rng.random::<f64>() < strength {
            s.brs[second] = s.brs[first];
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dataset;

    #[test]
    fn noiseless_channel() {
        let mut truth = SimTruth::three_pathogen(0.0, 5);
        truth.params = ModelParams::bronze(vec![0.5, 0.3, 0.2], vec![1.0; 3], vec![0.0; 3]).unwrap();
        let (ds, causes) = simulate_with_causes(&truth).unwrap();
        for (s, &c) in ds.cases().zip(&causes) {
            assert_eq!(s.brs.iter().filter(|&&m| m).count(), 1);
            assert!(s.brs[c]);
        }
        assert!(ds.controls().all(|s| s.brs.iter().all(|&m| !m)));
    }

    #[test]
    fn gs_selection_is_nested_and_sized() {
        let lo = simulate_dataset(&SimTruth::three_pathogen(0.01, 9)).unwrap();
        let hi = simulate_dataset(&SimTruth::three_pathogen(0.10, 9)).unwrap();
        assert_eq!(lo.cases().filter(|s| s.gs_available).count(), 5);
        assert_eq!(hi.cases().filter(|s| s.gs_available).count(), 50);
        for (a, b) in lo.subjects.iter().zip(&hi.subjects) {
            assert_eq!(a.brs, b.brs);
            if a.gs_available {
                assert!(b.gs_available);
            }
        }
    }

    #[test]
    fn simulated_data_validates() {
        let ds = simulate_dataset(&SimTruth::perch_like(3)).unwrap();
        assert!(validate_dataset(&ds).passed());
        assert_eq!(ds.n_cases(), 432);
        assert_eq!(ds.n_controls(), 479);
        assert!(ds.cases().all(|s| s.ss_available));
    }

    #[test]
    fn deterministic_under_seed() {
        let t = SimTruth::three_pathogen(0.1, 11);
        assert_eq!(simulate_dataset(&t).unwrap(), simulate_dataset(&t).unwrap());
    }

    #[test]
    fn bad_fraction_rejected() {
        let mut t = SimTruth::three_pathogen(1.5, 1);
        assert!(simulate_dataset(&t).is_err());
        t.delta_frac = 0.1;
        t.ss_frac = -0.1;
        assert!(simulate_dataset(&t).is_err());
    }
}
