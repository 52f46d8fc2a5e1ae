//! Shared fixtures for the benchmarks.

use plcm_core::rng::stream_rng;
use plcm_core::sampler::draw_dirichlet;
use plcm_core::{default_hyperpriors, run_chains, simulate_dataset, ChainSet, Dataset, HyperPriors, McmcOptions, SimTruth};

/// 500 cases and 500 controls, three pathogens, gold standard on 10%.
pub fn three_pathogen() -> (Dataset, HyperPriors) {
    let ds = simulate_dataset(&SimTruth::three_pathogen(0.1, 1)).expect("valid truth");
    let h = default_hyperpriors(&ds.panel);
    (ds, h)
}

/// Eleven pathogens, 432 cases and 479 controls with silver data.
pub fn perch_like() -> (Dataset, HyperPriors) {
    let ds = simulate_dataset(&SimTruth::perch_like(1)).expect("valid truth");
    let h = default_hyperpriors(&ds.panel);
    (ds, h)
}

pub fn short_run(n_keep: usize) -> McmcOptions {
    McmcOptions {
        n_burnin: 0,
        n_keep,
        n_chains: 1,
        seed: 1,
        ..Default::default()
    }
}

/// A converged-enough posterior to feed the diagnostics.
pub fn fitted(ds: &Dataset, h: &HyperPriors) -> ChainSet {
    let opts = McmcOptions {
        n_burnin: 500,
        n_keep: 1000,
        n_chains: 3,
        seed: 1,
        ..Default::default()
    };
    run_chains(ds, h, &opts).expect("fit succeeds")
}

pub fn dirichlet_draws(alpha: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(7, 0);
    (0..n).map(|_| draw_dirichlet(alpha, &mut rng)).collect()
}
