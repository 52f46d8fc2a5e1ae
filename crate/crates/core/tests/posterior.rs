use plcm_core::diagnostics::{
    bgr_statistic, credible_region_simplex, mc_standard_error, posterior_summary, ppc_pattern_frequencies, ppc_slor,
    PpcOptions, RegionOptions,
};
use plcm_core::identifiability::{jacobian_spectrum, random_interior_point, AuditOptions};
use plcm_core::rng::stream_rng;
use plcm_core::sampler::draw_dirichlet;
use plcm_core::simulation::simulate_with_planted_dependence;
use plcm_core::{default_hyperpriors, run_chains, simulate_dataset, McmcOptions, SimTruth};

fn mcmc(burn: usize, keep: usize, seed: u64) -> McmcOptions {
    McmcOptions {
        n_burnin: burn,
        n_keep: keep,
        n_chains: 3,
        seed,
        ..Default::default()
    }
}

#[test]
fn all_gold_data_gives_the_dirichlet_posterior() {
    let mut truth = SimTruth::three_pathogen(1.0, 31);
    truth.n_cases = 120;
    truth.n_controls = 80;
    let ds = simulate_dataset(&truth).unwrap();
    let mut counts = [0.0; 3];
    for s in ds.cases() {
        counts[s.gs_cause().unwrap()] += 1.0;
    }
    let total = 3.0 + counts.iter().sum::<f64>();
    let chains = run_chains(&ds, &default_hyperpriors(&ds.panel), &mcmc(200, 6000, 5)).unwrap();
    for j in 0..3 {
        let a = 1.0 + counts[j];
        let exact_mean = a / total;
        let exact_var = a * (total - a) / (total * total * (total + 1.0));
        let traces = chains.traces(|p| p.pi[j]);
        let pooled: Vec<f64> = traces.concat();
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let var = pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pooled.len() - 1) as f64;
        let mcse = mc_standard_error(&traces);
        assert!((mean - exact_mean).abs() < 4.0 * mcse, "pi[{j}] {mean} vs {exact_mean} (mcse {mcse})");
        assert!((var / exact_var - 1.0).abs() < 0.1, "pi[{j}] variance {var} vs {exact_var}");
    }
}

#[test]
fn chains_depend_only_on_their_own_seed() {
    let ds = simulate_dataset(&SimTruth::three_pathogen(0.1, 2)).unwrap();
    let hyper = default_hyperpriors(&ds.panel);
    let three = run_chains(&ds, &hyper, &mcmc(50, 100, 77)).unwrap();
    let again = run_chains(&ds, &hyper, &mcmc(50, 100, 77)).unwrap();
    assert_eq!(three, again);
    let two = run_chains(&ds, &hyper, &McmcOptions { n_chains: 2, ..mcmc(50, 100, 77) }).unwrap();
    assert_eq!(two.chains[..], three.chains[..2]);
    assert_ne!(three.chains[0].draws, three.chains[1].draws);
}

#[test]
fn summary_matches_pooled_draws() {
    let ds = simulate_dataset(&SimTruth::three_pathogen(0.1, 3)).unwrap();
    let chains = run_chains(&ds, &default_hyperpriors(&ds.panel), &mcmc(200, 500, 8)).unwrap();
    let summary = posterior_summary(&chains, &ds.panel);
    assert_eq!(summary.params.len(), 9);
    for j in 0..3 {
        let traces = chains.traces(|p| p.psi_brs[j]);
        let mut pooled = traces.concat();
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        pooled.sort_by(f64::total_cmp);
        // type 7 median of an even-length sample
        let n = pooled.len();
        let median = if n % 2 == 0 { 0.5 * (pooled[n / 2 - 1] + pooled[n / 2]) } else { pooled[n / 2] };
        let s = summary.get(&format!("psi_brs_{}", ds.panel.name(j))).unwrap();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.quantiles[2] - median).abs() < 1e-12);
        assert_eq!(s.bgr, Some(bgr_statistic(&traces).unwrap()));
    }
}

#[test]
fn pattern_check_covers_data_from_the_model() {
    let ds = simulate_dataset(&SimTruth::three_pathogen(0.1, 12)).unwrap();
    let chains = run_chains(&ds, &default_hyperpriors(&ds.panel), &mcmc(500, 1000, 4)).unwrap();
    let table = ppc_pattern_frequencies(&ds, &chains, &PpcOptions::default()).unwrap();
    assert_eq!(table.n_replicates, 1000);
    let rows: Vec<_> = table.cases.iter().chain(&table.controls).collect();
    // unobserved patterns are not listed
    assert!(rows.len() >= 10 && rows.len() <= 16);
    let inside = rows.iter().filter(|r| r.observed_in_interval()).count();
    assert!(inside + 2 >= rows.len(), "{inside} of {} observed frequencies inside the 95% band", rows.len());
}

#[test]
fn planted_dependence_is_flagged() {
    let truth = SimTruth::three_pathogen(0.0, 21);
    let ds = simulate_with_planted_dependence(&truth, 0, 1, 0.6).unwrap();
    let chains = run_chains(&ds, &default_hyperpriors(&ds.panel), &mcmc(500, 1000, 6)).unwrap();
    let table = ppc_slor(&ds, &chains, &PpcOptions::default()).unwrap();
    let planted = table.case_slor(0, 1).unwrap();
    assert!(planted > 3.0, "planted pair SLOR {planted}");
    // controls were left alone
    assert!(table.control_slor(0, 1).unwrap().abs() < 3.0);

    let clean = simulate_dataset(&truth).unwrap();
    let chains = run_chains(&clean, &default_hyperpriors(&clean.panel), &mcmc(500, 1000, 6)).unwrap();
    let table = ppc_slor(&clean, &chains, &PpcOptions::default()).unwrap();
    assert!(table.defined().all(|s| s.abs() < 3.0), "{:?}", table.slor);
}

#[test]
fn audit_finds_j_minus_one_flat_directions() {
    let mut rng = stream_rng(404, 0);
    for j in 2..=4 {
        for _ in 0..10 {
            let p = random_interior_point(j, &mut rng);
            let r = jacobian_spectrum(&p, &AuditOptions::default()).unwrap();
            assert_eq!(r.param_dim, 3 * j - 1);
            assert_eq!(r.n_effective_zeros, j - 1, "J={j} at {p:?}: {:?}", r.singular_values);
            assert_eq!(r.fpr_rank, j);
            let aug = jacobian_spectrum(&p, &AuditOptions { augmented: true, ..Default::default() }).unwrap();
            assert_eq!(aug.n_effective_zeros, 0);
        }
    }
}

#[test]
fn region_coverage_of_fresh_draws() {
    let alpha = [6.0, 3.0, 2.0];
    let mut rng = stream_rng(55, 0);
    let fit: Vec<Vec<f64>> = (0..3000).map(|_| draw_dirichlet(&alpha, &mut rng)).collect();
    let region = credible_region_simplex(&fit, &RegionOptions::default()).unwrap();
    let fresh = 4000;
    let inside = (0..fresh).filter(|_| region.contains(&draw_dirichlet(&alpha, &mut rng))).count();
    let coverage = inside as f64 / fresh as f64;
    assert!((0.92..=0.98).contains(&coverage), "coverage {coverage}");

    let narrow = credible_region_simplex(&fit, &RegionOptions { level: 0.5, ..Default::default() }).unwrap();
    assert!(narrow.area < region.area);
    assert!(region.area < 1.0);
}
