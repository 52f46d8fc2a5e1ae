use criterion::{criterion_group, criterion_main, Criterion};

use plcm_bench::{dirichlet_draws, fitted, three_pathogen};
use plcm_core::diagnostics::{
    bgr_statistic, credible_region_simplex, effective_sample_size, ppc_slor, PpcOptions, RegionOptions,
};
use plcm_core::identifiability::{jacobian_spectrum, random_interior_point, AuditOptions};
use plcm_core::rng::stream_rng;

fn convergence(c: &mut Criterion) {
    let (ds, h) = three_pathogen();
    let chains = fitted(&ds, &h);
    let traces = chains.traces(|p| p.pi[0]);
    c.bench_function("bgr/3x1000", |b| b.iter(|| bgr_statistic(&traces).unwrap()));
    c.bench_function("ess/3x1000", |b| b.iter(|| effective_sample_size(&traces)));

    let opts = PpcOptions {
        n_replicates: Some(200),
        ..Default::default()
    };
    let mut g = c.benchmark_group("ppc");
    g.sample_size(10);
    g.bench_function("slor/200 replicates", |b| b.iter(|| ppc_slor(&ds, &chains, &opts).unwrap()));
    g.finish();
}

fn region(c: &mut Criterion) {
    let draws = dirichlet_draws(&[6.0, 3.0, 2.0], 3000);
    let mut g = c.benchmark_group("credible_region");
    g.sample_size(10);
    g.bench_function("kde 1500 points, 128 grid", |b| {
        b.iter(|| credible_region_simplex(&draws, &RegionOptions::default()).unwrap())
    });
    g.finish();
}

fn identifiability(c: &mut Criterion) {
    let mut g = c.benchmark_group("jacobian_spectrum");
    for j in [3, 6] {
        let p = random_interior_point(j, &mut stream_rng(1, 0));
        g.bench_function(format!("J={j}"), |b| b.iter(|| jacobian_spectrum(&p, &AuditOptions::default()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, convergence, region, identifiability);
criterion_main!(benches);
