use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use plcm_bench::{perch_like, short_run, three_pathogen};
use plcm_core::rng::chain_seed;
use plcm_core::sampler::run_chain;
use plcm_core::{run_chains, McmcOptions};

const SWEEPS: usize = 100;

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("gibbs_sweeps");
    g.throughput(Throughput::Elements(SWEEPS as u64));
    for (name, (ds, h)) in [("J=3", three_pathogen()), ("J=11", perch_like())] {
        let opts = short_run(SWEEPS);
        g.bench_with_input(BenchmarkId::new("run_chain", name), &ds, |b, ds| {
            b.iter(|| run_chain(ds, &h, &opts, chain_seed(opts.seed, 0)).unwrap())
        });
    }
    g.finish();
}

fn parallel_chains(c: &mut Criterion) {
    let (ds, h) = three_pathogen();
    let mut g = c.benchmark_group("run_chains");
    g.sample_size(10);
    for n_chains in [1, 3] {
        let opts = McmcOptions {
            n_chains,
            ..short_run(1000)
        };
        g.bench_with_input(BenchmarkId::from_parameter(n_chains), &opts, |b, opts| {
            b.iter(|| run_chains(&ds, &h, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweeps, parallel_chains);
criterion_main!(benches);
