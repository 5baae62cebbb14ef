use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use esip_bench::Fixture;
use esip_core::accept_reject::run_accept_reject;
use esip_core::oracles::ExpDecayOracle;
use esip_core::output_measure::{kde_cell_probs, default_kde_bandwidth, histogram_probs};
use esip_core::posterior::marginal_heatmap;
use esip_core::random::sample_uniform_box;
use esip_core::{compute_weights, RandomStream};

fn sampling(c: &mut Criterion) {
    let fx = Fixture::expdecay(1000, 1000, 10).unwrap();
    let mut g = c.benchmark_group("prior");
    for n in [10_000usize, 100_000] {
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("sample_and_evaluate", n), &n, |b, &n| {
            b.iter(|| {
                sample_uniform_box(fx.model.domain(), n, RandomStream::new(1, 0))
                    .evaluated(&fx.model)
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn density(c: &mut Criterion) {
    let fx = Fixture::expdecay(1000, 100_000, 100).unwrap();
    let partition = fx.data_probs.partition().clone();
    let mut g = c.benchmark_group("data_density");
    g.throughput(Throughput::Elements(fx.data.len() as u64));
    g.bench_function("histogram_100k", |b| b.iter(|| histogram_probs(black_box(&fx.data), &partition).unwrap()));
    let h = default_kde_bandwidth(&fx.data).unwrap();
    g.bench_function("kde_100k", |b| b.iter(|| kde_cell_probs(black_box(&fx.data), &partition, h).unwrap()));
    g.finish();
}

fn weighting(c: &mut Criterion) {
    let fx = Fixture::expdecay(200_000, 20_000, 100).unwrap();
    let mut g = c.benchmark_group("posterior");
    g.throughput(Throughput::Elements(fx.prior.len() as u64));
    g.bench_function("weights_200k", |b| b.iter(|| compute_weights(fx.prior.clone(), &fx.data_probs).unwrap()));
    let post = compute_weights(fx.prior.clone(), &fx.data_probs).unwrap();
    g.bench_function("heatmap_80x80", |b| b.iter(|| marginal_heatmap(&post, &[0, 1], &[80, 80]).unwrap()));
    g.bench_function("accept_reject_200k", |b| {
        b.iter(|| run_accept_reject(&fx.prior, &fx.data_probs, RandomStream::new(4, 0)).unwrap())
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("expdecay_table", |b| b.iter(|| ExpDecayOracle::new(2.0, 12.0, 12.0).unwrap()));
    let o = ExpDecayOracle::new(2.0, 12.0, 12.0).unwrap();
    g.bench_function("expdecay_heatmap_20x20", |b| b.iter(|| o.heatmap([20, 20]).unwrap()));
    g.finish();
}

criterion_group!(benches, sampling, density, weighting, oracle);
criterion_main!(benches);
