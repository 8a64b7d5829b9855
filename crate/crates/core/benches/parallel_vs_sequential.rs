//! Parallel vs sequential throughput of the data-parallel kernels.
//!
//! With the default `parallel` feature each workload runs on a one-thread
//! pool and on the full pool. `cargo bench --no-default-features` measures
//! the sequential fallback build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use latentbench::bench::chexpert_at_k;
use latentbench::diffusion::{build_toy_bundle, sample, SamplerConfig, SamplerMode, ToyBundleConfig};
use latentbench::ingestion::ImageSample;
use latentbench::metrics::ssim;
use latentbench::synthetic::toy_corpus;
use latentbench::tensor::Matrix;
use latentbench::{par, rng};

fn modes() -> Vec<(String, Option<rayon::ThreadPool>)> {
    if !par::is_parallel() {
        return vec![("sequential-build".into(), None)];
    }
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let n = all.current_num_threads();
    vec![("threads-1".into(), Some(one)), (format!("threads-all-{n}"), Some(all))]
}

fn run_in<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn bench_ssim(c: &mut Criterion) {
    let a = toy_corpus(1, 32, true);
    let b: Vec<ImageSample> = toy_corpus(500, 32, true);
    let mut group = c.benchmark_group("ssim-32-pairs");
    for (name, pool) in modes() {
        group.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| run_in(&pool, || par::map_range(a.len(), |i| ssim(&a[i], &b[i]).unwrap())))
        });
    }
    group.finish();
}

fn bench_chexpert(c: &mut Criterion) {
    let (n, d) = (600, 64);
    let mut r = rng::seeded(9);
    let emb = Matrix::from_vec(n, d, rng::gaussian_vec(&mut r, n * d));
    let labels: Vec<usize> = (0..n).map(|i| i % 14).collect();
    let mut group = c.benchmark_group("chexpert-at-10-n600");
    for (name, pool) in modes() {
        group.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| run_in(&pool, || chexpert_at_k(&emb, &labels, 10).unwrap()))
        });
    }
    group.finish();
}

fn bench_generation(c: &mut Criterion) {
    let bundle = build_toy_bundle(&ToyBundleConfig { hidden: 64, ..Default::default() }).unwrap();
    let cfg = SamplerConfig { steps: 20, mode: SamplerMode::Deterministic };
    let mut group = c.benchmark_group("generate-16-samples");
    group.sample_size(10);
    for (name, pool) in modes() {
        group.bench_function(BenchmarkId::from_parameter(&name), |bench| {
            bench.iter(|| {
                run_in(&pool, || par::map_range(16, |s| sample(&bundle, "a photo of a lung xray", &cfg, s as u64).unwrap()))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ssim, bench_chexpert, bench_generation);
criterion_main!(benches);
