//! Sequential vs rayon batch map on two representative workloads: screening
//! scale-free graphs for the interlacing assumption, and running consensus
//! on many independent graphs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nodalloc::batch;
use nodalloc::consensus::estimate_average;
use nodalloc::graph::{gen_barabasi_albert, gen_watts_strogatz};
use nodalloc::nod::NodParams;
use nodalloc::spectral::{check_assumption1, critical_attention, eigendecompose, BiasGeometry, Sign, DEFAULT_ASSUMPTION_TOL};

fn screen(seed: &u64) -> bool {
    let Ok(g) = gen_barabasi_albert(8, 2, *seed) else { return false };
    let a = g.adjacency();
    let Ok(spec) = eigendecompose(&a) else { return false };
    let Ok(crit) = critical_attention(0.5, 0.3, -0.03, &spec) else { return false };
    let p = NodParams::new(0.5, 1.1 * crit.u_star, 0.3, -0.03, 0.0).unwrap();
    BiasGeometry::for_params(&p, &a, &spec, Sign::Plus)
        .map(|geom| check_assumption1(&spec, &geom, DEFAULT_ASSUMPTION_TOL).overall)
        .unwrap_or(false)
}

fn consensus(seed: &u64) -> f64 {
    let g = gen_watts_strogatz(60, 6, 0.2, *seed).unwrap();
    let xs: Vec<f64> = (0..60).map(|i| ((i as u64 * 7919 + seed) % 101) as f64).collect();
    estimate_average(&g, &xs, 1e-9, 10_000).unwrap().value
}

fn bench_pair<T: Sync, R: Send>(c: &mut Criterion, name: &str, items: &[T], f: fn(&T) -> R) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", items.len()), |b| {
        b.iter(|| black_box(batch::map_sequential(items, f)))
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("parallel", items.len()), |b| {
        b.iter(|| black_box(batch::map_parallel(items, f)))
    });
    group.finish();
}

fn benches(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..2048).collect();
    bench_pair(c, "assumption_screen", &seeds, screen);
    let seeds: Vec<u64> = (0..64).collect();
    bench_pair(c, "multi_graph_consensus", &seeds, consensus);
}

criterion_group!(batch_benches, benches);
criterion_main!(batch_benches);
