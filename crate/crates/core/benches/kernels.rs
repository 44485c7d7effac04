use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tractsynth::eval::dcr_with;
use tractsynth::ingest::{encode_onehot, restructure, EncodedMatrix};
use tractsynth::losses::dbce_with;
use tractsynth::oracle::{oracle_schema, sample_microdata, OracleParams};
use tractsynth::par::Exec;

fn encoded(n: usize, seed: u64) -> EncodedMatrix {
    let md = sample_microdata(&OracleParams::baseline(), n, seed);
    encode_onehot(&restructure(&md, &oracle_schema()).unwrap()).unwrap()
}

fn soft(x: &EncodedMatrix, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.values.mapv(|v| 0.8 * v + 0.2 * rng.random::<f64>() / 4.0)
}

fn kernels(c: &mut Criterion) {
    let micro = encoded(1000, 1);
    let gen = soft(&encoded(500, 2), 3);
    let tau = 1.0 / micro.layout.width as f64;
    let synth = encoded(500, 4);

    let mut g = c.benchmark_group("dbce");
    g.sample_size(10);
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| dbce_with(black_box(&gen), black_box(&micro.values), tau, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("dcr");
    g.sample_size(10);
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| dcr_with(black_box(&synth), black_box(&micro), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
