use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sentcls_bench::{bench_input, bench_spec};
use sentcls_core::{init_params, ArchKind, Grads, Rng};
use std::hint::black_box;

const DIM: usize = 300;
const LEN: usize = 20;

fn models(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    group.sample_size(20);
    for arch in [ArchKind::Fnn, ArchKind::Cnn, ArchKind::Rnn, ArchKind::Lstm] {
        let params = init_params(&bench_spec(arch, DIM), 1).unwrap();
        let input = bench_input(arch, DIM, LEN, &mut Rng::new(2));
        let mut grads = Grads::zeros_like(&params);
        group.bench_with_input(BenchmarkId::new("train_step", format!("{arch:?}")), &arch, |b, _| {
            b.iter(|| {
                let mut rng = Rng::new(3);
                let (_, trace) = params.forward(black_box(&input), true, &mut rng).unwrap();
                params.accumulate_backward(&trace, 0, 1.0, &mut grads).unwrap();
            })
        });
        group.bench_with_input(BenchmarkId::new("predict", format!("{arch:?}")), &arch, |b, _| {
            b.iter(|| params.predict(black_box(&input)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, models);
criterion_main!(benches);
