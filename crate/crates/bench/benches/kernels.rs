use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use gcnssl::{normalize_adjacency, Rng, Tape, Tensor};
use gcnssl_bench::cora_sized;

fn kernels(c: &mut Criterion) {
    let g = cora_sized();
    let n = g.num_nodes();
    let adj = normalize_adjacency::<f32>(&g);
    let x = g.features().cast::<f32>();
    let mut rng = Rng::new(0);
    let theta = Tensor::from_fn(g.num_features(), 32, |_, _| rng.uniform_range(-0.1, 0.1) as f32);
    let h = Tensor::from_fn(n, 32, |_, _| rng.uniform_range(-1.0, 1.0) as f32);
    let w2 = Tensor::from_fn(32, 7, |_, _| rng.uniform_range(-1.0, 1.0) as f32);
    let target = Arc::new(g.adjacency::<f32>());

    let mut group = c.benchmark_group("kernels");
    group.sample_size(20);
    group.bench_function("features x theta1 (sparse)", |b| {
        b.iter(|| x.spmm(black_box(&theta)).unwrap())
    });
    group.bench_function("adjacency x hidden (sparse)", |b| {
        b.iter(|| adj.matrix().spmm(black_box(&h)).unwrap())
    });
    group.bench_function("hidden x theta2 (dense)", |b| b.iter(|| h.matmul(black_box(&w2)).unwrap()));
    group.bench_function("gram N x N", |b| b.iter(|| black_box(&h).gram()));
    group.bench_function("weighted bce forward+backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let hv = tape.constant(h.clone());
            let logits = tape.gram(hv);
            let loss = tape.weighted_bce(logits, Arc::clone(&target), 674.0).unwrap();
            tape.gradients(loss).unwrap()
        })
    });
    group.bench_function("fused gram + weighted bce forward+backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let hv = tape.constant(h.clone());
            let loss = tape.gram_weighted_bce(hv, Arc::clone(&target), 674.0).unwrap();
            tape.gradients(loss).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
