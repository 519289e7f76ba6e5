use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pan_bench::{random_points, random_tensor};
use pan_core::autodiff::{Graph, ParamStore};
use pan_core::network::{PanConfig, PanModel};
use pan_core::retrieval::{pairwise_sqdist, rerank, RerankParams};
use pan_core::spatial::{bilinear_sample, make_grid, sample_backward};
use pan_core::AffineParams;

fn conv(c: &mut Criterion) {
    let x = random_tensor(&[16, 32, 32, 16], 1);
    let w = random_tensor(&[64, 32, 3, 3], 2);
    c.bench_function("conv3x3 16x32x32x16 -> 64 forward", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let (xv, wv) = (g.input(x.clone()), g.input(w.clone()));
            black_box(g.conv2d(xv, wv, None, 1, 1).unwrap());
        })
    });
    c.bench_function("conv3x3 16x32x32x16 -> 64 forward+backward", |b| {
        let mut store = ParamStore::new();
        b.iter(|| {
            let mut g = Graph::new();
            let (xv, wv) = (g.input_with_grad(x.clone()), g.input_with_grad(w.clone()));
            let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
            let l = g.sum(y);
            black_box(g.backward(l, &mut store).unwrap());
        })
    });
}

fn sampler(c: &mut Criterion) {
    let img = random_tensor(&[64, 32, 16], 3);
    let theta = AffineParams::from_rows([0.8, 0.05, -0.1], [0.02, 0.9, 0.1]).unwrap();
    let grid = make_grid(&theta, 32, 16).unwrap();
    let up = random_tensor(&[64, 32, 16], 4);
    c.bench_function("bilinear sample 64x32x16", |b| {
        b.iter(|| black_box(bilinear_sample(&img, &grid).unwrap()))
    });
    c.bench_function("bilinear sample backward 64x32x16", |b| {
        b.iter(|| black_box(sample_backward(&img, &grid, &up).unwrap()))
    });
}

fn retrieval(c: &mut Criterion) {
    let pts = random_points(400, 256, 5);
    c.bench_function("pairwise distances 400x400x256", |b| {
        b.iter(|| black_box(pairwise_sqdist(&pts, &pts).unwrap()))
    });
    let d = pairwise_sqdist(&pts, &pts).unwrap();
    c.bench_function("k-reciprocal rerank n=400 k=20", |b| {
        b.iter(|| black_box(rerank(&d, RerankParams::default()).unwrap()))
    });
}

fn network(c: &mut Criterion) {
    let model = PanModel::new(PanConfig::default()).unwrap();
    let batch = random_tensor(&[16, 3, 64, 32], 6);
    c.bench_function("network forward batch 16", |b| {
        b.iter(|| black_box(model.forward(&batch).unwrap()))
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = conv, sampler, retrieval, network
}
criterion_main!(kernels);
