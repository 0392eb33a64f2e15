use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use candle_core::{Device, Tensor};
use mst_bench::{attention_fixture, scene, ATTENTION_SIDES};
use mst_core::imaging::{canny_with, CannyConfig};
use mst_core::nn::im2col;
use mst_core::wireframe::{lsm_decisions, rasterize_lines};

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("efficient_attention");
    for side in ATTENTION_SIDES {
        let f = attention_fixture(64, 4, side);
        group.throughput(Throughput::Elements((side * side) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(side * side), &f, |b, f| {
            b.iter(|| f.block.forward(black_box(&f.x), &f.mask).unwrap())
        });
    }
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3_32ch_64px");
    let x = Tensor::randn(0f32, 1.0, (2, 32, 64, 64), &Device::Cpu).unwrap();
    let w = Tensor::randn(0f32, 0.1, (32, 32, 3, 3), &Device::Cpu).unwrap();
    group.bench_function("im2col", |b| b.iter(|| im2col::conv2d(black_box(&x), &w, 1, 1, 1).unwrap()));
    group.bench_function("candle_direct", |b| b.iter(|| black_box(&x).conv2d(&w, 1, 1, 1, 1).unwrap()));
    group.finish();
}

fn lines(c: &mut Criterion) {
    let (_, wf, mask) = scene(256);
    c.bench_function("rasterize_lines_256", |b| b.iter(|| rasterize_lines(black_box(&wf), 256, 256).unwrap()));
    c.bench_function("lsm_decisions_256", |b| b.iter(|| lsm_decisions(black_box(&wf), &mask, 0.5, 7).unwrap()));
}

fn edges(c: &mut Criterion) {
    let (image, _, _) = scene(256);
    let gray = image.to_gray();
    let cfg = CannyConfig::default();
    c.bench_function("canny_256", |b| b.iter(|| canny_with(black_box(&gray), &cfg).unwrap()));
}

criterion_group!(benches, attention, convolution, lines, edges);
criterion_main!(benches);
