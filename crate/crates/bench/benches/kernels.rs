use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use depthlab::grad::photometric_masked_grad;
use depthlab::loss::ssim;
use depthlab::optim::{optimize_depth, sweep_landscape, AdamConfig, DepthField, LossKind};
use depthlab::raster::Raster;
use depthlab::warp::{inverse_warp, PaddingMode};
use depthlab::Configs;
use depthlab_bench::bench_scene;

fn bench_inverse_warp(c: &mut Criterion) {
    let (spec, scene) = bench_scene();
    c.bench_function("inverse_warp_64x192x3", |b| {
        b.iter(|| {
            inverse_warp(
                black_box(&scene.source),
                &scene.depth_gt,
                &spec.rig,
                PaddingMode::Border,
            )
            .unwrap()
        })
    });
}

fn bench_ssim(c: &mut Criterion) {
    let (_, scene) = bench_scene();
    let cfg = Configs::default().loss;
    c.bench_function("ssim_3x3_64x192x3", |b| {
        b.iter(|| ssim(black_box(&scene.target), &scene.source, &cfg).unwrap())
    });
}

fn bench_photometric_grad(c: &mut Criterion) {
    let (spec, scene) = bench_scene();
    let cfgs = Configs::default();
    let mask = Raster::filled(scene.height(), scene.width(), 1, 1.0).unwrap();
    c.bench_function("photometric_masked_grad_64x192", |b| {
        b.iter(|| {
            photometric_masked_grad(
                black_box(&scene.target),
                &scene.source,
                &scene.depth_gt,
                &spec.rig,
                &cfgs.loss,
                &mask,
            )
            .unwrap()
        })
    });
}

fn bench_landscape(c: &mut Criterion) {
    let (spec, scene) = bench_scene();
    let cfgs = Configs::default();
    c.bench_function("sweep_landscape_1581_samples", |b| {
        b.iter(|| {
            sweep_landscape(
                black_box(&scene),
                (32, 76),
                &spec.rig,
                &cfgs,
                (1.0, 80.0),
                0.05,
            )
            .unwrap()
        })
    });
}

fn bench_adam_steps(c: &mut Criterion) {
    let (spec, scene) = bench_scene();
    let cfgs = Configs::default();
    let init =
        DepthField::constant_depth(scene.height(), scene.width(), 60.0, cfgs.activation).unwrap();
    let adam = AdamConfig {
        steps: 10,
        ..AdamConfig::default()
    };
    c.bench_function("adam_lfd_10_steps_64x192", |b| {
        b.iter(|| {
            optimize_depth(
                black_box(&scene),
                &init,
                LossKind::Lfd,
                &adam,
                &spec.rig,
                &cfgs,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_inverse_warp,
    bench_ssim,
    bench_photometric_grad,
    bench_landscape,
    bench_adam_steps
);
criterion_main!(benches);
