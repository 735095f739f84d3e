use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spinsplat::par;
use spinsplat::planner::CameraRig;
use spinsplat::radiance::{eval_cloud_colors, MlpParams, HIDDEN};
use spinsplat::raster::{render_backward, render_splats};
use spinsplat::reference::{render_reference, SyntheticScene};
use spinsplat::scene::EnvLight;
use spinsplat::train::{init_cloud, InitSource};

fn bench(c: &mut Criterion) {
    let scene = SyntheticScene::tabletop();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cloud = init_cloud(InitSource::Surface(&scene), 2000, &mut rng).unwrap();
    let mlp = MlpParams::init(HIDDEN, &mut rng);
    let cam = CameraRig::default().pose_at(0.4, 0.3).unwrap();
    let env = EnvLight::studio();
    let colors = eval_cloud_colors(&cloud, &mlp, &cam, 0.5).unwrap();
    let grad = vec![1e-3; (cam.width * cam.height * 3) as usize];

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(20);
    for (label, sequential) in [("parallel", false), ("sequential", true)] {
        par::set_sequential(sequential);
        group.bench_function(BenchmarkId::new("decode_colors", label), |b| {
            b.iter(|| eval_cloud_colors(&cloud, &mlp, &cam, 0.5).unwrap())
        });
        group.bench_function(BenchmarkId::new("render_forward", label), |b| {
            b.iter(|| render_splats(&cloud, &colors, &cam, [0.0; 3]).unwrap())
        });
        group.bench_function(BenchmarkId::new("render_backward", label), |b| {
            b.iter(|| render_backward(&cloud, &colors, &cam, [0.0; 3], &grad).unwrap())
        });
        group.bench_function(BenchmarkId::new("reference_render", label), |b| {
            b.iter(|| render_reference(&scene, &cam, &env, 0.5))
        });
    }
    par::set_sequential(false);
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
