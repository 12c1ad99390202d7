use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use flatten_bench::{random_matrix, random_points, sphere_points};
use flatten_core::autodiff::tape::dense_forward;
use flatten_core::geometry::chamfer::chamfer_distance;
use flatten_core::geometry::knn::knn_self;
use flatten_core::geometry::primitives::planar_grid;
use flatten_core::metrics::overlap::self_intersection;
use flatten_core::model::{Architecture, FlattenModel, TrainConfig, Trainer};

fn neighbors(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn_self");
    for n in [2500, 10_000] {
        let p2 = random_points::<2>(n, 1);
        let p3 = random_points::<3>(n, 2);
        g.bench_with_input(BenchmarkId::new("2d_k8", n), &p2, |b, p| b.iter(|| knn_self(black_box(p), 8).unwrap()));
        g.bench_with_input(BenchmarkId::new("3d_k3", n), &p3, |b, p| b.iter(|| knn_self(black_box(p), 3).unwrap()));
    }
    g.finish();

    let (a, b) = (random_points::<3>(2500, 3), random_points::<3>(2500, 4));
    c.bench_function("chamfer_2500", |bch| bch.iter(|| chamfer_distance(black_box(&a), black_box(&b)).unwrap()));
}

fn dense(c: &mut Criterion) {
    let mut g = c.benchmark_group("dense_forward");
    g.sample_size(20);
    for width in [64, 512] {
        let x = random_matrix(2500, width, 5);
        let w = random_matrix(width, width, 6);
        let bias = random_matrix(1, width, 7);
        g.bench_with_input(BenchmarkId::new("2500_rows", width), &width, |b, _| {
            b.iter(|| dense_forward(black_box(&x), &w, &bias, true))
        });
    }
    g.finish();
}

fn overlap(c: &mut Criterion) {
    let mesh = planar_grid(50, 50, 2.0, 2.0);
    let uv: Vec<[f64; 2]> = mesh.vertices().iter().map(|v| [v[0] + 0.01 * (7.0 * v[1]).sin(), v[1]]).collect();
    c.bench_function("self_intersection_grid50", |b| b.iter(|| self_intersection(mesh.faces(), black_box(&uv)).unwrap()));
}

fn training_step(c: &mut Criterion) {
    let cfg = TrainConfig {
        n_points: 2500,
        iterations: usize::MAX,
        early_stop: None,
        architecture: Architecture::scaled(64, 32),
        ..TrainConfig::default()
    };
    let model = FlattenModel::new(cfg.architecture.clone(), 0).unwrap();
    let mut trainer = Trainer::new(model, sphere_points(), cfg).unwrap();
    let mut g = c.benchmark_group("train_step");
    g.sample_size(10);
    g.bench_function("sphere_n2500_width64", |b| b.iter(|| trainer.step().unwrap()));
    g.finish();
}

criterion_group!(benches, neighbors, dense, overlap, training_step);
criterion_main!(benches);
