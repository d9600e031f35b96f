//! Rayon vs sequential throughput on the data-parallel hot paths: scan
//! simulation, nearest-neighbor cloud comparison and database builds.
//! With `--no-default-features` only the sequential baselines run.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagt_core::geometry::{Box3D, LidarPoint, PointCloud};
use pagt_core::gtdb::{build_database_seq, FrameData};
use pagt_core::kitti::{lidar_box_to_label, CalibSet};
use pagt_core::sim::{compare_clouds_seq, simulate_scan_seq, SensorSpec, TargetScene};

#[cfg(feature = "parallel")]
use pagt_core::{gtdb::build_database, sim::compare_clouds, sim::simulate_scan};

fn bench_simulate(c: &mut Criterion) {
    let spec = SensorSpec::default();
    let scene = TargetScene {
        target: Box3D::new(15.0, 0.0, -0.75, 3.9, 1.6, 1.5, 0.3),
        ground_z: Some(-1.73),
    };
    let mut group = c.benchmark_group("simulate_scan");
    group.sample_size(20);
    group.bench_function("sequential", |b| {
        b.iter(|| simulate_scan_seq(black_box(&scene), black_box(&spec)))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| simulate_scan(black_box(&scene), black_box(&spec)))
    });
    group.finish();
}

fn bench_compare(c: &mut Criterion) {
    let spec = SensorSpec::default();
    let plate = |d: f64| TargetScene {
        target: Box3D::new(d, 0.0, -0.5, 0.05, 2.0, 2.0, 0.0),
        ground_z: None,
    };
    let a = simulate_scan_seq(&plate(12.0), &spec);
    let b_cloud = simulate_scan_seq(&plate(12.2), &spec);
    let mut group = c.benchmark_group("compare_clouds");
    group.sample_size(20);
    group.bench_function("sequential", |b| {
        b.iter(|| compare_clouds_seq(black_box(&a), black_box(&b_cloud)).unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| compare_clouds(black_box(&a), black_box(&b_cloud)).unwrap())
    });
    group.finish();
}

fn synthetic_frames(n: usize) -> Vec<FrameData> {
    let calib = CalibSet::nominal();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| {
            let mut cloud = PointCloud::new();
            for _ in 0..20_000 {
                cloud.push(LidarPoint::new(
                    rng.random_range(2.0..70.0),
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-1.8..1.0),
                    0.3,
                ));
            }
            let boxes = [
                Box3D::new(12.0, -4.0, -0.9, 3.9, 1.6, 1.5, 0.2),
                Box3D::new(25.0, 3.0, -0.9, 3.9, 1.6, 1.5, -0.4),
                Box3D::new(40.0, -8.0, -0.9, 3.9, 1.6, 1.5, 0.9),
            ];
            let labels = boxes
                .iter()
                .map(|b| lidar_box_to_label(b, "Car", &calib))
                .collect();
            FrameData {
                frame_id: format!("{i:06}"),
                cloud,
                labels,
                calib: calib.clone(),
            }
        })
        .collect()
}

fn bench_build_database(c: &mut Criterion) {
    let frames = synthetic_frames(48);
    let classes = vec!["Car".to_string()];
    let mut group = c.benchmark_group("build_database");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| build_database_seq(black_box(&frames), black_box(&classes), "bench").unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| build_database(black_box(&frames), black_box(&classes), "bench").unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_compare, bench_build_database);
criterion_main!(benches);
