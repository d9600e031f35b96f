//! Property and statistical tests for the pattern-aware sampler and the
//! baseline augmentations.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagt_core::baselines::{frustum_dropout, frustum_noise, frustum_of_box, random_drop};
use pagt_core::geometry::{to_spherical, Box3D, LidarPoint, PointCloud};
use pagt_core::gtdb::{insert_objects, GtObject};
use pagt_core::pattern::{
    downsample_pattern, relocate_object, slice_index, AngularGrid, PatternAwareConfig,
};

fn hdl64_cloud(n: usize, seed: u64) -> PointCloud {
    // random points inside the HDL-64E angular extents
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta: f64 = rng.random_range(-3.1..3.1);
            let phi: f64 = rng.random_range(-0.43..0.034);
            let r: f64 = rng.random_range(2.0..80.0);
            LidarPoint::new(
                r * phi.cos() * theta.cos(),
                r * phi.cos() * theta.sin(),
                r * phi.sin(),
                rng.random(),
            )
        })
        .collect()
}

#[test]
fn downsample_is_subset_with_even_indices() {
    let grid = AngularGrid::hdl64();
    let cloud = hdl64_cloud(5_000, 1);
    let kept = downsample_pattern(&cloud, &grid).unwrap();
    assert!(kept.len() < cloud.len());
    let mut cursor = 0usize;
    for p in &kept {
        // subset in original order
        while cloud.points()[cursor] != *p {
            cursor += 1;
        }
        let (it, ip) = slice_index(&to_spherical(p), &grid).unwrap();
        assert_eq!(it % 2, 0);
        assert_eq!(ip % 2, 0);
    }
}

#[test]
fn slice_counts_roughly_uniform() {
    // chi-square sanity check over the azimuth slices of a small grid
    let grid = AngularGrid::new(-1.0, 1.0, 16, -0.4, 0.034, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000usize;
    let mut counts = [0usize; 16];
    for _ in 0..n {
        let s = pagt_core::geometry::SphericalPoint {
            r: 10.0,
            d: 10.0,
            theta: rng.random_range(-1.0..1.0),
            phi: rng.random_range(-0.3..0.03),
        };
        let (it, _) = slice_index(&s, &grid).unwrap();
        counts[it] += 1;
    }
    let expected = n as f64 / 16.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // df = 15, far beyond the 99.9% quantile (37.7) means non-uniform
    assert!(chi2 < 37.7, "chi-square {chi2}");
}

proptest! {
    #[test]
    fn relocation_scales_distance_and_keeps_points_inside(
        cx in 3.0..30.0f64,
        cy in -20.0..20.0f64,
        cz in -2.0..0.0f64,
        yaw in -3.0..3.0f64,
        factor in 2..5usize,
    ) {
        let b = Box3D::new(cx, cy, cz, 4.0, 2.0, 1.6, yaw);
        let (s, c) = b.yaw.sin_cos();
        let points: PointCloud = (0..32)
            .map(|i| {
                let t = (i as f64 + 0.5) / 32.0 - 0.5;
                let (u, v) = (0.9 * t * b.l, -0.9 * t * b.w);
                LidarPoint::new(b.cx + c * u - s * v, b.cy + s * u + c * v, b.cz + 0.9 * t * b.h, 0.5)
            })
            .collect();
        let factor = factor as f64;
        let (moved, mpts) = relocate_object(&b, &points, factor).unwrap();
        prop_assert!((moved.center_distance() - factor * b.center_distance()).abs() < 1e-9);
        prop_assert!((moved.cz - moved.h / 2.0 - (b.cz - b.h / 2.0)).abs() < 1e-12);
        for p in &mpts {
            prop_assert!(moved.contains(p));
        }
    }

    #[test]
    fn insert_objects_never_leaves_overlap(
        xs in proptest::collection::vec((8.0..60.0f64, -15.0..15.0f64), 1..8)
    ) {
        let candidates: Vec<GtObject> = xs
            .iter()
            .map(|&(x, y)| {
                let b = Box3D::new(x, y, -0.5, 4.2, 1.9, 1.6, 0.3);
                GtObject::new("Car".into(), b, PointCloud::new(), "f".into())
            })
            .collect();
        let existing = Box3D::new(12.0, 0.0, -0.5, 4.2, 1.9, 1.6, -0.4);
        let out = insert_objects(&PointCloud::new(), &[existing], &candidates);
        for i in 0..out.boxes.len() {
            for j in (i + 1)..out.boxes.len() {
                prop_assert_eq!(
                    pagt_core::geometry::bev_overlap_area(&out.boxes[i], &out.boxes[j]),
                    0.0
                );
            }
        }
    }
}

#[test]
fn insert_objects_size_accounting() {
    // augmented size = original - removed background + accepted points
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let background: PointCloud = (0..2_000)
        .map(|_| {
            LidarPoint::new(
                rng.random_range(0.0..70.0),
                rng.random_range(-30.0..30.0),
                -1.7,
                0.1,
            )
        })
        .collect();
    let candidates: Vec<GtObject> = (0..4)
        .map(|i| {
            let b = Box3D::new(15.0 + 9.0 * i as f64, 4.0 * (i % 2) as f64, -1.0, 4.0, 2.0, 1.5, 0.2);
            let pts: PointCloud = (0..25)
                .map(|k| {
                    let t = (k as f64 + 0.5) / 25.0 - 0.5;
                    LidarPoint::new(b.cx + t * 3.0, b.cy + t * 1.5, b.cz + t, 0.9)
                })
                .collect();
            GtObject::new("Car".into(), b, pts, "f".into())
        })
        .collect();
    let out = insert_objects(&background, &[], &candidates);
    let removed = background
        .iter()
        .filter(|p| {
            out.accepted
                .iter()
                .any(|&i| candidates[i].box3d.footprint_contains(p.x, p.y))
        })
        .count();
    let added: usize = out.accepted.iter().map(|&i| candidates[i].points.len()).sum();
    assert_eq!(out.cloud.len(), background.len() - removed + added);
}

#[test]
fn distribution_shift_on_skewed_database() {
    // relocating 40% of a near-skewed population pushes the mean up and
    // reduces skewness
    use pagt_core::eval::sample_skewness;
    use pagt_core::pattern::{pattern_aware_sample, SampleOutcome};
    use rand_distr::{Distribution, Gamma};

    let cfg = PatternAwareConfig::kitti_hdl64();
    let gamma = Gamma::new(3.0, 6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut before = Vec::new();
    let mut after = Vec::new();
    for _ in 0..5_000 {
        let raw: f64 = gamma.sample(&mut rng);
        let d = raw.clamp(3.0, 80.0);
        let theta: f64 = rng.random_range(-0.7..0.7);
        let b = Box3D::new(d * theta.cos(), d * theta.sin(), -0.8, 4.0, 2.0, 1.6, 0.0);
        let (s, c) = (theta.sin(), theta.cos());
        let pts: PointCloud = (0..80)
            .map(|k| {
                let t = (k as f64 + 0.5) / 80.0 - 0.5;
                let (u, v) = (0.9 * t * b.l, -0.9 * t * b.w);
                LidarPoint::new(b.cx + c * u - s * v, b.cy + s * u + c * v, b.cz + 0.9 * t * b.h, 0.5)
            })
            .collect();
        let obj = GtObject::new("Car".into(), b, pts, "f".into());
        before.push(obj.distance);
        match pattern_aware_sample(&obj, &cfg, &mut rng) {
            SampleOutcome::Relocated(moved) => {
                assert!(moved.distance >= 20.0 - 1e-9 && moved.distance <= 70.0 + 1e-9);
                after.push(moved.distance);
            }
            _ => after.push(obj.distance),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&after) > mean(&before));
    assert!(sample_skewness(&after) < sample_skewness(&before));
}

#[test]
fn frustum_ops_touch_only_the_intersection() {
    let b = Box3D::new(18.0, -3.0, -0.6, 4.2, 1.9, 1.5, 0.5);
    let frustum = frustum_of_box(&b).unwrap();
    let cloud = hdl64_cloud(4_000, 21);
    let affected: Vec<bool> = cloud
        .iter()
        .map(|p| b.contains(p) && frustum.contains(&to_spherical(p)))
        .collect();

    let dropped = frustum_dropout(&cloud, &b, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let expect_survivors = affected.iter().filter(|a| !**a).count();
    assert_eq!(dropped.len(), expect_survivors);

    let noisy = frustum_noise(&cloud, &b, 0.05, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(noisy.len(), cloud.len());
    for ((p, q), touched) in cloud.iter().zip(noisy.iter()).zip(&affected) {
        if !touched {
            assert_eq!(p, q);
        }
    }

    let thinned = random_drop(&cloud, &b, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(
        thinned.len(),
        cloud.iter().filter(|p| !b.contains(p)).count()
    );
}

#[test]
fn dropout_survival_within_binomial_bounds() {
    // 10^4 intersection points, p = 0.5: survivors within the 99% band
    let b = Box3D::new(20.0, 0.0, 0.0, 4.0, 4.0, 2.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cloud: PointCloud = (0..10_000)
        .map(|_| {
            LidarPoint::new(
                rng.random_range(18.5..21.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-0.7..0.7),
                0.5,
            )
        })
        .collect();
    let frustum = frustum_of_box(&b).unwrap();
    let affected = cloud
        .iter()
        .filter(|p| b.contains(p) && frustum.contains(&to_spherical(p)))
        .count();
    assert!(affected > 9_000, "fixture should sit inside the frustum");

    let survived = frustum_dropout(&cloud, &b, 0.5, &mut ChaCha8Rng::seed_from_u64(5))
        .unwrap()
        .len()
        - (cloud.len() - affected);
    let frac = survived as f64 / affected as f64;
    let bound = 2.576 * (0.25f64 / affected as f64).sqrt();
    assert!(
        (frac - 0.5).abs() < bound,
        "survival fraction {frac} outside 0.5 +- {bound}"
    );
}

#[test]
fn noise_stddev_matches_sigma() {
    let b = Box3D::new(20.0, 0.0, 0.0, 4.0, 4.0, 2.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cloud: PointCloud = (0..10_000)
        .map(|_| {
            LidarPoint::new(
                rng.random_range(18.5..21.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-0.7..0.7),
                0.5,
            )
        })
        .collect();
    let sigma = 0.02;
    let noisy = frustum_noise(&cloud, &b, sigma, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let mut offsets = Vec::new();
    for (p, q) in cloud.iter().zip(noisy.iter()) {
        if p != q {
            offsets.push(q.x - p.x);
            offsets.push(q.y - p.y);
            offsets.push(q.z - p.z);
        }
    }
    assert!(offsets.len() > 20_000);
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let var = offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / offsets.len() as f64;
    let sd = var.sqrt();
    assert!(
        (sd - sigma).abs() < 0.1 * sigma,
        "offset stddev {sd} vs sigma {sigma}"
    );
}

#[test]
fn augment_frame_respects_plan_and_grid() {
    // objects drawn per plan across two classes; outputs stay collision-free
    use pagt_core::gtdb::GtDatabase;
    use pagt_core::pattern::{augment_frame, derive_rng};

    let mut db = GtDatabase::new("test");
    for i in 0..6 {
        let b = Box3D::new(12.0 + 5.0 * i as f64, -10.0 + 4.0 * i as f64, -0.8, 4.0, 2.0, 1.6, 0.1);
        let pts: PointCloud = (0..60)
            .map(|k| {
                let t = (k as f64 + 0.5) / 60.0 - 0.5;
                LidarPoint::new(b.cx + t * 3.5, b.cy + t * 1.7, b.cz + t * 1.4, 0.4)
            })
            .collect();
        let class = if i % 2 == 0 { "Car" } else { "Cyclist" };
        db.insert(GtObject::new(class.into(), b, pts, format!("{i:06}")));
    }
    let cfg = PatternAwareConfig::kitti_hdl64();
    let plan = BTreeMap::from([("Car".to_string(), 2usize), ("Cyclist".to_string(), 1usize)]);
    let aug = augment_frame(
        &PointCloud::new(),
        &[],
        &db,
        &cfg,
        &plan,
        &mut derive_rng(5, "000001"),
    )
    .unwrap();
    assert_eq!(aug.stats.drawn, 3);
    assert_eq!(aug.stats.accepted, aug.inserted.len());
    for i in 0..aug.boxes.len() {
        for j in (i + 1)..aug.boxes.len() {
            assert_eq!(
                pagt_core::geometry::bev_overlap_area(&aug.boxes[i], &aug.boxes[j]),
                0.0
            );
        }
    }
}
