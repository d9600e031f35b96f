//! Brute-force re-implementations of greedy matching and interpolated AP,
//! kept independent of the library code paths they check.

use pagt_core::eval::{average_precision, equal_element_edges, match_detections, Detection, GtBox};
use pagt_core::geometry::{iou3d, Box3D};
use pagt_core::kitti::Difficulty;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-from-the-definition greedy matcher: walk detections in
/// descending score, scan every ground truth for the best unmatched IoU.
fn oracle_match(dets: &[Detection], gts: &[GtBox], thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for di in order {
        let mut best_iou = f64::NEG_INFINITY;
        let mut best_gi = usize::MAX;
        for gi in 0..gts.len() {
            if taken[gi] {
                continue;
            }
            let iou = iou3d(&dets[di].box3d, &gts[gi].box3d);
            if iou > best_iou {
                best_iou = iou;
                best_gi = gi;
            }
        }
        if best_gi != usize::MAX && best_iou >= thr {
            taken[best_gi] = true;
            tp[di] = true;
        }
    }
    tp
}

/// Direct rescan AP: for each recall position, search every curve prefix
/// for the maximum precision at recall >= r.
fn oracle_ap(scored: &[(f64, bool)], n_gt: usize, positions: usize) -> f64 {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut acc = 0.0;
    for i in 1..=positions {
        let target = i as f64 / positions as f64;
        let mut best = 0.0f64;
        let mut tp = 0usize;
        for (k, (_, t)) in sorted.iter().enumerate() {
            if *t {
                tp += 1;
            }
            let recall = tp as f64 / n_gt as f64;
            let precision = tp as f64 / (k + 1) as f64;
            if recall >= target {
                best = best.max(precision);
            }
        }
        acc += best;
    }
    100.0 * acc / positions as f64
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Detection>, Vec<GtBox>) {
    let n_gt = rng.random_range(1..=5);
    let n_det = rng.random_range(0..=10);
    let gts: Vec<GtBox> = (0..n_gt)
        .map(|_| GtBox {
            box3d: Box3D::new(
                rng.random_range(5.0..40.0),
                rng.random_range(-15.0..15.0),
                0.0,
                4.0,
                2.0,
                1.5,
                rng.random_range(-0.4..0.4),
            ),
            class_name: "Car".into(),
            frame: "f".into(),
            difficulty: Difficulty::Easy,
        })
        .collect();
    let dets: Vec<Detection> = (0..n_det)
        .map(|_| {
            // perturb a random gt so IoUs straddle the threshold
            let g = &gts[rng.random_range(0..n_gt)];
            Detection {
                box3d: Box3D::new(
                    g.box3d.cx + rng.random_range(-2.0..2.0),
                    g.box3d.cy + rng.random_range(-1.0..1.0),
                    g.box3d.cz + rng.random_range(-0.3..0.3),
                    g.box3d.l,
                    g.box3d.w,
                    g.box3d.h,
                    g.box3d.yaw + rng.random_range(-0.2..0.2),
                ),
                score: rng.random(),
                class_name: "Car".into(),
                frame: "f".into(),
            }
        })
        .collect();
    (dets, gts)
}

#[test]
fn matching_agrees_with_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..100 {
        let (dets, gts) = random_instance(&mut rng);
        let got = match_detections(&dets, &gts, 0.5);
        let expect = oracle_match(&dets, &gts, 0.5);
        assert_eq!(got.det_tp, expect);
    }
}

#[test]
fn ap_agrees_with_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for _ in 0..100 {
        let (dets, gts) = random_instance(&mut rng);
        let flags = match_detections(&dets, &gts, 0.5);
        let scored: Vec<(f64, bool)> = dets
            .iter()
            .zip(&flags.det_tp)
            .map(|(d, tp)| (d.score, *tp))
            .collect();
        let got = average_precision(&scored, gts.len(), 40).unwrap();
        let expect = oracle_ap(&scored, gts.len(), 40);
        assert!(
            (got - expect).abs() < 1e-9,
            "AP {got} vs oracle {expect} on {} dets / {} gts",
            dets.len(),
            gts.len()
        );
    }
}

#[test]
fn equal_element_counts_differ_by_at_most_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..50 {
        let n = rng.random_range(10..3_000);
        let b = rng.random_range(1..=10usize).min(n);
        let distances: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..90.0)).collect();
        let edges = equal_element_edges(&distances, b).unwrap();
        let mut counts = vec![0usize; b];
        for &d in &distances {
            counts[edges.bin_of(d).expect("value inside its own edges")] += 1;
        }
        let lo = *counts.iter().min().unwrap();
        let hi = *counts.iter().max().unwrap();
        assert!(
            hi - lo <= 1,
            "counts {counts:?} for n={n} b={b} spread more than 1"
        );
        assert_eq!(counts.iter().sum::<usize>(), n);
    }
}
