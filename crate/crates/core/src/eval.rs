//! Equal-element distance binning and per-bin average precision.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{iou3d, Box3D};
use crate::kitti::Difficulty;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Ascending bin boundaries: `edges.len() == bins + 1`. Intervals are
/// half-open `[e_i, e_{i+1})` except the last, which is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges {
    edges: Vec<f64>,
}

impl BinEdges {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidBinEdges("need at least two edges".into()));
        }
        if edges.iter().any(|e| e.is_nan()) {
            return Err(Error::InvalidBinEdges("edge is NaN".into()));
        }
        if edges[0] < 0.0 {
            return Err(Error::InvalidBinEdges(format!(
                "first edge {} is negative",
                edges[0]
            )));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidBinEdges(
                "edges are not strictly increasing".into(),
            ));
        }
        Ok(BinEdges { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// Bin index of a value, or `None` outside the overall range.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        let last = self.edges.len() - 1;
        if v < self.edges[0] || v > self.edges[last] {
            return None;
        }
        if v == self.edges[last] {
            return Some(last - 1);
        }
        // partition_point returns the count of edges <= v
        let idx = self.edges.partition_point(|e| *e <= v);
        Some(idx - 1)
    }
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Edges at the 0, 1/B, ..., 1 quantiles of the distances, so every bin
/// receives floor(N/B) or ceil(N/B) elements (for distinct values).
pub fn equal_element_edges(distances: &[f64], bins: usize) -> Result<BinEdges> {
    if bins == 0 {
        return Err(Error::InvalidConfig("bin count must be >= 1".into()));
    }
    if distances.len() < bins {
        return Err(Error::TooFewSamples {
            n: distances.len(),
            bins,
        });
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (0..=bins)
        .map(|i| quantile_sorted(&sorted, i as f64 / bins as f64))
        .collect();
    BinEdges::from_edges(edges)
}

/// Per-bin histogram heights normalized so every bin has area
/// `count / N`: `height_i = count_i / (N * width_i)`.
pub fn normalized_histogram(distances: &[f64], edges: &BinEdges) -> Vec<f64> {
    let mut counts = vec![0usize; edges.num_bins()];
    for &d in distances {
        if let Some(b) = edges.bin_of(d) {
            counts[b] += 1;
        }
    }
    let n = distances.len().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (n * edges.width(i)))
        .collect()
}

/// Biased Fisher-Pearson sample skewness: m3 / m2^(3/2).
pub fn sample_skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// A predicted box with its confidence score.
#[derive(Debug, Clone)]
pub struct Detection {
    pub box3d: Box3D,
    pub score: f64,
    pub class_name: String,
    pub frame: String,
}

/// A ground-truth box prepared for evaluation.
#[derive(Debug, Clone)]
pub struct GtBox {
    pub box3d: Box3D,
    pub class_name: String,
    pub frame: String,
    pub difficulty: Difficulty,
}

/// Matching of one frame's detections against its ground truths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// True-positive flag per detection, in input order.
    pub det_tp: Vec<bool>,
    /// Index of the matched ground truth per detection (`None` for FP).
    pub det_match: Vec<Option<usize>>,
    /// Matched flag per ground truth, in input order.
    pub gt_matched: Vec<bool>,
}

fn match_refs(det_boxes: &[(&Box3D, f64)], gt_boxes: &[&Box3D], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..det_boxes.len()).collect();
    order.sort_by(|&a, &b| det_boxes[b].1.total_cmp(&det_boxes[a].1));

    let mut det_tp = vec![false; det_boxes.len()];
    let mut det_match = vec![None; det_boxes.len()];
    let mut gt_matched = vec![false; gt_boxes.len()];
    for di in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gt_boxes.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let iou = iou3d(det_boxes[di].0, gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, iou)) = best {
            if iou >= iou_threshold {
                det_tp[di] = true;
                det_match[di] = Some(gi);
                gt_matched[gi] = true;
            }
        }
    }
    MatchResult {
        det_tp,
        det_match,
        gt_matched,
    }
}

/// Greedy matching in descending score order: each detection matches the
/// unmatched ground truth of highest IoU if that IoU reaches the threshold.
/// Detections and ground truths must share one frame and class.
pub fn match_detections(dets: &[Detection], gts: &[GtBox], iou_threshold: f64) -> MatchResult {
    let det_boxes: Vec<(&Box3D, f64)> = dets.iter().map(|d| (&d.box3d, d.score)).collect();
    let gt_boxes: Vec<&Box3D> = gts.iter().map(|g| &g.box3d).collect();
    match_refs(&det_boxes, &gt_boxes, iou_threshold)
}

/// Interpolated average precision over `recall_positions` evenly spaced
/// recall levels `i / R, i = 1..R`, as a percentage. `None` when there is no
/// ground truth (the bin is reported as absent).
pub fn average_precision(
    scored_flags: &[(f64, bool)],
    n_gt: usize,
    recall_positions: usize,
) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scored_flags.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut recalls = Vec::with_capacity(sorted.len());
    let mut precisions = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (k, (_, is_tp)) in sorted.iter().enumerate() {
        if *is_tp {
            tp += 1;
        }
        recalls.push(tp as f64 / n_gt as f64);
        precisions.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope: max precision at or beyond each position
    let mut envelope = precisions.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }

    let r = recall_positions as f64;
    let mut acc = 0.0;
    for i in 1..=recall_positions {
        let target = i as f64 / r;
        // first curve point with recall >= target
        let k = recalls.partition_point(|&rec| rec < target);
        if k < envelope.len() {
            acc += envelope[k];
        }
    }
    Some(100.0 * acc / r)
}

/// Per-bin evaluation result.
#[derive(Debug, Clone)]
pub struct BinAp {
    pub lo: f64,
    pub hi: f64,
    pub n_gt: usize,
    pub n_det: usize,
    /// `None` when the bin holds no ground truth (absent bin).
    pub ap: Option<f64>,
}

fn group_by_frame<'a>(
    dets: &[&'a Detection],
    gts: &[&'a GtBox],
) -> BTreeMap<&'a str, (Vec<&'a Detection>, Vec<&'a GtBox>)> {
    let mut frames: BTreeMap<&str, (Vec<&Detection>, Vec<&GtBox>)> = BTreeMap::new();
    for d in dets {
        frames.entry(d.frame.as_str()).or_default().0.push(d);
    }
    for g in gts {
        frames.entry(g.frame.as_str()).or_default().1.push(g);
    }
    frames
}

fn match_frame_group(fd: &[&Detection], fg: &[&GtBox], iou_threshold: f64) -> Vec<(f64, bool)> {
    let det_boxes: Vec<(&Box3D, f64)> = fd.iter().map(|d| (&d.box3d, d.score)).collect();
    let gt_boxes: Vec<&Box3D> = fg.iter().map(|g| &g.box3d).collect();
    let m = match_refs(&det_boxes, &gt_boxes, iou_threshold);
    fd.iter().zip(m.det_tp).map(|(d, tp)| (d.score, tp)).collect()
}

fn pooled_ap_per_frame(
    dets: &[&Detection],
    gts: &[&GtBox],
    iou_threshold: f64,
    recall_positions: usize,
) -> Option<f64> {
    let frames = group_by_frame(dets, gts);
    let groups: Vec<&(Vec<&Detection>, Vec<&GtBox>)> = frames.values().collect();

    #[cfg(feature = "parallel")]
    let per_frame: Vec<Vec<(f64, bool)>> = groups
        .par_iter()
        .map(|(fd, fg)| match_frame_group(fd, fg, iou_threshold))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let per_frame: Vec<Vec<(f64, bool)>> = groups
        .iter()
        .map(|(fd, fg)| match_frame_group(fd, fg, iou_threshold))
        .collect();

    let scored: Vec<(f64, bool)> = per_frame.into_iter().flatten().collect();
    average_precision(&scored, gts.len(), recall_positions)
}

/// Assigns every ground truth and detection to a bin by its own horizontal
/// center distance and evaluates AP independently per bin. No difficulty
/// filter applies. Items outside the edge range are not evaluated.
pub fn ap_by_bin(
    dets: &[Detection],
    gts: &[GtBox],
    edges: &BinEdges,
    iou_threshold: f64,
    recall_positions: usize,
) -> Vec<BinAp> {
    let b = edges.num_bins();
    let mut bin_dets: Vec<Vec<&Detection>> = vec![Vec::new(); b];
    let mut bin_gts: Vec<Vec<&GtBox>> = vec![Vec::new(); b];
    for d in dets {
        if let Some(i) = edges.bin_of(d.box3d.center_distance()) {
            bin_dets[i].push(d);
        }
    }
    for g in gts {
        if let Some(i) = edges.bin_of(g.box3d.center_distance()) {
            bin_gts[i].push(g);
        }
    }
    (0..b)
        .map(|i| BinAp {
            lo: edges.edges()[i],
            hi: edges.edges()[i + 1],
            n_gt: bin_gts[i].len(),
            n_det: bin_dets[i].len(),
            ap: pooled_ap_per_frame(&bin_dets[i], &bin_gts[i], iou_threshold, recall_positions),
        })
        .collect()
}

/// Overall AP for one difficulty level with KITTI-style ignore semantics:
/// ground truths harder than the level are neither matchable targets nor
/// false-positive sources; detections matching them are dropped from the
/// precision-recall curve.
pub fn overall_ap(
    dets: &[Detection],
    gts: &[GtBox],
    difficulty: Difficulty,
    iou_threshold: f64,
    recall_positions: usize,
) -> Option<f64> {
    let det_refs: Vec<&Detection> = dets.iter().collect();
    let gt_refs: Vec<&GtBox> = gts.iter().collect();
    let frames = group_by_frame(&det_refs, &gt_refs);

    let mut scored: Vec<(f64, bool)> = Vec::new();
    let mut n_valid = 0usize;
    for (fd, fg) in frames.values() {
        let valid: Vec<bool> = fg
            .iter()
            .map(|g| g.difficulty != Difficulty::Excluded && g.difficulty <= difficulty)
            .collect();
        n_valid += valid.iter().filter(|v| **v).count();
        let det_boxes: Vec<(&Box3D, f64)> = fd.iter().map(|d| (&d.box3d, d.score)).collect();
        let gt_boxes: Vec<&Box3D> = fg.iter().map(|g| &g.box3d).collect();
        let m = match_refs(&det_boxes, &gt_boxes, iou_threshold);
        for (di, d) in fd.iter().enumerate() {
            match m.det_match[di] {
                Some(gi) if valid[gi] => scored.push((d.score, true)),
                // matches to out-of-difficulty gts are ignored entirely
                Some(_) => {}
                None => scored.push((d.score, false)),
            }
        }
    }
    average_precision(&scored, n_valid, recall_positions)
}

/// Full evaluation of one class: equal-element bin APs plus overall AP per
/// difficulty.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub class_name: String,
    pub iou_threshold: f64,
    pub recall_positions: usize,
    pub edges: BinEdges,
    pub bins: Vec<BinAp>,
    pub overall: Vec<(Difficulty, usize, Option<f64>)>,
}

/// Builds the report: edges from the ground-truth distances, per-bin AP and
/// per-difficulty overall AP.
pub fn evaluate_class(
    class_name: &str,
    dets: &[Detection],
    gts: &[GtBox],
    bins: usize,
    iou_threshold: f64,
    recall_positions: usize,
) -> Result<EvalReport> {
    let distances: Vec<f64> = gts.iter().map(|g| g.box3d.center_distance()).collect();
    let edges = equal_element_edges(&distances, bins)?;
    let bin_aps = ap_by_bin(dets, gts, &edges, iou_threshold, recall_positions);
    let overall = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard]
        .into_iter()
        .map(|diff| {
            let n = gts
                .iter()
                .filter(|g| g.difficulty != Difficulty::Excluded && g.difficulty <= diff)
                .count();
            (
                diff,
                n,
                overall_ap(dets, gts, diff, iou_threshold, recall_positions),
            )
        })
        .collect();
    Ok(EvalReport {
        class_name: class_name.to_string(),
        iou_threshold,
        recall_positions,
        edges,
        bins: bin_aps,
        overall,
    })
}
