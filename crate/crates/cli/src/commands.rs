//! Command implementations behind the `pagt` subcommands. Each returns a
//! summary value so tests can drive commands without spawning processes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use pagt_core::baselines::{frustum_dropout, frustum_noise, random_drop, global_transform, GlobalTransform};
use pagt_core::eval::{
    equal_element_edges, evaluate_class, normalized_histogram, sample_skewness, BinEdges,
    Detection, EvalReport, GtBox,
};
use pagt_core::geometry::Box3D;
use pagt_core::gtdb::{build_database, load_database, save_database, FrameData, GtDatabase};
use pagt_core::kitti::{
    difficulty_of, label_to_lidar_box, lidar_box_to_label, parse_calib, parse_labels,
    parse_results, read_point_cloud, write_labels_exact, write_point_cloud, CalibSet, KittiLabel,
};
use pagt_core::pattern::{augment_frame, derive_rng, pattern_aware_sample, SampleOutcome};
use pagt_core::sim::{oracle_chain, ChainReport};
use pagt_core::{Error, Result};

use crate::config::RunConfig;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Process exit code for an error: 1 I/O, 2 malformed data, 3 bad config.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        Error::InvalidConfig(_) => 3,
        _ => 2,
    }
}

/// Line-oriented log record with a machine-parsable prefix.
pub fn log(cmd: &str, msg: &str) {
    println!("pagt {cmd} {msg}");
}

fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let mut ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    ids.sort();
    ids.dedup();
    Ok(ids)
}

fn frame_file(root: &Path, sub: &str, id: &str, ext: &str) -> PathBuf {
    root.join(sub).join(format!("{id}.{ext}"))
}

fn load_frame(root: &Path, id: &str) -> Result<FrameData> {
    let wrap = |e: Error| e.in_frame(id);
    let bytes = fs::read(frame_file(root, "velodyne", id, "bin")).map_err(|e| wrap(e.into()))?;
    let cloud = read_point_cloud(&bytes).map_err(wrap)?;
    let labels_text =
        fs::read_to_string(frame_file(root, "label_2", id, "txt")).map_err(|e| wrap(e.into()))?;
    let labels = parse_labels(&labels_text).map_err(wrap)?;
    let calib_text =
        fs::read_to_string(frame_file(root, "calib", id, "txt")).map_err(|e| wrap(e.into()))?;
    let calib = parse_calib(&calib_text).map_err(wrap)?;
    Ok(FrameData {
        frame_id: id.to_string(),
        cloud,
        labels,
        calib,
    })
}

fn load_frame_meta(root: &Path, id: &str) -> Result<(Vec<KittiLabel>, CalibSet)> {
    let wrap = |e: Error| e.in_frame(id);
    let labels_text =
        fs::read_to_string(frame_file(root, "label_2", id, "txt")).map_err(|e| wrap(e.into()))?;
    let labels = parse_labels(&labels_text).map_err(wrap)?;
    let calib_text =
        fs::read_to_string(frame_file(root, "calib", id, "txt")).map_err(|e| wrap(e.into()))?;
    let calib = parse_calib(&calib_text).map_err(wrap)?;
    Ok((labels, calib))
}

/// Runs `f` over the frame ids, in parallel when enabled. Results keep the
/// id order; the first error in id order wins.
fn map_frames<T: Send>(
    ids: &[String],
    f: impl Fn(&str) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<T>> = ids.par_iter().map(|id| f(id)).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<T>> = ids.iter().map(|id| f(id)).collect();
    results.into_iter().collect()
}

/// Per-class object counts after a database build.
#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub frames: usize,
    pub per_class: Vec<(String, usize)>,
    pub database_dir: PathBuf,
}

pub fn run_build_db(cfg: &RunConfig) -> Result<BuildSummary> {
    cfg.validate_dataset()?;
    let ids = read_split(&cfg.dataset.split)?;
    if ids.is_empty() {
        log("build-db", "warning=empty-split objects=0");
    }
    let frames = map_frames(&ids, |id| load_frame(&cfg.dataset.root, id))?;
    let split_name = cfg
        .dataset
        .split
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "split".into());
    let db = build_database(&frames, &cfg.dataset.classes, &split_name)?;
    let db_dir = cfg.database_dir();
    save_database(&db, &db_dir)?;

    let per_class: Vec<(String, usize)> = cfg
        .dataset
        .classes
        .iter()
        .map(|c| (c.clone(), db.count(c)))
        .collect();
    for (class, count) in &per_class {
        log("build-db", &format!("class={class} objects={count}"));
    }
    log(
        "build-db",
        &format!("frames={} database={}", frames.len(), db_dir.display()),
    );
    Ok(BuildSummary {
        frames: frames.len(),
        per_class,
        database_dir: db_dir,
    })
}

/// One manifest row of an augmentation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub frame: String,
    pub drawn: usize,
    pub accepted: usize,
    pub relocated: usize,
    pub rejected: usize,
    pub collided: usize,
}

#[derive(Debug, Clone)]
pub struct AugmentSummary {
    pub rows: Vec<ManifestRow>,
    pub output_dir: PathBuf,
}

fn manifest_csv(rows: &[ManifestRow]) -> String {
    let mut out = String::from("frame,drawn,accepted,relocated,rejected,collided\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.frame, r.drawn, r.accepted, r.relocated, r.rejected, r.collided
        ));
    }
    out
}

/// Geometry of one original label we may need to rewrite.
struct LabeledBox {
    label: KittiLabel,
    box3d: Option<Box3D>,
}

fn frame_boxes(labels: &[KittiLabel], calib: &CalibSet) -> Result<Vec<LabeledBox>> {
    labels
        .iter()
        .map(|label| {
            let box3d = if label.is_dont_care() || label.dims.iter().any(|&d| d <= 0.0) {
                None
            } else {
                Some(label_to_lidar_box(label, calib)?)
            };
            Ok(LabeledBox {
                label: label.clone(),
                box3d,
            })
        })
        .collect()
}

pub fn run_augment(cfg: &RunConfig, db_dir: &Path) -> Result<AugmentSummary> {
    cfg.validate_dataset()?;
    let pa_cfg = cfg.pattern_aware.to_core()?;
    let db = load_database(db_dir)?;
    let plan: BTreeMap<String, usize> = cfg.sampling.clone();
    let ids = read_split(&cfg.dataset.split)?;

    let out_dir = cfg.output.clone();
    fs::create_dir_all(out_dir.join("velodyne"))?;
    fs::create_dir_all(out_dir.join("label_2"))?;

    let rows = map_frames(&ids, |id| -> Result<ManifestRow> {
        let frame = load_frame(&cfg.dataset.root, id)?;
        let labeled = frame_boxes(&frame.labels, &frame.calib).map_err(|e| e.in_frame(id))?;
        let boxes: Vec<Box3D> = labeled.iter().filter_map(|lb| lb.box3d).collect();

        let mut rng = derive_rng(cfg.seed, id);
        let aug = augment_frame(&frame.cloud, &boxes, &db, &pa_cfg, &plan, &mut rng)
            .map_err(|e| e.in_frame(id))?;

        let mut cloud = aug.cloud;
        let mut all_boxes = aug.boxes.clone();

        // optional point-removal baselines over every box in the frame
        let b = &cfg.baselines;
        if b.frustum_dropout.enabled || b.frustum_noise.enabled || b.random_drop.enabled {
            for bx in &all_boxes {
                if b.frustum_dropout.enabled {
                    cloud = frustum_dropout(&cloud, bx, b.frustum_dropout.probability, &mut rng)
                        .map_err(|e| e.in_frame(id))?;
                }
                if b.frustum_noise.enabled {
                    cloud = frustum_noise(&cloud, bx, b.frustum_noise.sigma, &mut rng)
                        .map_err(|e| e.in_frame(id))?;
                }
                if b.random_drop.enabled {
                    cloud = random_drop(&cloud, bx, b.random_drop.probability, &mut rng);
                }
            }
        }

        // optional global affine draw, applied to points and boxes together
        let global_applied = if b.global.enabled {
            let g = &b.global;
            let t = GlobalTransform {
                flip_y: rng.random::<f64>() < g.flip_probability,
                rotation: rng
                    .random_range(-g.rotation_range_deg..=g.rotation_range_deg)
                    .to_radians(),
                scale: rng.random_range(g.scale_range[0]..=g.scale_range[1]),
                translation: if g.translation_range > 0.0 {
                    [
                        rng.random_range(-g.translation_range..=g.translation_range),
                        rng.random_range(-g.translation_range..=g.translation_range),
                        rng.random_range(-g.translation_range..=g.translation_range),
                    ]
                } else {
                    [0.0; 3]
                },
            };
            let (c, bs) = global_transform(&cloud, &all_boxes, &t);
            cloud = c;
            all_boxes = bs;
            true
        } else {
            false
        };

        fs::write(
            out_dir.join("velodyne").join(format!("{id}.bin")),
            write_point_cloud(&cloud),
        )?;

        // merged labels: originals (verbatim unless globally transformed,
        // which moves their geometry) plus the inserted objects
        let mut label_text = String::new();
        if global_applied {
            let mut box_cursor = 0usize;
            for lb in &labeled {
                if lb.box3d.is_none() {
                    // DontCare-style rows carry no LiDAR geometry; keep as-is
                    label_text.push_str(&write_labels_exact(std::slice::from_ref(&lb.label)));
                    continue;
                }
                let moved = all_boxes[box_cursor];
                box_cursor += 1;
                let mut new_label =
                    lidar_box_to_label(&moved, &lb.label.class_name, &frame.calib);
                new_label.truncation = lb.label.truncation;
                new_label.occlusion = lb.label.occlusion;
                label_text.push_str(&write_labels_exact(&[new_label]));
            }
            for (k, obj) in aug.inserted.iter().enumerate() {
                let moved = all_boxes[box_cursor + k];
                let new_label = lidar_box_to_label(&moved, &obj.class_name, &frame.calib);
                label_text.push_str(&write_labels_exact(&[new_label]));
            }
        } else {
            let original_text =
                fs::read_to_string(frame_file(&cfg.dataset.root, "label_2", id, "txt"))?;
            for line in original_text.lines() {
                if !line.trim().is_empty() {
                    label_text.push_str(line);
                    label_text.push('\n');
                }
            }
            let inserted_labels: Vec<KittiLabel> = aug
                .inserted
                .iter()
                .map(|obj| lidar_box_to_label(&obj.box3d, &obj.class_name, &frame.calib))
                .collect();
            label_text.push_str(&write_labels_exact(&inserted_labels));
        }
        fs::write(out_dir.join("label_2").join(format!("{id}.txt")), label_text)?;

        Ok(ManifestRow {
            frame: id.to_string(),
            drawn: aug.stats.drawn,
            accepted: aug.stats.accepted,
            relocated: aug.stats.relocated,
            rejected: aug.stats.rejected,
            collided: aug.stats.collided,
        })
    })?;

    fs::write(out_dir.join("manifest.csv"), manifest_csv(&rows))?;
    let totals = rows.iter().fold((0, 0, 0), |acc, r| {
        (
            acc.0 + r.accepted,
            acc.1 + r.relocated,
            acc.2 + r.rejected,
        )
    });
    log(
        "augment",
        &format!(
            "frames={} accepted={} relocated={} rejected={}",
            rows.len(),
            totals.0,
            totals.1,
            totals.2
        ),
    );
    Ok(AugmentSummary {
        rows,
        output_dir: out_dir,
    })
}

fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("label,bin_lo,bin_hi,n_gt,ap\n");
    for (i, bin) in report.bins.iter().enumerate() {
        if bin.n_gt == 0 {
            continue;
        }
        let ap = bin
            .ap
            .map(|v| format!("{v:.4}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "bin{i:02},{:.4},{:.4},{},{ap}\n",
            bin.lo, bin.hi, bin.n_gt
        ));
    }
    for (difficulty, n_gt, ap) in &report.overall {
        let ap = ap.map(|v| format!("{v:.4}")).unwrap_or_default();
        out.push_str(&format!(
            "overall_{},,,{n_gt},{ap}\n",
            format!("{difficulty:?}").to_lowercase()
        ));
    }
    out
}

fn histogram_csv(edges: &BinEdges, heights: &[f64]) -> String {
    let mut out = String::from("bin_lo,bin_hi,height\n");
    for (i, h) in heights.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{h}\n",
            edges.edges()[i],
            edges.edges()[i + 1]
        ));
    }
    out
}

pub fn run_eval(cfg: &RunConfig, detections_dir: &Path) -> Result<Vec<EvalReport>> {
    cfg.validate_dataset()?;
    if !detections_dir.is_dir() {
        return Err(Error::InvalidConfig(format!(
            "detections dir {} is not a directory",
            detections_dir.display()
        )));
    }
    let ids = read_split(&cfg.dataset.split)?;
    let frames = map_frames(&ids, |id| {
        let meta = load_frame_meta(&cfg.dataset.root, id)?;
        let det_path = detections_dir.join(format!("{id}.txt"));
        let dets = if det_path.is_file() {
            parse_results(&fs::read_to_string(&det_path)?)
                .map_err(|e| e.in_frame(id))?
        } else {
            Vec::new()
        };
        Ok((id.to_string(), meta.0, meta.1, dets))
    })?;

    fs::create_dir_all(&cfg.output)?;
    let mut reports = Vec::new();
    for class in &cfg.dataset.classes {
        let mut gts: Vec<GtBox> = Vec::new();
        let mut dets: Vec<Detection> = Vec::new();
        for (id, labels, calib, results) in &frames {
            for label in labels {
                if label.class_name != *class || label.is_dont_care() {
                    continue;
                }
                let box3d = label_to_lidar_box(label, calib).map_err(|e| e.in_frame(id))?;
                gts.push(GtBox {
                    box3d,
                    class_name: class.clone(),
                    frame: id.clone(),
                    difficulty: difficulty_of(label),
                });
            }
            for (label, score) in results {
                if label.class_name != *class {
                    continue;
                }
                let box3d = label_to_lidar_box(label, calib).map_err(|e| e.in_frame(id))?;
                dets.push(Detection {
                    box3d,
                    score: *score,
                    class_name: class.clone(),
                    frame: id.clone(),
                });
            }
        }
        if gts.len() < cfg.eval.bins {
            log(
                "eval",
                &format!(
                    "class={class} skipped=too-few-ground-truths n_gt={}",
                    gts.len()
                ),
            );
            continue;
        }
        let report = evaluate_class(
            class,
            &dets,
            &gts,
            cfg.eval.bins,
            cfg.eval.threshold_for(class),
            cfg.eval.recall_positions,
        )?;
        let distances: Vec<f64> = gts.iter().map(|g| g.box3d.center_distance()).collect();
        let heights = normalized_histogram(&distances, &report.edges);

        fs::write(
            cfg.output.join(format!("eval_{class}.csv")),
            report_csv(&report),
        )?;
        fs::write(
            cfg.output.join(format!("hist_{class}.csv")),
            histogram_csv(&report.edges, &heights),
        )?;
        for (difficulty, n_gt, ap) in &report.overall {
            log(
                "eval",
                &format!(
                    "class={class} difficulty={difficulty:?} n_gt={n_gt} ap={}",
                    ap.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
                ),
            );
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Distance-distribution shift of sampled database objects, before and
/// after pattern-aware sampling.
#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub class: String,
    pub samples: usize,
    pub before_edges: BinEdges,
    pub before_heights: Vec<f64>,
    pub after_edges: BinEdges,
    pub after_heights: Vec<f64>,
    pub mean_before: f64,
    pub mean_after: f64,
    pub skew_before: f64,
    pub skew_after: f64,
    pub relocated: usize,
    /// Min and max relocated distance actually observed.
    pub relocated_span: Option<(f64, f64)>,
}

/// Samples objects uniformly with replacement, applies pattern-aware
/// sampling to each draw and summarizes both distance distributions.
pub fn analyze_database(
    db: &GtDatabase,
    cfg: &RunConfig,
    class: &str,
    samples: usize,
    bins: usize,
) -> Result<AnalyzeReport> {
    let pa_cfg = cfg.pattern_aware.to_core()?;
    let objects = db.objects(class);
    if objects.is_empty() {
        return Err(Error::EmptyClass(class.to_string()));
    }
    let mut rng = derive_rng(cfg.seed, "analyze");
    let mut before = Vec::with_capacity(samples);
    let mut after = Vec::with_capacity(samples);
    let mut relocated = 0usize;
    let mut span: Option<(f64, f64)> = None;
    for _ in 0..samples {
        let obj = &objects[rng.random_range(0..objects.len())];
        before.push(obj.distance);
        match pattern_aware_sample(obj, &pa_cfg, &mut rng) {
            SampleOutcome::Relocated(moved) => {
                relocated += 1;
                span = Some(span.map_or((moved.distance, moved.distance), |(lo, hi)| {
                    (lo.min(moved.distance), hi.max(moved.distance))
                }));
                after.push(moved.distance);
            }
            SampleOutcome::Unchanged | SampleOutcome::Rejected => after.push(obj.distance),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let before_edges = equal_element_edges(&before, bins)?;
    let after_edges = equal_element_edges(&after, bins)?;
    let before_heights = normalized_histogram(&before, &before_edges);
    let after_heights = normalized_histogram(&after, &after_edges);
    Ok(AnalyzeReport {
        class: class.to_string(),
        samples,
        mean_before: mean(&before),
        mean_after: mean(&after),
        skew_before: sample_skewness(&before),
        skew_after: sample_skewness(&after),
        before_edges,
        before_heights,
        after_edges,
        after_heights,
        relocated,
        relocated_span: span,
    })
}

fn analyze_csv(r: &AnalyzeReport) -> String {
    let mut out = String::from("section,bin_lo,bin_hi,height\n");
    for (i, h) in r.before_heights.iter().enumerate() {
        out.push_str(&format!(
            "before,{},{},{h}\n",
            r.before_edges.edges()[i],
            r.before_edges.edges()[i + 1]
        ));
    }
    for (i, h) in r.after_heights.iter().enumerate() {
        out.push_str(&format!(
            "after,{},{},{h}\n",
            r.after_edges.edges()[i],
            r.after_edges.edges()[i + 1]
        ));
    }
    out.push_str(&format!("summary,mean_before,,{}\n", r.mean_before));
    out.push_str(&format!("summary,mean_after,,{}\n", r.mean_after));
    out.push_str(&format!("summary,skew_before,,{}\n", r.skew_before));
    out.push_str(&format!("summary,skew_after,,{}\n", r.skew_after));
    out.push_str(&format!("summary,relocated,,{}\n", r.relocated));
    out
}

pub fn run_analyze(cfg: &RunConfig, db_dir: &Path) -> Result<AnalyzeReport> {
    let db = load_database(db_dir)?;
    let report = analyze_database(
        &db,
        cfg,
        &cfg.analyze.class,
        cfg.analyze.samples,
        cfg.eval.bins,
    )?;
    fs::create_dir_all(&cfg.output)?;
    fs::write(
        cfg.output.join(format!("analyze_{}.csv", report.class)),
        analyze_csv(&report),
    )?;
    log(
        "analyze",
        &format!(
            "class={} samples={} relocated={} mean_before={:.3} mean_after={:.3} skew_before={:.3} skew_after={:.3}",
            report.class,
            report.samples,
            report.relocated,
            report.mean_before,
            report.mean_after,
            report.skew_before,
            report.skew_after
        ),
    );
    Ok(report)
}

/// Outcome of the simulate command.
#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub chain: ChainReport,
    pub mean_nn_bound: f64,
    pub count_ratio_bounds: (f64, f64),
    /// `None` when either scan produced no hits.
    pub pass: Option<bool>,
}

pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateReport> {
    let sim = &cfg.simulate;
    let spec = sim.sensor.to_core()?;
    let target = sim.target.to_box()?;
    let chain = oracle_chain(&spec, &target, sim.factor)?;
    let mean_nn_bound = sim.mean_nn_max.unwrap_or(chain.slice_arc);
    let bounds = (sim.count_ratio_bounds[0], sim.count_ratio_bounds[1]);

    let pass = chain.comparison.map(|c| {
        c.count_ratio >= bounds.0 && c.count_ratio <= bounds.1 && c.mean_nn_distance < mean_nn_bound
    });

    log(
        "simulate",
        &format!(
            "source={} chain={} direct={}",
            chain.source.len(),
            chain.chain.len(),
            chain.direct.len()
        ),
    );
    match (&chain.comparison, pass) {
        (Some(c), Some(ok)) => {
            log(
                "simulate",
                &format!(
                    "count_ratio={:.4} mean_nn={:.4} max_nn={:.4} bound_ratio=[{},{}] bound_mean_nn={:.4}",
                    c.count_ratio, c.mean_nn_distance, c.max_nn_distance, bounds.0, bounds.1, mean_nn_bound
                ),
            );
            log("simulate", if ok { "result=pass" } else { "result=fail" });
        }
        _ => log("simulate", "result=no-hit"),
    }

    if sim.write_clouds {
        fs::create_dir_all(&cfg.output)?;
        fs::write(
            cfg.output.join("sim_source.bin"),
            write_point_cloud(&chain.source),
        )?;
        fs::write(
            cfg.output.join("sim_chain.bin"),
            write_point_cloud(&chain.chain),
        )?;
        fs::write(
            cfg.output.join("sim_direct.bin"),
            write_point_cloud(&chain.direct),
        )?;
    }

    Ok(SimulateReport {
        chain,
        mean_nn_bound,
        count_ratio_bounds: bounds,
        pass,
    })
}
