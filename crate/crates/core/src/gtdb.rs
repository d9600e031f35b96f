//! Ground-truth object database: build from a training split, persist to
//! disk, sample stored objects and insert them into frames with collision
//! rejection.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{bev_overlap_area, points_in_box, Box3D, PointCloud};
use crate::kitti::{self, CalibSet, KittiLabel};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A stored ground-truth object: its box, the interior points (sensor
/// frame, absolute coordinates) and where it came from.
#[derive(Debug, Clone)]
pub struct GtObject {
    pub class_name: String,
    pub box3d: Box3D,
    pub points: PointCloud,
    /// Horizontal distance of the box center from the sensor.
    pub distance: f64,
    pub source_frame: String,
}

impl GtObject {
    pub fn new(class_name: String, box3d: Box3D, points: PointCloud, source_frame: String) -> Self {
        let distance = box3d.center_distance();
        Self {
            class_name,
            box3d,
            points,
            distance,
            source_frame,
        }
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }
}

/// Per-class collections of ground-truth objects.
#[derive(Debug, Clone, Default)]
pub struct GtDatabase {
    classes: BTreeMap<String, Vec<GtObject>>,
    pub split_name: String,
    /// Unix epoch seconds at build time; informational only.
    pub built_at: u64,
}

impl GtDatabase {
    pub fn new(split_name: impl Into<String>) -> Self {
        GtDatabase {
            classes: BTreeMap::new(),
            split_name: split_name.into(),
            built_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn insert(&mut self, obj: GtObject) {
        self.classes.entry(obj.class_name.clone()).or_default().push(obj);
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn objects(&self, class: &str) -> &[GtObject] {
        self.classes.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn count(&self, class: &str) -> usize {
        self.objects(class).len()
    }

    pub fn total_objects(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }
}

/// One parsed dataset frame, ready for extraction or augmentation.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub frame_id: String,
    pub cloud: PointCloud,
    pub labels: Vec<KittiLabel>,
    pub calib: CalibSet,
}

fn extract_frame_objects(frame: &FrameData, classes: &[String]) -> Result<Vec<GtObject>> {
    let mut out = Vec::new();
    for label in &frame.labels {
        if label.is_dont_care() || !classes.iter().any(|c| c == &label.class_name) {
            continue;
        }
        let box3d = kitti::label_to_lidar_box(label, &frame.calib)
            .map_err(|e| e.in_frame(&frame.frame_id))?;
        let indices = points_in_box(&frame.cloud, &box3d);
        // zero-point objects are stored too; samplers filter by min-points
        out.push(GtObject::new(
            label.class_name.clone(),
            box3d,
            frame.cloud.select(&indices),
            frame.frame_id.clone(),
        ));
    }
    Ok(out)
}

/// Builds the database from parsed frames, keeping only the configured
/// classes. Objects merge in frame order regardless of worker scheduling.
pub fn build_database(frames: &[FrameData], classes: &[String], split_name: &str) -> Result<GtDatabase> {
    #[cfg(feature = "parallel")]
    let per_frame: Vec<Result<Vec<GtObject>>> = frames
        .par_iter()
        .map(|f| extract_frame_objects(f, classes))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let per_frame: Vec<Result<Vec<GtObject>>> = frames
        .iter()
        .map(|f| extract_frame_objects(f, classes))
        .collect();

    let mut db = GtDatabase::new(split_name);
    for objs in per_frame {
        for obj in objs? {
            db.insert(obj);
        }
    }
    Ok(db)
}

/// Sequential reference implementation of [`build_database`].
pub fn build_database_seq(
    frames: &[FrameData],
    classes: &[String],
    split_name: &str,
) -> Result<GtDatabase> {
    let mut db = GtDatabase::new(split_name);
    for frame in frames {
        for obj in extract_frame_objects(frame, classes)? {
            db.insert(obj);
        }
    }
    Ok(db)
}

/// Draws `count` objects of a class uniformly without replacement (capped at
/// the collection size). Deterministic for a fixed rng state.
pub fn sample_objects<'a, R: Rng>(
    db: &'a GtDatabase,
    class: &str,
    count: usize,
    rng: &mut R,
) -> Result<Vec<&'a GtObject>> {
    let objects = db.objects(class);
    if objects.is_empty() {
        return Err(Error::EmptyClass(class.to_string()));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let amount = count.min(objects.len());
    let picked = rand::seq::index::sample(rng, objects.len(), amount);
    Ok(picked.into_iter().map(|i| &objects[i]).collect())
}

/// Result of inserting candidate objects into a frame.
#[derive(Debug, Clone)]
pub struct InsertOutcome {
    pub cloud: PointCloud,
    /// All boxes in the augmented frame: the original boxes followed by the
    /// accepted candidates' boxes.
    pub boxes: Vec<Box3D>,
    /// Indices into the candidate slice that were accepted, in order.
    pub accepted: Vec<usize>,
}

/// Inserts candidates in order, rejecting any whose BEV footprint overlaps
/// an existing or previously accepted box. Background points under an
/// accepted box's full-height footprint are removed before the object's
/// points are appended.
pub fn insert_objects(cloud: &PointCloud, boxes: &[Box3D], candidates: &[GtObject]) -> InsertOutcome {
    let mut placed: Vec<Box3D> = boxes.to_vec();
    let mut accepted: Vec<usize> = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        let collides = placed.iter().any(|b| bev_overlap_area(&cand.box3d, b) > 0.0);
        if !collides {
            placed.push(cand.box3d);
            accepted.push(i);
        }
    }

    let mut out = PointCloud::new();
    for p in cloud {
        let buried = accepted
            .iter()
            .any(|&i| candidates[i].box3d.footprint_contains(p.x, p.y));
        if !buried {
            out.push(*p);
        }
    }
    for &i in &accepted {
        out.extend_from_cloud(&candidates[i].points);
    }

    InsertOutcome {
        cloud: out,
        boxes: placed,
        accepted,
    }
}

const INDEX_FILE: &str = "index.txt";
const INDEX_MAGIC: &str = "pagt-gtdb 1";
/// Blob object header: class id (u32), 7 box fields (f64), point count (u32).
const BLOB_HEADER_BYTES: usize = 4 + 7 * 8 + 4;

struct IndexObject {
    class: String,
    offset: usize,
    num_points: usize,
    distance: f64,
    source_frame: String,
}

/// Persists the database: one binary blob per class plus a structured-text
/// index. Point records use the same 16-byte layout as velodyne clouds.
pub fn save_database(db: &GtDatabase, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::new();
    index.push_str(INDEX_MAGIC);
    index.push('\n');
    index.push_str(&format!("split {}\n", db.split_name));
    index.push_str(&format!("built {}\n", db.built_at));
    index.push_str(&format!("classes {}\n", db.classes.len()));

    let mut object_lines = String::new();
    for (class_id, (class, objects)) in db.classes.iter().enumerate() {
        let blob_name = format!("{class}.bin");
        index.push_str(&format!("class {class} {} {blob_name}\n", objects.len()));

        let mut blob: Vec<u8> = Vec::new();
        for obj in objects {
            let offset = blob.len();
            blob.extend_from_slice(&(class_id as u32).to_le_bytes());
            let b = &obj.box3d;
            for v in [b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw] {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            blob.extend_from_slice(&(obj.num_points() as u32).to_le_bytes());
            blob.extend_from_slice(&kitti::write_point_cloud(&obj.points));
            object_lines.push_str(&format!(
                "object {class} {offset} {} {} {}\n",
                obj.num_points(),
                obj.distance,
                obj.source_frame
            ));
        }
        fs::write(dir.join(&blob_name), &blob)?;
    }
    index.push_str(&object_lines);
    fs::write(dir.join(INDEX_FILE), index)?;
    Ok(())
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedDatabase(msg.into())
}

/// Loads a database persisted by [`save_database`], verifying the index
/// against the blob structure.
pub fn load_database(dir: &Path) -> Result<GtDatabase> {
    let index = fs::read_to_string(dir.join(INDEX_FILE))?;
    let mut lines = index.lines();
    if lines.next() != Some(INDEX_MAGIC) {
        return Err(malformed("bad magic line"));
    }

    let mut split_name = String::new();
    let mut built_at = 0u64;
    let mut class_names: Vec<String> = Vec::new();
    let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut class_blobs: BTreeMap<String, String> = BTreeMap::new();
    let mut objects: Vec<IndexObject> = Vec::new();

    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("split") => split_name = fields.get(1).unwrap_or(&"").to_string(),
            Some("built") => {
                built_at = fields
                    .get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| malformed("bad built line"))?
            }
            Some("classes") => {}
            Some("class") => {
                if fields.len() != 4 {
                    return Err(malformed(format!("bad class line: {line}")));
                }
                let name = fields[1].to_string();
                let count: usize = fields[2].parse().map_err(|_| malformed("bad class count"))?;
                class_counts.insert(name.clone(), count);
                class_blobs.insert(name.clone(), fields[3].to_string());
                class_names.push(name);
            }
            Some("object") => {
                if fields.len() != 6 {
                    return Err(malformed(format!("bad object line: {line}")));
                }
                objects.push(IndexObject {
                    class: fields[1].to_string(),
                    offset: fields[2].parse().map_err(|_| malformed("bad offset"))?,
                    num_points: fields[3].parse().map_err(|_| malformed("bad point count"))?,
                    distance: fields[4].parse().map_err(|_| malformed("bad distance"))?,
                    source_frame: fields[5].to_string(),
                });
            }
            Some(other) => return Err(malformed(format!("unknown record {other}"))),
            None => {}
        }
    }

    let mut db = GtDatabase {
        classes: BTreeMap::new(),
        split_name,
        built_at,
    };
    let blobs: BTreeMap<String, Vec<u8>> = class_names
        .iter()
        .map(|name| {
            let blob = fs::read(dir.join(&class_blobs[name]))?;
            Ok((name.clone(), blob))
        })
        .collect::<Result<_>>()?;

    for entry in objects {
        let class_id = class_names
            .iter()
            .position(|c| c == &entry.class)
            .ok_or_else(|| malformed(format!("object of undeclared class {}", entry.class)))?;
        let blob = &blobs[&entry.class];
        let end = entry.offset + BLOB_HEADER_BYTES + entry.num_points * kitti::POINT_RECORD_BYTES;
        if end > blob.len() {
            return Err(malformed(format!(
                "object at offset {} overruns blob {}",
                entry.offset, entry.class
            )));
        }
        let rec = &blob[entry.offset..end];
        let stored_class = u32::from_le_bytes(rec[0..4].try_into().unwrap()) as usize;
        if stored_class != class_id {
            return Err(malformed("class id mismatch between index and blob"));
        }
        let fv = |k: usize| f64::from_le_bytes(rec[4 + 8 * k..12 + 8 * k].try_into().unwrap());
        let box3d = Box3D::new(fv(0), fv(1), fv(2), fv(3), fv(4), fv(5), fv(6));
        let stored_n = u32::from_le_bytes(rec[60..64].try_into().unwrap()) as usize;
        if stored_n != entry.num_points {
            return Err(malformed("point count mismatch between index and blob"));
        }
        let points = kitti::read_point_cloud(&rec[BLOB_HEADER_BYTES..])
            .map_err(|e| malformed(format!("blob points: {e}")))?;
        let obj = GtObject::new(entry.class, box3d, points, entry.source_frame);
        if (obj.distance - entry.distance).abs() > 1e-9 {
            return Err(malformed("stored distance disagrees with box center"));
        }
        db.insert(obj);
    }

    for (class, count) in class_counts {
        if db.count(&class) != count {
            return Err(malformed(format!(
                "class {class}: index declares {count} objects, found {}",
                db.count(&class)
            )));
        }
    }
    Ok(db)
}
