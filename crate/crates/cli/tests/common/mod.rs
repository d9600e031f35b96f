//! Synthetic mini-dataset in the KITTI directory layout, deterministic by
//! construction so augmentation runs can be compared byte for byte.

use std::fs;
use std::io;
use std::path::Path;

use pagt_core::geometry::{Box3D, LidarPoint, PointCloud};
use pagt_core::kitti::{lidar_box_to_label, write_calib, write_labels_exact, write_point_cloud, CalibSet};

pub struct FixtureObject {
    pub class: &'static str,
    pub box3d: Box3D,
}

/// Box interiors fill with a rotated lattice at roughly `step` spacing,
/// inset from every face.
fn fill_box(b: &Box3D, step: f64, cloud: &mut PointCloud) {
    let (s, c) = b.yaw.sin_cos();
    let nu = ((b.l * 0.8) / step).ceil().max(2.0) as usize;
    let nv = ((b.w * 0.8) / step).ceil().max(2.0) as usize;
    let nz = ((b.h * 0.8) / step).ceil().max(2.0) as usize;
    for iu in 0..nu {
        for iv in 0..nv {
            for iz in 0..nz {
                let u = b.l * 0.8 * ((iu as f64 + 0.5) / nu as f64 - 0.5);
                let v = b.w * 0.8 * ((iv as f64 + 0.5) / nv as f64 - 0.5);
                let z = b.h * 0.8 * ((iz as f64 + 0.5) / nz as f64 - 0.5);
                cloud.push(LidarPoint::new(
                    b.cx + c * u - s * v,
                    b.cy + s * u + c * v,
                    b.cz + z,
                    0.4,
                ));
            }
        }
    }
}

pub fn frame_objects(frame: usize) -> Vec<FixtureObject> {
    let i = frame as f64;
    let mut objects = vec![
        FixtureObject {
            class: "Car",
            box3d: Box3D::new(12.0 + i, -6.0, -0.95, 3.9, 1.6, 1.5, 0.1 * i),
        },
        FixtureObject {
            class: "Car",
            box3d: Box3D::new(22.0 + i, 0.5, -0.95, 3.9, 1.6, 1.5, -0.2),
        },
        FixtureObject {
            class: "Pedestrian",
            box3d: Box3D::new(14.0 + i, 4.0, -0.8, 0.8, 0.8, 1.8, 0.0),
        },
        FixtureObject {
            class: "Cyclist",
            box3d: Box3D::new(18.0 + i, -11.0, -0.9, 1.8, 0.8, 1.6, 0.4),
        },
    ];
    if frame.is_multiple_of(2) {
        objects.push(FixtureObject {
            class: "Car",
            box3d: Box3D::new(32.0 + i, 7.0, -0.95, 3.9, 1.6, 1.5, 0.5),
        });
    }
    objects
}

pub fn frame_cloud(frame: usize) -> PointCloud {
    let mut cloud = PointCloud::new();
    // sparse ground plane below every box bottom
    let mut x = 4.0;
    while x < 60.0 {
        let mut y = -24.0;
        while y < 24.0 {
            cloud.push(LidarPoint::new(x, y + 0.01 * frame as f64, -1.73, 0.12));
            y += 1.5;
        }
        x += 1.5;
    }
    for obj in frame_objects(frame) {
        let step = if obj.class == "Car" { 0.28 } else { 0.16 };
        fill_box(&obj.box3d, step, &mut cloud);
    }
    cloud
}

/// Writes velodyne/, label_2/, calib/ and a split file under `root`;
/// returns the split path.
pub fn write_fixture_dataset(root: &Path, n_frames: usize) -> io::Result<std::path::PathBuf> {
    let calib = CalibSet::nominal();
    fs::create_dir_all(root.join("velodyne"))?;
    fs::create_dir_all(root.join("label_2"))?;
    fs::create_dir_all(root.join("calib"))?;
    let mut split = String::new();
    for frame in 0..n_frames {
        let id = format!("{frame:06}");
        split.push_str(&id);
        split.push('\n');

        let cloud = frame_cloud(frame);
        fs::write(
            root.join("velodyne").join(format!("{id}.bin")),
            write_point_cloud(&cloud),
        )?;

        let labels: Vec<_> = frame_objects(frame)
            .iter()
            .map(|o| lidar_box_to_label(&o.box3d, o.class, &calib))
            .collect();
        let mut text = write_labels_exact(&labels);
        text.push_str("DontCare -1 -1 -10 500.0 150.0 550.0 180.0 -1 -1 -1 -1000 -1000 -1000 -10\n");
        fs::write(root.join("label_2").join(format!("{id}.txt")), text)?;

        fs::write(root.join("calib").join(format!("{id}.txt")), write_calib(&calib))?;
    }
    let split_path = root.join("train.txt");
    fs::write(&split_path, split)?;
    Ok(split_path)
}

/// A run configuration pointing at the fixture, with a small sampling plan
/// and everything written under `out`.
pub fn fixture_config(root: &Path, out: &Path) -> pagt_cli::config::RunConfig {
    let mut cfg = pagt_cli::config::RunConfig::default();
    cfg.dataset.root = root.to_path_buf();
    cfg.dataset.split = root.join("train.txt");
    cfg.output = out.to_path_buf();
    cfg.seed = 20260808;
    cfg.sampling = [
        ("Car".to_string(), 4usize),
        ("Pedestrian".to_string(), 2),
        ("Cyclist".to_string(), 2),
    ]
    .into_iter()
    .collect();
    cfg
}
