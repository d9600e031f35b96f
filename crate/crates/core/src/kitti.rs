//! Readers and writers for KITTI velodyne binary clouds, label files and
//! calibration files, plus the camera/LiDAR box conversion.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Box3D, LidarPoint, PointCloud};

/// Bytes per point record: four little-endian f32 (x, y, z, intensity).
pub const POINT_RECORD_BYTES: usize = 16;

/// Decodes a velodyne binary buffer. Each consecutive 16 bytes are four
/// little-endian f32 values (x, y, z, intensity), order preserved.
pub fn read_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(POINT_RECORD_BYTES) {
        return Err(Error::MalformedCloud(format!(
            "length {} is not a multiple of {}",
            bytes.len(),
            POINT_RECORD_BYTES
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_RECORD_BYTES);
    for (i, rec) in bytes.chunks_exact(POINT_RECORD_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let (x, y, z, intensity) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && intensity.is_finite()) {
            return Err(Error::MalformedCloud(format!(
                "non-finite value in point record {i}"
            )));
        }
        points.push(LidarPoint { x, y, z, intensity });
    }
    Ok(PointCloud::from_points(points))
}

/// Inverse of [`read_point_cloud`]; bit-exact on round trips of valid buffers.
pub fn write_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_RECORD_BYTES);
    for p in cloud {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// One object row of a KITTI label file: 15 whitespace-separated fields.
/// DontCare rows carry -1 sentinels, which parsing preserves verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabel {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// Pixel coordinates: left, top, right, bottom.
    pub bbox2d: [f64; 4],
    /// Meters, camera convention: h, w, l.
    pub dims: [f64; 3],
    /// Bottom-center location in the rectified camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
}

impl KittiLabel {
    pub fn bbox_height(&self) -> f64 {
        self.bbox2d[3] - self.bbox2d[1]
    }

    pub fn is_dont_care(&self) -> bool {
        self.class_name == "DontCare"
    }
}

/// KITTI difficulty levels; `Excluded` falls below even the hard criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Excluded,
}

/// Standard KITTI thresholds on 2D box height, occlusion and truncation.
/// Negative sentinel fields (DontCare-style rows) map to `Excluded`.
pub fn difficulty_of(label: &KittiLabel) -> Difficulty {
    let h = label.bbox_height();
    let occ = label.occlusion;
    let tr = label.truncation;
    if occ < 0 || tr < 0.0 {
        return Difficulty::Excluded;
    }
    if h >= 40.0 && occ == 0 && tr <= 0.15 {
        Difficulty::Easy
    } else if h >= 25.0 && occ <= 1 && tr <= 0.30 {
        Difficulty::Moderate
    } else if h >= 25.0 && occ <= 2 && tr <= 0.50 {
        Difficulty::Hard
    } else {
        Difficulty::Excluded
    }
}

fn parse_fields(line: &str, line_no: usize, expected: usize) -> Result<(String, Vec<f64>)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != expected {
        return Err(Error::MalformedLabel {
            line: line_no,
            reason: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    let mut values = Vec::with_capacity(expected - 1);
    for f in &fields[1..] {
        let v: f64 = f.parse().map_err(|_| Error::MalformedLabel {
            line: line_no,
            reason: format!("non-numeric field {f:?}"),
        })?;
        values.push(v);
    }
    Ok((fields[0].to_string(), values))
}

fn label_from_values(class_name: String, v: &[f64]) -> KittiLabel {
    KittiLabel {
        class_name,
        truncation: v[0],
        // occlusion is an integer code, but detector outputs often print it
        // as a float (e.g. "-1.00")
        occlusion: v[1].round() as i32,
        alpha: v[2],
        bbox2d: [v[3], v[4], v[5], v[6]],
        dims: [v[7], v[8], v[9]],
        location: [v[10], v[11], v[12]],
        rotation_y: v[13],
    }
}

/// Parses a KITTI label file: one object per non-empty line.
pub fn parse_labels(text: &str) -> Result<Vec<KittiLabel>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (class_name, v) = parse_fields(line, i + 1, 15)?;
        out.push(label_from_values(class_name, &v));
    }
    Ok(out)
}

/// Parses a KITTI result file: label fields plus a trailing score.
pub fn parse_results(text: &str) -> Result<Vec<(KittiLabel, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (class_name, v) = parse_fields(line, i + 1, 16)?;
        let score = v[14];
        if !score.is_finite() {
            return Err(Error::MalformedLabel {
                line: i + 1,
                reason: "non-finite score".into(),
            });
        }
        out.push((label_from_values(class_name, &v), score));
    }
    Ok(out)
}

fn format_label(label: &KittiLabel, exact: bool) -> String {
    let f = |v: f64| {
        if exact {
            format!("{v}")
        } else {
            format!("{v:.2}")
        }
    };
    format!(
        "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
        label.class_name,
        f(label.truncation),
        label.occlusion,
        f(label.alpha),
        f(label.bbox2d[0]),
        f(label.bbox2d[1]),
        f(label.bbox2d[2]),
        f(label.bbox2d[3]),
        f(label.dims[0]),
        f(label.dims[1]),
        f(label.dims[2]),
        f(label.location[0]),
        f(label.location[1]),
        f(label.location[2]),
        f(label.rotation_y),
    )
}

/// Serializes labels with the conventional two-decimal formatting.
pub fn write_labels(labels: &[KittiLabel]) -> String {
    labels
        .iter()
        .map(|l| format_label(l, false) + "\n")
        .collect()
}

/// Serializes labels with shortest-round-trip float formatting, so that
/// `parse_labels(write_labels_exact(x)) == x` on every field.
pub fn write_labels_exact(labels: &[KittiLabel]) -> String {
    labels
        .iter()
        .map(|l| format_label(l, true) + "\n")
        .collect()
}

/// Camera projection, rectification and LiDAR-to-camera rigid transform of
/// one KITTI frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibSet {
    pub p2: [[f64; 4]; 3],
    pub r0_rect: [[f64; 3]; 3],
    pub tr_velo_to_cam: [[f64; 4]; 3],
}

fn mat3_of(tr: &[[f64; 4]; 3]) -> [[f64; 3]; 3] {
    [
        [tr[0][0], tr[0][1], tr[0][2]],
        [tr[1][0], tr[1][1], tr[1][2]],
        [tr[2][0], tr[2][1], tr[2][2]],
    ]
}

fn mat3_mul_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat3_inverse(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return Err(Error::MalformedCalib("singular rotation block".into()));
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let a = m[(i + 1) % 3][(j + 1) % 3] * m[(i + 2) % 3][(j + 2) % 3]
                - m[(i + 1) % 3][(j + 2) % 3] * m[(i + 2) % 3][(j + 1) % 3];
            // adjugate is transposed
            inv[j][i] = a * inv_det;
        }
    }
    Ok(inv)
}

fn check_orthonormal(m: &[[f64; 3]; 3], name: &str) -> Result<()> {
    // KITTI files carry limited precision; allow 1e-3
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if (dot - expect).abs() > 1e-3 {
                return Err(Error::MalformedCalib(format!(
                    "{name} rotation block is not orthonormal"
                )));
            }
        }
    }
    Ok(())
}

impl CalibSet {
    /// The canonical sensor geometry used by synthetic fixtures: identity
    /// rectification and the nominal axis permutation between the camera
    /// frame (x right, y down, z forward) and the LiDAR frame (x forward,
    /// y left, z up), with zero offset.
    pub fn nominal() -> Self {
        CalibSet {
            p2: [
                [707.0, 0.0, 604.0, 0.0],
                [0.0, 707.0, 180.5, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            r0_rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            tr_velo_to_cam: [
                [0.0, -1.0, 0.0, 0.0],
                [0.0, 0.0, -1.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
            ],
        }
    }

    /// Maps a rectified-camera-frame point into the LiDAR frame.
    pub fn rect_to_lidar(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let r0_inv = mat3_inverse(&self.r0_rect)?;
        let p_ref = mat3_mul_vec(&r0_inv, p);
        let r = mat3_of(&self.tr_velo_to_cam);
        let t = [
            self.tr_velo_to_cam[0][3],
            self.tr_velo_to_cam[1][3],
            self.tr_velo_to_cam[2][3],
        ];
        let r_inv = mat3_inverse(&r)?;
        Ok(mat3_mul_vec(
            &r_inv,
            [p_ref[0] - t[0], p_ref[1] - t[1], p_ref[2] - t[2]],
        ))
    }

    /// Maps a LiDAR-frame point into the rectified camera frame.
    pub fn lidar_to_rect(&self, p: [f64; 3]) -> [f64; 3] {
        let r = mat3_of(&self.tr_velo_to_cam);
        let t = [
            self.tr_velo_to_cam[0][3],
            self.tr_velo_to_cam[1][3],
            self.tr_velo_to_cam[2][3],
        ];
        let cam = mat3_mul_vec(&r, p);
        mat3_mul_vec(&self.r0_rect, [cam[0] + t[0], cam[1] + t[1], cam[2] + t[2]])
    }

    /// Projects a rectified-camera point through P2. `None` behind the camera.
    pub fn project_to_image(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        let hx = self.p2[0][0] * p[0] + self.p2[0][1] * p[1] + self.p2[0][2] * p[2] + self.p2[0][3];
        let hy = self.p2[1][0] * p[0] + self.p2[1][1] * p[1] + self.p2[1][2] * p[2] + self.p2[1][3];
        let hz = self.p2[2][0] * p[0] + self.p2[2][1] * p[1] + self.p2[2][2] * p[2] + self.p2[2][3];
        if hz <= 1e-6 {
            return None;
        }
        Some([hx / hz, hy / hz])
    }
}

fn parse_matrix_row(text: &str, key: &str) -> Option<Vec<f64>> {
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(key) {
            if let Some(values) = rest.strip_prefix(':') {
                let parsed: std::result::Result<Vec<f64>, _> =
                    values.split_whitespace().map(str::parse).collect();
                return parsed.ok().or(Some(Vec::new()));
            }
        }
    }
    None
}

fn take_matrix<const N: usize>(text: &str, key: &str) -> Result<[f64; N]> {
    let values =
        parse_matrix_row(text, key).ok_or_else(|| Error::MissingCalibKey(key.to_string()))?;
    if values.len() != N {
        return Err(Error::MalformedCalib(format!(
            "{key}: expected {N} values, found {}",
            values.len()
        )));
    }
    let mut out = [0.0; N];
    out.copy_from_slice(&values);
    Ok(out)
}

/// Parses a KITTI calibration file ("KEY: v1 v2 ..." lines), extracting P2,
/// R0_rect and Tr_velo_to_cam.
pub fn parse_calib(text: &str) -> Result<CalibSet> {
    let p2: [f64; 12] = take_matrix(text, "P2")?;
    let r0: [f64; 9] = take_matrix(text, "R0_rect")?;
    let tr: [f64; 12] = take_matrix(text, "Tr_velo_to_cam")?;
    let calib = CalibSet {
        p2: [
            [p2[0], p2[1], p2[2], p2[3]],
            [p2[4], p2[5], p2[6], p2[7]],
            [p2[8], p2[9], p2[10], p2[11]],
        ],
        r0_rect: [
            [r0[0], r0[1], r0[2]],
            [r0[3], r0[4], r0[5]],
            [r0[6], r0[7], r0[8]],
        ],
        tr_velo_to_cam: [
            [tr[0], tr[1], tr[2], tr[3]],
            [tr[4], tr[5], tr[6], tr[7]],
            [tr[8], tr[9], tr[10], tr[11]],
        ],
    };
    check_orthonormal(&calib.r0_rect, "R0_rect")?;
    check_orthonormal(&mat3_of(&calib.tr_velo_to_cam), "Tr_velo_to_cam")?;
    Ok(calib)
}

/// Serializes a calibration set back to the KITTI key-value layout.
pub fn write_calib(calib: &CalibSet) -> String {
    let row = |vals: &[f64]| {
        vals.iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let flat4 = |m: &[[f64; 4]; 3]| {
        let mut v = Vec::with_capacity(12);
        for r in m {
            v.extend_from_slice(r);
        }
        v
    };
    let mut r0 = Vec::with_capacity(9);
    for r in &calib.r0_rect {
        r0.extend_from_slice(r);
    }
    format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        row(&flat4(&calib.p2)),
        row(&r0),
        row(&flat4(&calib.tr_velo_to_cam)),
    )
}

/// Converts a camera-frame label into a LiDAR-frame box. The label location
/// is the bottom center; the returned box center is the volumetric center.
pub fn label_to_lidar_box(label: &KittiLabel, calib: &CalibSet) -> Result<Box3D> {
    let [h, w, l] = label.dims;
    if h <= 0.0 || w <= 0.0 || l <= 0.0 {
        return Err(Error::DegenerateBox(format!(
            "non-positive dims h={h} w={w} l={l} for class {}",
            label.class_name
        )));
    }
    let bottom = calib.rect_to_lidar(label.location)?;
    let yaw = normalize_angle(-label.rotation_y - FRAC_PI_2);
    Ok(Box3D::new(
        bottom[0],
        bottom[1],
        bottom[2] + h / 2.0,
        l,
        w,
        h,
        yaw,
    ))
}

/// Inverse of [`label_to_lidar_box`]: produces a camera-frame label for a
/// LiDAR-frame box. The 2D bbox is the image projection of the box corners
/// (a zero-area box at the principal point when behind the camera);
/// truncation and occlusion are zeroed.
pub fn lidar_box_to_label(b: &Box3D, class_name: &str, calib: &CalibSet) -> KittiLabel {
    let location = calib.lidar_to_rect([b.cx, b.cy, b.cz - b.h / 2.0]);
    let rotation_y = normalize_angle(-b.yaw - FRAC_PI_2);
    let alpha = normalize_angle(rotation_y - location[0].atan2(location[2]));

    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut projected = 0;
    for corner in b.corners() {
        let cam = calib.lidar_to_rect(corner);
        if let Some([u, v]) = calib.project_to_image(cam) {
            bbox[0] = bbox[0].min(u);
            bbox[1] = bbox[1].min(v);
            bbox[2] = bbox[2].max(u);
            bbox[3] = bbox[3].max(v);
            projected += 1;
        }
    }
    if projected < 8 {
        bbox = [0.0, 0.0, 0.0, 0.0];
    }

    KittiLabel {
        class_name: class_name.to_string(),
        truncation: 0.0,
        occlusion: 0,
        alpha,
        bbox2d: bbox,
        dims: [b.h, b.w, b.l],
        location,
        rotation_y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_single_point() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = read_point_cloud(&bytes).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points()[0];
        assert_eq!((p.x, p.y, p.z, p.intensity), (1.0, 2.0, 3.0, 0.5));
    }

    #[test]
    fn read_empty() {
        assert!(read_point_cloud(&[]).unwrap().is_empty());
        assert!(write_point_cloud(&PointCloud::new()).is_empty());
    }

    #[test]
    fn read_rejects_bad_length() {
        assert!(matches!(
            read_point_cloud(&[0u8; 15]),
            Err(Error::MalformedCloud(_))
        ));
    }

    #[test]
    fn read_rejects_nan() {
        let mut bytes = Vec::new();
        for v in [f32::NAN, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            read_point_cloud(&bytes),
            Err(Error::MalformedCloud(_))
        ));
    }

    #[test]
    fn parse_standard_label_line() {
        let labels = parse_labels(
            "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59",
        )
        .unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].class_name, "Car");
        assert_eq!(labels[0].location[2], 46.70);
        assert_eq!(labels[0].dims, [1.65, 1.67, 3.64]);
    }

    #[test]
    fn parse_empty_label_file() {
        assert!(parse_labels("").unwrap().is_empty());
    }

    #[test]
    fn parse_rejects_short_line() {
        let err = parse_labels("Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70")
            .unwrap_err();
        assert!(matches!(err, Error::MalformedLabel { line: 1, .. }));
    }

    #[test]
    fn calib_missing_key() {
        let text = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\nR0_rect: 1 0 0 0 1 0 0 0 1\n";
        assert!(matches!(
            parse_calib(text),
            Err(Error::MissingCalibKey(k)) if k == "Tr_velo_to_cam"
        ));
    }

    #[test]
    fn calib_round_trip_is_identity() {
        let calib = CalibSet::nominal();
        let p = [1.2, -3.4, 5.6];
        let back = calib.rect_to_lidar(calib.lidar_to_rect(p)).unwrap();
        for k in 0..3 {
            assert!((back[k] - p[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn nominal_calib_parses() {
        let calib = parse_calib(&write_calib(&CalibSet::nominal())).unwrap();
        assert_eq!(calib, CalibSet::nominal());
    }

    #[test]
    fn label_to_box_nominal_frame() {
        // Camera-frame bottom center 10 m ahead (z forward) becomes a LiDAR
        // box at x = 10 whose center sits h/2 above the bottom.
        let calib = CalibSet::nominal();
        let label = KittiLabel {
            class_name: "Car".into(),
            truncation: 0.0,
            occlusion: 0,
            alpha: 0.0,
            bbox2d: [0.0, 0.0, 50.0, 50.0],
            dims: [2.0, 1.6, 3.9],
            location: [0.0, 0.0, 10.0],
            rotation_y: 0.0,
        };
        let b = label_to_lidar_box(&label, &calib).unwrap();
        assert!((b.cx - 10.0).abs() < 1e-9);
        assert!(b.cy.abs() < 1e-9);
        assert!((b.cz - 1.0).abs() < 1e-9);
        assert_eq!((b.l, b.w, b.h), (3.9, 1.6, 2.0));
    }

    #[test]
    fn label_box_round_trip() {
        let calib = CalibSet::nominal();
        let b = Box3D::new(12.0, -4.0, -0.8, 3.9, 1.6, 1.5, 0.7);
        let label = lidar_box_to_label(&b, "Car", &calib);
        let back = label_to_lidar_box(&label, &calib).unwrap();
        assert!((back.cx - b.cx).abs() < 1e-6);
        assert!((back.cy - b.cy).abs() < 1e-6);
        assert!((back.cz - b.cz).abs() < 1e-6);
        assert!((normalize_angle(back.yaw - b.yaw)).abs() < 1e-6);
    }

    #[test]
    fn degenerate_dims_rejected() {
        let calib = CalibSet::nominal();
        let mut label = lidar_box_to_label(&Box3D::new(5.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0), "Car", &calib);
        label.dims = [-1.0, -1.0, -1.0];
        assert!(matches!(
            label_to_lidar_box(&label, &calib),
            Err(Error::DegenerateBox(_))
        ));
    }

    #[test]
    fn difficulty_thresholds() {
        let mut label = KittiLabel {
            class_name: "Car".into(),
            truncation: 0.0,
            occlusion: 0,
            alpha: 0.0,
            bbox2d: [0.0, 0.0, 10.0, 50.0],
            dims: [1.5, 1.6, 3.9],
            location: [0.0, 0.0, 10.0],
            rotation_y: 0.0,
        };
        assert_eq!(difficulty_of(&label), Difficulty::Easy);
        label.bbox2d = [0.0, 0.0, 10.0, 25.0];
        label.occlusion = 2;
        label.truncation = 0.5;
        assert_eq!(difficulty_of(&label), Difficulty::Hard);
        label.bbox2d = [0.0, 0.0, 10.0, 20.0];
        assert_eq!(difficulty_of(&label), Difficulty::Excluded);
    }

    #[test]
    fn exact_serialization_round_trip() {
        let calib = CalibSet::nominal();
        let b = Box3D::new(12.345678901, -4.2, -0.8, 3.9, 1.6, 1.5, 0.123456789);
        let labels = vec![lidar_box_to_label(&b, "Car", &calib)];
        let parsed = parse_labels(&write_labels_exact(&labels)).unwrap();
        assert_eq!(parsed, labels);
    }
}
