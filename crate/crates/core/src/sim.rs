//! Raycasting LiDAR simulator: scans simple targets at configurable ranges
//! and angular resolutions. Serves as the independent check that
//! pattern-aware downsampling reproduces a genuinely farther scan.

use crate::error::{Error, Result};
use crate::geometry::{Box3D, LidarPoint, PointCloud};
use crate::pattern::{downsample_pattern_stride, relocate_object, AngularGrid};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Angular lattice of the simulated sensor. Azimuth sweeps the full circle;
/// elevation covers the vertical field of view. All angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub vertical_resolution_deg: f64,
    pub horizontal_resolution_deg: f64,
    /// (low, high) elevation bounds.
    pub vertical_fov_deg: (f64, f64),
    pub max_range: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        // HDL-64E-like geometry; the horizontal resolution sits mid-band
        SensorSpec {
            vertical_resolution_deg: 0.4,
            horizontal_resolution_deg: 0.17,
            vertical_fov_deg: (-24.8, 2.0),
            max_range: 120.0,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.vertical_resolution_deg > 0.0
            && self.horizontal_resolution_deg > 0.0
            && self.vertical_fov_deg.1 > self.vertical_fov_deg.0
            && self.max_range > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad sensor spec: {self:?}")))
        }
    }

    /// Integer lattice rows inside the field of view: k such that
    /// `k * vertical_resolution` lies within the fov bounds.
    pub fn elevation_rows(&self) -> (i64, i64) {
        let v = self.vertical_resolution_deg;
        let k_lo = (self.vertical_fov_deg.0 / v - 1e-9).ceil() as i64;
        let k_hi = (self.vertical_fov_deg.1 / v + 1e-9).floor() as i64;
        (k_lo, k_hi)
    }

    pub fn elevation_angles(&self) -> Vec<f64> {
        let (k_lo, k_hi) = self.elevation_rows();
        (k_lo..=k_hi)
            .map(|k| (k as f64 * self.vertical_resolution_deg).to_radians())
            .collect()
    }

    /// Integer lattice columns: j such that `j * horizontal_resolution`
    /// stays strictly inside (-180, 180) degrees, symmetric about zero so
    /// every direction is an exact multiple of the resolution.
    pub fn azimuth_columns(&self) -> (i64, i64) {
        let j_max = ((180.0 - 1e-9) / self.horizontal_resolution_deg).floor() as i64;
        (-j_max, j_max)
    }

    pub fn azimuth_count(&self) -> usize {
        let (lo, hi) = self.azimuth_columns();
        (hi - lo + 1) as usize
    }
}

/// Scene under the simulated sensor: one opaque cuboid target and an
/// optional ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScene {
    pub target: Box3D,
    pub ground_z: Option<f64>,
}

/// Slab-method intersection of a ray from the origin with the oriented box.
/// Returns the nearest strictly positive hit parameter.
fn ray_box_hit(dir: [f64; 3], b: &Box3D) -> Option<f64> {
    // express the ray in the box frame
    let (s, c) = b.yaw.sin_cos();
    let ox = -(c * b.cx + s * b.cy);
    let oy = -(-s * b.cx + c * b.cy);
    let oz = -b.cz;
    let du = c * dir[0] + s * dir[1];
    let dv = -s * dir[0] + c * dir[1];
    let dw = dir[2];

    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, half) in [
        (ox, du, b.l / 2.0),
        (oy, dv, b.w / 2.0),
        (oz, dw, b.h / 2.0),
    ] {
        let inv = 1.0 / d;
        let mut t1 = (-half - o) * inv;
        let mut t2 = (half - o) * inv;
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        // f64::max/min drop NaN from 0/0 on parallel rays at a face plane
        t_near = t_near.max(t1);
        t_far = t_far.min(t2);
    }
    // strictly positive entry hit; a sensor inside the target sees nothing
    (t_near <= t_far && t_near > 1e-9).then_some(t_near)
}

fn ray_ground_hit(dir: [f64; 3], z0: f64) -> Option<f64> {
    if dir[2].abs() < 1e-12 {
        return None;
    }
    let t = z0 / dir[2];
    (t > 1e-9).then_some(t)
}

fn scan_row(phi: f64, scene: &TargetScene, spec: &SensorSpec) -> Vec<LidarPoint> {
    let (sp, cp) = phi.sin_cos();
    let (j_lo, j_hi) = spec.azimuth_columns();
    let mut hits = Vec::new();
    for j in j_lo..=j_hi {
        let theta = (j as f64 * spec.horizontal_resolution_deg).to_radians();
        let (st, ct) = theta.sin_cos();
        let dir = [cp * ct, cp * st, sp];
        let mut t_hit = f64::INFINITY;
        if let Some(t) = ray_box_hit(dir, &scene.target) {
            t_hit = t;
        }
        if let Some(z0) = scene.ground_z {
            if let Some(t) = ray_ground_hit(dir, z0) {
                t_hit = t_hit.min(t);
            }
        }
        if t_hit <= spec.max_range {
            hits.push(LidarPoint::new(
                t_hit * dir[0],
                t_hit * dir[1],
                t_hit * dir[2],
                1.0,
            ));
        }
    }
    hits
}

/// Casts one ray per lattice direction and keeps the first intersection
/// within range. Output is ordered row-major: elevation rows ascending,
/// azimuth lattice index within each row.
pub fn simulate_scan_seq(scene: &TargetScene, spec: &SensorSpec) -> PointCloud {
    let mut cloud = PointCloud::new();
    for phi in spec.elevation_angles() {
        for p in scan_row(phi, scene, spec) {
            cloud.push(p);
        }
    }
    cloud
}

/// Parallel-over-rows variant of [`simulate_scan_seq`]; identical output.
pub fn simulate_scan(scene: &TargetScene, spec: &SensorSpec) -> PointCloud {
    #[cfg(feature = "parallel")]
    {
        let rows: Vec<Vec<LidarPoint>> = spec
            .elevation_angles()
            .par_iter()
            .map(|&phi| scan_row(phi, scene, spec))
            .collect();
        let mut points = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in &rows {
            points.extend_from_slice(row);
        }
        PointCloud::from_points(points)
    }
    #[cfg(not(feature = "parallel"))]
    simulate_scan_seq(scene, spec)
}

/// Symmetric nearest-neighbor statistics between two clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudComparison {
    pub count_ratio: f64,
    pub mean_nn_distance: f64,
    pub max_nn_distance: f64,
}

fn nn_distances_seq(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| p.distance_to(q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn nn_distances(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    from.points()
        .par_iter()
        .map(|p| {
            to.iter()
                .map(|q| p.distance_to(q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn nn_distances(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    nn_distances_seq(from, to)
}

fn summarize(a: &PointCloud, b: &PointCloud, d_ab: Vec<f64>, d_ba: Vec<f64>) -> CloudComparison {
    let total: f64 = d_ab.iter().chain(d_ba.iter()).sum();
    let max = d_ab
        .iter()
        .chain(d_ba.iter())
        .fold(0.0f64, |m, &d| m.max(d));
    CloudComparison {
        count_ratio: a.len() as f64 / b.len() as f64,
        mean_nn_distance: total / (d_ab.len() + d_ba.len()) as f64,
        max_nn_distance: max,
    }
}

/// Count ratio and symmetric nearest-neighbor distances over both clouds.
pub fn compare_clouds(a: &PointCloud, b: &PointCloud) -> Result<CloudComparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(summarize(a, b, nn_distances(a, b), nn_distances(b, a)))
}

/// Sequential reference implementation of [`compare_clouds`].
pub fn compare_clouds_seq(a: &PointCloud, b: &PointCloud) -> Result<CloudComparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(summarize(a, b, nn_distances_seq(a, b), nn_distances_seq(b, a)))
}

/// Builds an angular grid whose slice widths equal the sensor resolutions,
/// positioned so that every lattice direction falls at the center of a slice
/// and slice-index parity equals lattice-index parity. The azimuth window
/// spans `azimuth_span_deg` around `azimuth_center_deg` and must stay clear
/// of the +-180 degree seam.
pub fn grid_matching_sensor(
    spec: &SensorSpec,
    azimuth_center_deg: f64,
    azimuth_span_deg: f64,
) -> Result<AngularGrid> {
    spec.validate()?;
    let h = spec.horizontal_resolution_deg;
    let v = spec.vertical_resolution_deg;

    let jc = (azimuth_center_deg / h).round() as i64;
    let half = ((azimuth_span_deg / 2.0) / h).ceil() as i64 + 1;
    let mut j_start = jc - half;
    if j_start.rem_euclid(2) != 0 {
        j_start -= 1;
    }
    let w = (jc + half - j_start + 1) as usize;
    let theta_min = (j_start as f64 - 0.5) * h;
    let theta_max = theta_min + w as f64 * h;
    if theta_min < -180.0 || theta_max > 180.0 {
        return Err(Error::InvalidConfig(
            "azimuth window crosses the +-180 degree seam".into(),
        ));
    }

    let (k_lo, k_hi) = spec.elevation_rows();
    let mut k_start = k_lo;
    if k_start.rem_euclid(2) != 0 {
        k_start -= 1;
    }
    let hbins = (k_hi - k_start + 1).max(2) as usize;
    let phi_min = (k_start as f64 - 0.5) * v;
    let phi_max = phi_min + hbins as f64 * v;

    AngularGrid::new(
        theta_min.to_radians(),
        theta_max.to_radians(),
        w,
        phi_min.to_radians(),
        phi_max.to_radians(),
        hbins,
    )
}

/// Result of the oracle chain at one target.
#[derive(Debug, Clone)]
pub struct ChainReport {
    /// Hits on the target at its original distance.
    pub source: PointCloud,
    /// Slice-parity survivors relocated to the far position.
    pub chain: PointCloud,
    /// Hits of a direct scan at the relocated distance.
    pub direct: PointCloud,
    /// Chain cloud vs direct scan; `None` when either cloud is empty.
    pub comparison: Option<CloudComparison>,
    /// One azimuth slice arc length at the relocated distance, in meters.
    pub slice_arc: f64,
}

/// Runs the fidelity chain: simulate the target, downsample on a grid whose
/// slice widths equal the sensor resolutions, relocate by `factor`, then
/// compare against a direct simulation of the target at `factor` times the
/// distance.
pub fn oracle_chain(spec: &SensorSpec, target: &Box3D, factor: f64) -> Result<ChainReport> {
    spec.validate()?;
    if (factor - factor.round()).abs() > 1e-9 || factor < 2.0 {
        return Err(Error::InvalidConfig(format!(
            "relocation factor {factor} must be an integer >= 2"
        )));
    }
    let scene = TargetScene {
        target: *target,
        ground_z: None,
    };
    let source = simulate_scan(&scene, spec);

    let center_deg = target.cy.atan2(target.cx).to_degrees();
    let d = target.center_distance();
    let circumradius = target.l.hypot(target.w) / 2.0;
    let halfwidth_deg = if d > 1.5 * circumradius {
        (circumradius / d).asin().to_degrees()
    } else {
        60.0
    };
    let span_deg = (2.0 * halfwidth_deg + 8.0 * spec.horizontal_resolution_deg).clamp(10.0, 120.0);
    let grid = grid_matching_sensor(spec, center_deg, span_deg)?;

    let (moved_box, _) = relocate_object(target, &PointCloud::new(), factor)?;
    let direct = simulate_scan(
        &TargetScene {
            target: moved_box,
            ground_z: None,
        },
        spec,
    );

    let slice_arc = moved_box.center_distance() * spec.horizontal_resolution_deg.to_radians();

    if source.is_empty() {
        return Ok(ChainReport {
            source,
            chain: PointCloud::new(),
            direct,
            comparison: None,
            slice_arc,
        });
    }

    let sparse = downsample_pattern_stride(&source, &grid, factor.round() as usize)?;
    let (_, chain) = relocate_object(target, &sparse, factor)?;

    let comparison = if chain.is_empty() || direct.is_empty() {
        None
    } else {
        Some(compare_clouds(&chain, &direct)?)
    };
    Ok(ChainReport {
        source,
        chain,
        direct,
        comparison,
        slice_arc,
    })
}
