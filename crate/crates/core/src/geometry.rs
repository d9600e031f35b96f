//! Coordinate transforms, the spherical representation and oriented-box
//! geometry: the numeric foundation for every other module.

use std::f64::consts::PI;

/// Vertex-coincidence tolerance for polygon clipping, in meters.
const CLIP_EPS: f64 = 1e-9;

/// A single LiDAR return in the sensor frame (x forward, y left, z up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Unitless reflectance in `[0, 1]`.
    pub intensity: f64,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        debug_assert!(
            x.is_finite() && y.is_finite() && z.is_finite(),
            "non-finite coordinates"
        );
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            z: self.z + dz,
            intensity: self.intensity,
        }
    }

    pub fn distance_to(&self, other: &LidarPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// An ordered sequence of LiDAR points. Filtering operations preserve the
/// relative order of the surviving points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<LidarPoint>) -> Self {
        debug_assert!(points.iter().all(LidarPoint::is_finite));
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LidarPoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LidarPoint> {
        self.points.iter()
    }

    pub fn push(&mut self, p: LidarPoint) {
        debug_assert!(p.is_finite());
        self.points.push(p);
    }

    pub fn extend_from_cloud(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    /// The sub-cloud at the given indices, in index order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    pub fn retain(&mut self, f: impl FnMut(&LidarPoint) -> bool) {
        self.points.retain(f);
    }

    /// All points shifted by the same vector.
    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p.translated(dx, dy, dz)).collect(),
        }
    }
}

impl FromIterator<LidarPoint> for PointCloud {
    fn from_iter<T: IntoIterator<Item = LidarPoint>>(iter: T) -> Self {
        Self::from_points(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a LidarPoint;
    type IntoIter = std::slice::Iter<'a, LidarPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Spherical representation of a point: range `r`, horizontal range `d`,
/// azimuth `theta` in `[-pi, pi)` and elevation `phi` in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub d: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid may round up to exactly 2*pi for tiny negative inputs
    if x >= PI {
        x = -PI;
    }
    x
}

/// Spherical coordinates of a point. The azimuth is the full-quadrant
/// arctangent of (x, y); the zenith (`d == 0`) and origin (`r == 0`)
/// singularities resolve to `theta = 0` and `phi = 0` by convention.
pub fn to_spherical(p: &LidarPoint) -> SphericalPoint {
    let d = p.x.hypot(p.y);
    let r = d.hypot(p.z);
    let theta = if d == 0.0 {
        0.0
    } else {
        normalize_angle(p.y.atan2(p.x))
    };
    let phi = if r == 0.0 { 0.0 } else { (p.z / r).asin() };
    SphericalPoint { r, d, theta, phi }
}

/// Inverse of [`to_spherical`]. The horizontal coordinates reconstruct from
/// `d` (equal to `r*cos(phi)` by the type invariant), which avoids the
/// ill-conditioning of `cos(asin(.))` near the zenith. Intensity is not part
/// of the spherical form, so the result carries zero intensity.
pub fn from_spherical(s: &SphericalPoint) -> LidarPoint {
    LidarPoint {
        x: s.d * s.theta.cos(),
        y: s.d * s.theta.sin(),
        z: s.r * s.phi.sin(),
        intensity: 0.0,
    }
}

/// Oriented 3D bounding box in the sensor frame. `l` runs along the heading,
/// `w` across it, `h` up; `yaw` is the heading about the z-axis, normalized
/// to `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Self {
        debug_assert!(l > 0.0 && w > 0.0 && h > 0.0, "non-positive box dims");
        Self {
            cx,
            cy,
            cz,
            l,
            w,
            h,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    /// Horizontal distance of the box center from the sensor.
    pub fn center_distance(&self) -> f64 {
        self.cx.hypot(self.cy)
    }

    pub fn z_interval(&self) -> (f64, f64) {
        (self.cz - self.h / 2.0, self.cz + self.h / 2.0)
    }

    /// BEV footprint corners in counter-clockwise order.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.l / 2.0;
        let hw = self.w / 2.0;
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]]
            .map(|[u, v]| [self.cx + c * u - s * v, self.cy + s * u + c * v])
    }

    /// All eight corners, bottom face first.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let bev = self.bev_corners();
        let (zlo, zhi) = self.z_interval();
        let mut out = [[0.0; 3]; 8];
        for (i, [x, y]) in bev.iter().enumerate() {
            out[i] = [*x, *y, zlo];
            out[i + 4] = [*x, *y, zhi];
        }
        out
    }

    /// Closed-box membership test (boundary points count as inside).
    pub fn contains(&self, p: &LidarPoint) -> bool {
        if (p.z - self.cz).abs() > self.h / 2.0 {
            return false;
        }
        self.footprint_contains(p.x, p.y)
    }

    /// BEV membership test over the full-height column of the box.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let (s, c) = self.yaw.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= self.l / 2.0 && v.abs() <= self.w / 2.0
    }
}

/// Indices of the points inside the oriented box, in cloud order.
pub fn points_in_box(cloud: &PointCloud, b: &Box3D) -> Vec<usize> {
    cloud
        .iter()
        .enumerate()
        .filter(|(_, p)| b.contains(p))
        .map(|(i, _)| i)
        .collect()
}

fn edge_side(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// One Sutherland-Hodgman pass: keeps the part of `poly` on the left of the
/// directed edge `a -> b`.
fn clip_half_plane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2], out: &mut Vec<[f64; 2]>) {
    out.clear();
    let n = poly.len();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let dp = edge_side(a, b, p);
        let dq = edge_side(a, b, q);
        if dp >= 0.0 {
            out.push(p);
        }
        if (dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0) {
            let t = dp / (dp - dq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
}

fn drop_coincident_vertices(poly: &mut Vec<[f64; 2]>) {
    if poly.len() < 2 {
        return;
    }
    let mut kept: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for &v in poly.iter() {
        match kept.last() {
            Some(last) if (v[0] - last[0]).abs() <= CLIP_EPS && (v[1] - last[1]).abs() <= CLIP_EPS => {}
            _ => kept.push(v),
        }
    }
    if kept.len() > 1 {
        let first = kept[0];
        let last = kept[kept.len() - 1];
        if (first[0] - last[0]).abs() <= CLIP_EPS && (first[1] - last[1]).abs() <= CLIP_EPS {
            kept.pop();
        }
    }
    *poly = kept;
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Area of intersection of the two yaw-rotated rectangles in the x-y plane,
/// by convex polygon clipping. Zero when the footprints are disjoint.
pub fn bev_overlap_area(a: &Box3D, b: &Box3D) -> f64 {
    let mut poly: Vec<[f64; 2]> = a.bev_corners().to_vec();
    let clip = b.bev_corners();
    let mut scratch = Vec::with_capacity(8);
    for i in 0..4 {
        if poly.is_empty() {
            return 0.0;
        }
        clip_half_plane(&poly, clip[i], clip[(i + 1) % 4], &mut scratch);
        std::mem::swap(&mut poly, &mut scratch);
    }
    drop_coincident_vertices(&mut poly);
    polygon_area(&poly)
}

/// 3D intersection-over-union of two gravity-aligned oriented boxes.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let bev = bev_overlap_area(a, b);
    if bev == 0.0 {
        return 0.0;
    }
    let (alo, ahi) = a.z_interval();
    let (blo, bhi) = b.z_interval();
    let z_overlap = (ahi.min(bhi) - alo.max(blo)).max(0.0);
    let inter = bev * z_overlap;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
