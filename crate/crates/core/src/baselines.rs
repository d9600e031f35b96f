//! Comparison baselines: frustum dropout, frustum noise, random in-box drop
//! and global affine augmentations (flip, rotation, scaling).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, to_spherical, Box3D, LidarPoint, PointCloud, SphericalPoint};

/// Angular extents of a box as seen from the sensor origin. The azimuth
/// interval is unwrapped across the +-pi seam, so `theta_lo`/`theta_hi` may
/// leave `[-pi, pi)`; membership tests re-wrap. Assumes the box subtends
/// less than a half circle in azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub phi_lo: f64,
    pub phi_hi: f64,
}

impl Frustum {
    pub fn contains(&self, s: &SphericalPoint) -> bool {
        let dt = normalize_angle(s.theta - self.theta_lo);
        dt >= 0.0
            && dt <= self.theta_hi - self.theta_lo
            && s.phi >= self.phi_lo
            && s.phi <= self.phi_hi
    }
}

/// Angular bounding interval of the box's eight corners in (theta, phi),
/// unwrapped around the center azimuth.
pub fn frustum_of_box(b: &Box3D) -> Result<Frustum> {
    if b.center_distance() == 0.0 {
        return Err(Error::DegenerateLocation);
    }
    let theta_c = b.cy.atan2(b.cx);
    let mut dt_lo = f64::INFINITY;
    let mut dt_hi = f64::NEG_INFINITY;
    let mut phi_lo = f64::INFINITY;
    let mut phi_hi = f64::NEG_INFINITY;
    for [x, y, z] in b.corners() {
        let s = to_spherical(&LidarPoint::new(x, y, z, 0.0));
        let dt = normalize_angle(s.theta - theta_c);
        dt_lo = dt_lo.min(dt);
        dt_hi = dt_hi.max(dt);
        phi_lo = phi_lo.min(s.phi);
        phi_hi = phi_hi.max(s.phi);
    }
    Ok(Frustum {
        theta_lo: theta_c + dt_lo,
        theta_hi: theta_c + dt_hi,
        phi_lo,
        phi_hi,
    })
}

/// Drops each point inside both the box and its frustum with probability
/// `p`; all other points pass through untouched.
pub fn frustum_dropout<R: Rng>(
    cloud: &PointCloud,
    b: &Box3D,
    p: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    debug_assert!((0.0..=1.0).contains(&p));
    let frustum = frustum_of_box(b)?;
    let mut out = PointCloud::new();
    for pt in cloud {
        let affected = b.contains(pt) && frustum.contains(&to_spherical(pt));
        if affected {
            if rng.random::<f64>() >= p {
                out.push(*pt);
            }
        } else {
            out.push(*pt);
        }
    }
    Ok(out)
}

/// Perturbs each point inside both the box and its frustum with independent
/// zero-mean Gaussian offsets of standard deviation `sigma` per coordinate.
/// Point count and order are unchanged.
pub fn frustum_noise<R: Rng>(
    cloud: &PointCloud,
    b: &Box3D,
    sigma: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let frustum = frustum_of_box(b)?;
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidConfig(format!("bad noise sigma {sigma}: {e}")))?;
    let mut out = PointCloud::new();
    for pt in cloud {
        let affected = b.contains(pt) && frustum.contains(&to_spherical(pt));
        if affected {
            out.push(LidarPoint::new(
                pt.x + normal.sample(rng),
                pt.y + normal.sample(rng),
                pt.z + normal.sample(rng),
                pt.intensity,
            ));
        } else {
            out.push(*pt);
        }
    }
    Ok(out)
}

/// Drops each in-box point with probability `p`.
pub fn random_drop<R: Rng>(cloud: &PointCloud, b: &Box3D, p: f64, rng: &mut R) -> PointCloud {
    debug_assert!((0.0..=1.0).contains(&p));
    let mut out = PointCloud::new();
    for pt in cloud {
        if b.contains(pt) {
            if rng.random::<f64>() >= p {
                out.push(*pt);
            }
        } else {
            out.push(*pt);
        }
    }
    out
}

/// A global affine augmentation of the whole frame. Applied as flip about
/// the x-z plane, then rotation about z, then uniform scaling, then
/// translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalTransform {
    pub flip_y: bool,
    pub rotation: f64,
    pub scale: f64,
    pub translation: [f64; 3],
}

impl Default for GlobalTransform {
    fn default() -> Self {
        GlobalTransform {
            flip_y: false,
            rotation: 0.0,
            scale: 1.0,
            translation: [0.0; 3],
        }
    }
}

/// Applies the transform to the cloud and boxes together, so box membership
/// of every point is preserved exactly.
pub fn global_transform(
    cloud: &PointCloud,
    boxes: &[Box3D],
    t: &GlobalTransform,
) -> (PointCloud, Vec<Box3D>) {
    debug_assert!(t.scale > 0.0);
    let (sr, cr) = t.rotation.sin_cos();
    let map_xy = |x: f64, y: f64| {
        let y = if t.flip_y { -y } else { y };
        let (rx, ry) = (cr * x - sr * y, sr * x + cr * y);
        (
            rx * t.scale + t.translation[0],
            ry * t.scale + t.translation[1],
        )
    };
    let out_cloud = cloud
        .iter()
        .map(|p| {
            let (x, y) = map_xy(p.x, p.y);
            LidarPoint::new(x, y, p.z * t.scale + t.translation[2], p.intensity)
        })
        .collect();
    let out_boxes = boxes
        .iter()
        .map(|b| {
            let yaw = if t.flip_y { -b.yaw } else { b.yaw };
            let (cx, cy) = map_xy(b.cx, b.cy);
            Box3D::new(
                cx,
                cy,
                b.cz * t.scale + t.translation[2],
                b.l * t.scale,
                b.w * t.scale,
                b.h * t.scale,
                yaw + t.rotation,
            )
        })
        .collect();
    (out_cloud, out_boxes)
}
