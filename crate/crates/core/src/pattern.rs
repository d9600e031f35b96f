//! Pattern-aware ground-truth sampling: partition points into angular
//! slices, keep every k-th slice in both angular dimensions and relocate the
//! object k times farther along its ray, producing a realistic far-range
//! training sample.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{to_spherical, Box3D, PointCloud, SphericalPoint};
use crate::gtdb::{insert_objects, sample_objects, GtDatabase, GtObject, InsertOutcome};

/// A W x H partition of the angular domain into evenly spaced slices.
/// Extents are half-open: `[theta_min, theta_max)` and `[phi_min, phi_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularGrid {
    pub theta_min: f64,
    pub theta_max: f64,
    /// W: azimuthal division count.
    pub azimuth_bins: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    /// H: polar division count.
    pub polar_bins: usize,
}

impl AngularGrid {
    pub fn new(
        theta_min: f64,
        theta_max: f64,
        azimuth_bins: usize,
        phi_min: f64,
        phi_max: f64,
        polar_bins: usize,
    ) -> Result<Self> {
        let grid = AngularGrid {
            theta_min,
            theta_max,
            azimuth_bins,
            phi_min,
            phi_max,
            polar_bins,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Full-azimuth grid at the HDL-64E geometry: 512 azimuth slices over
    /// `[-pi, pi)` and 64 polar slices over the sensor's vertical field of
    /// view, one per physical laser.
    pub fn hdl64() -> Self {
        AngularGrid {
            theta_min: -PI,
            theta_max: PI,
            azimuth_bins: 512,
            phi_min: (-24.8f64).to_radians(),
            phi_max: 2.0f64.to_radians(),
            polar_bins: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_min.is_finite()
            && self.theta_max.is_finite()
            && self.phi_min.is_finite()
            && self.phi_max.is_finite()
            && self.theta_max > self.theta_min
            && self.phi_max > self.phi_min
            && self.azimuth_bins >= 2
            && self.polar_bins >= 2
            && self.theta_step() > 0.0
            && self.phi_step() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad angular grid: {self:?}")))
        }
    }

    pub fn theta_step(&self) -> f64 {
        (self.theta_max - self.theta_min) / self.azimuth_bins as f64
    }

    pub fn phi_step(&self) -> f64 {
        (self.phi_max - self.phi_min) / self.polar_bins as f64
    }
}

/// Slice indices of a spherical point, or `OutOfGrid` when either angle
/// falls outside the grid extents.
pub fn slice_index(s: &SphericalPoint, grid: &AngularGrid) -> Result<(usize, usize)> {
    if !(s.theta >= grid.theta_min && s.theta < grid.theta_max)
        || !(s.phi >= grid.phi_min && s.phi < grid.phi_max)
    {
        return Err(Error::OutOfGrid {
            theta: s.theta,
            phi: s.phi,
        });
    }
    let i_theta = ((s.theta - grid.theta_min) / grid.theta_step()) as usize;
    let i_phi = ((s.phi - grid.phi_min) / grid.phi_step()) as usize;
    // guard against edge rounding
    Ok((
        i_theta.min(grid.azimuth_bins - 1),
        i_phi.min(grid.polar_bins - 1),
    ))
}

/// Retains exactly the points whose azimuth and polar slice indices are both
/// multiples of `stride`, preserving order. A stride of 2 keeps every other
/// slice in both dimensions, halving both angular densities.
pub fn downsample_pattern_stride(
    points: &PointCloud,
    grid: &AngularGrid,
    stride: usize,
) -> Result<PointCloud> {
    debug_assert!(stride >= 1);
    let mut out = PointCloud::new();
    for p in points {
        let (i_theta, i_phi) = slice_index(&to_spherical(p), grid)?;
        if i_theta % stride == 0 && i_phi % stride == 0 {
            out.push(*p);
        }
    }
    Ok(out)
}

/// [`downsample_pattern_stride`] with the every-other-slice stride of 2.
pub fn downsample_pattern(points: &PointCloud, grid: &AngularGrid) -> Result<PointCloud> {
    downsample_pattern_stride(points, grid, 2)
}

/// Moves a box and its points along the sensor ray so the horizontal
/// distance scales by `factor`. The box bottom height and yaw are unchanged
/// and every point is translated by the same vector, so the azimuth of the
/// center and the box-frame offsets of all points are preserved.
pub fn relocate_object(
    box3d: &Box3D,
    points: &PointCloud,
    factor: f64,
) -> Result<(Box3D, PointCloud)> {
    let d = box3d.center_distance();
    if d == 0.0 {
        return Err(Error::DegenerateLocation);
    }
    let dx = (factor - 1.0) * box3d.cx;
    let dy = (factor - 1.0) * box3d.cy;
    let moved = Box3D::new(
        box3d.cx + dx,
        box3d.cy + dy,
        box3d.cz,
        box3d.l,
        box3d.w,
        box3d.h,
        box3d.yaw,
    );
    Ok((moved, points.translated(dx, dy, 0.0)))
}

/// Configuration of the pattern-aware sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternAwareConfig {
    pub grid: AngularGrid,
    /// Probability that a drawn sample is downsampled and relocated.
    pub apply_probability: f64,
    /// Distance multiplier; must be an integer >= 2 (the slice stride).
    pub relocation_factor: f64,
    /// Minimum surviving point count per class; classes absent from the map
    /// default to 1.
    pub min_points: BTreeMap<String, usize>,
    /// Admissible horizontal distance interval for relocated objects.
    pub relocated_range: (f64, f64),
}

impl PatternAwareConfig {
    /// The KITTI HDL-64E configuration: 512x64 grid downsampled to 256x32,
    /// 40% probability, doubling distance, min points 5/200/200 for
    /// Car/Pedestrian/Cyclist, relocation limited to 20-70 m.
    pub fn kitti_hdl64() -> Self {
        let min_points = BTreeMap::from([
            ("Car".to_string(), 5),
            ("Pedestrian".to_string(), 200),
            ("Cyclist".to_string(), 200),
        ]);
        PatternAwareConfig {
            grid: AngularGrid::hdl64(),
            apply_probability: 0.40,
            relocation_factor: 2.0,
            min_points,
            relocated_range: (20.0, 70.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::InvalidConfig(format!(
                "apply_probability {} outside [0, 1]",
                self.apply_probability
            )));
        }
        let factor = self.relocation_factor;
        if !factor.is_finite() || factor <= 1.0 || (factor - factor.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "relocation_factor {factor} must be an integer greater than 1"
            )));
        }
        if !(self.relocated_range.0 >= 0.0 && self.relocated_range.1 > self.relocated_range.0) {
            return Err(Error::InvalidConfig(format!(
                "bad relocated_range {:?}",
                self.relocated_range
            )));
        }
        if self.min_points.values().any(|&n| n < 1) {
            return Err(Error::InvalidConfig("min_points must be >= 1".into()));
        }
        Ok(())
    }

    /// Slice stride implied by the relocation factor.
    pub fn stride(&self) -> usize {
        self.relocation_factor.round() as usize
    }

    pub fn min_points_for(&self, class: &str) -> usize {
        self.min_points.get(class).copied().unwrap_or(1)
    }
}

impl Default for PatternAwareConfig {
    fn default() -> Self {
        Self::kitti_hdl64()
    }
}

/// Outcome of [`pattern_aware_sample`] for one drawn object.
#[derive(Debug, Clone)]
pub enum SampleOutcome {
    /// The probability roll left the object at its original location.
    Unchanged,
    /// Downsampled and relocated copy of the object.
    Relocated(GtObject),
    /// Downsampling was attempted but failed a constraint; the caller falls
    /// back to inserting the object unchanged.
    Rejected,
}

/// Rolls the apply probability and, on success, downsamples the object on
/// the slice grid and relocates it `relocation_factor` times farther.
/// Constraint failures (too few surviving points, relocated distance outside
/// the admissible range, points outside the grid) yield `Rejected` rather
/// than an error. Deterministic for a fixed rng state.
pub fn pattern_aware_sample<R: Rng>(
    obj: &GtObject,
    cfg: &PatternAwareConfig,
    rng: &mut R,
) -> SampleOutcome {
    if rng.random::<f64>() >= cfg.apply_probability {
        return SampleOutcome::Unchanged;
    }
    let new_distance = obj.distance * cfg.relocation_factor;
    if !(new_distance >= cfg.relocated_range.0 && new_distance <= cfg.relocated_range.1) {
        return SampleOutcome::Rejected;
    }
    let sparse = match downsample_pattern_stride(&obj.points, &cfg.grid, cfg.stride()) {
        Ok(s) => s,
        Err(_) => return SampleOutcome::Rejected,
    };
    if sparse.len() < cfg.min_points_for(&obj.class_name) {
        return SampleOutcome::Rejected;
    }
    match relocate_object(&obj.box3d, &sparse, cfg.relocation_factor) {
        Ok((box3d, points)) => SampleOutcome::Relocated(GtObject::new(
            obj.class_name.clone(),
            box3d,
            points,
            obj.source_frame.clone(),
        )),
        Err(_) => SampleOutcome::Rejected,
    }
}

/// Per-frame augmentation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugmentStats {
    /// Candidates drawn from the database.
    pub drawn: usize,
    /// Candidates accepted into the frame.
    pub accepted: usize,
    /// Accepted candidates that were downsampled and relocated.
    pub relocated: usize,
    /// Candidates rejected by the pattern-aware constraints and inserted at
    /// their original location instead.
    pub rejected: usize,
    /// Candidates dropped by box-overlap collision rejection.
    pub collided: usize,
}

/// An augmented frame: the new cloud, every box in it and the objects that
/// were inserted.
#[derive(Debug, Clone)]
pub struct FrameAugmentation {
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
    pub inserted: Vec<GtObject>,
    pub stats: AugmentStats,
}

/// Draws objects per the sampling plan, applies pattern-aware sampling to
/// each (falling back to the original object on rejection) and inserts the
/// results with collision rejection.
pub fn augment_frame<R: Rng>(
    cloud: &PointCloud,
    boxes: &[Box3D],
    db: &GtDatabase,
    cfg: &PatternAwareConfig,
    plan: &BTreeMap<String, usize>,
    rng: &mut R,
) -> Result<FrameAugmentation> {
    cfg.validate()?;
    let mut stats = AugmentStats::default();
    let mut candidates: Vec<GtObject> = Vec::new();
    let mut relocated_flags: Vec<bool> = Vec::new();
    for (class, &count) in plan {
        if count == 0 {
            continue;
        }
        for obj in sample_objects(db, class, count, rng)? {
            stats.drawn += 1;
            match pattern_aware_sample(obj, cfg, rng) {
                SampleOutcome::Relocated(moved) => {
                    candidates.push(moved);
                    relocated_flags.push(true);
                }
                SampleOutcome::Unchanged => {
                    candidates.push(obj.clone());
                    relocated_flags.push(false);
                }
                SampleOutcome::Rejected => {
                    stats.rejected += 1;
                    candidates.push(obj.clone());
                    relocated_flags.push(false);
                }
            }
        }
    }

    let InsertOutcome {
        cloud,
        boxes,
        accepted,
    } = insert_objects(cloud, boxes, &candidates);
    stats.accepted = accepted.len();
    stats.collided = stats.drawn - stats.accepted;
    stats.relocated = accepted.iter().filter(|&&i| relocated_flags[i]).count();

    let mut inserted = Vec::with_capacity(accepted.len());
    let mut by_index: Vec<Option<GtObject>> = candidates.into_iter().map(Some).collect();
    for &i in &accepted {
        inserted.push(by_index[i].take().expect("accepted index is unique"));
    }

    Ok(FrameAugmentation {
        cloud,
        boxes,
        inserted,
        stats,
    })
}

/// Derives an independently seeded deterministic rng from a global seed and
/// a stream label (typically the frame identifier).
pub fn derive_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    // FNV-1a over the label, mixed into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}
