//! Run configuration: one TOML file with command-line overrides for the
//! seed and paths, so each experiment stays a reproducible record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use pagt_core::geometry::Box3D;
use pagt_core::pattern::{AngularGrid, PatternAwareConfig};
use pagt_core::sim::SensorSpec;
use pagt_core::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    /// Global seed; every frame derives an independent stream from it.
    pub seed: u64,
    /// Output directory for databases, augmented frames and reports.
    pub output: PathBuf,
    /// Database directory; relative paths resolve under `output`.
    pub database: PathBuf,
    /// Objects to draw per class and frame during augmentation.
    pub sampling: BTreeMap<String, usize>,
    pub pattern_aware: PatternAwareSection,
    pub baselines: BaselinesSection,
    pub eval: EvalSection,
    pub analyze: AnalyzeSection,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSection::default(),
            seed: 42,
            output: PathBuf::from("pagt_out"),
            database: PathBuf::from("gt_database"),
            sampling: BTreeMap::from([
                ("Car".to_string(), 15),
                ("Pedestrian".to_string(), 10),
                ("Cyclist".to_string(), 10),
            ]),
            pattern_aware: PatternAwareSection::default(),
            baselines: BaselinesSection::default(),
            eval: EvalSection::default(),
            analyze: AnalyzeSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Root containing velodyne/, label_2/ and calib/ subtrees.
    pub root: PathBuf,
    /// Split listing: one frame id per line.
    pub split: PathBuf,
    pub classes: Vec<String>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            root: PathBuf::new(),
            split: PathBuf::new(),
            classes: vec!["Car".into(), "Pedestrian".into(), "Cyclist".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub azimuth_bins: usize,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub polar_bins: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            theta_min_deg: -180.0,
            theta_max_deg: 180.0,
            azimuth_bins: 512,
            phi_min_deg: -24.8,
            phi_max_deg: 2.0,
            polar_bins: 64,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternAwareSection {
    pub apply_probability: f64,
    pub relocation_factor: f64,
    pub relocated_range: [f64; 2],
    pub min_points: BTreeMap<String, usize>,
    pub grid: GridSection,
}

impl Default for PatternAwareSection {
    fn default() -> Self {
        let core = PatternAwareConfig::kitti_hdl64();
        PatternAwareSection {
            apply_probability: core.apply_probability,
            relocation_factor: core.relocation_factor,
            relocated_range: [core.relocated_range.0, core.relocated_range.1],
            min_points: core.min_points,
            grid: GridSection::default(),
        }
    }
}

impl PatternAwareSection {
    pub fn to_core(&self) -> Result<PatternAwareConfig> {
        let g = &self.grid;
        let cfg = PatternAwareConfig {
            grid: AngularGrid::new(
                g.theta_min_deg.to_radians(),
                g.theta_max_deg.to_radians(),
                g.azimuth_bins,
                g.phi_min_deg.to_radians(),
                g.phi_max_deg.to_radians(),
                g.polar_bins,
            )?,
            apply_probability: self.apply_probability,
            relocation_factor: self.relocation_factor,
            min_points: self.min_points.clone(),
            relocated_range: (self.relocated_range[0], self.relocated_range[1]),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbabilityToggle {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for ProbabilityToggle {
    fn default() -> Self {
        ProbabilityToggle {
            enabled: false,
            probability: 0.3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseToggle {
    pub enabled: bool,
    /// Per-axis Gaussian standard deviation, meters.
    pub sigma: f64,
}

impl Default for NoiseToggle {
    fn default() -> Self {
        NoiseToggle {
            enabled: false,
            sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalSection {
    pub enabled: bool,
    pub flip_probability: f64,
    pub rotation_range_deg: f64,
    pub scale_range: [f64; 2],
    /// Uniform translation jitter half-range per axis; zero disables.
    pub translation_range: f64,
}

impl Default for GlobalSection {
    fn default() -> Self {
        GlobalSection {
            enabled: false,
            flip_probability: 0.5,
            rotation_range_deg: 45.0,
            scale_range: [0.95, 1.05],
            translation_range: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    pub frustum_dropout: ProbabilityToggle,
    pub frustum_noise: NoiseToggle,
    pub random_drop: ProbabilityToggle,
    pub global: GlobalSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bins: usize,
    pub recall_positions: usize,
    pub iou_thresholds: BTreeMap<String, f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            bins: 10,
            recall_positions: 40,
            iou_thresholds: BTreeMap::from([
                ("Car".to_string(), 0.7),
                ("Pedestrian".to_string(), 0.5),
                ("Cyclist".to_string(), 0.5),
            ]),
        }
    }
}

impl EvalSection {
    pub fn threshold_for(&self, class: &str) -> f64 {
        self.iou_thresholds.get(class).copied().unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    pub class: String,
    pub samples: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        AnalyzeSection {
            class: "Car".into(),
            samples: 5000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub vertical_resolution_deg: f64,
    pub horizontal_resolution_deg: f64,
    pub vertical_fov_deg: [f64; 2],
    pub max_range: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        let s = SensorSpec::default();
        SensorSection {
            vertical_resolution_deg: s.vertical_resolution_deg,
            horizontal_resolution_deg: s.horizontal_resolution_deg,
            vertical_fov_deg: [s.vertical_fov_deg.0, s.vertical_fov_deg.1],
            max_range: s.max_range,
        }
    }
}

impl SensorSection {
    pub fn to_core(&self) -> Result<SensorSpec> {
        let spec = SensorSpec {
            vertical_resolution_deg: self.vertical_resolution_deg,
            horizontal_resolution_deg: self.horizontal_resolution_deg,
            vertical_fov_deg: (self.vertical_fov_deg[0], self.vertical_fov_deg[1]),
            max_range: self.max_range,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Horizontal distance of the plate center.
    pub distance: f64,
    pub azimuth_deg: f64,
    pub z_center: f64,
    pub width: f64,
    pub height: f64,
    pub thickness: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        // plate center below the sensor, like a road object; keeps the
        // whole plate inside the vertical fov at both ranges
        TargetSection {
            distance: 15.0,
            azimuth_deg: 0.0,
            z_center: -0.5,
            width: 2.0,
            height: 2.0,
            thickness: 0.05,
        }
    }
}

impl TargetSection {
    /// A plate facing the sensor: thickness runs along the viewing ray.
    pub fn to_box(&self) -> Result<Box3D> {
        if self.distance <= 0.0 || self.width <= 0.0 || self.height <= 0.0 || self.thickness <= 0.0
        {
            return Err(Error::InvalidConfig(format!(
                "bad simulate target: {self:?}"
            )));
        }
        let az = self.azimuth_deg.to_radians();
        Ok(Box3D::new(
            self.distance * az.cos(),
            self.distance * az.sin(),
            self.z_center,
            self.thickness,
            self.width,
            self.height,
            az,
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub sensor: SensorSection,
    pub target: TargetSection,
    pub factor: f64,
    pub count_ratio_bounds: [f64; 2],
    /// Mean nearest-neighbor bound in meters; defaults to one azimuth slice
    /// arc length at the relocated distance.
    pub mean_nn_max: Option<f64>,
    /// Write the three simulated clouds as velodyne .bin files.
    pub write_clouds: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            sensor: SensorSection::default(),
            target: TargetSection::default(),
            factor: 2.0,
            count_ratio_bounds: [0.85, 1.15],
            mean_nn_max: None,
            write_clouds: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Database directory, resolving relative paths under the output dir.
    pub fn database_dir(&self) -> PathBuf {
        if self.database.is_absolute() {
            self.database.clone()
        } else {
            self.output.join(&self.database)
        }
    }

    /// Checks the invariants a dataset-reading command relies on.
    pub fn validate_dataset(&self) -> Result<()> {
        if self.dataset.root.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("dataset.root is not set".into()));
        }
        if !self.dataset.root.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "dataset.root {} is not a directory",
                self.dataset.root.display()
            )));
        }
        if !self.dataset.split.is_file() {
            return Err(Error::InvalidConfig(format!(
                "dataset.split {} is not a file",
                self.dataset.split.display()
            )));
        }
        if self.dataset.classes.is_empty() {
            return Err(Error::InvalidConfig("dataset.classes is empty".into()));
        }
        Ok(())
    }
}
