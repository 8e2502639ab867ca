//! Scenario configuration (TOML).
//!
//! Every field has a default, so an empty file describes the reference
//! setup: a 16 × 16 array of vertical dipoles on `[-2, 2]² × {1}` probing a
//! 1 cm sphere at the origin, imaged on `[-0.5, 0.5]³` with 21 samples per
//! axis.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eddyscan_core::forward::{planar_grid, Sensor};
use eddyscan_core::geometry::Direction;
use eddyscan_core::Point3;

use crate::error::CliError;

fn unit(v: [f64; 3]) -> Direction {
    Direction::new_normalize(Point3::from(v))
}

/// Environment variable that overrides the RNG seed of a config file.
pub const SEED_ENV: &str = "EDDYSCAN_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub inclusion: InclusionConfig,
    pub array: ArrayConfig,
    pub noise: NoiseConfig,
    pub detection: DetectionConfig,
    pub imaging: ImagingConfig,
    pub characterization: CharacterizationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InclusionConfig {
    pub center: [f64; 3],
    pub radius: f64,
    pub mu0: f64,
    pub mu_star: f64,
    pub sigma_star: f64,
    pub omega: f64,
    pub polarization: PolarizationConfig,
}

impl Default for InclusionConfig {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            radius: 0.01,
            mu0: 1.2566e-6,
            mu_star: 1.2566e-6,
            sigma_star: 5.96e7,
            omega: 133.5,
            polarization: PolarizationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarizationMode {
    /// Scalar coefficient given by `re_m`, `im_m`.
    Sphere,
    /// Scalar coefficient interpolated from `table` at the inclusion's `ν`.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationConfig {
    pub mode: PolarizationMode,
    pub re_m: f64,
    pub im_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl Default for PolarizationConfig {
    fn default() -> Self {
        Self {
            mode: PolarizationMode::Sphere,
            re_m: -0.4110,
            im_m: -0.0387,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// Sensors cover `[-half_extent, half_extent]²`.
    pub half_extent: f64,
    pub height: f64,
    pub sources_per_side: usize,
    pub receivers_per_side: usize,
    pub source_direction: [f64; 3],
    pub receiver_direction: [f64; 3],
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            half_extent: 2.0,
            height: 1.0,
            sources_per_side: 16,
            receivers_per_side: 16,
            source_direction: [0.0, 0.0, 1.0],
            receiver_direction: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    /// White noise of variance `σ_n²/M` added to `A₀`.
    #[default]
    Direct,
    /// One source at a time, per-entry noise `σ_n²`.
    Standard,
    /// Hadamard-multiplexed sources, decoded; needs a power-of-two `M`.
    Hadamard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Absolute noise level; mutually exclusive with `ratio`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_n: Option<f64>,
    /// Target `σ₁(A₀)/σ_n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub acquisition: AcquisitionKind,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_n: None,
            ratio: Some(10.0),
            acquisition: AcquisitionKind::Direct,
            seed: 20130501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub delta: f64,
    pub trials: usize,
    /// False-alarm levels for detection-probability curves.
    pub deltas: Vec<f64>,
    /// `σ₁(A₀)/σ_n` values for detection-probability curves.
    pub ratios: Vec<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            trials: 1000,
            deltas: vec![0.01, 0.05, 0.10],
            ratios: vec![0.6, 0.8, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.8, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub samples: [usize; 3],
    pub rank: usize,
    /// Noise levels (as `σ₁(A₀)/σ_n`) for the image-sharpness sweep.
    pub ratios: Vec<f64>,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            box_min: [-0.5; 3],
            box_max: [0.5; 3],
            samples: [21; 3],
            rank: 3,
            ratios: vec![10.0, 20.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizationConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_table: Option<PathBuf>,
    pub sigma_grid: GridSpec,
    pub alpha_grid: GridSpec,
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        Self {
            m_table: None,
            sigma_grid: GridSpec { min: 1e7, max: 1e8, count: 91 },
            alpha_grid: GridSpec { min: 0.005, max: 0.02, count: 151 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses and validates; relative table paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for table in [&mut config.inclusion.polarization.table, &mut config.characterization.m_table]
            .into_iter()
            .flatten()
        {
            if table.is_relative() {
                *table = base.join(&*table);
            }
        }
        Ok(config)
    }

    pub fn m(&self) -> usize {
        self.array.sources_per_side.pow(2)
    }

    pub fn n(&self) -> usize {
        self.array.receivers_per_side.pow(2)
    }

    pub fn sources(&self) -> Vec<Sensor> {
        let a = &self.array;
        planar_grid(a.half_extent, a.sources_per_side, a.height, unit(a.source_direction))
    }

    pub fn receivers(&self) -> Vec<Sensor> {
        let a = &self.array;
        planar_grid(a.half_extent, a.receivers_per_side, a.height, unit(a.receiver_direction))
    }

    fn search_grid_contains(&self, p: &Point3) -> bool {
        let img = &self.imaging;
        (0..3).all(|a| p[a] >= img.box_min[a] && p[a] <= img.box_max[a])
    }

    /// SHA-256 of the canonical JSON serialization. The output directory is
    /// left out so that the same run written elsewhere is byte-identical.
    pub fn hash(&self) -> String {
        let mut content = self.clone();
        content.output = OutputConfig::default();
        let canonical = serde_json::to_string(&content).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Seed after the `--seed` flag and the environment override.
    pub fn effective_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(seed) = flag {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
            Err(_) => Ok(self.noise.seed),
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        let inc = &self.inclusion;
        positive("inclusion.radius", inc.radius);
        positive("inclusion.mu0", inc.mu0);
        positive("inclusion.mu_star", inc.mu_star);
        positive("inclusion.sigma_star", inc.sigma_star);
        positive("inclusion.omega", inc.omega);
        positive("array.half_extent", self.array.half_extent);
        let cg = &self.characterization;
        positive("characterization.sigma_grid.min", cg.sigma_grid.min);
        positive("characterization.alpha_grid.min", cg.alpha_grid.min);
        if let Some(s) = self.noise.sigma_n {
            positive("noise.sigma_n", s);
        }
        if let Some(r) = self.noise.ratio {
            positive("noise.ratio", r);
        }
        for &r in self.detection.ratios.iter().chain(&self.imaging.ratios) {
            positive("ratio list entry", r);
        }

        if inc.center.iter().any(|c| !c.is_finite()) {
            errs.push("inclusion.center must be finite".into());
        }
        let pol = &inc.polarization;
        match pol.mode {
            PolarizationMode::Sphere if !(pol.re_m.is_finite() && pol.im_m.is_finite()) => {
                errs.push("inclusion.polarization.re_m/im_m must be finite".into())
            }
            PolarizationMode::Table if pol.table.is_none() => {
                errs.push("inclusion.polarization.mode = \"table\" requires inclusion.polarization.table".into())
            }
            _ => {}
        }

        let arr = &self.array;
        if !arr.height.is_finite() {
            errs.push("array.height must be finite".into());
        }
        if arr.sources_per_side == 0 {
            errs.push("array.sources_per_side must be at least 1".into());
        }
        if arr.receivers_per_side < arr.sources_per_side {
            errs.push(format!(
                "need at least as many receivers as sources (N >= M): {} < {}",
                self.n(),
                self.m()
            ));
        }
        for (name, d) in [("array.source_direction", arr.source_direction), ("array.receiver_direction", arr.receiver_direction)] {
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                errs.push(format!("{name} must be a nonzero finite vector"));
            }
        }

        match (self.noise.sigma_n, self.noise.ratio) {
            (Some(_), Some(_)) => errs.push("set only one of noise.sigma_n and noise.ratio".into()),
            (None, None) => errs.push("set one of noise.sigma_n and noise.ratio".into()),
            _ => {}
        }
        if self.noise.acquisition == AcquisitionKind::Hadamard && !self.m().is_power_of_two() {
            errs.push(format!(
                "Hadamard acquisition needs a power-of-two number of sources, got M = {}",
                self.m()
            ));
        }

        let det = &self.detection;
        for &d in std::iter::once(&det.delta).chain(&det.deltas) {
            if !(d > 1e-6 && d < 1.0 - 1e-6) {
                errs.push(format!("false-alarm level {d} outside (1e-6, 1 - 1e-6)"));
            }
        }
        if det.trials == 0 {
            errs.push("detection.trials must be at least 1".into());
        }

        let img = &self.imaging;
        for axis in 0..3 {
            if img.samples[axis] < 2 {
                errs.push(format!("imaging.samples[{axis}] must be at least 2"));
            }
            if !(img.box_min[axis] < img.box_max[axis]) {
                errs.push(format!("imaging box needs box_min[{axis}] < box_max[{axis}]"));
            }
        }
        if img.rank == 0 || img.rank > self.m().min(self.n()) {
            errs.push(format!("imaging.rank must be in 1..={}", self.m().min(self.n())));
        }
        if errs.is_empty() {
            for (role, sensors) in [("source", self.sources()), ("receiver", self.receivers())] {
                if let Some(k) = sensors.iter().position(|s| self.search_grid_contains(&s.position)) {
                    errs.push(format!("{role} {k} lies inside the imaging search box"));
                }
            }
        }

        for (name, g) in [("characterization.sigma_grid", &cg.sigma_grid), ("characterization.alpha_grid", &cg.alpha_grid)] {
            if g.count == 0 || !(g.max >= g.min) || (g.count > 1 && g.max == g.min) {
                errs.push(format!("{name} needs count >= 1 and max > min"));
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs.join("; ")))
        }
    }
}
