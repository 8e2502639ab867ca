//! A validated config turned into model objects.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use num_complex::Complex64;

use eddyscan_core::acquisition::{acquire_hadamard_with, acquire_standard_with, gaussian_matrix, hadamard};
use eddyscan_core::characterization::MTable;
use eddyscan_core::detection::AcquisitionMode;
use eddyscan_core::forward::{response_matrix, InclusionModel, Polarization, ResponseMatrix, SensorArray};
use eddyscan_core::imaging::SearchGrid;
use eddyscan_core::rng::stream_rng;
use eddyscan_core::Point3;

use crate::config::{AcquisitionKind, PolarizationMode, ScenarioConfig};
use crate::error::CliError;
use crate::output::Meta;

pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub hash: String,
    pub array: SensorArray,
    pub inclusion: InclusionModel,
    /// Scalar coefficient `𝓜` at the inclusion's `ν`.
    pub m_coef: Complex64,
}

pub fn load_m_table(path: &Path) -> Result<MTable, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read table {}: {e}", path.display())))?;
    MTable::read_csv(BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn new(config: ScenarioConfig, seed: u64) -> Result<Self, CliError> {
        config.validate()?;
        let inc = &config.inclusion;
        let inclusion = InclusionModel::new(
            Point3::from(inc.center),
            inc.radius,
            inc.mu0,
            inc.mu_star,
            inc.sigma_star,
            inc.omega,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let pol = &inc.polarization;
        let m_coef = match pol.mode {
            PolarizationMode::Sphere => Complex64::new(pol.re_m, pol.im_m),
            PolarizationMode::Table => {
                let path = pol.table.as_deref().expect("validated");
                let table = load_m_table(path)?;
                let nu = inclusion.derived().nu;
                table.eval(nu).ok_or_else(|| {
                    let (lo, hi) = table.range();
                    CliError::Config(format!(
                        "polarization table {} spans nu in [{lo}, {hi}], inclusion has nu = {nu}",
                        path.display()
                    ))
                })?
            }
        };
        let array = SensorArray::new(config.sources(), config.receivers()).map_err(|e| CliError::Config(e.to_string()))?;
        let hash = config.hash();
        Ok(Self {
            config,
            seed,
            hash,
            array,
            inclusion,
            m_coef,
        })
    }

    pub fn meta(&self) -> Meta {
        Meta::new(self.hash.clone(), self.seed)
    }

    pub fn polarization(&self) -> Polarization {
        Polarization::sphere(self.m_coef)
    }

    /// Noiseless response `A₀`.
    pub fn a0(&self) -> Result<ResponseMatrix, CliError> {
        Ok(response_matrix(&self.array, &self.inclusion, &self.polarization())?)
    }

    /// `σ_n` from the config: absolute, or `σ₁(A₀)/ratio`.
    pub fn sigma_n(&self, a0: &ResponseMatrix) -> f64 {
        match (self.config.noise.sigma_n, self.config.noise.ratio) {
            (Some(s), _) => s,
            (None, Some(r)) => a0.singular_values()[0] / r,
            (None, None) => unreachable!("validated"),
        }
    }

    /// One noisy acquisition of `a0` drawn from `stream` of the seed.
    pub fn acquire(&self, a0: &ResponseMatrix, sigma_n: f64, stream: u64) -> Result<ResponseMatrix, CliError> {
        let mut rng = stream_rng(self.seed, stream);
        Ok(match self.config.noise.acquisition {
            AcquisitionKind::Direct => {
                let entry = sigma_n / (a0.m() as f64).sqrt();
                ResponseMatrix::new(a0.data() + gaussian_matrix(a0.n(), a0.m(), entry, &mut rng))
            }
            AcquisitionKind::Standard => acquire_standard_with(a0, sigma_n, &mut rng),
            AcquisitionKind::Hadamard => acquire_hadamard_with(a0, &hadamard(a0.m())?, sigma_n, &mut rng)?,
        })
    }

    /// Noise generation used for detection-probability curves. Standard
    /// acquisition has no `σ_n²/M` counterpart and falls back to direct.
    pub fn pod_mode(&self) -> AcquisitionMode {
        match self.config.noise.acquisition {
            AcquisitionKind::Hadamard => AcquisitionMode::Hadamard,
            AcquisitionKind::Direct | AcquisitionKind::Standard => AcquisitionMode::Direct,
        }
    }

    pub fn search_grid(&self) -> Result<SearchGrid, CliError> {
        let img = &self.config.imaging;
        Ok(SearchGrid::new(Point3::from(img.box_min), Point3::from(img.box_max), img.samples)?)
    }
}
