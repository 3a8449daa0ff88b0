//! Experiment configuration: schema, validation, content hash, and the
//! builders that turn it into domain objects.

use serde::{Deserialize, Serialize};

use crate::channel::{ApertureSpec, BandConfig, PropagationConstants};
use crate::error::{Error, Result};
use crate::geometry::{build_road, Road, SceneConfig};
use crate::mobility::MobilityModel;
use crate::pbvi::{DistanceMetric, Schedule, SolverConfig};
use crate::pomdp::{snr_thresholds, ModelInputs, PomdpModel};
use crate::units::{dbm_per_hz_to_w_per_hz, friis_constant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSpec {
    pub path_gain_k: f64,
    pub path_loss_exponent: f64,
    pub tx_power_w: f64,
    pub noise_density_dbm_per_hz: f64,
}

impl Default for PropagationSpec {
    fn default() -> Self {
        Self {
            path_gain_k: friis_constant(),
            path_loss_exponent: 2.0,
            tx_power_w: 1.0,
            noise_density_dbm_per_hz: -174.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySpec {
    pub window: usize,
    pub p: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for MobilitySpec {
    fn default() -> Self {
        Self {
            window: 2,
            p: 0.5,
            kappa1: 0.95,
            kappa2: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    pub num_levels: usize,
    pub low_db: f64,
    pub high_db: f64,
    /// Use every (θ, φ) combination of cell angles as a beam direction
    /// instead of the cell-center directions only.
    #[serde(default)]
    pub full_cross_product: bool,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        Self {
            num_levels: 25,
            low_db: -50.0,
            high_db: 80.0,
            full_cross_product: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub discount: f64,
    pub num_stages: usize,
    pub expansions_per_stage: usize,
    pub schedule: Schedule,
    pub epsilon_rel: f64,
    pub max_sweeps: usize,
    pub distance: DistanceMetric,
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            discount: 0.99,
            num_stages: s.num_stages,
            expansions_per_stage: s.expansions_per_stage,
            schedule: s.schedule,
            epsilon_rel: s.epsilon_rel,
            max_sweeps: s.max_sweeps,
            distance: s.distance,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub num_trials: usize,
    pub horizon: usize,
    pub p_grid: Vec<f64>,
    pub speed_grid_kmh: Vec<f64>,
    pub robustness_p: Vec<f64>,
    pub slot_s: f64,
    pub seed: u64,
    pub confidence: f64,
    pub max_fixed_path_slots: usize,
    /// Also evaluate a perfect-information agent restricted to each band.
    pub band_oracles: bool,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            num_trials: 500,
            horizon: 200,
            p_grid: vec![0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95],
            speed_grid_kmh: (1..=9).map(|k| 10.0 * k as f64).collect(),
            robustness_p: vec![0.35, 0.95],
            slot_s: 0.25,
            seed: 2024,
            confidence: 0.95,
            max_fixed_path_slots: 100_000,
            band_oracles: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub bands: Vec<BandSpec>,
    pub aperture: ApertureSpec,
    pub propagation: PropagationSpec,
    pub mobility: MobilitySpec,
    pub discretization: DiscretizationSpec,
    pub solver: SolverSpec,
    pub simulation: SimulationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            bands: vec![
                BandSpec {
                    frequency_hz: 15e9,
                    bandwidth_hz: 90e6,
                },
                BandSpec {
                    frequency_hz: 39e9,
                    bandwidth_hz: 100e6,
                },
                BandSpec {
                    frequency_hz: 60e9,
                    bandwidth_hz: 100e6,
                },
            ],
            aperture: ApertureSpec::default(),
            propagation: PropagationSpec::default(),
            mobility: MobilitySpec::default(),
            discretization: DiscretizationSpec::default(),
            solver: SolverSpec::default(),
            simulation: SimulationSpec::default(),
        }
    }
}

fn probability(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} is not in [0, 1]")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.bands.is_empty() {
            return Err(Error::invalid("bands", "at least one band is required"));
        }
        for (i, b) in self.bands.iter().enumerate() {
            positive(&format!("bands[{i}].frequency_hz"), b.frequency_hz)?;
            positive(&format!("bands[{i}].bandwidth_hz"), b.bandwidth_hz)?;
        }
        positive("aperture.a_y_m", self.aperture.a_y_m)?;
        positive("aperture.a_z_m", self.aperture.a_z_m)?;
        positive("propagation.path_gain_k", self.propagation.path_gain_k)?;
        if !(self.propagation.path_loss_exponent >= 1.0) {
            return Err(Error::invalid("propagation.path_loss_exponent", "must be >= 1"));
        }
        positive("propagation.tx_power_w", self.propagation.tx_power_w)?;
        if !self.propagation.noise_density_dbm_per_hz.is_finite() {
            return Err(Error::invalid("propagation.noise_density_dbm_per_hz", "must be finite"));
        }
        if !(self.mobility.window == 1 || self.mobility.window == 2) {
            return Err(Error::invalid("mobility.window", "only windows 1 and 2 are supported"));
        }
        probability("mobility.p", self.mobility.p)?;
        probability("mobility.kappa1", self.mobility.kappa1)?;
        probability("mobility.kappa2", self.mobility.kappa2)?;
        snr_thresholds(self.discretization.num_levels, self.discretization.low_db, self.discretization.high_db)?;
        if !(self.solver.discount > 0.0 && self.solver.discount < 1.0) {
            return Err(Error::invalid("solver.discount", "must lie in (0, 1)"));
        }
        positive("solver.epsilon_rel", self.solver.epsilon_rel)?;
        if self.solver.max_sweeps == 0 {
            return Err(Error::invalid("solver.max_sweeps", "must be at least 1"));
        }
        for (i, p) in self.simulation.p_grid.iter().enumerate() {
            probability(&format!("simulation.p_grid[{i}]"), *p)?;
        }
        for (i, p) in self.simulation.robustness_p.iter().enumerate() {
            probability(&format!("simulation.robustness_p[{i}]"), *p)?;
        }
        for (i, v) in self.simulation.speed_grid_kmh.iter().enumerate() {
            positive(&format!("simulation.speed_grid_kmh[{i}]"), *v)?;
        }
        positive("simulation.slot_s", self.simulation.slot_s)?;
        if !(self.simulation.confidence > 0.0 && self.simulation.confidence < 1.0) {
            return Err(Error::invalid("simulation.confidence", "must lie in (0, 1)"));
        }
        if self.simulation.num_trials == 0 {
            return Err(Error::invalid("simulation.num_trials", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn hash(&self) -> String {
        crate::artifact::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn road(&self) -> Result<Road> {
        build_road(&self.scene)
    }

    pub fn propagation_constants(&self) -> PropagationConstants {
        PropagationConstants {
            k: self.propagation.path_gain_k,
            eta: self.propagation.path_loss_exponent,
            tx_power_w: self.propagation.tx_power_w,
            noise_density_w_per_hz: dbm_per_hz_to_w_per_hz(self.propagation.noise_density_dbm_per_hz),
        }
    }

    pub fn band_configs(&self) -> Result<Vec<BandConfig>> {
        let n0 = self.propagation_constants().noise_density_w_per_hz;
        self.bands
            .iter()
            .enumerate()
            .map(|(i, b)| BandConfig::on_aperture(i, b.frequency_hz, b.bandwidth_hz, &self.aperture, n0))
            .collect()
    }

    pub fn mobility_model(&self, p: f64) -> Result<MobilityModel> {
        MobilityModel::new(self.mobility.window, p, self.mobility.kappa1, self.mobility.kappa2, self.scene.num_cells)
    }

    pub fn thresholds(&self) -> Result<Vec<f64>> {
        let d = &self.discretization;
        snr_thresholds(d.num_levels, d.low_db, d.high_db)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            num_stages: s.num_stages,
            expansions_per_stage: s.expansions_per_stage,
            schedule: s.schedule,
            epsilon_rel: s.epsilon_rel,
            max_sweeps: s.max_sweeps,
            distance: s.distance,
            seed: s.seed,
        }
    }

    /// Model for mobility parameter `p` restricted to `channels`
    /// (all channels when `None`).
    pub fn build_model(&self, p: f64, channels: Option<&[usize]>) -> Result<PomdpModel> {
        let road = self.road()?;
        let all = self.band_configs()?;
        let bands: Vec<BandConfig> = match channels {
            None => all,
            Some(list) => list
                .iter()
                .map(|&c| all.get(c).copied().ok_or_else(|| Error::invalid("channels", format!("no band with index {c}"))))
                .collect::<Result<_>>()?,
        };
        let mobility = self.mobility_model(p)?;
        let thresholds = self.thresholds()?;
        let consts = self.propagation_constants();
        PomdpModel::build(&ModelInputs {
            road: &road,
            bands: &bands,
            consts: &consts,
            mobility: &mobility,
            thresholds: &thresholds,
            discount: self.solver.discount,
            full_cross_product: self.discretization.full_cross_product,
            config_hash: self.hash(),
        })
    }
}
