//! Run configurations. Every field has a default, so `{}` is a valid config;
//! unknown fields are rejected.

use serde::{Deserialize, Serialize};
use spinfield_core::critical::{HomogeneousConfig, InhomogeneousConfig};
use spinfield_core::{EtaMode, MomentVector, Tolerances};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub seed: u64,
    /// `None` uses every core. Outputs do not depend on it.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub beta: f64,
    pub gamma: f64,
    pub h: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self { beta: 1.0, gamma: 1.0, h: 0.2 }
    }
}

/// Initial single-site law or moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Start {
    /// Product law of `(sigma, omega)` with symmetric `eta`.
    Lambda([f64; 4]),
    /// Explicit moments `(m_eta, m_sigma, ..., m_sigma_omega_eta)`.
    Moments([f64; 7]),
    /// The neutral equilibrium of the model.
    Neutral,
}

impl Default for Start {
    fn default() -> Self {
        Self::Lambda([0.1, 0.2, 0.3, 0.4])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub run: RunBlock,
    pub model: ModelBlock,
    pub n: usize,
    pub lambda: [f64; 4],
    pub eta: EtaMode,
    pub t_end: f64,
    pub sample_dt: f64,
    pub replicas: usize,
    pub max_events: u64,
    /// Run the two-site exact comparison instead of writing trajectories.
    pub oracle: bool,
    pub oracle_replicas: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            run: RunBlock::default(),
            model: ModelBlock::default(),
            n: 1_000,
            lambda: [0.1, 0.2, 0.3, 0.4],
            eta: EtaMode::IidSymmetric,
            t_end: 10.0,
            sample_dt: 0.1,
            replicas: 1,
            max_events: spinfield_core::SimOptions::default().max_events,
            oracle: false,
            oracle_replicas: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeConfig {
    pub run: RunBlock,
    pub model: ModelBlock,
    pub start: Start,
    pub t_end: f64,
    pub sample_dt: f64,
    pub tolerances: Tolerances,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            run: RunBlock::default(),
            model: ModelBlock::default(),
            start: Start::default(),
            t_end: 20.0,
            sample_dt: 0.1,
            tolerances: Tolerances::default(),
        }
    }
}

impl OdeConfig {
    pub fn start_moments(&self, params: &spinfield_core::ModelParams) -> MomentVector {
        match &self.start {
            Start::Lambda(l) => spinfield_core::InitialLaw::product(*l).moments(),
            Start::Moments(m) => MomentVector(*m),
            Start::Neutral => spinfield_core::equilibria::neutral_equilibrium(params),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub run: RunBlock,
    pub beta: f64,
    pub gamma_range: (f64, f64),
    pub h_range: (f64, f64),
    pub resolution: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self { run: RunBlock::default(), beta: 1.0, gamma_range: (0.2, 6.0), h_range: (0.0, 1.5), resolution: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltConfig {
    pub run: RunBlock,
    pub model: ModelBlock,
    pub n: usize,
    pub lambda: [f64; 4],
    pub t_end: f64,
    pub sample_dt: f64,
    pub replicas: usize,
    pub tolerances: Tolerances,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            run: RunBlock::default(),
            model: ModelBlock::default(),
            n: 10_000,
            lambda: [0.1, 0.2, 0.3, 0.4],
            t_end: 2.0,
            sample_dt: 0.5,
            replicas: 1_000,
            tolerances: Tolerances { rel: 1e-10, abs: 1e-12 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalMode {
    #[default]
    Inhomogeneous,
    Homogeneous,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    pub run: RunBlock,
    pub mode: CriticalMode,
    pub inhomogeneous: InhomogeneousConfig,
    pub homogeneous: HomogeneousConfig,
}
