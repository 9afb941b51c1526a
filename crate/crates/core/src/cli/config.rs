//! TOML run configuration.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ChoreoError, Result};
use crate::integrate::Method;
use crate::model::{ConfinementPotential, InteractionKind, InteractionPotential, SystemSpec};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    SmoothChoreo,
    BoxNonsimultaneous,
    BoxSimultaneous,
    FpuCirculant,
    BilliardEllipse,
    ScalingProbe,
}

/// Which linear mode receives the initial displacement.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// Smallest positive eigenvalue of the reduced Hessian.
    #[default]
    Slowest,
    /// Smallest positive eigenvalue among phase-dominated modes.
    SlowestPsi,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub billiard: BilliardConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub nondeg: NondegConfig,
    #[serde(default)]
    pub average: AverageConfig,
    #[serde(default)]
    pub sweep: SweepGrid,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Box side lengths; empty means `pi` on every axis.
    pub lengths: Vec<f64>,
    pub interaction: InteractionPotential,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n: 2,
            d: 2,
            alpha: 8.0,
            delta: 1e-4,
            lengths: Vec::new(),
            interaction: InteractionPotential::new(InteractionKind::InversePowerWithCore { strength: 1.0, power: 2.0 }, 0.1),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub amplitude: f64,
    /// Horizon in fast vertical periods.
    pub horizon_periods: f64,
    pub method: Method,
    pub dt: f64,
    pub sample_interval: f64,
    /// Start phases for the minimization; empty means a lattice.
    pub phases: Vec<f64>,
    /// Transverse start positions (row-major `N x (d-1)`); empty means spread
    /// along the first transverse axis.
    pub xi0: Vec<f64>,
    pub mode: PerturbMode,
    /// Shift the initial vertical energies so that mean actions, not
    /// instantaneous ones, sit on the choreography.
    pub averaging_correction: bool,
    /// Keep every sample for CSV export.
    pub store: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            amplitude: 1e-3,
            horizon_periods: 1000.0,
            method: Method::SplittingOrder4,
            dt: 5e-3,
            sample_interval: 0.5,
            phases: Vec::new(),
            xi0: Vec::new(),
            mode: PerturbMode::Slowest,
            averaging_correction: true,
            store: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BilliardConfig {
    pub semi: Vec<f64>,
    /// Superellipse exponent; absent means an ellipse.
    pub exponent: Option<f64>,
    pub bounces: usize,
    /// Start boundary angles, one list per search.
    pub starts: Vec<Vec<f64>>,
}

impl Default for BilliardConfig {
    fn default() -> Self {
        BilliardConfig {
            semi: vec![2.0, 1.0],
            exponent: None,
            bounces: 2,
            starts: vec![vec![PI / 2.0 + 0.1, 3.0 * PI / 2.0 - 0.05], vec![0.1, PI + 0.05]],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub alpha: f64,
    pub deltas: Vec<f64>,
    pub at_pi: bool,
    /// Transverse separation of the pair.
    pub zeta: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { alpha: 4.0, deltas: vec![1e-6, 1e-5, 1e-4, 1e-3], at_pi: true, zeta: vec![1.0] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NondegConfig {
    pub draws: usize,
    pub n_range: [usize; 2],
    pub d_range: [usize; 2],
}

impl Default for NondegConfig {
    fn default() -> Self {
        NondegConfig { draws: 100, n_range: [2, 5], d_range: [2, 4] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AverageConfig {
    pub points: usize,
    /// Transverse separation used for the table.
    pub zeta: Vec<f64>,
}

impl Default for AverageConfig {
    fn default() -> Self {
        AverageConfig { points: 256, zeta: Vec::new() }
    }
}

/// Parameter axes of a sweep; empty axes are not swept.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub n: Vec<usize>,
    pub amplitude: Vec<f64>,
}

impl Config {
    pub fn new(scenario: ScenarioKind) -> Self {
        Config {
            scenario,
            seed: 0,
            system: SystemConfig::default(),
            run: RunConfig::default(),
            billiard: BilliardConfig::default(),
            scaling: ScalingConfig::default(),
            nondeg: NondegConfig::default(),
            average: AverageConfig::default(),
            sweep: SweepGrid::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| ChoreoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChoreoError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let bad = |m: &str| Err(ChoreoError::Config(m.to_string()));
        if s.n < 1 || s.d < 1 {
            return bad("system.n and system.d must be at least 1");
        }
        if !(s.alpha > 0.0) || !(s.delta >= 0.0) {
            return bad("need system.alpha > 0 and system.delta >= 0");
        }
        if !s.lengths.is_empty() && (s.lengths.len() != s.d || s.lengths.iter().any(|l| !(*l > 0.0))) {
            return bad("system.lengths must hold d positive entries");
        }
        if self.scenario == ScenarioKind::BoxSimultaneous && !(s.alpha > 6.0) {
            return bad("box-simultaneous requires alpha > 6");
        }
        let r = &self.run;
        if !(r.dt > 0.0) || !(r.sample_interval > 0.0) || !(r.horizon_periods > 0.0) || !(r.amplitude >= 0.0) {
            return bad("run.dt, run.sample_interval, run.horizon_periods must be positive, run.amplitude non-negative");
        }
        if !r.phases.is_empty() && r.phases.len() != s.n {
            return bad("run.phases must hold n entries");
        }
        if !r.xi0.is_empty() && r.xi0.len() != s.n * (s.d - 1) {
            return bad("run.xi0 must hold n * (d - 1) entries");
        }
        if self.billiard.bounces < 2 {
            return bad("billiard.bounces must be at least 2");
        }
        if self.nondeg.n_range[0] < 1
            || self.nondeg.n_range[0] > self.nondeg.n_range[1]
            || self.nondeg.d_range[0] < 2
            || self.nondeg.d_range[0] > self.nondeg.d_range[1]
        {
            return bad("nondeg ranges must be ordered with n >= 1 and d >= 2");
        }
        Ok(())
    }

    pub fn lengths(&self) -> Vec<f64> {
        if self.system.lengths.is_empty() {
            vec![PI; self.system.d]
        } else {
            self.system.lengths.clone()
        }
    }

    pub fn confinement(&self) -> ConfinementPotential {
        ConfinementPotential::sine_box(self.system.alpha, &self.lengths())
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        SystemSpec::new(self.system.n, self.system.d, self.system.delta, self.system.interaction.clone(), self.confinement())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Identifies what produced a record.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &Config) -> Self {
        Provenance { version: env!("CARGO_PKG_VERSION").to_string(), config_sha256: cfg.digest(), seed: cfg.seed }
    }
}
