use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::DataSpec;
use super::experiments::ScalingConfig;
use crate::analyticity::BootstrapConfig;
use crate::duhamel::Mode;
use crate::error::{NskqError, Result};
use crate::params::{ModelParams, SolverConfig};
use crate::spectral::LatticeSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Simulate,
    Radius,
    Bootstrap,
    Verify,
}

/// Checks available to `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyCheck {
    LemmaConv,
    Beta,
    Decay,
    Semigroup,
    Nonlinear,
    SmallData,
    Reference,
    RadiusGrowth,
    Scaling,
    Inequalities,
}

impl VerifyCheck {
    pub const ALL: [VerifyCheck; 10] = [
        Self::LemmaConv,
        Self::Beta,
        Self::Decay,
        Self::Semigroup,
        Self::Nonlinear,
        Self::SmallData,
        Self::Reference,
        Self::RadiusGrowth,
        Self::Scaling,
        Self::Inequalities,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }
}

impl FromStr for VerifyCheck {
    type Err = NskqError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| NskqError::InvalidConfig(format!("unknown check `{s}`")))
    }
}

/// Settings of the radius measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusSettings {
    /// Sample times; empty means ten times `T·k/10`.
    pub times: Vec<f64>,
    /// Initial radius for the growth check; taken from an `exp_tail`
    /// generator when absent.
    pub sigma0: Option<f64>,
    pub margin: f64,
    /// Exponent `r` of the `|ξ|^r` weight in the fit; `d - 1 + 2/p` when absent.
    pub weight: Option<f64>,
}

impl Default for RadiusSettings {
    fn default() -> Self {
        Self { times: Vec::new(), sigma0: None, margin: 0.8, weight: None }
    }
}

/// Sample sizes of the `verify` checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    /// `|ξ|` values of the convolution constancy check.
    pub xi_magnitudes: Vec<f64>,
    pub semigroup_samples: usize,
    pub nonlinear_seeds: usize,
    pub inequality_samples: usize,
    /// Linear part of the small-data run as a fraction of `R`.
    pub small_data_fraction: f64,
    pub decay_y_max: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            xi_magnitudes: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            semigroup_samples: 1000,
            nonlinear_seeds: 100,
            inequality_samples: 100_000,
            small_data_fraction: 0.01,
            decay_y_max: 100.0,
        }
    }
}

/// Everything a run needs; JSON with every field optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    /// Required when `mode` is `verify`.
    pub check: Option<VerifyCheck>,
    pub seed: u64,
    pub params: ModelParams,
    pub lattice: LatticeSpec,
    pub solver: SolverConfig,
    pub picard_mode: Mode,
    pub data: DataSpec,
    /// Random pairs for the bilinear constants; 0 skips the measurement.
    pub bilinear_samples: usize,
    pub radius: RadiusSettings,
    pub bootstrap: BootstrapConfig,
    pub scaling: ScalingConfig,
    pub checks: CheckSettings,
    /// States nearest to these times go to `snapshots/`, after the final state.
    pub snapshot_times: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Simulate,
            check: None,
            seed: 0,
            params: ModelParams::default(),
            lattice: LatticeSpec::new(2, 32, 2.0 * std::f64::consts::PI),
            solver: SolverConfig::default(),
            picard_mode: Mode::Plain,
            data: DataSpec::Zero,
            bilinear_samples: 0,
            radius: RadiusSettings::default(),
            bootstrap: BootstrapConfig::default(),
            scaling: ScalingConfig::default(),
            checks: CheckSettings::default(),
            snapshot_times: Vec::new(),
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(data) = value.get("data") {
            super::data::DataSpec::from_value(data.clone())?;
        }
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.build()?;
        self.solver.validate(self.lattice.dim)?;
        self.bootstrap.validate()?;
        if self.mode == RunMode::Verify && self.check.is_none() {
            return Err(NskqError::InvalidConfig("verify mode needs a check".into()));
        }
        if !(self.radius.margin > 0.0) {
            return Err(NskqError::InvalidConfig("radius margin must be positive".into()));
        }
        if self.radius.times.iter().chain(&self.snapshot_times).any(|&t| !(t > 0.0 && t <= self.solver.horizon)) {
            return Err(NskqError::InvalidConfig("sample times must lie in (0, horizon]".into()));
        }
        Ok(())
    }

    /// Radius sample times after defaults.
    pub fn radius_times(&self) -> Vec<f64> {
        if self.radius.times.is_empty() {
            (1..=10).map(|k| self.solver.horizon * k as f64 / 10.0).collect()
        } else {
            self.radius.times.clone()
        }
    }

    pub fn radius_weight(&self) -> f64 {
        self.radius.weight.unwrap_or(self.lattice.dim as f64 - 1.0 + 2.0 / self.solver.p)
    }

    pub fn sigma0(&self) -> Option<f64> {
        self.radius.sigma0.or(match self.data {
            DataSpec::ExpTail { sigma0, .. } => Some(sigma0),
            _ => None,
        })
    }
}
