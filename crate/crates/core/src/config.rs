//! Run configuration, loaded from TOML files or built-in presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{linearize, ArzParams, LinearCoeffs, SteadyState};
use crate::numerics::Grid1D;
use crate::plant::{InitialCondition, PlantMode};
use crate::triggers::{TriggerKind, TriggerParams};

const PRESET_PAPER: &str = include_str!("../presets/paper60min.toml");
const PRESET_COARSE: &str = include_str!("../presets/ci-coarse.toml");

/// Names accepted by [`SimConfig::preset`].
pub const PRESETS: [&str; 2] = ["paper60min", "ci-coarse"];

/// What drives the outlet speed limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Controller {
    /// No actuation, `U ≡ 0`.
    OpenLoop,
    /// The input is refreshed at every plant step.
    Continuous,
    Event(TriggerKind),
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OpenLoop => f.write_str("open-loop"),
            Self::Continuous => f.write_str("continuous"),
            Self::Event(k) => k.fmt(f),
        }
    }
}

impl FromStr for Controller {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open-loop" | "openloop" => Ok(Self::OpenLoop),
            "continuous" => Ok(Self::Continuous),
            _ => s.parse().map(Self::Event),
        }
    }
}

impl TryFrom<String> for Controller {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Controller> for String {
    fn from(c: Controller) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vf: f64,
    pub rho_m: f64,
    pub tau: f64,
    pub gamma: f64,
    pub c0: f64,
    pub ell: f64,
    pub rho_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Node spacing [km].
    pub dx: f64,
    /// Plant time step [h].
    pub dt: f64,
    /// Simulated horizon [h].
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub mode: PlantMode,
    pub amplitude: f64,
    pub half_waves: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub controller: Controller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Plant steps between stored samples.
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Kernel table CSV reused across runs when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub name: String,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub plant: PlantConfig,
    pub control: ControlConfig,
    pub trigger: TriggerParams,
    pub output: OutputConfig,
}

impl SimConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "paper60min" => PRESET_PAPER,
            "ci-coarse" => PRESET_COARSE,
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?}; available: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Self::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A preset name or a path to a TOML file.
    pub fn load(spec: &str) -> Result<Self> {
        if PRESETS.contains(&spec) {
            return Self::preset(spec);
        }
        let text = std::fs::read_to_string(Path::new(spec))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("configuration: {e}")))
    }

    pub fn params(&self) -> ArzParams {
        let m = &self.model;
        ArzParams {
            vf: m.vf,
            rho_m: m.rho_m,
            tau: m.tau,
            gamma: m.gamma,
            c0: m.c0,
            ell: m.ell,
        }
    }

    pub fn steady(&self) -> Result<SteadyState> {
        SteadyState::from_density(&self.params(), self.model.rho_star)
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::with_spacing(self.model.ell, self.grid.dx)
    }

    pub fn coeffs(&self) -> Result<LinearCoeffs> {
        linearize(&self.params(), &self.steady()?, self.grid()?)
    }

    pub fn initial_condition(&self) -> InitialCondition {
        InitialCondition {
            amplitude: self.plant.amplitude,
            half_waves: self.plant.half_waves,
        }
    }

    /// Number of plant steps covering the horizon.
    pub fn steps(&self) -> u64 {
        (self.grid.horizon / self.grid.dt).round() as u64
    }

    /// Same configuration with another controller and resource parameter.
    pub fn with_controller(&self, controller: Controller, c: f64) -> Self {
        let mut cfg = self.clone();
        cfg.control.controller = controller;
        cfg.trigger.c = c;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.trigger.validate()?;
        let g = &self.grid;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", g.horizon)));
        }
        if !(g.dt > 0.0 && g.dt <= g.horizon) {
            return Err(Error::Config(format!("time step {} must lie in (0, horizon]", g.dt)));
        }
        let ratio = g.horizon / g.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(Error::Config(format!(
                "horizon {} is not a whole number of steps dt = {}",
                g.horizon, g.dt
            )));
        }
        let hr = self.trigger.h / g.dt;
        if hr.round() < 1.0 || (hr - hr.round()).abs() > 1e-9 * hr {
            return Err(Error::Config(format!(
                "sampling period h = {} is not a whole number of steps dt = {}",
                self.trigger.h, g.dt
            )));
        }
        if self.output.stride == 0 || !self.steps().is_multiple_of(self.output.stride as u64) {
            return Err(Error::Config(format!(
                "output stride {} must be positive and divide the {} plant steps",
                self.output.stride,
                self.steps()
            )));
        }
        if !(self.plant.amplitude >= 0.0 && self.plant.amplitude < 1.0) {
            return Err(Error::Config(format!(
                "initial amplitude must lie in [0, 1), got {}",
                self.plant.amplitude
            )));
        }
        let grid = self.grid()?;
        let coeffs = linearize(&self.params(), &self.steady()?, grid)?;
        let (a, b) = crate::plant::cfl_numbers(&coeffs, g.dt);
        if a.max(b) > 1.0 {
            return Err(Error::Config(format!(
                "CFL condition violated: v* dt/dx = {a:.4}, lambda2 dt/dx = {b:.4}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        let p = SimConfig::preset("paper60min").unwrap();
        assert_eq!(p.grid.dx, 0.005);
        assert_eq!(p.steps(), 250_000);
        assert_eq!(p.grid().unwrap().len(), 201);
        let c = SimConfig::preset("ci-coarse").unwrap();
        assert_eq!((c.grid.dx, c.grid.dt, c.grid.horizon), (0.01, 8e-6, 0.25));
        assert!(SimConfig::preset("nope").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let p = SimConfig::preset("paper60min").unwrap();
        let back = SimConfig::from_toml(&p.to_toml().unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn controllers_parse() {
        assert_eq!("open-loop".parse::<Controller>().unwrap(), Controller::OpenLoop);
        assert_eq!("Continuous".parse::<Controller>().unwrap(), Controller::Continuous);
        assert_eq!("P-PETC".parse::<Controller>().unwrap().to_string(), "P-PETC");
        assert!("sometimes".parse::<Controller>().is_err());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let base = SimConfig::preset("ci-coarse").unwrap();
        let mut cfl = base.clone();
        cfl.grid.dt = 1e-3;
        cfl.trigger.h = 1e-3;
        cfl.grid.horizon = 0.25;
        assert!(matches!(cfl.validate(), Err(Error::Config(m)) if m.contains("CFL")));
        let mut h = base.clone();
        h.trigger.h = 1.2e-5;
        assert!(h.validate().is_err());
        let mut t = base.clone();
        t.grid.horizon = -1.0;
        assert!(t.validate().is_err());
        let unknown = PRESET_COARSE.replace("[output]", "[output]\nbogus = 1");
        assert!(matches!(SimConfig::from_toml(&unknown), Err(Error::Parse(_))));
    }
}
