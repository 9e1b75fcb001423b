//! Experiment configuration: a flat TOML table.
//!
//! Energies (`omega_a`, `hopping`, `delta`, `g`) are given in one declared
//! base unit, either the hopping `J` or the qubit splitting `Δ`; the unit's
//! own entry must then be 1. Times (`dt`, `t_max`, `fit_t0`) are always in
//! units of `1/J`. `emitter` is the chain site `x` in 1D and the
//! corner-frame diagonal position `n` otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::GeometryKind;
use crate::polaron::Frame;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset '{0}' (available: {1})")]
    UnknownPreset(String, String),
    #[error("override '{0}' is not of the form key=value")]
    BadOverride(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    J,
    Delta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    Chain,
    Rhombus,
    Cube,
    Periodic,
}

fn default_name() -> String {
    "run".into()
}
fn default_frame() -> Frame {
    Frame::Rwa
}
fn default_snapshot_every() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-9
}
fn default_half_width() -> usize {
    2
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub geometry: GeometryName,
    pub extent: usize,
    /// Periodic geometry only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub units: Units,
    pub omega_a: f64,
    pub hopping: f64,
    pub delta: f64,
    pub g: f64,
    pub emitter: i64,
    #[serde(default = "default_frame")]
    pub frame: Frame,
    pub dt: f64,
    pub t_max: f64,
    /// Start of the decay-fit window; defaults to `t_max / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_t0: Option<f64>,
    /// Chain-oracle modes; 0 disables the comparison.
    #[serde(default)]
    pub chain_modes: usize,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Write a density map for every snapshot.
    #[serde(default)]
    pub write_snapshots: bool,
    /// Eigen-analysis of the Hamiltonian (bound-state candidates).
    #[serde(default = "yes")]
    pub spectrum: bool,
    /// Per-step propagation error.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_half_width")]
    pub directionality_half_width: usize,
    /// Every run is deterministic; kept so manifests state it explicitly.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

/// Shipped presets by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig3-strong", include_str!("../presets/fig3-strong.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Result<&'static str, ConfigError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::UnknownPreset(name.into(), preset_names().join(", ")))
}

/// Parses `key=value`; the value is read as a TOML value, falling back to a
/// bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::BadOverride(s.into()))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::BadOverride(s.into()));
    }
    let v = v.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.into()));
    Ok((k.into(), value))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        Self::from_toml_str(preset_text(name)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Returns a copy with `key` set; used by sweeps.
    pub fn with_value(&self, key: &str, value: toml::Value) -> Result<Self, ConfigError> {
        let text = self.to_toml_string();
        Self::from_toml_with_overrides(&text, &[(key.into(), value)])
    }

    pub fn geometry_kind(&self) -> GeometryKind {
        match self.geometry {
            GeometryName::Chain => GeometryKind::Chain1D { n: self.extent },
            GeometryName::Rhombus => GeometryKind::Rhombus2D { half_diagonal: self.extent },
            GeometryName::Cube => GeometryKind::Corner3D { edge: self.extent },
            GeometryName::Periodic => GeometryKind::Periodic { dimension: self.dimension.unwrap_or(0), extent: self.extent },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        match self.units {
            Units::J if self.hopping != 1.0 => return bad(format!("units = \"j\" requires hopping = 1, got {}", self.hopping)),
            Units::Delta if self.delta != 1.0 => return bad(format!("units = \"delta\" requires delta = 1, got {}", self.delta)),
            _ => {}
        }
        if self.geometry == GeometryName::Periodic && self.dimension.is_none() {
            return bad("periodic geometry needs a dimension".into());
        }
        if self.geometry != GeometryName::Periodic && self.dimension.is_some() {
            return bad("dimension is only used by the periodic geometry".into());
        }
        self.geometry_kind().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, v) in [("omega_a", self.omega_a), ("dt", self.dt), ("t_max", self.t_max), ("tol", self.tol)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return bad("hopping must be positive".into());
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad("delta must be positive".into());
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return bad("g must be non-negative".into());
        }
        if !(self.dt > 0.0) || self.t_max < self.dt {
            return bad(format!("need dt > 0 and t_max >= dt, got dt = {} and t_max = {}", self.dt, self.t_max));
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if let Some(t0) = self.fit_t0 {
            if !(0.0..self.t_max).contains(&t0) {
                return bad(format!("fit_t0 = {t0} outside [0, t_max)"));
            }
        }
        Ok(())
    }

    fn scaled(&self, units: Units, s: f64) -> Self {
        let mut c = self.clone();
        c.units = units;
        c.omega_a *= s;
        c.delta *= s;
        c.g *= s;
        c.hopping *= s;
        match units {
            Units::J => c.hopping = 1.0,
            Units::Delta => c.delta = 1.0,
        }
        c
    }

    /// Same physics with energies in units of `J`.
    pub fn in_j_units(&self) -> Self {
        if self.units == Units::J {
            return self.clone();
        }
        self.scaled(Units::J, 1.0 / self.hopping)
    }

    /// Same physics with energies in units of `Δ`.
    pub fn in_delta_units(&self) -> Self {
        if self.units == Units::Delta {
            return self.clone();
        }
        self.scaled(Units::Delta, 1.0 / self.delta)
    }

    /// `(ω_a, Δ, g)` in units of `J`.
    pub fn energies_in_j(&self) -> (f64, f64, f64) {
        let c = self.in_j_units();
        (c.omega_a, c.delta, c.g)
    }

    pub fn fit_start(&self) -> f64 {
        self.fit_t0.unwrap_or(0.25 * self.t_max)
    }
}
