//! Scenario files: one TOML document binding geometry, game, solver and
//! simulator settings. Every section and field is optional and falls back to
//! the TelosB defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::co::{Family, IterOptions};
use crate::coop::gamma_grid;
use crate::error::{Error, Result};
use crate::geo::{GeoScenario, RadioParams};
use crate::netsim::{InterWake, NetSimConfig};
use crate::po::Variant;
use crate::single::GameConfig;
use crate::types::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    #[serde(flatten)]
    pub iter: IterOptions,
    pub family: Family,
    pub variant: Variant,
    /// Weights of the cooperative sweep.
    pub gammas: Vec<f64>,
    /// Rewards closer than this are merged when the model is built.
    pub merge_tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            iter: IterOptions::default(),
            family: Family::Sc,
            variant: Variant::Nabla,
            gammas: gamma_grid(19),
            merge_tolerance: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Forwarder separations in meters.
    pub thetas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { thetas: vec![0.0, 5.0, 10.0] }
    }
}

/// Simulator settings; radio parameters come from the geometry section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSimSection {
    pub area_m: f64,
    pub node_count: usize,
    pub source_position: Point,
    pub sink_position: Point,
    pub duty_period_s: f64,
    pub source_packet_count: usize,
    pub eta: f64,
    pub interwake: InterWake,
    pub max_fallback_periods: u32,
    pub horizon_s: f64,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for NetSimSection {
    fn default() -> Self {
        let d = NetSimConfig::default();
        NetSimSection {
            area_m: d.area_m,
            node_count: d.node_count,
            source_position: d.source_position,
            sink_position: d.sink_position,
            duty_period_s: d.duty_period_s,
            source_packet_count: d.source_packet_count,
            eta: d.eta,
            interwake: d.interwake,
            max_fallback_periods: d.max_fallback_periods,
            horizon_s: d.horizon_s,
            lambdas: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            seeds: (1..=10).collect(),
        }
    }
}

impl NetSimSection {
    pub fn config(&self, radio: &RadioParams, lambda: f64, seed: u64) -> NetSimConfig {
        NetSimConfig {
            area_m: self.area_m,
            node_count: self.node_count,
            source_position: self.source_position,
            sink_position: self.sink_position,
            duty_period_s: self.duty_period_s,
            packet_rate_hz: lambda,
            source_packet_count: self.source_packet_count,
            eta: self.eta,
            radio: radio.clone(),
            rng_seed: seed,
            interwake: self.interwake,
            max_fallback_periods: self.max_fallback_periods,
            horizon_s: self.horizon_s,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub geo: GeoScenario,
    pub game: GameConfig,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub netsim: NetSimSection,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: ScenarioFile = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        reject_unknown_keys(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geo.validate()?;
        self.game.validate()?;
        self.solver.iter.validate()?;
        if self.solver.gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return Err(Error::InvalidConfig("gammas must lie strictly between 0 and 1".into()));
        }
        if !(self.solver.merge_tolerance.is_finite() && self.solver.merge_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("merge_tolerance must be nonnegative".into()));
        }
        if self.sweep.thetas.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidConfig("thetas must be nonnegative".into()));
        }
        let ns = &self.netsim;
        if ns.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig("lambdas must be nonnegative".into()));
        }
        ns.config(&self.geo.radio, 0.0, 0).validate()
    }

    /// The geometry with the forwarders `theta` apart.
    pub fn geo_at(&self, theta: f64) -> GeoScenario {
        self.geo.clone().with_separation(theta)
    }
}

/// Flattened sections swallow unknown keys during deserialization, so each
/// section's keys are checked against the serialized defaults.
fn reject_unknown_keys(text: &str) -> Result<()> {
    let doc: toml::Table = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let known = toml::Table::try_from(ScenarioFile::default()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for (section, value) in &doc {
        let (Some(fields), Some(allowed)) = (value.as_table(), known.get(section).and_then(|v| v.as_table())) else {
            continue;
        };
        if let Some(key) = fields.keys().find(|k| !allowed.contains_key(*k)) {
            return Err(Error::InvalidConfig(format!("unknown key `{key}` in [{section}]")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let s = ScenarioFile::from_toml("").unwrap();
        assert_eq!(s, ScenarioFile::default());
        assert_eq!(s.game, GameConfig::telosb());
        assert_eq!(s.geo, GeoScenario::telosb(0.0));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let s = ScenarioFile::from_toml("[game]\ntradeoff_1 = 50.0\n[geo]\ntradeoff_a = 1.0\n").unwrap();
        assert_eq!(s.game.tradeoff_1, 50.0);
        assert_eq!(s.game.tradeoff_2, 100.0);
        assert_eq!(s.geo.radio.tradeoff_a, 1.0);
        assert_eq!(s.geo.radio.range_m, 80.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let s = ScenarioFile::default();
        assert_eq!(ScenarioFile::from_toml(&s.to_toml().unwrap()).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioFile::from_toml("[game]\nbogus = 1\n").is_err());
        assert!(ScenarioFile::from_toml("[game]\nwin_prob_1 = 1.5\n").is_err());
        assert!(ScenarioFile::from_toml("[netsim]\nnode_count = 0\n").is_err());
        assert!(ScenarioFile::from_toml("[solver]\ngammas = [0.0, 0.5]\n").is_err());
        assert!(ScenarioFile::from_toml("[geo]\nbogus = 1\n").is_err());
        assert!(ScenarioFile::from_toml("[solver]\nbogus = 1\n").is_err());
    }
}
