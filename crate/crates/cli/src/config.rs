//! Run configuration: one strict JSON document per run.

use std::path::{Path, PathBuf};

use emskin::atomdb::{generate_synthetic_db, load_db, AtomDatabase, IncidenceKey, SubstrateModel, DEFAULT_PRINT_STEP_M};
use emskin::scenario::{EmsGrid, IncidentWave, ObservationSpec, Scenario, SPEED_OF_LIGHT};
use emskin::synthesis::SynthesisConfig;
use emskin::targets::TargetSpec;
use emskin::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub atoms: AtomSource,
    pub target: TargetSpec,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    #[serde(default)]
    pub theta_inc_deg: f64,
    #[serde(default)]
    pub phi_inc_deg: f64,
    /// Complex (re, im) TE and TM amplitudes of the incident field.
    #[serde(default = "default_te")]
    pub e_te: [f64; 2],
    #[serde(default)]
    pub e_tm: [f64; 2],
    pub grid: GridConfig,
    pub observation: ObservationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub p: usize,
    pub q: usize,
    /// Cell side in metres; half a wavelength when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_size_m: Option<f64>,
    pub center_height_m: f64,
}

/// Exactly one of `substrate`, `model` or `database`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<SubstrateModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database: Option<String>,
    #[serde(default = "default_step")]
    pub print_step_m: f64,
}

fn default_frequency() -> f64 {
    5.5e9
}

fn default_te() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_step() -> f64 {
    DEFAULT_PRINT_STEP_M
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::input(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let chosen = [
            self.atoms.substrate.is_some(),
            self.atoms.model.is_some(),
            self.atoms.database.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if chosen != 1 {
            return Err(CliError::input("atoms: set exactly one of substrate, model, database"));
        }
        if let Some(name) = &self.atoms.substrate {
            if SubstrateModel::preset(name).is_none() {
                return Err(CliError::input(format!("atoms: unknown substrate preset {name:?}")));
            }
        }
        self.synthesis.validate().map_err(|e| CliError::input(format!("synthesis: {e}")))?;
        self.wave()?;
        self.grid()?;
        Ok(())
    }

    pub fn wave(&self) -> Result<IncidentWave, CliError> {
        let s = &self.scenario;
        IncidentWave::new(
            s.frequency_hz,
            s.theta_inc_deg.to_radians(),
            s.phi_inc_deg.to_radians(),
            Complex64::new(s.e_te[0], s.e_te[1]),
            Complex64::new(s.e_tm[0], s.e_tm[1]),
        )
        .map_err(|e| CliError::input(format!("scenario: {e}")))
    }

    pub fn cell_size(&self) -> f64 {
        self.scenario
            .grid
            .cell_size_m
            .unwrap_or(SPEED_OF_LIGHT / self.scenario.frequency_hz / 2.0)
    }

    pub fn grid(&self) -> Result<EmsGrid, CliError> {
        let g = &self.scenario.grid;
        EmsGrid::new(g.p, g.q, self.cell_size(), g.center_height_m).map_err(|e| CliError::input(format!("scenario: {e}")))
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Scenario::new(self.wave()?, self.grid()?, &self.scenario.observation).map_err(|e| CliError::input(format!("scenario: {e}")))
    }

    /// Relative paths in the config resolve against this directory.
    pub fn resolve(&self, base: Option<&Path>, file: &str) -> PathBuf {
        let p = Path::new(file);
        match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn database(&self, base: Option<&Path>) -> Result<AtomDatabase, CliError> {
        let wave = self.wave()?;
        let key = IncidenceKey::from(&wave);
        let cell = self.cell_size();
        let model = match (&self.atoms.substrate, &self.atoms.model, &self.atoms.database) {
            (Some(name), _, _) => SubstrateModel::preset(name).expect("validated preset"),
            (_, Some(m), _) => m.clone(),
            (_, _, Some(path)) => {
                return load_db(self.resolve(base, path), cell, key).map_err(|e| CliError::input(format!("atomdb: {e}")));
            }
            _ => unreachable!("validated atom source"),
        };
        generate_synthetic_db(&model, cell, self.atoms.print_step_m, key).map_err(|e| CliError::input(format!("atomdb: {e}")))
    }

    /// Lowercase hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
