//! JSON scenario files.
//!
//! A file may name a preset and override any of its fields; without a preset
//! every model field, the initial infected and the contact matrix must be
//! given. Contact matrices come inline (`contact_matrix`, per-capita rates) or
//! from a CSV file (`contact_matrix_path`, resolved relative to the config
//! file, raw unless `contact_matrix_is_raw` is false).
//!
//! ```json
//! {
//!   "preset": "wallonia-2020",
//!   "policy": "mpc",
//!   "mpc": { "horizon": 30, "solver": { "rng_seed": 7 } }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{initial_state, ContactMatrix, EpidemicState, ModelParams};
use crate::mpc::config::{MpcConfig, SolverSettings};
use crate::scenario::contact::{load_contact_matrix, parse_contact_matrix};
use crate::strategies::PolicyKind;

pub const WALLONIA_2020: &str = "wallonia-2020";

/// Synthetic raw contact matrix shipped with the preset.
pub const SYNTHETIC_CONTACTS_CSV: &str = include_str!("../../data/synthetic_contacts_6x6.csv");

/// Age groups of the preset, youngest to oldest.
pub const WALLONIA_AGE_GROUPS: [&str; 6] = ["0-24", "25-44", "45-64", "65-74", "75-84", "85+"];

/// On-disk shape of a scenario file. Every field is optional so presets can
/// be partially overridden.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpc: Option<MpcSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_matrix_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_matrix_is_raw: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eradication_threshold: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vaccination_start_day: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
}

/// A fully resolved scenario: model, initial outbreak, policy and controller
/// settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub params: ModelParams,
    pub i0: Vec<f64>,
    pub policy: PolicyKind,
    pub mpc: MpcConfig,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// The six-group preset with the shipped synthetic contact matrix.
    pub fn wallonia_2020() -> Self {
        let population = vec![1058304.0, 915796.0, 983789.0, 384803.0, 203035.0, 99516.0];
        let contact = parse_contact_matrix(SYNTHETIC_CONTACTS_CSV.as_bytes(), true, &population)
            .expect("shipped contact matrix parses");
        ScenarioConfig {
            params: ModelParams {
                lambda: vec![0.0769924521, 0.0290873349, 0.0136872530, 0.1149749309, 0.2326289564, 0.3331837058],
                gamma_r: vec![0.9216927886, 0.7230105996, 0.5707245171, 0.8482912034, 0.8200428486, 0.6612236351],
                gamma_d: vec![0.0004407167, 0.0018303543, 0.0232746601, 0.0397484004, 0.1006921381, 0.1514435560],
                population,
                contact,
            },
            i0: vec![4.6595088243, 4.3296088874, 4.8417769521, 0.1709101349, 1.4936938584, 1.6144863665],
            policy: PolicyKind::Mpc,
            mpc: MpcConfig::with_defaults(6),
            output_dir: None,
        }
    }

    pub fn initial_state(&self) -> Result<EpidemicState> {
        initial_state(&self.params, &self.i0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.params.population.len();
        for (field, len) in [
            ("model.lambda", self.params.lambda.len()),
            ("model.gamma_r", self.params.gamma_r.len()),
            ("model.gamma_d", self.params.gamma_d.len()),
            ("model.contact_matrix", self.params.contact.n()),
            ("i0", self.i0.len()),
            ("mpc.eradication_threshold", self.mpc.eradication_threshold.len()),
        ] {
            if len != n {
                return Err(Error::validation(format!("{field} has {len} entries but model.population has {n}")));
            }
        }
        self.params.validate()?;
        self.mpc.validate(&self.params)?;
        self.initial_state()?;
        self.params.warn_on_euler_premise();
        Ok(())
    }

    /// Fully explicit file form: no preset, inline contact matrix.
    pub fn to_config_file(&self) -> ConfigFile {
        let m = &self.mpc;
        ConfigFile {
            preset: None,
            model: Some(ModelSection {
                lambda: Some(self.params.lambda.clone()),
                gamma_r: Some(self.params.gamma_r.clone()),
                gamma_d: Some(self.params.gamma_d.clone()),
                population: Some(self.params.population.clone()),
                contact_matrix: Some(self.params.contact.rows()),
                contact_matrix_path: None,
                contact_matrix_is_raw: None,
            }),
            i0: Some(self.i0.clone()),
            policy: Some(self.policy),
            mpc: Some(MpcSection {
                horizon: Some(m.horizon),
                epsilon: Some(m.epsilon),
                v_bar: Some(m.v_bar),
                eradication_threshold: Some(m.eradication_threshold.clone()),
                strategy_horizon: Some(m.strategy_horizon),
                vaccination_start_day: Some(m.vaccination_start_day),
                solver: Some(m.solver.clone()),
            }),
            output_dir: self.output_dir.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config_file()).expect("config serializes")
    }
}

/// Parses and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

/// Parses a scenario from JSON text; relative contact-matrix paths are
/// resolved against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Parse { path: PathBuf::new(), message: format!("at '{}': {}", e.path(), e.inner()) })?;
    resolve(file, base_dir)
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::validation(format!("{field} is required when no preset is given")))
}

/// Applies a file on top of its preset (if any) and validates the result.
pub fn resolve(file: ConfigFile, base_dir: &Path) -> Result<ScenarioConfig> {
    let base = match file.preset.as_deref() {
        None => None,
        Some(WALLONIA_2020) => Some(ScenarioConfig::wallonia_2020()),
        Some(other) => {
            return Err(Error::validation(format!("preset: unknown preset '{other}', expected '{WALLONIA_2020}'")))
        }
    };
    let model = file.model.unwrap_or_default();
    let pick = |v: Option<Vec<f64>>, field: &str, from: Option<&Vec<f64>>| -> Result<Vec<f64>> {
        match v {
            Some(v) => Ok(v),
            None => required(from.cloned(), field),
        }
    };
    let bp = base.as_ref().map(|b| &b.params);
    let population = pick(model.population, "model.population", bp.map(|p| &p.population))?;
    let lambda = pick(model.lambda, "model.lambda", bp.map(|p| &p.lambda))?;
    let gamma_r = pick(model.gamma_r, "model.gamma_r", bp.map(|p| &p.gamma_r))?;
    let gamma_d = pick(model.gamma_d, "model.gamma_d", bp.map(|p| &p.gamma_d))?;

    let contact = match (model.contact_matrix, model.contact_matrix_path) {
        (Some(_), Some(_)) => {
            return Err(Error::validation("model.contact_matrix and model.contact_matrix_path are mutually exclusive"))
        }
        (Some(rows), None) => {
            if model.contact_matrix_is_raw == Some(true) {
                let pop = population.clone();
                let n = rows.len();
                ContactMatrix::from_rows(rows).map(|m| ContactMatrix::from_fn(n, |k, j| m.get(k, j) / pop[j]))?
            } else {
                ContactMatrix::from_rows(rows)?
            }
        }
        (None, Some(path)) => {
            let path = if path.is_absolute() { path } else { base_dir.join(path) };
            load_contact_matrix(&path, model.contact_matrix_is_raw.unwrap_or(true), &population)?
        }
        (None, None) => match bp {
            Some(p) if p.population == population => p.contact.clone(),
            Some(_) => parse_contact_matrix(SYNTHETIC_CONTACTS_CSV.as_bytes(), true, &population)
                .map_err(|e| Error::validation(format!("model.contact_matrix: {e}")))?,
            None => {
                return Err(Error::validation(
                    "model.contact_matrix or model.contact_matrix_path is required when no preset is given",
                ))
            }
        },
    };

    let n = population.len();
    let i0 = pick(file.i0, "i0", base.as_ref().map(|b| &b.i0))?;
    let policy = file.policy.or(base.as_ref().map(|b| b.policy)).unwrap_or(PolicyKind::Mpc);
    let defaults = base.as_ref().map(|b| b.mpc.clone()).unwrap_or_else(|| MpcConfig::with_defaults(n));
    let m = file.mpc.unwrap_or_default();
    let mpc = MpcConfig {
        horizon: m.horizon.unwrap_or(defaults.horizon),
        epsilon: m.epsilon.unwrap_or(defaults.epsilon),
        v_bar: m.v_bar.unwrap_or(defaults.v_bar),
        eradication_threshold: m.eradication_threshold.unwrap_or(defaults.eradication_threshold),
        strategy_horizon: m.strategy_horizon.unwrap_or(defaults.strategy_horizon),
        vaccination_start_day: m.vaccination_start_day.unwrap_or(defaults.vaccination_start_day),
        solver: m.solver.unwrap_or(defaults.solver),
    };

    let cfg = ScenarioConfig {
        params: ModelParams { lambda, gamma_r, gamma_d, population, contact },
        i0,
        policy,
        mpc,
        output_dir: file.output_dir.or(base.and_then(|b| b.output_dir)),
    };
    cfg.validate()?;
    Ok(cfg)
}
