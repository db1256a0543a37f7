//! Layered configuration: built-in defaults, then the TOML file, then `--set`
//! overrides, resolved into one [`Settings`] value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sdm_core::bounds::{ImprovementConfig, InstanceConfig};
use sdm_core::data::CircleConfig;
use sdm_gan::{CloneConfig, GeneratorKind, PointMass, TrainerConfig};
use sdm_nn::EnsembleConfig;
use toml::{Table, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Tabular,
    PointMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataSettings {
    pub kind: DataKind,
    pub n_transitions: usize,
    /// MDP JSON for tabular data; empty draws a random MDP.
    pub mdp: String,
    /// Policy JSON for tabular data; empty draws a random policy.
    pub policy: String,
    pub n_states: usize,
    pub n_actions: usize,
    /// Written as gzip when true.
    pub gzip: bool,
}

impl Default for GenDataSettings {
    fn default() -> Self {
        Self {
            kind: DataKind::PointMass,
            n_transitions: 100_000,
            mdp: String::new(),
            policy: String::new(),
            n_states: 5,
            n_actions: 2,
            gzip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSettings {
    pub mdp: String,
    /// Empty means the uniform policy.
    pub policy: String,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            mdp: "configs/two_state.json".into(),
            policy: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub instances: u64,
    pub instance: InstanceConfig,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            instances: 100,
            instance: InstanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub data: String,
    /// Additive smoothing of the tabular MLE.
    pub smoothing: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            data: String::new(),
            smoothing: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// Fit a dynamics ensemble on the data.
    Ensemble,
    /// Roll out on the true point-mass dynamics.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    /// Dataset path; empty generates `gen_data.n_transitions` point-mass steps.
    pub data: String,
    pub model: ModelChoice,
    /// Tabular data only: the true MDP, used for diagnostics and the exact model.
    pub mdp: String,
    pub improvement: ImprovementConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            data: String::new(),
            model: ModelChoice::Ensemble,
            mdp: String::new(),
            improvement: ImprovementConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloneSettings {
    pub kinds: Vec<GeneratorKind>,
    /// Radius tolerance of the near-circle fraction.
    pub near_circle_tol: f64,
    /// Samples per test input written for plotting.
    pub plot_draws: usize,
}

impl Default for CloneSettings {
    fn default() -> Self {
        Self {
            kinds: GeneratorKind::ALL.to_vec(),
            near_circle_tol: 0.2,
            plot_draws: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    Actor,
    Behavior,
    Expert,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub policy: EvalPolicy,
    /// Actor checkpoint for `policy = "actor"`.
    pub actor: String,
    pub episodes: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            policy: EvalPolicy::Actor,
            actor: String::new(),
            episodes: 10,
        }
    }
}

/// Every tunable value of every command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub gen_data: GenDataSettings,
    pub env: PointMass,
    pub circle: CircleConfig,
    pub solve: SolveSettings,
    pub verify: VerifySettings,
    pub fit_model: FitSettings,
    pub ensemble: EnsembleConfig,
    pub trainer: TrainerConfig,
    pub train: TrainSettings,
    pub clone: CloneConfig,
    pub clone_circle: CloneSettings,
    pub eval: EvalSettings,
}

fn config_error(key: impl Into<String>, message: impl ToString) -> Error {
    Error::Config {
        key: key.into(),
        message: message.to_string(),
    }
}

/// Overlays `top` onto `base`; nested tables merge, everything else replaces.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b.c=value`. The value is read as a TOML literal, or as a bare string if it
/// does not parse as one.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| config_error(text, "override must look like key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(|p| p.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(config_error(key, "empty key segment"));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for (i, p) in parents.iter().enumerate() {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(config_error(path[..=i].join("."), "is not a table")),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl Settings {
    /// Defaults, then `file`, then `overrides`, in that order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = Table::try_from(Settings::default()).map_err(|e| config_error("<defaults>", e))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let parsed: Table = toml::from_str(&text).map_err(|e| config_error(path.display().to_string(), e))?;
            merge(&mut table, parsed);
        }
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut table, &path, value)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: Table) -> Result<Self> {
        serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            // name the offending key itself rather than its parent table
            let key = match message.split('`').nth(1) {
                Some(field) if message.starts_with("unknown field") && !path.ends_with(field) => {
                    if path == "." {
                        field.to_string()
                    } else {
                        format!("{path}.{field}")
                    }
                }
                _ => path,
            };
            config_error(key, message.lines().next().unwrap_or_default())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialise")
    }
}
