//! Run configuration: a versioned JSON schema with strict key checking.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rnf_core::env::{BimodalBandit, Environment, PointReach};
use rnf_core::policy::{ConditionerConfig, PolicyKind};
use rnf_core::train::{EvalMode, TrainConfig};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_version")]
    pub version: u32,
    pub seed: u64,
    pub env: EnvSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: EnvName,
    /// Episode horizon for `point_reach`; the bandit is always one step.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_horizon() -> usize {
    100
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    BimodalBandit,
    PointReach,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: KindName,
    /// Component count for `gmm`.
    #[serde(default)]
    pub components: Option<usize>,
    /// Stability knob; required by the flow kinds.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub trunk_layers: Option<usize>,
    #[serde(default)]
    pub trunk_width: Option<usize>,
    /// Full-size trunk (5x100 with the 2x32 flow head).
    #[serde(default)]
    pub paper_shapes: bool,
    #[serde(default)]
    pub loc_spread: f64,
    #[serde(default)]
    pub scale_bias: f64,
    #[serde(default)]
    pub weight_bias: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Normal,
    Student,
    Gmm,
    Bit,
    Rnf,
    BitRnf,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub gamma: f64,
    pub lr: f64,
    pub steps: u64,
    pub rollout: usize,
    pub beta_ent: f64,
    pub beta_td: f64,
    pub value_ensemble: usize,
    pub value_optimism: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            gamma: d.gamma,
            lr: d.learning_rate,
            steps: d.total_steps,
            rollout: d.rollout_len,
            beta_ent: d.beta_ent,
            beta_td: d.beta_td,
            value_ensemble: d.value_ensemble,
            value_optimism: d.value_optimism,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    pub mode: ModeName,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { episodes: 100, mode: ModeName::Mean }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum ModeName {
    Mean,
    Sample,
}

impl From<ModeName> for EvalMode {
    fn from(m: ModeName) -> EvalMode {
        match m {
            ModeName::Mean => EvalMode::Mean,
            ModeName::Sample => EvalMode::Sample,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Strict parse with field-level error paths, then semantic validation.
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Usage(format!("config field '{}': {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Usage(format!(
                "config field 'version': expected {CONFIG_VERSION}, got {}",
                self.version
            )));
        }
        let is_flow = matches!(self.policy.kind, KindName::Rnf | KindName::BitRnf);
        match self.policy.tau {
            None if is_flow => {
                return Err(CliError::Usage(
                    "config field 'policy.tau': required for the flow kinds".into(),
                ))
            }
            Some(t) if !(t > 0.0 && t < 1.0) => {
                return Err(CliError::Usage(format!(
                    "config field 'policy.tau': must be in (0, 1), got {t}"
                )))
            }
            _ => {}
        }
        if self.policy.kind == KindName::Gmm && self.policy.components.unwrap_or(10) < 2 {
            return Err(CliError::Usage(
                "config field 'policy.components': a mixture needs at least two components".into(),
            ));
        }
        if !(self.train.gamma >= 0.0 && self.train.gamma < 1.0) {
            return Err(CliError::Usage(format!(
                "config field 'train.gamma': must be in [0, 1), got {}",
                self.train.gamma
            )));
        }
        if !(self.train.lr > 0.0) {
            return Err(CliError::Usage(format!(
                "config field 'train.lr': must be positive, got {}",
                self.train.lr
            )));
        }
        if self.train.rollout == 0 {
            return Err(CliError::Usage(
                "config field 'train.rollout': must be positive".into(),
            ));
        }
        if self.eval.episodes == 0 {
            return Err(CliError::Usage(
                "config field 'eval.episodes': must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn policy_kind(&self) -> PolicyKind {
        match self.policy.kind {
            KindName::Normal => PolicyKind::Normal,
            KindName::Student => PolicyKind::Student,
            KindName::Gmm => PolicyKind::Gmm(self.policy.components.unwrap_or(10)),
            KindName::Bit => PolicyKind::Bit,
            KindName::Rnf => PolicyKind::Rnf,
            KindName::BitRnf => PolicyKind::BitRnf,
        }
    }

    pub fn make_env(&self) -> Box<dyn Environment> {
        match self.env.name {
            EnvName::BimodalBandit => Box::new(BimodalBandit::new()),
            EnvName::PointReach => Box::new(PointReach::new(self.env.horizon)),
        }
    }

    pub fn conditioner_config(&self) -> ConditionerConfig {
        let (state_dim, action_dim) = match self.env.name {
            EnvName::BimodalBandit => (2, 1),
            EnvName::PointReach => (2, 1),
        };
        let mut cfg = ConditionerConfig::desk(self.policy_kind(), state_dim, action_dim);
        if self.policy.paper_shapes {
            cfg = cfg.paper_shapes();
        }
        if let Some(layers) = self.policy.trunk_layers {
            cfg.trunk_layers = layers;
        }
        if let Some(width) = self.policy.trunk_width {
            cfg.trunk_width = width;
        }
        cfg.tau = self.policy.tau;
        cfg.loc_spread = self.policy.loc_spread;
        cfg.scale_bias = self.policy.scale_bias;
        cfg.weight_bias = self.policy.weight_bias;
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.train.gamma,
            learning_rate: self.train.lr,
            total_steps: self.train.steps,
            rollout_len: self.train.rollout,
            beta_ent: self.train.beta_ent,
            beta_td: self.train.beta_td,
            value_ensemble: self.train.value_ensemble,
            value_optimism: self.train.value_optimism,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "seed": 7,
        "env": {"name": "bimodal_bandit"},
        "policy": {"kind": "bit_rnf", "tau": 0.8}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = Config::parse(MINIMAL).unwrap();
        assert_eq!(cfg.version, CONFIG_VERSION);
        assert_eq!(cfg.train.gamma, 0.99);
        assert_eq!(cfg.train.beta_ent, 0.015);
        assert_eq!(cfg.eval.episodes, 100);
        assert_eq!(cfg.policy_kind(), PolicyKind::BitRnf);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_path() {
        let bad = r#"{
            "seed": 7,
            "env": {"name": "bimodal_bandit"},
            "policy": {"kind": "normal", "typo_field": 1}
        }"#;
        let err = Config::parse(bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("policy"), "message was: {msg}");
        assert!(msg.contains("typo_field"), "message was: {msg}");
    }

    #[test]
    fn flow_kinds_require_tau() {
        let bad = r#"{
            "seed": 7,
            "env": {"name": "bimodal_bandit"},
            "policy": {"kind": "bit_rnf"}
        }"#;
        let err = Config::parse(bad).unwrap_err();
        assert!(format!("{err}").contains("policy.tau"));
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = Config::parse(MINIMAL).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again = Config::parse(&text).unwrap();
        assert_eq!(cfg, again);
    }
}
