//! Experiment configuration as a TOML document.
//!
//! Every section and key is optional; omitted values take the reference
//! deployment defaults. Unknown keys are rejected.
//!
//! ```toml
//! [network]     # n_nodes, side_length, bs_x, bs_y, e0, k_fraction, seed
//! [radio]       # e_elec, e_fs, e_amp, e_da, b_data, b_ctrl, ch_tx_model
//! [weights]     # alpha, beta, gamma
//! [simulation]  # control, anneal = { iterations, initial_temp_ratio, cooling }
//! [dqn]         # backend, learning_rate, discount, epsilon_*, batch_size, ...
//! [surrogate]   # hidden, dropout, epochs, batch_size, *_learning_rate, ...
//! [paths]       # out_dir, policy, ch_model, assign_model
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::MilpWeights;
use crate::dqn::DqnConfig;
use crate::error::{Error, Result};
use crate::leach_c::AnnealSchedule;
use crate::network::NetworkConfig;
use crate::radio::RadioParams;
use crate::sim::ControlModel;
use crate::surrogate::SurrogateConfig;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub control: ControlModel,
    pub anneal: AnnealSchedule,
}

/// Artifact locations. Relative model paths resolve against the output
/// directory; unset ones take the names the training commands write.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out_dir: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub ch_model: Option<PathBuf>,
    pub assign_model: Option<PathBuf>,
}

pub const POLICY_FILE: &str = "policy.json";
pub const CH_MODEL_FILE: &str = "surrogate-ch.json";
pub const ASSIGN_MODEL_FILE: &str = "surrogate-assign.json";

impl Paths {
    fn resolve(out_dir: &Path, given: &Option<PathBuf>, default: &str) -> PathBuf {
        match given {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => out_dir.join(p),
            None => out_dir.join(default),
        }
    }

    pub fn policy(&self, out_dir: &Path) -> PathBuf {
        Self::resolve(out_dir, &self.policy, POLICY_FILE)
    }

    pub fn ch_model(&self, out_dir: &Path) -> PathBuf {
        Self::resolve(out_dir, &self.ch_model, CH_MODEL_FILE)
    }

    pub fn assign_model(&self, out_dir: &Path) -> PathBuf {
        Self::resolve(out_dir, &self.assign_model, ASSIGN_MODEL_FILE)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub network: NetworkConfig,
    pub radio: RadioParams,
    pub weights: MilpWeights,
    pub simulation: SimulationConfig,
    pub dqn: DqnConfig,
    pub surrogate: SurrogateConfig,
    pub paths: Paths,
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the first `key = ...` assignment in `text`, if any.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl Config {
    /// Parses and validates; `origin` names the source in diagnostics,
    /// which carry `origin:line:` prefixes.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of(text, s.start));
            Error::Config(format!("{origin}:{line}: {}", e.message()))
        })?;
        cfg.validate().map_err(|e| match &e {
            Error::InvalidParam { name, .. } => {
                let line = line_of_key(text, name).unwrap_or(1);
                Error::Config(format!("{origin}:{line}: {e}"))
            }
            _ => Error::Config(format!("{origin}: {e}")),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.radio.validate()?;
        self.weights.validate()?;
        self.dqn.validate()?;
        self.surrogate.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_setup() {
        let c = Config::parse("", "t").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.network.n_nodes, 100);
        assert_eq!(c.weights, MilpWeights::REFERENCE);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = Config::parse("[network]\nseed = 7\n\n[weights]\nbeta = 3.0\n", "t").unwrap();
        assert_eq!(c.network.seed, 7);
        assert_eq!(c.network.n_nodes, 100);
        assert_eq!(c.weights.beta, 3.0);
        assert_eq!(c.weights.alpha, 54.83);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let err = Config::parse("[network]\nseed = 1\nn_nodes = = 3\n", "cfg.toml").unwrap_err().to_string();
        assert!(err.contains("cfg.toml:3:"), "{err}");
    }

    #[test]
    fn unknown_keys_name_the_line() {
        let err = Config::parse("[radio]\n\ne_elecc = 1.0\n", "cfg.toml").unwrap_err().to_string();
        assert!(err.contains("cfg.toml:3:"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_line() {
        let err = Config::parse("[network]\nn_nodes = 100\nk_fraction = 1.5\n", "cfg.toml").unwrap_err().to_string();
        assert!(err.contains("cfg.toml:3:") && err.contains("k_fraction"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = Config::default();
        c.network.seed = 9;
        c.simulation.control = ControlModel::Full;
        c.paths.policy = Some("p.json".into());
        assert_eq!(Config::parse(&c.to_toml(), "t").unwrap(), c);
    }

    #[test]
    fn model_paths_resolve_against_out_dir() {
        let p = Paths { policy: Some("nets/q.json".into()), ..Default::default() };
        let out = Path::new("/tmp/out");
        assert_eq!(p.policy(out), Path::new("/tmp/out/nets/q.json"));
        assert_eq!(p.ch_model(out), Path::new("/tmp/out/surrogate-ch.json"));
    }
}
