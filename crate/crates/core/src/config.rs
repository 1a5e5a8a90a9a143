//! Run configuration and artifact headers.
//!
//! A [`RunConfig`] is one JSON document with sections `env`, `reward`, `ppo`,
//! `gail`, `demos`, `eval` and `teleop`. Missing keys take their defaults and
//! unknown keys are rejected. Every output artifact embeds the resolved
//! config in an [`ArtifactHeader`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demos::{Diversity, ExpertGains, DEFAULT_DEMOS};
use crate::error::{Error, Result};
use crate::evalkit::TwinConfig;
use crate::gail::GailConfig;
use crate::ppo::PpoConfig;
use crate::rewards::RewardWeights;
use crate::sim::{EpisodeConfig, StartPosition};

/// Training budget at desk scale.
pub const DESK_TIMESTEPS: usize = 200_000;
/// Training budget of the full-scale profile.
pub const PAPER_TIMESTEPS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn total_timesteps(self) -> usize {
        match self {
            Profile::Desk => DESK_TIMESTEPS,
            Profile::Paper => PAPER_TIMESTEPS,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemosConfig {
    pub count: usize,
    pub diversity: Diversity,
    /// Reject demonstrations that do not end in Success.
    pub require_success: bool,
    pub operator: String,
    /// First episode seed for scripted recordings.
    pub seed: u64,
    pub expert: ExpertGains,
}

impl Default for DemosConfig {
    fn default() -> Self {
        DemosConfig {
            count: DEFAULT_DEMOS,
            diversity: Diversity::High,
            require_success: true,
            operator: "operator".into(),
            seed: 1000,
            expert: ExpertGains::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub starts: Vec<StartPosition>,
    pub twin: TwinConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 100,
            starts: vec![StartPosition::P1, StartPosition::P3, StartPosition::P5],
            twin: TwinConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleopConfig {
    pub bind: String,
    pub port: u16,
    pub tick_hz: f64,
    /// Without fresh input for this long the session pauses.
    pub input_timeout_ms: u64,
    /// Directory of the built UI bundle; unset serves a placeholder page.
    pub static_dir: Option<String>,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        TeleopConfig {
            bind: "127.0.0.1".into(),
            port: 8008,
            tick_hz: 30.0,
            input_timeout_ms: 1000,
            static_dir: None,
        }
    }
}

impl TeleopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(Error::Config("teleop.tick_hz must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub output_dir: String,
    pub env: EpisodeConfig,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
    pub gail: GailConfig,
    pub demos: DemosConfig,
    pub eval: EvalConfig,
    pub teleop: TeleopConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_profile(Profile::Desk)
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        RunConfig {
            run_id: "run".into(),
            output_dir: "runs".into(),
            env: EpisodeConfig::default(),
            reward: RewardWeights::default(),
            ppo: PpoConfig {
                total_timesteps: profile.total_timesteps(),
                ..Default::default()
            },
            gail: GailConfig::default(),
            demos: DemosConfig::default(),
            eval: EvalConfig::default(),
            teleop: TeleopConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.reward.validate()?;
        self.ppo.validate()?;
        self.gail.validate()?;
        self.eval.twin.validate()?;
        self.teleop.validate()?;
        if self.demos.count == 0 {
            return Err(Error::Config("demos.count must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// First line (or embedded block) of every output artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format_version: u32,
    pub kind: String,
    pub sim_version: String,
    pub config: serde_json::Value,
}

impl ArtifactHeader {
    pub fn new(kind: &str, format_version: u32, config: serde_json::Value) -> Self {
        ArtifactHeader {
            format_version,
            kind: kind.to_string(),
            sim_version: crate::SIM_VERSION.to_string(),
            config,
        }
    }

    /// The header as `#`-prefixed lines for CSV preambles.
    pub fn preamble(&self) -> Vec<String> {
        vec![serde_json::to_string(self).expect("header serializes")]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.ppo.total_timesteps, DESK_TIMESTEPS);
        assert_eq!(RunConfig::for_profile(Profile::Paper).ppo.total_timesteps, PAPER_TIMESTEPS);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"ppo": {"clip": 0.3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"extra": 1}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"reward": {"lambda_steer": 0.25}}"#).unwrap();
        assert_eq!(cfg.reward.lambda_steer, 0.25);
        assert_eq!(cfg.reward.lambda_area, 1.0);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"gail": {"grad_penalty": 1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"env": {"dt": -1.0}}"#).is_err());
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
        let shipped = RunConfig::load(&path).unwrap();
        assert_eq!(shipped, RunConfig::default());
    }
}
