//! Experiment configuration: a single TOML file with a documented schema.
//! Seeds are mandatory so every run is reproducible by construction.
//!
//! ```toml
//! [experiment]
//! allocator = "geo"        # folklore|simple|geo|flex|combined|rsum|block
//! seed = 42                # mandatory, no entropy defaults
//! steps = 100000
//! validate = "every"       # every | final
//! resolution_log2 = 40     # optional (default 40)
//! epsilon_log4 = 3         # ε = 4^-k
//!
//! [allocator]              # optional knobs
//! gamma = 0.2              # block
//! delta_ticks = 0          # rsum; 0 or absent → δ = ε
//! size_lo = 0              # block band override, ticks
//! size_hi = 0
//!
//! [workload]               # optional; defaults to the allocator's regime
//! kind = "fuzz"            # fuzz | random_item | lower_bound
//! size_lo = 1048576        # fuzz, ticks
//! size_hi = 2097151
//! target_load = 0.9
//! distribution = "uniform" # uniform | log_uniform
//! delta_ticks = 16777216   # random_item
//!
//! [output]
//! dir = "out"
//! csv = "results.csv"      # optional
//! trace = "trace.jsonl"    # optional
//! ```

use realloc_core::tick::TickConfig;
use realloc_core::workload::{SizeDist, WorkloadKind, WorkloadSpec};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidateMode {
    Every,
    Final,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub allocator: String,
    pub seed: u64,
    pub steps: u64,
    #[serde(default = "default_validate")]
    pub validate: ValidateMode,
    #[serde(default = "default_resolution")]
    pub resolution_log2: u32,
    pub epsilon_log4: u32,
}

fn default_validate() -> ValidateMode {
    ValidateMode::Every
}

fn default_resolution() -> u32 {
    40
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocatorSection {
    pub gamma: Option<f64>,
    pub delta_ticks: Option<u64>,
    pub size_lo: Option<u64>,
    pub size_hi: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub kind: String,
    pub size_lo: Option<u64>,
    pub size_hi: Option<u64>,
    pub target_load: Option<f64>,
    #[serde(default)]
    pub distribution: Option<String>,
    pub delta_ticks: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub csv: Option<String>,
    pub trace: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub allocator: AllocatorSection,
    pub workload: Option<WorkloadSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(toml::de::Error),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config io: {e}"),
            ConfigError::Parse(e) => write!(f, "config parse: {e}"),
            ConfigError::Invalid(msg) => write!(f, "config invalid: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

pub const ALLOCATOR_NAMES: [&str; 7] =
    ["folklore", "simple", "geo", "flex", "combined", "rsum", "block"];

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !ALLOCATOR_NAMES.contains(&self.experiment.allocator.as_str()) {
            return Err(ConfigError::Invalid(format!(
                "unknown allocator '{}'; expected one of {:?}",
                self.experiment.allocator, ALLOCATOR_NAMES
            )));
        }
        self.tick_config().map(|_| ())
    }

    pub fn tick_config(&self) -> Result<TickConfig, ConfigError> {
        TickConfig::pow4(self.experiment.resolution_log2, self.experiment.epsilon_log4)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The explicit workload, if the file declares one.
    pub fn workload_spec(&self, cfg: &TickConfig) -> Result<Option<WorkloadSpec>, ConfigError> {
        let Some(w) = &self.workload else { return Ok(None) };
        let kind = match w.kind.as_str() {
            "lower_bound" => WorkloadKind::LowerBound,
            "random_item" => WorkloadKind::RandomItem {
                delta_ticks: w
                    .delta_ticks
                    .ok_or_else(|| ConfigError::Invalid("random_item needs delta_ticks".into()))?,
            },
            "fuzz" => {
                let dist = match w.distribution.as_deref() {
                    None | Some("uniform") => SizeDist::Uniform,
                    Some("log_uniform") => SizeDist::LogUniform,
                    Some(other) => {
                        return Err(ConfigError::Invalid(format!("unknown distribution '{other}'")))
                    }
                };
                WorkloadKind::Fuzz {
                    size_lo: w.size_lo.ok_or_else(|| ConfigError::Invalid("fuzz needs size_lo".into()))?,
                    size_hi: w.size_hi.ok_or_else(|| ConfigError::Invalid("fuzz needs size_hi".into()))?,
                    target_load: w
                        .target_load
                        .ok_or_else(|| ConfigError::Invalid("fuzz needs target_load".into()))?,
                    dist,
                }
            }
            other => return Err(ConfigError::Invalid(format!("unknown workload kind '{other}'"))),
        };
        let _ = cfg;
        Ok(Some(WorkloadSpec { kind, num_updates: self.experiment.steps, seed: self.experiment.seed }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_str(
            r#"
            [experiment]
            allocator = "simple"
            seed = 7
            steps = 100
            epsilon_log4 = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.allocator, "simple");
        assert_eq!(cfg.experiment.validate, ValidateMode::Every);
        assert!(cfg.workload.is_none());
    }

    #[test]
    fn rejects_unknown_allocator_and_fields() {
        assert!(ExperimentConfig::from_str(
            r#"
            [experiment]
            allocator = "bogus"
            seed = 1
            steps = 1
            epsilon_log4 = 2
            "#,
        )
        .is_err());
        assert!(ExperimentConfig::from_str(
            r#"
            [experiment]
            allocator = "simple"
            seed = 1
            steps = 1
            epsilon_log4 = 2
            oops = true
            "#,
        )
        .is_err());
    }

    #[test]
    fn workload_spec_roundtrip() {
        let cfg = ExperimentConfig::from_str(
            r#"
            [experiment]
            allocator = "rsum"
            seed = 9
            steps = 500
            epsilon_log4 = 4
            [workload]
            kind = "random_item"
            delta_ticks = 4194304
            "#,
        )
        .unwrap();
        let t = cfg.tick_config().unwrap();
        let spec = cfg.workload_spec(&t).unwrap().unwrap();
        assert!(matches!(spec.kind, WorkloadKind::RandomItem { delta_ticks: 4194304 }));
        assert_eq!(spec.seed, 9);
    }
}
