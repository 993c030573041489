use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curator::DEFAULT_SUBSET_THRESHOLD;
use crate::exec::Exec;
use crate::gateway::GatewayConfig;
use crate::intake::IntakeConfig;
use crate::sync::SyncConfig;
use crate::transcript::{FillerLexicon, DEFAULT_SPLIT_MIN_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub dpi: u32,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { dpi: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationConfig {
    /// Fraction of a slide's content cells the next slide must keep to
    /// continue a progressive reveal.
    pub subset_threshold: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            subset_threshold: DEFAULT_SUBSET_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranscriptConfig {
    /// A segment crossing a slide change is split only if both sides hold at
    /// least this much speech.
    pub split_min_ms: u64,
    pub fillers: FillerLexicon,
}

impl Default for TranscriptConfig {
    fn default() -> Self {
        TranscriptConfig {
            split_min_ms: DEFAULT_SPLIT_MIN_MS,
            fillers: FillerLexicon::default(),
        }
    }
}

/// Contents of the pipeline TOML config. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub exec: Exec,
    pub intake: IntakeConfig,
    pub extract: ExtractConfig,
    pub sync: SyncConfig,
    pub curation: CurationConfig,
    pub transcript: TranscriptConfig,
    pub gateway: GatewayConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Invalid { path: String, message: String },
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Invalid {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        config.sync.check().map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&config.curation.subset_threshold) {
            return Err("curation.subset_threshold must be in [0, 1]".into());
        }
        if config.gateway.concurrency == 0 {
            return Err("gateway.concurrency must be at least 1".into());
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ProviderKind;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn sections_override_defaults() {
        let c = PipelineConfig::parse(
            "exec = \"sequential\"\n[extract]\ndpi = 72\n[gateway]\nprovider = \"mock\"\nconcurrency = 2\n[gateway.models]\ngenerate_content_report = \"big\"\n",
        )
        .unwrap();
        assert_eq!(c.exec, Exec::Sequential);
        assert_eq!(c.extract.dpi, 72);
        assert_eq!(c.gateway.provider, ProviderKind::Mock);
        assert_eq!(c.gateway.models["generate_content_report"], "big");
        assert_eq!(c.sync, SyncConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::parse("[extract]\ndpii = 72\n").is_err());
        assert!(PipelineConfig::parse("[sync]\nrate_hz = 0.0\n").is_err());
        assert!(PipelineConfig::parse("[curation]\nsubset_threshold = 1.5\n").is_err());
    }
}
