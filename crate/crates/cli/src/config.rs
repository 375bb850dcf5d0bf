//! One config file for every subcommand, with flag overrides layered on top
//! and a content hash for run-report provenance.

use std::path::Path;

use kiln_detect::PipelineConfig;
use kiln_model::TrainConfig;
use kiln_synth::SynthSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// POI-ingestion settings for `graph-build`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphBuildConfig {
    /// Out-degree of the nearest-neighbor edge set.
    pub k: usize,
    /// CSV columns read as node features, in order.
    pub feature_columns: Vec<String>,
    /// CSV column read as the class label, when present.
    pub label_column: Option<String>,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig {
            k: 8,
            feature_columns: Vec::new(),
            label_column: None,
        }
    }
}

/// Matching settings for `eval-detections`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { iou_threshold: 0.3 }
    }
}

/// Union of all per-module configs. Any section may be omitted; unknown keys
/// anywhere are rejected so typos never silently fall back to defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub detect: PipelineConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub graph: GraphBuildConfig,
    pub eval: EvalConfig,
}

/// Load the config file, or defaults when none is given.
pub fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// Hex SHA-256 of a resolved config's canonical JSON, embedded in run
/// reports so outputs are traceable to the exact settings that made them.
pub fn config_sha256<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serialization cannot fail");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_path_gives_defaults() {
        let cfg = load_run_config(None).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.detect.percentile, 80.0);
        assert_eq!(cfg.train.epochs, 300);
        assert_eq!(cfg.eval.iou_threshold, 0.3);
        assert_eq!(cfg.graph.k, 8);
    }

    #[test]
    fn partial_sections_parse_and_fill() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"detect": {"percentile": 50.0}, "eval": {"iou_threshold": 0.5}}"#)
            .unwrap();
        let cfg = load_run_config(Some(&p)).unwrap();
        assert_eq!(cfg.detect.percentile, 50.0);
        assert_eq!(cfg.detect.bins, 256, "untouched fields keep defaults");
        assert_eq!(cfg.eval.iou_threshold, 0.5);
    }

    #[test]
    fn unknown_keys_rejected_at_both_levels() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            r#"{"detecc": {}}"#,
            r#"{"detect": {"percentil": 80.0}}"#,
            r#"{"train": {"learning": 0.1}}"#,
        ] {
            let p = dir.path().join("bad.json");
            std::fs::write(&p, body).unwrap();
            assert!(
                matches!(load_run_config(Some(&p)), Err(CliError::Usage(_))),
                "{body} should be rejected"
            );
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(config_sha256(&a), config_sha256(&b));
        b.detect.percentile = 79.0;
        assert_ne!(config_sha256(&a), config_sha256(&b));
        assert_eq!(config_sha256(&a).len(), 64);
    }
}
