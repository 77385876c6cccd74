//! Configuration file for the command-line tool (TOML or JSON).
//!
//! Every command-line flag has a field here; flags given on the command line
//! take precedence.
//!
//! ```toml
//! seed = 42
//! concurrency = 8
//! mock_llm = "fixtures/"
//!
//! [pipeline.generation]
//! base_url = "http://localhost:8000/v1"
//! model = "my-model"
//!
//! [serve]
//! port = 8080
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub mock_llm: Option<PathBuf>,
    pub json_errors: Option<bool>,
    pub ontology: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub filter_rules: Option<PathBuf>,
    pub redaction_rules: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub translate: TranslateConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslateConfig {
    pub url: Option<String>,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub target_lang: String,
    pub passthrough: bool,
    /// JSON object mapping source text to its translation.
    pub mock: Option<PathBuf>,
    pub concurrency: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        Self {
            url: None,
            token_env: "MAILTOD_MT_KEY".into(),
            target_lang: "en".into(),
            passthrough: false,
            mock: None,
            concurrency: 4,
            max_retries: 3,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("review-data"),
            dataset: None,
            corpus: None,
            static_dir: None,
        }
    }
}

impl AppConfig {
    /// Reads `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        };
        cfg.pipeline.resolve();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(
            &t,
            "seed = 7\n[pipeline]\nconcurrency = 2\n[pipeline.annotation]\nmodel = \"ann\"\n[serve]\nport = 9000\n",
        )
        .unwrap();
        let a = AppConfig::load(&t).unwrap();
        assert_eq!(a.seed, Some(7));
        assert_eq!(a.pipeline.concurrency, 2);
        assert_eq!(a.pipeline.annotation.model, "ann");
        assert_eq!(a.pipeline.annotation.temperature, Some(0.0));
        assert_eq!(a.pipeline.generation.temperature, Some(0.7));
        let j = dir.path().join("c.json");
        std::fs::write(&j, serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(AppConfig::load(&j).unwrap(), a);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "sed = 7\n").unwrap();
        assert!(AppConfig::load(&t).is_err());
    }
}
