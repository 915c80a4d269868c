//! Pipeline configuration: a JSON file with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chartattrib_core::gateway::sha256_hex;
use chartattrib_core::localization::MappingMode;
use chartattrib_core::retrieval::{DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(PathBuf),
    Live,
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(BackendSpec::Live),
            _ => match s.strip_prefix("mock:") {
                Some(p) if !p.is_empty() => Ok(BackendSpec::Mock(PathBuf::from(p))),
                _ => Err(format!("backend must be 'mock:<script>' or 'live', got '{s}'")),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock(p) => write!(f, "mock:{}", p.display()),
            BackendSpec::Live => f.write_str("live"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: Option<BackendSpec>,
    /// Model name per agent family (`extract`, `caption`, `som`, ...).
    pub models: BTreeMap<String, String>,
    pub threshold: f64,
    pub top_k: usize,
    pub max_iterations: usize,
    pub max_repairs: usize,
    pub parallelism: usize,
    pub mapping: MappingMode,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backend: None,
            models: BTreeMap::new(),
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            max_iterations: chartattrib_core::chart2table::DEFAULT_MAX_ITERATIONS,
            max_repairs: chartattrib_core::gateway::DEFAULT_MAX_REPAIRS,
            parallelism: chartattrib_core::gateway::DEFAULT_PARALLELISM,
            mapping: MappingMode::Auto,
            cache: None,
            out: PathBuf::from("runs"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend: Option<BackendSpec>,
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub max_iterations: Option<usize>,
    pub max_repairs: Option<usize>,
    pub parallelism: Option<usize>,
    pub mapping: Option<MappingMode>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// The settings that change what a run produces. Output location, cache
/// location, backend and parallelism are excluded.
#[derive(Serialize)]
struct Semantic<'a> {
    models: &'a BTreeMap<String, String>,
    threshold: f64,
    top_k: usize,
    max_iterations: usize,
    max_repairs: usize,
    mapping: MappingMode,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::bad_file(p, e))?
            }
            None => PipelineConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.backend.is_some() {
            self.backend = o.backend;
        }
        self.threshold = o.threshold.unwrap_or(self.threshold);
        self.top_k = o.top_k.unwrap_or(self.top_k);
        self.max_iterations = o.max_iterations.unwrap_or(self.max_iterations);
        self.max_repairs = o.max_repairs.unwrap_or(self.max_repairs);
        self.parallelism = o.parallelism.unwrap_or(self.parallelism);
        self.mapping = o.mapping.unwrap_or(self.mapping);
        if o.cache.is_some() {
            self.cache = o.cache;
        }
        self.out = o.out.unwrap_or(std::mem::take(&mut self.out));
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Config(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(CliError::Config("top_k must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(CliError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let semantic = Semantic {
            models: &self.models,
            threshold: self.threshold,
            top_k: self.top_k,
            max_iterations: self.max_iterations,
            max_repairs: self.max_repairs,
            mapping: self.mapping,
        };
        sha256_hex(serde_json::to_string(&semantic).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_spec_parses() {
        assert_eq!("live".parse::<BackendSpec>().unwrap(), BackendSpec::Live);
        assert_eq!("mock:a/b.json".parse::<BackendSpec>().unwrap(), BackendSpec::Mock("a/b.json".into()));
        assert!("mock:".parse::<BackendSpec>().is_err());
        assert!("gpt".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"threshold":0.2,"top_k":5,"backend":"live"}"#).unwrap();
        let cfg = PipelineConfig::load(
            Some(&path),
            Overrides { threshold: Some(0.7), ..Overrides::default() },
        )
        .unwrap();
        assert_eq!(cfg.threshold, 0.7);
        assert_eq!(cfg.top_k, 5);
        assert_eq!(cfg.backend, Some(BackendSpec::Live));
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = |o: Overrides| PipelineConfig::load(None, o).is_err();
        assert!(bad(Overrides { threshold: Some(1.5), ..Overrides::default() }));
        assert!(bad(Overrides { parallelism: Some(0), ..Overrides::default() }));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"treshold":0.2}"#).unwrap();
        assert!(PipelineConfig::load(Some(&path), Overrides::default()).is_err());
    }

    #[test]
    fn hash_ignores_plumbing() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { out: "elsewhere".into(), parallelism: 9, cache: Some("c".into()), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = PipelineConfig { threshold: 0.5, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }
}
