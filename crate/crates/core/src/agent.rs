//! Shared plumbing for the agents: prompt construction from the catalog,
//! per-agent model overrides and the common error type.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, ImageRef, Prompt, Structured, DEFAULT_MAX_REPAIRS};
use crate::prompts::{self, PromptError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("detector failure: {0}")]
    Detector(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl AgentError {
    /// Failures attributable to model output or transport, which callers may
    /// absorb with a fallback. Replay misses and configuration errors are not.
    pub fn is_model_failure(&self) -> bool {
        matches!(self, AgentError::Gateway(e) if e.is_model_failure())
    }
}

/// Gateway handle plus agent-level settings.
#[derive(Clone, Copy)]
pub struct Llm<'a> {
    pub gateway: &'a Gateway,
    pub max_repairs: usize,
    /// Model override per agent, keyed by template family (`extract`,
    /// `caption`, `prefilter`, ...).
    pub models: &'a BTreeMap<String, String>,
}

static NO_MODELS: BTreeMap<String, String> = BTreeMap::new();

impl<'a> Llm<'a> {
    pub fn new(gateway: &'a Gateway) -> Self {
        Self { gateway, max_repairs: DEFAULT_MAX_REPAIRS, models: &NO_MODELS }
    }

    pub fn with_models(mut self, models: &'a BTreeMap<String, String>) -> Self {
        self.models = models;
        self
    }

    pub fn with_max_repairs(mut self, max_repairs: usize) -> Self {
        self.max_repairs = max_repairs;
        self
    }

    /// Prompt from a catalog template: system part plus one text part.
    pub fn prompt(&self, template: &str, values: &[(&str, &str)]) -> Result<Prompt, AgentError> {
        let r = prompts::render(template, values)?;
        let family = template.split('.').next().unwrap_or(template);
        Ok(Prompt::new(r.system).text(r.user).model(self.models.get(family).cloned()))
    }

    pub fn structured<T: DeserializeOwned>(&self, prompt: &Prompt, schema: &Value) -> Result<Structured<T>, AgentError> {
        Ok(self.gateway.complete_structured(prompt, schema, self.max_repairs)?)
    }

    pub fn vision(&self, prompt: Prompt, images: &[&ImageRef]) -> Prompt {
        images.iter().fold(prompt, |p, img| p.image((*img).clone()))
    }
}
