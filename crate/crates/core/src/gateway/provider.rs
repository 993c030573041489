use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::MediaHandle;
use crate::model::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Worth retrying: rate limits, timeouts, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub template_name: String,
    pub rendered_prompt: String,
    pub media: Vec<MediaHandle>,
    pub model_id: String,
    /// Variables the prompt was rendered from. Providers that answer from
    /// canned data key on these; real providers ignore them.
    pub vars: BTreeMap<String, String>,
}

/// A multimodal model backend: media upload plus one-shot generation.
pub trait Provider: Send + Sync {
    /// Stable name; media cache entries are scoped by it.
    fn name(&self) -> &str;

    /// Upload a file and return the provider's reference to it.
    fn upload(&self, path: &Path, digest: &Digest) -> Result<String, ProviderError>;

    fn generate(&self, request: &ModelRequest) -> Result<RawResponse, ProviderError>;
}
