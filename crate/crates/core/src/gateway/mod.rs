//! Provider-independent access to multimodal models.
//!
//! A request names an instruction template and its variables, plus files to
//! attach. The gateway renders the prompt, resolves attachments through the
//! media cache, calls the provider with bounded retries for transient
//! failures, and parses the answer into the template's response type. An
//! answer that does not parse or validate is re-prompted with the errors
//! appended, a bounded number of times; after that the request fails and no
//! unvalidated output is ever returned.

pub mod cache;
pub mod mock;
pub mod provider;
pub mod template;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheError, MediaCache, MediaHandle};
pub use mock::{CannedResponse, MockProvider, MockResponses};
pub use provider::{ModelRequest, Provider, ProviderError, RawResponse, Usage};
pub use template::{vars, InstructionTemplate, TemplateError, TemplateLibrary};

use crate::model::FieldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

/// `[gateway]` section of the pipeline config, or a standalone `gateway.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    /// Base URL of the HTTP provider.
    pub endpoint: Option<String>,
    /// Environment variable holding the provider credential.
    pub api_key_env: String,
    pub default_model: String,
    /// Per-template model overrides.
    pub models: BTreeMap<String, String>,
    /// Maximum in-flight requests.
    pub concurrency: usize,
    /// Retries after a transient failure.
    pub retries: u32,
    /// Re-prompts after an answer fails validation.
    pub repair_attempts: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    pub templates_dir: Option<PathBuf>,
    /// Canned answers for the mock provider.
    pub mock_responses: Option<PathBuf>,
    pub mock_upload_latency_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            provider: ProviderKind::Mock,
            endpoint: None,
            api_key_env: "PARTITUR_API_KEY".to_string(),
            default_model: "mock-1".to_string(),
            models: BTreeMap::new(),
            concurrency: 4,
            retries: 3,
            repair_attempts: 1,
            backoff_ms: 200,
            templates_dir: None,
            mock_responses: None,
            mock_upload_latency_ms: 0,
        }
    }
}

/// A response type a template's answer is parsed into.
pub trait ResponseSchema: DeserializeOwned {
    /// Must equal the `schema` declared in the template front matter.
    const NAME: &'static str;

    fn check(&self) -> Vec<FieldError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parsed<T> {
    Valid(T),
    ParseFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse<T> {
    pub raw_text: String,
    pub parsed: Parsed<T>,
    pub usage: Option<Usage>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(
        "template {template} declares schema {declared:?} but the caller expects {expected:?}"
    )]
    SchemaMismatch {
        template: String,
        declared: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Media(#[from] CacheError),
    #[error("{template}: provider still failing after {attempts} attempts: {last}")]
    Exhausted {
        template: String,
        attempts: u32,
        last: String,
    },
    #[error("{template}: {message}")]
    Provider { template: String, message: String },
    #[error("{template}: no valid answer after {attempts} attempts: {errors}")]
    InvalidResponse {
        template: String,
        attempts: u32,
        errors: String,
    },
}

impl GatewayError {
    /// True when the provider could not be reached or kept failing, as
    /// opposed to answering with unusable output.
    pub fn is_provider_exhaustion(&self) -> bool {
        match self {
            GatewayError::Exhausted { .. } => true,
            GatewayError::Media(CacheError::Upload { .. }) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GatewayStats {
    pub requests: u64,
    pub retries: u64,
    pub repairs: u64,
    pub uploads: u64,
    pub cache_hits: u64,
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    templates: TemplateLibrary,
    cache: MediaCache,
    config: GatewayConfig,
    requests: AtomicU64,
    retries: AtomicU64,
    repairs: AtomicU64,
}

impl Gateway {
    pub fn new(
        provider: Arc<dyn Provider>,
        templates: TemplateLibrary,
        cache: MediaCache,
        config: GatewayConfig,
    ) -> Self {
        Gateway {
            provider,
            templates,
            cache,
            config,
            requests: AtomicU64::new(0),
            retries: AtomicU64::new(0),
            repairs: AtomicU64::new(0),
        }
    }

    pub fn provider(&self) -> &dyn Provider {
        &*self.provider
    }

    pub fn templates(&self) -> &TemplateLibrary {
        &self.templates
    }

    pub fn cache(&self) -> &MediaCache {
        &self.cache
    }

    pub fn concurrency(&self) -> usize {
        self.config.concurrency.max(1)
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
            repairs: self.repairs.load(Ordering::SeqCst),
            uploads: self.cache.uploads(),
            cache_hits: self.cache.hits(),
        }
    }

    pub fn model_for(&self, template: &str) -> &str {
        self.config
            .models
            .get(template)
            .unwrap_or(&self.config.default_model)
    }

    pub fn render_template(
        &self,
        name: &str,
        vars: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        self.templates.render(name, vars)
    }

    fn backoff(&self, attempt: u32) {
        let ms = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
        if ms > 0 {
            std::thread::sleep(Duration::from_millis(ms));
        }
    }

    /// Handle for `path`, uploading on first sight. Transient upload failures
    /// are retried like generation failures.
    pub fn cache_media(&self, path: &Path) -> Result<MediaHandle, GatewayError> {
        let mut attempt = 0;
        loop {
            match self.cache.cache_media(&*self.provider, path) {
                Err(CacheError::Upload {
                    source: ProviderError::Transient(msg),
                    ..
                }) if attempt < self.config.retries => {
                    log::warn!("upload of {} failed ({msg}), retrying", path.display());
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    self.backoff(attempt);
                    attempt += 1;
                }
                other => return other.map_err(GatewayError::from),
            }
        }
    }

    /// Send one request, retrying transient failures, and parse the answer.
    /// Parse and validation problems are reported in `parsed`, not as errors.
    pub fn submit<T: ResponseSchema>(
        &self,
        request: &ModelRequest,
    ) -> Result<ModelResponse<T>, GatewayError> {
        let mut attempt = 0;
        let raw = loop {
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.provider.generate(request) {
                Ok(raw) => break raw,
                Err(ProviderError::Transient(msg)) if attempt < self.config.retries => {
                    log::warn!(
                        "{}: transient failure ({msg}), retrying",
                        request.template_name
                    );
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    self.backoff(attempt);
                    attempt += 1;
                }
                Err(ProviderError::Transient(last)) => {
                    return Err(GatewayError::Exhausted {
                        template: request.template_name.clone(),
                        attempts: attempt + 1,
                        last,
                    })
                }
                Err(ProviderError::Fatal(message)) => {
                    return Err(GatewayError::Provider {
                        template: request.template_name.clone(),
                        message,
                    })
                }
            }
        };
        let parsed = match parse_response::<T>(&raw.text) {
            Ok(value) => {
                let errors = value.check();
                if errors.is_empty() {
                    Parsed::Valid(value)
                } else {
                    Parsed::ParseFailure(join(&errors))
                }
            }
            Err(message) => Parsed::ParseFailure(message),
        };
        Ok(ModelResponse {
            raw_text: raw.text,
            parsed,
            usage: raw.usage,
        })
    }

    /// Render `template`, attach `media`, submit, and return a validated
    /// answer. `extra_check` adds request-specific rules (for example that the
    /// answer refers to the slide that was asked about).
    pub fn request<T, F>(
        &self,
        template: &str,
        vars: BTreeMap<String, String>,
        media: &[PathBuf],
        extra_check: F,
    ) -> Result<T, GatewayError>
    where
        T: ResponseSchema,
        F: Fn(&T) -> Vec<FieldError>,
    {
        let tmpl = self.templates.get(template)?;
        if tmpl.expected_schema != T::NAME {
            return Err(GatewayError::SchemaMismatch {
                template: template.to_string(),
                declared: tmpl.expected_schema.clone(),
                expected: T::NAME,
            });
        }
        let prompt = tmpl.render(&vars)?;
        let handles = media
            .iter()
            .map(|p| self.cache_media(p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut request = ModelRequest {
            template_name: template.to_string(),
            rendered_prompt: prompt.clone(),
            media: handles,
            model_id: self.model_for(template).to_string(),
            vars,
        };
        let attempts = self.config.repair_attempts + 1;
        let mut last_errors = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                self.repairs.fetch_add(1, Ordering::SeqCst);
                request.rendered_prompt = format!(
                    "{prompt}\n\nYour previous answer was rejected: {last_errors}\nReply again with only a JSON object that fixes these problems.\n"
                );
            }
            let response = self.submit::<T>(&request)?;
            match response.parsed {
                Parsed::Valid(value) => {
                    let errors = extra_check(&value);
                    if errors.is_empty() {
                        return Ok(value);
                    }
                    last_errors = join(&errors);
                }
                Parsed::ParseFailure(message) => last_errors = message,
            }
            log::warn!("{template}: answer rejected: {last_errors}");
        }
        Err(GatewayError::InvalidResponse {
            template: template.to_string(),
            attempts,
            errors: last_errors,
        })
    }
}

fn join(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Locate the JSON object in a model answer (bare, fenced, or surrounded by
/// prose) and decode it.
pub fn parse_response<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let trimmed = text.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|rest| rest.trim_end().strip_suffix("```"))
        .unwrap_or(trimmed)
        .trim();
    let candidate = match (unfenced.find('{'), unfenced.rfind('}')) {
        (Some(start), Some(end)) if start < end => &unfenced[start..=end],
        _ => return Err("answer contains no JSON object".to_string()),
    };
    let mut de = serde_json::Deserializer::from_str(candidate);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            inner.to_string()
        } else {
            format!("{path}: {inner}")
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Violations;

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Answer {
        slide_index: u32,
        slide_type: String,
    }

    impl ResponseSchema for Answer {
        const NAME: &'static str = "slide_analysis";

        fn check(&self) -> Vec<FieldError> {
            let mut v = Violations::new();
            v.check(
                !self.slide_type.is_empty(),
                "slide_type",
                "must not be empty",
            );
            v.into_vec()
        }
    }

    fn gateway(mock: Arc<MockProvider>, dir: &Path) -> Gateway {
        let config = GatewayConfig {
            backoff_ms: 0,
            ..GatewayConfig::default()
        };
        Gateway::new(
            mock,
            TemplateLibrary::builtin(),
            MediaCache::open(&dir.join("media_cache.json")),
            config,
        )
    }

    fn classify_vars(index: u32) -> BTreeMap<String, String> {
        vars([
            ("slide_index", index.to_string()),
            ("slide_count", "5".to_string()),
            ("deck_context", "Title: T".to_string()),
        ])
    }

    fn canned(response: serde_json::Value) -> Arc<MockProvider> {
        Arc::new(MockProvider::with_responses(MockResponses {
            responses: vec![CannedResponse {
                template: "classify_slide_type".into(),
                when: BTreeMap::new(),
                response,
            }],
        }))
    }

    #[test]
    fn parses_fenced_and_chatty_answers() {
        let a: Answer =
            parse_response("```json\n{\"slide_index\": 3, \"slide_type\": \"data\"}\n```").unwrap();
        assert_eq!(a.slide_index, 3);
        let b: Answer = parse_response(
            "Here you go: {\"slide_index\": 1, \"slide_type\": \"title\"} Hope it helps",
        )
        .unwrap();
        assert_eq!(b.slide_type, "title");
        let err =
            parse_response::<Answer>("{\"slide_index\": 1, \"slide_type\": \"x\", \"extra\": 1}")
                .unwrap_err();
        assert!(err.contains("extra"), "{err}");
        assert!(parse_response::<Answer>("no json").is_err());
    }

    #[test]
    fn transient_failures_are_retried_then_exhausted() {
        let dir = tempfile::tempdir().unwrap();
        let mock = canned(serde_json::json!({"slide_index": 2, "slide_type": "data"}));
        let gw = gateway(mock.clone(), dir.path());
        mock.fail_next_generations(3);
        let a: Answer = gw
            .request("classify_slide_type", classify_vars(2), &[], |_| vec![])
            .unwrap();
        assert_eq!(a.slide_type, "data");
        assert_eq!(gw.stats().retries, 3);

        mock.fail_next_generations(4);
        let err = gw
            .request::<Answer, _>("classify_slide_type", classify_vars(2), &[], |_| vec![])
            .unwrap_err();
        assert!(err.is_provider_exhaustion(), "{err}");
    }

    #[test]
    fn one_repair_then_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mock = canned(serde_json::json!({"slide_index": 2, "slide_type": "data"}));
        let gw = gateway(mock.clone(), dir.path());
        mock.malformed_next(1);
        assert!(gw
            .request::<Answer, _>("classify_slide_type", classify_vars(2), &[], |_| vec![])
            .is_ok());
        assert_eq!(gw.stats().repairs, 1);

        mock.malformed_next(2);
        let err = gw
            .request::<Answer, _>("classify_slide_type", classify_vars(2), &[], |_| vec![])
            .unwrap_err();
        assert!(
            matches!(err, GatewayError::InvalidResponse { attempts: 2, .. }),
            "{err}"
        );
        assert!(!err.is_provider_exhaustion());
    }

    #[test]
    fn extra_check_failures_trigger_repair() {
        let dir = tempfile::tempdir().unwrap();
        let mock = canned(serde_json::json!({"slide_index": 9, "slide_type": "data"}));
        let gw = gateway(mock.clone(), dir.path());
        let err = gw
            .request::<Answer, _>("classify_slide_type", classify_vars(2), &[], |a| {
                let mut v = Violations::new();
                v.check(a.slide_index == 2, "slide_index", "must be 2");
                v.into_vec()
            })
            .unwrap_err();
        assert!(err.to_string().contains("slide_index: must be 2"), "{err}");
        assert_eq!(mock.generation_count(), 2);
    }

    #[test]
    fn schema_name_must_match_template() {
        #[derive(Debug, Deserialize)]
        struct Other {}
        impl ResponseSchema for Other {
            const NAME: &'static str = "content_report";
            fn check(&self) -> Vec<FieldError> {
                vec![]
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let gw = gateway(Arc::new(MockProvider::new()), dir.path());
        assert!(matches!(
            gw.request::<Other, _>("classify_slide_type", classify_vars(1), &[], |_| vec![]),
            Err(GatewayError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn missing_template_var_is_reported_before_any_call() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockProvider::new());
        let gw = gateway(mock.clone(), dir.path());
        let err = gw
            .request::<Answer, _>(
                "classify_slide_type",
                vars([("slide_index", "1")]),
                &[],
                |_| vec![],
            )
            .unwrap_err();
        assert!(err.to_string().contains("deck_context"), "{err}");
        assert_eq!(mock.generation_count(), 0);
    }

    #[test]
    fn media_is_uploaded_once_across_requests() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("slide.png");
        std::fs::write(&file, b"not really a png").unwrap();
        let mock = canned(serde_json::json!({"slide_index": 1, "slide_type": "data"}));
        let gw = gateway(mock.clone(), dir.path());
        for _ in 0..3 {
            let _: Answer = gw
                .request(
                    "classify_slide_type",
                    classify_vars(1),
                    &[file.clone()],
                    |_| vec![],
                )
                .unwrap();
        }
        assert_eq!(mock.upload_count(), 1);
        assert_eq!(gw.stats().cache_hits, 2);
    }
}
