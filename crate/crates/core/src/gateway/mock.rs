//! Deterministic offline provider.
//!
//! Answers come from canned responses (matched on template name and a subset
//! of request variables) or, failing that, from built-in rules that depend
//! only on the request. Faults can be injected to exercise retries and repair.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::provider::{ModelRequest, Provider, ProviderError, RawResponse, Usage};
use crate::fingerprint::fingerprint_image;
use crate::model::Digest;

pub const MOCK_PROVIDER: &str = "mock";
const BLANK_PREFIX: &str = "mock://blank/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CannedResponse {
    pub template: String,
    /// Request variables that must all match.
    #[serde(default)]
    pub when: BTreeMap<String, String>,
    /// Returned pretty-printed as the response text.
    pub response: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockResponses {
    pub responses: Vec<CannedResponse>,
}

#[derive(Debug, Default)]
pub struct MockProvider {
    canned: Vec<CannedResponse>,
    upload_latency: Duration,
    uploads: AtomicU64,
    generations: AtomicU64,
    transient_remaining: AtomicU32,
    malformed_remaining: AtomicU32,
    upload_failures_remaining: AtomicU32,
}

fn take_one(counter: &AtomicU32) -> bool {
    counter
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_responses(responses: MockResponses) -> Self {
        MockProvider {
            canned: responses.responses,
            ..Self::default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let responses: MockResponses =
            serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self::with_responses(responses))
    }

    /// Simulated transfer time per upload.
    pub fn with_upload_latency(mut self, latency: Duration) -> Self {
        self.upload_latency = latency;
        self
    }

    /// The next `n` generate calls fail with a transient error.
    pub fn fail_next_generations(&self, n: u32) {
        self.transient_remaining.store(n, Ordering::SeqCst);
    }

    /// The next `n` generate calls return text that is not JSON.
    pub fn malformed_next(&self, n: u32) {
        self.malformed_remaining.store(n, Ordering::SeqCst);
    }

    pub fn fail_next_uploads(&self, n: u32) {
        self.upload_failures_remaining.store(n, Ordering::SeqCst);
    }

    pub fn upload_count(&self) -> u64 {
        self.uploads.load(Ordering::SeqCst)
    }

    pub fn generation_count(&self) -> u64 {
        self.generations.load(Ordering::SeqCst)
    }

    fn canned_for(&self, request: &ModelRequest) -> Option<&Value> {
        self.canned
            .iter()
            .find(|c| {
                c.template == request.template_name
                    && c.when.iter().all(|(k, v)| request.vars.get(k) == Some(v))
            })
            .map(|c| &c.response)
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        MOCK_PROVIDER
    }

    fn upload(&self, path: &Path, digest: &Digest) -> Result<String, ProviderError> {
        if take_one(&self.upload_failures_remaining) {
            return Err(ProviderError::Transient("injected upload failure".into()));
        }
        if !self.upload_latency.is_zero() {
            std::thread::sleep(self.upload_latency);
        }
        self.uploads.fetch_add(1, Ordering::SeqCst);
        // Recording blankness in the reference lets later requests see it
        // without re-reading the file.
        let blank = fingerprint_image(path)
            .is_ok_and(|fp| fp.nonblank_cells() == 0 && fp.bits.count_ones() == 0);
        let kind = if blank { "blank" } else { "media" };
        Ok(format!("mock://{kind}/{}", digest.short()))
    }

    fn generate(&self, request: &ModelRequest) -> Result<RawResponse, ProviderError> {
        self.generations.fetch_add(1, Ordering::SeqCst);
        if take_one(&self.transient_remaining) {
            return Err(ProviderError::Transient(
                "injected transient failure".into(),
            ));
        }
        let usage = Some(Usage {
            input_tokens: request.rendered_prompt.split_whitespace().count() as u64,
            output_tokens: 0,
        });
        if take_one(&self.malformed_remaining) {
            return Ok(RawResponse {
                text: "Sure! Here is the analysis you asked for.".into(),
                usage,
            });
        }
        let value = match self.canned_for(request) {
            Some(v) => v.clone(),
            None => builtin_response(request)?,
        };
        let text = serde_json::to_string_pretty(&value).expect("json value serializes");
        let usage = usage.map(|u| Usage {
            output_tokens: text.split_whitespace().count() as u64,
            ..u
        });
        Ok(RawResponse { text, usage })
    }
}

fn var<'a>(request: &'a ModelRequest, name: &str) -> &'a str {
    request.vars.get(name).map(String::as_str).unwrap_or("")
}

fn builtin_response(request: &ModelRequest) -> Result<Value, ProviderError> {
    match request.template_name.as_str() {
        "classify_slide_type" => {
            let index: u32 = var(request, "slide_index").parse().unwrap_or(0);
            let blank = request
                .media
                .iter()
                .any(|m| m.provider_ref.starts_with(BLANK_PREFIX));
            let (slide_type, summary, significance) = if blank {
                (
                    "other",
                    "Blank slide without visible content".to_string(),
                    "low",
                )
            } else if index == 1 {
                ("title", "Title slide of the talk".to_string(), "medium")
            } else {
                (
                    "conceptual",
                    format!("Visual content of slide {index}"),
                    "medium",
                )
            };
            Ok(json!({
                "slide_index": index,
                "slide_type": slide_type,
                "content_summary": summary,
                "comprehensive_analysis": format!("Slide {index} of {} analysed without a vision model.", var(request, "slide_count")),
                "academic_significance": significance,
            }))
        }
        "transcribe_video" => Ok(json!({ "segments": [] })),
        "generate_content_report" => {
            let blocks: Vec<Value> =
                serde_json::from_str(var(request, "storyboard_json")).unwrap_or_default();
            let mut sections = Vec::new();
            let mut coverage = serde_json::Map::new();
            for (i, block) in blocks.iter().enumerate() {
                let number = i + 1;
                let block_no = block
                    .get("block")
                    .and_then(Value::as_u64)
                    .unwrap_or(number as u64);
                let file = block
                    .pointer("/slide/file")
                    .and_then(Value::as_str)
                    .unwrap_or("slide");
                let speech = block
                    .get("speech")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .trim();
                let text = if speech.is_empty() {
                    format!("Material presented with {file}.")
                } else {
                    speech.to_string()
                };
                sections.push(json!({
                    "number": number,
                    "title": format!("Part {number}"),
                    "outline": [format!("Block {block_no}")],
                    "text": text,
                    "source_blocks": [block_no],
                    "transformation_type": "synthesis",
                }));
                coverage.insert(block_no.to_string(), json!({ "sections": [number] }));
            }
            Ok(json!({
                "overview": format!("A chapter derived from {} storyboard blocks of \"{}\".", blocks.len(), var(request, "title")),
                "sections": sections,
                "block_coverage": coverage,
            }))
        }
        other => Err(ProviderError::Fatal(format!(
            "mock provider has no rule for template {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::template::vars;

    fn request(template: &str, v: BTreeMap<String, String>) -> ModelRequest {
        ModelRequest {
            template_name: template.into(),
            rendered_prompt: "prompt".into(),
            media: Vec::new(),
            model_id: "mock-1".into(),
            vars: v,
        }
    }

    #[test]
    fn canned_response_matches_on_vars() {
        let mock = MockProvider::with_responses(MockResponses {
            responses: vec![CannedResponse {
                template: "classify_slide_type".into(),
                when: vars([("slide_index", "3")]),
                response: json!({"slide_type": "technical_architecture"}),
            }],
        });
        let hit = mock
            .generate(&request(
                "classify_slide_type",
                vars([("slide_index", "3")]),
            ))
            .unwrap();
        assert!(hit.text.contains("technical_architecture"));
        let miss = mock
            .generate(&request(
                "classify_slide_type",
                vars([("slide_index", "4")]),
            ))
            .unwrap();
        assert!(miss.text.contains("conceptual"));
    }

    #[test]
    fn deterministic_and_faults_count_down() {
        let mock = MockProvider::new();
        let r = request(
            "classify_slide_type",
            vars([("slide_index", "1"), ("slide_count", "2")]),
        );
        assert_eq!(mock.generate(&r).unwrap(), mock.generate(&r).unwrap());
        mock.fail_next_generations(1);
        assert!(matches!(
            mock.generate(&r),
            Err(ProviderError::Transient(_))
        ));
        mock.malformed_next(1);
        assert!(serde_json::from_str::<Value>(&mock.generate(&r).unwrap().text).is_err());
        assert!(mock.generate(&r).unwrap().text.contains("\"title\""));
        assert_eq!(mock.generation_count(), 5);
    }

    #[test]
    fn unknown_template_is_fatal() {
        let mock = MockProvider::new();
        assert!(matches!(
            mock.generate(&request("nope", BTreeMap::new())),
            Err(ProviderError::Fatal(_))
        ));
    }

    #[test]
    fn report_rule_covers_every_block() {
        let storyboard = json!([{"block": 1, "slide": {"file": "a.png"}, "speech": "hello"}, {"block": 2, "slide": {"file": "b.png"}, "speech": ""}]);
        let r = request(
            "generate_content_report",
            vars([
                ("storyboard_json", storyboard.to_string()),
                ("title", "T".to_string()),
            ]),
        );
        let v: Value =
            serde_json::from_str(&MockProvider::new().generate(&r).unwrap().text).unwrap();
        assert_eq!(v["sections"].as_array().unwrap().len(), 2);
        assert_eq!(v["block_coverage"]["2"]["sections"], json!([2]));
        assert_eq!(v["sections"][1]["text"], "Material presented with b.png.");
    }
}
