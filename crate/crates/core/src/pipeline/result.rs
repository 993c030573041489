use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stage::Stage;
use crate::model::{Artifact, Digest, FieldError, Violations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Intake checks failed; nothing downstream ran.
    Blocked,
    /// A stage failed or its artifact did not pass the gate.
    Gate,
    /// The model provider kept failing after all retries.
    ProviderExhausted,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Blocked => 2,
            FailureKind::Gate => 3,
            FailureKind::ProviderExhausted => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaStats {
    pub uploads: u64,
    pub cache_hits: u64,
    pub requests: u64,
    pub retries: u64,
    pub repairs: u64,
}

/// Outcome of one run, stored as `run.json` next to (not inside) the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineResult {
    pub presentation_id: String,
    pub status: RunStatus,
    pub failed_stage: Option<Stage>,
    pub failure: Option<Failure>,
    /// Wall-clock milliseconds per executed stage; reused stages record 0.
    pub stage_timings: BTreeMap<Stage, u64>,
    pub total_ms: u64,
    /// Digest of every artifact that passed its gate, keyed by file name.
    pub artifact_digests: BTreeMap<String, Digest>,
    /// Stages whose artifact was taken from an earlier run.
    pub reused_stages: Vec<Stage>,
    pub media: MediaStats,
}

impl PipelineResult {
    pub fn exit_code(&self) -> i32 {
        match (&self.status, &self.failure) {
            (RunStatus::Complete, _) => 0,
            (RunStatus::Failed, Some(f)) => f.kind.exit_code(),
            (RunStatus::Failed, None) => FailureKind::Gate.exit_code(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }
}

impl Artifact for PipelineResult {
    const KIND: &'static str = "pipeline_result";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        let complete = self.status == RunStatus::Complete;
        v.check(
            complete == self.failed_stage.is_none(),
            "failed_stage",
            "must be set exactly when the run failed",
        );
        v.check(
            complete == self.failure.is_none(),
            "failure",
            "must be set exactly when the run failed",
        );
        v.check(
            self.total_ms == self.stage_timings.values().sum::<u64>(),
            "total_ms",
            "must equal the sum of stage timings",
        );
        if complete {
            v.check(
                self.stage_timings.len() == Stage::ALL.len(),
                "stage_timings",
                "must cover every stage",
            );
            v.check(
                self.artifact_digests.len() == Stage::ALL.len(),
                "artifact_digests",
                "must cover every stage",
            );
        }
        v.into_vec()
    }
}
