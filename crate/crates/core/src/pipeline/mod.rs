//! Stage orchestration: ordered execution, a validation gate after every
//! stage, resumable artifacts and an all-or-nothing output bundle.

pub mod config;
pub mod qa;
pub mod result;
pub mod stage;
pub mod workspace;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ConfigError, CurationConfig, ExtractConfig, PipelineConfig, TranscriptConfig};
pub use qa::{QaCheck, QualityReport};
pub use result::{Failure, FailureKind, MediaStats, PipelineResult, RunStatus};
pub use stage::Stage;
pub use workspace::{LockError, RunLock, Workspace, CONFIG_FILE, MOCK_RESPONSES_FILE};

use crate::analysis::{analyze_slides, SlideAnalyses};
use crate::curator::{curate, load_overrides, CurationPlan};
use crate::extract::{extract_slides, SlideSet};
use crate::fingerprint::fingerprint_image;
use crate::gateway::{
    Gateway, GatewayError, MediaCache, MockProvider, Provider, ProviderKind, TemplateLibrary,
};
use crate::intake::{load_manifest, validate_inputs, ValidationReport};
use crate::model::{
    read_artifact, write_artifact, write_atomic, Artifact, ArtifactError, Digest,
    PresentationManifest, QualityMetricsReport,
};
use crate::render::{render_document, RenderInputs, RenderRecord, DOCUMENT_FILE};
use crate::storyboard::{build_storyboard, Storyboard};
use crate::sync::{synchronize, TransitionMap};
use crate::synthesis::{generate_content_report, validate_report, ContentReport, SynthesisError};
use crate::transcript::{build_transcript, transcribe, Transcript, TranscriptError};
use workspace::{copy_tree, remove_dir_if_exists};

/// Environment variable read by [`Fault::from_env`]: `crash:<stage>` or `corrupt:<stage>`.
pub const FAULT_ENV: &str = "PARTITUR_FAULT";

/// Injected failure, for exercising gates and atomicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Abort the process after the stage has done its work but before its
    /// artifact is written.
    CrashDuring(Stage),
    /// Write an unparseable artifact in place of the stage's output.
    CorruptArtifact(Stage),
}

impl Fault {
    pub fn parse(text: &str) -> Result<Fault, String> {
        let (kind, stage) = text.split_once(':').ok_or_else(|| {
            format!("fault {text:?} must look like crash:<stage> or corrupt:<stage>")
        })?;
        let stage: Stage = stage.parse()?;
        match kind {
            "crash" => Ok(Fault::CrashDuring(stage)),
            "corrupt" => Ok(Fault::CorruptArtifact(stage)),
            other => Err(format!("unknown fault kind {other:?}")),
        }
    }

    pub fn from_env() -> Result<Option<Fault>, String> {
        match std::env::var(FAULT_ENV) {
            Ok(v) if !v.is_empty() => Fault::parse(&v).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Config file; defaults to `work/<ID>/config.toml` when that exists.
    pub config: Option<PathBuf>,
    /// Use the mock provider regardless of the configured one.
    pub mock: bool,
    /// Reuse artifacts from an earlier run that still pass their gates.
    pub resume: bool,
    pub fault: Option<Fault>,
    /// Provider to use instead of the configured one.
    pub provider: Option<Arc<dyn Provider>>,
}

impl std::fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOptions")
            .field("config", &self.config)
            .field("mock", &self.mock)
            .field("resume", &self.resume)
            .field("fault", &self.fault)
            .field(
                "provider",
                &self.provider.as_ref().map(|p| p.name().to_string()),
            )
            .finish()
    }
}

/// Problems that prevent a run from starting or a command from answering.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no manifest at {0}")]
    MissingManifest(PathBuf),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no finished run for {0}")]
    NoRun(String),
    #[error("run record {path} is unreadable: {source}")]
    RunRecord {
        path: PathBuf,
        source: ArtifactError,
    },
    #[error("stage {stage} failed: {failure}")]
    Stage { stage: Stage, failure: StageFailure },
}

impl PipelineError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { failure, .. } => failure.kind.exit_code(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct StageFailure {
    pub kind: FailureKind,
    pub message: String,
}

impl StageFailure {
    fn gate(message: impl Into<String>) -> Self {
        StageFailure {
            kind: FailureKind::Gate,
            message: message.into(),
        }
    }
}

impl From<GatewayError> for StageFailure {
    fn from(e: GatewayError) -> Self {
        let kind = if e.is_provider_exhaustion() {
            FailureKind::ProviderExhausted
        } else {
            FailureKind::Gate
        };
        StageFailure {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<TranscriptError> for StageFailure {
    fn from(e: TranscriptError) -> Self {
        match e {
            TranscriptError::Gateway(g) => g.into(),
            other => StageFailure::gate(other.to_string()),
        }
    }
}

impl From<SynthesisError> for StageFailure {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Gateway(g) => g.into(),
            other => StageFailure::gate(other.to_string()),
        }
    }
}

fn gate_err(e: impl std::fmt::Display) -> StageFailure {
    StageFailure::gate(e.to_string())
}

/// Output of [`run_stage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub artifact: PathBuf,
    pub digest: Digest,
    pub elapsed_ms: u64,
}

/// Answer of [`report`]: the last run plus the quality metrics of its QA stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub result: PipelineResult,
    pub quality: QualityMetricsReport,
}

fn load_config(ws: &Workspace, options: &RunOptions) -> Result<PipelineConfig, PipelineError> {
    match &options.config {
        Some(path) => Ok(PipelineConfig::load(path)?),
        None if ws.config().exists() => Ok(PipelineConfig::load(&ws.config())?),
        None => Ok(PipelineConfig::default()),
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Everything a stage needs, with the gateway created on first use.
struct Runner<'a> {
    ws: &'a Workspace,
    config: PipelineConfig,
    options: &'a RunOptions,
    gateway: Option<Gateway>,
}

impl<'a> Runner<'a> {
    fn new(ws: &'a Workspace, options: &'a RunOptions) -> Result<Self, PipelineError> {
        if !ws.manifest().is_file() {
            return Err(PipelineError::MissingManifest(ws.manifest()));
        }
        Ok(Runner {
            ws,
            config: load_config(ws, options)?,
            options,
            gateway: None,
        })
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        self.ws.root().join(path)
    }

    fn gateway(&mut self) -> Result<&Gateway, StageFailure> {
        if self.gateway.is_none() {
            let gw_config = &self.config.gateway;
            let provider: Arc<dyn Provider> = match &self.options.provider {
                Some(p) => p.clone(),
                None if self.options.mock || gw_config.provider == ProviderKind::Mock => {
                    let file = gw_config
                        .mock_responses
                        .as_deref()
                        .map(|p| self.resolve(p))
                        .unwrap_or_else(|| self.ws.mock_responses());
                    let mock = if file.exists() {
                        MockProvider::from_file(&file).map_err(StageFailure::gate)?
                    } else {
                        MockProvider::new()
                    };
                    Arc::new(mock.with_upload_latency(Duration::from_millis(gw_config.mock_upload_latency_ms)))
                }
                None => {
                    return Err(StageFailure::gate(
                        "the http provider is not available in this build; pass --mock or set gateway.provider = \"mock\"",
                    ))
                }
            };
            let templates = match &gw_config.templates_dir {
                Some(dir) => {
                    TemplateLibrary::with_overrides(&self.resolve(dir)).map_err(gate_err)?
                }
                None => TemplateLibrary::builtin(),
            };
            let cache = MediaCache::open(&self.ws.media_cache());
            self.gateway = Some(Gateway::new(provider, templates, cache, gw_config.clone()));
        }
        Ok(self.gateway.as_ref().expect("gateway was just created"))
    }

    fn media(&self) -> MediaStats {
        self.gateway
            .as_ref()
            .map(|g| {
                let s = g.stats();
                MediaStats {
                    uploads: s.uploads,
                    cache_hits: s.cache_hits,
                    requests: s.requests,
                    retries: s.retries,
                    repairs: s.repairs,
                }
            })
            .unwrap_or_default()
    }

    fn manifest(&self) -> Result<PresentationManifest, StageFailure> {
        load_manifest(&self.ws.manifest()).map_err(gate_err)
    }

    fn load<A: Artifact>(&self, stage: Stage) -> Result<A, StageFailure> {
        let path = self.ws.artifact(stage.artifact_file());
        if !path.exists() {
            return Err(StageFailure::gate(format!(
                "missing upstream artifact {}",
                stage.artifact_file()
            )));
        }
        read_artifact(&path)
            .map_err(|e| StageFailure::gate(format!("{}: {e}", stage.artifact_file())))
    }

    fn crash_point(&self, stage: Stage) {
        if self.options.fault == Some(Fault::CrashDuring(stage)) {
            log::error!("injected crash during {stage}");
            std::process::abort();
        }
    }

    fn emit<A: Artifact>(&self, stage: Stage, value: &A) -> Result<(), StageFailure> {
        self.crash_point(stage);
        let path = self.ws.artifact(stage.artifact_file());
        fs::create_dir_all(self.ws.artifacts()).map_err(gate_err)?;
        if self.options.fault == Some(Fault::CorruptArtifact(stage)) {
            write_atomic(&path, b"{\"corrupted\": tr").map_err(gate_err)?;
        } else {
            write_artifact(&path, value).map_err(gate_err)?;
        }
        Ok(())
    }

    fn execute(&mut self, stage: Stage) -> Result<(), StageFailure> {
        let root = self.ws.root().to_path_buf();
        let exec = self.config.exec;
        match stage {
            Stage::Intake => {
                let manifest = self.manifest()?;
                if manifest.presentation_id != self.ws.presentation_id() {
                    return Err(StageFailure::gate(format!(
                        "manifest presentation_id {:?} does not match {:?}",
                        manifest.presentation_id,
                        self.ws.presentation_id()
                    )));
                }
                let report = validate_inputs(&manifest, &root, &self.config.intake);
                self.emit(stage, &report)
            }
            Stage::Extract => {
                let manifest = self.manifest()?;
                let pdf = manifest.resolve(&root, &manifest.pdf_path);
                let set = extract_slides(
                    &pdf,
                    &root,
                    self.config.extract.dpi,
                    &manifest.event_tag,
                    &manifest.presentation_id,
                    exec,
                )
                .map_err(gate_err)?;
                self.emit(stage, &set)
            }
            Stage::Sync => {
                let manifest = self.manifest()?;
                let set: SlideSet = self.load(Stage::Extract)?;
                let hashes = exec
                    .try_map(&set.slides, |s| {
                        fingerprint_image(&root.join(&s.path)).map(|f| f.bits)
                    })
                    .map_err(gate_err)?;
                let video = manifest.resolve(&root, &manifest.video_path);
                let map = synchronize(
                    &set.presentation_id,
                    &video,
                    &hashes,
                    &self.config.sync,
                    exec,
                )
                .map_err(gate_err)?;
                self.emit(stage, &map)
            }
            Stage::Analyze => {
                let manifest = self.manifest()?;
                let set: SlideSet = self.load(Stage::Extract)?;
                let analyses = analyze_slides(self.gateway()?, &manifest, &set, &root, exec)?;
                self.emit(stage, &analyses)
            }
            Stage::Curate => {
                let set: SlideSet = self.load(Stage::Extract)?;
                let analyses: SlideAnalyses = self.load(Stage::Analyze)?;
                let overrides = load_overrides(&self.ws.overrides()).map_err(gate_err)?;
                let plan = curate(
                    &set,
                    &root,
                    &analyses,
                    &overrides,
                    self.config.curation.subset_threshold,
                    exec,
                )
                .map_err(gate_err)?;
                self.emit(stage, &plan)
            }
            Stage::Transcribe => {
                let manifest = self.manifest()?;
                let map: TransitionMap = self.load(Stage::Sync)?;
                let video = manifest.resolve(&root, &manifest.video_path);
                let raw = transcribe(self.gateway()?, &manifest, &video, map.video_duration)?;
                let t = &self.config.transcript;
                let transcript =
                    build_transcript(&map.presentation_id, raw, &map, &t.fillers, t.split_min_ms)
                        .map_err(gate_err)?;
                self.emit(stage, &transcript)
            }
            Stage::Storyboard => {
                let set: SlideSet = self.load(Stage::Extract)?;
                let map: TransitionMap = self.load(Stage::Sync)?;
                let plan: CurationPlan = self.load(Stage::Curate)?;
                let transcript: Transcript = self.load(Stage::Transcribe)?;
                let storyboard =
                    build_storyboard(&map, &plan, &transcript, &set).map_err(gate_err)?;
                self.emit(stage, &storyboard)
            }
            Stage::Synthesize => {
                let manifest = self.manifest()?;
                let analyses: SlideAnalyses = self.load(Stage::Analyze)?;
                let storyboard: Storyboard = self.load(Stage::Storyboard)?;
                let report =
                    generate_content_report(self.gateway()?, &manifest, &storyboard, &analyses)?;
                self.emit(stage, &report)
            }
            Stage::Render => {
                let up = Upstream::load(self)?;
                let staging = self.ws.staging();
                remove_dir_if_exists(&staging).map_err(gate_err)?;
                let bundle = render_document(&up.inputs(), &root, &staging).map_err(gate_err)?;
                self.emit(stage, &bundle.record)
            }
            Stage::Qa => {
                let up = Upstream::load(self)?;
                let record: RenderRecord = self.load(Stage::Render)?;
                let upstream: Vec<(String, Result<(), String>)> = Stage::ALL
                    [..Stage::Qa.position()]
                    .iter()
                    .map(|&s| {
                        (
                            s.artifact_file().to_string(),
                            self.check_gate(s).map(|_| ()).map_err(|f| f.message),
                        )
                    })
                    .collect();
                let report = qa::run_qa(
                    &up.inputs(),
                    &up.map,
                    &record,
                    &self.ws.staging(),
                    &upstream,
                );
                self.emit(stage, &report)
            }
        }
    }

    fn expect_id(&self, file: &str, found: &str) -> Result<(), StageFailure> {
        if found == self.ws.presentation_id() {
            Ok(())
        } else {
            Err(StageFailure::gate(format!(
                "{file} belongs to presentation {found:?}, expected {:?}",
                self.ws.presentation_id()
            )))
        }
    }

    /// Re-read the stage's artifact, validate it and check it against its
    /// inputs. Returns the digest of the artifact bytes.
    fn check_gate(&self, stage: Stage) -> Result<Digest, StageFailure> {
        let file = stage.artifact_file();
        let fail = |msg: String| Err(StageFailure::gate(format!("{file}: {msg}")));
        match stage {
            Stage::Intake => {
                let report: ValidationReport = self.load(stage)?;
                self.expect_id(file, &report.presentation_id)?;
                if !report.is_ready() {
                    let reasons: Vec<String> = report
                        .failures
                        .iter()
                        .map(|f| format!("{}: {}", f.check, f.detail))
                        .collect();
                    return Err(StageFailure {
                        kind: FailureKind::Blocked,
                        message: format!("intake BLOCKED: {}", reasons.join("; ")),
                    });
                }
            }
            Stage::Extract => {
                let set: SlideSet = self.load(stage)?;
                self.expect_id(file, &set.presentation_id)?;
                if set.slides.is_empty() {
                    return fail("no slides".into());
                }
                for slide in &set.slides {
                    match Digest::of_file(&self.ws.root().join(&slide.path)) {
                        Ok(d) if d == slide.digest => {}
                        _ => {
                            return fail(format!(
                                "{} is missing or differs from its digest",
                                slide.path
                            ))
                        }
                    }
                }
            }
            Stage::Sync => {
                let map: TransitionMap = self.load(stage)?;
                let set: SlideSet = self.load(Stage::Extract)?;
                self.expect_id(file, &map.presentation_id)?;
                if map.slide_count as usize != set.slides.len() {
                    return fail(format!(
                        "slide_count {} but the slide set has {}",
                        map.slide_count,
                        set.slides.len()
                    ));
                }
            }
            Stage::Analyze => {
                let analyses: SlideAnalyses = self.load(stage)?;
                let set: SlideSet = self.load(Stage::Extract)?;
                self.expect_id(file, &analyses.presentation_id)?;
                if analyses.analyses.len() != set.slides.len() {
                    return fail(format!(
                        "{} analyses for {} slides",
                        analyses.analyses.len(),
                        set.slides.len()
                    ));
                }
            }
            Stage::Curate => {
                let plan: CurationPlan = self.load(stage)?;
                let set: SlideSet = self.load(Stage::Extract)?;
                self.expect_id(file, &plan.presentation_id)?;
                if plan.decisions.len() != set.slides.len() {
                    return fail(format!(
                        "{} decisions for {} slides",
                        plan.decisions.len(),
                        set.slides.len()
                    ));
                }
            }
            Stage::Transcribe => {
                let transcript: Transcript = self.load(stage)?;
                let map: TransitionMap = self.load(Stage::Sync)?;
                self.expect_id(file, &transcript.presentation_id)?;
                if transcript.assignments.len() != map.entries.len() {
                    return fail(format!(
                        "speech for {} entries but the map has {}",
                        transcript.assignments.len(),
                        map.entries.len()
                    ));
                }
            }
            Stage::Storyboard => {
                let storyboard: Storyboard = self.load(stage)?;
                let map: TransitionMap = self.load(Stage::Sync)?;
                self.expect_id(file, &storyboard.presentation_id)?;
                if storyboard.blocks.len() != map.entries.len() {
                    return fail(format!(
                        "{} blocks for {} presented entries",
                        storyboard.blocks.len(),
                        map.entries.len()
                    ));
                }
            }
            Stage::Synthesize => {
                let report: ContentReport = self.load(stage)?;
                let storyboard: Storyboard = self.load(Stage::Storyboard)?;
                self.expect_id(file, &report.presentation_id)?;
                let verdict = validate_report(&report, &storyboard);
                if !verdict.pass() {
                    let errors: Vec<String> = verdict
                        .to_field_errors()
                        .iter()
                        .map(ToString::to_string)
                        .collect();
                    return fail(errors.join("; "));
                }
            }
            Stage::Render => {
                let record: RenderRecord = self.load(stage)?;
                self.expect_id(file, &record.presentation_id)?;
                let staging = self.ws.staging();
                match Digest::of_file(&staging.join(DOCUMENT_FILE)) {
                    Ok(d) if d == record.document_digest => {}
                    _ => {
                        return fail(format!(
                            "{DOCUMENT_FILE} is missing or differs from the record"
                        ))
                    }
                }
                for fig in &record.figures {
                    match Digest::of_file(&staging.join(&fig.path)) {
                        Ok(d) if d == fig.digest => {}
                        _ => {
                            return fail(format!(
                                "{} is missing or differs from the record",
                                fig.path
                            ))
                        }
                    }
                }
            }
            Stage::Qa => {
                let report: QualityReport = self.load(stage)?;
                self.expect_id(file, &report.presentation_id)?;
                if !report.passed {
                    let failed: Vec<String> = report
                        .checks
                        .iter()
                        .filter(|c| !c.passed)
                        .map(|c| format!("{}: {}", c.name, c.detail))
                        .collect();
                    return fail(format!("quality checks failed: {}", failed.join("; ")));
                }
            }
        }
        let path = self.ws.artifact(file);
        Digest::of_file(&path).map_err(|e| StageFailure::gate(format!("{file}: {e}")))
    }

    fn run_one(&mut self, stage: Stage) -> Result<Digest, StageFailure> {
        log::info!("stage {stage}: running");
        self.execute(stage)?;
        self.check_gate(stage)
    }
}

/// Artifacts shared by render and QA.
struct Upstream {
    manifest: PresentationManifest,
    set: SlideSet,
    map: TransitionMap,
    analyses: SlideAnalyses,
    plan: CurationPlan,
    storyboard: Storyboard,
    report: ContentReport,
}

impl Upstream {
    fn load(runner: &Runner<'_>) -> Result<Self, StageFailure> {
        Ok(Upstream {
            manifest: runner.manifest()?,
            set: runner.load(Stage::Extract)?,
            map: runner.load(Stage::Sync)?,
            analyses: runner.load(Stage::Analyze)?,
            plan: runner.load(Stage::Curate)?,
            storyboard: runner.load(Stage::Storyboard)?,
            report: runner.load(Stage::Synthesize)?,
        })
    }

    fn inputs(&self) -> RenderInputs<'_> {
        RenderInputs {
            manifest: &self.manifest,
            report: &self.report,
            storyboard: &self.storyboard,
            plan: &self.plan,
            slides: &self.set,
            analyses: &self.analyses,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Run every stage for `presentation_id` under `work_root`. A stage failure
/// is reported in the result, not as an `Err`; `Err` means the run could not
/// start. The bundle appears in `out/` only when every gate passed.
pub fn full_pipeline(
    work_root: &Path,
    presentation_id: &str,
    options: &RunOptions,
) -> Result<PipelineResult, PipelineError> {
    let ws = Workspace::new(work_root, presentation_id);
    let mut runner = Runner::new(&ws, options)?;
    let _lock = ws.lock()?;

    remove_dir_if_exists(&ws.out()).map_err(io_err(&ws.out()))?;
    remove_dir_if_exists(&ws.staging()).map_err(io_err(&ws.staging()))?;
    if !options.resume {
        remove_dir_if_exists(&ws.artifacts()).map_err(io_err(&ws.artifacts()))?;
    }

    let mut timings = BTreeMap::new();
    let mut digests = BTreeMap::new();
    let mut reused = Vec::new();
    let mut failed: Option<(Stage, StageFailure)> = None;
    let mut reusing = options.resume;

    for stage in Stage::ALL {
        if reusing && !stage.always_reruns() && ws.artifact(stage.artifact_file()).exists() {
            if let Ok(digest) = runner.check_gate(stage) {
                log::info!("stage {stage}: reusing {}", stage.artifact_file());
                timings.insert(stage, 0);
                digests.insert(stage.artifact_file().to_string(), digest);
                reused.push(stage);
                continue;
            }
        }
        reusing = false;
        let start = Instant::now();
        let outcome = runner.run_one(stage);
        timings.insert(stage, elapsed_ms(start));
        match outcome {
            Ok(digest) => {
                digests.insert(stage.artifact_file().to_string(), digest);
            }
            Err(failure) => {
                log::error!("stage {stage} failed: {failure}");
                failed = Some((stage, failure));
                break;
            }
        }
    }

    let staging = ws.staging();
    let status = if failed.is_none() {
        copy_tree(&ws.artifacts(), &staging.join("artifacts")).map_err(io_err(&staging))?;
        fs::rename(&staging, ws.out()).map_err(io_err(&staging))?;
        RunStatus::Complete
    } else {
        remove_dir_if_exists(&staging).map_err(io_err(&staging))?;
        RunStatus::Failed
    };

    let result = PipelineResult {
        presentation_id: presentation_id.to_string(),
        status,
        failed_stage: failed.as_ref().map(|(s, _)| *s),
        failure: failed.map(|(_, f)| Failure {
            kind: f.kind,
            message: f.message,
        }),
        total_ms: timings.values().sum(),
        stage_timings: timings,
        artifact_digests: digests,
        reused_stages: reused,
        media: runner.media(),
    };
    write_artifact(&ws.run_record(), &result).map_err(|source| PipelineError::RunRecord {
        path: ws.run_record(),
        source,
    })?;
    Ok(result)
}

/// Run exactly one stage against existing upstream artifacts. Render and QA
/// work on `staging/`.
pub fn run_stage(
    work_root: &Path,
    presentation_id: &str,
    stage: Stage,
    options: &RunOptions,
) -> Result<StageOutcome, PipelineError> {
    let ws = Workspace::new(work_root, presentation_id);
    let mut runner = Runner::new(&ws, options)?;
    let _lock = ws.lock()?;
    let start = Instant::now();
    let digest = runner
        .run_one(stage)
        .map_err(|failure| PipelineError::Stage { stage, failure })?;
    Ok(StageOutcome {
        stage,
        artifact: ws.artifact(stage.artifact_file()),
        digest,
        elapsed_ms: elapsed_ms(start),
    })
}

/// The last run's record and its quality metrics.
pub fn report(work_root: &Path, presentation_id: &str) -> Result<RunReport, PipelineError> {
    let ws = Workspace::new(work_root, presentation_id);
    let path = ws.run_record();
    if !path.exists() {
        return Err(PipelineError::NoRun(presentation_id.to_string()));
    }
    let result: PipelineResult =
        read_artifact(&path).map_err(|source| PipelineError::RunRecord {
            path: path.clone(),
            source,
        })?;
    let quality = read_artifact::<QualityReport>(&ws.artifact(Stage::Qa.artifact_file()))
        .map(|q| q.metrics)
        .unwrap_or_else(|_| QualityMetricsReport::absent());
    Ok(RunReport { result, quality })
}
