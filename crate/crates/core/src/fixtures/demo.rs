//! A complete 17-slide presentation laid out as `work/<ID>/`: slide PDF,
//! talk video, manifest, pipeline config and canned mock answers.
//!
//! Slides 1..=13 and 17 are shown in order; 14..=16 are skipped. Slides 13..=17
//! form a five-step progressive reveal, slide 7 is a section divider.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::deck::{write_pdf, DeckBuilder, SlideSpec};
use super::video::{render_gif, Noise, Showing, Timeline};
use crate::exec::Exec;
use crate::extract::render_pages_gray;
use crate::gateway::{CannedResponse, MockResponses};
use crate::intake::MANIFEST_FILE;
use crate::model::{to_canonical_json, PresentationManifest};
use crate::pipeline::{CONFIG_FILE, MOCK_RESPONSES_FILE};

pub const PRESENTATION_ID: &str = "003";
pub const EVENT_TAG: &str = "ai-nepi";
pub const SLIDE_COUNT: u32 = 17;
pub const PDF_FILE: &str = "slides.pdf";
pub const VIDEO_FILE: &str = "talk.gif";
pub const VIDEO_WIDTH: u32 = 640;
pub const VIDEO_HEIGHT: u32 = 360;
/// Length of the talk in seconds (15:53).
pub const DURATION_S: u64 = 953;
/// Start of each presented block in seconds.
pub const BLOCK_STARTS_S: [u64; 14] = [
    0, 8, 41, 156, 187, 245, 308, 400, 495, 590, 635, 681, 758, 850,
];
/// Slide shown in each block.
pub const BLOCK_SLIDES: [u32; 14] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 17];
pub const CHAIN: [u32; 5] = [13, 14, 15, 16, 17];
pub const UNPRESENTED: [u32; 3] = [14, 15, 16];
/// Block → sections of the canned report.
pub const COVERAGE: [(u32, &[u32]); 14] = [
    (1, &[1]),
    (2, &[1]),
    (3, &[2]),
    (4, &[2, 3]),
    (5, &[4, 5]),
    (6, &[6]),
    (7, &[7]),
    (8, &[7, 8]),
    (9, &[8]),
    (10, &[10]),
    (11, &[10]),
    (12, &[9]),
    (13, &[11, 12]),
    (14, &[12, 13]),
];
/// Opening of the speech recorded in block 3.
pub const BLOCK3_RAW: &str = "So, um, this is the famous, uh, Transformer architecture.";
pub const BLOCK3_CLEAN: &str = "So, this is the famous Transformer architecture.";

const SEED: u64 = 3;

#[derive(Debug, Clone)]
pub struct DemoFixture {
    pub work_root: PathBuf,
    pub root: PathBuf,
    pub manifest: PresentationManifest,
}

pub fn manifest() -> PresentationManifest {
    PresentationManifest {
        presentation_id: PRESENTATION_ID.to_string(),
        title: "Large Language Models for Research Workflows".to_string(),
        author: "Dana Example".to_string(),
        affiliation: "Institute for Example Studies".to_string(),
        pdf_path: PathBuf::from(PDF_FILE),
        video_path: PathBuf::from(VIDEO_FILE),
        event_tag: EVENT_TAG.to_string(),
    }
}

pub fn deck() -> Vec<SlideSpec> {
    let mut builder = DeckBuilder::new(SEED);
    let mut slides = vec![builder.title_slide()];
    slides.extend(builder.content_slides(11));
    slides.extend(builder.overlay_chain(CHAIN.len()).slides);
    slides
}

pub fn timeline() -> Timeline {
    Timeline {
        showings: BLOCK_STARTS_S
            .iter()
            .zip(BLOCK_SLIDES)
            .map(|(&s, slide)| Showing {
                slide: slide as usize - 1,
                start_ms: s * 1000,
            })
            .collect(),
        duration_ms: DURATION_S * 1000,
    }
}

fn block_end_s(block: usize) -> u64 {
    BLOCK_STARTS_S.get(block + 1).copied().unwrap_or(DURATION_S)
}

fn speech_for_block(block: usize) -> [String; 2] {
    let n = block + 1;
    if n == 3 {
        return [
            BLOCK3_RAW.to_string(),
            "It was introduced for machine translation and, uh, later adopted for text generation."
                .to_string(),
        ];
    }
    [
        format!("Now, um, we come to part {n} of the talk, which builds on the previous slide."),
        format!("The main point here is that part {n} shows, uh, how the method is applied in practice."),
    ]
}

/// Two segments per block, each well inside the block.
pub fn transcript_segments() -> Vec<Value> {
    let mut segments = Vec::new();
    for block in 0..BLOCK_STARTS_S.len() {
        let (start, end) = (BLOCK_STARTS_S[block] * 1000, block_end_s(block) * 1000);
        let mid = (start + end) / 2;
        let [first, second] = speech_for_block(block);
        segments
            .push(json!({"start": fmt_ms(start + 500), "end": fmt_ms(mid - 250), "text": first}));
        segments
            .push(json!({"start": fmt_ms(mid + 250), "end": fmt_ms(end - 500), "text": second}));
    }
    segments
}

fn fmt_ms(ms: u64) -> String {
    crate::model::Timestamp::from_millis(ms).to_string()
}

fn analysis(index: u32, slide_type: &str, summary: &str, significance: &str) -> CannedResponse {
    CannedResponse {
        template: crate::analysis::CLASSIFY_TEMPLATE.to_string(),
        when: [("slide_index".to_string(), index.to_string())]
            .into_iter()
            .collect(),
        response: json!({
            "slide_index": index,
            "slide_type": slide_type,
            "content_summary": summary,
            "comprehensive_analysis": format!("Slide {index}: {summary}. Layout of labelled boxes and connecting arrows."),
            "academic_significance": significance,
        }),
    }
}

const SECTION_TITLES: [&str; 13] = [
    "Scope and structure",
    "Attention-based sequence models",
    "Encoder stacks",
    "Bidirectional pretraining",
    "Autoregressive decoders",
    "Comparing model families",
    "Scaling over time",
    "Adapting models to new tasks",
    "Retrieval-augmented generation",
    "Usage patterns in research",
    "Reliability of generated text",
    "Evaluation practice",
    "Open problems",
];

const TRANSFORMATIONS: [&str; 13] = [
    "synthesis",
    "combination",
    "reorganization",
    "reorganization",
    "reorganization",
    "reorganization",
    "combination",
    "combination",
    "expansion",
    "synthesis",
    "expansion",
    "expansion",
    "expansion",
];

pub fn report_response() -> Value {
    let sections: Vec<Value> = SECTION_TITLES
        .iter()
        .zip(TRANSFORMATIONS)
        .enumerate()
        .map(|(i, (title, kind))| {
            let number = i as u32 + 1;
            let blocks: Vec<u32> = COVERAGE
                .iter()
                .filter(|(_, secs)| secs.contains(&number))
                .map(|(b, _)| *b)
                .collect();
            json!({
                "number": number,
                "title": title,
                "outline": [format!("{title}: background"), format!("{title}: discussion")],
                "text": format!("This section treats {}. It draws on storyboard blocks {}.", title.to_lowercase(),
                    blocks.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")),
                "source_blocks": blocks,
                "transformation_type": kind,
            })
        })
        .collect();
    let coverage: serde_json::Map<String, Value> = COVERAGE
        .iter()
        .map(|(b, secs)| (b.to_string(), json!({ "sections": secs })))
        .collect();
    json!({
        "overview": "The chapter reviews transformer language models, how they are adapted and retrieved against, and how they are used and evaluated in research.",
        "sections": sections,
        "block_coverage": coverage,
    })
}

pub fn mock_responses() -> MockResponses {
    let mut responses = vec![
        analysis(2, "agenda", "Outline of the talk", "low"),
        analysis(
            3,
            "technical_architecture",
            "Encoder-decoder transformer diagram",
            "high",
        ),
        analysis(
            4,
            "technical_architecture",
            "Stack of encoder layers",
            "high",
        ),
        analysis(7, "transition", "Section divider", "low"),
        analysis(9, "data", "Model sizes over time", "medium"),
        analysis(
            12,
            "technical_architecture",
            "Retrieval pipeline feeding a generator",
            "high",
        ),
    ];
    responses.push(CannedResponse {
        template: crate::transcript::TRANSCRIBE_TEMPLATE.to_string(),
        when: Default::default(),
        response: json!({ "segments": transcript_segments() }),
    });
    responses.push(CannedResponse {
        template: crate::synthesis::REPORT_TEMPLATE.to_string(),
        when: Default::default(),
        response: report_response(),
    });
    MockResponses { responses }
}

pub const CONFIG_TOML: &str = "[extract]\ndpi = 72\n";

/// Write the fixture into `work_root/003/`, replacing any earlier copy.
pub fn write_fixture(work_root: &Path) -> io::Result<DemoFixture> {
    let root = work_root.join(PRESENTATION_ID);
    if root.exists() {
        fs::remove_dir_all(&root)?;
    }
    fs::create_dir_all(&root)?;
    let manifest = manifest();

    let pdf = write_pdf(&deck());
    fs::write(root.join(PDF_FILE), &pdf)?;
    let frames = render_pages_gray(&pdf, VIDEO_WIDTH, VIDEO_HEIGHT, Exec::default())
        .map_err(io::Error::other)?;
    render_gif(
        &root.join(VIDEO_FILE),
        &frames,
        &timeline(),
        60_000,
        Noise { pixel: 3, block: 2 },
        SEED,
    )?;

    fs::write(
        root.join(MANIFEST_FILE),
        to_canonical_json(&manifest).map_err(io::Error::other)?,
    )?;
    fs::write(
        root.join(MOCK_RESPONSES_FILE),
        to_canonical_json(&mock_responses()).map_err(io::Error::other)?,
    )?;
    fs::write(root.join(CONFIG_FILE), CONFIG_TOML)?;
    Ok(DemoFixture {
        work_root: work_root.to_path_buf(),
        root,
        manifest,
    })
}
