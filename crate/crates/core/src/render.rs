//! Publication document: pandoc-style markdown with YAML front matter, plus
//! the figure files it references.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SlideAnalyses;
use crate::curator::CurationPlan;
use crate::extract::SlideSet;
use crate::model::{write_atomic, Artifact, Digest, FieldError, PresentationManifest, Violations};
use crate::storyboard::Storyboard;
use crate::synthesis::ContentReport;

pub const DOCUMENT_FILE: &str = "chapter.qmd";
pub const FIGURES_DIR: &str = "figures";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureRecord {
    pub slide_index: u32,
    /// Relative to the bundle root.
    pub path: String,
    pub caption: String,
    pub section: u32,
    pub digest: Digest,
}

/// `09_render.json`: what the renderer wrote into the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRecord {
    pub presentation_id: String,
    pub document: String,
    pub document_digest: Digest,
    pub section_count: u32,
    pub figures: Vec<FigureRecord>,
}

impl Artifact for RenderRecord {
    const KIND: &'static str = "render_record";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        v.check(
            self.document == DOCUMENT_FILE,
            "document",
            format!("must be {DOCUMENT_FILE}"),
        );
        let mut seen = BTreeSet::new();
        for (i, f) in self.figures.iter().enumerate() {
            v.check(
                seen.insert(f.slide_index),
                format!("figures[{i}].slide_index"),
                "figure appears twice",
            );
            v.check(
                f.path.starts_with(&format!("{FIGURES_DIR}/")),
                format!("figures[{i}].path"),
                format!("must be inside {FIGURES_DIR}/"),
            );
        }
        v.into_vec()
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{artifact} belongs to presentation {found:?}, expected {expected:?}")]
    PresentationMismatch {
        artifact: &'static str,
        expected: String,
        found: String,
    },
    #[error("section {section} cites block {block}, which is not in the storyboard")]
    UnknownBlock { section: u32, block: u32 },
    #[error("slide {0} has no image or analysis")]
    MissingSlide(u32),
    #[error("figure file {0} is missing")]
    MissingFigure(PathBuf),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Inputs of one render, all for the same presentation.
#[derive(Debug, Clone, Copy)]
pub struct RenderInputs<'a> {
    pub manifest: &'a PresentationManifest,
    pub report: &'a ContentReport,
    pub storyboard: &'a Storyboard,
    pub plan: &'a CurationPlan,
    pub slides: &'a SlideSet,
    pub analyses: &'a SlideAnalyses,
}

/// A figure placed in the document, before files are copied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedFigure {
    pub slide_index: u32,
    pub file_name: String,
    pub caption: String,
    pub section: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentBundle {
    pub document_path: PathBuf,
    pub figures: Vec<PathBuf>,
    pub record: RenderRecord,
}

fn yaml_string(s: &str) -> String {
    let escaped: String = s
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            '\n' => vec!['\\', 'n'],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

fn check_ids(inputs: &RenderInputs<'_>) -> Result<(), RenderError> {
    let expected = &inputs.report.presentation_id;
    for (artifact, found) in [
        ("manifest", &inputs.manifest.presentation_id),
        ("storyboard", &inputs.storyboard.presentation_id),
        ("curation plan", &inputs.plan.presentation_id),
        ("slide set", &inputs.slides.presentation_id),
        ("slide analyses", &inputs.analyses.presentation_id),
    ] {
        if found != expected {
            return Err(RenderError::PresentationMismatch {
                artifact,
                expected: expected.clone(),
                found: found.clone(),
            });
        }
    }
    Ok(())
}

/// Figures in document order: each included slide behind a section's source
/// blocks, placed in the first section that cites it.
pub fn place_figures(inputs: &RenderInputs<'_>) -> Result<Vec<PlacedFigure>, RenderError> {
    let mut placed = Vec::new();
    let mut seen = BTreeSet::new();
    for section in &inputs.report.sections {
        for &block in &section.source_blocks {
            let b = inputs
                .storyboard
                .block(block)
                .ok_or(RenderError::UnknownBlock {
                    section: section.number,
                    block,
                })?;
            let index = b.slide.index;
            if !inputs.plan.is_included(index) || !seen.insert(index) {
                continue;
            }
            let slide = inputs
                .slides
                .slide(index)
                .ok_or(RenderError::MissingSlide(index))?;
            let analysis = inputs
                .analyses
                .get(index)
                .ok_or(RenderError::MissingSlide(index))?;
            placed.push(PlacedFigure {
                slide_index: index,
                file_name: slide.file_name().to_string(),
                caption: analysis.content_summary.trim().to_string(),
                section: section.number,
            });
        }
    }
    Ok(placed)
}

/// The document text. Pure: same inputs give the same bytes.
pub fn render_markdown(inputs: &RenderInputs<'_>, figures: &[PlacedFigure]) -> String {
    let m = inputs.manifest;
    let mut out = String::new();
    out.push_str("---\n");
    let _ = writeln!(out, "title: {}", yaml_string(&m.title));
    let _ = writeln!(out, "author: {}", yaml_string(&m.author));
    let _ = writeln!(out, "affiliation: {}", yaml_string(&m.affiliation));
    out.push_str("abstract: |\n");
    for line in inputs.report.overview.trim().lines() {
        if line.trim().is_empty() {
            out.push('\n');
        } else {
            let _ = writeln!(out, "  {line}");
        }
    }
    out.push_str("---\n");
    for section in &inputs.report.sections {
        let _ = write!(
            out,
            "\n# {}\n\n{}\n",
            section.title.trim(),
            section.text.trim()
        );
        for fig in figures.iter().filter(|f| f.section == section.number) {
            let _ = write!(
                out,
                "\n![{}]({FIGURES_DIR}/{}){{#fig-slide-{:02}}}\n",
                fig.caption.replace(['[', ']'], ""),
                fig.file_name,
                fig.slide_index
            );
        }
    }
    out
}

/// Write `chapter.qmd` and `figures/` into `bundle_dir`, copying slide images
/// from `work_dir`.
pub fn render_document(
    inputs: &RenderInputs<'_>,
    work_dir: &Path,
    bundle_dir: &Path,
) -> Result<DocumentBundle, RenderError> {
    check_ids(inputs)?;
    let figures = place_figures(inputs)?;
    let text = render_markdown(inputs, &figures);
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RenderError::Io { path, source }
    };
    let fig_dir = bundle_dir.join(FIGURES_DIR);
    fs::create_dir_all(&fig_dir).map_err(io(&fig_dir))?;
    let mut records = Vec::with_capacity(figures.len());
    let mut paths = Vec::with_capacity(figures.len());
    for fig in &figures {
        let slide = inputs
            .slides
            .slide(fig.slide_index)
            .ok_or(RenderError::MissingSlide(fig.slide_index))?;
        let src = work_dir.join(&slide.path);
        let bytes = fs::read(&src).map_err(|_| RenderError::MissingFigure(src.clone()))?;
        let dest = fig_dir.join(&fig.file_name);
        write_atomic(&dest, &bytes).map_err(io(&dest))?;
        records.push(FigureRecord {
            slide_index: fig.slide_index,
            path: format!("{FIGURES_DIR}/{}", fig.file_name),
            caption: fig.caption.clone(),
            section: fig.section,
            digest: Digest::of_bytes(&bytes),
        });
        paths.push(dest);
    }
    let document_path = bundle_dir.join(DOCUMENT_FILE);
    write_atomic(&document_path, text.as_bytes()).map_err(io(&document_path))?;
    Ok(DocumentBundle {
        document_path,
        figures: paths,
        record: RenderRecord {
            presentation_id: inputs.report.presentation_id.clone(),
            document: DOCUMENT_FILE.to_string(),
            document_digest: Digest::of_bytes(text.as_bytes()),
            section_count: inputs.report.sections.len() as u32,
            figures: records,
        },
    })
}

/// Figure file names referenced by a rendered document.
pub fn referenced_figures(document: &str) -> BTreeSet<String> {
    let marker = format!("]({FIGURES_DIR}/");
    document
        .lines()
        .filter(|l| l.starts_with("!["))
        .filter_map(|l| {
            let start = l.find(&marker)? + marker.len();
            let end = start + l[start..].find(')')?;
            Some(l[start..end].to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{SlideAnalysis, SlideType};
    use crate::curator::{build_curation_plan, CurationOverrides, SlideRole};
    use crate::model::{slide_file_name, Rating, SlideImage, Timestamp};
    use crate::storyboard::{BlockSlide, StoryboardBlock};
    use crate::synthesis::{ContentSection, Coverage, TransformationType};

    struct Fixture {
        dir: tempfile::TempDir,
        manifest: PresentationManifest,
        report: ContentReport,
        storyboard: Storyboard,
        plan: CurationPlan,
        slides: SlideSet,
        analyses: SlideAnalyses,
    }

    impl Fixture {
        fn inputs(&self) -> RenderInputs<'_> {
            RenderInputs {
                manifest: &self.manifest,
                report: &self.report,
                storyboard: &self.storyboard,
                plan: &self.plan,
                slides: &self.slides,
                analyses: &self.analyses,
            }
        }
    }

    /// Three slides; slide 2 is a transition. Section 1 cites blocks 1 and 2,
    /// section 2 cites blocks 2 and 3.
    fn fixture() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("slides")).unwrap();
        let slides: Vec<SlideImage> = (1..=3)
            .map(|i| {
                let name = slide_file_name("ev", "p", i);
                let bytes = vec![i as u8; 16];
                fs::write(dir.path().join("slides").join(&name), &bytes).unwrap();
                SlideImage {
                    index: i,
                    path: format!("slides/{name}"),
                    width_px: 4,
                    height_px: 4,
                    dpi: 72,
                    digest: Digest::of_bytes(&bytes),
                }
            })
            .collect();
        let analyses = SlideAnalyses {
            presentation_id: "p".into(),
            analyses: (1..=3)
                .map(|i| SlideAnalysis {
                    slide_index: i,
                    slide_type: SlideType::Conceptual,
                    content_summary: format!("Summary of slide {i}"),
                    comprehensive_analysis: "long".into(),
                    academic_significance: Rating::Medium,
                })
                .collect(),
        };
        let roles = [
            SlideRole::SpecialTitle,
            SlideRole::Transition,
            SlideRole::Content,
        ];
        let plan = build_curation_plan("p", &roles, &[], &CurationOverrides::default()).unwrap();
        let storyboard = Storyboard {
            presentation_id: "p".into(),
            blocks: (1..=3)
                .map(|b| StoryboardBlock {
                    block: b,
                    slide: BlockSlide {
                        file: slide_file_name("ev", "p", b),
                        index: b,
                        timestamp: Timestamp::from_secs(b as u64),
                    },
                    speech: String::new(),
                    included_in_publication: b != 2,
                })
                .collect(),
        };
        let section = |n: u32, blocks: &[u32]| ContentSection {
            number: n,
            title: format!("Part {n}"),
            outline: vec![],
            text: format!("Prose {n}."),
            source_blocks: blocks.to_vec(),
            transformation_type: TransformationType::Synthesis,
        };
        let report = ContentReport {
            presentation_id: "p".into(),
            overview: "An \"overview\".\nSecond line.".into(),
            sections: vec![section(1, &[1, 2]), section(2, &[2, 3])],
            block_coverage: [(1, vec![1]), (2, vec![1, 2]), (3, vec![2])]
                .into_iter()
                .map(|(b, s)| (b, Coverage::Sections(s)))
                .collect(),
        };
        let manifest = PresentationManifest {
            presentation_id: "p".into(),
            title: "A \"quoted\" title".into(),
            author: "A. Author".into(),
            affiliation: "Institute".into(),
            pdf_path: "talk.pdf".into(),
            video_path: "talk.gif".into(),
            event_tag: "ev".into(),
        };
        Fixture {
            dir,
            manifest,
            report,
            storyboard,
            plan,
            slides: SlideSet {
                presentation_id: "p".into(),
                event_tag: "ev".into(),
                dpi: 72,
                source_pdf_hash: Digest::of_bytes(b""),
                slides,
            },
            analyses,
        }
    }

    #[test]
    fn figures_are_exactly_the_included_cited_slides() {
        let f = fixture();
        let out = f.dir.path().join("bundle");
        let bundle = render_document(&f.inputs(), f.dir.path(), &out).unwrap();
        let text = fs::read_to_string(&bundle.document_path).unwrap();
        let referenced = referenced_figures(&text);
        let expected: BTreeSet<String> = [1, 3]
            .iter()
            .map(|&i| slide_file_name("ev", "p", i))
            .collect();
        assert_eq!(referenced, expected);
        for name in &referenced {
            assert!(out.join(FIGURES_DIR).join(name).exists());
        }
        assert_eq!(
            bundle
                .record
                .figures
                .iter()
                .map(|r| r.section)
                .collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert!(text.contains("![Summary of slide 3](figures/ev_p_slide_03.png){#fig-slide-03}"));
        assert!(bundle.record.validate().is_empty());
    }

    #[test]
    fn front_matter_and_sections() {
        let f = fixture();
        let text = render_markdown(&f.inputs(), &place_figures(&f.inputs()).unwrap());
        assert!(text.starts_with("---\ntitle: \"A \\\"quoted\\\" title\"\nauthor: \"A. Author\"\naffiliation: \"Institute\"\nabstract: |\n  An \"overview\".\n  Second line.\n---\n"), "{text}");
        assert_eq!(text.lines().filter(|l| l.starts_with("# ")).count(), 2);
    }

    #[test]
    fn rendering_is_byte_stable() {
        let f = fixture();
        let a = render_document(&f.inputs(), f.dir.path(), &f.dir.path().join("a")).unwrap();
        let b = render_document(&f.inputs(), f.dir.path(), &f.dir.path().join("b")).unwrap();
        assert_eq!(
            fs::read(&a.document_path).unwrap(),
            fs::read(&b.document_path).unwrap()
        );
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn text_only_document_when_nothing_is_included() {
        let mut f = fixture();
        for d in &mut f.plan.decisions {
            d.include = false;
        }
        let bundle = render_document(&f.inputs(), f.dir.path(), &f.dir.path().join("o")).unwrap();
        assert!(bundle.figures.is_empty());
        assert!(referenced_figures(&fs::read_to_string(&bundle.document_path).unwrap()).is_empty());
    }

    #[test]
    fn missing_figure_and_id_mismatch_are_errors() {
        let f = fixture();
        fs::remove_file(
            f.dir
                .path()
                .join("slides")
                .join(slide_file_name("ev", "p", 3)),
        )
        .unwrap();
        assert!(matches!(
            render_document(&f.inputs(), f.dir.path(), &f.dir.path().join("o")),
            Err(RenderError::MissingFigure(_))
        ));
        let mut g = fixture();
        g.plan.presentation_id = "q".into();
        assert!(matches!(
            render_document(&g.inputs(), g.dir.path(), &g.dir.path().join("o")),
            Err(RenderError::PresentationMismatch {
                artifact: "curation plan",
                ..
            })
        ));
    }
}
