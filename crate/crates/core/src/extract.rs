//! Slide PDF rasterization to canonically named PNG files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hayro::hayro_interpret::util::TransformExt;
use hayro::hayro_interpret::InterpreterSettings;
use hayro::hayro_syntax::page::Page;
use hayro::hayro_syntax::Pdf;
use hayro::kurbo::Affine;
use hayro::vello_cpu::color::palette::css::WHITE;
use hayro::vello_cpu::{self, Pixmap, RenderContext};
use hayro::{render_into, RenderCache, RenderSettings};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::model::{
    is_filesystem_safe_id, read_artifact, slide_file_name, write_artifact, write_atomic, Artifact,
    Digest, FieldError, SlideImage, Violations,
};

pub const MIN_DPI: u32 = 72;
pub const MAX_DPI: u32 = 600;
/// Directory (relative to the work dir) holding slide images.
pub const SLIDES_DIR: &str = "slides";
/// Inventory kept next to the images so an unchanged PDF can be skipped.
const SLIDES_INDEX: &str = "slide_set.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideSet {
    pub presentation_id: String,
    pub event_tag: String,
    pub dpi: u32,
    pub source_pdf_hash: Digest,
    pub slides: Vec<SlideImage>,
}

impl SlideSet {
    pub fn slide(&self, index: u32) -> Option<&SlideImage> {
        index
            .checked_sub(1)
            .and_then(|i| self.slides.get(i as usize))
    }
}

impl Artifact for SlideSet {
    const KIND: &'static str = "slide_set";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            is_filesystem_safe_id(&self.presentation_id),
            "presentation_id",
            "must match [A-Za-z0-9_-]+",
        );
        v.check(
            is_filesystem_safe_id(&self.event_tag),
            "event_tag",
            "must match [A-Za-z0-9_-]+",
        );
        v.check(
            (MIN_DPI..=MAX_DPI).contains(&self.dpi),
            "dpi",
            "must be within [72, 600]",
        );
        for (i, slide) in self.slides.iter().enumerate() {
            let at = format!("slides[{i}]");
            let expected = i as u32 + 1;
            v.check(
                slide.index == expected,
                format!("{at}.index"),
                format!("must be {expected}"),
            );
            v.check(
                slide.dpi == self.dpi,
                format!("{at}.dpi"),
                "must equal the set dpi",
            );
            v.check(
                slide.width_px > 0 && slide.height_px > 0,
                format!("{at}.width_px"),
                "must be positive",
            );
            let name = slide_file_name(&self.event_tag, &self.presentation_id, slide.index);
            v.check(
                slide.path == format!("{SLIDES_DIR}/{name}"),
                format!("{at}.path"),
                format!("must be {SLIDES_DIR}/{name}"),
            );
        }
        v.into_vec()
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("dpi {0} outside [72, 600]")]
    InvalidDpi(u32),
    #[error("cannot read PDF {path}: {message}")]
    Pdf { path: PathBuf, message: String },
    #[error("failed to render page {page}: {message}")]
    Render { page: u32, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ExtractError + '_ {
    move |source| ExtractError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse a PDF and return its page count. Checks the `%PDF-` header, the page
/// tree and that there is at least one page.
pub fn pdf_page_count(bytes: &[u8]) -> Result<usize, String> {
    if !bytes.starts_with(b"%PDF-") {
        return Err("missing %PDF- header".to_string());
    }
    let pdf = Pdf::new(Arc::new(bytes.to_vec())).map_err(|e| format!("unparseable: {e:?}"))?;
    match pdf.pages().len() {
        0 => Err("page tree has no pages".to_string()),
        n => Ok(n),
    }
}

/// Page size in points after rotation.
fn page_points(page: &Page<'_>) -> (f32, f32) {
    page.render_dimensions()
}

/// Pixel size for a page of `points` at `dpi`, rounded to nearest.
pub fn pixel_size(points: (f32, f32), dpi: u32) -> (u32, u32) {
    let scale = dpi as f64 / 72.0;
    (
        ((points.0 as f64 * scale).round() as u32).max(1),
        ((points.1 as f64 * scale).round() as u32).max(1),
    )
}

/// Rasterize one page onto a white `width` x `height` canvas.
fn rasterize(page: &Page<'_>, width: u32, height: u32) -> Result<RgbImage, String> {
    if width > u16::MAX as u32 || height > u16::MAX as u32 {
        return Err(format!("{width}x{height} exceeds the rasterizer limit"));
    }
    let (pw, ph) = page_points(page);
    if !(pw > 0.0 && ph > 0.0) {
        return Err(format!("degenerate page size {pw}x{ph}"));
    }
    let mut ctx = RenderContext::new(width as u16, height as u16);
    let transform = Affine::scale_non_uniform(width as f64 / pw as f64, height as f64 / ph as f64)
        * page.initial_transform(true).to_kurbo();
    let cache = RenderCache::new();
    render_into(
        page,
        &cache,
        &InterpreterSettings::default(),
        &RenderSettings::default(),
        &mut ctx,
        transform,
    );
    ctx.flush();
    let mut pixmap = Pixmap::new(ctx.width(), ctx.height());
    ctx.render_with(
        &mut pixmap,
        &mut vello_cpu::Resources::default(),
        vello_cpu::RasterizerSettings {
            target_init: vello_cpu::TargetInit::Clear(WHITE),
            ..Default::default()
        },
    );
    // Opaque background, so premultiplied RGBA is plain RGBA.
    let rgb: Vec<u8> = pixmap
        .data_as_u8_slice()
        .chunks_exact(4)
        .flat_map(|px| [px[0], px[1], px[2]])
        .collect();
    RgbImage::from_raw(width, height, rgb).ok_or_else(|| "pixmap size mismatch".to_string())
}

/// Render every page of an in-memory PDF to grayscale at a fixed pixel size.
/// Used to synthesize video frames that show the deck.
pub fn render_pages_gray(
    pdf_bytes: &[u8],
    width: u32,
    height: u32,
    exec: Exec,
) -> Result<Vec<GrayImage>, String> {
    let pdf =
        Pdf::new(Arc::new(pdf_bytes.to_vec())).map_err(|e| format!("unparseable PDF: {e:?}"))?;
    let pages: Vec<usize> = (0..pdf.pages().len()).collect();
    exec.try_map(&pages, |&i| {
        rasterize(&pdf.pages()[i], width, height)
            .map(|rgb| image::DynamicImage::ImageRgb8(rgb).to_luma8())
    })
}

fn encode_png(image: &RgbImage) -> Result<Vec<u8>, String> {
    let mut out = std::io::Cursor::new(Vec::new());
    image
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

/// Rasterize every page of `pdf_path` into `<work_dir>/slides/`.
///
/// If the slide directory already holds images for a PDF with the same digest
/// and dpi, and every image still matches its recorded digest, the stored set
/// is returned without writing anything.
pub fn extract_slides(
    pdf_path: &Path,
    work_dir: &Path,
    dpi: u32,
    event_tag: &str,
    presentation_id: &str,
    exec: Exec,
) -> Result<SlideSet, ExtractError> {
    if !(MIN_DPI..=MAX_DPI).contains(&dpi) {
        return Err(ExtractError::InvalidDpi(dpi));
    }
    let bytes = fs::read(pdf_path).map_err(io_error(pdf_path))?;
    let pdf_hash = Digest::of_bytes(&bytes);
    let slides_dir = work_dir.join(SLIDES_DIR);
    let index_path = slides_dir.join(SLIDES_INDEX);

    if let Some(existing) = reusable(
        &index_path,
        work_dir,
        pdf_hash,
        dpi,
        event_tag,
        presentation_id,
    ) {
        log::info!(
            "slides unchanged ({} pages), skipping rasterization",
            existing.slides.len()
        );
        return Ok(existing);
    }

    let pdf = Pdf::new(Arc::new(bytes)).map_err(|e| ExtractError::Pdf {
        path: pdf_path.to_path_buf(),
        message: format!("{e:?}"),
    })?;
    fs::create_dir_all(&slides_dir).map_err(io_error(&slides_dir))?;
    let _ = fs::remove_file(&index_path);

    let pages: Vec<u32> = (1..=pdf.pages().len() as u32).collect();
    let result = exec.try_map(&pages, |&index| {
        let page = &pdf.pages()[index as usize - 1];
        let (width, height) = pixel_size(page_points(page), dpi);
        let rgb = rasterize(page, width, height).map_err(|message| ExtractError::Render {
            page: index,
            message,
        })?;
        let png = encode_png(&rgb).map_err(|message| ExtractError::Render {
            page: index,
            message,
        })?;
        let name = slide_file_name(event_tag, presentation_id, index);
        let path = slides_dir.join(&name);
        write_atomic(&path, &png).map_err(io_error(&path))?;
        Ok(SlideImage {
            index,
            path: format!("{SLIDES_DIR}/{name}"),
            width_px: width,
            height_px: height,
            dpi,
            digest: Digest::of_bytes(&png),
        })
    });

    let slides = match result {
        Ok(slides) => slides,
        Err(err) => {
            for &index in &pages {
                let _ = fs::remove_file(slides_dir.join(slide_file_name(
                    event_tag,
                    presentation_id,
                    index,
                )));
            }
            return Err(err);
        }
    };
    remove_stale(&slides_dir, event_tag, presentation_id, slides.len() as u32);

    let set = SlideSet {
        presentation_id: presentation_id.to_string(),
        event_tag: event_tag.to_string(),
        dpi,
        source_pdf_hash: pdf_hash,
        slides,
    };
    write_artifact(&index_path, &set).map_err(|e| ExtractError::Io {
        path: index_path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(set)
}

fn reusable(
    index_path: &Path,
    work_dir: &Path,
    pdf_hash: Digest,
    dpi: u32,
    event_tag: &str,
    presentation_id: &str,
) -> Option<SlideSet> {
    let set: SlideSet = read_artifact(index_path).ok()?;
    let same_source = set.source_pdf_hash == pdf_hash
        && set.dpi == dpi
        && set.event_tag == event_tag
        && set.presentation_id == presentation_id;
    let intact = || {
        set.slides
            .iter()
            .all(|s| Digest::of_file(&work_dir.join(&s.path)).is_ok_and(|d| d == s.digest))
    };
    (same_source && intact()).then_some(set)
}

/// Remove images left over from an earlier, longer version of the deck.
fn remove_stale(slides_dir: &Path, event_tag: &str, presentation_id: &str, count: u32) {
    let prefix = format!("{event_tag}_{presentation_id}_slide_");
    let Ok(entries) = fs::read_dir(slides_dir) else {
        return;
    };
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let index = name
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".png"))
            .and_then(|n| n.parse::<u32>().ok());
        if index.is_some_and(|i| i > count) {
            let _ = fs::remove_file(entry.path());
        }
    }
}
