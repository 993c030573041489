//! Synthetic slide decks made of filled gray rectangles.
//!
//! Rectangles are laid out in page points with a top-left origin on a
//! 960x540 pt page (16:9). Content slides scatter many rectangles so any two
//! of them differ in a large share of hash bits. Overlay chains keep a base
//! layout in the left half of the page and add one annotation per step in a
//! previously empty block of grid cells on the right.

use lopdf::content::{Content, Operation};
use lopdf::{dictionary, Document, Object, Stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fingerprint::GRID_SIDE;

pub const PAGE_WIDTH: f32 = 960.0;
pub const PAGE_HEIGHT: f32 = 540.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
    /// Fill level, 0 = black, 1 = white.
    pub gray: f32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlideSpec {
    pub rects: Vec<Rect>,
}

/// A generated overlay sequence and the chains a detector should report,
/// as 0-based positions within `slides`.
#[derive(Debug, Clone)]
pub struct OverlaySequence {
    pub slides: Vec<SlideSpec>,
    pub expected_chains: Vec<Vec<usize>>,
}

const CELL_W: f32 = PAGE_WIDTH / GRID_SIDE as f32;
const CELL_H: f32 = PAGE_HEIGHT / GRID_SIDE as f32;
/// Distance kept between annotation edges and grid cell boundaries.
const CELL_MARGIN: f32 = 12.0;

pub struct DeckBuilder {
    rng: ChaCha8Rng,
}

impl DeckBuilder {
    pub fn new(seed: u64) -> Self {
        DeckBuilder {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn random_rect(&mut self, x0: f32, x1: f32, y0: f32, y1: f32) -> Rect {
        let w = self.rng.random_range(30.0..((x1 - x0) * 0.45).max(31.0));
        let h = self.rng.random_range(20.0..((y1 - y0) * 0.45).max(21.0));
        Rect {
            x: self.rng.random_range(x0..(x1 - w).max(x0 + 1.0)),
            y: self.rng.random_range(y0..(y1 - h).max(y0 + 1.0)),
            w,
            h,
            gray: self.rng.random_range(0.0..0.75),
        }
    }

    pub fn content_slide(&mut self) -> SlideSpec {
        let rects = (0..28)
            .map(|_| self.random_rect(10.0, PAGE_WIDTH - 10.0, 10.0, PAGE_HEIGHT - 10.0))
            .collect();
        SlideSpec { rects }
    }

    pub fn content_slides(&mut self, count: usize) -> Vec<SlideSpec> {
        (0..count).map(|_| self.content_slide()).collect()
    }

    /// A wide title band plus a few smaller blocks.
    pub fn title_slide(&mut self) -> SlideSpec {
        let mut rects = vec![Rect {
            x: 80.0,
            y: 170.0,
            w: 800.0,
            h: 110.0,
            gray: 0.15,
        }];
        for _ in 0..10 {
            rects.push(self.random_rect(60.0, 900.0, 300.0, 520.0));
        }
        SlideSpec { rects }
    }

    pub fn blank_slide() -> SlideSpec {
        SlideSpec::default()
    }

    fn base_layout(&mut self) -> Vec<Rect> {
        (0..14)
            .map(|_| {
                self.random_rect(
                    10.0,
                    PAGE_WIDTH / 2.0 - CELL_MARGIN,
                    10.0,
                    PAGE_HEIGHT - 10.0,
                )
            })
            .collect()
    }

    /// Annotation `n` fills the interior of the n-th 2x2 block of grid cells in
    /// the right half of the page, so it only touches cells that were blank.
    fn annotation(&mut self, n: usize) -> Vec<Rect> {
        let blocks_per_row = GRID_SIDE / 4;
        let bx = GRID_SIDE / 2 + 2 * (n % blocks_per_row);
        let by = 2 * (n / blocks_per_row);
        let x0 = bx as f32 * CELL_W + CELL_MARGIN;
        let y0 = by as f32 * CELL_H + CELL_MARGIN;
        let (w, h) = (
            2.0 * CELL_W - 2.0 * CELL_MARGIN,
            2.0 * CELL_H - 2.0 * CELL_MARGIN,
        );
        let inner_w = self.rng.random_range(w * 0.2..w * 0.5);
        vec![
            Rect {
                x: x0,
                y: y0,
                w,
                h,
                gray: self.rng.random_range(0.1..0.5),
            },
            Rect {
                x: x0 + self.rng.random_range(8.0..w - inner_w - 8.0),
                y: y0 + h * 0.3,
                w: inner_w,
                h: h * 0.4,
                gray: 0.9,
            },
        ]
    }

    /// A progressive reveal: a base slide followed by `steps - 1` slides that
    /// each add one annotation. Supports up to 9 steps.
    pub fn overlay_chain(&mut self, steps: usize) -> OverlaySequence {
        assert!(
            (1..=9).contains(&steps),
            "overlay chains support 1..=9 steps"
        );
        let base = self.base_layout();
        let mut slides = Vec::with_capacity(steps);
        let mut current = base;
        slides.push(SlideSpec {
            rects: current.clone(),
        });
        for n in 0..steps - 1 {
            current.extend(self.annotation(n));
            slides.push(SlideSpec {
                rects: current.clone(),
            });
        }
        let expected_chains = if steps >= 2 {
            vec![(0..steps).collect()]
        } else {
            Vec::new()
        };
        OverlaySequence {
            slides,
            expected_chains,
        }
    }

    /// Like [`DeckBuilder::overlay_chain`], but step `break_at` (0-based)
    /// drops the base layout, so the chain splits there.
    pub fn broken_chain(&mut self, steps: usize, break_at: usize) -> OverlaySequence {
        assert!(break_at >= 1 && break_at < steps && steps <= 9);
        let base = self.base_layout();
        let mut annotations: Vec<Rect> = Vec::new();
        let mut slides = Vec::with_capacity(steps);
        for step in 0..steps {
            if step > 0 {
                annotations.extend(self.annotation(step - 1));
            }
            let mut rects = if step < break_at {
                base.clone()
            } else {
                Vec::new()
            };
            rects.extend(annotations.iter().copied());
            slides.push(SlideSpec { rects });
        }
        let mut expected_chains = Vec::new();
        for run in [
            (0..break_at).collect::<Vec<_>>(),
            (break_at..steps).collect(),
        ] {
            if run.len() >= 2 {
                expected_chains.push(run);
            }
        }
        OverlaySequence {
            slides,
            expected_chains,
        }
    }
}

/// Encode slides as a PDF with one 960x540 pt page each.
pub fn write_pdf(slides: &[SlideSpec]) -> Vec<u8> {
    let mut doc = Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let mut kids: Vec<Object> = Vec::with_capacity(slides.len());
    for slide in slides {
        let mut operations = Vec::with_capacity(slide.rects.len() * 3);
        for r in &slide.rects {
            operations.push(Operation::new("g", vec![Object::Real(r.gray)]));
            operations.push(Operation::new(
                "re",
                vec![
                    Object::Real(r.x),
                    Object::Real(PAGE_HEIGHT - r.y - r.h),
                    Object::Real(r.w),
                    Object::Real(r.h),
                ],
            ));
            operations.push(Operation::new("f", vec![]));
        }
        let content = Content { operations }.encode().expect("content encodes");
        let content_id = doc.add_object(Stream::new(dictionary! {}, content));
        let page_id = doc.add_object(dictionary! {
            "Type" => "Page",
            "Parent" => pages_id,
            "Contents" => content_id,
        });
        kids.push(page_id.into());
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
            "MediaBox" => vec![0.into(), 0.into(), Object::Real(PAGE_WIDTH), Object::Real(PAGE_HEIGHT)],
        }),
    );
    let catalog = doc.add_object(dictionary! { "Type" => "Catalog", "Pages" => pages_id });
    doc.trailer.set("Root", catalog);
    let mut out = Vec::new();
    doc.save_to(&mut out).expect("in-memory PDF write");
    out
}
