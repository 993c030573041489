//! Synthetic talk videos: a slide timeline rendered to YUV4MPEG2 or GIF with
//! per-frame sensor and block noise.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;

use image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One slide shown from `start_ms` until the next showing (or the end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Showing {
    /// 0-based position in the rendered slide list.
    pub slide: usize,
    pub start_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub showings: Vec<Showing>,
    pub duration_ms: u64,
}

impl Timeline {
    /// Slide on screen at `t_ms`.
    pub fn slide_at(&self, t_ms: u64) -> usize {
        let i = self.showings.partition_point(|s| s.start_ms <= t_ms);
        self.showings[i.saturating_sub(1)].slide
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    /// Uniform per-pixel amplitude.
    pub pixel: u8,
    /// Uniform per-8x8-block offset amplitude, mimicking codec blocking.
    pub block: u8,
}

impl Noise {
    pub const NONE: Noise = Noise { pixel: 0, block: 0 };
}

pub fn add_noise(image: &GrayImage, noise: Noise, rng: &mut ChaCha8Rng) -> GrayImage {
    if noise == Noise::NONE {
        return image.clone();
    }
    let (w, h) = image.dimensions();
    let bw = w.div_ceil(8) as usize;
    let blocks: Vec<i16> = (0..bw * h.div_ceil(8) as usize)
        .map(|_| rng.random_range(-(noise.block as i16)..=noise.block as i16))
        .collect();
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let b = blocks[(y / 8) as usize * bw + (x / 8) as usize];
        let p = rng.random_range(-(noise.pixel as i16)..=noise.pixel as i16);
        px[0] = (px[0] as i16 + b + p).clamp(0, 255) as u8;
    }
    out
}

/// Write 8-bit monochrome YUV4MPEG2 at `fps` frames per second.
pub fn write_y4m(path: &Path, frames: &[GrayImage], fps: u32) -> io::Result<()> {
    let (w, h) = frames.first().map(|f| f.dimensions()).unwrap_or((0, 0));
    let writer = BufWriter::new(File::create(path)?);
    let mut encoder = y4m::encode(w as usize, h as usize, y4m::Ratio::new(fps as usize, 1))
        .with_colorspace(y4m::Colorspace::Cmono)
        .write_header(writer)
        .map_err(y4m_io)?;
    for frame in frames {
        encoder
            .write_frame(&y4m::Frame::new([frame.as_raw(), &[], &[]], None))
            .map_err(y4m_io)?;
    }
    Ok(())
}

fn y4m_io(err: y4m::Error) -> io::Error {
    match err {
        y4m::Error::IoError(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

/// Render `timeline` at `fps` with fresh noise on every frame.
pub fn render_y4m(
    path: &Path,
    slides: &[GrayImage],
    timeline: &Timeline,
    fps: u32,
    noise: Noise,
    seed: u64,
) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (timeline.duration_ms * fps as u64).div_ceil(1000);
    let frames: Vec<GrayImage> = (0..count)
        .map(|i| {
            add_noise(
                &slides[timeline.slide_at(i * 1000 / fps as u64)],
                noise,
                &mut rng,
            )
        })
        .collect();
    write_y4m(path, &frames, fps)
}

pub struct GifFrame {
    pub image: GrayImage,
    /// Display time; rounded down to 10 ms.
    pub delay_ms: u64,
}

const MAX_GIF_DELAY_CS: u64 = u16::MAX as u64;

/// Write an animated GIF with a 256-level gray palette. Holds longer than a
/// GIF delay field allows are split into repeated frames.
pub fn write_gif(path: &Path, frames: &[GifFrame]) -> io::Result<()> {
    let (w, h) = frames
        .first()
        .map(|f| f.image.dimensions())
        .unwrap_or((0, 0));
    let palette: Vec<u8> = (0..=255u8).flat_map(|v| [v, v, v]).collect();
    let writer = BufWriter::new(File::create(path)?);
    let mut encoder =
        gif::Encoder::new(writer, w as u16, h as u16, &palette).map_err(io::Error::other)?;
    for frame in frames {
        let mut remaining = frame.delay_ms / 10;
        loop {
            let chunk = remaining.min(MAX_GIF_DELAY_CS);
            let mut out = gif::Frame::from_indexed_pixels(
                w as u16,
                h as u16,
                frame.image.as_raw().clone(),
                None,
            );
            out.delay = chunk as u16;
            encoder.write_frame(&out).map_err(io::Error::other)?;
            remaining -= chunk;
            if remaining == 0 {
                break;
            }
        }
    }
    Ok(())
}

/// Render `timeline` as a GIF. Each showing starts a new frame and the
/// picture is re-noised every `refresh_ms` while it stays on screen.
pub fn render_gif(
    path: &Path,
    slides: &[GrayImage],
    timeline: &Timeline,
    refresh_ms: u64,
    noise: Noise,
    seed: u64,
) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    for (i, showing) in timeline.showings.iter().enumerate() {
        let end = timeline
            .showings
            .get(i + 1)
            .map_or(timeline.duration_ms, |s| s.start_ms);
        let mut t = showing.start_ms;
        while t < end {
            let next = (t + refresh_ms).min(end);
            frames.push(GifFrame {
                image: add_noise(&slides[showing.slide], noise, &mut rng),
                delay_ms: next - t,
            });
            t = next;
        }
    }
    write_gif(path, &frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    #[test]
    fn timeline_lookup() {
        let tl = Timeline {
            showings: vec![
                Showing {
                    slide: 2,
                    start_ms: 0,
                },
                Showing {
                    slide: 0,
                    start_ms: 3000,
                },
            ],
            duration_ms: 5000,
        };
        assert_eq!(tl.slide_at(0), 2);
        assert_eq!(tl.slide_at(2999), 2);
        assert_eq!(tl.slide_at(3000), 0);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let img = GrayImage::from_pixel(32, 16, Luma([128]));
        let noise = Noise { pixel: 5, block: 3 };
        let a = add_noise(&img, noise, &mut ChaCha8Rng::seed_from_u64(1));
        let b = add_noise(&img, noise, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.pixels().all(|p| (120..=136).contains(&p[0])));
        assert!(a.pixels().any(|p| p[0] != 128));
    }
}
