//! Talk video decoding: container probing and fixed-rate frame sampling.
//!
//! Two containers are decoded natively: YUV4MPEG2 (`.y4m`, constant frame
//! rate) and animated GIF (`.gif`, per-frame delays in 10 ms units). Anything
//! else is handed to `ffprobe`/`ffmpeg` when they are on `PATH`.
//!
//! Sampling visits the instants `t_k = k * 1000 / rate_hz` ms for every
//! `t_k < duration` and yields the frame on screen at `t_k` as 8-bit luma.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use image::{AnimationDecoder, GrayImage};
use serde::Deserialize;
use thiserror::Error;

use crate::model::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Container {
    Y4m,
    Gif,
    Ffmpeg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoInfo {
    pub container: Container,
    pub width: u32,
    pub height: u32,
    pub duration: Timestamp,
    pub frame_count: u64,
    pub video_streams: u32,
}

/// One sampled frame. `source_index` identifies the decoded frame; two samples
/// with the same index carry the same pixels.
#[derive(Debug, Clone)]
pub struct SampledFrame {
    pub timestamp: Timestamp,
    pub source_index: u64,
    pub image: Arc<GrayImage>,
}

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("cannot open video {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("unsupported video {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("decode failure in {path} after {}: {message}", last_good_label(.last_good))]
    Decode {
        path: PathBuf,
        last_good: Option<Timestamp>,
        message: String,
    },
    #[error("sampling rate must be a positive finite number, got {0}")]
    InvalidRate(f64),
}

fn last_good_label(last_good: &Option<Timestamp>) -> String {
    match last_good {
        Some(t) => format!("last good frame at {t}"),
        None => "no good frame".to_string(),
    }
}

pub type FrameStream = Box<dyn Iterator<Item = Result<SampledFrame, VideoError>>>;

fn container_of(path: &Path) -> Container {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("y4m") => Container::Y4m,
        Some("gif") => Container::Gif,
        _ => Container::Ffmpeg,
    }
}

/// Read container metadata. Native containers are scanned to the end, so a
/// truncated file fails here rather than midway through sync.
pub fn probe(path: &Path) -> Result<VideoInfo, VideoError> {
    match container_of(path) {
        Container::Y4m => y4m_probe(path),
        Container::Gif => gif_probe(path),
        Container::Ffmpeg => ffmpeg_probe(path),
    }
}

/// Stream frames sampled at `rate_hz`. The first sample is at 0 ms.
pub fn sample_frames(path: &Path, rate_hz: f64) -> Result<FrameStream, VideoError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(VideoError::InvalidRate(rate_hz));
    }
    match container_of(path) {
        Container::Y4m => Ok(Box::new(Y4mSampler::open(path, rate_hz)?)),
        Container::Gif => Ok(Box::new(GifSampler::open(path, rate_hz)?)),
        Container::Ffmpeg => Ok(Box::new(FfmpegSampler::open(path, rate_hz)?)),
    }
}

/// Millisecond offset of sample `k`.
pub fn sample_instant(k: u64, rate_hz: f64) -> Timestamp {
    Timestamp::from_millis((k as f64 * 1000.0 / rate_hz).floor() as u64)
}

/// Number of samples `sample_frames` yields for a video of this duration.
pub fn expected_sample_count(duration: Timestamp, rate_hz: f64) -> u64 {
    let mut k = (duration.millis() as f64 * rate_hz / 1000.0).floor() as u64;
    while k > 0 && sample_instant(k - 1, rate_hz) >= duration {
        k -= 1;
    }
    while sample_instant(k, rate_hz) < duration {
        k += 1;
    }
    k
}

fn open(path: &Path) -> Result<File, VideoError> {
    File::open(path).map_err(|source| VideoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn decode_error(path: &Path, last_good: Option<Timestamp>, message: impl ToString) -> VideoError {
    VideoError::Decode {
        path: path.to_path_buf(),
        last_good,
        message: message.to_string(),
    }
}

// ---------------------------------------------------------------------------
// YUV4MPEG2

struct CountingReader<R> {
    inner: R,
    consumed: Arc<AtomicU64>,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.consumed.fetch_add(n as u64, Ordering::Relaxed);
        Ok(n)
    }
}

struct Y4mStream {
    path: PathBuf,
    decoder: y4m::Decoder<CountingReader<BufReader<File>>>,
    consumed: Arc<AtomicU64>,
    file_len: u64,
    fps: (u64, u64),
    width: u32,
    height: u32,
    expand_range: bool,
    next_index: u64,
}

impl Y4mStream {
    fn open(path: &Path) -> Result<Self, VideoError> {
        let file = open(path)?;
        let file_len = file.metadata().map(|m| m.len()).unwrap_or(0);
        let consumed = Arc::new(AtomicU64::new(0));
        let reader = CountingReader {
            inner: BufReader::new(file),
            consumed: consumed.clone(),
        };
        let decoder = y4m::decode(reader).map_err(|e| match e {
            y4m::Error::IoError(source) => VideoError::Open {
                path: path.to_path_buf(),
                source,
            },
            other => VideoError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("bad YUV4MPEG2 header: {other:?}"),
            },
        })?;
        let rate = decoder.get_framerate();
        if rate.num == 0 || rate.den == 0 {
            return Err(VideoError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("frame rate {}:{}", rate.num, rate.den),
            });
        }
        let params = String::from_utf8_lossy(decoder.get_raw_params()).into_owned();
        let full_range = params
            .split_whitespace()
            .any(|p| p.eq_ignore_ascii_case("XCOLORRANGE=FULL"));
        let mono = matches!(
            decoder.get_colorspace(),
            y4m::Colorspace::Cmono | y4m::Colorspace::Cmono12
        );
        Ok(Y4mStream {
            path: path.to_path_buf(),
            width: decoder.get_width() as u32,
            height: decoder.get_height() as u32,
            fps: (rate.num as u64, rate.den as u64),
            expand_range: !mono && !full_range,
            decoder,
            consumed,
            file_len,
            next_index: 0,
        })
    }

    fn pts(&self, index: u64) -> Timestamp {
        Timestamp::from_millis(index * 1000 * self.fps.1 / self.fps.0)
    }

    /// Index of the frame on screen at `t`.
    fn frame_at(&self, t: Timestamp) -> u64 {
        t.millis() * self.fps.0 / (1000 * self.fps.1)
    }

    /// Decode the next frame, converting it to luma only when `keep` is set.
    fn advance(&mut self, keep: bool) -> Result<Step, VideoError> {
        let before = self.consumed.load(Ordering::Relaxed);
        let last_good = self.next_index.checked_sub(1).map(|i| self.pts(i));
        let depth = self.decoder.get_bit_depth();
        let bytes_per_sample = self.decoder.get_bytes_per_sample();
        let (width, height, expand) = (self.width, self.height, self.expand_range);
        let frame = match self.decoder.read_frame() {
            Ok(frame) => frame,
            Err(y4m::Error::EOF) if before == self.file_len => return Ok(Step::End),
            Err(y4m::Error::EOF) => {
                return Err(decode_error(&self.path, last_good, "truncated frame"))
            }
            Err(other) => return Err(decode_error(&self.path, last_good, format!("{other:?}"))),
        };
        self.next_index += 1;
        if !keep {
            return Ok(Step::Skipped);
        }
        let plane = frame.get_y_plane();
        let shift = depth.saturating_sub(8);
        let luma: Vec<u8> = (0..(width * height) as usize)
            .map(|i| {
                let raw = if bytes_per_sample == 2 {
                    (u16::from_le_bytes([plane[2 * i], plane[2 * i + 1]]) >> shift) as u8
                } else {
                    plane[i]
                };
                if expand {
                    ((raw.clamp(16, 235) as u32 - 16) * 255 / 219) as u8
                } else {
                    raw
                }
            })
            .collect();
        Ok(Step::Frame(
            GrayImage::from_raw(width, height, luma).expect("plane sized to frame"),
        ))
    }
}

enum Step {
    End,
    Skipped,
    Frame(GrayImage),
}

fn y4m_probe(path: &Path) -> Result<VideoInfo, VideoError> {
    let mut stream = Y4mStream::open(path)?;
    while !matches!(stream.advance(false)?, Step::End) {}
    let frame_count = stream.next_index;
    Ok(VideoInfo {
        container: Container::Y4m,
        width: stream.width,
        height: stream.height,
        duration: stream.pts(frame_count),
        frame_count,
        video_streams: 1,
    })
}

struct Y4mSampler {
    stream: Y4mStream,
    rate_hz: f64,
    k: u64,
    current: Option<(u64, Arc<GrayImage>)>,
    done: bool,
}

impl Y4mSampler {
    fn open(path: &Path, rate_hz: f64) -> Result<Self, VideoError> {
        Ok(Y4mSampler {
            stream: Y4mStream::open(path)?,
            rate_hz,
            k: 0,
            current: None,
            done: false,
        })
    }
}

impl Iterator for Y4mSampler {
    type Item = Result<SampledFrame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let wanted = self.stream.frame_at(sample_instant(self.k, self.rate_hz));
        loop {
            if let Some((index, image)) = &self.current {
                if *index == wanted {
                    self.k += 1;
                    return Some(Ok(SampledFrame {
                        timestamp: self.stream.pts(*index),
                        source_index: *index,
                        image: image.clone(),
                    }));
                }
            }
            let index = self.stream.next_index;
            let keep = index == wanted;
            match self.stream.advance(keep) {
                Ok(Step::Frame(image)) => self.current = Some((index, Arc::new(image))),
                Ok(Step::Skipped) => {}
                Ok(Step::End) => {
                    self.done = true;
                    return None;
                }
                Err(err) => {
                    self.done = true;
                    return Some(Err(err));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Animated GIF

fn gif_frames(path: &Path) -> Result<image::Frames<'static>, VideoError> {
    let reader = BufReader::new(open(path)?);
    let decoder =
        image::codecs::gif::GifDecoder::new(reader).map_err(|e| VideoError::Unsupported {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    Ok(decoder.into_frames())
}

fn delay_ms(frame: &image::Frame) -> u64 {
    let (num, den) = frame.delay().numer_denom_ms();
    if den == 0 {
        0
    } else {
        (num / den) as u64
    }
}

fn gif_probe(path: &Path) -> Result<VideoInfo, VideoError> {
    let mut duration = 0u64;
    let mut frame_count = 0u64;
    let mut dims = None;
    for frame in gif_frames(path)? {
        let frame = frame.map_err(|e| {
            decode_error(
                path,
                (frame_count > 0).then(|| Timestamp::from_millis(duration)),
                e,
            )
        })?;
        let buffer = frame.buffer();
        dims.get_or_insert((buffer.width(), buffer.height()));
        duration += delay_ms(&frame);
        frame_count += 1;
    }
    let (width, height) = dims.ok_or_else(|| VideoError::Unsupported {
        path: path.to_path_buf(),
        reason: "no frames".to_string(),
    })?;
    Ok(VideoInfo {
        container: Container::Gif,
        width,
        height,
        duration: Timestamp::from_millis(duration),
        frame_count,
        video_streams: 1,
    })
}

struct GifSampler {
    path: PathBuf,
    frames: image::Frames<'static>,
    rate_hz: f64,
    k: u64,
    /// Frame on screen during `[start, end)`.
    current: Option<(u64, Timestamp, Timestamp, Arc<GrayImage>)>,
    next_index: u64,
    elapsed: u64,
    done: bool,
}

impl GifSampler {
    fn open(path: &Path, rate_hz: f64) -> Result<Self, VideoError> {
        Ok(GifSampler {
            path: path.to_path_buf(),
            frames: gif_frames(path)?,
            rate_hz,
            k: 0,
            current: None,
            next_index: 0,
            elapsed: 0,
            done: false,
        })
    }
}

impl Iterator for GifSampler {
    type Item = Result<SampledFrame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        // GIF delays are in centiseconds.
        let t = sample_instant(self.k, self.rate_hz);
        let t = Timestamp::from_millis(t.millis() / 10 * 10);
        loop {
            if let Some((index, start, end, image)) = &self.current {
                if *start <= t && t < *end {
                    self.k += 1;
                    return Some(Ok(SampledFrame {
                        timestamp: t,
                        source_index: *index,
                        image: image.clone(),
                    }));
                }
            }
            match self.frames.next() {
                None => {
                    self.done = true;
                    return None;
                }
                Some(Err(e)) => {
                    self.done = true;
                    let last_good = self.current.as_ref().map(|c| c.1);
                    return Some(Err(decode_error(&self.path, last_good, e)));
                }
                Some(Ok(frame)) => {
                    let start = self.elapsed;
                    self.elapsed += delay_ms(&frame);
                    let index = self.next_index;
                    self.next_index += 1;
                    if self.elapsed > t.millis() {
                        let luma = image::DynamicImage::ImageRgba8(frame.into_buffer()).to_luma8();
                        self.current = Some((
                            index,
                            Timestamp::from_millis(start),
                            Timestamp::from_millis(self.elapsed),
                            Arc::new(luma),
                        ));
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ffmpeg subprocess

#[derive(Deserialize)]
struct FfprobeOutput {
    #[serde(default)]
    streams: Vec<FfprobeStream>,
    format: Option<FfprobeFormat>,
}

#[derive(Deserialize)]
struct FfprobeStream {
    width: Option<u32>,
    height: Option<u32>,
    nb_frames: Option<String>,
    duration: Option<String>,
}

#[derive(Deserialize)]
struct FfprobeFormat {
    duration: Option<String>,
}

fn secs_to_timestamp(text: &str) -> Option<Timestamp> {
    let secs: f64 = text.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0)
        .then(|| Timestamp::from_millis((secs * 1000.0).round() as u64))
}

/// True when `ffprobe` can be executed.
pub fn ffmpeg_available() -> bool {
    Command::new("ffprobe")
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn ffmpeg_probe(path: &Path) -> Result<VideoInfo, VideoError> {
    open(path)?;
    let output = Command::new("ffprobe")
        .args(["-v", "error", "-select_streams", "v", "-show_entries"])
        .arg("stream=width,height,nb_frames,duration:format=duration")
        .args(["-of", "json"])
        .arg(path)
        .output()
        .map_err(|e| VideoError::Unsupported {
            path: path.to_path_buf(),
            reason: format!("not a native container and ffprobe is unavailable: {e}"),
        })?;
    if !output.status.success() {
        return Err(VideoError::Unsupported {
            path: path.to_path_buf(),
            reason: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    let parsed: FfprobeOutput =
        serde_json::from_slice(&output.stdout).map_err(|e| VideoError::Unsupported {
            path: path.to_path_buf(),
            reason: format!("unreadable ffprobe output: {e}"),
        })?;
    let stream = parsed
        .streams
        .first()
        .ok_or_else(|| VideoError::Unsupported {
            path: path.to_path_buf(),
            reason: "no video stream".to_string(),
        })?;
    let duration = stream
        .duration
        .as_deref()
        .or(parsed.format.as_ref().and_then(|f| f.duration.as_deref()))
        .and_then(secs_to_timestamp)
        .unwrap_or(Timestamp::ZERO);
    Ok(VideoInfo {
        container: Container::Ffmpeg,
        width: stream.width.unwrap_or(0),
        height: stream.height.unwrap_or(0),
        duration,
        frame_count: stream
            .nb_frames
            .as_deref()
            .and_then(|n| n.parse().ok())
            .unwrap_or(0),
        video_streams: parsed.streams.len() as u32,
    })
}

struct FfmpegSampler {
    path: PathBuf,
    child: Child,
    stdout: BufReader<ChildStdout>,
    width: u32,
    height: u32,
    rate_hz: f64,
    k: u64,
    done: bool,
}

impl FfmpegSampler {
    fn open(path: &Path, rate_hz: f64) -> Result<Self, VideoError> {
        let info = ffmpeg_probe(path)?;
        let mut child = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-map", "0:v:0", "-vf"])
            .arg(format!("fps={rate_hz}:round=down"))
            .args(["-f", "rawvideo", "-pix_fmt", "gray", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| VideoError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("cannot start ffmpeg: {e}"),
            })?;
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(FfmpegSampler {
            path: path.to_path_buf(),
            child,
            stdout,
            width: info.width,
            height: info.height,
            rate_hz,
            k: 0,
            done: false,
        })
    }
}

impl Iterator for FfmpegSampler {
    type Item = Result<SampledFrame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = vec![0u8; (self.width * self.height) as usize];
        let last_good = self
            .k
            .checked_sub(1)
            .map(|k| sample_instant(k, self.rate_hz));
        let at_end = self
            .stdout
            .fill_buf()
            .map(|b| b.is_empty())
            .unwrap_or(false);
        if at_end {
            self.done = true;
            return match self.child.wait() {
                Ok(status) if status.success() => None,
                Ok(status) => Some(Err(decode_error(
                    &self.path,
                    last_good,
                    format!("ffmpeg exited with {status}"),
                ))),
                Err(e) => Some(Err(decode_error(&self.path, last_good, e))),
            };
        }
        if let Err(e) = self.stdout.read_exact(&mut buf) {
            self.done = true;
            let _ = self.child.kill();
            return Some(Err(decode_error(&self.path, last_good, e)));
        }
        let index = self.k;
        self.k += 1;
        let image =
            GrayImage::from_raw(self.width, self.height, buf).expect("buffer sized to frame");
        Some(Ok(SampledFrame {
            timestamp: sample_instant(index, self.rate_hz),
            source_index: index,
            image: Arc::new(image),
        }))
    }
}

impl Drop for FfmpegSampler {
    fn drop(&mut self) {
        if !self.done {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}
