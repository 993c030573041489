//! Visual fingerprints for slide/frame matching and overlay detection.
//!
//! The global hash is a 16x16 difference hash: the image is area-averaged down
//! to 17x16 luma samples and each bit records whether a sample is brighter
//! than its right neighbour by more than [`EDGE_MARGIN`]. The margin keeps flat
//! regions at zero under sensor and compression noise, where a plain `>` would
//! flip coins. Additive brightness shifts leave every comparison unchanged.
//!
//! The grid hash splits the image into 8x8 cells and stores a 64-bit difference
//! hash (9x8 samples) per cell. A flat cell hashes to [`BLANK_CELL`], which lets
//! the curator ask whether one slide's content is a subset of the next.

use std::path::Path;

use image::GrayImage;
use thiserror::Error;

pub const HASH_BITS: u32 = 256;
pub const GRID_SIDE: usize = 8;
pub const GRID_CELLS: usize = GRID_SIDE * GRID_SIDE;
/// Minimum luma step (0-255 scale) between neighbouring samples that counts as an edge.
pub const EDGE_MARGIN: f32 = 4.0;
/// Hash of a cell with no internal edges.
pub const BLANK_CELL: u64 = 0;

#[derive(Debug, Error)]
#[error("cannot decode image {path}: {source}")]
pub struct FingerprintError {
    pub path: String,
    #[source]
    pub source: image::ImageError,
}

/// 256-bit difference hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HashBits(pub [u64; 4]);

impl HashBits {
    pub fn hamming(&self, other: &HashBits) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// `1 - hamming / 256`, in [0, 1].
    pub fn similarity(&self, other: &HashBits) -> f64 {
        1.0 - self.hamming(other) as f64 / HASH_BITS as f64
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub bits: HashBits,
    pub grid_cells: [u64; GRID_CELLS],
}

impl Fingerprint {
    pub fn of(image: &GrayImage) -> Self {
        Fingerprint {
            bits: frame_hash(image),
            grid_cells: grid_hash(image),
        }
    }

    pub fn hamming(&self, other: &Fingerprint) -> u32 {
        self.bits.hamming(&other.bits)
    }

    pub fn similarity(&self, other: &Fingerprint) -> f64 {
        self.bits.similarity(&other.bits)
    }

    pub fn nonblank_cells(&self) -> usize {
        self.grid_cells.iter().filter(|&&c| c != BLANK_CELL).count()
    }
}

/// Decode an image file and fingerprint its luma channel.
pub fn fingerprint_image(path: &Path) -> Result<Fingerprint, FingerprintError> {
    let image = image::open(path).map_err(|source| FingerprintError {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Fingerprint::of(&image.to_luma8()))
}

/// Only the global 256-bit hash; what frame matching needs.
pub fn frame_hash(image: &GrayImage) -> HashBits {
    let samples = area_downscale(image, 17, 16);
    let mut words = [0u64; 4];
    for row in 0..16 {
        for col in 0..16 {
            let left = samples[row * 17 + col];
            let right = samples[row * 17 + col + 1];
            if left - right > EDGE_MARGIN {
                let bit = row * 16 + col;
                words[bit / 64] |= 1 << (bit % 64);
            }
        }
    }
    HashBits(words)
}

/// Per-cell 64-bit difference hashes over an 8x8 grid, row-major.
pub fn grid_hash(image: &GrayImage) -> [u64; GRID_CELLS] {
    const CW: usize = 9;
    const CH: usize = 8;
    let width = GRID_SIDE * CW;
    let samples = area_downscale(image, width as u32, (GRID_SIDE * CH) as u32);
    let mut cells = [BLANK_CELL; GRID_CELLS];
    for (cell_idx, cell) in cells.iter_mut().enumerate() {
        let (cy, cx) = (cell_idx / GRID_SIDE, cell_idx % GRID_SIDE);
        let mut hash = 0u64;
        for r in 0..CH {
            let row = (cy * CH + r) * width + cx * CW;
            for c in 0..CW - 1 {
                if samples[row + c] - samples[row + c + 1] > EDGE_MARGIN {
                    hash |= 1 << (r * 8 + c);
                }
            }
        }
        *cell = hash;
    }
    cells
}

/// Exact area-weighted average of `image` onto an `out_w` x `out_h` grid,
/// row-major, values on the 0-255 scale. Output sample `j` covers the source
/// interval `[j * w / out_w, (j + 1) * w / out_w)` with fractional edge weights.
pub fn area_downscale(image: &GrayImage, out_w: u32, out_h: u32) -> Vec<f32> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return vec![0.0; (out_w * out_h) as usize];
    }
    let cols = axis_weights(w, out_w);
    let rows = axis_weights(h, out_h);
    let raw = image.as_raw();

    // Horizontal pass: every source row reduced to out_w columns.
    let mut horizontal = vec![0f32; (h * out_w) as usize];
    for y in 0..h as usize {
        let src = &raw[y * w as usize..(y + 1) * w as usize];
        let dst = &mut horizontal[y * out_w as usize..(y + 1) * out_w as usize];
        for (slot, taps) in dst.iter_mut().zip(cols.iter()) {
            *slot = taps.iter().map(|&(x, wt)| src[x] as f32 * wt).sum();
        }
    }
    let mut out = vec![0f32; (out_w * out_h) as usize];
    for (oy, taps) in rows.iter().enumerate() {
        let dst = &mut out[oy * out_w as usize..(oy + 1) * out_w as usize];
        for &(y, wt) in taps {
            let src = &horizontal[y * out_w as usize..(y + 1) * out_w as usize];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * wt;
            }
        }
    }
    out
}

/// For each output position, the contributing source indices and their
/// normalized coverage weights.
fn axis_weights(src: u32, dst: u32) -> Vec<Vec<(usize, f32)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|j| {
            let start = j as f64 * scale;
            let end = (j + 1) as f64 * scale;
            let first = start.floor() as u32;
            let last = (end.ceil() as u32).min(src).max(first + 1);
            let mut taps: Vec<(usize, f32)> = (first..last)
                .filter_map(|i| {
                    let lo = start.max(i as f64);
                    let hi = end.min((i + 1) as f64);
                    (hi > lo).then(|| (i as usize, (hi - lo) as f32))
                })
                .collect();
            let total: f32 = taps.iter().map(|t| t.1).sum();
            for t in taps.iter_mut() {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn blocks(w: u32, h: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let v = if (x * 7 / w + y * 5 / h) % 2 == 0 {
                40
            } else {
                210
            };
            Luma([v])
        })
    }

    #[test]
    fn downscale_preserves_mean_of_flat_image() {
        let img = GrayImage::from_pixel(101, 37, Luma([123]));
        for v in area_downscale(&img, 17, 16) {
            assert!((v - 123.0).abs() < 1e-3);
        }
    }

    #[test]
    fn downscale_exact_on_integer_ratio() {
        let img = GrayImage::from_fn(4, 2, |x, _| Luma([if x < 2 { 0 } else { 100 }]));
        assert_eq!(area_downscale(&img, 2, 1), vec![0.0, 100.0]);
    }

    #[test]
    fn flat_image_has_zero_hash_and_blank_grid() {
        let fp = Fingerprint::of(&GrayImage::from_pixel(320, 180, Luma([255])));
        assert_eq!(fp.bits, HashBits::default());
        assert_eq!(fp.nonblank_cells(), 0);
    }

    #[test]
    fn deterministic_and_scale_tolerant() {
        let big = Fingerprint::of(&blocks(960, 540));
        assert_eq!(big, Fingerprint::of(&blocks(960, 540)));
        let small = Fingerprint::of(&blocks(320, 180));
        assert!(big.similarity(&small) >= 0.95, "{}", big.similarity(&small));
    }

    #[test]
    fn similarity_is_one_minus_normalized_hamming() {
        let a = HashBits([0b1011, 0, 0, 1 << 63]);
        let b = HashBits([0b0001, 0, 0, 0]);
        assert_eq!(a.hamming(&b), 3);
        assert_eq!(a.similarity(&b), 1.0 - 3.0 / 256.0);
    }
}
