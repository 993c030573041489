use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use image::GrayImage;
use partitur_core::exec::Exec;
use partitur_core::extract::render_pages_gray;
use partitur_core::fingerprint::Fingerprint;
use partitur_core::fixtures::deck::write_pdf;
use partitur_core::fixtures::demo;
use partitur_core::model::Timestamp;
use partitur_core::sync::hash_frames;
use partitur_core::video::SampledFrame;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn rasterize(c: &mut Criterion) {
    let pdf = write_pdf(&demo::deck());
    let mut group = c.benchmark_group("rasterize_17_pages");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| render_pages_gray(&pdf, 640, 360, exec).unwrap())
        });
    }
    group.finish();
}

fn fingerprint(c: &mut Criterion) {
    let pdf = write_pdf(&demo::deck());
    let pages: Vec<GrayImage> = render_pages_gray(&pdf, 960, 540, Exec::Sequential).unwrap();
    let mut group = c.benchmark_group("fingerprint_17_slides");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| exec.map(&pages, Fingerprint::of))
        });
    }
    group.finish();
}

fn frame_hashing(c: &mut Criterion) {
    let pdf = write_pdf(&demo::deck());
    let pages: Vec<Arc<GrayImage>> = render_pages_gray(&pdf, 640, 360, Exec::Sequential)
        .unwrap()
        .into_iter()
        .map(Arc::new)
        .collect();
    // Every sample is a distinct source frame, so nothing is memoized.
    let frames: Vec<SampledFrame> = (0..256u64)
        .map(|i| SampledFrame {
            timestamp: Timestamp::from_millis(i * 500),
            source_index: i,
            image: pages[i as usize % pages.len()].clone(),
        })
        .collect();
    let mut group = c.benchmark_group("hash_256_frames");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| hash_frames(frames.iter().cloned().map(Ok), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rasterize, fingerprint, frame_hashing);
criterion_main!(benches);
