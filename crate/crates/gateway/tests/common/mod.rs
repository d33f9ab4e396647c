//! Shared fixtures and reference computations for the gateway tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use costsight_core::costmatrix::{AnswerRecord, Perspective};
use costsight_core::decision::{LabelMap, IGNORE};
use costsight_core::ingest::{generate_fixture, Dataset, FixtureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Answers whose external-perspective levels sit `shift` above the
/// passenger levels, with uniform noise of one level.
pub fn answers(n: usize, shift: u8, seed: u64) -> Vec<AnswerRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let external = i % 2 == 1;
            let perspective = if external {
                Perspective::External
            } else {
                Perspective::Passenger
            };
            let target = (i / 2) % 6;
            let levels = (0..6)
                .map(|j| {
                    let base = 1 + ((target + j) % 3) as u8 + if external { shift } else { 0 };
                    (base + rng.random_range(0..=1)).min(6)
                })
                .collect();
            AnswerRecord::new(
                format!("p{}", i / 6),
                perspective,
                format!("img{i}"),
                target,
                levels,
            )
            .unwrap()
        })
        .collect()
}

pub fn small_fixture() -> FixtureSpec {
    FixtureSpec {
        n_images: 4,
        height: 48,
        width: 96,
        ..FixtureSpec::default()
    }
}

pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> (Dataset, PathBuf) {
    let ds = generate_fixture(spec).unwrap();
    let manifest = ds.write_to(dir).unwrap();
    (Dataset::load(&manifest).unwrap(), manifest)
}

/// Per-pixel argmax with ties to the lowest index; void pixels are IGNORE.
pub fn argmax_labels(data: &[f32], n: usize) -> Vec<u8> {
    data.chunks(n)
        .map(|p| {
            if p.iter().all(|&v| v == 0.0) {
                return IGNORE;
            }
            let mut best = 0;
            for k in 1..n {
                if p[k] > p[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

/// Recall of one instance: share of its pixels predicted as `class`.
pub fn recall(pred: &LabelMap, ids: &[u16], id: u16, class: u8) -> f64 {
    let (mut hit, mut total) = (0u64, 0u64);
    for (&p, &i) in pred.labels().iter().zip(ids) {
        if i == id {
            total += 1;
            hit += u64::from(p == class);
        }
    }
    hit as f64 / total as f64
}
