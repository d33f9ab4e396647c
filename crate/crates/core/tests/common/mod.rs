//! Independent reference implementations used as test oracles. They favour
//! the most literal formulation over speed and share no code with the crate.
#![allow(dead_code)]

use costsight_core::costmatrix::{AnswerRecord, Perspective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-formula F statistic: per off-diagonal cell, group means against
/// the pooled mean, weighted by group sizes; within-group squared deviations
/// divided by `n_answers - 2 N (N - 1)`.
pub fn f_oracle(answers: &[AnswerRecord], group: impl Fn(&AnswerRecord) -> usize) -> (f64, f64) {
    let n = 6;
    let mut ms_b = 0.0;
    let mut ss_w = 0.0;
    for k in 0..n {
        for j in 0..n {
            if j == k {
                continue;
            }
            let mut values: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for a in answers.iter().filter(|a| a.target() == k) {
                values[group(a)].push(f64::from(a.level(j).unwrap()));
            }
            let all: Vec<f64> = values.iter().flatten().copied().collect();
            if all.is_empty() {
                continue;
            }
            let pooled = all.iter().sum::<f64>() / all.len() as f64;
            for v in &values {
                if v.is_empty() {
                    continue;
                }
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                ms_b += v.len() as f64 * (mean - pooled).powi(2);
                ss_w += v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            }
        }
    }
    let df = answers.len() as f64 - (2 * n * (n - 1)) as f64;
    (ms_b, ss_w / df)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Synthetic corpus: `n` answers alternating between perspectives, targets
/// cycling over all classes, levels `base + shift(group) + noise` clamped to
/// 0..=6 where noise is uniform in `-noise..=noise`.
pub fn corpus(
    n: usize,
    base: [[u8; 6]; 6],
    shift: [i8; 2],
    noise: i8,
    seed: u64,
) -> Vec<AnswerRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let g = i % 2;
            let perspective = if g == 0 {
                Perspective::Passenger
            } else {
                Perspective::External
            };
            let target = (i / 2) % 6;
            let levels = (0..6)
                .map(|j| {
                    let v = i16::from(base[target][j])
                        + i16::from(shift[g])
                        + i16::from(rng.random_range(-noise..=noise));
                    v.clamp(0, 6) as u8
                })
                .collect();
            AnswerRecord::new(
                format!("p{i}"),
                perspective,
                format!("img{}", i % 17),
                target,
                levels,
            )
            .unwrap()
        })
        .collect()
}

/// Uniformly random levels, random group labels: a corpus with no group effect.
pub fn null_corpus(n: usize, seed: u64) -> Vec<AnswerRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let perspective = if rng.random_bool(0.5) {
                Perspective::Passenger
            } else {
                Perspective::External
            };
            let target = rng.random_range(0..6);
            let levels = (0..6).map(|_| rng.random_range(0..=6)).collect();
            AnswerRecord::new(format!("p{i}"), perspective, "img", target, levels).unwrap()
        })
        .collect()
}

/// Per-pixel TP/FP/FN counting, one class at a time.
pub fn counts_oracle(pred: &[u8], gt: &[u8], n_classes: usize) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let mut tp = vec![0; n_classes];
    let mut fp = vec![0; n_classes];
    let mut fn_ = vec![0; n_classes];
    for c in 0..n_classes as u8 {
        for i in 0..gt.len() {
            if gt[i] == 255 {
                continue;
            }
            let is_pred = pred[i] == c;
            let is_true = gt[i] == c;
            let slot = usize::from(c);
            if is_pred && is_true {
                tp[slot] += 1;
            } else if is_pred {
                fp[slot] += 1;
            } else if is_true {
                fn_[slot] += 1;
            }
        }
    }
    (tp, fp, fn_)
}

/// Brute-force per-zone tallies from `(distance, detected_a, detected_b)`:
/// `[total, overlooked_a, overlooked_b, both_overlooked, only_a, only_b, both_detected]`.
pub fn zone_oracle(instances: &[(f64, bool, bool)], zones: &[f64]) -> Vec<[u64; 7]> {
    zones
        .iter()
        .map(|&z| {
            let mut t = [0u64; 7];
            for &(d, a, b) in instances {
                if d > z {
                    continue;
                }
                t[0] += 1;
                t[1] += u64::from(!a);
                t[2] += u64::from(!b);
                t[3] += u64::from(!a && !b);
                t[4] += u64::from(a && !b);
                t[5] += u64::from(!a && b);
                t[6] += u64::from(a && b);
            }
            t
        })
        .collect()
}

/// Uniform sample from the probability simplex.
pub fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
