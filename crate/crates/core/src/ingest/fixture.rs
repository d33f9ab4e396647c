//! Deterministic synthetic street scenes over the six survey classes.
//!
//! Each image has a static band above the horizon, a road flanked by
//! sidewalks below it, and elliptical human and vehicle instances sized and
//! placed by their distance and bearing. Probability maps are confident
//! around the ground truth except for two controlled effects:
//!
//! * `noise`: exactly `round(noise * n)` of each instance's `n` pixels get a
//!   confident wrong class.
//! * `margin`: that fraction of the remaining human pixels gets an ambiguous
//!   vector with `p(human)` in `[0.3, 0.45]` and `p(drivable)` above it, so
//!   argmax misses them but a cost rule that fears overlooking humans does
//!   not.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{survey_class_names, Dataset, DatasetManifest, ImageData, ImageEntry};
use crate::consequence::{InstanceMap, InstanceRecord, HALF_FIELD_DEG};
use crate::costmatrix::{DRIVABLE, HUMAN};
use crate::decision::{LabelMap, ProbabilityMap, IGNORE};
use crate::error::{Error, Result};

const NONDRIVABLE: u8 = 1;
const STATIC: u8 = 2;
const INFO: u8 = 3;
const DYNAMIC: u8 = 5;
const N_CLASSES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    pub humans_per_image: usize,
    pub vehicles_per_image: usize,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub noise: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_images: 8,
            height: 128,
            width: 256,
            humans_per_image: 3,
            vehicles_per_image: 2,
            min_distance_m: 4.0,
            max_distance_m: 60.0,
            noise: 0.1,
            margin: 0.3,
            seed: 0,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSpec(m));
        if self.n_images == 0 {
            return fail("n_images must be positive".into());
        }
        if self.height < 8 || self.width < 8 {
            return fail(format!(
                "image {}x{} is smaller than 8x8",
                self.height, self.width
            ));
        }
        if self.height > 4096 || self.width > 4096 {
            return fail(format!(
                "image {}x{} is larger than 4096x4096",
                self.height, self.width
            ));
        }
        if self.humans_per_image + self.vehicles_per_image > usize::from(u16::MAX) {
            return fail("too many instances per image".into());
        }
        if !(self.min_distance_m > 0.0
            && self.min_distance_m <= self.max_distance_m
            && self.max_distance_m.is_finite())
        {
            return fail(format!(
                "distance range [{}, {}] is invalid",
                self.min_distance_m, self.max_distance_m
            ));
        }
        for (name, v) in [("noise", self.noise), ("margin", self.margin)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} {v} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

struct Blob {
    class: u8,
    distance: f64,
    bearing: f64,
}

fn image_id(i: usize) -> String {
    format!("scene_{i:04}")
}

/// Generates the dataset in memory. Pure in `spec`: equal specs give equal
/// datasets, independent of thread count.
pub fn generate_fixture(spec: &FixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let images: Vec<ImageData> = (0..spec.n_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            generate_image(spec, &image_id(i), &mut rng)
        })
        .collect();
    let entries = images
        .iter()
        .map(|img| ImageEntry {
            image_id: img.image_id.clone(),
            pmap: format!("{}.pmap", img.image_id),
            gt: format!("{}.lmap", img.image_id),
            instances: format!("{}.imap", img.image_id),
            instance_meta: format!("{}.instances.jsonl", img.image_id),
        })
        .collect();
    Ok(Dataset {
        manifest: DatasetManifest::new(survey_class_names(), entries),
        images,
    })
}

fn generate_image(spec: &FixtureSpec, id: &str, rng: &mut ChaCha8Rng) -> ImageData {
    let (h, w) = (spec.height, spec.width);
    let horizon = h * 2 / 5;
    let mut gt = vec![STATIC; h * w];
    for y in horizon..h {
        // road widens towards the camera
        let t = (y - horizon) as f64 / (h - horizon) as f64;
        let half_road = (0.08 + 0.4 * t) * w as f64;
        for x in 0..w {
            let dx = (x as f64 + 0.5 - w as f64 / 2.0).abs();
            gt[y * w + x] = if dx <= half_road {
                DRIVABLE as u8
            } else {
                NONDRIVABLE
            };
        }
    }
    // a traffic sign above the horizon
    let sign_x = rng.random_range(0..w - 3);
    let sign_y = rng.random_range(0..horizon.max(4) - 3);
    for y in sign_y..sign_y + 3 {
        for x in sign_x..sign_x + 3 {
            gt[y * w + x] = INFO;
        }
    }
    // ego-vehicle hood
    for v in &mut gt[(h - 1) * w..] {
        *v = IGNORE;
    }

    let mut blobs: Vec<Blob> = (0..spec.humans_per_image + spec.vehicles_per_image)
        .map(|k| Blob {
            class: if k < spec.humans_per_image {
                HUMAN as u8
            } else {
                DYNAMIC
            },
            distance: rng.random_range(spec.min_distance_m..=spec.max_distance_m),
            bearing: rng.random_range(-HALF_FIELD_DEG..=HALF_FIELD_DEG),
        })
        .collect();
    // far to near, so nearer instances occlude farther ones
    blobs.sort_by(|a, b| b.distance.total_cmp(&a.distance));

    let mut ids = vec![0u16; h * w];
    let scale = h as f64 * 4.0;
    for (k, b) in blobs.iter().enumerate() {
        let iid = (k + 1) as u16;
        let aspect = if b.class == HUMAN as u8 { 0.4 } else { 1.6 };
        let height_px = (scale / b.distance).clamp(2.0, h as f64 * 0.6);
        let width_px = (height_px * aspect).max(2.0);
        let foot =
            horizon as f64 + (h - 1 - horizon) as f64 * (spec.min_distance_m / b.distance).min(1.0);
        let cx = w as f64 * (0.5 + 0.5 * b.bearing / HALF_FIELD_DEG);
        let cy = foot - height_px / 2.0;
        let (ry, rx) = (height_px / 2.0, width_px / 2.0);
        let y0 = (cy - ry).floor().max(0.0) as usize;
        let y1 = ((cy + ry).ceil() as usize).min(h - 2);
        let x0 = (cx - rx).floor().max(0.0) as usize;
        let x1 = ((cx + rx).ceil() as usize).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dy, dx) = ((y as f64 + 0.5 - cy) / ry, (x as f64 + 0.5 - cx) / rx);
                if dy * dy + dx * dx <= 1.0 {
                    ids[y * w + x] = iid;
                    gt[y * w + x] = b.class;
                }
            }
        }
        // a blob too small to hit a pixel centre still gets one pixel
        let (py, px) = ((cy as usize).min(h - 2), (cx as usize).min(w - 1));
        if !ids.contains(&iid) {
            ids[py * w + px] = iid;
            gt[py * w + px] = b.class;
        }
    }

    // per-pixel intended class after noise, plus ambiguity flags
    let mut intended = gt.clone();
    let mut ambiguous = vec![false; h * w];
    let mut records = Vec::new();
    for (k, b) in blobs.iter().enumerate() {
        let iid = (k + 1) as u16;
        let mut pixels: Vec<usize> = (0..h * w).filter(|&i| ids[i] == iid).collect();
        if pixels.is_empty() {
            continue;
        }
        records.push(InstanceRecord {
            image_id: id.to_string(),
            instance_id: iid,
            class: if b.class == HUMAN as u8 {
                "human"
            } else {
                "dynamic"
            }
            .into(),
            distance_m: b.distance,
            bearing_deg: Some(b.bearing),
            pixel_count: pixels.len() as u32,
            provenance: Some("synthetic".into()),
        });
        pixels.shuffle(rng);
        let n_flip = (spec.noise * pixels.len() as f64).round() as usize;
        for &p in &pixels[..n_flip] {
            let other = rng.random_range(0..N_CLASSES as u8 - 1);
            intended[p] = if other >= b.class { other + 1 } else { other };
        }
        if b.class == HUMAN as u8 {
            let rest = &pixels[n_flip..];
            let n_amb = (spec.margin * rest.len() as f64).round() as usize;
            for &p in &rest[..n_amb] {
                ambiguous[p] = true;
            }
        }
    }
    records.sort_by_key(|r| r.instance_id);

    let mut data = vec![0f32; h * w * N_CLASSES];
    for (i, px) in data.chunks_mut(N_CLASSES).enumerate() {
        fill_pixel(px, intended[i], ambiguous[i], rng);
    }
    ImageData {
        image_id: id.to_string(),
        pmap: ProbabilityMap::new(h, w, N_CLASSES, data).expect("generated vectors are normalized"),
        gt: LabelMap::new(h, w, gt).expect("sizes match"),
        instances: InstanceMap::new(h, w, ids).expect("sizes match"),
        records,
    }
}

fn fill_pixel(px: &mut [f32], class: u8, ambiguous: bool, rng: &mut ChaCha8Rng) {
    let mut p = [0f64; N_CLASSES];
    if ambiguous {
        p.iter_mut().for_each(|v| *v = 0.02);
        p[HUMAN] = rng.random_range(0.3..=0.45);
        p[DRIVABLE] = 1.0 - p[HUMAN] - 0.02 * (N_CLASSES - 2) as f64;
    } else {
        // an ignored ground-truth pixel still gets a confident prediction
        let class = if class == IGNORE { NONDRIVABLE } else { class };
        let top: f64 = rng.random_range(0.75..0.95);
        let weights: [f64; N_CLASSES] = std::array::from_fn(|_| rng.random_range(0.1..1.0));
        let others: f64 = weights
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != usize::from(class))
            .map(|(_, w)| w)
            .sum();
        for (k, v) in p.iter_mut().enumerate() {
            *v = if k == usize::from(class) {
                top
            } else {
                (1.0 - top) * weights[k] / others
            };
        }
    }
    let sum: f64 = p.iter().sum();
    for (o, v) in px.iter_mut().zip(p) {
        *o = (v / sum) as f32;
    }
}
