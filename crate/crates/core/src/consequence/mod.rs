//! Instance-level safety evaluation of two decision rules: which human
//! instances each rule detects or overlooks inside nested braking-distance
//! zones, and how precise each rule's human predictions are.

mod birdseye;

pub use birdseye::{
    birdseye_export, birdseye_wedge, ground_position, BirdseyePlot, PlotLayout, PlotPoint,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{LabelMap, IGNORE};
use crate::error::{Error, Result};

/// Half of the camera's horizontal field of view, in degrees.
pub const HALF_FIELD_DEG: f64 = 30.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `H x W` instance ids; 0 marks pixels outside every instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    height: usize,
    width: usize,
    ids: Vec<u16>,
}

impl InstanceMap {
    pub fn new(height: usize, width: usize, ids: Vec<u16>) -> Result<Self> {
        if ids.len() != height * width {
            return Err(Error::shape(
                format!("{} ids", height * width),
                format!("{} ids", ids.len()),
            ));
        }
        Ok(Self { height, width, ids })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            ids: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ids(&self) -> &[u16] {
        &self.ids
    }

    pub fn ids_mut(&mut self) -> &mut [u16] {
        &mut self.ids
    }

    pub fn pixel_count(&self, id: u16) -> usize {
        self.ids.iter().filter(|&&v| v == id).count()
    }
}

/// Metadata of one ground-truth instance (one JSON line on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub image_id: String,
    pub instance_id: u16,
    /// Coarse class name, e.g. `"human"`.
    pub class: String,
    pub distance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bearing_deg: Option<f64>,
    pub pixel_count: u32,
    /// How the distance was obtained (free text).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl InstanceRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Error::schema(
                format!("instance {}/{}", self.image_id, self.instance_id),
                field,
                reason,
            )
        };
        if self.instance_id == 0 {
            return Err(bad("instance_id", "0 is reserved for background".into()));
        }
        if !self.distance_m.is_finite() || self.distance_m < 0.0 {
            return Err(bad(
                "distance_m",
                format!("{} is not a finite distance", self.distance_m),
            ));
        }
        if self.pixel_count == 0 {
            return Err(bad("pixel_count", "must be at least 1".into()));
        }
        if let Some(b) = self.bearing_deg {
            if !b.is_finite() || b.abs() > HALF_FIELD_DEG {
                return Err(bad(
                    "bearing_deg",
                    format!("{b} is outside the field of view"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    pub max_distance_m: f64,
}

/// Nested distance zones: a zone holds every instance at most
/// `max_distance_m` away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Zone>", into = "Vec<Zone>")]
pub struct ZoneConfig {
    zones: Vec<Zone>,
}

impl ZoneConfig {
    pub fn new(zones: Vec<Zone>) -> Result<Self> {
        if zones.is_empty() {
            return Err(Error::InvalidZones("no zones".into()));
        }
        for z in &zones {
            if !z.max_distance_m.is_finite() || z.max_distance_m <= 0.0 {
                return Err(Error::InvalidZones(format!(
                    "{}: distance must be positive",
                    z.name
                )));
            }
        }
        if zones
            .windows(2)
            .any(|w| w[1].max_distance_m <= w[0].max_distance_m)
        {
            return Err(Error::InvalidZones(
                "distances must be strictly increasing".into(),
            ));
        }
        Ok(Self { zones })
    }

    /// Zones named after their radius, e.g. `"20.6m"`.
    pub fn from_distances(distances: &[f64]) -> Result<Self> {
        Self::new(
            distances
                .iter()
                .map(|&d| Zone {
                    name: format!("{d}m"),
                    max_distance_m: d,
                })
                .collect(),
        )
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn max_distance(&self) -> f64 {
        self.zones.last().map_or(0.0, |z| z.max_distance_m)
    }
}

impl Default for ZoneConfig {
    /// Braking distances at 30 km/h and 50 km/h.
    fn default() -> Self {
        Self::new(vec![
            Zone {
                name: "30kmh".into(),
                max_distance_m: 20.6,
            },
            Zone {
                name: "50kmh".into(),
                max_distance_m: 46.5,
            },
        ])
        .expect("default zones are valid")
    }
}

impl TryFrom<Vec<Zone>> for ZoneConfig {
    type Error = Error;

    fn try_from(zones: Vec<Zone>) -> Result<Self> {
        Self::new(zones)
    }
}

impl From<ZoneConfig> for Vec<Zone> {
    fn from(c: ZoneConfig) -> Self {
        c.zones
    }
}

pub fn zone_membership(distance_m: f64, zones: &ZoneConfig) -> Vec<&str> {
    zones
        .zones
        .iter()
        .filter(|z| distance_m <= z.max_distance_m)
        .map(|z| z.name.as_str())
        .collect()
}

/// Fraction of the instance's pixels predicted as `class`.
pub fn instance_recall(
    pred: &LabelMap,
    instances: &InstanceMap,
    id: u16,
    class: u8,
) -> Result<f64> {
    if pred.height() != instances.height || pred.width() != instances.width {
        return Err(Error::DatasetMismatch(format!(
            "prediction {}x{} vs instances {}x{}",
            pred.height(),
            pred.width(),
            instances.height,
            instances.width
        )));
    }
    let (mut total, mut hit) = (0usize, 0usize);
    for (&iid, &p) in instances.ids.iter().zip(pred.labels()) {
        if iid == id {
            total += 1;
            hit += usize::from(p == class);
        }
    }
    if id == 0 || total == 0 {
        return Err(Error::UnknownInstance(id));
    }
    Ok(hit as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub instance_id: u16,
    pub recall: f64,
    pub detected: bool,
    pub threshold: f64,
}

/// Detected iff recall strictly exceeds the threshold.
pub fn classify_instance(instance_id: u16, recall: f64, threshold: f64) -> DetectionVerdict {
    DetectionVerdict {
        instance_id,
        recall,
        detected: recall > threshold,
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DetectedBoth,
    OnlyA,
    OnlyB,
    OverlookedBoth,
}

impl Outcome {
    fn from_flags(a: bool, b: bool) -> Self {
        match (a, b) {
            (true, true) => Outcome::DetectedBoth,
            (true, false) => Outcome::OnlyA,
            (false, true) => Outcome::OnlyB,
            (false, false) => Outcome::OverlookedBoth,
        }
    }

    fn swapped(self) -> Self {
        match self {
            Outcome::OnlyA => Outcome::OnlyB,
            Outcome::OnlyB => Outcome::OnlyA,
            other => other,
        }
    }
}

/// One evaluation image with both rules' predictions.
#[derive(Debug, Clone, Copy)]
pub struct SceneEval<'a> {
    pub image_id: &'a str,
    pub pred_a: &'a LabelMap,
    pub pred_b: &'a LabelMap,
    pub gt: &'a LabelMap,
    pub instances: &'a InstanceMap,
    pub records: &'a [InstanceRecord],
}

#[derive(Debug, Clone)]
pub struct ConsequenceConfig {
    pub zones: ZoneConfig,
    pub threshold: f64,
    pub human_class: u8,
    pub human_name: String,
}

impl Default for ConsequenceConfig {
    fn default() -> Self {
        Self {
            zones: ZoneConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            human_class: crate::costmatrix::HUMAN as u8,
            human_name: "human".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSummary {
    pub name: String,
    pub max_distance_m: f64,
    pub total: u64,
    pub overlooked_a: u64,
    pub overlooked_b: u64,
    pub overlooked_both: u64,
    pub only_a: u64,
    pub only_b: u64,
    pub detected_both: u64,
}

impl ZoneSummary {
    fn add(&mut self, outcome: Outcome) {
        self.total += 1;
        match outcome {
            Outcome::DetectedBoth => self.detected_both += 1,
            Outcome::OnlyA => {
                self.only_a += 1;
                self.overlooked_b += 1;
            }
            Outcome::OnlyB => {
                self.only_b += 1;
                self.overlooked_a += 1;
            }
            Outcome::OverlookedBoth => {
                self.overlooked_both += 1;
                self.overlooked_a += 1;
                self.overlooked_b += 1;
            }
        }
    }
}

/// Pixel-level precision of one rule's human predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RulePrecision {
    pub tp_pixels: u64,
    pub fp_pixels: u64,
    pub predicted_pixels: u64,
    pub precision: Option<f64>,
}

impl RulePrecision {
    fn from_counts(tp: u64, fp: u64) -> Self {
        Self {
            tp_pixels: tp,
            fp_pixels: fp,
            predicted_pixels: tp + fp,
            precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePoint {
    pub image_id: String,
    pub instance_id: u16,
    pub distance_m: f64,
    pub bearing_deg: Option<f64>,
    pub recall_a: f64,
    pub recall_b: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsequenceReport {
    pub threshold: f64,
    pub zones: Vec<ZoneSummary>,
    pub precision_a: RulePrecision,
    pub precision_b: RulePrecision,
    /// Every human instance, in input order.
    pub points: Vec<InstancePoint>,
}

impl ConsequenceReport {
    /// The same report with rules A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            threshold: self.threshold,
            zones: self
                .zones
                .iter()
                .map(|z| ZoneSummary {
                    overlooked_a: z.overlooked_b,
                    overlooked_b: z.overlooked_a,
                    only_a: z.only_b,
                    only_b: z.only_a,
                    ..z.clone()
                })
                .collect(),
            precision_a: self.precision_b,
            precision_b: self.precision_a,
            points: self
                .points
                .iter()
                .map(|p| InstancePoint {
                    recall_a: p.recall_b,
                    recall_b: p.recall_a,
                    outcome: p.outcome.swapped(),
                    ..p.clone()
                })
                .collect(),
        }
    }
}

struct SceneResult {
    points: Vec<InstancePoint>,
    tp: [u64; 2],
    fp: [u64; 2],
}

fn evaluate_scene(scene: &SceneEval<'_>, config: &ConsequenceConfig) -> Result<SceneResult> {
    let (h, w) = (scene.gt.height(), scene.gt.width());
    for (name, lm) in [("pred_a", scene.pred_a), ("pred_b", scene.pred_b)] {
        if lm.height() != h || lm.width() != w {
            return Err(Error::DatasetMismatch(format!(
                "{}: {name} is {}x{}, ground truth {h}x{w}",
                scene.image_id,
                lm.height(),
                lm.width()
            )));
        }
    }
    if scene.instances.height != h || scene.instances.width != w {
        return Err(Error::DatasetMismatch(format!(
            "{}: instance raster is {}x{}, ground truth {h}x{w}",
            scene.image_id, scene.instances.height, scene.instances.width
        )));
    }

    let human = config.human_class;
    let mut tp = [0u64; 2];
    let mut fp = [0u64; 2];
    for (rule, pred) in [scene.pred_a, scene.pred_b].into_iter().enumerate() {
        for (&p, &g) in pred.labels().iter().zip(scene.gt.labels()) {
            if p != human || g == IGNORE {
                continue;
            }
            if g == human {
                tp[rule] += 1;
            } else {
                fp[rule] += 1;
            }
        }
    }

    let mut points = Vec::new();
    for record in scene
        .records
        .iter()
        .filter(|r| r.class == config.human_name)
    {
        if record.image_id != scene.image_id {
            return Err(Error::DatasetMismatch(format!(
                "instance {} belongs to {}, not {}",
                record.instance_id, record.image_id, scene.image_id
            )));
        }
        record.validate()?;
        let recall_of = |pred| {
            instance_recall(pred, scene.instances, record.instance_id, human).map_err(|_| {
                Error::DatasetMismatch(format!(
                    "{}: instance {} has no pixels in the raster",
                    scene.image_id, record.instance_id
                ))
            })
        };
        let recall_a = recall_of(scene.pred_a)?;
        let recall_b = recall_of(scene.pred_b)?;
        let a = classify_instance(record.instance_id, recall_a, config.threshold);
        let b = classify_instance(record.instance_id, recall_b, config.threshold);
        points.push(InstancePoint {
            image_id: record.image_id.clone(),
            instance_id: record.instance_id,
            distance_m: record.distance_m,
            bearing_deg: record.bearing_deg,
            recall_a,
            recall_b,
            outcome: Outcome::from_flags(a.detected, b.detected),
        });
    }
    Ok(SceneResult { points, tp, fp })
}

/// Compares rules A and B over a set of images.
pub fn consequences(
    scenes: &[SceneEval<'_>],
    config: &ConsequenceConfig,
) -> Result<ConsequenceReport> {
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(Error::InvalidZones(format!(
            "threshold {} outside [0, 1]",
            config.threshold
        )));
    }
    let per_scene = scenes
        .par_iter()
        .map(|s| evaluate_scene(s, config))
        .collect::<Result<Vec<_>>>()?;

    let mut zones: Vec<ZoneSummary> = config
        .zones
        .zones()
        .iter()
        .map(|z| ZoneSummary {
            name: z.name.clone(),
            max_distance_m: z.max_distance_m,
            total: 0,
            overlooked_a: 0,
            overlooked_b: 0,
            overlooked_both: 0,
            only_a: 0,
            only_b: 0,
            detected_both: 0,
        })
        .collect();
    let mut tp = [0u64; 2];
    let mut fp = [0u64; 2];
    let mut points = Vec::new();
    for scene in per_scene {
        for rule in 0..2 {
            tp[rule] += scene.tp[rule];
            fp[rule] += scene.fp[rule];
        }
        for p in &scene.points {
            for z in zones
                .iter_mut()
                .filter(|z| p.distance_m <= z.max_distance_m)
            {
                z.add(p.outcome);
            }
        }
        points.extend(scene.points);
    }
    Ok(ConsequenceReport {
        threshold: config.threshold,
        zones,
        precision_a: RulePrecision::from_counts(tp[0], fp[0]),
        precision_b: RulePrecision::from_counts(tp[1], fp[1]),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: u8 = 4;

    #[test]
    fn recall_of_an_instance() {
        let mut inst = InstanceMap::empty(2, 5);
        inst.ids_mut().iter_mut().for_each(|v| *v = 3);
        let mut pred = LabelMap::filled(2, 5, 0);
        assert_eq!(instance_recall(&pred, &inst, 3, H).unwrap(), 0.0);
        pred.labels_mut()[..6].iter_mut().for_each(|v| *v = H);
        assert_eq!(instance_recall(&pred, &inst, 3, H).unwrap(), 0.6);
        let all = LabelMap::filled(2, 5, H);
        assert_eq!(instance_recall(&all, &inst, 3, H).unwrap(), 1.0);
        assert!(matches!(
            instance_recall(&all, &inst, 9, H),
            Err(Error::UnknownInstance(9))
        ));
    }

    #[test]
    fn strict_threshold() {
        assert!(classify_instance(1, 0.6, 0.5).detected);
        assert!(!classify_instance(1, 0.5, 0.5).detected);
        assert!(!classify_instance(1, 0.0, 0.0).detected);
    }

    #[test]
    fn nested_zones() {
        let z = ZoneConfig::default();
        assert_eq!(zone_membership(10.0, &z), ["30kmh", "50kmh"]);
        assert_eq!(zone_membership(25.0, &z), ["50kmh"]);
        assert!(zone_membership(60.0, &z).is_empty());
        assert_eq!(zone_membership(20.6, &z), ["30kmh", "50kmh"]);
    }

    #[test]
    fn zone_validation() {
        assert!(ZoneConfig::from_distances(&[46.5, 20.6]).is_err());
        assert!(ZoneConfig::from_distances(&[0.0, 20.6]).is_err());
        assert!(ZoneConfig::from_distances(&[]).is_err());
        let z = ZoneConfig::from_distances(&[20.6, 46.5]).unwrap();
        assert_eq!(z.zones()[0].name, "20.6m");
        let json = serde_json::to_string(&z).unwrap();
        assert_eq!(serde_json::from_str::<ZoneConfig>(&json).unwrap(), z);
        assert!(
            serde_json::from_str::<ZoneConfig>(r#"[{"name":"a","max_distance_m":-1}]"#).is_err()
        );
    }

    #[test]
    fn record_validation() {
        let mut r = InstanceRecord {
            image_id: "a".into(),
            instance_id: 1,
            class: "human".into(),
            distance_m: 5.0,
            bearing_deg: Some(10.0),
            pixel_count: 4,
            provenance: None,
        };
        assert!(r.validate().is_ok());
        r.bearing_deg = Some(31.0);
        assert!(r.validate().is_err());
        r.bearing_deg = None;
        r.distance_m = f64::NAN;
        assert!(r.validate().is_err());
        r.distance_m = 1.0;
        r.pixel_count = 0;
        assert!(r.validate().is_err());
    }

    fn scene_fixture() -> (LabelMap, InstanceMap, Vec<InstanceRecord>) {
        // one row, two 2-pixel instances
        let gt = LabelMap::new(1, 6, vec![H, H, 0, H, H, 0]).unwrap();
        let inst = InstanceMap::new(1, 6, vec![1, 1, 0, 2, 2, 0]).unwrap();
        let rec = |id, d| InstanceRecord {
            image_id: "img".into(),
            instance_id: id,
            class: "human".into(),
            distance_m: d,
            bearing_deg: Some(0.0),
            pixel_count: 2,
            provenance: None,
        };
        (gt, inst, vec![rec(1, 10.0), rec(2, 30.0)])
    }

    #[test]
    fn self_comparison_has_no_exclusive_detections() {
        let (gt, inst, recs) = scene_fixture();
        let pred = LabelMap::new(1, 6, vec![H, H, H, 0, 0, 0]).unwrap();
        let scene = SceneEval {
            image_id: "img",
            pred_a: &pred,
            pred_b: &pred,
            gt: &gt,
            instances: &inst,
            records: &recs,
        };
        let r = consequences(&[scene], &ConsequenceConfig::default()).unwrap();
        for z in &r.zones {
            assert_eq!(z.only_a + z.only_b, 0);
            assert_eq!(z.overlooked_both, z.overlooked_a);
        }
        assert_eq!(r.zones[1].total, 2);
        assert_eq!(r.zones[1].overlooked_a, 1);
        assert_eq!(r.zones[0].total, 1);
        assert_eq!(r.precision_a.tp_pixels, 2);
        assert_eq!(r.precision_a.fp_pixels, 1);
    }

    #[test]
    fn exclusive_detections_and_swap() {
        let (gt, inst, recs) = scene_fixture();
        let a = LabelMap::new(1, 6, vec![H, H, 0, 0, 0, 0]).unwrap();
        let b = LabelMap::new(1, 6, vec![0, 0, 0, H, H, H]).unwrap();
        let mk = |pa, pb| SceneEval {
            image_id: "img",
            pred_a: pa,
            pred_b: pb,
            gt: &gt,
            instances: &inst,
            records: &recs,
        };
        let cfg = ConsequenceConfig::default();
        let ab = consequences(&[mk(&a, &b)], &cfg).unwrap();
        let outer = &ab.zones[1];
        assert_eq!(
            (outer.only_a, outer.only_b, outer.overlooked_both),
            (1, 1, 0)
        );
        assert_eq!(ab.zones[0].only_a, 1);
        assert_eq!(ab.zones[0].only_b, 0);
        let ba = consequences(&[mk(&b, &a)], &cfg).unwrap();
        assert_eq!(ba, ab.swapped());
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let (gt, inst, mut recs) = scene_fixture();
        let small = LabelMap::filled(1, 5, 0);
        let scene = SceneEval {
            image_id: "img",
            pred_a: &small,
            pred_b: &gt,
            gt: &gt,
            instances: &inst,
            records: &recs,
        };
        let cfg = ConsequenceConfig::default();
        assert!(matches!(
            consequences(&[scene], &cfg),
            Err(Error::DatasetMismatch(_))
        ));
        recs[0].instance_id = 7;
        let scene = SceneEval {
            image_id: "img",
            pred_a: &gt,
            pred_b: &gt,
            gt: &gt,
            instances: &inst,
            records: &recs,
        };
        assert!(matches!(
            consequences(&[scene], &cfg),
            Err(Error::DatasetMismatch(_))
        ));
    }
}
