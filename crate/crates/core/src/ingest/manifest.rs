//! Dataset manifests: one JSON file listing, per image, the probability
//! map, ground-truth labels, instance raster and instance metadata, with
//! paths relative to the manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formats::{self, IMAP_MAGIC, LMAP_MAGIC, PMAP_MAGIC};
use crate::consequence::{InstanceMap, InstanceRecord};
use crate::costmatrix::SURVEY_CLASSES;
use crate::decision::{LabelMap, ProbabilityMap};
use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;

pub const MANIFEST_VERSION: u32 = 1;
/// `taxonomy` value selecting the built-in Cityscapes reduction.
pub const CITYSCAPES_TAXONOMY: &str = "cityscapes";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub pmap: String,
    pub lmap: String,
    pub imap: String,
}

impl Default for FormatVersions {
    fn default() -> Self {
        let s = |m: &[u8; 8]| String::from_utf8_lossy(m).into_owned();
        Self {
            pmap: s(PMAP_MAGIC),
            lmap: s(LMAP_MAGIC),
            imap: s(IMAP_MAGIC),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub image_id: String,
    pub pmap: String,
    pub gt: String,
    pub instances: String,
    /// JSON-lines instance metadata; may be shared between images.
    pub instance_meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(default)]
    pub formats: FormatVersions,
    /// Evaluation classes, in label order.
    pub class_names: Vec<String>,
    /// Optional fine-to-evaluation reduction applied on load to probability
    /// maps and ground truth: [`CITYSCAPES_TAXONOMY`] or a taxonomy JSON path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<String>,
    pub images: Vec<ImageEntry>,
    #[serde(skip)]
    root: PathBuf,
}

/// A manifest problem tied to one image (or `"*"` for the manifest itself).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDiagnostic {
    pub image_id: String,
    pub reason: String,
}

impl DatasetManifest {
    pub fn new(class_names: Vec<String>, images: Vec<ImageEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            formats: FormatVersions::default(),
            class_names,
            taxonomy: None,
            images,
            root: PathBuf::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::schema(
                path.display(),
                "version",
                format!(
                    "{} is not supported (expected {MANIFEST_VERSION})",
                    m.version
                ),
            ));
        }
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Directory that relative paths resolve against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn taxonomy(&self) -> Result<Option<ClassTaxonomy>> {
        match self.taxonomy.as_deref() {
            None => Ok(None),
            Some(CITYSCAPES_TAXONOMY) => Ok(Some(ClassTaxonomy::default())),
            Some(p) => ClassTaxonomy::load(self.resolve(p)).map(Some),
        }
    }
}

pub fn parse_instance_meta(text: &str, source: &str) -> Result<Vec<InstanceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let location = format!("{source}:{}", i + 1);
            let r: InstanceRecord =
                serde_json::from_str(l).map_err(|e| Error::schema(&location, "json", e))?;
            r.validate()?;
            Ok(r)
        })
        .collect()
}

pub fn read_instance_meta(path: impl AsRef<Path>) -> Result<Vec<InstanceRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance_meta(&text, &path.display().to_string())
}

pub fn encode_instance_meta(records: &[InstanceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_instance_meta(path: impl AsRef<Path>, records: &[InstanceRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_instance_meta(records)).map_err(|e| Error::io(path, e))
}

/// One loaded evaluation image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageData {
    pub image_id: String,
    pub pmap: ProbabilityMap,
    pub gt: LabelMap,
    pub instances: InstanceMap,
    pub records: Vec<InstanceRecord>,
}

impl ImageData {
    /// Checks agreement between rasters and metadata.
    pub fn check(&self, n_classes: usize) -> Result<()> {
        let mismatch = |what: String| Error::DatasetMismatch(format!("{}: {what}", self.image_id));
        let (h, w) = (self.gt.height(), self.gt.width());
        if (self.pmap.height(), self.pmap.width()) != (h, w) {
            return Err(mismatch(format!(
                "probability map is {}x{}, ground truth {h}x{w}",
                self.pmap.height(),
                self.pmap.width()
            )));
        }
        if (self.instances.height(), self.instances.width()) != (h, w) {
            return Err(mismatch(format!(
                "instance raster is {}x{}, ground truth {h}x{w}",
                self.instances.height(),
                self.instances.width()
            )));
        }
        if self.pmap.n_classes() != n_classes {
            return Err(mismatch(format!(
                "probability map has {} classes, expected {n_classes}",
                self.pmap.n_classes()
            )));
        }
        self.gt
            .check_classes(n_classes)
            .map_err(|e| mismatch(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if r.image_id != self.image_id {
                return Err(mismatch(format!(
                    "instance {} is tagged {}",
                    r.instance_id, r.image_id
                )));
            }
            if !seen.insert(r.instance_id) {
                return Err(mismatch(format!("instance {} listed twice", r.instance_id)));
            }
            let n = self.instances.pixel_count(r.instance_id);
            if n != r.pixel_count as usize {
                return Err(mismatch(format!(
                    "instance {} has {n} pixels in the raster, metadata says {}",
                    r.instance_id, r.pixel_count
                )));
            }
        }
        Ok(())
    }
}

/// A manifest with every image loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<ImageData>,
}

impl Dataset {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        Self::from_manifest(manifest)
    }

    pub fn from_manifest(manifest: DatasetManifest) -> Result<Self> {
        let taxonomy = manifest.taxonomy()?;
        let n = manifest.class_names.len();
        if let Some(t) = &taxonomy {
            if t.coarse_names() != manifest.class_names.as_slice() {
                return Err(Error::InvalidTaxonomy(
                    "coarse classes differ from the manifest's class_names".into(),
                ));
            }
        }
        let images = manifest
            .images
            .par_iter()
            .map(|e| load_image(&manifest, e, taxonomy.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        for img in &images {
            img.check(n)?;
        }
        Ok(Self { manifest, images })
    }

    pub fn n_classes(&self) -> usize {
        self.manifest.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.manifest.class_names
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageData> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Writes every raster and metadata file plus `manifest.json` into `dir`
    /// and returns the manifest path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = self.manifest.clone();
        manifest.taxonomy = None;
        for (entry, img) in manifest.images.iter().zip(&self.images) {
            formats::write_pmap(dir.join(&entry.pmap), &img.pmap)?;
            formats::write_lmap(dir.join(&entry.gt), &img.gt)?;
            formats::write_imap(dir.join(&entry.instances), &img.instances)?;
        }
        // metadata files may be shared between images
        let mut meta_files: Vec<&str> = manifest
            .images
            .iter()
            .map(|e| e.instance_meta.as_str())
            .collect();
        meta_files.sort_unstable();
        meta_files.dedup();
        for file in meta_files {
            let records: Vec<InstanceRecord> = manifest
                .images
                .iter()
                .zip(&self.images)
                .filter(|(e, _)| e.instance_meta == file)
                .flat_map(|(_, img)| img.records.iter().cloned())
                .collect();
            write_instance_meta(dir.join(file), &records)?;
        }
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }
}

fn load_image(
    m: &DatasetManifest,
    e: &ImageEntry,
    taxonomy: Option<&ClassTaxonomy>,
) -> Result<ImageData> {
    let mut pmap = formats::read_pmap(m.resolve(&e.pmap))?;
    let mut gt = formats::read_lmap(m.resolve(&e.gt))?;
    if let Some(t) = taxonomy {
        pmap = t.aggregate_probability_map(&pmap)?;
        gt = t.map_label_map(&gt)?;
    }
    let instances = formats::read_imap(m.resolve(&e.instances))?;
    let records = read_instance_meta(m.resolve(&e.instance_meta))?
        .into_iter()
        .filter(|r| r.image_id == e.image_id)
        .collect();
    Ok(ImageData {
        image_id: e.image_id.clone(),
        pmap,
        gt,
        instances,
        records,
    })
}

/// Checks every manifest invariant without stopping at the first problem.
/// Returns an empty list iff the dataset would load cleanly.
pub fn validate_manifest(m: &DatasetManifest) -> Vec<ManifestDiagnostic> {
    let mut out = Vec::new();
    let global = |reason: String| ManifestDiagnostic {
        image_id: "*".into(),
        reason,
    };
    if m.class_names.len() < 2 {
        out.push(global(format!(
            "{} classes; need at least 2",
            m.class_names.len()
        )));
    }
    if m.formats != FormatVersions::default() {
        out.push(global(format!(
            "unsupported format versions {:?}",
            m.formats
        )));
    }
    let taxonomy = match m.taxonomy() {
        Ok(t) => t,
        Err(e) => {
            out.push(global(e.to_string()));
            None
        }
    };
    let mut ids = BTreeSet::new();
    for e in &m.images {
        if !ids.insert(e.image_id.as_str()) {
            out.push(ManifestDiagnostic {
                image_id: e.image_id.clone(),
                reason: "duplicate image_id".into(),
            });
        }
    }
    let per_image: Vec<Option<ManifestDiagnostic>> = m
        .images
        .par_iter()
        .map(|e| {
            let res =
                load_image(m, e, taxonomy.as_ref()).and_then(|img| img.check(m.class_names.len()));
            res.err().map(|err| ManifestDiagnostic {
                image_id: e.image_id.clone(),
                reason: err.to_string(),
            })
        })
        .collect();
    out.extend(per_image.into_iter().flatten());
    out
}

/// Class names of the default six-way evaluation taxonomy.
pub fn survey_class_names() -> Vec<String> {
    SURVEY_CLASSES.iter().map(|s| s.to_string()).collect()
}
