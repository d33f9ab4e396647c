//! Reduction of the 19 Cityscapes evaluation classes to the six survey
//! categories. Sky carries no category and is ignored.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costmatrix::SURVEY_CLASSES;
use crate::decision::{LabelMap, ProbabilityMap, IGNORE};
use crate::error::{Error, Result};

/// Cityscapes evaluation classes in train-id order.
pub const CITYSCAPES_CLASSES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

/// Remaining mass below which a pixel becomes ignore instead of being
/// renormalized after the ignored channels are dropped.
pub const MIN_KEPT_MASS: f64 = 1e-6;

/// JSON form: `{"fine": [...], "coarse": [...], "map": {...}, "ignore": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyFile {
    pub fine: Vec<String>,
    pub coarse: Vec<String>,
    pub map: BTreeMap<String, String>,
    #[serde(default)]
    pub ignore: Vec<String>,
}

/// Total mapping from fine classes to coarse classes or ignore.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTaxonomy {
    fine_names: Vec<String>,
    coarse_names: Vec<String>,
    mapping: Vec<Option<usize>>,
}

impl ClassTaxonomy {
    pub fn from_file(file: &TaxonomyFile) -> Result<Self> {
        if file.fine.len() >= usize::from(IGNORE) || file.coarse.len() >= usize::from(IGNORE) {
            return Err(Error::InvalidTaxonomy(
                "too many classes for u8 labels".into(),
            ));
        }
        let coarse_index = |name: &str| file.coarse.iter().position(|c| c == name);
        let mut mapping = Vec::with_capacity(file.fine.len());
        for fine in &file.fine {
            let ignored = file.ignore.contains(fine);
            match (file.map.get(fine), ignored) {
                (Some(_), true) => {
                    return Err(Error::InvalidTaxonomy(format!(
                        "{fine:?} is both mapped and ignored"
                    )))
                }
                (None, true) => mapping.push(None),
                (None, false) => {
                    return Err(Error::InvalidTaxonomy(format!("{fine:?} has no mapping")))
                }
                (Some(coarse), false) => {
                    let idx = coarse_index(coarse).ok_or_else(|| {
                        Error::InvalidTaxonomy(format!("{fine:?} maps to unknown {coarse:?}"))
                    })?;
                    mapping.push(Some(idx));
                }
            }
        }
        if let Some(stray) = file
            .map
            .keys()
            .chain(&file.ignore)
            .find(|k| !file.fine.contains(k))
        {
            return Err(Error::InvalidTaxonomy(format!(
                "{stray:?} is not a fine class"
            )));
        }
        for (idx, coarse) in file.coarse.iter().enumerate() {
            if !mapping.contains(&Some(idx)) {
                return Err(Error::InvalidTaxonomy(format!("{coarse:?} has no members")));
            }
        }
        Ok(Self {
            fine_names: file.fine.clone(),
            coarse_names: file.coarse.clone(),
            mapping,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TaxonomyFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> TaxonomyFile {
        let mut map = BTreeMap::new();
        let mut ignore = Vec::new();
        for (fine, target) in self.fine_names.iter().zip(&self.mapping) {
            match target {
                Some(c) => {
                    map.insert(fine.clone(), self.coarse_names[*c].clone());
                }
                None => ignore.push(fine.clone()),
            }
        }
        TaxonomyFile {
            fine: self.fine_names.clone(),
            coarse: self.coarse_names.clone(),
            map,
            ignore,
        }
    }

    pub fn fine_names(&self) -> &[String] {
        &self.fine_names
    }

    pub fn coarse_names(&self) -> &[String] {
        &self.coarse_names
    }

    pub fn n_fine(&self) -> usize {
        self.fine_names.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse_names.len()
    }

    /// Fine classes that map to `coarse`.
    pub fn members(&self, coarse: usize) -> Vec<usize> {
        (0..self.mapping.len())
            .filter(|&f| self.mapping[f] == Some(coarse))
            .collect()
    }

    pub fn map_label(&self, fine_label: u8) -> Result<u8> {
        if fine_label == IGNORE {
            return Ok(IGNORE);
        }
        let target = self
            .mapping
            .get(usize::from(fine_label))
            .ok_or_else(|| Error::UnknownClass(fine_label.to_string()))?;
        Ok(target.map_or(IGNORE, |c| c as u8))
    }

    pub fn map_label_map(&self, fine: &LabelMap) -> Result<LabelMap> {
        let lut = self.lookup_table();
        let labels = fine
            .labels()
            .iter()
            .map(|&l| lut[usize::from(l)].ok_or_else(|| Error::UnknownClass(l.to_string())))
            .collect::<Result<Vec<u8>>>()?;
        LabelMap::new(fine.height(), fine.width(), labels)
    }

    fn lookup_table(&self) -> [Option<u8>; 256] {
        let mut lut = [None; 256];
        for (fine, target) in self.mapping.iter().enumerate() {
            lut[fine] = Some(target.map_or(IGNORE, |c| c as u8));
        }
        lut[usize::from(IGNORE)] = Some(IGNORE);
        lut
    }

    /// Sums member probabilities into coarse classes.
    ///
    /// Accepts maps carrying every fine channel (ignored mass is dropped and
    /// the pixel renormalized) or only the non-ignored channels in fine order.
    /// Pixels left with less than [`MIN_KEPT_MASS`] become void.
    pub fn aggregate_probability_map(&self, pm: &ProbabilityMap) -> Result<ProbabilityMap> {
        let channels: Vec<Option<usize>> = if pm.n_classes() == self.n_fine() {
            self.mapping.clone()
        } else if pm.n_classes() == self.mapping.iter().flatten().count() {
            self.mapping
                .iter()
                .copied()
                .filter(Option::is_some)
                .collect()
        } else {
            return Err(Error::shape(
                format!(
                    "{} or {} fine channels",
                    self.n_fine(),
                    self.mapping.iter().flatten().count()
                ),
                format!("{} channels", pm.n_classes()),
            ));
        };
        let n_coarse = self.n_coarse();
        let mut out = vec![0f32; pm.n_pixels() * n_coarse];
        let mut acc = vec![0f64; n_coarse];
        for (i, px_out) in out.chunks_mut(n_coarse).enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (&p, target) in pm.pixel(i).iter().zip(&channels) {
                if let Some(c) = target {
                    acc[*c] += f64::from(p);
                }
            }
            let kept: f64 = acc.iter().sum();
            if kept < MIN_KEPT_MASS {
                continue;
            }
            for (o, a) in px_out.iter_mut().zip(&acc) {
                *o = (a / kept) as f32;
            }
        }
        ProbabilityMap::new(pm.height(), pm.width(), n_coarse, out)
    }
}

impl Default for ClassTaxonomy {
    /// The Cityscapes-to-survey reduction.
    fn default() -> Self {
        let assign = [
            ("road", "drivable"),
            ("sidewalk", "nondrivable"),
            ("terrain", "nondrivable"),
            ("building", "static"),
            ("wall", "static"),
            ("fence", "static"),
            ("pole", "static"),
            ("vegetation", "static"),
            ("traffic light", "info"),
            ("traffic sign", "info"),
            ("person", "human"),
            ("rider", "human"),
            ("car", "dynamic"),
            ("truck", "dynamic"),
            ("bus", "dynamic"),
            ("train", "dynamic"),
            ("motorcycle", "dynamic"),
            ("bicycle", "dynamic"),
        ];
        let file = TaxonomyFile {
            fine: CITYSCAPES_CLASSES.iter().map(|s| s.to_string()).collect(),
            coarse: SURVEY_CLASSES.iter().map(|s| s.to_string()).collect(),
            map: assign
                .iter()
                .map(|(f, c)| (f.to_string(), c.to_string()))
                .collect(),
            ignore: vec!["sky".into()],
        };
        Self::from_file(&file).expect("default taxonomy is consistent")
    }
}
