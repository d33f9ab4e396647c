use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MAX_LEVEL, SURVEY_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Passenger,
    External,
}

impl Perspective {
    pub fn as_str(self) -> &'static str {
        match self {
            Perspective::Passenger => "passenger",
            Perspective::External => "external",
        }
    }
}

impl std::str::FromStr for Perspective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passenger" => Ok(Perspective::Passenger),
            "external" => Ok(Perspective::External),
            other => Err(Error::schema(
                "perspective",
                "perspective",
                format!("unknown value {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Diverse,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Diverse => "diverse",
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            "diverse" => Ok(Gender::Diverse),
            other => Err(Error::schema(
                "gender",
                "gender",
                format!("unknown value {other:?}"),
            )),
        }
    }
}

/// Wire form of an answer: 1-based target class and severities keyed by
/// class name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAnswer {
    pub participant_id: String,
    pub perspective: Perspective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_band: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graduation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<String>,
    pub image_id: String,
    pub target_class: u8,
    pub severities: BTreeMap<String, u8>,
    #[serde(default)]
    pub timestamp: String,
}

/// One validated survey submission: the severity exponents a participant
/// gave for confusing the highlighted target class with each other class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAnswer", into = "RawAnswer")]
pub struct AnswerRecord {
    pub participant_id: String,
    pub perspective: Perspective,
    pub gender: Option<Gender>,
    pub age_band: Option<String>,
    pub graduation: Option<String>,
    pub field: Option<String>,
    pub license: Option<String>,
    pub transport: Option<String>,
    pub image_id: String,
    pub timestamp: String,
    target: usize,
    // levels[target] is unused and kept at 0
    levels: Vec<u8>,
}

impl AnswerRecord {
    /// `target` is 0-based; `levels` has one entry per class and its entry at
    /// `target` is ignored.
    pub fn new(
        participant_id: impl Into<String>,
        perspective: Perspective,
        image_id: impl Into<String>,
        target: usize,
        mut levels: Vec<u8>,
    ) -> Result<Self> {
        let n = levels.len();
        if n < 2 {
            return Err(Error::InvalidSize(n));
        }
        if target >= n {
            return Err(Error::schema(
                "answer",
                "target_class",
                format!("{} out of range", target + 1),
            ));
        }
        levels[target] = 0;
        if let Some((j, &l)) = levels.iter().enumerate().find(|(_, &l)| l > MAX_LEVEL) {
            return Err(Error::schema(
                "answer",
                class_name(j),
                format!("level {l} exceeds {MAX_LEVEL}"),
            ));
        }
        Ok(Self {
            participant_id: participant_id.into(),
            perspective,
            gender: None,
            age_band: None,
            graduation: None,
            field: None,
            license: None,
            transport: None,
            image_id: image_id.into(),
            timestamp: String::new(),
            target,
            levels,
        })
    }

    pub fn with_gender(mut self, gender: Option<Gender>) -> Self {
        self.gender = gender;
        self
    }

    /// Validates a wire answer against the six survey classes. `location`
    /// prefixes schema errors (e.g. `"line 7"`).
    pub fn from_raw(raw: RawAnswer, location: &str) -> Result<Self> {
        let n = SURVEY_CLASSES.len();
        let target_1 = usize::from(raw.target_class);
        if !(1..=n).contains(&target_1) {
            return Err(Error::schema(
                location,
                "target_class",
                format!("{} is not in 1..={n}", raw.target_class),
            ));
        }
        let target = target_1 - 1;
        if let Some(unknown) = raw
            .severities
            .keys()
            .find(|k| !SURVEY_CLASSES.contains(&k.as_str()))
        {
            return Err(Error::schema(
                location,
                "severities",
                format!("unknown class {unknown:?}"),
            ));
        }
        if raw.severities.contains_key(SURVEY_CLASSES[target]) {
            return Err(Error::schema(
                location,
                "severities",
                format!(
                    "target class {:?} must not be rated",
                    SURVEY_CLASSES[target]
                ),
            ));
        }
        let mut levels = vec![0u8; n];
        for (j, name) in SURVEY_CLASSES.iter().enumerate() {
            if j == target {
                continue;
            }
            let level = *raw.severities.get(*name).ok_or_else(|| {
                Error::schema(
                    location,
                    "severities",
                    format!("missing severity for class {name:?}"),
                )
            })?;
            if level > MAX_LEVEL {
                return Err(Error::schema(
                    location,
                    "severities",
                    format!("class {name:?} has level {level}, expected 0..={MAX_LEVEL}"),
                ));
            }
            levels[j] = level;
        }
        Ok(Self {
            participant_id: raw.participant_id,
            perspective: raw.perspective,
            gender: raw.gender,
            age_band: raw.age_band,
            graduation: raw.graduation,
            field: raw.field,
            license: raw.license,
            transport: raw.transport,
            image_id: raw.image_id,
            timestamp: raw.timestamp,
            target,
            levels,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.levels.len()
    }

    /// 0-based index of the highlighted (true) class.
    pub fn target(&self) -> usize {
        self.target
    }

    /// Severity exponent for confusing the target with `class`.
    pub fn level(&self, class: usize) -> Option<u8> {
        (class != self.target).then(|| self.levels[class])
    }

    /// Dense levels with a 0 placeholder at the target index.
    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    /// `(confused_class, level)` for every rated class.
    pub fn rated(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        let target = self.target;
        self.levels
            .iter()
            .enumerate()
            .filter(move |(j, _)| *j != target)
            .map(|(j, &l)| (j, l))
    }
}

fn class_name(j: usize) -> String {
    SURVEY_CLASSES
        .get(j)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("class {j}"))
}

impl TryFrom<RawAnswer> for AnswerRecord {
    type Error = Error;

    fn try_from(raw: RawAnswer) -> Result<Self> {
        Self::from_raw(raw, "answer")
    }
}

impl From<AnswerRecord> for RawAnswer {
    fn from(a: AnswerRecord) -> Self {
        let severities = a.rated().map(|(j, l)| (class_name(j), l)).collect();
        RawAnswer {
            participant_id: a.participant_id,
            perspective: a.perspective,
            gender: a.gender,
            age_band: a.age_band,
            graduation: a.graduation,
            field: a.field,
            license: a.license,
            transport: a.transport,
            image_id: a.image_id,
            target_class: (a.target + 1) as u8,
            severities,
            timestamp: a.timestamp,
        }
    }
}

/// Group selector over participant metadata; `None` fields match anything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerFilter {
    #[serde(default)]
    pub perspective: Option<Perspective>,
    #[serde(default)]
    pub gender: Option<Gender>,
}

impl AnswerFilter {
    pub fn matches(&self, answer: &AnswerRecord) -> bool {
        self.perspective.is_none_or(|p| answer.perspective == p)
            && self.gender.is_none_or(|g| answer.gender == Some(g))
    }
}
