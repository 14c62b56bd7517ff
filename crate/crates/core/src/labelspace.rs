//! Entity-type taxonomy, BIO label vocabularies and the fine to coarse group mapping.
//!
//! The canonical taxonomy is data, not code: it is loaded from a line-oriented
//! `TYPE<TAB>GROUP` file (see `fixtures/taxonomy.tsv`). Label indices are
//! deterministic: `O` sits at index 0, followed by a `B-`/`I-` pair per type
//! in taxonomy order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("empty label")]
    EmptyLabel,
    #[error("unknown BIO prefix in label {0:?}")]
    UnknownPrefix(String),
    #[error("label {0:?} has an empty entity type")]
    EmptyType(String),
    #[error("invalid entity type name {0:?}")]
    InvalidType(String),
    #[error("duplicate entity type {0}")]
    DuplicateType(String),
    #[error("entity type {0} has no coarse group")]
    UnmappedType(String),
    #[error("entity type {0} is mapped to conflicting groups")]
    ConflictingGroup(String),
    #[error("unknown coarse group {0:?}")]
    UnknownGroup(String),
    #[error("unknown entity type {0}")]
    UnknownType(String),
    #[error("taxonomy line {line}: {message}")]
    Taxonomy { line: usize, message: String },
    #[error("reading taxonomy {path}: {message}")]
    Io { path: String, message: String },
}

/// An uppercase entity-type identifier such as `IBAN`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityType(String);

impl EntityType {
    /// Validates a type name. Names must be non-empty and must not contain `-`,
    /// which is reserved for BIO prefixing.
    pub fn new(name: impl Into<String>) -> Result<Self, LabelError> {
        let name = name.into();
        if name.is_empty() || name.contains('-') || name.chars().any(char::is_whitespace) {
            return Err(LabelError::InvalidType(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for EntityType {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl Serialize for EntityType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        EntityType::new(s.into_owned()).map_err(serde::de::Error::custom)
    }
}

/// The ten coarse entity groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoarseGroup {
    PersonGroup,
    Contact,
    FinancialId,
    Temporal,
    Credential,
    Network,
    OrgRole,
    Location,
    Misc,
    FinancialNer,
}

impl CoarseGroup {
    pub const ALL: [CoarseGroup; 10] = [
        CoarseGroup::PersonGroup,
        CoarseGroup::Contact,
        CoarseGroup::FinancialId,
        CoarseGroup::Temporal,
        CoarseGroup::Credential,
        CoarseGroup::Network,
        CoarseGroup::OrgRole,
        CoarseGroup::Location,
        CoarseGroup::Misc,
        CoarseGroup::FinancialNer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseGroup::PersonGroup => "PERSON_GROUP",
            CoarseGroup::Contact => "CONTACT",
            CoarseGroup::FinancialId => "FINANCIAL_ID",
            CoarseGroup::Temporal => "TEMPORAL",
            CoarseGroup::Credential => "CREDENTIAL",
            CoarseGroup::Network => "NETWORK",
            CoarseGroup::OrgRole => "ORG_ROLE",
            CoarseGroup::Location => "LOCATION",
            CoarseGroup::Misc => "MISC",
            CoarseGroup::FinancialNer => "FINANCIAL_NER",
        }
    }

    /// The group name used as an entity type in the coarse BIO vocabulary.
    pub fn entity_type(self) -> EntityType {
        EntityType(self.as_str().to_string())
    }
}

impl fmt::Display for CoarseGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoarseGroup {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CoarseGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| LabelError::UnknownGroup(s.to_string()))
    }
}

impl Serialize for CoarseGroup {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CoarseGroup {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prefix {
    B,
    I,
    O,
}

/// One BIO tag: `O`, `B-<TYPE>` or `I-<TYPE>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioLabel {
    Outside,
    Begin(EntityType),
    Inside(EntityType),
}

impl BioLabel {
    pub fn prefix(&self) -> Prefix {
        match self {
            BioLabel::Outside => Prefix::O,
            BioLabel::Begin(_) => Prefix::B,
            BioLabel::Inside(_) => Prefix::I,
        }
    }

    pub fn entity(&self) -> Option<&EntityType> {
        match self {
            BioLabel::Outside => None,
            BioLabel::Begin(t) | BioLabel::Inside(t) => Some(t),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, BioLabel::Outside)
    }
}

/// Parses `"O"`, `"B-X"` or `"I-X"`. Formatting the result reproduces the input.
pub fn parse_bio_label(text: &str) -> Result<BioLabel, LabelError> {
    if text.is_empty() {
        return Err(LabelError::EmptyLabel);
    }
    if text == "O" {
        return Ok(BioLabel::Outside);
    }
    let (prefix, entity) = match text.split_once('-') {
        Some(parts) => parts,
        None => return Err(LabelError::UnknownPrefix(text.to_string())),
    };
    if entity.is_empty() {
        return Err(LabelError::EmptyType(text.to_string()));
    }
    let make = match prefix {
        "B" => BioLabel::Begin,
        "I" => BioLabel::Inside,
        _ => return Err(LabelError::UnknownPrefix(text.to_string())),
    };
    Ok(make(EntityType::new(entity)?))
}

impl FromStr for BioLabel {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bio_label(s)
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioLabel::Outside => f.write_str("O"),
            BioLabel::Begin(t) => write!(f, "B-{t}"),
            BioLabel::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl Serialize for BioLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        parse_bio_label(&s).map_err(serde::de::Error::custom)
    }
}

/// Fine entity types, their coarse groups and both BIO vocabularies.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct LabelSpace {
    fine_types: Vec<EntityType>,
    coarse_map: HashMap<EntityType, CoarseGroup>,
    fine_labels: Vec<BioLabel>,
    coarse_labels: Vec<BioLabel>,
}

fn bio_vocabulary(types: impl IntoIterator<Item = EntityType>) -> Vec<BioLabel> {
    let mut labels = vec![BioLabel::Outside];
    for t in types {
        labels.push(BioLabel::Begin(t.clone()));
        labels.push(BioLabel::Inside(t));
    }
    labels
}

/// Builds a label space from type names (in label order) and `type -> group` pairs.
pub fn build_label_space<S: AsRef<str>>(
    fine_types: &[S],
    coarse_map: &[(S, S)],
) -> Result<LabelSpace, LabelError> {
    let mut groups: HashMap<String, CoarseGroup> = HashMap::new();
    for (t, g) in coarse_map {
        let group: CoarseGroup = g.as_ref().parse()?;
        if let Some(prev) = groups.insert(t.as_ref().to_string(), group) {
            if prev != group {
                return Err(LabelError::ConflictingGroup(t.as_ref().to_string()));
            }
        }
    }

    let mut seen = HashSet::new();
    let mut types = Vec::with_capacity(fine_types.len());
    let mut map = HashMap::with_capacity(fine_types.len());
    for name in fine_types {
        let t = EntityType::new(name.as_ref())?;
        if !seen.insert(t.clone()) {
            return Err(LabelError::DuplicateType(t.0));
        }
        let group = *groups
            .get(t.as_str())
            .ok_or_else(|| LabelError::UnmappedType(t.0.clone()))?;
        map.insert(t.clone(), group);
        types.push(t);
    }
    Ok(LabelSpace::from_parts(types, map))
}

impl LabelSpace {
    fn from_parts(fine_types: Vec<EntityType>, coarse_map: HashMap<EntityType, CoarseGroup>) -> Self {
        let used: BTreeSet<CoarseGroup> = coarse_map.values().copied().collect();
        let fine_labels = bio_vocabulary(fine_types.iter().cloned());
        let coarse_labels = bio_vocabulary(used.into_iter().map(CoarseGroup::entity_type));
        Self {
            fine_types,
            coarse_map,
            fine_labels,
            coarse_labels,
        }
    }

    /// Parses taxonomy text: one `TYPE<TAB>GROUP` pair per line, `#` starts a comment.
    /// Type names are uppercased.
    pub fn from_taxonomy_str(text: &str) -> Result<Self, LabelError> {
        let mut types = Vec::new();
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (t, g) = line.split_once('\t').ok_or_else(|| LabelError::Taxonomy {
                line: i + 1,
                message: format!("expected TYPE<TAB>GROUP, got {line:?}"),
            })?;
            let t = t.trim().to_uppercase();
            let g = g.trim().to_string();
            types.push(t.clone());
            pairs.push((t, g));
        }
        build_label_space(&types, &pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_taxonomy_str(&text)
    }

    pub fn fine_types(&self) -> &[EntityType] {
        &self.fine_types
    }

    pub fn fine_labels(&self) -> &[BioLabel] {
        &self.fine_labels
    }

    pub fn coarse_labels(&self) -> &[BioLabel] {
        &self.coarse_labels
    }

    /// Groups used by at least one fine type, in canonical order.
    pub fn groups(&self) -> Vec<CoarseGroup> {
        let used: BTreeSet<CoarseGroup> = self.coarse_map.values().copied().collect();
        used.into_iter().collect()
    }

    pub fn contains(&self, t: &EntityType) -> bool {
        self.coarse_map.contains_key(t)
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.fine_types.iter().any(|t| t.as_str() == name)
    }

    pub fn coarse_of(&self, t: &EntityType) -> Result<CoarseGroup, LabelError> {
        self.coarse_map
            .get(t)
            .copied()
            .ok_or_else(|| LabelError::UnknownType(t.to_string()))
    }

    /// Index of `label` in the fine vocabulary.
    pub fn fine_index(&self, label: &BioLabel) -> Option<usize> {
        self.fine_labels.iter().position(|l| l == label)
    }

    /// A sub-space keeping only the types for which `keep` returns true, in the
    /// original order.
    pub fn restrict(&self, keep: impl Fn(&EntityType) -> bool) -> LabelSpace {
        let types: Vec<EntityType> = self.fine_types.iter().filter(|t| keep(t)).cloned().collect();
        let map = types.iter().map(|t| (t.clone(), self.coarse_map[t])).collect();
        LabelSpace::from_parts(types, map)
    }
}
