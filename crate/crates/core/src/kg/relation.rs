//! Merged relation vocabulary: 17 forward types plus one reverse type each.

use std::collections::HashMap;
use std::path::Path;

use super::{KgError, RelationId};

/// Number of merged forward relation types.
pub const MERGED_RELATIONS: usize = 17;
/// Forward plus reverse relation ids.
pub const RELATION_COUNT: usize = 2 * MERGED_RELATIONS;

const SHIPPED_MAPPING: &str = include_str!("../../data/relation_map.tsv");

/// Prefix used for the names of reverse relations.
pub const REVERSE_PREFIX: &str = "rev_";

/// Relation vocabulary loaded from a `raw_uri<TAB>merged_name` mapping file.
///
/// Forward ids are `0..17` in order of first appearance in the mapping file,
/// the reverse of forward id `r` is `r + 17`. A merged name written as
/// `*name` maps the raw relation onto the reverse of `name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationVocab {
    merged_names: Vec<String>,
    raw: HashMap<String, RelationId>,
}

impl RelationVocab {
    /// The shipped ConceptNet 5 mapping.
    pub fn conceptnet() -> Self {
        Self::parse(SHIPPED_MAPPING).expect("shipped relation mapping is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self, KgError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, KgError> {
        let mut merged_names: Vec<String> = Vec::new();
        let mut raw = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| KgError::Mapping {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let (uri, merged) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected raw_uri<TAB>merged_name"))?;
            let uri = uri.trim().to_lowercase();
            let merged = merged.trim().to_lowercase();
            let (flipped, name) = match merged.strip_prefix('*') {
                Some(n) => (true, n.to_string()),
                None => (false, merged),
            };
            if uri.is_empty() || name.is_empty() {
                return Err(bad("empty field"));
            }
            let forward = match merged_names.iter().position(|n| *n == name) {
                Some(i) => i,
                None => {
                    merged_names.push(name);
                    merged_names.len() - 1
                }
            };
            if forward >= MERGED_RELATIONS {
                return Err(bad("more than 17 merged relation names"));
            }
            let id = RelationId(forward as u8);
            let id = if flipped { reverse_of(id) } else { id };
            if raw.insert(uri, id).is_some() {
                return Err(bad("raw relation mapped twice"));
            }
        }
        if merged_names.len() != MERGED_RELATIONS {
            return Err(KgError::Mapping {
                line: 0,
                reason: format!(
                    "expected {MERGED_RELATIONS} merged relation names, found {}",
                    merged_names.len()
                ),
            });
        }
        Ok(Self { merged_names, raw })
    }

    /// Merged id of a raw relation URI such as `/r/AtLocation`, case-insensitive.
    pub fn id_of(&self, raw_uri: &str) -> Option<RelationId> {
        self.raw.get(&raw_uri.to_lowercase()).copied()
    }

    /// Forward id of a merged relation name.
    pub fn id_by_name(&self, name: &str) -> Option<RelationId> {
        self.merged_names
            .iter()
            .position(|n| n == name)
            .map(|i| RelationId(i as u8))
    }

    pub fn merged_names(&self) -> &[String] {
        &self.merged_names
    }

    pub fn raw_uris(&self) -> impl Iterator<Item = (&str, RelationId)> {
        self.raw.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn reverse_of(&self, rel: RelationId) -> RelationId {
        reverse_of(rel)
    }

    /// All 34 relation names; reverse names carry [`REVERSE_PREFIX`].
    pub fn all_names(&self) -> Vec<String> {
        self.merged_names
            .iter()
            .cloned()
            .chain(
                self.merged_names
                    .iter()
                    .map(|n| format!("{REVERSE_PREFIX}{n}")),
            )
            .collect()
    }
}

/// Fixed-point-free involution pairing each forward id with its reverse.
pub fn reverse_of(rel: RelationId) -> RelationId {
    RelationId(((rel.0 as usize + MERGED_RELATIONS) % RELATION_COUNT) as u8)
}

pub fn is_reverse(rel: RelationId) -> bool {
    (rel.0 as usize) >= MERGED_RELATIONS
}
