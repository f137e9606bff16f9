//! Immutable commonsense knowledge graph with a compressed adjacency index.
//!
//! Every forward triple is stored together with its reverse, so out-edges of
//! a concept cover both edge directions. Concepts are dense ids assigned in
//! order of first appearance.

mod align;
mod index;
mod ingest;
mod relation;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::DecodeError;
use crate::text::{PorterStemmer, Stemmer};

pub use align::{align_concepts, align_text, DEFAULT_MAX_NGRAM};
pub(crate) use index::checksum64;
pub use index::{load_index, save_index, INDEX_MAGIC, INDEX_VERSION};
pub use ingest::{
    load_conceptnet, load_conceptnet_from_reader, normalize_concept_uri, IngestConfig,
    IngestReport, MalformedRow, UnknownRelationPolicy,
};
pub use relation::{
    is_reverse, reverse_of, RelationVocab, MERGED_RELATIONS, RELATION_COUNT, REVERSE_PREFIX,
};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct RelationId(pub u8);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Triple {
    pub head: ConceptId,
    pub rel: RelationId,
    pub tail: ConceptId,
}

impl Triple {
    pub fn new(head: ConceptId, rel: RelationId, tail: ConceptId) -> Self {
        Self { head, rel, tail }
    }

    pub fn reversed(&self) -> Self {
        Self {
            head: self.tail,
            rel: reverse_of(self.rel),
            tail: self.head,
        }
    }

    /// The forward-relation form of this triple.
    pub fn canonical(&self) -> Self {
        if is_reverse(self.rel) {
            self.reversed()
        } else {
            *self
        }
    }
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("relation mapping line {line}: {reason}")]
    Mapping { line: usize, reason: String },
    #[error("concept id {0} out of range")]
    InvalidId(u32),
    #[error("not a graph index file (bad magic)")]
    BadMagic,
    #[error("index format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("vocabulary checksum mismatch (stored {stored:016x}, computed {computed:016x})")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("index file truncated")]
    Truncated,
    #[error("index file corrupt: {0}")]
    Corrupt(String),
}

impl From<DecodeError> for KgError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Truncated(_) => KgError::Truncated,
            DecodeError::Utf8(pos) => KgError::Corrupt(format!("invalid utf-8 at byte {pos}")),
        }
    }
}

/// Concept/relation/triple store. Safe for concurrent reads once built.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    relations: Vec<String>,
    surfaces: Vec<String>,
    stems: Vec<String>,
    triples: Vec<Triple>,
    offsets: Vec<usize>,
    surface_index: HashMap<String, ConceptId>,
    stem_index: HashMap<String, Vec<ConceptId>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        // the two hash indexes are derived from `surfaces` and `stems`
        self.relations == other.relations
            && self.surfaces == other.surfaces
            && self.stems == other.stems
            && self.triples == other.triples
            && self.offsets == other.offsets
    }
}

impl KnowledgeGraph {
    /// Assembles a graph from raw parts. `triples` may contain duplicates and
    /// either direction; reverse closure and dedup are applied here.
    pub(crate) fn assemble(
        relations: Vec<String>,
        surfaces: Vec<String>,
        stems: Vec<String>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Self {
        let canonical: HashSet<Triple> = triples.into_iter().map(|t| t.canonical()).collect();
        let mut stored: Vec<Triple> = canonical
            .into_iter()
            .flat_map(|t| [t, t.reversed()])
            .collect();
        stored.sort_unstable();
        let offsets = build_offsets(surfaces.len(), &stored);
        Self::from_sorted(relations, surfaces, stems, stored, offsets)
    }

    fn from_sorted(
        relations: Vec<String>,
        surfaces: Vec<String>,
        stems: Vec<String>,
        triples: Vec<Triple>,
        offsets: Vec<usize>,
    ) -> Self {
        let surface_index = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), ConceptId(i as u32)))
            .collect();
        let mut stem_index: HashMap<String, Vec<ConceptId>> = HashMap::new();
        for (i, s) in stems.iter().enumerate() {
            stem_index.entry(s.clone()).or_default().push(ConceptId(i as u32));
        }
        Self {
            relations,
            surfaces,
            stems,
            triples,
            offsets,
            surface_index,
            stem_index,
        }
    }

    pub fn num_concepts(&self) -> usize {
        self.surfaces.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations
    }

    pub fn relation_name(&self, rel: RelationId) -> &str {
        &self.relations[rel.index()]
    }

    pub fn contains(&self, c: ConceptId) -> bool {
        c.index() < self.surfaces.len()
    }

    pub fn surface(&self, c: ConceptId) -> &str {
        &self.surfaces[c.index()]
    }

    pub fn stem(&self, c: ConceptId) -> &str {
        &self.stems[c.index()]
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn concept_id(&self, surface: &str) -> Option<ConceptId> {
        self.surface_index.get(surface).copied()
    }

    /// Concepts sharing a stem string, ascending.
    pub fn concepts_with_stem(&self, stem: &str) -> &[ConceptId] {
        self.stem_index.get(stem).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Out-edges of `c` in stored order.
    pub fn neighbors(&self, c: ConceptId) -> Result<std::slice::Iter<'_, Triple>, KgError> {
        if !self.contains(c) {
            return Err(KgError::InvalidId(c.0));
        }
        Ok(self.out_edges(c).iter())
    }

    /// Unchecked variant of [`neighbors`](Self::neighbors) for hot loops.
    pub fn out_edges(&self, c: ConceptId) -> &[Triple] {
        let i = c.index();
        &self.triples[self.offsets[i]..self.offsets[i + 1]]
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.contains(t.head) && self.out_edges(t.head).binary_search(t).is_ok()
    }
}

fn build_offsets(num_concepts: usize, sorted: &[Triple]) -> Vec<usize> {
    let mut offsets = vec![0usize; num_concepts + 1];
    for t in sorted {
        offsets[t.head.index() + 1] += 1;
    }
    for i in 0..num_concepts {
        offsets[i + 1] += offsets[i];
    }
    offsets
}

/// Incremental construction of a [`KnowledgeGraph`] from surface strings.
pub struct GraphBuilder {
    relations: Vec<String>,
    surfaces: Vec<String>,
    stems: Vec<String>,
    ids: HashMap<String, ConceptId>,
    triples: Vec<Triple>,
    stemmer: Box<dyn Stemmer>,
}

impl GraphBuilder {
    pub fn new(vocab: &RelationVocab) -> Self {
        Self::with_stemmer(vocab, Box::new(PorterStemmer::new()))
    }

    pub fn with_stemmer(vocab: &RelationVocab, stemmer: Box<dyn Stemmer>) -> Self {
        Self {
            relations: vocab.all_names(),
            surfaces: Vec::new(),
            stems: Vec::new(),
            ids: HashMap::new(),
            triples: Vec::new(),
            stemmer,
        }
    }

    /// Id of an already-normalized surface, allocating the next id if new.
    pub fn concept(&mut self, surface: &str) -> ConceptId {
        if let Some(&id) = self.ids.get(surface) {
            return id;
        }
        let id = ConceptId(self.surfaces.len() as u32);
        self.surfaces.push(surface.to_string());
        self.stems.push(self.stemmer.stem_phrase(surface));
        self.ids.insert(surface.to_string(), id);
        id
    }

    /// Records a triple; returns false for self-loops, which are dropped.
    pub fn add_triple(&mut self, head: ConceptId, rel: RelationId, tail: ConceptId) -> bool {
        if head == tail {
            return false;
        }
        assert!((rel.index()) < RELATION_COUNT, "relation id out of range");
        self.triples.push(Triple::new(head, rel, tail));
        true
    }

    pub fn add(&mut self, head: &str, rel: RelationId, tail: &str) -> bool {
        let h = self.concept(head);
        let t = self.concept(tail);
        self.add_triple(h, rel, t)
    }

    pub fn num_concepts(&self) -> usize {
        self.surfaces.len()
    }

    /// Number of distinct triples after canonicalization.
    pub(crate) fn distinct_triples(&self) -> usize {
        self.triples
            .iter()
            .map(|t| t.canonical())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn build(self) -> KnowledgeGraph {
        KnowledgeGraph::assemble(self.relations, self.surfaces, self.stems, self.triples)
    }
}
