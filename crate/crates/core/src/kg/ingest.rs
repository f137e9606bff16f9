//! ConceptNet assertion ingestion.
//!
//! Rows are tab-separated: assertion URI, relation URI, start URI, end URI,
//! metadata. Only the relation, start and end fields are read.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::{GraphBuilder, KgError, KnowledgeGraph, RelationVocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownRelationPolicy {
    #[default]
    Skip,
    /// Route unmapped relations to the merged `relatedto` type.
    RelatedTo,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub lang: String,
    pub unknown_relations: UnknownRelationPolicy,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            lang: "en".to_string(),
            unknown_relations: UnknownRelationPolicy::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub malformed: Vec<MalformedRow>,
    pub skipped_language: usize,
    pub self_loops: usize,
    pub unknown_relations: BTreeMap<String, usize>,
    /// Rows whose unknown relation was mapped to `relatedto`.
    pub remapped_unknown: usize,
    pub distinct_triples: usize,
}

pub fn load_conceptnet(
    path: &Path,
    vocab: &RelationVocab,
    config: &IngestConfig,
) -> Result<(KnowledgeGraph, IngestReport), KgError> {
    let file = File::open(path)?;
    load_conceptnet_from_reader(BufReader::with_capacity(1 << 20, file), vocab, config)
}

pub fn load_conceptnet_from_reader<R: BufRead>(
    reader: R,
    vocab: &RelationVocab,
    config: &IngestConfig,
) -> Result<(KnowledgeGraph, IngestReport), KgError> {
    let mut builder = GraphBuilder::new(vocab);
    let mut report = IngestReport::default();
    let prefix = format!("/c/{}/", config.lang);
    let fallback = match config.unknown_relations {
        UnknownRelationPolicy::Skip => None,
        UnknownRelationPolicy::RelatedTo => Some(vocab.id_by_name("relatedto").ok_or_else(|| {
            KgError::Mapping {
                line: 0,
                reason: "mapping has no `relatedto` relation for unknown-relation fallback"
                    .to_string(),
            }
        })?),
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.rows_read += 1;
        let mut malformed = |reason: &str| {
            report.malformed.push(MalformedRow {
                line: lineno,
                reason: reason.to_string(),
            })
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            malformed("expected at least 4 tab-separated fields");
            continue;
        }
        let (rel_uri, start, end) = (fields[1], fields[2], fields[3]);
        if !rel_uri.starts_with("/r/") {
            malformed("relation field is not a /r/ URI");
            continue;
        }
        if !start.starts_with("/c/") || !end.starts_with("/c/") {
            malformed("start or end field is not a /c/ URI");
            continue;
        }
        if !start.starts_with(&prefix) || !end.starts_with(&prefix) {
            report.skipped_language += 1;
            continue;
        }
        let rel = match vocab.id_of(rel_uri) {
            Some(r) => r,
            None => {
                *report
                    .unknown_relations
                    .entry(rel_uri.to_string())
                    .or_default() += 1;
                match fallback {
                    Some(r) => {
                        report.remapped_unknown += 1;
                        r
                    }
                    None => continue,
                }
            }
        };
        let (Some(head), Some(tail)) = (
            normalize_concept_uri(start, &config.lang),
            normalize_concept_uri(end, &config.lang),
        ) else {
            malformed("empty concept surface");
            continue;
        };
        if head == tail {
            report.self_loops += 1;
            continue;
        }
        let h = builder.concept(&head);
        let t = builder.concept(&tail);
        builder.add_triple(h, rel, t);
        report.rows_accepted += 1;
    }
    report.distinct_triples = builder.distinct_triples();
    Ok((builder.build(), report))
}

/// `/c/en/ice_cream/n/...` → `ice cream`. `None` if the URI is not in `lang`
/// or its surface is empty.
pub fn normalize_concept_uri(uri: &str, lang: &str) -> Option<String> {
    let rest = uri.strip_prefix("/c/")?.strip_prefix(lang)?.strip_prefix('/')?;
    let raw = rest.split('/').next().unwrap_or("");
    let surface = raw
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    (!surface.is_empty()).then_some(surface)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{reverse_of, Triple};

    fn load(text: &str, config: &IngestConfig) -> (KnowledgeGraph, IngestReport) {
        load_conceptnet_from_reader(text.as_bytes(), &RelationVocab::conceptnet(), config).unwrap()
    }

    #[test]
    fn toy_rows_dedup_and_reverse() {
        let text = "\
/a/1\t/r/AtLocation\t/c/en/a\t/c/en/b\t{}
/a/2\t/r/UsedFor\t/c/en/b\t/c/en/c/n\t{}
/a/3\t/r/AtLocation\t/c/en/a/n\t/c/en/b\t{}
";
        let (g, report) = load(text, &IngestConfig::default());
        assert_eq!(g.num_concepts(), 3);
        assert_eq!(g.num_triples(), 4);
        assert_eq!(report.rows_accepted, 3);
        assert_eq!(report.distinct_triples, 2);
        assert!(report.malformed.is_empty());
        let vocab = RelationVocab::conceptnet();
        let atloc = vocab.id_by_name("atlocation").unwrap();
        let (a, b) = (g.concept_id("a").unwrap(), g.concept_id("b").unwrap());
        assert!(g.contains_triple(&Triple::new(a, atloc, b)));
        assert!(g.contains_triple(&Triple::new(b, reverse_of(atloc), a)));
        // ids follow first appearance
        assert_eq!((a.0, b.0, g.concept_id("c").unwrap().0), (0, 1, 2));
    }

    #[test]
    fn empty_input() {
        let (g, report) = load("", &IngestConfig::default());
        assert_eq!(g.num_concepts(), 0);
        assert_eq!(g.num_triples(), 0);
        assert_eq!(report, IngestReport::default());
    }

    #[test]
    fn malformed_rows_are_reported_not_fatal() {
        let text = "\
garbage line
/a/1\t/r/IsA\t/c/en/dog\t/c/en/animal\t{}
/a/2\tIsA\t/c/en/dog\t/c/en/pet\t{}
/a/3\t/r/IsA\t/c/fr/chien\t/c/en/dog\t{}
/a/4\t/r/IsA\t/c/en/_\t/c/en/dog\t{}
/a/5\t/r/IsA\t/c/en/dog/n\t/c/en/dog\t{}
";
        let (g, report) = load(text, &IngestConfig::default());
        assert_eq!(g.num_concepts(), 2);
        let lines: Vec<usize> = report.malformed.iter().map(|m| m.line).collect();
        assert_eq!(lines, vec![1, 3, 5]);
        assert_eq!(report.skipped_language, 1);
        assert_eq!(report.self_loops, 1);
    }

    #[test]
    fn unknown_relation_policy() {
        let text = "/a/1\t/r/ExternalURL\t/c/en/dog\t/c/en/cat\t{}\n";
        let (g, report) = load(text, &IngestConfig::default());
        assert_eq!(g.num_triples(), 0);
        assert_eq!(report.unknown_relations.get("/r/ExternalURL"), Some(&1));

        let cfg = IngestConfig {
            unknown_relations: UnknownRelationPolicy::RelatedTo,
            ..IngestConfig::default()
        };
        let (g, report) = load(text, &cfg);
        assert_eq!(g.num_triples(), 2);
        assert_eq!(report.remapped_unknown, 1);
        let related = RelationVocab::conceptnet().id_by_name("relatedto").unwrap();
        assert_eq!(g.triples().iter().filter(|t| t.rel == related).count(), 1);
    }

    #[test]
    fn uri_normalization() {
        assert_eq!(
            normalize_concept_uri("/c/en/Ice_Cream/n/wn/food", "en").as_deref(),
            Some("ice cream")
        );
        assert_eq!(normalize_concept_uri("/c/en/school", "en").as_deref(), Some("school"));
        assert_eq!(normalize_concept_uri("/c/fr/ecole", "en"), None);
        assert_eq!(normalize_concept_uri("/c/english/x", "en"), None);
    }
}
