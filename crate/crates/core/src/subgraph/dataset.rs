//! Statement/explanation datasets: one JSON object per line,
//! `{"id", "statement", "explanations": [..]}`.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{align_text, ConceptId, KnowledgeGraph, MalformedRow};
use crate::text::{tokenize, Stemmer, Stopwords};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub explanations: Vec<String>,
}

/// Reads a dataset, collecting unparsable lines instead of failing.
pub fn read_dataset(path: &Path) -> Result<(Vec<DatasetRecord>, Vec<MalformedRow>), DatasetError> {
    let file = std::fs::File::open(path)?;
    read_dataset_from(std::io::BufReader::new(file))
}

pub fn read_dataset_from<R: BufRead>(
    reader: R,
) -> Result<(Vec<DatasetRecord>, Vec<MalformedRow>), DatasetError> {
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetRecord>(&line) {
            Ok(r) => records.push(r),
            Err(e) => malformed.push(MalformedRow {
                line: idx + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok((records, malformed))
}

/// A dataset record aligned to graph concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub statement: String,
    pub statement_tokens: Vec<String>,
    pub explanations: Vec<String>,
    /// Source concepts of the statement, in match order.
    pub sources: Vec<ConceptId>,
    /// Concepts of each explanation, in match order.
    pub targets: Vec<Vec<ConceptId>>,
}

impl Example {
    /// Union of all explanation concepts, ascending.
    pub fn target_union(&self) -> Vec<ConceptId> {
        let mut all: Vec<ConceptId> = self.targets.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

pub fn align_example(
    record: &DatasetRecord,
    graph: &KnowledgeGraph,
    stopwords: &Stopwords,
    stemmer: &dyn Stemmer,
    max_ngram: usize,
) -> Example {
    Example {
        id: record.id.clone(),
        statement: record.statement.clone(),
        statement_tokens: tokenize(&record.statement),
        explanations: record.explanations.clone(),
        sources: align_text(&record.statement, graph, stopwords, stemmer, max_ngram),
        targets: record
            .explanations
            .iter()
            .map(|e| align_text(e, graph, stopwords, stemmer, max_ngram))
            .collect(),
    }
}
