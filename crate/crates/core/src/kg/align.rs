//! Surface-text to concept alignment by stemmed n-gram lookup.

use super::{ConceptId, KnowledgeGraph};
use crate::text::{tokenize, Stemmer, Stopwords};

pub const DEFAULT_MAX_NGRAM: usize = 3;

/// Aligns a token sequence to graph concepts.
///
/// Scans left to right; at each position the longest n-gram (n ≤ `max_ngram`)
/// whose stem string names a concept wins and its tokens are consumed.
/// Stopword unigrams never match. Output is ordered by match position, each
/// concept at most once.
pub fn align_concepts(
    tokens: &[String],
    graph: &KnowledgeGraph,
    stopwords: &Stopwords,
    stemmer: &dyn Stemmer,
    max_ngram: usize,
) -> Vec<ConceptId> {
    let stems: Vec<String> = tokens.iter().map(|t| stemmer.stem(t)).collect();
    let mut out: Vec<ConceptId> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut consumed = 1;
        for n in (1..=max_ngram.min(tokens.len() - i)).rev() {
            if n == 1 && stopwords.contains(&tokens[i]) {
                continue;
            }
            let key = stems[i..i + n].join(" ");
            let hits = graph.concepts_with_stem(&key);
            if !hits.is_empty() {
                for &c in hits {
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
                consumed = n;
                break;
            }
        }
        i += consumed;
    }
    out
}

/// Tokenizes raw text, then aligns.
pub fn align_text(
    text: &str,
    graph: &KnowledgeGraph,
    stopwords: &Stopwords,
    stemmer: &dyn Stemmer,
    max_ngram: usize,
) -> Vec<ConceptId> {
    align_concepts(&tokenize(text), graph, stopwords, stemmer, max_ngram)
}
