//! Concept F1, precision/recall at N, and corpus hop statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::kg::{align_text, ConceptId, KnowledgeGraph};
use crate::subgraph::{hop_requirements, Example, HopQuery, HopStats, HopStatsConfig};
use crate::text::{Stemmer, Stopwords};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1Entry {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// How scores against several references combine into one per example.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReferenceAggregation {
    /// The reference giving the highest F1.
    #[default]
    Max,
    /// Metric-wise mean over references.
    Mean,
    /// One reference holding the union of all reference concepts.
    Union,
}

impl std::str::FromStr for ReferenceAggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "union" => Ok(Self::Union),
            _ => Err(format!("unknown reference aggregation {s:?} (max, mean, union)")),
        }
    }
}

fn unique(concepts: &[ConceptId], sources: &BTreeSet<ConceptId>) -> BTreeSet<ConceptId> {
    concepts.iter().copied().filter(|c| !sources.contains(c)).collect()
}

/// Scores a predicted set against a reference set; `None` when the reference
/// is empty. An empty prediction has precision 0.
pub fn f1_from_sets(predicted: &BTreeSet<ConceptId>, reference: &BTreeSet<ConceptId>) -> Option<F1Entry> {
    if reference.is_empty() {
        return None;
    }
    let hits = predicted.intersection(reference).count() as f64;
    let recall = hits / reference.len() as f64;
    let precision = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    let f1 = if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    };
    Some(F1Entry { recall, precision, f1 })
}

/// Concept F1 of one example; statement concepts are removed from both sides.
/// `None` when every reference is empty after removal.
pub fn concept_f1(
    predicted: &[ConceptId],
    references: &[Vec<ConceptId>],
    sources: &[ConceptId],
    aggregation: ReferenceAggregation,
) -> Option<F1Entry> {
    let sources: BTreeSet<ConceptId> = sources.iter().copied().collect();
    let pred = unique(predicted, &sources);
    let refs: Vec<BTreeSet<ConceptId>> = references
        .iter()
        .map(|r| unique(r, &sources))
        .filter(|r| !r.is_empty())
        .collect();
    if refs.is_empty() {
        return None;
    }
    match aggregation {
        ReferenceAggregation::Max => refs
            .iter()
            .filter_map(|r| f1_from_sets(&pred, r))
            .reduce(|best, e| if e.f1 > best.f1 { e } else { best }),
        ReferenceAggregation::Mean => {
            let scores: Vec<F1Entry> = refs.iter().filter_map(|r| f1_from_sets(&pred, r)).collect();
            let n = scores.len() as f64;
            Some(F1Entry {
                recall: scores.iter().map(|e| e.recall).sum::<f64>() / n,
                precision: scores.iter().map(|e| e.precision).sum::<f64>() / n,
                f1: scores.iter().map(|e| e.f1).sum::<f64>() / n,
            })
        }
        ReferenceAggregation::Union => {
            let all: BTreeSet<ConceptId> = refs.into_iter().flatten().collect();
            f1_from_sets(&pred, &all)
        }
    }
}

/// Concept F1 between texts, aligning each to graph concepts first.
#[allow(clippy::too_many_arguments)]
pub fn concept_f1_text(
    predicted: &str,
    references: &[String],
    sources: &[ConceptId],
    graph: &KnowledgeGraph,
    stopwords: &Stopwords,
    stemmer: &dyn Stemmer,
    max_ngram: usize,
    aggregation: ReferenceAggregation,
) -> Option<F1Entry> {
    let pred = align_text(predicted, graph, stopwords, stemmer, max_ngram);
    let refs: Vec<Vec<ConceptId>> = references
        .iter()
        .map(|r| align_text(r, graph, stopwords, stemmer, max_ngram))
        .collect();
    concept_f1(&pred, &refs, sources, aggregation)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConceptF1Report {
    pub entries: Vec<Option<F1Entry>>,
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub mean_f1: f64,
    /// Examples without reference concepts, left out of the means.
    pub excluded: usize,
}

impl ConceptF1Report {
    pub fn from_entries(entries: Vec<Option<F1Entry>>) -> Self {
        let scored: Vec<&F1Entry> = entries.iter().flatten().collect();
        let n = scored.len();
        let mean = |f: fn(&F1Entry) -> f64| {
            if n == 0 { 0.0 } else { scored.iter().map(|e| f(e)).sum::<f64>() / n as f64 }
        };
        Self {
            mean_recall: mean(|e| e.recall),
            mean_precision: mean(|e| e.precision),
            mean_f1: mean(|e| e.f1),
            excluded: entries.len() - n,
            entries,
        }
    }
}

/// Corpus-mean precision and recall of the top `N` ranked concepts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PRCurve {
    /// Cutoffs `1..=max_n`.
    pub n: Vec<usize>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub examples: usize,
    /// Examples with no gold concepts, left out.
    pub excluded: usize,
}

impl PRCurve {
    pub fn recall_at(&self, n: usize) -> Option<f64> {
        self.recall.get(n.checked_sub(1)?).copied()
    }

    pub fn precision_at(&self, n: usize) -> Option<f64> {
        self.precision.get(n.checked_sub(1)?).copied()
    }
}

/// Precision@N and Recall@N for one ranking; precision divides by the number
/// of concepts actually returned within the cutoff.
pub fn cutoff_metrics(ranking: &[ConceptId], gold: &BTreeSet<ConceptId>, n: usize) -> (f64, f64) {
    let top = &ranking[..n.min(ranking.len())];
    let hits = top.iter().filter(|c| gold.contains(c)).count() as f64;
    let precision = if top.is_empty() { 0.0 } else { hits / top.len() as f64 };
    (precision, hits / gold.len() as f64)
}

pub fn pr_at_n(rankings: &[Vec<ConceptId>], gold: &[Vec<ConceptId>], max_n: usize) -> PRCurve {
    assert_eq!(rankings.len(), gold.len());
    let mut curve = PRCurve {
        n: (1..=max_n).collect(),
        precision: vec![0.0; max_n],
        recall: vec![0.0; max_n],
        ..PRCurve::default()
    };
    for (ranking, g) in rankings.iter().zip(gold) {
        let g: BTreeSet<ConceptId> = g.iter().copied().collect();
        if g.is_empty() {
            curve.excluded += 1;
            continue;
        }
        curve.examples += 1;
        for n in 1..=max_n {
            let (p, r) = cutoff_metrics(ranking, &g, n);
            curve.precision[n - 1] += p;
            curve.recall[n - 1] += r;
        }
    }
    if curve.examples > 0 {
        let k = curve.examples as f64;
        curve.precision.iter_mut().for_each(|p| *p /= k);
        curve.recall.iter_mut().for_each(|r| *r /= k);
    }
    curve
}

/// Hop requirements of explanation concepts and unpruned neighbourhood sizes.
pub fn corpus_stats(examples: &[Example], graph: &KnowledgeGraph, config: &HopStatsConfig) -> HopStats {
    let queries: Vec<HopQuery> = examples
        .iter()
        .map(|e| HopQuery {
            sources: e.sources.clone(),
            targets: e.target_union(),
        })
        .collect();
    hop_requirements(graph, &queries, config)
}

/// Human-readable rendering of [`HopStats`].
pub fn render_hop_table(stats: &HopStats) -> String {
    let mut out = String::new();
    let concept_total: usize = stats.concept_histogram.values().sum::<usize>() + stats.concept_unreachable;
    let example_total: usize = stats.example_histogram.values().sum::<usize>() + stats.example_unreachable;
    let _ = writeln!(out, "hops  concepts  examples");
    let hops: BTreeSet<u32> = stats
        .concept_histogram
        .keys()
        .chain(stats.example_histogram.keys())
        .copied()
        .collect();
    for h in hops {
        let c = stats.concept_histogram.get(&h).copied().unwrap_or(0);
        let e = stats.example_histogram.get(&h).copied().unwrap_or(0);
        let _ = writeln!(out, "{h:>4}  {c:>8}  {e:>8}");
    }
    let _ = writeln!(
        out,
        "none  {:>8}  {:>8}",
        stats.concept_unreachable, stats.example_unreachable
    );
    let _ = writeln!(out, "concepts: {concept_total}, examples: {example_total}, skipped: {}", stats.examples_skipped);
    let _ = writeln!(
        out,
        "reachable concepts within 3 hops: {:.4}",
        stats.concept_fraction_within(3)
    );
    let _ = writeln!(
        out,
        "reachable examples within 3 hops: {:.4}",
        stats.example_fraction_within(3)
    );
    for (i, m) in stats.mean_nodes_by_hop.iter().enumerate() {
        let _ = writeln!(out, "mean nodes within {} hops: {m:.2}", i + 1);
    }
    out
}

/// Human-readable rendering of a [`PRCurve`] plus Concept F1 means.
pub fn render_metrics_table(curve: &PRCurve, f1: &ConceptF1Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "   N  P@N     R@N");
    for ((n, p), r) in curve.n.iter().zip(&curve.precision).zip(&curve.recall) {
        let _ = writeln!(out, "{n:>4}  {p:.4}  {r:.4}");
    }
    let _ = writeln!(out, "examples: {}, excluded: {}", curve.examples, curve.excluded);
    let _ = writeln!(
        out,
        "concept F1 {:.4} (precision {:.4}, recall {:.4}), excluded {}",
        f1.mean_f1, f1.mean_precision, f1.mean_recall, f1.excluded
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ConceptId> {
        v.iter().map(|&i| ConceptId(i)).collect()
    }

    #[test]
    fn tagged_f1_cases() {
        let same = concept_f1(&ids(&[1, 2]), &[ids(&[2, 1])], &[], ReferenceAggregation::Max).unwrap();
        assert_eq!(same.f1, 1.0);
        let disjoint = concept_f1(&ids(&[1, 2]), &[ids(&[3])], &[], ReferenceAggregation::Max).unwrap();
        assert_eq!(disjoint.f1, 0.0);
        let partial = concept_f1(&ids(&[1, 2]), &[ids(&[1, 2, 3, 4])], &[], ReferenceAggregation::Max).unwrap();
        assert_eq!((partial.recall, partial.precision), (0.5, 1.0));
        assert_eq!(partial.f1, 2.0 / 3.0);
    }

    #[test]
    fn statement_concepts_are_removed() {
        let e = concept_f1(&ids(&[9, 1]), &[ids(&[9])], &ids(&[9]), ReferenceAggregation::Max);
        assert_eq!(e, None);
        let e = concept_f1(&ids(&[9]), &[ids(&[9, 1])], &ids(&[9]), ReferenceAggregation::Max).unwrap();
        assert_eq!(e.precision, 0.0);
    }

    #[test]
    fn aggregations() {
        let refs = [ids(&[1]), ids(&[2, 3])];
        let pred = ids(&[1]);
        assert_eq!(concept_f1(&pred, &refs, &[], ReferenceAggregation::Max).unwrap().f1, 1.0);
        assert_eq!(concept_f1(&pred, &refs, &[], ReferenceAggregation::Mean).unwrap().f1, 0.5);
        let u = concept_f1(&pred, &refs, &[], ReferenceAggregation::Union).unwrap();
        assert_eq!(u.recall, 1.0 / 3.0);
    }

    #[test]
    fn pr_by_hand() {
        // gold {2, 4}; ranking 4 1 2 3 0
        let c = pr_at_n(&[ids(&[4, 1, 2, 3, 0])], &[ids(&[2, 4])], 5);
        assert_eq!(c.precision, vec![1.0, 0.5, 2.0 / 3.0, 0.5, 0.4]);
        assert_eq!(c.recall, vec![0.5, 0.5, 1.0, 1.0, 1.0]);
        let short = pr_at_n(&[ids(&[4])], &[ids(&[2, 4])], 3);
        assert_eq!(short.precision, vec![1.0, 1.0, 1.0]);
        let empty = pr_at_n(&[ids(&[1])], &[vec![]], 2);
        assert_eq!((empty.examples, empty.excluded), (0, 1));
    }
}
