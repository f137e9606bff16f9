use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bridgekg::encoder::{read_checkpoint, write_checkpoint, ModelConfig, ModelParams, TokenVocab};
use bridgekg::eval::{concept_f1, corpus_stats, pr_at_n, render_hop_table, render_metrics_table, ConceptF1Report};
use bridgekg::extractor::{build_token_vocab, score_example, top_paths, train, EncodedExample, ExtractorError};
use bridgekg::kg::{load_conceptnet_from_reader, ConceptId, IngestConfig, KnowledgeGraph, RelationVocab};
use bridgekg::subgraph::{
    align_example, decode_cache, encode_cache, label_bridge_concepts, prepare_example, read_dataset, retrieve_subgraph,
    CachedExample, DatasetRecord, Example, HopStatsConfig, SubgraphError,
};
use bridgekg::text::{tokenize, PorterStemmer, Stopwords};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::fsio::{atomic_write, input_hash, read, require_files};

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("`{key}` must be set for this command")))
}

/// Checks inputs, then logs the resolved config and a hash of the inputs.
fn start(cfg: &PipelineConfig, inputs: &[&Path]) -> Result<(), CliError> {
    require_files(inputs)?;
    log::info!("resolved config:\n{}", cfg.render());
    log::info!("input hash {}", input_hash(inputs)?);
    Ok(())
}

fn pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("serializable row");
        out.push(b'\n');
    }
    out
}

fn pretty_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable report");
    out.push(b'\n');
    out
}

struct Text {
    stopwords: Stopwords,
    stemmer: PorterStemmer,
}

fn text_resources(cfg: &PipelineConfig) -> Result<Text, CliError> {
    let stopwords = match &cfg.stopwords {
        Some(p) => Stopwords::from_file(p).map_err(|e| CliError::io(p, e))?,
        None => Stopwords::english(),
    };
    Ok(Text {
        stopwords,
        stemmer: PorterStemmer::default(),
    })
}

fn stopword_inputs(cfg: &PipelineConfig) -> Vec<&Path> {
    cfg.stopwords.as_deref().into_iter().collect()
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph, CliError> {
    KnowledgeGraph::from_bytes(&read(path)?).map_err(|e| CliError::from_kg(path, e))
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    let (records, bad) = read_dataset(path).map_err(|e| match e {
        bridgekg::subgraph::DatasetError::Io(io) => CliError::io(path, io),
    })?;
    for m in &bad {
        log::warn!("{}: line {}: {}", path.display(), m.line, m.reason);
    }
    Ok(records)
}

fn align_all(records: &[DatasetRecord], graph: &KnowledgeGraph, cfg: &PipelineConfig, text: &Text) -> Vec<Example> {
    records
        .iter()
        .map(|r| align_example(r, graph, &text.stopwords, &text.stemmer, cfg.max_ngram))
        .collect()
}

fn node_filter(cfg: &PipelineConfig, graph: &KnowledgeGraph, text: &Text) -> Result<Option<HashSet<ConceptId>>, CliError> {
    if !cfg.vocab_restriction {
        return Ok(None);
    }
    if cfg.restriction_datasets.is_empty() {
        return Err(CliError::Config(
            "vocab_restriction needs `restriction_datasets`".to_string(),
        ));
    }
    let mut keep = HashSet::new();
    for p in &cfg.restriction_datasets {
        for ex in align_all(&load_records(p)?, graph, cfg, text) {
            keep.extend(ex.sources.iter().copied());
            keep.extend(ex.targets.iter().flatten().copied());
        }
    }
    Ok(Some(keep))
}

/// Retrieves every example in parallel, keeping input order. Examples
/// without source concepts are returned as `None`.
fn prepare_all(
    examples: Vec<Example>,
    graph: &KnowledgeGraph,
    cfg: &PipelineConfig,
    filter: Option<&HashSet<ConceptId>>,
) -> Result<Vec<Option<CachedExample>>, CliError> {
    let retrieval = cfg.retrieval();
    let out: Vec<Result<Option<CachedExample>, SubgraphError>> = pool(cfg)?.install(|| {
        examples
            .into_par_iter()
            .map(|ex| {
                if ex.sources.is_empty() {
                    log::warn!("example {}: no source concepts, skipped", ex.id);
                    return Ok(None);
                }
                prepare_example(graph, ex, retrieval, filter, cfg.path_cap).map(Some)
            })
            .collect()
    });
    out.into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(e.to_string()))
}

// ------------------------------------------------------------------ split

pub fn split(cfg: &PipelineConfig) -> Result<(), CliError> {
    let raw = required(&cfg.raw_dataset, "raw_dataset")?;
    let dir = required(&cfg.split_dir, "split_dir")?;
    start(cfg, &[raw])?;
    let records = load_records(raw)?;
    let n = records.len();
    let n_test = (n as f64 * cfg.test_ratio).floor() as usize;
    let n_dev = (n as f64 * cfg.dev_ratio).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut dev: Vec<usize> = order[n_test..n_test + n_dev].to_vec();
    let mut rest: Vec<usize> = order[n_test + n_dev..].to_vec();
    for v in [&mut test, &mut dev, &mut rest] {
        v.sort_unstable();
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let train: Vec<DatasetRecord> = rest
        .iter()
        .flat_map(|&i| {
            let r = &records[i];
            r.explanations.iter().enumerate().map(move |(k, e)| DatasetRecord {
                id: format!("{}#{k}", r.id),
                statement: r.statement.clone(),
                explanations: vec![e.clone()],
            })
        })
        .collect();
    let outputs = [
        ("train.jsonl", jsonl(&train)),
        ("dev.jsonl", jsonl(&pick(&dev))),
        ("test.jsonl", jsonl(&pick(&test))),
    ];
    for (name, bytes) in &outputs {
        atomic_write(&dir.join(name), bytes)?;
    }
    log::info!(
        "split {n} records: {} train pairs, {} dev, {} test",
        train.len(),
        dev.len(),
        test.len()
    );
    Ok(())
}

// ----------------------------------------------------------------- ingest

pub fn ingest(cfg: &PipelineConfig) -> Result<(), CliError> {
    let assertions = required(&cfg.assertions, "assertions")?;
    let index = required(&cfg.index, "index")?;
    let mut inputs = vec![assertions];
    inputs.extend(cfg.relation_map.as_deref());
    start(cfg, &inputs)?;
    let vocab = match &cfg.relation_map {
        Some(p) => RelationVocab::from_file(p).map_err(|e| CliError::from_kg(p, e))?,
        None => RelationVocab::conceptnet(),
    };
    let ingest = IngestConfig {
        lang: cfg.lang.clone(),
        unknown_relations: cfg.unknown_relations,
    };
    let file = std::fs::File::open(assertions).map_err(|e| CliError::io(assertions, e))?;
    let reader = std::io::BufReader::with_capacity(1 << 20, file);
    let (graph, report) =
        load_conceptnet_from_reader(reader, &vocab, &ingest).map_err(|e| CliError::from_kg(assertions, e))?;
    for m in &report.malformed {
        log::warn!("{}: line {}: {}", assertions.display(), m.line, m.reason);
    }
    log::info!(
        "ingested {} concepts, {} stored triples; {}",
        graph.num_concepts(),
        graph.num_triples(),
        serde_json::to_string(&report).expect("report")
    );
    atomic_write(index, &graph.to_bytes())
}

// --------------------------------------------------------------- retrieve

pub fn retrieve(cfg: &PipelineConfig) -> Result<(), CliError> {
    let index = required(&cfg.index, "index")?;
    let dataset = required(&cfg.dataset, "dataset")?;
    let cache = required(&cfg.cache, "cache")?;
    let mut inputs = vec![index, dataset];
    inputs.extend(cfg.restriction_datasets.iter().map(PathBuf::as_path));
    inputs.extend(stopword_inputs(cfg));
    start(cfg, &inputs)?;
    let graph = load_graph(index)?;
    let text = text_resources(cfg)?;
    let filter = node_filter(cfg, &graph, &text)?;
    let examples = align_all(&load_records(dataset)?, &graph, cfg, &text);
    let total = examples.len();
    let prepared: Vec<CachedExample> = prepare_all(examples, &graph, cfg, filter.as_ref())?.into_iter().flatten().collect();
    let bridges: usize = prepared.iter().map(|c| c.supervision.bridge.len()).sum();
    let truncated: usize = prepared.iter().map(|c| c.report.truncated.len()).sum();
    log::info!(
        "retrieved {} of {total} examples; {bridges} bridge concepts, {truncated} path enumerations capped",
        prepared.len()
    );
    atomic_write(cache, &encode_cache(graph.vocab_checksum(), &prepared))
}

// ------------------------------------------------------------------ stats

pub fn stats(cfg: &PipelineConfig) -> Result<String, CliError> {
    let index = required(&cfg.index, "index")?;
    let dataset = required(&cfg.dataset, "dataset")?;
    let mut inputs = vec![index, dataset];
    inputs.extend(stopword_inputs(cfg));
    start(cfg, &inputs)?;
    let graph = load_graph(index)?;
    let text = text_resources(cfg)?;
    let examples = align_all(&load_records(dataset)?, &graph, cfg, &text);
    let hop_cfg = HopStatsConfig {
        size_hops: cfg.stats_hops,
        ..HopStatsConfig::default()
    };
    let stats = corpus_stats(&examples, &graph, &hop_cfg);
    if let Some(p) = &cfg.stats_report {
        atomic_write(p, &pretty_json(&stats))?;
    }
    Ok(render_hop_table(&stats))
}

// ------------------------------------------------------------------ train

fn token_vocab_path(cfg: &PipelineConfig, checkpoint: &Path) -> PathBuf {
    cfg.token_vocab
        .clone()
        .unwrap_or_else(|| checkpoint.with_extension("vocab"))
}

fn read_cached(path: &Path, graph: &KnowledgeGraph) -> Result<Vec<CachedExample>, CliError> {
    decode_cache(&read(path)?, Some(graph.vocab_checksum())).map_err(|e| CliError::from_cache(path, e))
}

pub fn train_model(cfg: &PipelineConfig) -> Result<(), CliError> {
    let index = required(&cfg.index, "index")?;
    let cache = required(&cfg.cache, "cache")?;
    let checkpoint = required(&cfg.checkpoint, "checkpoint")?;
    let mut inputs = vec![index, cache];
    inputs.extend(cfg.dev_cache.as_deref());
    start(cfg, &inputs)?;
    let graph = load_graph(index)?;
    let train_cached = read_cached(cache, &graph)?;
    let dev_cached = match &cfg.dev_cache {
        Some(p) => read_cached(p, &graph)?,
        None => Vec::new(),
    };
    let vocab = build_token_vocab(&train_cached, &graph);
    let encode = |v: &[CachedExample]| -> Vec<EncodedExample> {
        v.iter().map(|c| EncodedExample::new(c, &graph, &vocab, cfg.max_len)).collect()
    };
    let (train_set, dev_set) = (encode(&train_cached), encode(&dev_cached));
    let model = ModelConfig {
        dim: cfg.dim,
        blocks: cfg.blocks,
        vocab_size: vocab.len(),
        max_len: cfg.max_len,
        max_dist: cfg.max_dist,
    };
    let init = ModelParams::init(model, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    log::info!(
        "training {} parameters on {} examples ({} dev)",
        init.num_parameters(),
        train_set.len(),
        dev_set.len()
    );
    let (params, report) = match train(init, &train_set, &dev_set, &cfg.train_config()) {
        Ok(r) => r,
        Err(ExtractorError::NonFinite {
            epoch,
            step,
            what,
            last_good,
        }) => {
            let keep = checkpoint.with_extension("last-good");
            atomic_write(&keep, &write_checkpoint(&last_good, vocab.checksum()))?;
            log::error!("last good parameters kept in {}", keep.display());
            return Err(CliError::Numerical(format!(
                "non-finite values at epoch {epoch}, step {step}: {what}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    for e in &report.epochs {
        log::info!("{}", serde_json::to_string(e).expect("epoch report"));
    }
    atomic_write(&token_vocab_path(cfg, checkpoint), vocab.to_text().as_bytes())?;
    atomic_write(checkpoint, &write_checkpoint(&params, vocab.checksum()))?;
    if let Some(p) = &cfg.train_report {
        atomic_write(p, &pretty_json(&report))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- extract

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConcept {
    pub concept: String,
    pub prob: f64,
}

/// One extracted bundle; each path is a list of `[head, relation, tail]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub id: String,
    pub statement: String,
    pub selected: Vec<SelectedConcept>,
    pub paths: Vec<Vec<[String; 3]>>,
}

fn load_model(cfg: &PipelineConfig, checkpoint: &Path) -> Result<(ModelParams, TokenVocab), CliError> {
    let vocab_path = token_vocab_path(cfg, checkpoint);
    let text = std::fs::read_to_string(&vocab_path).map_err(|e| CliError::io(&vocab_path, e))?;
    let vocab = TokenVocab::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", vocab_path.display())))?;
    let (params, _) =
        read_checkpoint(&read(checkpoint)?, Some(vocab.checksum())).map_err(|e| CliError::from_checkpoint(checkpoint, e))?;
    if params.config.vocab_size != vocab.len() {
        return Err(CliError::Data(format!(
            "checkpoint vocabulary has {} tokens, {} has {}",
            params.config.vocab_size,
            vocab_path.display(),
            vocab.len()
        )));
    }
    Ok((params, vocab))
}

fn bundle_for(
    cached: &CachedExample,
    graph: &KnowledgeGraph,
    vocab: &TokenVocab,
    params: &ModelParams,
    cfg: &PipelineConfig,
) -> Result<Bundle, CliError> {
    let ex = EncodedExample::new(cached, graph, vocab, params.config.max_len);
    let scored = score_example(&ex, params, cfg.k1, cfg.k2)?;
    let sub = &ex.subgraph;
    let best = top_paths(sub, &scored.triple_prob, cfg.paths_per_concept);
    let mut paths = Vec::new();
    for &(c, _) in &scored.selected {
        let v = sub.local(c).expect("selected concepts are subgraph nodes");
        for p in &best[v] {
            paths.push(
                p.edges
                    .iter()
                    .map(|&e| {
                        let t = sub.edges()[e];
                        [
                            graph.surface(t.head).to_string(),
                            graph.relation_name(t.rel).to_string(),
                            graph.surface(t.tail).to_string(),
                        ]
                    })
                    .collect(),
            );
        }
    }
    Ok(Bundle {
        id: cached.example.id.clone(),
        statement: cached.example.statement.clone(),
        selected: scored
            .selected
            .iter()
            .map(|&(c, prob)| SelectedConcept {
                concept: graph.surface(c).to_string(),
                prob,
            })
            .collect(),
        paths,
    })
}

pub fn extract(cfg: &PipelineConfig) -> Result<(), CliError> {
    let index = required(&cfg.index, "index")?;
    let checkpoint = required(&cfg.checkpoint, "checkpoint")?;
    let dataset = required(&cfg.dataset, "dataset")?;
    let bundles = required(&cfg.bundles, "bundles")?;
    let vocab_path = token_vocab_path(cfg, checkpoint);
    let mut inputs = vec![index, checkpoint, vocab_path.as_path(), dataset];
    inputs.extend(stopword_inputs(cfg));
    start(cfg, &inputs)?;
    let graph = load_graph(index)?;
    let (params, vocab) = load_model(cfg, checkpoint)?;
    let text = text_resources(cfg)?;
    let records = load_records(dataset)?;
    let prepared = prepare_all(align_all(&records, &graph, cfg, &text), &graph, cfg, None)?;
    let rows: Vec<Result<Bundle, CliError>> = pool(cfg)?.install(|| {
        prepared
            .par_iter()
            .zip(records.par_iter())
            .map(|(c, r)| match c {
                Some(c) => bundle_for(c, &graph, &vocab, &params, cfg),
                None => Ok(Bundle {
                    id: r.id.clone(),
                    statement: r.statement.clone(),
                    selected: Vec::new(),
                    paths: Vec::new(),
                }),
            })
            .collect()
    });
    let rows: Vec<Bundle> = rows.into_iter().collect::<Result<_, _>>()?;
    atomic_write(bundles, &jsonl(&rows))
}

fn load_bundles(path: &Path) -> Result<Vec<Bundle>, CliError> {
    let text = String::from_utf8(read(path)?).map_err(|_| CliError::Data(format!("{}: not utf-8", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

// ------------------------------------------------------------------- eval

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
enum MetricRow {
    PrAtN { n: usize, precision: f64, recall: f64 },
    ConceptF1 { f1: f64, precision: f64, recall: f64, excluded: usize },
    Examples { evaluated: usize, excluded: usize, missing_bundles: usize },
}

pub fn eval(cfg: &PipelineConfig) -> Result<String, CliError> {
    let index = required(&cfg.index, "index")?;
    let bundles_path = required(&cfg.bundles, "bundles")?;
    let references = required(&cfg.references, "references")?;
    let mut inputs = vec![index, bundles_path, references];
    inputs.extend(stopword_inputs(cfg));
    start(cfg, &inputs)?;
    let graph = load_graph(index)?;
    let text = text_resources(cfg)?;
    let bundles: HashMap<String, Bundle> = load_bundles(bundles_path)?.into_iter().map(|b| (b.id.clone(), b)).collect();
    let examples = align_all(&load_records(references)?, &graph, cfg, &text);
    let retrieval = cfg.retrieval();
    let gold: Vec<Result<Vec<ConceptId>, SubgraphError>> = pool(cfg)?.install(|| {
        examples
            .par_iter()
            .map(|ex| {
                if ex.sources.is_empty() {
                    return Ok(Vec::new());
                }
                let sub = retrieve_subgraph(&graph, &ex.sources, retrieval, None)?;
                Ok(label_bridge_concepts(&sub, &ex.target_union()))
            })
            .collect()
    });
    let gold: Vec<Vec<ConceptId>> = gold
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut missing = 0usize;
    let rankings: Vec<Vec<ConceptId>> = examples
        .iter()
        .map(|ex| match bundles.get(&ex.id) {
            Some(b) => b.selected.iter().filter_map(|s| graph.concept_id(&s.concept)).collect(),
            None => {
                missing += 1;
                log::warn!("no bundle for example {}", ex.id);
                Vec::new()
            }
        })
        .collect();
    let curve = pr_at_n(&rankings, &gold, cfg.k1);
    let f1 = ConceptF1Report::from_entries(
        examples
            .iter()
            .zip(&rankings)
            .map(|(ex, pred)| concept_f1(pred, &ex.targets, &ex.sources, cfg.reference_aggregation))
            .collect(),
    );
    let mut rows: Vec<MetricRow> = curve
        .n
        .iter()
        .zip(&curve.precision)
        .zip(&curve.recall)
        .map(|((&n, &precision), &recall)| MetricRow::PrAtN { n, precision, recall })
        .collect();
    rows.push(MetricRow::ConceptF1 {
        f1: f1.mean_f1,
        precision: f1.mean_precision,
        recall: f1.mean_recall,
        excluded: f1.excluded,
    });
    rows.push(MetricRow::Examples {
        evaluated: curve.examples,
        excluded: curve.excluded,
        missing_bundles: missing,
    });
    if let Some(p) = &cfg.metrics_report {
        atomic_write(p, &jsonl(&rows))?;
    }
    Ok(render_metrics_table(&curve, &f1))
}

// ------------------------------------------------------- export-templates

pub fn export_templates(cfg: &PipelineConfig) -> Result<(), CliError> {
    let bundles_path = required(&cfg.bundles, "bundles")?;
    let out = required(&cfg.templates, "templates")?;
    let mut inputs = vec![bundles_path];
    inputs.extend(stopword_inputs(cfg));
    start(cfg, &inputs)?;
    let text = text_resources(cfg)?;
    let mut s = String::new();
    for b in load_bundles(bundles_path)? {
        let mut seen = BTreeSet::new();
        let keywords: Vec<String> = tokenize(&b.statement)
            .into_iter()
            .filter(|w| !text.stopwords.contains(w) && seen.insert(w.clone()))
            .collect();
        for c in &b.selected {
            let _ = writeln!(s, "{}\t{} relates to {}", b.id, c.concept, keywords.join(" "));
        }
    }
    atomic_write(out, s.as_bytes())
}
