//! Flat `key = value` pipeline configuration.
//!
//! Precedence: `--set` overrides > config file > built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bridgekg::eval::ReferenceAggregation;
use bridgekg::extractor::TrainConfig;
use bridgekg::kg::UnknownRelationPolicy;
use bridgekg::subgraph::RetrievalConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // inputs and outputs
    pub assertions: Option<PathBuf>,
    pub relation_map: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub raw_dataset: Option<PathBuf>,
    pub split_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub restriction_datasets: Vec<PathBuf>,
    pub cache: Option<PathBuf>,
    pub dev_cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub token_vocab: Option<PathBuf>,
    pub train_report: Option<PathBuf>,
    pub stats_report: Option<PathBuf>,
    pub bundles: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub metrics_report: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    // retrieval
    pub budget: usize,
    pub hop_bound: u32,
    pub max_ngram: usize,
    pub path_cap: usize,
    pub lang: String,
    pub unknown_relations: UnknownRelationPolicy,
    pub vocab_restriction: bool,
    // model and training
    pub k1: usize,
    pub k2: usize,
    pub lambda_triple: f64,
    pub lambda_concept: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup: f64,
    pub seed: u64,
    pub dim: usize,
    pub blocks: usize,
    pub max_len: usize,
    pub max_dist: u32,
    /// 0 keeps every negative triple.
    pub negative_cap: usize,
    pub float_width: u32,
    pub workers: usize,
    // splitting and evaluation
    pub dev_ratio: f64,
    pub test_ratio: f64,
    pub paths_per_concept: usize,
    pub reference_aggregation: ReferenceAggregation,
    pub stats_hops: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let retrieval = RetrievalConfig::default();
        Self {
            assertions: None,
            relation_map: None,
            stopwords: None,
            index: None,
            raw_dataset: None,
            split_dir: None,
            dataset: None,
            restriction_datasets: Vec::new(),
            cache: None,
            dev_cache: None,
            checkpoint: None,
            token_vocab: None,
            train_report: None,
            stats_report: None,
            bundles: None,
            references: None,
            metrics_report: None,
            templates: None,
            budget: retrieval.budget.unwrap_or(0),
            hop_bound: retrieval.hop_bound,
            max_ngram: bridgekg::kg::DEFAULT_MAX_NGRAM,
            path_cap: bridgekg::subgraph::DEFAULT_PATH_CAP,
            lang: "en".to_string(),
            unknown_relations: UnknownRelationPolicy::Skip,
            vocab_restriction: false,
            k1: train.k1,
            k2: train.k2,
            lambda_triple: train.lambda_triple,
            lambda_concept: train.lambda_concept,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            batch_size: train.batch_size,
            warmup: train.warmup,
            seed: train.seed,
            dim: 64,
            blocks: 1,
            max_len: 128,
            max_dist: 4,
            negative_cap: 0,
            float_width: 64,
            workers: 1,
            dev_ratio: 0.05,
            test_ratio: 0.1,
            paths_per_concept: 3,
            reference_aggregation: ReferenceAggregation::Max,
            stats_hops: 3,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl PipelineConfig {
    /// Defaults, then the file (if any), then each override in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            let text = std::fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
            for (k, v) in parse_pairs(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {o:?}: expected key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "assertions" => self.assertions = path(value),
            "relation_map" => self.relation_map = path(value),
            "stopwords" => self.stopwords = path(value),
            "index" => self.index = path(value),
            "raw_dataset" => self.raw_dataset = path(value),
            "split_dir" => self.split_dir = path(value),
            "dataset" => self.dataset = path(value),
            "restriction_datasets" => {
                self.restriction_datasets = value.split(',').filter_map(|p| path(p.trim())).collect()
            }
            "cache" => self.cache = path(value),
            "dev_cache" => self.dev_cache = path(value),
            "checkpoint" => self.checkpoint = path(value),
            "token_vocab" => self.token_vocab = path(value),
            "train_report" => self.train_report = path(value),
            "stats_report" => self.stats_report = path(value),
            "bundles" => self.bundles = path(value),
            "references" => self.references = path(value),
            "metrics_report" => self.metrics_report = path(value),
            "templates" => self.templates = path(value),
            "budget" => self.budget = parse(key, value)?,
            "hop_bound" => self.hop_bound = parse(key, value)?,
            "max_ngram" => self.max_ngram = parse(key, value)?,
            "path_cap" => self.path_cap = parse(key, value)?,
            "lang" => self.lang = value.to_string(),
            "unknown_relations" => {
                self.unknown_relations = match value {
                    "skip" => UnknownRelationPolicy::Skip,
                    "relatedto" => UnknownRelationPolicy::RelatedTo,
                    _ => return Err(CliError::Config(format!("unknown_relations: expected skip or relatedto, got {value:?}"))),
                }
            }
            "vocab_restriction" => self.vocab_restriction = parse_bool(key, value)?,
            "k1" => self.k1 = parse(key, value)?,
            "k2" => self.k2 = parse(key, value)?,
            "lambda_triple" => self.lambda_triple = parse(key, value)?,
            "lambda_concept" => self.lambda_concept = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "blocks" => self.blocks = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "max_dist" => self.max_dist = parse(key, value)?,
            "negative_cap" => self.negative_cap = parse(key, value)?,
            "float_width" => self.float_width = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "dev_ratio" => self.dev_ratio = parse(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "paths_per_concept" => self.paths_per_concept = parse(key, value)?,
            "reference_aggregation" => self.reference_aggregation = value.parse().map_err(CliError::Config)?,
            "stats_hops" => self.stats_hops = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.float_width != 64 {
            return bad("float_width: only 64-bit arithmetic is supported");
        }
        if self.dim == 0 || self.max_len == 0 || self.max_ngram == 0 || self.path_cap == 0 {
            return bad("dim, max_len, max_ngram and path_cap must be positive");
        }
        if !(0.0..=1.0).contains(&self.dev_ratio)
            || !(0.0..=1.0).contains(&self.test_ratio)
            || self.dev_ratio + self.test_ratio > 1.0
        {
            return bad("dev_ratio and test_ratio must lie in [0, 1] and sum to at most 1");
        }
        if self.paths_per_concept == 0 {
            return bad("paths_per_concept must be positive");
        }
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            hop_bound: self.hop_bound,
            budget: (self.budget > 0).then_some(self.budget),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda_triple: self.lambda_triple,
            lambda_concept: self.lambda_concept,
            k1: self.k1,
            k2: self.k2,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            warmup: self.warmup,
            seed: self.seed,
            negative_cap: (self.negative_cap > 0).then_some(self.negative_cap),
            workers: self.workers,
        }
    }

    /// Every key with its resolved value, one per line, in a fixed order.
    pub fn render(&self) -> String {
        let agg = match self.reference_aggregation {
            ReferenceAggregation::Max => "max",
            ReferenceAggregation::Mean => "mean",
            ReferenceAggregation::Union => "union",
        };
        let unknown = match self.unknown_relations {
            UnknownRelationPolicy::Skip => "skip",
            UnknownRelationPolicy::RelatedTo => "relatedto",
        };
        let restriction: Vec<String> = self.restriction_datasets.iter().map(|p| p.display().to_string()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("assertions", show_path(&self.assertions)),
            ("relation_map", show_path(&self.relation_map)),
            ("stopwords", show_path(&self.stopwords)),
            ("index", show_path(&self.index)),
            ("raw_dataset", show_path(&self.raw_dataset)),
            ("split_dir", show_path(&self.split_dir)),
            ("dataset", show_path(&self.dataset)),
            ("restriction_datasets", restriction.join(",")),
            ("cache", show_path(&self.cache)),
            ("dev_cache", show_path(&self.dev_cache)),
            ("checkpoint", show_path(&self.checkpoint)),
            ("token_vocab", show_path(&self.token_vocab)),
            ("train_report", show_path(&self.train_report)),
            ("stats_report", show_path(&self.stats_report)),
            ("bundles", show_path(&self.bundles)),
            ("references", show_path(&self.references)),
            ("metrics_report", show_path(&self.metrics_report)),
            ("templates", show_path(&self.templates)),
            ("budget", self.budget.to_string()),
            ("hop_bound", self.hop_bound.to_string()),
            ("max_ngram", self.max_ngram.to_string()),
            ("path_cap", self.path_cap.to_string()),
            ("lang", self.lang.clone()),
            ("unknown_relations", unknown.to_string()),
            ("vocab_restriction", self.vocab_restriction.to_string()),
            ("k1", self.k1.to_string()),
            ("k2", self.k2.to_string()),
            ("lambda_triple", self.lambda_triple.to_string()),
            ("lambda_concept", self.lambda_concept.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("warmup", self.warmup.to_string()),
            ("seed", self.seed.to_string()),
            ("dim", self.dim.to_string()),
            ("blocks", self.blocks.to_string()),
            ("max_len", self.max_len.to_string()),
            ("max_dist", self.max_dist.to_string()),
            ("negative_cap", self.negative_cap.to_string()),
            ("float_width", self.float_width.to_string()),
            ("workers", self.workers.to_string()),
            ("dev_ratio", self.dev_ratio.to_string()),
            ("test_ratio", self.test_ratio.to_string()),
            ("paths_per_concept", self.paths_per_concept.to_string()),
            ("reference_aggregation", agg.to_string()),
            ("stats_hops", self.stats_hops.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Resolved values as a map, for tests and reports.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        parse_pairs(&self.render())
            .expect("rendered config parses")
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.conf");
        std::fs::write(&f, "# comment\nk1 = 10\nk2=2\nseed = 5\n").unwrap();
        let cfg = PipelineConfig::resolve(Some(&f), &["k2=4".to_string()]).unwrap();
        assert_eq!((cfg.k1, cfg.k2, cfg.seed, cfg.epochs), (10, 4, 5, 3));
        let mut again = PipelineConfig::default();
        for (k, v) in parse_pairs(&cfg.render()).unwrap() {
            again.set(&k, &v).unwrap();
        }
        assert_eq!(again, cfg);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for o in ["float_width=32", "k2=40", "nonsense=1", "k1", "lambda_triple=-1", "epochs=zero"] {
            let e = PipelineConfig::resolve(None, &[o.to_string()]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{o}");
        }
    }
}
