//! Subgraph cache: retrieve once, train many times.
//!
//! ```text
//! magic     [u8; 4]  "BKGC"
//! version   u32      CACHE_VERSION
//! graph     u64      vocabulary checksum of the graph the ids refer to
//! records   repeated: u32 payload length, payload
//! ```
//!
//! A payload holds the example (id, statement, tokens, explanations, source
//! and per-explanation target ids), the subgraph (hop bound, budget with
//! `u64::MAX` for none, admitted counts per round, node ids, edges), the
//! bridge set, the positive triples and the supervision report. Distances are
//! recomputed on load.

use std::path::Path;

use thiserror::Error;

use super::{Example, RetrievalConfig, Subgraph, SupervisionReport, SupervisionSet};
use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::kg::{ConceptId, RelationId, Triple};

pub const CACHE_MAGIC: &[u8; 4] = b"BKGC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a subgraph cache file (bad magic)")]
    BadMagic,
    #[error("cache format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("cache was built against a different graph (checksum {stored:016x}, expected {expected:016x})")]
    GraphMismatch { stored: u64, expected: u64 },
    #[error("cache file truncated")]
    Truncated,
    #[error("cache record corrupt: {0}")]
    Corrupt(String),
}

impl From<DecodeError> for CacheError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Truncated(_) => CacheError::Truncated,
            DecodeError::Utf8(p) => CacheError::Corrupt(format!("invalid utf-8 at byte {p}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedExample {
    pub example: Example,
    pub subgraph: Subgraph,
    pub supervision: SupervisionSet,
    pub report: SupervisionReport,
}

fn put_ids(w: &mut ByteWriter, ids: &[ConceptId]) {
    w.put_u32(ids.len() as u32);
    for c in ids {
        w.put_u32(c.0);
    }
}

fn put_triples(w: &mut ByteWriter, ts: &[Triple]) {
    w.put_u64(ts.len() as u64);
    for t in ts {
        w.put_u32(t.head.0);
        w.put_u8(t.rel.0);
        w.put_u32(t.tail.0);
    }
}

fn put_strs(w: &mut ByteWriter, ss: &[String]) {
    w.put_u32(ss.len() as u32);
    for s in ss {
        w.put_str(s);
    }
}

fn get_ids(r: &mut ByteReader<'_>) -> Result<Vec<ConceptId>, DecodeError> {
    let n = r.get_u32()? as usize;
    (0..n).map(|_| r.get_u32().map(ConceptId)).collect()
}

fn get_triples(r: &mut ByteReader<'_>) -> Result<Vec<Triple>, DecodeError> {
    let n = r.get_u64()? as usize;
    if n.saturating_mul(9) > r.remaining() {
        return Err(DecodeError::Truncated(r.position()));
    }
    (0..n)
        .map(|_| {
            Ok(Triple {
                head: ConceptId(r.get_u32()?),
                rel: RelationId(r.get_u8()?),
                tail: ConceptId(r.get_u32()?),
            })
        })
        .collect()
}

fn get_strs(r: &mut ByteReader<'_>) -> Result<Vec<String>, DecodeError> {
    let n = r.get_u32()? as usize;
    (0..n).map(|_| r.get_str()).collect()
}

fn encode_record(rec: &CachedExample) -> Vec<u8> {
    let ex = &rec.example;
    let sub = &rec.subgraph;
    let mut w = ByteWriter::new();
    w.put_str(&ex.id);
    w.put_str(&ex.statement);
    put_strs(&mut w, &ex.statement_tokens);
    put_strs(&mut w, &ex.explanations);
    put_ids(&mut w, &ex.sources);
    w.put_u32(ex.targets.len() as u32);
    for t in &ex.targets {
        put_ids(&mut w, t);
    }
    w.put_u32(sub.hop_bound());
    w.put_u64(sub.budget().map_or(u64::MAX, |b| b as u64));
    w.put_u32(sub.admitted_per_round().len() as u32);
    for &n in sub.admitted_per_round() {
        w.put_u64(n as u64);
    }
    put_ids(&mut w, sub.sources());
    put_ids(&mut w, sub.nodes());
    put_triples(&mut w, sub.edges());
    put_ids(&mut w, &rec.supervision.bridge);
    put_triples(&mut w, &rec.supervision.positives);
    w.put_u64(rec.report.paths_enumerated as u64);
    put_ids(&mut w, &rec.report.truncated);
    w.into_inner()
}

fn decode_record(bytes: &[u8]) -> Result<CachedExample, CacheError> {
    let mut r = ByteReader::new(bytes);
    let id = r.get_str()?;
    let statement = r.get_str()?;
    let statement_tokens = get_strs(&mut r)?;
    let explanations = get_strs(&mut r)?;
    let sources = get_ids(&mut r)?;
    let n_refs = r.get_u32()? as usize;
    let targets = (0..n_refs).map(|_| get_ids(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let hop_bound = r.get_u32()?;
    let budget = match r.get_u64()? {
        u64::MAX => None,
        b => Some(b as usize),
    };
    let n_rounds = r.get_u32()? as usize;
    let rounds = (0..n_rounds)
        .map(|_| r.get_u64().map(|n| n as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let sub_sources = get_ids(&mut r)?;
    let nodes = get_ids(&mut r)?;
    let edges = get_triples(&mut r)?;
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CacheError::Corrupt(format!("{id}: node ids not ascending")));
    }
    let member = |c: ConceptId| nodes.binary_search(&c).is_ok();
    if !edges.iter().all(|t| member(t.head) && member(t.tail))
        || !sub_sources.iter().all(|&s| member(s))
    {
        return Err(CacheError::Corrupt(format!("{id}: edge or source outside node set")));
    }
    let bridge = get_ids(&mut r)?;
    let positives = get_triples(&mut r)?;
    let paths_enumerated = r.get_u64()? as usize;
    let truncated = get_ids(&mut r)?;
    if r.remaining() != 0 {
        return Err(CacheError::Corrupt(format!("{id}: trailing bytes in record")));
    }
    let subgraph = Subgraph::from_parts(
        nodes,
        edges,
        sub_sources,
        RetrievalConfig { hop_bound, budget },
        rounds,
    );
    Ok(CachedExample {
        example: Example {
            id,
            statement,
            statement_tokens,
            explanations,
            sources,
            targets,
        },
        subgraph,
        supervision: SupervisionSet { bridge, positives },
        report: SupervisionReport {
            paths_enumerated,
            truncated,
        },
    })
}

pub fn encode_cache(graph_checksum: u64, records: &[CachedExample]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_bytes(CACHE_MAGIC);
    w.put_u32(CACHE_VERSION);
    w.put_u64(graph_checksum);
    for rec in records {
        let payload = encode_record(rec);
        w.put_u32(payload.len() as u32);
        w.put_bytes(&payload);
    }
    w.into_inner()
}

/// Decodes a cache; `expected_graph` guards against a mismatched index.
pub fn decode_cache(bytes: &[u8], expected_graph: Option<u64>) -> Result<Vec<CachedExample>, CacheError> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = r.get_u32()?;
    if version != CACHE_VERSION {
        return Err(CacheError::VersionMismatch {
            found: version,
            expected: CACHE_VERSION,
        });
    }
    let stored = r.get_u64()?;
    if let Some(expected) = expected_graph {
        if expected != stored {
            return Err(CacheError::GraphMismatch { stored, expected });
        }
    }
    let mut out = Vec::new();
    while r.remaining() > 0 {
        let len = r.get_u32()? as usize;
        out.push(decode_record(r.take(len)?)?);
    }
    Ok(out)
}

pub fn write_cache(path: &Path, graph_checksum: u64, records: &[CachedExample]) -> Result<(), CacheError> {
    std::fs::write(path, encode_cache(graph_checksum, records))?;
    Ok(())
}

pub fn read_cache(path: &Path, expected_graph: Option<u64>) -> Result<Vec<CachedExample>, CacheError> {
    decode_cache(&std::fs::read(path)?, expected_graph)
}
