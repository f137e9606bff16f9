//! Binary graph index.
//!
//! All integers are little-endian; strings are a u32 byte length followed by
//! UTF-8 bytes.
//!
//! ```text
//! magic      [u8; 4]   "BKG1"
//! version    u32       INDEX_VERSION
//! checksum   u64       first 8 bytes (LE) of SHA-256 over the vocabulary section
//! -- vocabulary section --
//! relations  u32 count, then count strings
//! concepts   u32 count, then count (surface string, stem string) pairs
//! -- structure --
//! triples    u64 count, then count (u32 head, u8 rel, u32 tail)
//! offsets    (concepts + 1) × u64, out-edge slice bounds per concept
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ConceptId, KgError, KnowledgeGraph, RelationId, Triple};
use crate::codec::{ByteReader, ByteWriter};

pub const INDEX_MAGIC: &[u8; 4] = b"BKG1";
pub const INDEX_VERSION: u32 = 1;

fn vocab_section(relations: &[String], surfaces: &[String], stems: &[String]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_u32(relations.len() as u32);
    for r in relations {
        w.put_str(r);
    }
    w.put_u32(surfaces.len() as u32);
    for (s, st) in surfaces.iter().zip(stems) {
        w.put_str(s);
        w.put_str(st);
    }
    w.into_inner()
}

pub(crate) fn checksum64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl KnowledgeGraph {
    /// Checksum of the relation and concept vocabulary.
    pub fn vocab_checksum(&self) -> u64 {
        checksum64(&vocab_section(&self.relations, &self.surfaces, &self.stems))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let vocab = vocab_section(&self.relations, &self.surfaces, &self.stems);
        let mut w = ByteWriter::new();
        w.put_bytes(INDEX_MAGIC);
        w.put_u32(INDEX_VERSION);
        w.put_u64(checksum64(&vocab));
        w.put_bytes(&vocab);
        w.put_u64(self.triples.len() as u64);
        for t in &self.triples {
            w.put_u32(t.head.0);
            w.put_u8(t.rel.0);
            w.put_u32(t.tail.0);
        }
        for &o in self.offsets() {
            w.put_u64(o as u64);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KgError> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != INDEX_MAGIC {
            return Err(KgError::BadMagic);
        }
        let version = r.get_u32()?;
        if version != INDEX_VERSION {
            return Err(KgError::VersionMismatch {
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let stored = r.get_u64()?;
        let vocab_start = r.position();
        let n_rel = r.get_u32()? as usize;
        let relations = (0..n_rel).map(|_| r.get_str()).collect::<Result<Vec<_>, _>>()?;
        let n = r.get_u32()? as usize;
        let mut surfaces = Vec::with_capacity(n.min(r.remaining()));
        let mut stems = Vec::with_capacity(n.min(r.remaining()));
        for _ in 0..n {
            surfaces.push(r.get_str()?);
            stems.push(r.get_str()?);
        }
        let computed = checksum64(&bytes[vocab_start..r.position()]);
        if computed != stored {
            return Err(KgError::ChecksumMismatch { stored, computed });
        }
        let m = r.get_u64()? as usize;
        if m.saturating_mul(9) > r.remaining() {
            return Err(KgError::Truncated);
        }
        let mut triples = Vec::with_capacity(m);
        for _ in 0..m {
            let head = ConceptId(r.get_u32()?);
            let rel = RelationId(r.get_u8()?);
            let tail = ConceptId(r.get_u32()?);
            if head.index() >= n || tail.index() >= n || rel.index() >= n_rel {
                return Err(KgError::Corrupt(format!("triple out of range: {head:?} {rel:?} {tail:?}")));
            }
            triples.push(Triple { head, rel, tail });
        }
        let offsets = (0..=n)
            .map(|_| r.get_u64().map(|o| o as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if offsets[0] != 0 || offsets[n] != m || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(KgError::Corrupt("adjacency offsets inconsistent".to_string()));
        }
        if r.remaining() != 0 {
            return Err(KgError::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self::from_sorted(relations, surfaces, stems, triples, offsets))
    }
}

pub fn save_index(graph: &KnowledgeGraph, path: &Path) -> Result<(), KgError> {
    std::fs::write(path, graph.to_bytes())?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<KnowledgeGraph, KgError> {
    KnowledgeGraph::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphBuilder, RelationVocab};

    fn toy() -> KnowledgeGraph {
        let vocab = RelationVocab::conceptnet();
        let atloc = vocab.id_of("/r/AtLocation").unwrap();
        let usedfor = vocab.id_of("/r/UsedFor").unwrap();
        let mut b = GraphBuilder::new(&vocab);
        b.add("a", atloc, "b");
        b.add("b", usedfor, "c");
        b.add("a", atloc, "b");
        b.build()
    }

    #[test]
    fn round_trip_through_file() {
        let g = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.bkg");
        save_index(&g, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded, g);
        assert_eq!(loaded.concepts_with_stem("a"), g.concepts_with_stem("a"));
    }

    #[test]
    fn corrupted_checksum() {
        let mut bytes = toy().to_bytes();
        bytes[8] ^= 0xff;
        assert!(matches!(
            KnowledgeGraph::from_bytes(&bytes),
            Err(KgError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn zero_bytes_and_truncation() {
        assert!(matches!(KnowledgeGraph::from_bytes(&[]), Err(KgError::Truncated)));
        let bytes = toy().to_bytes();
        for cut in [3, 10, 20, bytes.len() - 1] {
            assert!(
                matches!(KnowledgeGraph::from_bytes(&bytes[..cut]), Err(KgError::Truncated)),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn version_and_magic() {
        let mut bytes = toy().to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            KnowledgeGraph::from_bytes(&bytes),
            Err(KgError::VersionMismatch { found: 9, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(KnowledgeGraph::from_bytes(&bytes), Err(KgError::BadMagic)));
    }
}
