use std::collections::{BTreeSet, HashMap};
use std::path::Path;

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Word vocabulary; id 0 is reserved for unknown words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TokenVocab {
    /// Sorted unique words after the unknown token.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let unique: BTreeSet<&str> = words.into_iter().filter(|w| *w != UNKNOWN_TOKEN).collect();
        Self::from_tokens(
            std::iter::once(UNKNOWN_TOKEN.to_string())
                .chain(unique.into_iter().map(str::to_string))
                .collect(),
        )
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<u32> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn checksum(&self) -> u64 {
        let mut w = crate::codec::ByteWriter::new();
        for t in &self.tokens {
            w.put_str(t);
        }
        crate::kg::checksum64(&w.into_inner())
    }

    /// One token per line.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(format!("vocabulary must start with {UNKNOWN_TOKEN}"));
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err("duplicate tokens in vocabulary".to_string());
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_is_zero_and_text_round_trips() {
        let v = TokenVocab::build(["school", "summer", "school"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("school"), 1);
        assert_eq!(v.id("nope"), 0);
        assert_eq!(v.encode(&["summer", "x"]), vec![2, 0]);
        let back = TokenVocab::parse(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.checksum(), v.checksum());
        assert!(TokenVocab::parse("a\nb\n").is_err());
    }
}
