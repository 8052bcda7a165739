use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Lowercase, split on whitespace, and make every ASCII punctuation mark its
/// own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_string());
            } else {
                word.extend(ch.to_lowercase());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Token ↔ id map. Ids 0..4 are `<pad>`, `<s>`, `</s>`, `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = Error;

    fn try_from(file: VocabFile) -> Result<Self> {
        if file.tokens.len() < RESERVED.len()
            || file.tokens[..RESERVED.len()].iter().zip(RESERVED).any(|(a, b)| a != b)
        {
            return Err(Error::Data("vocabulary does not start with the reserved tokens".into()));
        }
        let mut index = HashMap::new();
        for (i, t) in file.tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Self {
            tokens: file.tokens,
            index,
        })
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { tokens: v.tokens }
    }
}

impl Vocabulary {
    /// Reserved tokens followed by every distinct token in sorted order.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let words: BTreeSet<&str> = sentences
            .into_iter()
            .flatten()
            .map(String::as_str)
            .filter(|t| !RESERVED.contains(t))
            .collect();
        let tokens: Vec<String> = RESERVED
            .iter()
            .copied()
            .chain(words)
            .map(str::to_string)
            .collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Map tokens to ids, sending unseen ones to `<unk>`.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }

    /// Map tokens to ids, failing on the first unseen token.
    pub fn encode_strict(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| Error::Data(format!("token '{t}' is not in the vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("What is THIS animal?"), ["what", "is", "this", "animal", "?"]);
        assert_eq!(tokenize("  a,b  "), ["a", ",", "b"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn vocabulary_reserves_ids() {
        let s = tokenize("what is this dog ?");
        let v = Vocabulary::build([s.as_slice()]);
        assert_eq!(v.len(), 9);
        assert_eq!(v.token(START), "<s>");
        assert_eq!(v.token(END), "</s>");
        assert_eq!(v.encode(&tokenize("what is a cat")), vec![v.id("what").unwrap(), v.id("is").unwrap(), UNK, UNK]);
        assert!(v.encode_strict(&tokenize("cat")).is_err());
        assert_eq!(v.decode(&v.encode_strict(&s).unwrap()), s);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let s = tokenize("a b c");
        let v = Vocabulary::build([s.as_slice()]);
        let text = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"tokens":["a"]}"#).is_err());
    }
}
