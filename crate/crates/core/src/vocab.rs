use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qpostr::ceil_log2;

/// Ordered distinct tokens; a token's id is its position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::InvalidArgument(format!("vocabulary needs at least 2 tokens, got {}", tokens.len())));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Tokens in order of first appearance, after any `reserved` ones.
    pub fn from_sentences<'a, I, S>(reserved: &[&str], sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        for s in sentences {
            for t in s.as_ref() {
                if !tokens.contains(t) {
                    tokens.push(t.clone());
                }
            }
        }
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `⌈log₂ N⌉`.
    pub fn index_bits(&self) -> usize {
        ceil_log2(self.tokens.len() as u64) as usize
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, sentence: &[String]) -> Result<Vec<usize>> {
        sentence
            .iter()
            .map(|t| self.id(t).ok_or_else(|| Error::Encoding(format!("token {t:?} not in vocabulary"))))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Whitespace-tokenized, lowercased lines; blank lines are skipped.
pub fn tokenize_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}
