use serde::{Deserialize, Serialize};

use super::{AnsatzSpec, EmbeddingModel, Scheme};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub const EMBEDDING_CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordEntry {
    pub token: String,
    pub params: Vec<f64>,
}

/// On-disk form: one parameter list per token (circuit scheme) or the shared
/// list plus the token order (memory scheme).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheckpoint {
    pub version: u32,
    pub scheme: Scheme,
    pub ansatz: AnsatzSpec,
    pub shared_width: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub words: Vec<WordEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<SharedEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedEntry {
    pub tokens: Vec<String>,
    pub params: Vec<f64>,
}

impl EmbeddingCheckpoint {
    pub fn from_model(model: &EmbeddingModel) -> Self {
        let (words, shared) = match model.scheme {
            Scheme::Circuit => {
                let p = model.ansatz.num_params();
                let words = model
                    .vocab
                    .tokens()
                    .iter()
                    .zip(model.params.chunks(p))
                    .map(|(t, c)| WordEntry { token: t.clone(), params: c.to_vec() })
                    .collect();
                (words, None)
            }
            Scheme::Memory => {
                let shared = SharedEntry { tokens: model.vocab.tokens().to_vec(), params: model.params.clone() };
                (Vec::new(), Some(shared))
            }
        };
        Self {
            version: EMBEDDING_CHECKPOINT_VERSION,
            scheme: model.scheme,
            ansatz: model.ansatz,
            shared_width: model.shared_width,
            words,
            shared,
        }
    }

    pub fn into_model(self) -> Result<EmbeddingModel> {
        if self.version != EMBEDDING_CHECKPOINT_VERSION {
            return Err(Error::Decode(format!("unsupported checkpoint version {}", self.version)));
        }
        let (tokens, params) = match (self.scheme, self.shared) {
            (Scheme::Circuit, None) => {
                let tokens = self.words.iter().map(|w| w.token.clone()).collect();
                (tokens, self.words.into_iter().flat_map(|w| w.params).collect())
            }
            (Scheme::Memory, Some(s)) if self.words.is_empty() => (s.tokens, s.params),
            _ => return Err(Error::Decode("checkpoint fields do not match its scheme".into())),
        };
        let model = EmbeddingModel {
            vocab: Vocabulary::new(tokens)?,
            ansatz: self.ansatz,
            scheme: self.scheme,
            shared_width: self.shared_width,
            params,
        };
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Decode(format!("checkpoint: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_schemes() {
        let v = Vocabulary::new(["a", "b", "c"].map(String::from).to_vec()).unwrap();
        for scheme in [Scheme::Circuit, Scheme::Memory] {
            let m = EmbeddingModel::init(v.clone(), AnsatzSpec::default(), scheme, 4).unwrap();
            let text = EmbeddingCheckpoint::from_model(&m).to_json();
            let back = EmbeddingCheckpoint::from_json(&text).unwrap().into_model().unwrap();
            assert_eq!(back, m);
        }
        let mut bad = EmbeddingCheckpoint::from_model(
            &EmbeddingModel::init(v, AnsatzSpec::default(), Scheme::Circuit, 4).unwrap(),
        );
        bad.words[1].params.pop();
        assert!(bad.into_model().is_err());
    }
}
