//! Whitespace token vocabularies for the toy-scale models.
//!
//! The generator and discriminator each own one; they are deliberately
//! independent (the two models need not share token ids, and generated
//! captions cross between them as plain text).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embeddings::SentenceRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    /// Marks word-internal pieces (sub-word vocabularies); reported verbatim
    /// with a marker by the explain output.
    word_internal: Vec<bool>,
    eos_id: u32,
    unk_id: Option<u32>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Vocabulary from explicit tokens; `eos` must be present.
    pub fn from_tokens(tokens: Vec<String>, eos: &str) -> Result<Self> {
        let eos_id = tokens
            .iter()
            .position(|t| t == eos)
            .ok_or_else(|| Error::input(format!("EOS token '{eos}' not in vocabulary")))?
            as u32;
        let word_internal = vec![false; tokens.len()];
        let mut v = Vocab { tokens, word_internal, eos_id, unk_id: None, index: HashMap::new() };
        v.rebuild_index()?;
        Ok(v)
    }

    /// Sorted unique corpus tokens plus the EOS token. With `with_unk`, an
    /// `<unk>` entry is appended and unknown tokens map to it at encode time.
    pub fn from_corpus(corpus: &[SentenceRecord], eos: &str, with_unk: bool) -> Result<Self> {
        let mut set = BTreeSet::new();
        for s in corpus {
            for tok in s.text.split_whitespace() {
                set.insert(tok.to_string());
            }
        }
        set.insert(eos.to_string());
        let mut tokens: Vec<String> = set.into_iter().collect();
        let mut unk_id = None;
        if with_unk {
            unk_id = Some(tokens.len() as u32);
            tokens.push("<unk>".to_string());
        }
        let eos_id = tokens.iter().position(|t| t == eos).expect("inserted above") as u32;
        let word_internal = vec![false; tokens.len()];
        let mut v = Vocab { tokens, word_internal, eos_id, unk_id, index: HashMap::new() };
        v.rebuild_index()?;
        Ok(v)
    }

    pub fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (i, t) in self.tokens.iter().enumerate() {
            if self.index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::input(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn eos_token(&self) -> &str {
        &self.tokens[self.eos_id as usize]
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn is_word_internal(&self, id: u32) -> bool {
        self.word_internal[id as usize]
    }

    pub fn mark_word_internal(&mut self, id: u32) {
        self.word_internal[id as usize] = true;
    }

    /// Tokenize by whitespace. Unknown tokens map to `<unk>` when the
    /// vocabulary has one, otherwise fail.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        for tok in text.split_whitespace() {
            match self.index.get(tok) {
                Some(&id) => out.push(id),
                None => match self.unk_id {
                    Some(unk) => out.push(unk),
                    None => {
                        return Err(Error::input(format!("token '{tok}' not in vocabulary")))
                    }
                },
            }
        }
        if out.is_empty() {
            return Err(Error::input("empty text"));
        }
        Ok(out)
    }

    /// Space-joined detokenization.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.tokens[id as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_vocab_is_sorted_and_has_eos() {
        let corpus = vec![
            SentenceRecord::new("a", "w02 w01 ."),
            SentenceRecord::new("b", "w01 w03 ."),
        ];
        let v = Vocab::from_corpus(&corpus, ".", false).unwrap();
        assert_eq!(v.tokens(), &[".", "w01", "w02", "w03"]);
        assert_eq!(v.eos_id(), 0);
        assert_eq!(v.encode("w01 w03 .").unwrap(), vec![1, 3, 0]);
        assert_eq!(v.decode(&[1, 3, 0]), "w01 w03 .");
    }

    #[test]
    fn unknown_tokens_fail_or_map_to_unk() {
        let corpus = vec![SentenceRecord::new("a", "x y .")];
        let strict = Vocab::from_corpus(&corpus, ".", false).unwrap();
        assert_eq!(strict.encode("x z").unwrap_err().kind(), "input");
        let lossy = Vocab::from_corpus(&corpus, ".", true).unwrap();
        let ids = lossy.encode("x z").unwrap();
        assert_eq!(lossy.token(ids[1]), "<unk>");
    }
}
