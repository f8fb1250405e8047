//! Deterministic synthetic encoder.
//!
//! Text embeds as a seeded random projection of its token-count vector,
//! L2-normalized — a pure bag-of-tokens code. A toy image is a hidden caption
//! plus noise: `normalize(encode_text(hidden) + noise_scale * unit_gaussian)`,
//! which gives desk-scale tests a ground-truth alignment oracle.

use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::standard_normal;

use super::{Backend, EmbeddingVector, ImagePayload, ImageRecord, SentenceRecord};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToyWorldSpec {
    /// Total token vocabulary, end-of-sentence "." included.
    pub vocab_size: usize,
    /// Embedding dimension d1.
    pub d1: usize,
    /// Seed of the fixed random projection.
    pub projection_seed: u64,
    /// L2 radius of the image perturbation (0 = image equals its caption).
    pub image_noise_scale: f64,
}

impl ToyWorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::input("toy vocabulary size must be >= 2"));
        }
        if self.d1 < 4 {
            return Err(Error::input("toy embedding dimension d1 must be >= 4"));
        }
        Ok(())
    }

    /// Default word list: `w00 .. w(n-2)` plus the "." end token.
    pub fn default_vocab(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.vocab_size - 1).map(|i| format!("w{i:02}")).collect();
        v.push(".".to_string());
        v
    }
}

pub struct ToyBackend {
    spec: ToyWorldSpec,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    /// vocab_size x d1 projection, row-major f64.
    projection: Vec<f64>,
    /// Hidden caption store for resolving toy image payloads.
    hidden: HashMap<String, String>,
    fingerprint: String,
}

impl ToyBackend {
    pub fn new(spec: ToyWorldSpec) -> Result<Self> {
        let vocab = spec.default_vocab();
        Self::with_vocab(spec, vocab)
    }

    pub fn with_vocab(spec: ToyWorldSpec, vocab: Vec<String>) -> Result<Self> {
        spec.validate()?;
        if vocab.len() != spec.vocab_size {
            return Err(Error::input(format!(
                "vocab length {} != declared size {}",
                vocab.len(),
                spec.vocab_size
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(spec.projection_seed);
        let mut projection = vec![0.0; spec.vocab_size * spec.d1];
        for v in &mut projection {
            *v = standard_normal(&mut rng);
        }
        Ok(Self::assemble(spec, vocab, projection))
    }

    /// Test constructor with an explicit projection matrix (rows x d1).
    pub fn with_projection(spec: ToyWorldSpec, vocab: Vec<String>, projection: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if vocab.len() != spec.vocab_size || projection.len() != spec.vocab_size * spec.d1 {
            return Err(Error::input("projection/vocab shape mismatch"));
        }
        Ok(Self::assemble(spec, vocab, projection))
    }

    fn assemble(spec: ToyWorldSpec, vocab: Vec<String>, projection: Vec<f64>) -> Self {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let fingerprint = Self::compute_fingerprint(&spec, &vocab, &projection);
        ToyBackend { spec, vocab, index, projection, hidden: HashMap::new(), fingerprint }
    }

    /// Register the hidden captions that image payloads refer to.
    pub fn with_hidden_sentences(mut self, sentences: &[SentenceRecord]) -> Self {
        for s in sentences {
            self.hidden.insert(s.id.clone(), s.text.clone());
        }
        self
    }

    pub fn spec(&self) -> &ToyWorldSpec {
        &self.spec
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn compute_fingerprint(spec: &ToyWorldSpec, vocab: &[String], projection: &[f64]) -> String {
        // Identifies exactly what affects encode_text: dimension, vocabulary,
        // projection. Noise scale and hidden sentences do not belong here.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(spec.d1 as u64).to_le_bytes());
        for t in vocab {
            eat(t.as_bytes());
            eat(&[0]);
        }
        for v in projection {
            eat(&v.to_bits().to_le_bytes());
        }
        format!("toy:d1={}:vocab={}:{:016x}", spec.d1, spec.vocab_size, h)
    }

    fn token_row(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) => i,
            // Unknown tokens map to a stable hash bucket so arbitrary sampled
            // captions still encode deterministically.
            None => (fnv1a(token.as_bytes()) % self.spec.vocab_size as u64) as usize,
        }
    }

    /// Unit f64 embedding of text; shared by both encode paths so the final
    /// f32 rounding is identical.
    fn text_unit_f64(&self, text: &str) -> Result<Vec<f64>> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        let mut any = false;
        for token in text.split_whitespace() {
            any = true;
            *counts.entry(self.token_row(token)).or_insert(0.0) += 1.0;
        }
        if !any {
            return Err(Error::input("empty text"));
        }
        let d = self.spec.d1;
        let mut sum = vec![0.0f64; d];
        // Accumulate in row order for determinism.
        let mut rows: Vec<(usize, f64)> = counts.into_iter().collect();
        rows.sort_unstable_by_key(|&(r, _)| r);
        for (row, count) in rows {
            let base = row * d;
            for (s, p) in sum.iter_mut().zip(self.projection[base..base + d].iter()) {
                *s += count * p;
            }
        }
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::input("degenerate toy embedding (zero projection sum)"));
        }
        for v in &mut sum {
            *v /= norm;
        }
        Ok(sum)
    }
}

impl Backend for ToyBackend {
    fn d1(&self) -> usize {
        self.spec.d1
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn encode_image(&self, image: &ImageRecord) -> Result<EmbeddingVector> {
        let (source_id, noise_seed) = match &image.payload {
            ImagePayload::Toy { source_id, noise_seed } => (source_id, *noise_seed),
            ImagePayload::File { path } => {
                return Err(Error::input(format!(
                    "toy backend cannot resolve pixel file '{path}'"
                )))
            }
        };
        let text = self.hidden.get(source_id).ok_or_else(|| {
            Error::input(format!("unresolvable toy payload: unknown sentence id '{source_id}'"))
        })?;
        let mut unit = self.text_unit_f64(text)?;
        if self.spec.image_noise_scale > 0.0 {
            let mut rng = ChaCha12Rng::seed_from_u64(noise_seed);
            let mut g: Vec<f64> = (0..self.spec.d1).map(|_| standard_normal(&mut rng)).collect();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for (u, gv) in unit.iter_mut().zip(g.iter_mut()) {
                *u += self.spec.image_noise_scale * (*gv / gn);
            }
        }
        EmbeddingVector::normalized_from_f64(&unit)
    }

    fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        let unit = self.text_unit_f64(text)?;
        EmbeddingVector::normalized_from_f64(&unit)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
