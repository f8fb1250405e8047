//! Image/text encoders behind one interface.
//!
//! Two backends exist: a deterministic synthetic one for desk-scale work
//! ([`ToyBackend`]) and a subprocess adapter that wraps any real pretrained
//! contrastive encoder ([`PretrainedBackend`]). Everything downstream
//! consumes unit-normalized vectors, so cosine is a plain dot product.

mod pretrained;
mod table;
mod toy;

pub use pretrained::PretrainedBackend;
pub use table::{CorpusEmbeddingTable, TableRow};
pub use toy::{ToyBackend, ToyWorldSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NORM_TOL: f64 = 1e-6;

/// Fixed-dimension real vector in the shared contrastive space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wrap raw values without normalizing (used for aggregates, which are
    /// generally not unit norm).
    pub fn raw(values: Vec<f32>) -> Self {
        EmbeddingVector { values, normalized: false }
    }

    /// L2-normalize and mark as normalized. Fails on (near-)zero vectors.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::input("cannot normalize a zero vector"));
        }
        let values = values.iter().map(|&v| (f64::from(v) / norm) as f32).collect();
        Ok(EmbeddingVector { values, normalized: true })
    }

    /// Build from an f64 working vector, normalizing in f64 before the f32
    /// cast so both encode paths round identically.
    pub fn normalized_from_f64(values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::input("cannot normalize a zero vector"));
        }
        Ok(EmbeddingVector {
            values: values.iter().map(|v| (v / norm) as f32).collect(),
            normalized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    /// Enforce the unit-norm invariant within [`NORM_TOL`].
    pub fn check_unit_norm(&self) -> Result<()> {
        if !self.normalized {
            return Err(Error::state("vector is not marked normalized"));
        }
        let norm = self.l2_norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::state(format!("unit-norm invariant violated: |v| = {norm}")));
        }
        Ok(())
    }
}

/// Cosine similarity computed in f64. Requires matching dimensions.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    let na = a.l2_norm();
    let nb = b.l2_norm();
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// An image plus whatever the backend needs to resolve it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub payload: ImagePayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImagePayload {
    /// Synthetic image: a hidden caption id plus a per-image noise seed.
    Toy { source_id: String, noise_seed: u64 },
    /// Pixel file reference for real encoders.
    File { path: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
}

impl SentenceRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        SentenceRecord { id: id.into(), text: text.into() }
    }
}

/// Uniform encoder interface. Backends are immutable after construction and
/// safe for concurrent reads.
pub trait Backend: Send + Sync {
    /// Embedding dimension d1.
    fn d1(&self) -> usize;

    /// Identifies the encoder version; stored tables must match it.
    fn fingerprint(&self) -> String;

    fn encode_image(&self, image: &ImageRecord) -> Result<EmbeddingVector>;

    fn encode_text(&self, text: &str) -> Result<EmbeddingVector>;

    fn encode_sentence(&self, sentence: &SentenceRecord) -> Result<EmbeddingVector> {
        self.encode_text(&sentence.text)
    }
}

/// Encode a whole corpus, one row per sentence in corpus order.
///
/// `workers` > 1 splits the corpus into contiguous chunks encoded on separate
/// threads; the output ordering (and bytes) are identical regardless.
pub fn build_corpus_table(
    backend: &dyn Backend,
    corpus: &[SentenceRecord],
    workers: usize,
) -> Result<CorpusEmbeddingTable> {
    if corpus.is_empty() {
        return Err(Error::input("corpus is empty"));
    }
    let workers = workers.max(1).min(corpus.len());
    let mut vectors: Vec<Option<Result<EmbeddingVector>>> = Vec::new();
    vectors.resize_with(corpus.len(), || None);
    let chunk = corpus.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, slot_chunk) in vectors.chunks_mut(chunk).enumerate() {
            let lo = w * chunk;
            let records = &corpus[lo..lo + slot_chunk.len()];
            handles.push(scope.spawn(move || {
                for (slot, rec) in slot_chunk.iter_mut().zip(records.iter()) {
                    *slot = Some(backend.encode_sentence(rec));
                }
            }));
        }
        for h in handles {
            h.join().expect("encoder worker panicked");
        }
    });
    let mut rows = Vec::with_capacity(corpus.len());
    for (rec, slot) in corpus.iter().zip(vectors.into_iter()) {
        match slot.expect("all slots filled") {
            Ok(vector) => {
                vector.check_unit_norm()?;
                rows.push(TableRow { id: rec.id.clone(), text: rec.text.clone(), vector });
            }
            Err(e) => {
                return Err(Error::input(format!(
                    "encoding failed for sentence '{}': {e}",
                    rec.id
                )));
            }
        }
    }
    Ok(CorpusEmbeddingTable::new(backend.fingerprint(), backend.d1(), rows))
}

/// Read a corpus from either plain text (one sentence per line) or JSONL
/// with `{id, text}` fields; the format is sniffed per line.
pub fn read_corpus(path: &std::path::Path) -> Result<Vec<SentenceRecord>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        text: String,
    }
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') {
            let parsed: Line = serde_json::from_str(line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
            out.push(SentenceRecord::new(parsed.id, parsed.text));
        } else {
            out.push(SentenceRecord::new(format!("s{i:06}"), line));
        }
    }
    if out.is_empty() {
        return Err(Error::input(format!("no sentences in {}", path.display())));
    }
    Ok(out)
}

/// Read an image set from JSONL. Toy payloads carry `{id, source_id,
/// noise_seed}`; file payloads carry `{id, path}`.
pub fn read_images(path: &std::path::Path) -> Result<Vec<ImageRecord>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        #[serde(default)]
        source_id: Option<String>,
        #[serde(default)]
        noise_seed: Option<u64>,
        #[serde(default)]
        path: Option<String>,
    }
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        let payload = match (parsed.source_id, parsed.path) {
            (Some(source_id), None) => ImagePayload::Toy {
                source_id,
                noise_seed: parsed.noise_seed.unwrap_or(0),
            },
            (None, Some(p)) => ImagePayload::File { path: p },
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: need exactly one of source_id or path", i + 1),
                ))
            }
        };
        out.push(ImageRecord { id: parsed.id, payload });
    }
    if out.is_empty() {
        return Err(Error::input(format!("no images in {}", path.display())));
    }
    Ok(out)
}

pub fn write_images(path: &std::path::Path, images: &[ImageRecord]) -> Result<()> {
    let mut buf = String::new();
    for img in images {
        let line = match &img.payload {
            ImagePayload::Toy { source_id, noise_seed } => serde_json::json!({
                "id": img.id, "source_id": source_id, "noise_seed": noise_seed,
            }),
            ImagePayload::File { path } => serde_json::json!({ "id": img.id, "path": path }),
        };
        buf.push_str(&line.to_string());
        buf.push('\n');
    }
    crate::container::write_atomic(path, buf.as_bytes())
}

#[cfg(test)]
mod tests;
