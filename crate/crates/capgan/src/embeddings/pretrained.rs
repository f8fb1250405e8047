//! Adapter for a real pretrained contrastive encoder.
//!
//! The encoder itself runs out of process (e.g. a few lines of Python around
//! an open CLIP checkpoint); this backend speaks a JSONL request/response
//! protocol over the child's stdio:
//!
//! ```text
//! -> {"op":"meta"}
//! <- {"d1":512,"fingerprint":"clip-vit-b32"}
//! -> {"op":"text","text":"a dog on a beach"}
//! <- {"values":[...]}              // d1 floats
//! -> {"op":"image","path":"img.png"}
//! <- {"values":[...]} or {"error":"..."}
//! ```
//!
//! Responses are normalized here, so downstream code sees the same unit-norm
//! contract as the toy backend.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{Backend, EmbeddingVector, ImagePayload, ImageRecord};

pub struct PretrainedBackend {
    model_id: String,
    d1: usize,
    fingerprint: String,
    io: Mutex<ChildIo>,
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

#[derive(Deserialize)]
struct MetaResponse {
    d1: usize,
    fingerprint: String,
}

#[derive(Deserialize)]
struct VectorResponse {
    #[serde(default)]
    values: Option<Vec<f32>>,
    #[serde(default)]
    error: Option<String>,
}

impl PretrainedBackend {
    /// Spawn the encoder subprocess and handshake for its metadata.
    pub fn spawn(model_id: &str, command: &[String]) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config(format!(
                "backend 'pretrained:{model_id}' needs backend.pretrained_command \
                 (the encoder subprocess to run)"
            )));
        }
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .arg(model_id)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::state(format!("failed to spawn encoder '{}': {e}", command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut io = ChildIo { child, stdin, stdout };
        let meta_line = io.round_trip(r#"{"op":"meta"}"#)?;
        let meta: MetaResponse = serde_json::from_str(&meta_line)
            .map_err(|e| Error::state(format!("bad meta response from encoder: {e}")))?;
        Ok(PretrainedBackend {
            model_id: model_id.to_string(),
            d1: meta.d1,
            fingerprint: meta.fingerprint,
            io: Mutex::new(io),
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    fn request_vector(&self, request: &str) -> Result<EmbeddingVector> {
        let mut io = self.io.lock().expect("encoder io poisoned");
        let line = io.round_trip(request)?;
        let resp: VectorResponse = serde_json::from_str(&line)
            .map_err(|e| Error::state(format!("bad encoder response: {e}")))?;
        if let Some(err) = resp.error {
            return Err(Error::input(format!("encoder error: {err}")));
        }
        let values = resp
            .values
            .ok_or_else(|| Error::state("encoder response missing values"))?;
        if values.len() != self.d1 {
            return Err(Error::state(format!(
                "encoder returned {} dims, fingerprint declares {}",
                values.len(),
                self.d1
            )));
        }
        EmbeddingVector::normalized(values)
    }
}

impl ChildIo {
    fn round_trip(&mut self, request: &str) -> Result<String> {
        if let Ok(Some(status)) = self.child.try_wait() {
            return Err(Error::state(format!("encoder subprocess exited ({status})")));
        }
        writeln!(self.stdin, "{request}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::state(format!("encoder stdin closed: {e}")))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::state(format!("encoder stdout read failed: {e}")))?;
        if n == 0 {
            return Err(Error::state("encoder subprocess closed its stdout"));
        }
        Ok(line)
    }
}

impl Drop for PretrainedBackend {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

impl Backend for PretrainedBackend {
    fn d1(&self) -> usize {
        self.d1
    }

    fn fingerprint(&self) -> String {
        format!("pretrained:{}:{}", self.model_id, self.fingerprint)
    }

    fn encode_image(&self, image: &ImageRecord) -> Result<EmbeddingVector> {
        let path = match &image.payload {
            ImagePayload::File { path } => path,
            ImagePayload::Toy { .. } => {
                return Err(Error::input(
                    "pretrained backend expects pixel file payloads, got a toy payload",
                ))
            }
        };
        let req = serde_json::json!({ "op": "image", "path": path });
        self.request_vector(&req.to_string())
    }

    fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::input("empty text"));
        }
        let req = serde_json::json!({ "op": "text", "text": text });
        self.request_vector(&req.to_string())
    }
}
