//! Persistent corpus embedding tables.
//!
//! On disk: a binary container whose JSON header holds `{fingerprint, d1,
//! count}` followed by row-major little-endian f32 values, plus a sidecar
//! JSONL of `(id, text)` so the metadata stays diff-able.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::{bytes_to_f32s, f32s_to_bytes, read_container, write_atomic, write_container};
use crate::error::{Error, Result};

use super::EmbeddingVector;

const TABLE_MAGIC: &[u8; 8] = b"CAPEMB01";

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub id: String,
    pub text: String,
    pub vector: EmbeddingVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEmbeddingTable {
    fingerprint: String,
    d1: usize,
    rows: Vec<TableRow>,
    /// Resolved run configuration echoed for provenance, if the caller has one.
    pub config_echo: Option<String>,
    pub seed_echo: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    kind: String,
    fingerprint: String,
    d1: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct SidecarLine {
    id: String,
    text: String,
}

impl CorpusEmbeddingTable {
    pub fn new(fingerprint: String, d1: usize, rows: Vec<TableRow>) -> Self {
        CorpusEmbeddingTable { fingerprint, d1, rows, config_echo: None, seed_echo: None }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reject use with a backend other than the one that produced the table.
    pub fn check_fingerprint(&self, live: &str) -> Result<()> {
        if self.fingerprint != live {
            return Err(Error::state(format!(
                "embedding table fingerprint mismatch: table '{}' vs backend '{}'",
                self.fingerprint, live
            )));
        }
        Ok(())
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_owned();
        os.push(".sidecar.jsonl");
        PathBuf::from(os)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = TableHeader {
            kind: "corpus_table".to_string(),
            fingerprint: self.fingerprint.clone(),
            d1: self.d1,
            count: self.rows.len(),
            config: self.config_echo.clone(),
            seed: self.seed_echo,
        };
        let mut floats = Vec::with_capacity(self.rows.len() * self.d1);
        for row in &self.rows {
            floats.extend_from_slice(row.vector.values());
        }
        write_container(path, TABLE_MAGIC, &header, &f32s_to_bytes(&floats))?;
        let mut sidecar = String::new();
        for row in &self.rows {
            sidecar.push_str(
                &serde_json::to_string(&SidecarLine { id: row.id.clone(), text: row.text.clone() })
                    .expect("sidecar serialization"),
            );
            sidecar.push('\n');
        }
        write_atomic(&Self::sidecar_path(path), sidecar.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let container = read_container::<TableHeader>(path, TABLE_MAGIC)?;
        let header = container.header;
        if header.kind != "corpus_table" {
            return Err(Error::format(path, format!("unexpected kind '{}'", header.kind)));
        }
        let floats = bytes_to_f32s(&container.payload, path)?;
        if floats.len() != header.count * header.d1 {
            return Err(Error::format(
                path,
                format!(
                    "payload holds {} floats, header promises {} x {}",
                    floats.len(),
                    header.count,
                    header.d1
                ),
            ));
        }
        let sidecar_path = Self::sidecar_path(path);
        let sidecar = std::fs::read_to_string(&sidecar_path)
            .map_err(|e| Error::io(&sidecar_path, e))?;
        let mut metas = Vec::with_capacity(header.count);
        for (i, line) in sidecar.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SidecarLine = serde_json::from_str(line)
                .map_err(|e| Error::format(&sidecar_path, format!("line {}: {e}", i + 1)))?;
            metas.push(parsed);
        }
        if metas.len() != header.count {
            return Err(Error::format(
                &sidecar_path,
                format!("sidecar has {} rows, header promises {}", metas.len(), header.count),
            ));
        }
        let mut rows = Vec::with_capacity(header.count);
        for (i, meta) in metas.into_iter().enumerate() {
            let values = floats[i * header.d1..(i + 1) * header.d1].to_vec();
            // Stored rows were normalized at encode time; trust the bits but
            // verify the invariant held up.
            let vector = EmbeddingVector { values, normalized: true };
            vector
                .check_unit_norm()
                .map_err(|e| Error::format(path, format!("row {i} ('{}'): {e}", meta.id)))?;
            rows.push(TableRow { id: meta.id, text: meta.text, vector });
        }
        Ok(CorpusEmbeddingTable {
            fingerprint: header.fingerprint,
            d1: header.d1,
            rows,
            config_echo: header.config,
            seed_echo: header.seed,
        })
    }
}
