//! Binary container with a JSON header.
//!
//! Embedding tables, aggregate caches, and checkpoints all share one file
//! layout: an 8-byte magic, a little-endian u32 header length, a JSON header,
//! then a raw payload. Readers parse the whole file before handing anything
//! back, so a truncated file never leaks partial state.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct Container<H> {
    pub header: H,
    pub payload: Vec<u8>,
}

pub fn write_container<H: Serialize>(
    path: &Path,
    magic: &[u8; 8],
    header: &H,
    payload: &[u8],
) -> Result<()> {
    let header_bytes = serde_json::to_vec(header)
        .map_err(|e| Error::format(path, format!("header encode: {e}")))?;
    let mut buf = Vec::with_capacity(12 + header_bytes.len() + payload.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    buf.extend_from_slice(payload);
    write_atomic(path, &buf)
}

pub fn read_container<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<Container<H>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::format(path, "file too short for header"));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                &bytes[..8],
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let payload_start = 12 + header_len;
    if bytes.len() < payload_start {
        return Err(Error::format(path, "truncated header"));
    }
    let header: H = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| Error::format(path, format!("header parse: {e}")))?;
    Ok(Container {
        header,
        payload: bytes[payload_start..].to_vec(),
    })
}

/// Single-writer atomic file creation: write a temp file in the target
/// directory, then rename over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "tmp.{}.{}",
        std::process::id(),
        path.file_name().map(|_| "w").unwrap_or("w")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn f32s_to_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn bytes_to_f32s(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "payload length not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn bytes_to_f64s(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, "payload length not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Hdr {
        count: usize,
        tag: String,
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let hdr = Hdr { count: 3, tag: "t".into() };
        write_container(&p, b"CAPTEST1", &hdr, &[1, 2, 3]).unwrap();
        let c: Container<Hdr> = read_container(&p, b"CAPTEST1").unwrap();
        assert_eq!(c.header, hdr);
        assert_eq!(c.payload, vec![1, 2, 3]);
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let hdr = Hdr { count: 3, tag: "t".into() };
        write_container(&p, b"CAPTEST1", &hdr, &[1, 2, 3]).unwrap();
        let full = std::fs::read(&p).unwrap();
        std::fs::write(&p, &full[..10]).unwrap();
        let err = read_container::<Hdr>(&p, b"CAPTEST1").unwrap_err();
        assert_eq!(err.kind(), "format");
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_container(&p, b"CAPTEST1", &Hdr { count: 0, tag: String::new() }, &[]).unwrap();
        assert!(read_container::<Hdr>(&p, b"CAPOTHER").is_err());
    }
}
