//! Hashing and JSONL helpers shared by the pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// First 128 bits of the SHA-256 digest, as 32 hex characters.
pub fn hash128_hex(data: &[u8]) -> String {
    hex::encode(&Sha256::digest(data)[..16])
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: String, line: usize, source: serde_json::Error },
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let p = path.display().to_string();
    let f = File::open(path).map_err(|source| JsonlError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|source| JsonlError::Parse { path: p.clone(), line: i + 1, source })?;
        out.push(v);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Deterministic 64-bit mixer (splitmix64 finalizer).
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in data {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fenced code block contents (first block), or the whole trimmed text if the
/// response has no fence.
pub fn extract_code(text: &str) -> String {
    let mut lines = text.lines();
    while let Some(l) = lines.next() {
        if l.trim_start().starts_with("```") {
            let body: Vec<&str> = lines.by_ref().take_while(|l| !l.trim_start().starts_with("```")).collect();
            let mut s = body.join("\n");
            s.push('\n');
            return s;
        }
    }
    let t = text.trim();
    if t.is_empty() {
        String::new()
    } else {
        format!("{t}\n")
    }
}

/// First number in the text that lies in `[lo, hi]`.
pub fn first_number_in(text: &str, lo: f64, hi: f64) -> Option<f64> {
    let re = regex::Regex::new(r"\d+(?:\.\d+)?").expect("valid regex");
    let found = re.find_iter(text).filter_map(|m| m.as_str().parse::<f64>().ok()).find(|v| (lo..=hi).contains(v));
    found
}
