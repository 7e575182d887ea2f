//! Source tree and archive ingestion into corpus records.

pub mod license;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::config::IngestConfig;
use crate::util::hash128_hex;
pub use license::{classify_license, LicenseClass, LicenseVerdict};

const BINARY_PROBE: usize = 8 * 1024;
const HDL_EXTENSIONS: &[&str] = &["v", "vh", "sv", "svh", "vhd", "vhdl"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Utf8,
    Latin1,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub source_path: String,
    pub repo_id: String,
    pub relative_path: String,
    pub bytes: Vec<u8>,
    pub detected_encoding: Encoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageHint {
    Verilog,
    Systemverilog,
    Vhdl,
    Other,
}

impl LanguageHint {
    pub fn from_path(path: &str) -> Self {
        match extension(path).as_str() {
            "v" | "vh" => LanguageHint::Verilog,
            "sv" | "svh" => LanguageHint::Systemverilog,
            "vhd" | "vhdl" => LanguageHint::Vhdl,
            _ => LanguageHint::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Raw,
    Filtered,
    Deduped,
    Decontaminated,
    Augmented,
    Rejected,
}

impl Status {
    /// Lifecycle order; Rejected is terminal and reachable from any state.
    pub fn can_advance_to(self, next: Status) -> bool {
        self != Status::Rejected && (next == Status::Rejected || next > self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub record_id: String,
    pub repo_id: String,
    pub relative_path: String,
    pub language_hint: LanguageHint,
    pub license: LicenseVerdict,
    pub status: Status,
    pub text: String,
}

impl CorpusRecord {
    /// Moves the record forward in its lifecycle; backward moves are ignored.
    pub fn advance(&mut self, next: Status) -> bool {
        if self.status.can_advance_to(next) {
            self.status = next;
            true
        } else {
            false
        }
    }

    pub fn is_active(&self) -> bool {
        self.status != Status::Rejected
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub repo_id: String,
    pub relative_path: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ScanResult {
    pub documents: Vec<RawDocument>,
    /// License texts per repository.
    pub license_files: BTreeMap<String, Vec<String>>,
    pub skips: Vec<SkipEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read input {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("unsupported input {0}: expected a directory, .tar or .zip")]
    UnsupportedInput(String),
}

fn extension(path: &str) -> String {
    Path::new(path).extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn is_license_file(path: &str) -> bool {
    let name = Path::new(path).file_name().and_then(|n| n.to_str()).unwrap_or("").to_ascii_uppercase();
    ["LICENSE", "LICENCE", "COPYING"].iter().any(|p| name.starts_with(p))
}

/// An input entry before filtering: (repo_id, relative_path, source_path, bytes or error).
struct Entry {
    repo_id: String,
    relative_path: String,
    source_path: String,
    size: u64,
    bytes: Result<Vec<u8>, String>,
}

/// Splits `a/b/c.v` into repo `a` and path `b/c.v`; top-level files belong to `fallback_repo`.
fn split_repo(path: &str, fallback_repo: &str) -> (String, String) {
    match path.split_once('/') {
        Some((repo, rest)) if !rest.is_empty() => (repo.to_string(), rest.to_string()),
        _ => (fallback_repo.to_string(), path.to_string()),
    }
}

fn dir_entries(root: &Path, max_bytes: u64) -> Result<Vec<Entry>, IngestError> {
    std::fs::read_dir(root).map_err(|e| IngestError::Unreadable { path: root.display().to_string(), message: e.to_string() })?;
    let fallback = root.file_name().and_then(|n| n.to_str()).unwrap_or("root").to_string();
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Unreadable { path: root.display().to_string(), message: e.to_string() })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            paths.push((entry.path().to_path_buf(), rel));
        }
    }
    Ok(paths
        .into_par_iter()
        .map(|(path, rel)| {
            let (repo_id, relative_path) = split_repo(&rel, &fallback);
            let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
            let bytes = if size > max_bytes { Ok(Vec::new()) } else { std::fs::read(&path).map_err(|e| e.to_string()) };
            Entry { repo_id, relative_path, source_path: rel, size, bytes }
        })
        .collect())
}

#[cfg(feature = "archives")]
fn archive_entries(path: &Path, max_bytes: u64) -> Result<Vec<Entry>, IngestError> {
    use std::io::Read;
    let unreadable = |e: &dyn std::fmt::Display| IngestError::Unreadable { path: path.display().to_string(), message: e.to_string() };
    let fallback = path.file_stem().and_then(|n| n.to_str()).unwrap_or("archive").to_string();
    let mut raw: Vec<(String, u64, Result<Vec<u8>, String>)> = Vec::new();
    let file = std::fs::File::open(path).map_err(|e| unreadable(&e))?;
    match extension(&path.display().to_string()).as_str() {
        "tar" => {
            let mut ar = tar::Archive::new(file);
            for entry in ar.entries().map_err(|e| unreadable(&e))? {
                let mut entry = entry.map_err(|e| unreadable(&e))?;
                if !entry.header().entry_type().is_file() {
                    continue;
                }
                let name = entry.path().map_err(|e| unreadable(&e))?.to_string_lossy().trim_start_matches("./").to_string();
                let size = entry.size();
                let mut buf = Vec::new();
                let bytes = if size > max_bytes { Ok(buf) } else { entry.read_to_end(&mut buf).map(|_| buf).map_err(|e| e.to_string()) };
                raw.push((name, size, bytes));
            }
        }
        "zip" => {
            let mut ar = zip::ZipArchive::new(file).map_err(|e| unreadable(&e))?;
            for i in 0..ar.len() {
                let mut f = ar.by_index(i).map_err(|e| unreadable(&e))?;
                if !f.is_file() {
                    continue;
                }
                let name = f.name().map_err(|e| unreadable(&e))?.trim_start_matches("./").to_string();
                let size = f.size();
                let mut buf = Vec::new();
                let bytes = if size > max_bytes { Ok(buf) } else { f.read_to_end(&mut buf).map(|_| buf).map_err(|e| e.to_string()) };
                raw.push((name, size, bytes));
            }
        }
        _ => return Err(IngestError::UnsupportedInput(path.display().to_string())),
    }
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(raw
        .into_iter()
        .map(|(name, size, bytes)| {
            let (repo_id, relative_path) = split_repo(&name, &fallback);
            Entry { repo_id, relative_path, source_path: name, size, bytes }
        })
        .collect())
}

#[cfg(not(feature = "archives"))]
fn archive_entries(path: &Path, _max_bytes: u64) -> Result<Vec<Entry>, IngestError> {
    Err(IngestError::UnsupportedInput(path.display().to_string()))
}

fn detect_encoding(bytes: &[u8]) -> Encoding {
    if std::str::from_utf8(bytes).is_ok() {
        Encoding::Utf8
    } else if bytes.iter().any(|&b| (0x80..0xa0).contains(&b)) {
        // C1 control bytes are unlikely in Latin-1 text.
        Encoding::Unknown
    } else {
        Encoding::Latin1
    }
}

/// Lists HDL documents under `root` (a directory, .tar or .zip) in
/// (repo_id, relative_path) order. Skipped files are logged, not fatal.
pub fn scan_sources(root: &Path, config: &IngestConfig) -> Result<ScanResult, IngestError> {
    let entries = if root.is_dir() {
        dir_entries(root, config.max_bytes)?
    } else if root.is_file() {
        archive_entries(root, config.max_bytes)?
    } else {
        return Err(IngestError::Unreadable { path: root.display().to_string(), message: "no such file or directory".into() });
    };
    let mut out = ScanResult::default();
    for e in entries {
        let skip = |reason: String| SkipEntry { repo_id: e.repo_id.clone(), relative_path: e.relative_path.clone(), reason };
        let bytes = match &e.bytes {
            Err(msg) => {
                out.skips.push(skip(format!("unreadable: {msg}")));
                continue;
            }
            Ok(b) => b,
        };
        if e.size > config.max_bytes {
            out.skips.push(skip(format!("too_large: {} bytes", e.size)));
            continue;
        }
        if bytes[..bytes.len().min(BINARY_PROBE)].contains(&0) {
            out.skips.push(skip("binary".into()));
            continue;
        }
        if is_license_file(&e.relative_path) {
            out.license_files.entry(e.repo_id.clone()).or_default().push(String::from_utf8_lossy(bytes).into_owned());
            continue;
        }
        if !HDL_EXTENSIONS.contains(&extension(&e.relative_path).as_str()) {
            out.skips.push(skip("not_hdl".into()));
            continue;
        }
        out.documents.push(RawDocument {
            source_path: e.source_path.clone(),
            repo_id: e.repo_id.clone(),
            relative_path: e.relative_path.clone(),
            detected_encoding: detect_encoding(bytes),
            bytes: bytes.clone(),
        });
    }
    out.documents.sort_by(|a, b| (&a.repo_id, &a.relative_path).cmp(&(&b.repo_id, &b.relative_path)));
    out.skips.sort_by(|a, b| (&a.repo_id, &a.relative_path).cmp(&(&b.repo_id, &b.relative_path)));
    Ok(out)
}

/// Decodes the document and returns its text, plus the number of bytes that
/// had to be replaced.
pub fn decode(doc: &RawDocument) -> (String, usize) {
    match doc.detected_encoding {
        Encoding::Utf8 => (String::from_utf8_lossy(&doc.bytes).into_owned(), 0),
        Encoding::Latin1 => (doc.bytes.iter().map(|&b| char::from(b)).collect(), 0),
        Encoding::Unknown => {
            let s = String::from_utf8_lossy(&doc.bytes).into_owned();
            let replaced = s.chars().filter(|&c| c == char::REPLACEMENT_CHARACTER).count();
            (s, replaced)
        }
    }
}

pub fn normalize_text(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return String::new();
    }
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

pub fn record_id(text: &str) -> String {
    hash128_hex(text.as_bytes())
}

/// Produces a Raw record, or a Rejected one if nothing is left after normalization.
pub fn normalize_document(doc: &RawDocument) -> CorpusRecord {
    let (decoded, replaced) = decode(doc);
    if replaced > 0 {
        log::debug!("{}/{}: {replaced} bytes replaced while decoding", doc.repo_id, doc.relative_path);
    }
    let text = normalize_text(&decoded);
    let status = if text.is_empty() { Status::Rejected } else { Status::Raw };
    CorpusRecord {
        record_id: record_id(&text),
        repo_id: doc.repo_id.clone(),
        relative_path: doc.relative_path.clone(),
        language_hint: LanguageHint::from_path(&doc.relative_path),
        license: LicenseVerdict::unknown(),
        status,
        text,
    }
}

#[derive(Debug, Default)]
pub struct IngestOutput {
    pub records: Vec<CorpusRecord>,
    /// Skipped files and rejected records with their reasons.
    pub log: Vec<SkipEntry>,
}

/// Scan, normalize, license-filter and denylist-filter a source tree. Records
/// that leave are either Filtered or Rejected.
pub fn ingest(root: &Path, config: &IngestConfig) -> Result<IngestOutput, IngestError> {
    let scan = scan_sources(root, config)?;
    let deny: Vec<regex::Regex> = config.denylist_patterns.iter().filter_map(|p| regex::Regex::new(p).ok()).collect();
    let no_files = Vec::new();
    let processed: Vec<(CorpusRecord, Option<String>)> = scan
        .documents
        .par_iter()
        .map(|doc| {
            let mut rec = normalize_document(doc);
            if rec.status == Status::Rejected {
                return (rec, Some("empty".to_string()));
            }
            let files = scan.license_files.get(&doc.repo_id).unwrap_or(&no_files);
            rec.license = classify_license(&rec.text, files, &config.license_allowlist);
            let reason = if rec.license.class != LicenseClass::Permissive {
                Some(format!("license: {:?} {}", rec.license.class, rec.license.spdx_id.as_deref().unwrap_or("none")))
            } else {
                deny.iter().find(|re| re.is_match(&rec.text)).map(|re| format!("denylist: {}", re.as_str()))
            };
            rec.advance(if reason.is_some() { Status::Rejected } else { Status::Filtered });
            (rec, reason)
        })
        .collect();
    let mut out = IngestOutput { records: Vec::new(), log: scan.skips };
    for (rec, reason) in processed {
        if let Some(reason) = reason {
            out.log.push(SkipEntry { repo_id: rec.repo_id.clone(), relative_path: rec.relative_path.clone(), reason });
        }
        out.records.push(rec);
    }
    out.log.sort_by(|a, b| (&a.repo_id, &a.relative_path).cmp(&(&b.repo_id, &b.relative_path)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(bytes: &[u8]) -> RawDocument {
        RawDocument {
            source_path: "r/a.v".into(),
            repo_id: "r".into(),
            relative_path: "a.v".into(),
            bytes: bytes.to_vec(),
            detected_encoding: detect_encoding(bytes),
        }
    }

    #[test]
    fn crlf_normalized() {
        let r = normalize_document(&doc(b"a\r\nb"));
        assert_eq!(r.text, "a\nb\n");
        assert_eq!(r.status, Status::Raw);
        assert_eq!(r.language_hint, LanguageHint::Verilog);
    }

    #[test]
    fn whitespace_only_rejected() {
        assert_eq!(normalize_document(&doc(b"  \n\t\r\n")).status, Status::Rejected);
    }

    #[test]
    fn content_pure_id() {
        let mut other = doc(b"module m;\nendmodule\n");
        other.relative_path = "b/c.v".into();
        assert_eq!(normalize_document(&doc(b"module m;   \r\nendmodule")).record_id, normalize_document(&other).record_id);
        assert_eq!(record_id("x").len(), 32);
    }

    #[test]
    fn latin1_decoding() {
        let d = doc(b"// caf\xe9\nmodule m; endmodule\n");
        assert_eq!(d.detected_encoding, Encoding::Latin1);
        assert!(decode(&d).0.contains("café"));
    }

    #[test]
    fn lifecycle_never_moves_back() {
        assert!(Status::Raw.can_advance_to(Status::Filtered));
        assert!(Status::Deduped.can_advance_to(Status::Rejected));
        assert!(!Status::Deduped.can_advance_to(Status::Filtered));
        assert!(!Status::Rejected.can_advance_to(Status::Augmented));
    }

    #[test]
    fn scan_directory() {
        let dir = tempfile::tempdir().unwrap();
        let repo = dir.path().join("repo");
        std::fs::create_dir(&repo).unwrap();
        std::fs::write(repo.join("a.v"), "module a; endmodule\n").unwrap();
        std::fs::write(repo.join("b.vhd"), "entity b is end;\n").unwrap();
        std::fs::write(repo.join("c.png"), b"\x89PNG\r\n\x1a\n\0\0\0").unwrap();
        let cfg = IngestConfig::default();
        let scan = scan_sources(dir.path(), &cfg).unwrap();
        assert_eq!(scan.documents.len(), 2);
        assert_eq!(scan.skips[0].reason, "binary");
        let again = scan_sources(dir.path(), &cfg).unwrap();
        assert_eq!(scan.documents, again.documents);

        let empty = tempfile::tempdir().unwrap();
        assert!(scan_sources(empty.path(), &cfg).unwrap().documents.is_empty());
        assert!(scan_sources(&dir.path().join("missing"), &cfg).is_err());
    }

    #[test]
    fn ingest_filters_licenses() {
        let dir = tempfile::tempdir().unwrap();
        for (repo, lic) in [("ok", "Permission is hereby granted, free of charge"), ("gpl", "GNU GENERAL PUBLIC LICENSE Version 3")] {
            let p = dir.path().join(repo);
            std::fs::create_dir(&p).unwrap();
            std::fs::write(p.join("LICENSE"), lic).unwrap();
            std::fs::write(p.join("m.v"), format!("module {repo}; endmodule\n")).unwrap();
        }
        std::fs::create_dir(dir.path().join("none")).unwrap();
        std::fs::write(dir.path().join("none/x.v"), "module x; endmodule\n").unwrap();
        let out = ingest(dir.path(), &IngestConfig::default()).unwrap();
        let st: Vec<(&str, Status)> = out.records.iter().map(|r| (r.repo_id.as_str(), r.status)).collect();
        assert_eq!(st, vec![("gpl", Status::Rejected), ("none", Status::Rejected), ("ok", Status::Filtered)]);
        assert!(out.records.iter().all(|r| r.license.class == LicenseClass::Permissive || r.status == Status::Rejected));
    }
}
