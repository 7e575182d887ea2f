use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LicenseClass {
    Permissive,
    NonPermissive,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LicenseVerdict {
    pub spdx_id: Option<String>,
    pub class: LicenseClass,
    #[serde(skip)]
    pub evidence: String,
}

impl LicenseVerdict {
    pub fn unknown() -> Self {
        Self { spdx_id: None, class: LicenseClass::Unknown, evidence: String::new() }
    }
}

/// Phrases that identify common license texts. Checked in order, so the more
/// specific variants come first.
const FINGERPRINTS: &[(&str, &[&str])] = &[
    ("AGPL-3.0", &["gnu affero general public license", "version 3"]),
    ("LGPL-3.0", &["gnu lesser general public license", "version 3"]),
    ("LGPL-2.1", &["gnu lesser general public license", "version 2.1"]),
    ("GPL-3.0", &["gnu general public license", "version 3"]),
    ("GPL-2.0", &["gnu general public license", "version 2"]),
    ("MPL-2.0", &["mozilla public license", "2.0"]),
    ("Apache-2.0", &["apache license", "version 2.0"]),
    ("ISC", &["permission to use, copy, modify, and/or distribute this software for any purpose with or without fee"]),
    ("MIT", &["permission is hereby granted, free of charge"]),
    ("BSD-3-Clause", &["redistribution and use in source and binary forms", "neither the name"]),
    ("BSD-2-Clause", &["redistribution and use in source and binary forms"]),
    ("Unlicense", &["this is free and unencumbered software released into the public domain"]),
    ("CERN-OHL-S-2.0", &["cern open hardware licence", "strongly reciprocal"]),
];

pub fn fingerprint(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    let norm: String = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    FINGERPRINTS
        .iter()
        .find(|(_, phrases)| phrases.iter().all(|p| norm.contains(p)))
        .map(|(id, _)| *id)
}

fn header_tag(text: &str) -> Option<String> {
    let re = regex::Regex::new(r"SPDX-License-Identifier:\s*([^\r\n*]+)").expect("valid regex");
    // Only the file header counts.
    let head: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
    re.captures(&head).map(|c| c[1].trim().trim_end_matches("*/").trim().to_string())
}

fn verdict_for(expr: &str, allowlist: &[String], evidence: String) -> LicenseVerdict {
    // For an `A OR B` expression any allowed alternative makes the file usable.
    let alternatives: Vec<&str> = expr.split(" OR ").map(|s| s.trim().trim_matches(|c| c == '(' || c == ')')).collect();
    let allowed = alternatives.iter().find(|a| allowlist.iter().any(|l| l == *a));
    match allowed {
        Some(id) => LicenseVerdict { spdx_id: Some(id.to_string()), class: LicenseClass::Permissive, evidence },
        None => LicenseVerdict { spdx_id: Some(expr.to_string()), class: LicenseClass::NonPermissive, evidence },
    }
}

/// SPDX header first, then repository license files, else Unknown.
pub fn classify_license(text: &str, repo_license_files: &[String], allowlist: &[String]) -> LicenseVerdict {
    if let Some(tag) = header_tag(text) {
        return verdict_for(&tag, allowlist, format!("header: SPDX-License-Identifier: {tag}"));
    }
    for lf in repo_license_files {
        if let Some(id) = fingerprint(lf) {
            return verdict_for(id, allowlist, format!("license file fingerprint: {id}"));
        }
    }
    LicenseVerdict::unknown()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn allow() -> Vec<String> {
        crate::config::IngestConfig::default().license_allowlist
    }

    #[test]
    fn header_mit() {
        let v = classify_license("// SPDX-License-Identifier: MIT\nmodule m; endmodule\n", &[], &allow());
        assert_eq!(v.spdx_id.as_deref(), Some("MIT"));
        assert_eq!(v.class, LicenseClass::Permissive);
    }

    #[test]
    fn gpl_file() {
        let gpl = "GNU GENERAL PUBLIC LICENSE\nVersion 3, 29 June 2007\n...".to_string();
        let v = classify_license("module m; endmodule\n", &[gpl], &allow());
        assert_eq!(v.spdx_id.as_deref(), Some("GPL-3.0"));
        assert_eq!(v.class, LicenseClass::NonPermissive);
    }

    #[test]
    fn nothing_is_unknown() {
        let v = classify_license("module m; endmodule\n", &[], &allow());
        assert_eq!(v, LicenseVerdict::unknown());
    }

    #[test]
    fn fingerprints() {
        assert_eq!(fingerprint("Permission is hereby granted, free of charge, to any person"), Some("MIT"));
        assert_eq!(fingerprint("Apache License\n Version 2.0, January 2004"), Some("Apache-2.0"));
        assert_eq!(
            fingerprint("Redistribution and use in source and binary forms ... Neither the name of"),
            Some("BSD-3-Clause")
        );
        assert_eq!(fingerprint("hello"), None);
    }

    #[test]
    fn or_expression_and_block_comment() {
        let v = classify_license("/* SPDX-License-Identifier: GPL-2.0 OR MIT */\n", &[], &allow());
        assert_eq!(v.spdx_id.as_deref(), Some("MIT"));
        let v = classify_license("// SPDX-License-Identifier: CERN-OHL-S-2.0\n", &[], &allow());
        assert_eq!(v.class, LicenseClass::NonPermissive);
    }
}
