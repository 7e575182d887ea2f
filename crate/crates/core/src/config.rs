//! Pipeline configuration. Every section is optional; unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workspace: Option<PathBuf>,
    pub ingest: IngestConfig,
    pub dedup: DedupConfig,
    pub decontam: DecontamConfig,
    pub augment: AugmentConfig,
    pub validate: ValidateConfig,
    pub eval: EvalConfig,
    pub backends: BTreeMap<String, BackendConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workspace: None,
            ingest: IngestConfig::default(),
            dedup: DedupConfig::default(),
            decontam: DecontamConfig::default(),
            augment: AugmentConfig::default(),
            validate: ValidateConfig::default(),
            eval: EvalConfig::default(),
            backends: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub max_bytes: u64,
    pub license_allowlist: Vec<String>,
    pub denylist_patterns: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            max_bytes: 1 << 20,
            license_allowlist: ["MIT", "Apache-2.0", "BSD-2-Clause", "BSD-3-Clause", "ISC"].map(String::from).to_vec(),
            denylist_patterns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub w: usize,
    pub num_perms: usize,
    /// Falls back to the global seed when absent.
    pub seed: Option<u64>,
    pub threshold: f64,
    pub bands: usize,
    /// Compare every pair instead of LSH candidates (only below 10,000 records).
    pub exact_pairwise: bool,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self { w: 5, num_perms: 128, seed: None, threshold: 0.85, bands: 32, exact_pairwise: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecontamConfig {
    pub threshold: f64,
}

impl Default for DecontamConfig {
    fn default() -> Self {
        Self { threshold: 0.80 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub backend: Option<String>,
    pub enabled_steps: Vec<String>,
    pub code_retries: u32,
    pub exemplar_capacity: usize,
    pub exemplar_min_score: f64,
    pub batch_size: usize,
    pub templates_dir: Option<PathBuf>,
    pub prose_min_len: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            backend: None,
            enabled_steps: (1..=10).map(|i| format!("S{i}")).collect(),
            code_retries: 1,
            exemplar_capacity: 8,
            exemplar_min_score: 4.0,
            batch_size: 8,
            templates_dir: None,
            prose_min_len: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub min_score: f64,
    pub prose_min_len: usize,
    pub prose_max_len: usize,
    pub max_input_bits: u32,
    pub teacher_backend: Option<String>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { min_score: 3.0, prose_min_len: 20, prose_max_len: 20_000, max_input_bits: 16, teacher_backend: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub backend: Option<String>,
    pub teacher_backend: Option<String>,
    pub n: usize,
    pub k: Vec<usize>,
    pub temperature: f64,
    pub max_input_bits: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { backend: None, teacher_backend: None, n: 20, k: vec![1, 5, 10], temperature: 0.8, max_input_bits: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub base_secs: f64,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base_secs: 1.0, factor: 2.0, max_attempts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    /// Environment variable holding a bearer token for the endpoint.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Directory of scripted responses, required in mock mode.
    #[serde(default)]
    pub script_dir: Option<PathBuf>,
}

fn default_max_tokens() -> u32 {
    2048
}

fn default_timeout() -> u64 {
    120
}

fn default_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn mock(dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: BackendMode::Mock,
            endpoint_url: None,
            api_key_env: None,
            model_name: "mock".into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            script_dir: Some(dir.into()),
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), ConfigError> {
        match self.mode {
            BackendMode::Mock if self.script_dir.is_none() => {
                Err(ConfigError::Invalid(format!("backend '{name}': mock mode requires script_dir")))
            }
            BackendMode::Http if self.endpoint_url.is_none() => {
                Err(ConfigError::Invalid(format!("backend '{name}': http mode requires endpoint_url")))
            }
            _ if self.temperature < 0.0 => Err(ConfigError::Invalid(format!("backend '{name}': temperature must be >= 0"))),
            _ if self.max_in_flight == 0 => Err(ConfigError::Invalid(format!("backend '{name}': max_in_flight must be >= 1"))),
            _ => Ok(()),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths in the file are taken relative to the file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for b in self.backends.values_mut() {
            if let Some(d) = &mut b.script_dir {
                fix(d);
            }
        }
        if let Some(d) = &mut self.augment.templates_dir {
            fix(d);
        }
        if let Some(d) = &mut self.workspace {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, b) in &self.backends {
            b.validate(name)?;
        }
        let refs = [
            ("augment.backend", &self.augment.backend),
            ("validate.teacher_backend", &self.validate.teacher_backend),
            ("eval.backend", &self.eval.backend),
            ("eval.teacher_backend", &self.eval.teacher_backend),
        ];
        for (key, r) in refs {
            if let Some(name) = r {
                if !self.backends.contains_key(name) {
                    return Err(ConfigError::Invalid(format!("{key} references undefined backend '{name}'")));
                }
            }
        }
        let d = &self.dedup;
        if d.w == 0 {
            return Err(ConfigError::Invalid("dedup.w must be >= 1".into()));
        }
        if d.num_perms < 16 {
            return Err(ConfigError::Invalid("dedup.num_perms must be >= 16".into()));
        }
        if d.bands == 0 || !d.num_perms.is_multiple_of(d.bands) {
            return Err(ConfigError::Invalid("dedup.bands must divide dedup.num_perms".into()));
        }
        for (key, t) in [("dedup.threshold", d.threshold), ("decontam.threshold", self.decontam.threshold)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ConfigError::Invalid(format!("{key} must be in (0, 1]")));
            }
        }
        for s in &self.augment.enabled_steps {
            if crate::augment::StepId::parse(s).is_none() {
                return Err(ConfigError::Invalid(format!("augment.enabled_steps: unknown step '{s}'")));
            }
        }
        if self.augment.batch_size == 0 {
            return Err(ConfigError::Invalid("augment.batch_size must be >= 1".into()));
        }
        if self.eval.n == 0 {
            return Err(ConfigError::Invalid("eval.n must be >= 1".into()));
        }
        if self.eval.k.contains(&0) {
            return Err(ConfigError::Invalid("eval.k values must be >= 1".into()));
        }
        for p in &self.ingest.denylist_patterns {
            regex::Regex::new(p).map_err(|e| ConfigError::Invalid(format!("ingest.denylist_patterns: {e}")))?;
        }
        Ok(())
    }

    pub fn dedup_seed(&self) -> u64 {
        self.dedup.seed.unwrap_or(self.seed)
    }

    pub fn backend(&self, name: &str) -> Result<&BackendConfig, ConfigError> {
        self.backends.get(name).ok_or_else(|| ConfigError::Invalid(format!("undefined backend '{name}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::from_toml("", Path::new(".")).unwrap();
        assert_eq!(c.dedup.num_perms, 128);
        assert_eq!(c.dedup.bands, 32);
        assert_eq!(c.ingest.max_bytes, 1 << 20);
        assert_eq!(c.eval.k, vec![1, 5, 10]);
        assert_eq!(c.validate.min_score, 3.0);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(PipelineConfig::from_toml("[dedup]\nshingle = 3\n", Path::new(".")), Err(ConfigError::Parse(_))));
        assert!(PipelineConfig::from_toml("bogus = 1\n", Path::new(".")).is_err());
    }

    #[test]
    fn backend_references_checked() {
        let err = PipelineConfig::from_toml("[augment]\nbackend = \"nope\"\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("undefined backend"));
        let err = PipelineConfig::from_toml("[backends.m]\nmode = \"mock\"\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("script_dir"));
        let c = PipelineConfig::from_toml("[backends.m]\nmode = \"mock\"\nscript_dir = \"s\"\n[augment]\nbackend = \"m\"\n", Path::new("/base")).unwrap();
        assert_eq!(c.backends["m"].script_dir.as_deref(), Some(Path::new("/base/s")));
    }
}
