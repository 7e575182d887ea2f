//! Command-line front end. Every stage reads the previous stage's files from
//! the workspace directory and writes its own, plus a run manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augment::{manifest_rows, run_corpus, AugmentContext, AugmentedRecord, Templates};
use crate::backend::{build_backend, Backend};
use crate::config::{ConfigError, PipelineConfig};
use crate::dedup::{decontaminate, dedup, DedupParams};
use crate::eval::{
    aggregate_report, grade_with_teacher, judge_sample, load_benchmark, sample_completions, CompletionSample, EvalProblem,
    GradingRecord, Report, Rubric,
};
use crate::ingest::{ingest, CorpusRecord};
use crate::mutate::{generate_detection_testbench, mutation_report};
use crate::util::{read_jsonl, sha256_hex, to_jsonl};
use crate::validate::{emit_dataset, render_dataset, validate_bundles, DatasetFormat, ValidatedBundle};
use crate::verilog::{check_syntax, extract_interface, parse_source, truth_table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const CORPUS: &str = "corpus.jsonl";
pub const INGEST_LOG: &str = "ingest_log.jsonl";
pub const DEDUPED: &str = "deduped.jsonl";
pub const DEDUP_REMOVALS: &str = "dedup_removals.jsonl";
pub const DEDUP_CLUSTERS: &str = "dedup_clusters.jsonl";
pub const DECONTAMINATED: &str = "decontaminated.jsonl";
pub const DECONTAM_REMOVALS: &str = "decontam_removals.jsonl";
pub const AUGMENTED: &str = "augmented.jsonl";
pub const AUGMENT_MANIFEST: &str = "augment_manifest.jsonl";
pub const EXEMPLARS: &str = "exemplars.json";
pub const VALIDATED: &str = "validated.jsonl";
pub const DATASET: &str = "dataset.jsonl";
pub const STATS: &str = "stats.json";
pub const EVAL_PROBLEMS: &str = "eval_problems.jsonl";
pub const EVAL_SAMPLES: &str = "eval_samples.jsonl";
pub const GRADING: &str = "grading.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, Parser)]
#[command(name = "hdlforge", version, about = "HDL corpus curation, augmentation and evaluation")]
pub struct Cli {
    /// Pipeline config (TOML). HDLFORGE_CONFIG takes precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Global seed (default 7).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Workspace directory holding stage files (default: config `workspace`, else ./ws).
    #[arg(long, global = true, visible_alias = "out")]
    pub workspace: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a directory or .tar/.zip archive into the corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Near-duplicate removal (MinHash, w=5, 128 perms, 32x4 bands, threshold 0.85).
    Dedup,
    /// Remove records overlapping benchmark references (threshold 0.80).
    Decontaminate {
        /// Benchmark JSONL files.
        #[arg(long = "suite", required = true)]
        suites: Vec<PathBuf>,
    },
    /// Run the augmentation steps S1..S10 with the configured backend.
    Augment {
        /// Backend name (default: augment.backend).
        #[arg(long)]
        backend: Option<String>,
    },
    /// Validate and score augmented artifacts.
    Validate {
        /// Teacher backend name (default: validate.teacher_backend).
        #[arg(long)]
        teacher: Option<String>,
    },
    /// Write the instruction dataset and token statistics.
    Emit {
        /// Minimum artifact score (default: validate.min_score = 3.0).
        #[arg(long)]
        min_score: Option<f64>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: FormatArg,
    },
    /// Sample, judge and optionally grade completions for benchmark suites.
    Eval(EvalArgs),
    /// Aggregate evaluation results into report tables.
    Report,
    /// Check one Verilog file and print diagnostics.
    Check {
        file: PathBuf,
        /// Print diagnostics as JSONL.
        #[arg(long)]
        json: bool,
    },
    /// Enumerate and verify catalog mutations of one Verilog file.
    Mutate {
        file: PathBuf,
        /// Module to mutate (default: top module).
        #[arg(long)]
        module: Option<String>,
        /// Exhaustive evaluation bound in input bits.
        #[arg(long, default_value_t = 16)]
        max_bits: u32,
        /// Also print a detection testbench for every detectable mutation.
        #[arg(long)]
        testbench: bool,
    },
    /// Print the exhaustive truth table of a combinational module as CSV.
    TruthTable {
        file: PathBuf,
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = 16)]
        max_bits: u32,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Json,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Benchmark JSONL files.
    #[arg(long = "suite", required = true)]
    pub suites: Vec<PathBuf>,
    /// Sampling backend (default: eval.backend).
    #[arg(long)]
    pub backend: Option<String>,
    /// Teacher backend for 0-5 grading (default: eval.teacher_backend).
    #[arg(long)]
    pub teacher: Option<String>,
    /// Samples per problem (default 20).
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated k values (default 1,5,10).
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Sampling temperature (default 0.8).
    #[arg(long)]
    pub temperature: Option<f64>,
}

/// Reproducibility record for one stage run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct Timings {
    command: String,
    jobs: usize,
    elapsed_ms: u128,
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ConfigProblem(String);

impl From<ConfigError> for ConfigProblem {
    fn from(e: ConfigError) -> Self {
        Self(e.to_string())
    }
}

struct Ctx {
    config: PipelineConfig,
    ws: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a directory tree: sorted (relative path, content hash) pairs.
fn hash_tree(path: &Path) -> Result<String> {
    let mut lines = Vec::new();
    for e in walkdir::WalkDir::new(path).sort_by_file_name() {
        let e = e?;
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(path).unwrap_or(e.path());
            lines.push(format!("{}\t{}", rel.to_string_lossy().replace('\\', "/"), hash_file(e.path())?));
        }
    }
    Ok(sha256_hex(lines.join("\n").as_bytes()))
}

fn label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.ws.join(name)
    }

    /// Reads a stage file, or fails with a hint naming the producing command.
    fn read_stage<T: DeserializeOwned>(&mut self, name: &str, producer: &str) -> Result<Vec<T>> {
        let p = self.path(name);
        if !p.exists() {
            return Err(anyhow!("missing {}; run `hdlforge {producer}` first", p.display()));
        }
        self.inputs.insert(name.to_string(), hash_file(&p)?);
        Ok(read_jsonl(&p)?)
    }

    fn external_input(&mut self, path: &Path) -> Result<()> {
        let h = if path.is_dir() { hash_tree(path)? } else { hash_file(path)? };
        self.inputs.insert(label(path), h);
        Ok(())
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        std::fs::create_dir_all(&self.ws).with_context(|| format!("creating {}", self.ws.display()))?;
        let p = self.path(name);
        std::fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        self.write(name, &to_jsonl(items))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn backend(&self, name: Option<&str>, what: &str) -> std::result::Result<Box<dyn Backend>, ConfigProblem> {
        let name = name.ok_or_else(|| ConfigProblem(format!("no backend configured for {what}")))?;
        let cfg = self.config.backend(name)?;
        build_backend(cfg).map_err(|e| ConfigProblem(format!("backend '{name}': {e}")))
    }

    fn config_hash(&self) -> String {
        let mut c = self.config.clone();
        c.workspace = None;
        sha256_hex(serde_json::to_string(&c).unwrap_or_default().as_bytes())
    }

    fn finish(&mut self, stage: &str, jobs: usize, started: Instant) -> Result<()> {
        let manifest = RunManifest {
            command: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash(),
            seed: self.config.seed,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let dir = self.ws.join("manifests");
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{stage}.json")), serde_json::to_string_pretty(&manifest)? + "\n")?;
        let t = Timings { command: stage.to_string(), jobs, elapsed_ms: started.elapsed().as_millis() };
        std::fs::write(dir.join(format!("{stage}.timings.json")), serde_json::to_string_pretty(&t)? + "\n")?;
        Ok(())
    }
}

fn load_config(cli: &Cli) -> std::result::Result<PipelineConfig, ConfigProblem> {
    let path = std::env::var_os("HDLFORGE_CONFIG").map(PathBuf::from).or_else(|| cli.config.clone());
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(&p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn active(records: Vec<CorpusRecord>) -> Vec<CorpusRecord> {
    records.into_iter().filter(CorpusRecord::is_active).collect()
}

fn load_suites(paths: &[PathBuf]) -> Result<Vec<EvalProblem>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_benchmark(p, None)?);
    }
    Ok(all)
}

fn top_module_name(file: &crate::verilog::SourceFile, module: Option<String>) -> Result<String> {
    match module {
        Some(m) => Ok(m),
        None => file.top().map(|m| m.name.name.clone()).ok_or_else(|| anyhow!("no module in file")),
    }
}

/// Runs one stage. Returns the process exit code for commands that report a
/// verdict (check).
fn run_stage(cli: Cli, mut ctx: Ctx, jobs: usize) -> Result<i32> {
    let started = Instant::now();
    let stage = match &cli.command {
        Command::Ingest { .. } => "ingest",
        Command::Dedup => "dedup",
        Command::Decontaminate { .. } => "decontaminate",
        Command::Augment { .. } => "augment",
        Command::Validate { .. } => "validate",
        Command::Emit { .. } => "emit",
        Command::Eval(_) => "eval",
        Command::Report => "report",
        Command::Check { .. } | Command::Mutate { .. } | Command::TruthTable { .. } => "",
    };
    match cli.command {
        Command::Ingest { input } => {
            ctx.external_input(&input)?;
            let out = ingest(&input, &ctx.config.ingest)?;
            let kept = out.records.iter().filter(|r| r.is_active()).count();
            ctx.write_jsonl(CORPUS, &out.records)?;
            ctx.write_jsonl(INGEST_LOG, &out.log)?;
            eprintln!("ingest: {kept} records kept, {} files skipped or rejected", out.log.len());
        }
        Command::Dedup => {
            let records: Vec<CorpusRecord> = ctx.read_stage(CORPUS, "ingest")?;
            let params = DedupParams::from_config(&ctx.config);
            let (out, decisions, removals) = dedup(&records, &params);
            ctx.write_jsonl(DEDUPED, &out)?;
            ctx.write_jsonl(DEDUP_CLUSTERS, &decisions)?;
            ctx.write_jsonl(DEDUP_REMOVALS, &removals)?;
            eprintln!("dedup: {} removed, {} clusters", removals.len(), decisions.len());
        }
        Command::Decontaminate { suites } => {
            let records: Vec<CorpusRecord> = ctx.read_stage(DEDUPED, "dedup")?;
            for s in &suites {
                ctx.external_input(s)?;
            }
            let problems = load_suites(&suites)?;
            let params = DedupParams::from_config(&ctx.config);
            let (out, removals) = decontaminate(&records, &problems, &params, ctx.config.decontam.threshold);
            ctx.write_jsonl(DECONTAMINATED, &out)?;
            ctx.write_jsonl(DECONTAM_REMOVALS, &removals)?;
            eprintln!("decontaminate: {} removed", removals.len());
        }
        Command::Augment { backend } => {
            let records = active(ctx.read_stage(DECONTAMINATED, "decontaminate")?);
            let name = backend.or_else(|| ctx.config.augment.backend.clone());
            let be = ctx.backend(name.as_deref(), "augment")?;
            let templates = Templates::load(ctx.config.augment.templates_dir.as_deref())?;
            let aug_cfg = ctx.config.augment.clone();
            let actx = AugmentContext::new(be.as_ref(), &templates, &aug_cfg);
            let (out, store) = run_corpus(&records, &actx);
            let rows = manifest_rows(&out);
            let accepted = rows.iter().filter(|r| r.accepted).count();
            ctx.write_jsonl(AUGMENTED, &out)?;
            ctx.write_jsonl(AUGMENT_MANIFEST, &rows)?;
            ctx.write_json(EXEMPLARS, &store)?;
            eprintln!("augment: {} records, {accepted}/{} steps accepted", out.len(), rows.len());
        }
        Command::Validate { teacher } => {
            let records: Vec<AugmentedRecord> = ctx.read_stage(AUGMENTED, "augment")?;
            let name = teacher.or_else(|| ctx.config.validate.teacher_backend.clone());
            let be = match name {
                Some(n) => Some(ctx.backend(Some(&n), "validate")?),
                None => None,
            };
            let bundles = validate_bundles(records, &ctx.config.validate, be.as_deref());
            let ok = bundles.iter().filter(|b| b.overall_verdict == crate::verilog::Verdict::Accepted).count();
            ctx.write_jsonl(VALIDATED, &bundles)?;
            eprintln!("validate: {ok}/{} records accepted", bundles.len());
        }
        Command::Emit { min_score, format } => {
            let bundles: Vec<ValidatedBundle> = ctx.read_stage(VALIDATED, "validate")?;
            let min = min_score.unwrap_or(ctx.config.validate.min_score);
            let (examples, stats) = emit_dataset(&bundles, min);
            let (fmt, name) = match format {
                FormatArg::Jsonl => (DatasetFormat::Jsonl, DATASET),
                FormatArg::Json => (DatasetFormat::Json, "dataset.json"),
            };
            ctx.write(name, &render_dataset(&examples, fmt))?;
            ctx.write_json(STATS, &stats)?;
            eprintln!("emit: {} examples, {} tokens", stats.examples, stats.tokens);
        }
        Command::Eval(args) => {
            for s in &args.suites {
                ctx.external_input(s)?;
            }
            let problems = load_suites(&args.suites)?;
            let ec = ctx.config.eval.clone();
            let n = args.n.unwrap_or(ec.n);
            let ks = args.k.unwrap_or(ec.k.clone());
            if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
                return Err(ConfigProblem(format!("k={k} must be in 1..={n}")).into());
            }
            let temperature = args.temperature.unwrap_or(ec.temperature);
            let be = ctx.backend(args.backend.or(ec.backend.clone()).as_deref(), "eval")?;
            let teacher = match args.teacher.or(ec.teacher_backend.clone()) {
                Some(t) => Some(ctx.backend(Some(&t), "eval grading")?),
                None => None,
            };
            let seed = ctx.config.seed;
            use rayon::prelude::*;
            let samples: Vec<CompletionSample> = problems
                .par_iter()
                .flat_map_iter(|p| {
                    let mut s = sample_completions(p, be.as_ref(), n, temperature, seed);
                    for x in &mut s {
                        judge_sample(p, x, ec.max_input_bits);
                    }
                    s
                })
                .collect();
            let gradings: Vec<GradingRecord> = match &teacher {
                Some(t) => {
                    let rubric = Rubric::default_hdl();
                    let by_id: BTreeMap<&str, &EvalProblem> = problems.iter().map(|p| (p.problem_id.as_str(), p)).collect();
                    samples
                        .par_iter()
                        .filter(|s| s.fail_reason.as_deref() != Some("backend_error"))
                        .map(|s| {
                            let set = by_id[s.problem_id.as_str()].group();
                            grade_with_teacher(&format!("{}-s{}", s.problem_id, s.sample_index), &set, &s.text, &rubric, t.as_ref())
                        })
                        .collect()
                }
                None => Vec::new(),
            };
            let passed = samples.iter().filter(|s| s.passed).count();
            ctx.write_jsonl(EVAL_PROBLEMS, &problems)?;
            ctx.write_jsonl(EVAL_SAMPLES, &samples)?;
            ctx.write_jsonl(GRADING, &gradings)?;
            eprintln!("eval: {} problems, {passed}/{} samples passed", problems.len(), samples.len());
        }
        Command::Report => {
            let problems: Vec<EvalProblem> = ctx.read_stage(EVAL_PROBLEMS, "eval")?;
            let samples: Vec<CompletionSample> = ctx.read_stage(EVAL_SAMPLES, "eval")?;
            let gradings: Vec<GradingRecord> = ctx.read_stage(GRADING, "eval")?;
            let ks = ctx.config.eval.k.clone();
            let report: Report = aggregate_report(&problems, &samples, &gradings, &ks);
            let text = report.to_text();
            ctx.write_json(REPORT_JSON, &report)?;
            ctx.write(REPORT_CSV, &report.to_csv())?;
            ctx.write(REPORT_TXT, &text)?;
            print!("{text}");
        }
        Command::Check { file, json } => {
            let src = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let report = check_syntax(&src);
            let name = file.display();
            for d in &report.diagnostics {
                if json {
                    println!("{}", serde_json::to_string(d)?);
                } else {
                    println!("{name}:{d}");
                }
            }
            if !json {
                println!("{name}: {:?} ({} errors, {} warnings)", report.verdict, report.error_count(), report.warning_count());
            }
            return Ok(if report.accepted() { EXIT_OK } else { EXIT_FATAL });
        }
        Command::Mutate { file, module, max_bits, testbench } => {
            let src = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let parsed = parse_source(&src).map_err(|d| anyhow!("{}: {}", file.display(), d[0]))?;
            let module = top_module_name(&parsed, module)?;
            let id = crate::ingest::record_id(&crate::ingest::normalize_text(&src));
            let report = mutation_report(&id, &parsed, &module, max_bits);
            print!("{}", to_jsonl(&report));
            if testbench {
                let iface = extract_interface(&parsed, &module)?;
                for e in report.iter().filter(|e| e.witness.is_some()) {
                    let tb = generate_detection_testbench(&iface, std::slice::from_ref(e.witness.as_ref().expect("filtered")))?;
                    println!("// {}\n{tb}", e.mutation_id);
                }
            }
        }
        Command::TruthTable { file, module, max_bits } => {
            let src = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let parsed = parse_source(&src).map_err(|d| anyhow!("{}: {}", file.display(), d[0]))?;
            let module = top_module_name(&parsed, module)?;
            print!("{}", truth_table(&parsed, &module, max_bits)?.to_csv());
        }
    }
    if !stage.is_empty() {
        ctx.finish(stage, jobs, started)?;
    }
    Ok(EXIT_OK)
}

/// Parses arguments and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let ws = cli.workspace.clone().or_else(|| config.workspace.clone()).unwrap_or_else(|| PathBuf::from("ws"));
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    let ctx = Ctx { config, ws, inputs: BTreeMap::new(), outputs: BTreeMap::new() };
    match pool.install(|| run_stage(cli, ctx, jobs)) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<ConfigProblem>().is_some() => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}
