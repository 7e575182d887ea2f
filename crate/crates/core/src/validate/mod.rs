//! Artifact validation, scoring and dataset emission.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{assertion_screen, AugmentedRecord, Payload, StepId};
use crate::backend::Backend;
use crate::config::ValidateConfig;
use crate::eval::{grade_with_teacher, Rubric};
use crate::mutate::{apply_mutation, enumerate_mutations, verify_mutant_detectable, Detection, MutateError};
use crate::verilog::{check_syntax, parse_source, pretty_print, Circuit, Verdict};

pub const MAX_SCORE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("maximum score must be positive, got {0}")]
    NonPositiveMax(String),
    #[error("average score {avg} outside [0, {max}]")]
    OutOfRange { avg: String, max: String },
}

/// Average score over maximum score.
pub fn normalize_score(average: f64, maximum: f64) -> Result<f64, ScoreError> {
    if maximum.is_nan() || maximum <= 0.0 || maximum.is_infinite() {
        return Err(ScoreError::NonPositiveMax(maximum.to_string()));
    }
    if !(0.0..=maximum).contains(&average) {
        return Err(ScoreError::OutOfRange { avg: average.to_string(), max: maximum.to_string() });
    }
    Ok(average / maximum)
}

/// 5 minus deductions: rejected is 0, each warning 0.5, short prose 1.
pub fn rule_score(accepted: bool, warnings: usize, prose_ok: Option<bool>) -> f64 {
    if !accepted {
        return 0.0;
    }
    let mut s = (MAX_SCORE - 0.5 * warnings as f64).max(0.0);
    if prose_ok == Some(false) {
        s -= 1.0;
    }
    s.clamp(0.0, MAX_SCORE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    RuleBased,
    TeacherGraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactScore {
    pub record_id: String,
    pub step_id: StepId,
    pub raw_score: f64,
    pub max_score: f64,
    pub normalized: f64,
    pub source: ScoreSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactResult {
    pub verdict: Verdict,
    pub reason: Option<String>,
    pub warnings: usize,
    /// Prose shorter than the configured minimum.
    pub short: bool,
    pub score: Option<ArtifactScore>,
}

impl ArtifactResult {
    fn rejected(reason: impl Into<String>) -> Self {
        Self { verdict: Verdict::Rejected, reason: Some(reason.into()), warnings: 0, short: false, score: None }
    }

    fn accepted(warnings: usize, short: bool) -> Self {
        Self { verdict: Verdict::Accepted, reason: None, warnings, short, score: None }
    }

    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

/// The catalog mutation that turns S5 into S9.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixBugPair {
    pub mutation_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedBundle {
    pub record: AugmentedRecord,
    pub artifacts: BTreeMap<StepId, ArtifactResult>,
    pub overall_verdict: Verdict,
    pub fix_bug: Option<FixBugPair>,
}

impl ValidatedBundle {
    pub fn accepted(&self, step: StepId) -> bool {
        self.artifacts.get(&step).is_some_and(ArtifactResult::is_accepted)
    }

    fn text(&self, step: StepId) -> Option<String> {
        self.record.entry(step).and_then(|e| e.payload.as_ref()).map(Payload::text)
    }
}

fn code_of(rec: &AugmentedRecord, step: StepId) -> Option<&str> {
    rec.entry(step).and_then(|e| e.payload.as_ref()).and_then(Payload::as_code)
}

fn check_artifact(step: StepId, payload: &Payload, cfg: &ValidateConfig) -> ArtifactResult {
    match payload {
        Payload::Code(code) if step == StepId::S7 => match assertion_screen(code) {
            Ok(()) => ArtifactResult::accepted(0, false),
            Err(e) => ArtifactResult::rejected(e),
        },
        Payload::Code(code) => {
            let r = check_syntax(code);
            if r.accepted() {
                ArtifactResult::accepted(r.warning_count(), false)
            } else {
                ArtifactResult::rejected(format!("syntax: {} error(s)", r.error_count()))
            }
        }
        Payload::Prose(t) | Payload::Table(t) => {
            let len = t.trim().chars().count();
            if len == 0 {
                ArtifactResult::rejected("empty")
            } else if len > cfg.prose_max_len {
                ArtifactResult::rejected("too long")
            } else {
                ArtifactResult::accepted(0, len < cfg.prose_min_len)
            }
        }
        Payload::Rating(_) => ArtifactResult::accepted(0, false),
        Payload::ErrorList(items) if items.is_empty() => ArtifactResult::rejected("empty"),
        Payload::ErrorList(_) => ArtifactResult::accepted(0, false),
    }
}

/// Outcome of comparing S9 against S5.
enum BugCheck {
    NotApplicable,
    Detectable,
    Rejected(&'static str),
}

fn cross_check_bug(golden: &str, buggy: &str, max_bits: u32) -> BugCheck {
    let (Ok(g), Ok(b)) = (parse_source(golden), parse_source(buggy)) else { return BugCheck::NotApplicable };
    let Some(m) = g.top() else { return BugCheck::NotApplicable };
    let name = &m.name.name;
    match Circuit::elaborate(&g, name) {
        Ok(c) if c.input_bits() <= max_bits => {}
        _ => return BugCheck::NotApplicable,
    }
    if b.module(name).is_none() {
        return BugCheck::Rejected("interface mismatch");
    }
    match verify_mutant_detectable(&g, &b, name, max_bits) {
        Ok(Detection::Witness(_)) => BugCheck::Detectable,
        Ok(Detection::Equivalent) => BugCheck::Rejected("undetectable error"),
        Err(MutateError::InterfaceMismatch) => BugCheck::Rejected("interface mismatch"),
        Err(_) => BugCheck::NotApplicable,
    }
}

/// The catalog mutation of `golden` whose printed form equals `buggy`.
pub fn identify_mutation(golden: &str, buggy: &str) -> Option<FixBugPair> {
    let g = parse_source(golden).ok()?;
    let target = pretty_print(&parse_source(buggy).ok()?);
    enumerate_mutations(&g).into_iter().find_map(|site| {
        let (mutant, desc) = apply_mutation(&g, &site).ok()?;
        (pretty_print(&mutant) == target).then(|| FixBugPair { mutation_id: site.id(), description: desc.human_description })
    })
}

/// Validates every artifact of one record. Entries the augmenter already
/// rejected stay rejected with their reason.
pub fn validate_artifacts(record: AugmentedRecord, cfg: &ValidateConfig) -> ValidatedBundle {
    let mut artifacts = BTreeMap::new();
    for e in &record.entries {
        let result = match (&e.payload, e.accepted) {
            (Some(p), true) => check_artifact(e.step, p, cfg),
            _ => ArtifactResult::rejected(e.reason.clone().unwrap_or_else(|| "no output".into())),
        };
        artifacts.insert(e.step, result);
    }

    let mut fix_bug = None;
    let s9_ok = artifacts.get(&StepId::S9).is_some_and(ArtifactResult::is_accepted);
    let s5_ok = artifacts.get(&StepId::S5).is_some_and(ArtifactResult::is_accepted);
    if let (true, true, Some(golden), Some(buggy)) = (s5_ok, s9_ok, code_of(&record, StepId::S5), code_of(&record, StepId::S9)) {
        match cross_check_bug(golden, buggy, cfg.max_input_bits) {
            BugCheck::Rejected(why) => {
                artifacts.insert(StepId::S9, ArtifactResult::rejected(why));
            }
            BugCheck::Detectable | BugCheck::NotApplicable => fix_bug = identify_mutation(golden, buggy),
        }
    }

    let core = [StepId::S1, StepId::S2, StepId::S3, StepId::S4, StepId::S5];
    let overall_verdict = if core.iter().all(|s| artifacts.get(s).is_some_and(ArtifactResult::is_accepted)) {
        Verdict::Accepted
    } else {
        Verdict::Rejected
    };
    ValidatedBundle { record, artifacts, overall_verdict, fix_bug }
}

/// Rule-based score, replaced by the teacher's grade when one is given.
pub fn score_artifact(record_id: &str, step: StepId, result: &ArtifactResult, teacher: Option<f64>) -> ArtifactScore {
    let (raw, source) = match teacher {
        Some(t) if result.is_accepted() => (t.clamp(0.0, MAX_SCORE), ScoreSource::TeacherGraded),
        _ => {
            let prose_ok = matches!(step.output_kind(), crate::augment::OutputKind::Prose | crate::augment::OutputKind::Table)
                .then_some(!result.short);
            (rule_score(result.is_accepted(), result.warnings, prose_ok), ScoreSource::RuleBased)
        }
    };
    ArtifactScore {
        record_id: record_id.to_string(),
        step_id: step,
        raw_score: raw,
        max_score: MAX_SCORE,
        normalized: raw / MAX_SCORE,
        source,
    }
}

/// Validates and scores all records in parallel; order is preserved.
pub fn validate_bundles(
    records: Vec<AugmentedRecord>,
    cfg: &ValidateConfig,
    teacher: Option<&dyn Backend>,
) -> Vec<ValidatedBundle> {
    let rubric = Rubric::default_hdl();
    records
        .into_par_iter()
        .map(|rec| {
            let mut b = validate_artifacts(rec, cfg);
            let id = b.record.record_id.clone();
            let texts: BTreeMap<StepId, Option<String>> = b.artifacts.keys().map(|&s| (s, b.text(s))).collect();
            for (step, result) in b.artifacts.iter_mut() {
                let grade = match (teacher, &texts[step]) {
                    (Some(t), Some(text)) if result.is_accepted() => {
                        let g = grade_with_teacher(&format!("{id}:{step}"), "dataset", text, &rubric, t);
                        g.valid.then_some(g.teacher_score)
                    }
                    _ => None,
                };
                result.score = Some(score_artifact(&id, *step, result, grade));
            }
            b
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    Generate,
    Explain,
    Document,
    Optimize,
    Testbench,
    Assert,
    FindBug,
    FixBug,
    DetectBug,
}

impl TaskTag {
    pub fn name(self) -> &'static str {
        match self {
            TaskTag::Generate => "generate",
            TaskTag::Explain => "explain",
            TaskTag::Document => "document",
            TaskTag::Optimize => "optimize",
            TaskTag::Testbench => "testbench",
            TaskTag::Assert => "assert",
            TaskTag::FindBug => "find_bug",
            TaskTag::FixBug => "fix_bug",
            TaskTag::DetectBug => "detect_bug",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub record_id: String,
    pub step: StepId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub task: TaskTag,
    pub score: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<String>,
}

/// Counts runs of word characters and every other non-space character.
pub fn count_tokens(text: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            if !in_word {
                n += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                n += 1;
            }
        }
    }
    n
}

impl DatasetExample {
    pub fn tokens(&self) -> usize {
        count_tokens(&self.instruction) + count_tokens(&self.input) + count_tokens(&self.output)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub examples: usize,
    pub tokens: usize,
    pub per_task: BTreeMap<String, usize>,
    pub per_task_tokens: BTreeMap<String, usize>,
    /// Candidates dropped for scoring below the threshold.
    pub below_threshold: usize,
    /// Artifacts rejected by validation.
    pub rejected_artifacts: usize,
}

/// Task mapping: (task, primary step, input step or `None` for the source,
/// output step, instruction).
const MAPPING: [(TaskTag, StepId, Option<StepId>, StepId, &str); 9] = [
    (TaskTag::Explain, StepId::S2, None, StepId::S2, "Describe the behaviour of this Verilog module as a Karnaugh map or logic table."),
    (TaskTag::Document, StepId::S3, None, StepId::S3, "Add comments that document this Verilog module."),
    (TaskTag::Optimize, StepId::S5, None, StepId::S5, "Rewrite this Verilog module to be more readable and efficient while keeping its behaviour."),
    (TaskTag::Generate, StepId::S5, Some(StepId::S2), StepId::S5, "Write a Verilog module that implements the behaviour described by this table."),
    (TaskTag::Testbench, StepId::S6, Some(StepId::S5), StepId::S6, "Write a self-checking testbench for this Verilog module."),
    (TaskTag::Assert, StepId::S7, Some(StepId::S5), StepId::S7, "Write assertions that check the intended behaviour of this Verilog module."),
    (TaskTag::FindBug, StepId::S8, Some(StepId::S5), StepId::S8, "List errors that could plausibly be introduced into this Verilog module."),
    (TaskTag::FixBug, StepId::S9, Some(StepId::S9), StepId::S5, "This Verilog module contains a bug. Return the corrected module."),
    (TaskTag::DetectBug, StepId::S10, Some(StepId::S9), StepId::S10, "Write a testbench that exposes the bug in this Verilog module."),
];

fn candidates(b: &ValidatedBundle) -> (Vec<(DatasetExample, f64)>, usize) {
    let id = &b.record.record_id;
    let mut out = Vec::new();
    let rejected = b.artifacts.values().filter(|a| !a.is_accepted()).count();
    for (task, primary, input_step, output_step, instruction) in MAPPING {
        let mut needed = vec![primary, output_step];
        needed.extend(input_step);
        if !needed.iter().all(|s| b.accepted(*s)) {
            continue;
        }
        if task == TaskTag::FixBug && b.fix_bug.is_none() {
            continue;
        }
        let input = match input_step {
            Some(s) => b.text(s),
            None => Some(b.record.source.clone()),
        };
        let (Some(input), Some(output)) = (input, b.text(output_step)) else { continue };
        if output.trim().is_empty() {
            continue;
        }
        let score = needed
            .iter()
            .filter_map(|s| b.artifacts[s].score.as_ref().map(|x| x.raw_score))
            .fold(MAX_SCORE, f64::min);
        out.push((
            DatasetExample {
                instruction: instruction.to_string(),
                input,
                output,
                task,
                score,
                provenance: Provenance { record_id: id.clone(), step: primary },
                mutation: (task == TaskTag::FixBug).then(|| b.fix_bug.as_ref().map(|f| f.mutation_id.clone())).flatten(),
            },
            score,
        ));
    }
    (out, rejected)
}

/// Builds the dataset: one example per accepted artifact that scores at least
/// `min_score`, sorted by (record_id, step, task).
pub fn emit_dataset(bundles: &[ValidatedBundle], min_score: f64) -> (Vec<DatasetExample>, CorpusStats) {
    let mut stats = CorpusStats { records: bundles.len(), ..Default::default() };
    let mut examples = Vec::new();
    for b in bundles {
        let (cands, rejected) = candidates(b);
        stats.rejected_artifacts += rejected;
        for (ex, score) in cands {
            if score < min_score {
                stats.below_threshold += 1;
            } else {
                examples.push(ex);
            }
        }
    }
    examples.sort_by(|a, b| {
        (&a.provenance.record_id, a.provenance.step, a.task).cmp(&(&b.provenance.record_id, b.provenance.step, b.task))
    });
    for ex in &examples {
        let t = ex.tokens();
        stats.examples += 1;
        stats.tokens += t;
        *stats.per_task.entry(ex.task.name().to_string()).or_default() += 1;
        *stats.per_task_tokens.entry(ex.task.name().to_string()).or_default() += t;
    }
    (examples, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Jsonl,
    Json,
}

pub fn render_dataset(examples: &[DatasetExample], format: DatasetFormat) -> String {
    match format {
        DatasetFormat::Jsonl => crate::util::to_jsonl(examples),
        DatasetFormat::Json => serde_json::to_string_pretty(examples).expect("examples serialize") + "\n",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize() {
        assert_eq!(normalize_score(3.85, 5.0).unwrap(), 0.77);
        assert_eq!(normalize_score(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(normalize_score(0.0, 5.0).unwrap(), 0.0);
        assert!(normalize_score(1.0, 0.0).is_err());
        assert!(normalize_score(6.0, 5.0).is_err());
        assert!(normalize_score(-0.1, 5.0).is_err());
    }

    #[test]
    fn rules() {
        assert_eq!(rule_score(true, 0, None), 5.0);
        assert_eq!(rule_score(false, 0, None), 0.0);
        assert_eq!(rule_score(true, 2, None), 4.0);
        assert_eq!(rule_score(true, 20, None), 0.0);
        assert_eq!(rule_score(true, 0, Some(false)), 4.0);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(count_tokens("assign y = ~a;"), 6);
        assert_eq!(count_tokens("a_b  c1"), 2);
        assert_eq!(count_tokens(""), 0);
    }

    #[test]
    fn mutation_identified() {
        let golden = "module m(input a, input b, output y);\n  assign y = a & b;\nendmodule\n";
        let buggy = "module m(input a, input b, output y);\n  assign y = a | b;\nendmodule\n";
        let f = identify_mutation(golden, buggy).unwrap();
        assert!(f.mutation_id.ends_with("BinOpSwap"), "{}", f.mutation_id);
        assert!(identify_mutation(golden, golden).is_none());
    }
}
