//! Chain-of-thought augmentation: a fixed DAG of prompted steps per circuit,
//! with syntax-checked code payloads and one-shot exemplars as feedback.

mod parse;
mod steps;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Message, Request};
use crate::config::AugmentConfig;
use crate::ingest::CorpusRecord;
use crate::util::sha256_hex;
use crate::verilog::check_syntax;
pub use parse::{assertion_screen, parse_payload, ErrorItem, Payload};
pub use steps::{OutputKind, StepId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disabled {
    pub step: StepId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub order: Vec<StepId>,
    pub disabled: Vec<Disabled>,
}

/// Topological order of the enabled steps (ties broken by step number).
/// A step whose dependency is not in the plan is disabled as well.
pub fn plan_pipeline(enabled: &BTreeSet<StepId>) -> Plan {
    let mut order = Vec::new();
    let mut disabled = Vec::new();
    // Step numbers are already a topological order of the graph.
    for step in StepId::ALL {
        if !enabled.contains(&step) {
            disabled.push(Disabled { step, reason: "not enabled".into() });
            continue;
        }
        match step.depends_on().iter().find(|d| !order.contains(*d)) {
            Some(d) => {
                log::debug!("{step} disabled: dependency {d} disabled");
                disabled.push(Disabled { step, reason: format!("dependency {d} disabled") });
            }
            None => order.push(step),
        }
    }
    Plan { order, disabled }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: StepId,
    /// Prompt of the final attempt, without any exemplar prefix.
    pub prompt: String,
    pub raw_response: String,
    pub payload: Option<Payload>,
    pub accepted: bool,
    pub reason: Option<String>,
    pub attempts: u32,
    pub prompt_hash: String,
    pub response_hash: String,
    /// Exemplar record attached to the prompt, if any.
    pub exemplar: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub record_id: String,
    pub repo_id: String,
    pub relative_path: String,
    pub source: String,
    pub plan: Vec<StepId>,
    pub disabled: Vec<Disabled>,
    /// Steps in execution order.
    pub entries: Vec<LedgerEntry>,
    /// Planned steps that did not run because a dependency failed.
    pub skipped: Vec<Disabled>,
    /// S1 failed, nothing usable was produced.
    pub empty: bool,
}

impl AugmentedRecord {
    pub fn entry(&self, step: StepId) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.step == step)
    }

    pub fn accepted(&self, step: StepId) -> bool {
        self.entry(step).is_some_and(|e| e.accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub record_id: String,
    pub score: f64,
    pub prompt: String,
    pub response: String,
}

/// Top-scoring validated (prompt, response) pairs per step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExemplarStore {
    pub capacity: usize,
    pub min_score: f64,
    pub entries: BTreeMap<StepId, Vec<Exemplar>>,
}

impl ExemplarStore {
    pub fn new(capacity: usize, min_score: f64) -> Self {
        Self { capacity, min_score, entries: BTreeMap::new() }
    }

    /// Adds an exemplar if it scores high enough; keeps the best `capacity`.
    pub fn offer(&mut self, step: StepId, ex: Exemplar) -> bool {
        if ex.score < self.min_score || self.capacity == 0 {
            return false;
        }
        let list = self.entries.entry(step).or_default();
        if list.iter().any(|e| e.record_id == ex.record_id) {
            return false;
        }
        list.push(ex);
        list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.record_id.cmp(&b.record_id)));
        list.truncate(self.capacity);
        true
    }
}

/// Highest score first, then smallest record_id.
pub fn attach_feedback_exemplar(store: &ExemplarStore, step: StepId) -> Option<&Exemplar> {
    store.entries.get(&step).and_then(|l| l.first())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates(BTreeMap<StepId, String>);

impl Default for Templates {
    fn default() -> Self {
        Self(StepId::ALL.iter().map(|&s| (s, steps::default_template(s).to_string())).collect())
    }
}

impl Templates {
    /// Defaults, overridden by `<dir>/<step>.txt` where present.
    pub fn load(dir: Option<&Path>) -> std::io::Result<Self> {
        let mut t = Self::default();
        if let Some(dir) = dir {
            for s in StepId::ALL {
                let p = dir.join(format!("{s}.txt"));
                if p.exists() {
                    t.0.insert(s, std::fs::read_to_string(p)?);
                }
            }
        }
        Ok(t)
    }

    pub fn get(&self, step: StepId) -> &str {
        &self.0[&step]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AugmentError {
    #[error("step {step} needs {missing}, which has no accepted output")]
    MissingDependency { step: StepId, missing: StepId },
}

/// Expands the step template. `{{source}}` is the circuit; `{{Sn}}` is the
/// parsed payload of an ancestor step. Direct dependencies the template does
/// not mention are appended. An exemplar is prepended as a demonstration.
pub fn render_prompt(
    step: StepId,
    template: &str,
    source: &str,
    ledger: &[LedgerEntry],
    exemplar: Option<&Exemplar>,
) -> Result<String, AugmentError> {
    let payload = |s: StepId| {
        ledger.iter().find(|e| e.step == s && e.accepted).and_then(|e| e.payload.as_ref()).map(Payload::text)
    };
    for &d in step.depends_on() {
        if payload(d).is_none() {
            return Err(AugmentError::MissingDependency { step, missing: d });
        }
    }
    let mut body = template.replace("{{source}}", source);
    // Replace S10 before S1 so the shorter name does not match first.
    for s in StepId::ALL.iter().rev() {
        let tag = format!("{{{{{s}}}}}");
        if body.contains(&tag) {
            if !step.ancestors().contains(s) {
                return Err(AugmentError::MissingDependency { step, missing: *s });
            }
            let text = payload(*s).ok_or(AugmentError::MissingDependency { step, missing: *s })?;
            body = body.replace(&tag, &text);
        }
    }
    for &d in step.depends_on() {
        if !template.contains(&format!("{{{{{d}}}}}")) {
            body.push_str(&format!("\n\nOutput of step {d}:\n{}", payload(d).unwrap_or_default()));
        }
    }
    Ok(match exemplar {
        Some(ex) => format!(
            "Here is an example of a good answer to a similar request.\n\nRequest:\n{}\n\nAnswer:\n{}\n\n---\n\n{body}",
            ex.prompt, ex.response
        ),
        None => body,
    })
}

/// Context shared by every record of one augmentation run.
pub struct AugmentContext<'a> {
    pub backend: &'a dyn Backend,
    pub templates: &'a Templates,
    pub config: &'a AugmentConfig,
    pub plan: Plan,
}

impl<'a> AugmentContext<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a Templates, config: &'a AugmentConfig) -> Self {
        let enabled: BTreeSet<StepId> = config.enabled_steps.iter().filter_map(|s| StepId::parse(s)).collect();
        Self { backend, templates, config, plan: plan_pipeline(&enabled) }
    }
}

fn diagnostics_text(code: &str) -> String {
    check_syntax(code).diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

/// Validates a parsed payload for acceptance. Code must pass the checker
/// (assertions only pass a lightweight screen).
fn accept(step: StepId, payload: &Payload) -> Result<(), String> {
    match payload {
        Payload::Code(code) if step == StepId::S7 => assertion_screen(code),
        Payload::Code(code) => {
            let report = check_syntax(code);
            if report.accepted() {
                Ok(())
            } else {
                Err(format!("syntax: {} error(s)", report.error_count()))
            }
        }
        _ => Ok(()),
    }
}

/// Runs one step: query, parse, check; code payloads get `code_retries`
/// further attempts with the diagnostics appended.
pub fn execute_step(step: StepId, prompt: &str, base_prompt: &str, record_id: &str, ctx: &AugmentContext<'_>) -> LedgerEntry {
    let mut entry = LedgerEntry {
        step,
        prompt: base_prompt.to_string(),
        raw_response: String::new(),
        payload: None,
        accepted: false,
        reason: None,
        attempts: 0,
        prompt_hash: sha256_hex(prompt.as_bytes()),
        response_hash: String::new(),
        exemplar: None,
    };
    let mut current = prompt.to_string();
    let max_turns = if step.output_kind() == OutputKind::Code { 1 + ctx.config.code_retries } else { 1 };
    for turn in 0..max_turns {
        let req = Request {
            key: record_id.to_string(),
            step: step.to_string(),
            turn,
            messages: vec![Message::user(current.clone())],
            temperature: None,
        };
        entry.attempts = turn + 1;
        entry.prompt_hash = sha256_hex(current.as_bytes());
        let reply = match ctx.backend.complete(&req) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("{record_id} {step}: {e}");
                entry.reason = Some("backend_error".into());
                return entry;
            }
        };
        entry.response_hash = sha256_hex(reply.as_bytes());
        entry.raw_response = reply;
        let Some(payload) = parse_payload(step.output_kind(), &entry.raw_response) else {
            entry.payload = None;
            entry.reason = Some("unparseable".into());
            return entry;
        };
        match accept(step, &payload) {
            Ok(()) => {
                entry.payload = Some(payload);
                entry.accepted = true;
                entry.reason = None;
                return entry;
            }
            Err(why) => {
                if let Payload::Code(code) = &payload {
                    current = format!(
                        "{prompt}\n\nYour previous answer was rejected by the compiler:\n{}\nReturn a corrected version in a single fenced code block.",
                        diagnostics_text(code)
                    );
                }
                entry.payload = Some(payload);
                entry.reason = Some(why);
            }
        }
    }
    entry
}

/// Runs the plan for one record.
pub fn run_record(record: &CorpusRecord, ctx: &AugmentContext<'_>, store: &ExemplarStore) -> AugmentedRecord {
    let mut out = AugmentedRecord {
        record_id: record.record_id.clone(),
        repo_id: record.repo_id.clone(),
        relative_path: record.relative_path.clone(),
        source: record.text.clone(),
        plan: ctx.plan.order.clone(),
        disabled: ctx.plan.disabled.clone(),
        entries: Vec::new(),
        skipped: Vec::new(),
        empty: false,
    };
    for &step in &ctx.plan.order {
        if let Some(d) = step.depends_on().iter().find(|d| !out.accepted(**d)) {
            out.skipped.push(Disabled { step, reason: format!("dependency {d} not accepted") });
            continue;
        }
        let template = ctx.templates.get(step);
        let exemplar = attach_feedback_exemplar(store, step).filter(|e| e.record_id != record.record_id);
        let base = render_prompt(step, template, &record.text, &out.entries, None).expect("dependencies checked above");
        let full = render_prompt(step, template, &record.text, &out.entries, exemplar).expect("dependencies checked above");
        let mut entry = execute_step(step, &full, &base, &record.record_id, ctx);
        entry.exemplar = exemplar.map(|e| e.record_id.clone());
        if step == StepId::S1 && !entry.accepted {
            out.empty = true;
        }
        out.entries.push(entry);
    }
    out
}

/// Rule-based quality used to admit exemplars.
fn exemplar_score(entry: &LedgerEntry, prose_min_len: usize) -> f64 {
    let Some(p) = &entry.payload else { return 0.0 };
    match p {
        Payload::Code(code) if entry.step != StepId::S7 => {
            let report = check_syntax(code);
            crate::validate::rule_score(report.accepted(), report.warning_count(), None)
        }
        Payload::Prose(t) | Payload::Table(t) => crate::validate::rule_score(true, 0, Some(t.trim().len() >= prose_min_len)),
        _ => 5.0,
    }
}

/// Augments every record. Records are processed in record_id order in
/// batches; within a batch they run in parallel against the same exemplar
/// snapshot, and the store is updated between batches. The result does not
/// depend on the number of worker threads.
pub fn run_corpus(records: &[CorpusRecord], ctx: &AugmentContext<'_>) -> (Vec<AugmentedRecord>, ExemplarStore) {
    let mut sorted: Vec<&CorpusRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    sorted.dedup_by(|a, b| a.record_id == b.record_id);
    let mut store = ExemplarStore::new(ctx.config.exemplar_capacity, ctx.config.exemplar_min_score);
    let mut out = Vec::with_capacity(sorted.len());
    for batch in sorted.chunks(ctx.config.batch_size.max(1)) {
        let results: Vec<AugmentedRecord> = batch.par_iter().map(|r| run_record(r, ctx, &store)).collect();
        for rec in &results {
            for e in rec.entries.iter().filter(|e| e.accepted) {
                let score = exemplar_score(e, ctx.config.prose_min_len);
                store.offer(
                    e.step,
                    Exemplar { record_id: rec.record_id.clone(), score, prompt: e.prompt.clone(), response: e.raw_response.clone() },
                );
            }
        }
        out.extend(results);
    }
    (out, store)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub record_id: String,
    pub step: StepId,
    pub accepted: bool,
    pub reason: Option<String>,
    pub prompt_hash: String,
    pub response_hash: String,
}

pub fn manifest_rows(records: &[AugmentedRecord]) -> Vec<ManifestRow> {
    let mut rows = Vec::new();
    for r in records {
        for e in &r.entries {
            rows.push(ManifestRow {
                record_id: r.record_id.clone(),
                step: e.step,
                accepted: e.accepted,
                reason: e.reason.clone(),
                prompt_hash: e.prompt_hash.clone(),
                response_hash: e.response_hash.clone(),
            });
        }
        for s in &r.skipped {
            rows.push(ManifestRow {
                record_id: r.record_id.clone(),
                step: s.step,
                accepted: false,
                reason: Some(s.reason.clone()),
                prompt_hash: String::new(),
                response_hash: String::new(),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests;
