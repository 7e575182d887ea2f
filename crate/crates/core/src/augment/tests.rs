use std::sync::Mutex;

use super::*;
use crate::backend::{BackendError, FnBackend};
use crate::ingest::{LanguageHint, Status};
use crate::ingest::license::{LicenseClass, LicenseVerdict};

const INV: &str = "module inv(input a, output y);\n  assign y = ~a;\nendmodule\n";

fn record(id: &str) -> CorpusRecord {
    CorpusRecord {
        record_id: id.to_string(),
        repo_id: "r".into(),
        relative_path: format!("{id}.v"),
        language_hint: LanguageHint::Verilog,
        license: LicenseVerdict { spdx_id: Some("MIT".into()), class: LicenseClass::Permissive, evidence: String::new() },
        status: Status::Decontaminated,
        text: INV.into(),
    }
}

fn set(steps: &[StepId]) -> BTreeSet<StepId> {
    steps.iter().copied().collect()
}

/// Answers every step with a valid payload.
fn good_reply(step: &str) -> String {
    match step {
        "S1" => "A Verilog inverter: combinational, one input and one output.".into(),
        "S2" => "| a | y |\n|---|---|\n| 0 | 1 |\n| 1 | 0 |".into(),
        "S4" => "Rating: 4".into(),
        "S7" => "```\nassert property (y == !a);\n```".into(),
        "S8" => "1. Missing inversion: output equals input (line 2)".into(),
        "S9" => "```\nmodule inv(input a, output y);\n  assign y = a;\nendmodule\n```".into(),
        "S6" | "S10" => "```\nmodule tb;\n  reg a;\n  wire y;\n  inv dut(.a(a), .y(y));\n  initial begin\n    a = 0;\n    #1;\n    $finish;\n  end\nendmodule\n```".into(),
        _ => format!("```verilog\n{INV}```"),
    }
}

#[test]
fn plan_examples() {
    let all = plan_pipeline(&set(&StepId::ALL));
    assert_eq!(all.order, StepId::ALL.to_vec());
    assert!(all.disabled.is_empty());

    let no5: Vec<StepId> = StepId::ALL.iter().copied().filter(|s| *s != StepId::S5).collect();
    let p = plan_pipeline(&set(&no5));
    assert_eq!(p.order, vec![StepId::S1, StepId::S2, StepId::S3, StepId::S4]);
    let d6 = p.disabled.iter().find(|d| d.step == StepId::S6).unwrap();
    assert_eq!(d6.reason, "dependency S5 disabled");

    let p = plan_pipeline(&set(&[StepId::S1, StepId::S2, StepId::S9]));
    assert_eq!(p.order, vec![StepId::S1, StepId::S2]);
}

#[test]
fn step_graph() {
    assert_eq!(StepId::S10.ancestors(), vec![StepId::S1, StepId::S2, StepId::S3, StepId::S4, StepId::S5, StepId::S8, StepId::S9]);
    assert_eq!(StepId::parse("S10"), Some(StepId::S10));
    assert_eq!(StepId::parse("S11"), None);
    assert_eq!(StepId::parse("S0"), None);
    assert_eq!(StepId::S4.output_kind(), OutputKind::Rating);
    assert_eq!(serde_json::to_string(&StepId::S7).unwrap(), "\"S7\"");
}

#[test]
fn prompts_are_deterministic_and_carry_context() {
    let t = Templates::default();
    assert!(t.get(StepId::S1).contains("Identify the language and characteristics of the circuit."));
    assert!(t.get(StepId::S2).contains("Karnaugh map or logic table"));
    let s1 = LedgerEntry {
        step: StepId::S1,
        prompt: String::new(),
        raw_response: String::new(),
        payload: Some(Payload::Prose("AN INVERTER DESCRIPTION".into())),
        accepted: true,
        reason: None,
        attempts: 1,
        prompt_hash: String::new(),
        response_hash: String::new(),
        exemplar: None,
    };
    let a = render_prompt(StepId::S2, t.get(StepId::S2), INV, std::slice::from_ref(&s1), None).unwrap();
    let b = render_prompt(StepId::S2, t.get(StepId::S2), INV, std::slice::from_ref(&s1), None).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("AN INVERTER DESCRIPTION"));
    assert!(a.contains("assign y = ~a;"));
    assert!(matches!(
        render_prompt(StepId::S2, t.get(StepId::S2), INV, &[], None),
        Err(AugmentError::MissingDependency { missing: StepId::S1, .. })
    ));
    // A template without the placeholder still sees the dependency.
    let c = render_prompt(StepId::S2, "Tabulate.", INV, std::slice::from_ref(&s1), None).unwrap();
    assert!(c.contains("AN INVERTER DESCRIPTION"));
}

#[test]
fn exemplar_selection() {
    let mut store = ExemplarStore::new(2, 4.0);
    let ex = |id: &str, score: f64| Exemplar { record_id: id.into(), score, prompt: "p".into(), response: "r".into() };
    assert!(!store.offer(StepId::S3, ex("low", 3.5)));
    assert!(store.offer(StepId::S3, ex("b", 4.5)));
    assert!(store.offer(StepId::S3, ex("a", 4.5)));
    assert!(store.offer(StepId::S3, ex("c", 5.0)));
    assert_eq!(attach_feedback_exemplar(&store, StepId::S3).unwrap().record_id, "c");
    let ids: Vec<_> = store.entries[&StepId::S3].iter().map(|e| e.record_id.as_str()).collect();
    assert_eq!(ids, ["c", "a"]);
    assert!(attach_feedback_exemplar(&store, StepId::S5).is_none());
}

#[test]
fn full_run_accepts_everything() {
    let backend = FnBackend(|r: &Request| Ok::<_, BackendError>(good_reply(&r.step)));
    let templates = Templates::default();
    let cfg = AugmentConfig::default();
    let ctx = AugmentContext::new(&backend, &templates, &cfg);
    let out = run_record(&record("r1"), &ctx, &ExemplarStore::default());
    assert_eq!(out.entries.len(), 10);
    for e in &out.entries {
        assert!(e.accepted, "{} rejected: {:?}", e.step, e.reason);
    }
    assert_eq!(out.entry(StepId::S4).unwrap().payload, Some(Payload::Rating(4.0)));
}

#[test]
fn code_retry_uses_diagnostics() {
    let seen = Mutex::new(Vec::new());
    let backend = FnBackend(|r: &Request| {
        seen.lock().unwrap().push((r.step.clone(), r.turn, r.messages[0].content.clone()));
        if r.step == "S3" && r.turn == 0 {
            Ok::<_, BackendError>("```\nmodule inv(input a, output y);\n  assign y = ~;\nendmodule\n```".into())
        } else {
            Ok(good_reply(&r.step))
        }
    });
    let templates = Templates::default();
    let cfg = AugmentConfig::default();
    let ctx = AugmentContext::new(&backend, &templates, &cfg);
    let out = run_record(&record("r1"), &ctx, &ExemplarStore::default());
    let s3 = out.entry(StepId::S3).unwrap();
    assert!(s3.accepted);
    assert_eq!(s3.attempts, 2);
    let seen = seen.into_inner().unwrap();
    let retry = seen.iter().find(|(s, t, _)| s == "S3" && *t == 1).unwrap();
    assert!(retry.2.contains("rejected by the compiler"));
    assert!(retry.2.contains("2:15: error"), "{}", retry.2);
}

#[test]
fn failed_code_after_retry_skips_dependents() {
    let backend = FnBackend(|r: &Request| {
        if r.step == "S5" {
            Ok::<_, BackendError>("```\nmodule broken(\n```".into())
        } else {
            Ok(good_reply(&r.step))
        }
    });
    let templates = Templates::default();
    let cfg = AugmentConfig::default();
    let ctx = AugmentContext::new(&backend, &templates, &cfg);
    let out = run_record(&record("r1"), &ctx, &ExemplarStore::default());
    let s5 = out.entry(StepId::S5).unwrap();
    assert!(!s5.accepted);
    assert_eq!(s5.attempts, 2);
    assert!(s5.reason.as_deref().unwrap().starts_with("syntax"));
    let skipped: Vec<StepId> = out.skipped.iter().map(|d| d.step).collect();
    assert_eq!(skipped, vec![StepId::S6, StepId::S7, StepId::S8, StepId::S9, StepId::S10]);
}

#[test]
fn s6_failure_leaves_siblings() {
    let backend = FnBackend(|r: &Request| {
        if r.step == "S6" {
            Err(BackendError::Unavailable("down".into()))
        } else {
            Ok(good_reply(&r.step))
        }
    });
    let templates = Templates::default();
    let cfg = AugmentConfig::default();
    let ctx = AugmentContext::new(&backend, &templates, &cfg);
    let out = run_record(&record("r1"), &ctx, &ExemplarStore::default());
    assert_eq!(out.entry(StepId::S6).unwrap().reason.as_deref(), Some("backend_error"));
    assert!(out.accepted(StepId::S7) && out.accepted(StepId::S10));
    assert!(out.skipped.is_empty());
}

#[test]
fn s1_failure_marks_empty() {
    let backend = FnBackend(|_: &Request| Ok::<_, BackendError>("   ".into()));
    let templates = Templates::default();
    let cfg = AugmentConfig::default();
    let ctx = AugmentContext::new(&backend, &templates, &cfg);
    let out = run_record(&record("r1"), &ctx, &ExemplarStore::default());
    assert!(out.empty);
    assert_eq!(out.entries.len(), 1);
}

#[test]
fn corpus_is_thread_count_independent() {
    let backend = FnBackend(|r: &Request| Ok::<_, BackendError>(good_reply(&r.step)));
    let templates = Templates::default();
    let cfg = AugmentConfig { batch_size: 2, ..AugmentConfig::default() };
    let ctx = AugmentContext::new(&backend, &templates, &cfg);
    let recs: Vec<CorpusRecord> = (0..5).map(|i| record(&format!("{i:032x}"))).collect();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_corpus(&recs, &ctx))
    };
    let (a, sa) = run(1);
    let (b, sb) = run(4);
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    // Later batches see exemplars from earlier ones.
    assert!(a[0].entries.iter().all(|e| e.exemplar.is_none()));
    assert!(a[2].entries.iter().any(|e| e.exemplar.is_some()));
}
