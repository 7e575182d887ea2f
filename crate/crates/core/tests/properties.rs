//! Property tests for the invariants of each stage.

mod support;

use std::collections::BTreeSet;

use hdlforge::augment::{run_record, AugmentContext, ExemplarStore, StepId, Templates};
use hdlforge::backend::{BackendError, FnBackend, Request};
use hdlforge::config::{AugmentConfig, ValidateConfig};
use hdlforge::dedup::{canonicalize_for_similarity, cluster_duplicates, estimate_jaccard, minhash_signature, shingle, DedupParams, ShingleSet};
use hdlforge::eval::pass_at_k;
use hdlforge::ingest::license::{classify_license, LicenseClass, LicenseVerdict};
use hdlforge::ingest::{normalize_text, record_id, CorpusRecord, LanguageHint, Status};
use hdlforge::mutate::{apply_mutation, enumerate_mutations};
use hdlforge::validate::{count_tokens, emit_dataset, normalize_score, validate_bundles, TaskTag};
use hdlforge::verilog::{check_syntax, parse_source, pretty_print, truth_table, Verdict};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Evaluation

proptest! {
    #[test]
    fn pass_at_k_is_monotone_and_bounded(n in 1usize..60, c_frac in 0.0f64..1.0, k_frac in 0.0f64..1.0) {
        let c = ((n as f64) * c_frac) as usize;
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let p = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if c < n {
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= p - 1e-15);
        }
        if k < n {
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= p - 1e-15);
        }
        if c == 0 {
            prop_assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn normalized_score_is_exact_quotient(raw in 0.0f64..=5.0) {
        prop_assert_eq!(normalize_score(raw, 5.0).unwrap(), raw / 5.0);
    }
}

#[test]
fn pass_at_k_rejects_bad_arguments() {
    assert!(pass_at_k(5, 2, 6).is_err());
    assert!(pass_at_k(5, 6, 1).is_err());
    assert!(pass_at_k(5, 2, 0).is_err());
    assert!(normalize_score(6.0, 5.0).is_err());
}

// ---------------------------------------------------------------------------
// Ingest

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof!["[a-z_ ]{0,12}", Just("\r\n".to_string()), Just("\n".to_string()), Just("\r".to_string()), Just("   ".to_string())], 0..20)
        .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn normalized_text_uses_lf_and_ids_are_pure(text in text_strategy()) {
        let t = normalize_text(&text);
        prop_assert!(!t.contains('\r'));
        prop_assert_eq!(normalize_text(&t), t.clone());
        prop_assert_eq!(record_id(&t), record_id(&t.clone()));
        prop_assert_eq!(record_id(&t).len(), 32);
    }

    #[test]
    fn permissive_verdicts_are_allowlisted(
        idx in 0usize..8,
        or_idx in proptest::option::of(0usize..8),
    ) {
        const IDS: [&str; 8] = ["MIT", "Apache-2.0", "GPL-3.0-only", "BSD-3-Clause", "LGPL-2.1", "ISC", "Unlicense", "BSD-2-Clause"];
        let allow: Vec<String> = ["MIT", "Apache-2.0", "BSD-2-Clause", "BSD-3-Clause", "ISC"].map(String::from).to_vec();
        let expr = match or_idx {
            Some(j) => format!("{} OR {}", IDS[idx], IDS[j]),
            None => IDS[idx].to_string(),
        };
        let v: LicenseVerdict = classify_license(&format!("// SPDX-License-Identifier: {expr}\nmodule m; endmodule\n"), &[], &allow);
        if v.class == LicenseClass::Permissive {
            prop_assert!(v.spdx_id.as_ref().is_some_and(|id| allow.contains(id)));
        } else {
            prop_assert!(!expr.split(" OR ").any(|a| allow.iter().any(|l| l == a)));
        }
    }

    #[test]
    fn status_never_moves_backward(steps in proptest::collection::vec(0usize..6, 1..20)) {
        const ALL: [Status; 6] = [Status::Raw, Status::Filtered, Status::Deduped, Status::Decontaminated, Status::Augmented, Status::Rejected];
        let mut r = record("module m; endmodule\n", Status::Raw);
        for s in steps {
            let before = r.status;
            let moved = r.advance(ALL[s]);
            if before == Status::Rejected {
                prop_assert!(!moved && r.status == Status::Rejected);
            } else if moved {
                prop_assert!(r.status == Status::Rejected || r.status > before);
            } else {
                prop_assert_eq!(r.status, before);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dedup

fn record(text: &str, status: Status) -> CorpusRecord {
    CorpusRecord {
        record_id: record_id(text),
        repo_id: "r".into(),
        relative_path: format!("{}.v", &record_id(text)[..8]),
        language_hint: LanguageHint::Verilog,
        license: LicenseVerdict { spdx_id: Some("MIT".into()), class: LicenseClass::Permissive, evidence: String::new() },
        status,
        text: text.to_string(),
    }
}

fn module_text(seed: &[u8], edits: &[u8]) -> String {
    let mut s = String::from("module gen(input [7:0] a, input [7:0] b, output [7:0] y0");
    for i in 1..seed.len() {
        s.push_str(&format!(", output [7:0] y{i}"));
    }
    s.push_str(");\n");
    let ops = ["&", "|", "^", "+", "-"];
    for (i, &x) in seed.iter().enumerate() {
        let x = x.wrapping_add(edits.get(i).copied().unwrap_or(0));
        s.push_str(&format!("  assign y{i} = (a {} b) ^ 8'd{x};\n", ops[x as usize % ops.len()]));
    }
    s.push_str("endmodule\n");
    s
}

proptest! {
    #[test]
    fn minhash_is_deterministic_and_symmetric(a in proptest::collection::hash_set(any::<u64>(), 1..200), b in proptest::collection::hash_set(any::<u64>(), 1..200), seed in any::<u64>()) {
        let sa = ShingleSet { record_id: "a".into(), shingles: a.clone() };
        let sb = ShingleSet { record_id: "b".into(), shingles: b };
        let x = minhash_signature(&sa, 64, seed).unwrap();
        let again = minhash_signature(&ShingleSet { record_id: "a".into(), shingles: a }, 64, seed).unwrap();
        prop_assert_eq!(&x, &again);
        prop_assert_eq!(x.values.len(), 64);
        let y = minhash_signature(&sb, 64, seed).unwrap();
        let j = estimate_jaccard(&x, &y).unwrap();
        prop_assert_eq!(j, estimate_jaccard(&y, &x).unwrap());
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(estimate_jaccard(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn shingles_depend_only_on_tokens(body in "[a-z]{1,6}( [a-z]{1,6}){0,30}", comment in "[a-z ]{0,20}") {
        let plain = format!("module m;\n{body}\nendmodule\n");
        let noisy = format!("// {comment}\nmodule   m;\n/* {comment} */ {body}\n\nendmodule");
        let a = shingle("a", &canonicalize_for_similarity(&plain), 5);
        let b = shingle("b", &canonicalize_for_similarity(&noisy), 5);
        prop_assert_eq!(a.shingles, b.shingles);
    }

    #[test]
    fn raising_threshold_never_drops_more(
        seeds in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 4..10), 2..6),
        edits in proptest::collection::vec(proptest::collection::vec(0u8..3, 0..10), 0..8),
        lo in 0.3f64..0.9,
        delta in 0.0f64..0.3,
    ) {
        let mut records = Vec::new();
        for s in &seeds {
            records.push(record(&module_text(s, &[]), Status::Filtered));
        }
        for (i, e) in edits.iter().enumerate() {
            records.push(record(&module_text(&seeds[i % seeds.len()], e), Status::Filtered));
        }
        records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        records.dedup_by(|a, b| a.record_id == b.record_id);
        let dropped = |t: f64| -> usize {
            let p = DedupParams { threshold: t, exact_pairwise: true, ..DedupParams::default() };
            let ds = cluster_duplicates(&records, &p);
            for d in &ds {
                assert!(!d.dropped.contains(&d.survivor));
            }
            ds.iter().map(|d| d.dropped.len()).sum()
        };
        let low = dropped(lo);
        let high = dropped((lo + delta).min(1.0));
        prop_assert!(high <= low, "threshold {lo}: {low}, raised: {high}");
    }
}

// ---------------------------------------------------------------------------
// Verilog front end

fn expr_strategy() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("c".to_string()),
        Just("a[1]".to_string()),
        Just("c[2:1]".to_string()),
        (0u8..8).prop_map(|v| format!("3'd{v}")),
        (0u8..2).prop_map(|v| format!("1'b{v}")),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        let bin = ["&", "|", "^", "~^", "+", "-", "*", "<<", ">>", "==", "!=", "<", ">=", "&&", "||"];
        let un = ["~", "!", "-", "&", "|", "^", "~&"];
        prop_oneof![
            (inner.clone(), 0..bin.len(), inner.clone()).prop_map(move |(x, o, y)| format!("({x} {} {y})", bin[o])),
            (0..un.len(), inner.clone()).prop_map(move |(o, x)| format!("({}({x}))", un[o])),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(s, x, y)| format!("(({s}) ? {x} : {y})")),
            (inner.clone(), inner).prop_map(|(x, y)| format!("{{{x}, {y}}}")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn printing_preserves_structure_and_behaviour(e in expr_strategy()) {
        let src = format!("module m(input [2:0] a, input [2:0] b, input [2:0] c, output [5:0] y);\n  assign y = {e};\nendmodule\n");
        let a = parse_source(&src).unwrap_or_else(|d| panic!("{src}\n{d:?}"));
        let printed = pretty_print(&a);
        let b = parse_source(&printed).unwrap_or_else(|d| panic!("{printed}\n{d:?}"));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&printed, &pretty_print(&b));
        let ta = truth_table(&a, "m", 9).unwrap();
        let tb = truth_table(&b, "m", 9).unwrap();
        prop_assert_eq!(ta.rows.len(), 512);
        prop_assert_eq!(&ta, &tb);
        prop_assert_eq!(&ta, &truth_table(&a, "m", 9).unwrap());
    }

    #[test]
    fn verdict_matches_diagnostics_and_positions_are_real(sample in 0usize..27, cut in any::<prop::sample::Index>(), len in 0usize..6) {
        let files = samples();
        let src = std::fs::read_to_string(&files[sample % files.len()]).unwrap();
        let at = cut.index(src.len().max(1));
        let at = (0..=at).rev().find(|&i| src.is_char_boundary(i)).unwrap_or(0);
        let end = (at + len..=src.len()).find(|&i| src.is_char_boundary(i)).unwrap_or(src.len());
        let mangled = format!("{}{}", &src[..at], &src[end..]);
        let report = check_syntax(&mangled);
        let has_error = report.diagnostics.iter().any(|d| d.is_error());
        prop_assert_eq!(report.verdict == Verdict::Accepted, !has_error);
        let lines: Vec<&str> = mangled.split('\n').collect();
        for d in &report.diagnostics {
            prop_assert!(d.line >= 1 && (d.line as usize) <= lines.len().max(1), "{d:?}");
            let width = lines.get(d.line as usize - 1).map_or(0, |l| l.chars().count());
            prop_assert!(d.col >= 1 && (d.col as usize) <= width + 1, "{d:?} in {:?}", lines.get(d.line as usize - 1));
        }
    }
}

fn samples() -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(support::mockgen::fixtures().join("samples")).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn every_catalog_mutant_is_valid_and_enumeration_is_stable() {
    for path in samples() {
        let file = parse_source(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let sites = enumerate_mutations(&file);
        assert_eq!(sites, enumerate_mutations(&file));
        let reprinted: Vec<String> = enumerate_mutations(&parse_source(&pretty_print(&file)).unwrap()).iter().map(|s| s.id()).collect();
        assert_eq!(sites.iter().map(|s| s.id()).collect::<Vec<_>>(), reprinted, "{}", path.display());
        for site in &sites {
            let (mutant, desc) = apply_mutation(&file, site).unwrap();
            let report = check_syntax(&pretty_print(&mutant));
            assert!(report.accepted(), "{} {}: {:?}", path.display(), site.id(), report.diagnostics);
            assert!(desc.human_description.contains(&format!("line {}", site.line)), "{}", desc.human_description);
        }
    }
}

// ---------------------------------------------------------------------------
// Augmentation and dataset emission

const INV_TB: &str = "module tb;\n  reg a;\n  wire y;\n  inv dut(.a(a), .y(y));\n  initial begin\n    a = 0;\n    #1;\n    $finish;\n  end\nendmodule\n";

fn good(step: &str, golden: &str, buggy: &str) -> String {
    match step {
        "S1" => "A Verilog circuit: combinational logic with a handful of ports.".into(),
        "S2" => "| in | out |\n|---|---|\n| 0 | 1 |".into(),
        "S4" => "Rating: 4".into(),
        "S7" => "```\nassert property (y == y);\n```".into(),
        "S8" => "1. Wrong operator: AND in place of OR (line 2)".into(),
        "S9" => format!("```\n{buggy}```"),
        "S6" | "S10" => format!("```\n{INV_TB}```"),
        _ => format!("```verilog\n{golden}```"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn emitted_dataset_respects_gates_and_pairing(
        sample in 0usize..27,
        broken in proptest::collection::btree_set(1u8..=10, 0..4),
        mutant_pick in any::<prop::sample::Index>(),
        ask_mutant in any::<bool>(),
        min_score in 0.0f64..5.0,
    ) {
        let files = samples();
        let golden_src = std::fs::read_to_string(&files[sample % files.len()]).unwrap();
        let golden_file = parse_source(&golden_src).unwrap();
        let golden = pretty_print(&golden_file);
        let sites = enumerate_mutations(&golden_file);
        let buggy = if ask_mutant && !sites.is_empty() {
            pretty_print(&apply_mutation(&golden_file, &sites[mutant_pick.index(sites.len())]).unwrap().0)
        } else {
            golden.replace("endmodule", "  // unchanged\nendmodule")
        };
        let backend = FnBackend(|r: &Request| {
            let n: u8 = r.step[1..].parse().unwrap();
            if broken.contains(&n) {
                Ok::<_, BackendError>(String::new())
            } else {
                Ok(good(&r.step, &golden, &buggy))
            }
        });
        let templates = Templates::default();
        let cfg = AugmentConfig::default();
        let ctx = AugmentContext::new(&backend, &templates, &cfg);
        let aug = run_record(&record(&golden_src, Status::Decontaminated), &ctx, &ExemplarStore::default());
        let bundles = validate_bundles(vec![aug], &ValidateConfig::default(), None);
        let b = &bundles[0];
        let (examples, stats) = emit_dataset(&bundles, min_score);

        // Exactness of every recorded score.
        for a in b.artifacts.values() {
            let s = a.score.as_ref().unwrap();
            prop_assert_eq!(s.normalized, s.raw_score / s.max_score);
        }
        // Gate soundness.
        for ex in &examples {
            prop_assert!(b.accepted(ex.provenance.step), "{:?} from rejected {}", ex.task, ex.provenance.step);
            prop_assert!(ex.score >= min_score);
        }
        // Stats conservation and stable counting.
        prop_assert_eq!(stats.examples, stats.per_task.values().sum::<usize>());
        prop_assert_eq!(stats.examples, examples.len());
        prop_assert_eq!(stats.tokens, examples.iter().map(|e| count_tokens(&e.instruction) + count_tokens(&e.input) + count_tokens(&e.output)).sum::<usize>());
        prop_assert_eq!(&emit_dataset(&bundles, min_score), &(examples.clone(), stats.clone()));
        // fix_bug input is the recorded mutation of the output.
        for ex in examples.iter().filter(|e| e.task == TaskTag::FixBug) {
            let out = parse_source(&ex.output).unwrap();
            parse_source(&ex.input).unwrap();
            let id = ex.mutation.as_ref().unwrap();
            let site = enumerate_mutations(&out).into_iter().find(|s| &s.id() == id).unwrap();
            let (m, _) = apply_mutation(&out, &site).unwrap();
            prop_assert_eq!(pretty_print(&m), pretty_print(&parse_source(&ex.input).unwrap()));
        }
        let steps_broken: BTreeSet<StepId> = broken.iter().map(|n| StepId::parse(&format!("S{n}")).unwrap()).collect();
        for ex in &examples {
            prop_assert!(!steps_broken.contains(&ex.provenance.step));
        }
    }
}
