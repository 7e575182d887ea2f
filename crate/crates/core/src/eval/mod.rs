//! Benchmark loading, sampling, judging, pass@k, teacher grading and reports.

mod report;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Message, Request};
use crate::util::{extract_code, first_number_in};
use crate::verilog::eval::{split_vector, Circuit};
use crate::verilog::{check_syntax, extract_interface, parse_source};
pub use report::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Nyu1,
    Nyu2,
    External,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Nyu1 => "nyu1",
            Suite::Nyu2 => "nyu2",
            Suite::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Basic,
    Intermediate,
    Advanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    TruthTable,
    SyntaxOnly,
    ExternalTb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalProblem {
    pub problem_id: String,
    pub suite: Suite,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub prompt: String,
    pub reference_solution: String,
    pub judge_mode: JudgeMode,
}

impl EvalProblem {
    /// Reporting group: difficulty for nyu1, category otherwise.
    pub fn group(&self) -> String {
        match (&self.difficulty, &self.category) {
            (Some(d), _) if self.suite == Suite::Nyu1 => format!("{d:?}"),
            (_, Some(c)) => c.clone(),
            (Some(d), None) => format!("{d:?}"),
            (None, None) => "all".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },
    #[error("{0}: no problems")]
    Empty(String),
    #[error("k={k} exceeds n={n}")]
    KExceedsN { n: usize, k: usize },
    #[error("invalid pass@k arguments n={n} c={c} k={k}")]
    InvalidArgs { n: usize, c: usize, k: usize },
}

/// Loads a benchmark JSONL file. Problem order is file order.
pub fn load_benchmark(path: &Path, suite: Option<Suite>) -> Result<Vec<EvalProblem>, EvalError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io { path: p.clone(), message: e.to_string() })?;
    parse_benchmark(&text, &p, suite)
}

pub fn parse_benchmark(text: &str, path: &str, suite: Option<Suite>) -> Result<Vec<EvalProblem>, EvalError> {
    let schema = |line: usize, message: String| EvalError::Schema { path: path.to_string(), line, message };
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let prob: EvalProblem = serde_json::from_str(line).map_err(|e| schema(n, e.to_string()))?;
        if let Some(s) = suite {
            if prob.suite != s {
                return Err(schema(n, format!("expected suite {}, found {}", s.name(), prob.suite.name())));
            }
        }
        match prob.suite {
            Suite::Nyu1 if prob.difficulty.is_none() => return Err(schema(n, "nyu1 problems need a difficulty".into())),
            Suite::Nyu2 if prob.category.is_none() => return Err(schema(n, "nyu2 problems need a category".into())),
            _ => {}
        }
        if prob.problem_id.is_empty() {
            return Err(schema(n, "empty problem_id".into()));
        }
        if !ids.insert(prob.problem_id.clone()) {
            return Err(schema(n, format!("duplicate problem_id '{}'", prob.problem_id)));
        }
        out.push(prob);
    }
    if out.is_empty() {
        return Err(EvalError::Empty(path.to_string()));
    }
    Ok(out)
}

/// Unbiased pass@k, `1 - C(n-c, k) / C(n, k)`, as a running product.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, EvalError> {
    if k > n {
        return Err(EvalError::KExceedsN { n, k });
    }
    if k == 0 || c > n {
        return Err(EvalError::InvalidArgs { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut prod = 1.0;
    for i in (n - c + 1)..=n {
        prod *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - prod)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSample {
    pub problem_id: String,
    pub sample_index: usize,
    pub text: String,
    pub temperature: f64,
    pub passed: bool,
    pub fail_reason: Option<String>,
    /// Set when the judge could only check syntax.
    #[serde(default)]
    pub weak_judge: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_diff: Option<String>,
}

/// Requests `n` completions in index order. A failed request yields a
/// sample that failed with reason `backend_error`.
pub fn sample_completions(problem: &EvalProblem, backend: &dyn Backend, n: usize, temperature: f64, seed: u64) -> Vec<CompletionSample> {
    (0..n)
        .map(|i| {
            let req = Request {
                key: problem.problem_id.clone(),
                step: "sample".into(),
                turn: i as u32,
                messages: vec![Message::user(format!("{}\n\n(seed {seed}, sample {i})", problem.prompt))],
                temperature: Some(temperature),
            };
            match backend.complete(&req) {
                Ok(text) => CompletionSample {
                    problem_id: problem.problem_id.clone(),
                    sample_index: i,
                    text,
                    temperature,
                    passed: false,
                    fail_reason: None,
                    weak_judge: false,
                    first_diff: None,
                },
                Err(e) => {
                    log::debug!("{} sample {i}: {e}", problem.problem_id);
                    CompletionSample {
                        problem_id: problem.problem_id.clone(),
                        sample_index: i,
                        text: String::new(),
                        temperature,
                        passed: false,
                        fail_reason: Some("backend_error".into()),
                        weak_judge: false,
                        first_diff: None,
                    }
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub passed: bool,
    pub reason: Option<String>,
    pub weak: bool,
    /// First differing input vector, as `name=value` pairs.
    pub first_diff: Option<String>,
}

impl Judgement {
    fn pass(weak: bool) -> Self {
        Self { passed: true, reason: None, weak, first_diff: None }
    }

    fn fail(reason: &str, weak: bool) -> Self {
        Self { passed: false, reason: Some(reason.into()), weak, first_diff: None }
    }
}

/// Judges one completion. Truth-table problems compare the sample's module of
/// the same name (else its top module) with the reference's top module on
/// every input vector; if the reference cannot be evaluated exhaustively the
/// judge falls back to syntax.
pub fn judge(problem: &EvalProblem, sample_text: &str, max_input_bits: u32) -> Judgement {
    let code = extract_code(sample_text);
    if !check_syntax(&code).accepted() {
        return Judgement::fail("syntax", problem.judge_mode != JudgeMode::TruthTable);
    }
    if problem.judge_mode != JudgeMode::TruthTable {
        return Judgement::pass(true);
    }
    let (Ok(reference), Ok(candidate)) = (parse_source(&problem.reference_solution), parse_source(&code)) else {
        return Judgement::fail("syntax", false);
    };
    let Some(rm) = reference.top() else {
        return Judgement::fail("no_module", false);
    };
    let Some(cm) = candidate.module(&rm.name.name).or_else(|| candidate.top()) else {
        return Judgement::fail("no_module", false);
    };
    let ref_circuit = match Circuit::elaborate(&reference, &rm.name.name) {
        Ok(c) if c.input_bits() <= max_input_bits => c,
        _ => return Judgement::pass(true),
    };
    let same_iface = match (extract_interface(&reference, &rm.name.name), extract_interface(&candidate, &cm.name.name)) {
        (Ok(a), Ok(b)) => a.ports == b.ports,
        _ => false,
    };
    if !same_iface {
        return Judgement::fail("interface_mismatch", false);
    }
    let cand_circuit = match Circuit::elaborate(&candidate, &cm.name.name) {
        Ok(c) => c,
        Err(e) => return Judgement::fail(&format!("not_evaluable: {e}"), false),
    };
    let inputs = ref_circuit.input_ports();
    for v in 0..1u64 << ref_circuit.input_bits() {
        let values = split_vector(&inputs, v);
        let expected = ref_circuit.eval_vector(&values);
        let got = cand_circuit.eval_vector(&values);
        match (expected, got) {
            (Ok(a), Ok(b)) if a == b => continue,
            (Ok(_), Err(e)) => return Judgement::fail(&format!("not_evaluable: {e}"), false),
            (Err(_), _) => return Judgement::pass(true),
            _ => {
                let diff = inputs.iter().zip(&values).map(|(p, v)| format!("{}={v}", p.name)).collect::<Vec<_>>().join(",");
                return Judgement { passed: false, reason: Some("mismatch".into()), weak: false, first_diff: Some(diff) };
            }
        }
    }
    Judgement::pass(false)
}

pub fn judge_sample(problem: &EvalProblem, sample: &mut CompletionSample, max_input_bits: u32) {
    if sample.fail_reason.as_deref() == Some("backend_error") {
        return;
    }
    let j = judge(problem, &sample.text, max_input_bits);
    sample.passed = j.passed;
    sample.fail_reason = j.reason;
    sample.weak_judge = j.weak;
    sample.first_diff = j.first_diff;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    pub rubric_id: String,
    pub template: String,
}

impl Rubric {
    /// Default rubric: detailed description, code quality and correctness.
    pub fn default_hdl() -> Self {
        Self {
            rubric_id: "hdl-quality".into(),
            template: include_str!("../../templates/grade.txt").to_string(),
        }
    }

    pub fn render(&self, artifact: &str) -> String {
        self.template.replace("{{artifact}}", artifact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingRecord {
    pub artifact_id: String,
    /// Grading set the artifact belongs to.
    pub set: String,
    pub rubric_id: String,
    pub teacher_score: f64,
    pub rationale: String,
    pub normalized: f64,
    pub valid: bool,
}

/// Asks the teacher for a 0-5 grade. One retry on an unparseable reply; after
/// that the record is marked invalid.
pub fn grade_with_teacher(artifact_id: &str, set: &str, artifact: &str, rubric: &Rubric, backend: &dyn Backend) -> GradingRecord {
    let prompt = rubric.render(artifact);
    let mut last = String::new();
    for turn in 0..2 {
        let req = Request {
            key: artifact_id.to_string(),
            step: "grade".into(),
            turn,
            messages: vec![Message::user(prompt.clone())],
            temperature: Some(0.0),
        };
        let Ok(reply) = backend.complete(&req) else { break };
        if let Some(score) = first_number_in(&reply, 0.0, 5.0) {
            return GradingRecord {
                artifact_id: artifact_id.into(),
                set: set.into(),
                rubric_id: rubric.rubric_id.clone(),
                teacher_score: score,
                rationale: reply.trim().to_string(),
                normalized: score / 5.0,
                valid: true,
            };
        }
        last = reply;
    }
    GradingRecord {
        artifact_id: artifact_id.into(),
        set: set.into(),
        rubric_id: rubric.rubric_id.clone(),
        teacher_score: 0.0,
        rationale: last.trim().to_string(),
        normalized: 0.0,
        valid: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, FnBackend};

    fn inverter() -> EvalProblem {
        EvalProblem {
            problem_id: "inv".into(),
            suite: Suite::Nyu1,
            difficulty: Some(Difficulty::Basic),
            category: None,
            prompt: "Write an inverter".into(),
            reference_solution: "module inv(input a, output y);\n  assign y = ~a;\nendmodule\n".into(),
            judge_mode: JudgeMode::TruthTable,
        }
    }

    #[test]
    fn pass_at_k_examples() {
        assert_eq!(pass_at_k(10, 10, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(10, 0, 5).unwrap(), 0.0);
        assert!((pass_at_k(10, 3, 5).unwrap() - 0.9166666666666666).abs() < 1e-12);
        assert!(matches!(pass_at_k(3, 1, 4), Err(EvalError::KExceedsN { .. })));
    }

    #[test]
    fn judge_cases() {
        let p = inverter();
        assert!(judge(&p, &p.reference_solution, 16).passed);
        let j = judge(&p, "module inv(input a, output y); assign y = a; endmodule", 16);
        assert_eq!(j.reason.as_deref(), Some("mismatch"));
        assert_eq!(j.first_diff.as_deref(), Some("a=0"));
        assert_eq!(judge(&p, "module inv(input a, output y); assign y = ; endmodule", 16).reason.as_deref(), Some("syntax"));
        assert_eq!(
            judge(&p, "module inv(input [1:0] a, output y); assign y = ~a[0]; endmodule", 16).reason.as_deref(),
            Some("interface_mismatch")
        );
        // Different module and wire names, same function.
        assert!(judge(&p, "```verilog\nmodule other(input a, output y); wire t; assign t = a; assign y = !t; endmodule\n```", 16).passed);
    }

    #[test]
    fn load_rules() {
        let line = serde_json::to_string(&inverter()).unwrap();
        assert_eq!(parse_benchmark(&line, "f", None).unwrap().len(), 1);
        assert!(matches!(parse_benchmark("", "f", None), Err(EvalError::Empty(_))));
        let dup = format!("{line}\n{line}\n");
        assert!(matches!(parse_benchmark(&dup, "f", None), Err(EvalError::Schema { line: 2, .. })));
        let bad = format!("{line}\n{{\"problem_id\": 3}}\n");
        assert!(matches!(parse_benchmark(&bad, "f", None), Err(EvalError::Schema { line: 2, .. })));
        let mut nodiff = inverter();
        nodiff.difficulty = None;
        assert!(parse_benchmark(&serde_json::to_string(&nodiff).unwrap(), "f", None).is_err());
    }

    #[test]
    fn sampling_with_short_script() {
        let b = FnBackend(|r: &Request| if r.turn < 3 { Ok(format!("s{}", r.turn)) } else { Err(BackendError::Missing("x".into())) });
        let s = sample_completions(&inverter(), &b, 5, 0.8, 7);
        assert_eq!(s.len(), 5);
        assert_eq!(s[2].text, "s2");
        assert_eq!(s[3].fail_reason.as_deref(), Some("backend_error"));
        assert_eq!(s[4].fail_reason.as_deref(), Some("backend_error"));
    }

    #[test]
    fn teacher_parse() {
        let b = FnBackend(|_: &Request| Ok("Score: 4/5 because it is tidy".to_string()));
        let g = grade_with_teacher("a", "set", "module m; endmodule", &Rubric::default_hdl(), &b);
        assert_eq!((g.teacher_score, g.normalized, g.valid), (4.0, 0.8, true));
        let b = FnBackend(|_: &Request| Ok("excellent".to_string()));
        assert!(!grade_with_teacher("a", "set", "x", &Rubric::default_hdl(), &b).valid);
    }
}
