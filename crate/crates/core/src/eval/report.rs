use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{pass_at_k, CompletionSample, EvalProblem, GradingRecord, Suite};
use crate::validate::normalize_score;

/// Rounds half away from zero to two decimals. The value is first snapped to
/// 1e-9 so that decimal inputs such as 0.435 round the way they read.
pub fn round_half_up_2(x: f64) -> f64 {
    let v = (x * 1e9).round() as i64;
    let cents = (v.abs() + 5_000_000) / 10_000_000;
    (cents * v.signum()) as f64 / 100.0
}

pub fn display2(x: f64) -> String {
    format!("{:.2}", round_half_up_2(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub name: String,
    pub problems: usize,
    pub mean_pass_rate: f64,
    /// Problems judged only for syntax.
    pub weak_judge_problems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub groups: Vec<GroupResult>,
    /// Unweighted mean of the group means.
    pub average: f64,
    pub pass_at_k: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKResult {
    pub problem_id: String,
    pub n: usize,
    pub c: usize,
    pub k: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suites: BTreeMap<String, SuiteResult>,
    /// Mean of per-problem estimates over all problems, keyed by k.
    pub pass_at_k: BTreeMap<String, f64>,
    /// Normalized score per grading set.
    pub grading: BTreeMap<String, f64>,
    pub per_problem: Vec<PassAtKResult>,
}

/// Map entries in numeric order of their k keys.
fn by_k(m: &BTreeMap<String, f64>) -> Vec<(&str, f64)> {
    let mut v: Vec<(&str, f64)> = m.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    v.sort_by_key(|(k, _)| k.parse::<usize>().unwrap_or(usize::MAX));
    v
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Builds the report. Groups keep their first-appearance order, except nyu1
/// difficulties which are listed Basic, Intermediate, Advanced.
pub fn aggregate_report(problems: &[EvalProblem], samples: &[CompletionSample], gradings: &[GradingRecord], ks: &[usize]) -> Report {
    let mut by_problem: BTreeMap<&str, (usize, usize, bool)> = BTreeMap::new();
    for s in samples {
        let e = by_problem.entry(s.problem_id.as_str()).or_default();
        e.0 += 1;
        e.1 += usize::from(s.passed);
        e.2 |= s.weak_judge;
    }

    let mut per_problem = Vec::new();
    let mut suites: BTreeMap<Suite, Vec<&EvalProblem>> = BTreeMap::new();
    for p in problems {
        suites.entry(p.suite).or_default().push(p);
    }
    let mut all_est: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut suite_results = BTreeMap::new();
    for (suite, probs) in suites {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        let mut suite_est: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut sorted = probs.clone();
        if suite == Suite::Nyu1 {
            sorted.sort_by_key(|p| p.difficulty);
        }
        for p in sorted {
            let (n, c, weak) = by_problem.get(p.problem_id.as_str()).copied().unwrap_or_default();
            let g = p.group();
            if !groups.contains_key(&g) {
                order.push(g.clone());
            }
            let e = groups.entry(g).or_default();
            e.0.push(if n == 0 { 0.0 } else { c as f64 / n as f64 });
            e.1 += usize::from(weak);
            for &k in ks {
                if let Ok(est) = pass_at_k(n, c, k) {
                    suite_est.entry(k).or_default().push(est);
                    all_est.entry(k).or_default().push(est);
                    per_problem.push(PassAtKResult { problem_id: p.problem_id.clone(), n, c, k, estimate: est });
                }
            }
        }
        let groups: Vec<GroupResult> = order
            .iter()
            .map(|name| {
                let (rates, weak) = &groups[name];
                GroupResult { name: name.clone(), problems: rates.len(), mean_pass_rate: mean(rates), weak_judge_problems: *weak }
            })
            .collect();
        let average = mean(&groups.iter().map(|g| g.mean_pass_rate).collect::<Vec<_>>());
        let pass_at_k = suite_est.into_iter().map(|(k, v)| (k.to_string(), mean(&v))).collect();
        suite_results.insert(suite.name().to_string(), SuiteResult { groups, average, pass_at_k });
    }

    let mut sets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for g in gradings.iter().filter(|g| g.valid) {
        sets.entry(g.set.clone()).or_default().push(g.teacher_score);
    }
    let grading = sets.into_iter().map(|(k, v)| (k, normalize_score(mean(&v), 5.0).unwrap_or(0.0))).collect();

    Report {
        suites: suite_results,
        pass_at_k: all_est.into_iter().map(|(k, v)| (k.to_string(), mean(&v))).collect(),
        grading,
        per_problem,
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, suite) in &self.suites {
            let width = suite.groups.iter().map(|g| g.name.len()).max().unwrap_or(5).max(7);
            let _ = writeln!(s, "Suite {name}");
            let _ = writeln!(s, "{:<width$}  {:>8}  {:>9}", "Group", "Problems", "Pass rate");
            for g in &suite.groups {
                let flag = if g.weak_judge_problems > 0 { "  (weak judge)" } else { "" };
                let _ = writeln!(s, "{:<width$}  {:>8}  {:>9}{flag}", g.name, g.problems, display2(g.mean_pass_rate));
            }
            let _ = writeln!(s, "{:<width$}  {:>8}  {:>9}", "Average", "", display2(suite.average));
            for (k, v) in by_k(&suite.pass_at_k) {
                let _ = writeln!(s, "{:<width$}  {:>8}  {:>9}", format!("pass@{k}"), "", display2(v));
            }
            s.push('\n');
        }
        if !self.grading.is_empty() {
            let _ = writeln!(s, "Grading");
            for (set, v) in &self.grading {
                let _ = writeln!(s, "{set:<24}  {}", display2(*v));
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("table,suite,row,value,display\n");
        let esc = |x: &str| if x.contains(',') || x.contains('"') { format!("\"{}\"", x.replace('"', "\"\"")) } else { x.to_string() };
        for (name, suite) in &self.suites {
            for g in &suite.groups {
                let _ = writeln!(s, "group,{name},{},{},{}", esc(&g.name), g.mean_pass_rate, display2(g.mean_pass_rate));
            }
            let _ = writeln!(s, "group,{name},Average,{},{}", suite.average, display2(suite.average));
            for (k, v) in by_k(&suite.pass_at_k) {
                let _ = writeln!(s, "pass_at_k,{name},{k},{v},{}", display2(v));
            }
        }
        for (k, v) in by_k(&self.pass_at_k) {
            let _ = writeln!(s, "pass_at_k,all,{k},{v},{}", display2(v));
        }
        for (set, v) in &self.grading {
            let _ = writeln!(s, "grading,all,{},{v},{}", esc(set), display2(*v));
        }
        s
    }
}
