//! Catalog-driven bug injection, detection witnesses and detection testbenches.

mod walk;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::verilog::ast::*;
use crate::verilog::check::check_file;
use crate::verilog::eval::{split_vector, Circuit, EvalError};
use crate::verilog::interface::ModuleInterface;
use crate::verilog::printer::expr_text;
use walk::{walk_module, NodeMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    BinOpSwap,
    UnaryDrop,
    RangeOffByOne,
    BlockingSwap,
    ConstFlip,
    CondInvert,
}

impl Operator {
    pub const ALL: [Operator; 6] = [
        Operator::BinOpSwap,
        Operator::UnaryDrop,
        Operator::RangeOffByOne,
        Operator::BlockingSwap,
        Operator::ConstFlip,
        Operator::CondInvert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::BinOpSwap => "BinOpSwap",
            Operator::UnaryDrop => "UnaryDrop",
            Operator::RangeOffByOne => "RangeOffByOne",
            Operator::BlockingSwap => "BlockingSwap",
            Operator::ConstFlip => "ConstFlip",
            Operator::CondInvert => "CondInvert",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Operator::BinOpSwap | Operator::CondInvert => Category::Logic,
            Operator::RangeOffByOne => Category::Width,
            Operator::UnaryDrop | Operator::ConstFlip => Category::Polarity,
            Operator::BlockingSwap => Category::TimingStyle,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Logic,
    Width,
    Polarity,
    TimingStyle,
}

/// A place where one catalog operator applies. `node_index` is the preorder
/// ordinal of the node within its module; `detail` pins the original construct
/// so a site taken from a different tree is detected as stale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSite {
    pub module: String,
    pub node_index: usize,
    pub operator: Operator,
    pub line: u32,
    pub col: u32,
    pub detail: String,
}

impl MutationSite {
    pub fn id(&self) -> String {
        format!("{}:{}:{}", self.module, self.node_index, self.operator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDescriptor {
    pub mutation: MutationSite,
    pub human_description: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortValue {
    pub name: String,
    pub width: u32,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionWitness {
    pub input_vector: Vec<PortValue>,
    pub golden_output: Vec<PortValue>,
    pub mutant_output: Vec<PortValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Detection {
    Witness(DetectionWitness),
    Equivalent,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutateError {
    #[error("stale mutation site {0}")]
    StaleSite(String),
    #[error("mutant fails syntax check: {0}")]
    InvalidMutant(String),
    #[error("undecidable by exhaustive evaluation: {0}")]
    Undecidable(EvalError),
    #[error("interface mismatch between golden and mutant")]
    InterfaceMismatch,
    #[error("empty stimulus")]
    EmptyStimulus,
}

/// Every applicable catalog site in `file`, in module order, then preorder,
/// then operator order. Sites whose mutant would not pass the checker are left out.
pub fn enumerate_mutations(file: &SourceFile) -> Vec<MutationSite> {
    let mut out = Vec::new();
    for (mi, m) in file.modules.iter().enumerate() {
        let mut scratch = m.clone();
        let mut candidates = Vec::new();
        walk_module(&mut scratch, &mut |idx, node| {
            for op in Operator::ALL {
                if let Some((span, detail)) = applicable(op, &node) {
                    candidates.push(MutationSite {
                        module: m.name.name.clone(),
                        node_index: idx,
                        operator: op,
                        line: span.line,
                        col: span.col,
                        detail,
                    });
                }
            }
        });
        for site in candidates {
            let mut trial = file.clone();
            if mutate_module(&mut trial.modules[mi], &site).is_ok() && !check_file(&trial).iter().any(|d| d.is_error()) {
                out.push(site);
            }
        }
    }
    out
}

/// Applies `site`, returning the mutant and a description of the change.
/// The input tree is left untouched.
pub fn apply_mutation(file: &SourceFile, site: &MutationSite) -> Result<(SourceFile, ErrorDescriptor), MutateError> {
    let mi = file
        .modules
        .iter()
        .position(|m| m.name.name == site.module)
        .ok_or_else(|| MutateError::StaleSite(site.id()))?;
    let mut mutant = file.clone();
    let human_description = mutate_module(&mut mutant.modules[mi], site)?;
    if let Some(d) = check_file(&mutant).into_iter().find(|d| d.is_error()) {
        return Err(MutateError::InvalidMutant(d.to_string()));
    }
    let descriptor = ErrorDescriptor { mutation: site.clone(), human_description, category: site.operator.category() };
    Ok((mutant, descriptor))
}

fn mutate_module(m: &mut Module, site: &MutationSite) -> Result<String, MutateError> {
    let mut result = None;
    walk_module(m, &mut |idx, node| {
        if idx != site.node_index || result.is_some() {
            return;
        }
        result = Some(match applicable(site.operator, &node) {
            Some((_, detail)) if detail == site.detail => Ok(rewrite(site.operator, node, site.line)),
            _ => Err(MutateError::StaleSite(site.id())),
        });
    });
    result.unwrap_or_else(|| Err(MutateError::StaleSite(site.id())))
}

fn literal_value(e: &Expr) -> Option<i64> {
    match e {
        Expr::Number(n, _) => match n.bits()? {
            (v, 0, 0) => i64::try_from(v).ok(),
            _ => None,
        },
        _ => None,
    }
}

fn swapped_binop(op: BinaryOp) -> Option<BinaryOp> {
    Some(match op {
        BinaryOp::BitAnd => BinaryOp::BitOr,
        BinaryOp::BitOr => BinaryOp::BitAnd,
        BinaryOp::Add => BinaryOp::Sub,
        BinaryOp::Sub => BinaryOp::Add,
        BinaryOp::Eq => BinaryOp::Ne,
        BinaryOp::Ne => BinaryOp::Eq,
        _ => return None,
    })
}

fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::BitAnd => "AND",
        BinaryOp::BitOr => "OR",
        BinaryOp::Add => "addition",
        BinaryOp::Sub => "subtraction",
        BinaryOp::Eq => "equality",
        BinaryOp::Ne => "inequality",
        _ => op.symbol(),
    }
}

fn one_bit_literal(e: &Expr) -> Option<u64> {
    match e {
        Expr::Number(n, _) if n.width == Some(1) => match n.bits()? {
            (v, 0, 0) => Some(v),
            _ => None,
        },
        _ => None,
    }
}

/// The msb after shrinking one step toward lsb, when the range is literal and
/// at least two bits wide.
fn shrunk_msb(msb: &Expr, lsb: &Expr) -> Option<(i64, i64)> {
    let (hi, lo) = (literal_value(msb)?, literal_value(lsb)?);
    match hi.cmp(&lo) {
        std::cmp::Ordering::Greater => Some((hi, hi - 1)),
        std::cmp::Ordering::Less => Some((hi, hi + 1)),
        std::cmp::Ordering::Equal => None,
    }
}

fn applicable(op: Operator, node: &NodeMut<'_>) -> Option<(Span, String)> {
    match (op, node) {
        (Operator::BinOpSwap, NodeMut::Expr(Expr::Binary { op, span, .. })) => {
            let to = swapped_binop(*op)?;
            Some((*span, format!("{}->{}", op.symbol(), to.symbol())))
        }
        (Operator::UnaryDrop, NodeMut::Expr(Expr::Unary { op: UnaryOp::BitNot, operand, span })) => {
            Some((*span, format!("~{}", expr_text(operand))))
        }
        (Operator::RangeOffByOne, NodeMut::Range(r)) => {
            let (from, to) = shrunk_msb(&r.msb, &r.lsb)?;
            Some((r.msb.span(), format!("[{from}:..]->[{to}:..]")))
        }
        (Operator::RangeOffByOne, NodeMut::Expr(Expr::Slice { base, msb, lsb })) => {
            let (from, to) = shrunk_msb(msb, lsb)?;
            Some((base.span, format!("{}[{from}:..]->[{to}:..]", base.name)))
        }
        (Operator::BlockingSwap, NodeMut::Stmt(s, true)) => match s {
            Stmt::Blocking { lhs, span, .. } => Some((*span, format!("{} =", expr_text(lhs)))),
            Stmt::NonBlocking { lhs, span, .. } => Some((*span, format!("{} <=", expr_text(lhs)))),
            _ => None,
        },
        (Operator::ConstFlip, NodeMut::Expr(e)) => {
            let v = one_bit_literal(e)?;
            Some((e.span(), format!("{}->{}", v, v ^ 1)))
        }
        (Operator::CondInvert, NodeMut::Expr(Expr::Ternary { then_expr, else_expr, span, .. })) => {
            if then_expr == else_expr {
                None
            } else {
                Some((*span, format!("?{}:{}", expr_text(then_expr), expr_text(else_expr))))
            }
        }
        _ => None,
    }
}

fn rewrite(op: Operator, node: NodeMut<'_>, line: u32) -> String {
    match (op, node) {
        (Operator::BinOpSwap, NodeMut::Expr(Expr::Binary { op, .. })) => {
            let from = *op;
            *op = swapped_binop(from).expect("checked by applicable");
            format!("{} replaced by {} at line {line}", upper_first(op_name(from)), op_name(*op))
        }
        (Operator::UnaryDrop, NodeMut::Expr(e)) => {
            let Expr::Unary { operand, .. } = &mut *e else { unreachable!() };
            let inner = std::mem::replace(operand.as_mut(), Expr::ident("_"));
            *e = inner;
            format!("negation removed at line {line}")
        }
        (Operator::RangeOffByOne, NodeMut::Range(r)) => {
            let (from, to) = shrunk_msb(&r.msb, &r.lsb).expect("checked by applicable");
            r.msb = Expr::Number(Number::decimal(to as u64), r.msb.span());
            format!("declared range msb {from} changed to {to} at line {line}")
        }
        (Operator::RangeOffByOne, NodeMut::Expr(Expr::Slice { base, msb, lsb })) => {
            let (from, to) = shrunk_msb(msb, lsb).expect("checked by applicable");
            let span = msb.span();
            **msb = Expr::Number(Number::decimal(to as u64), span);
            format!("part-select of {} msb {from} changed to {to} at line {line}", base.name)
        }
        (Operator::BlockingSwap, NodeMut::Stmt(s, _)) => {
            let (text, new) = match std::mem::replace(s, Stmt::Null) {
                Stmt::Blocking { lhs, rhs, span } => {
                    ("blocking assignment replaced by non-blocking", Stmt::NonBlocking { lhs, rhs, span })
                }
                Stmt::NonBlocking { lhs, rhs, span } => {
                    ("non-blocking assignment replaced by blocking", Stmt::Blocking { lhs, rhs, span })
                }
                _ => unreachable!(),
            };
            *s = new;
            format!("{text} at line {line}")
        }
        (Operator::ConstFlip, NodeMut::Expr(Expr::Number(n, _))) => {
            let from = n.digits.clone();
            n.digits = if from == "0" { "1".into() } else { "0".into() };
            let old = Number { digits: from, ..n.clone() };
            format!("constant {} flipped to {} at line {line}", old.text(), n.text())
        }
        (Operator::CondInvert, NodeMut::Expr(Expr::Ternary { then_expr, else_expr, .. })) => {
            std::mem::swap(then_expr, else_expr);
            format!("conditional arms swapped at line {line}")
        }
        _ => unreachable!("rewrite called on an inapplicable node"),
    }
}

fn upper_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Compares golden and mutant exhaustively; the witness is the smallest
/// differing input vector.
pub fn verify_mutant_detectable(
    golden: &SourceFile,
    mutant: &SourceFile,
    module: &str,
    max_input_bits: u32,
) -> Result<Detection, MutateError> {
    let g = Circuit::elaborate(golden, module).map_err(MutateError::Undecidable)?;
    let m = Circuit::elaborate(mutant, module).map_err(MutateError::Undecidable)?;
    let inputs = g.input_ports();
    let outputs = g.output_ports();
    if inputs != m.input_ports() || outputs != m.output_ports() {
        return Err(MutateError::InterfaceMismatch);
    }
    let bits = g.input_bits();
    if bits > max_input_bits || bits >= 64 {
        return Err(MutateError::Undecidable(EvalError::ExhaustiveLimit { bits, limit: max_input_bits }));
    }
    for v in 0..1u64 << bits {
        let values = split_vector(&inputs, v);
        let go = g.eval_vector(&values).map_err(MutateError::Undecidable)?;
        let mo = m.eval_vector(&values).map_err(MutateError::Undecidable)?;
        if go != mo {
            let pv = |ports: &[crate::verilog::eval::PortBits], vals: &[u64]| {
                ports
                    .iter()
                    .zip(vals)
                    .map(|(p, &value)| PortValue { name: p.name.clone(), width: p.width, value })
                    .collect::<Vec<_>>()
            };
            return Ok(Detection::Witness(DetectionWitness {
                input_vector: pv(&inputs, &values),
                golden_output: pv(&outputs, &go),
                mutant_output: pv(&outputs, &mo),
            }));
        }
    }
    Ok(Detection::Equivalent)
}

/// Re-evaluates `file` at the witness inputs.
pub fn evaluate_at(file: &SourceFile, module: &str, inputs: &[PortValue]) -> Result<Vec<u64>, EvalError> {
    let c = Circuit::elaborate(file, module)?;
    c.eval_vector(&inputs.iter().map(|p| p.value).collect::<Vec<_>>())
}

fn literal(width: u32, value: u64) -> String {
    format!("{width}'d{value}")
}

fn decl_range(width: u32) -> String {
    if width > 1 {
        format!("[{}:0] ", width - 1)
    } else {
        String::new()
    }
}

/// A self-checking testbench that drives each witness vector into the module
/// under test and prints PASS or FAIL per vector.
pub fn generate_detection_testbench(iface: &ModuleInterface, witnesses: &[DetectionWitness]) -> Result<String, MutateError> {
    if witnesses.is_empty() {
        return Err(MutateError::EmptyStimulus);
    }
    let m = &iface.module_name;
    let mut s = format!("module tb_{m};\n");
    for p in iface.inputs() {
        s.push_str(&format!("  reg {}{};\n", decl_range(p.width), p.name));
    }
    for p in iface.outputs() {
        s.push_str(&format!("  wire {}{};\n", decl_range(p.width), p.name));
    }
    let conns: Vec<String> = iface
        .ports
        .iter()
        .filter(|p| p.direction != Direction::Inout)
        .map(|p| format!(".{0}({0})", p.name))
        .collect();
    s.push_str(&format!("  {m} dut({});\n", conns.join(", ")));
    s.push_str("  initial begin\n");
    for (i, w) in witnesses.iter().enumerate() {
        for p in &w.input_vector {
            s.push_str(&format!("    {} = {};\n", p.name, literal(p.width, p.value)));
        }
        s.push_str("    #1;\n");
        let checks: Vec<String> = w
            .golden_output
            .iter()
            .map(|p| format!("{} === {}", p.name, literal(p.width, p.value)))
            .collect();
        let cond = if checks.is_empty() { "1'b1".to_string() } else { checks.join(" && ") };
        s.push_str(&format!("    if ({cond}) $display(\"PASS vector {i}\"); else $display(\"FAIL vector {i}\");\n"));
    }
    s.push_str("    $finish;\n  end\nendmodule\n");
    Ok(s)
}

/// One line of the mutation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReportEntry {
    pub record_id: String,
    pub mutation_id: String,
    pub operator: Operator,
    pub line: u32,
    pub col: u32,
    pub description: String,
    /// `true`, `false`, or `"unknown"` when exhaustive evaluation is not possible.
    pub detectable: serde_json::Value,
    pub witness: Option<DetectionWitness>,
}

/// `module` and every module it instantiates, directly or not.
fn reachable_modules(file: &SourceFile, module: &str) -> Vec<String> {
    let mut seen = vec![module.to_string()];
    let mut i = 0;
    while i < seen.len() {
        if let Some(m) = file.module(&seen[i]) {
            for item in &m.items {
                if let Item::Instance(inst) = item {
                    if !seen.contains(&inst.module.name) {
                        seen.push(inst.module.name.clone());
                    }
                }
            }
        }
        i += 1;
    }
    seen
}

/// Enumerates, applies and verifies every catalog mutation of `module` and
/// the modules below it; detection is always judged at `module`.
pub fn mutation_report(record_id: &str, file: &SourceFile, module: &str, max_input_bits: u32) -> Vec<MutationReportEntry> {
    let scope = reachable_modules(file, module);
    enumerate_mutations(file)
        .into_iter()
        .filter(|s| scope.contains(&s.module))
        .filter_map(|site| {
            let (mutant, desc) = apply_mutation(file, &site).ok()?;
            let (detectable, witness) = match verify_mutant_detectable(file, &mutant, module, max_input_bits) {
                Ok(Detection::Witness(w)) => (serde_json::Value::Bool(true), Some(w)),
                Ok(Detection::Equivalent) => (serde_json::Value::Bool(false), None),
                Err(_) => (serde_json::Value::String("unknown".into()), None),
            };
            Some(MutationReportEntry {
                record_id: record_id.to_string(),
                mutation_id: site.id(),
                operator: site.operator,
                line: site.line,
                col: site.col,
                description: desc.human_description,
                detectable,
                witness,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verilog::check::check_syntax;
    use crate::verilog::interface::extract_interface;
    use crate::verilog::parser::parse_source;
    use crate::verilog::printer::pretty_print;

    const INV: &str = "module inv(input a, output y);\n  assign y = ~a;\nendmodule\n";

    #[test]
    fn report_covers_instantiated_modules() {
        let src = "module leaf(input a, output y);\n  assign y = ~a;\nendmodule\nmodule unused(input a, output y);\n  assign y = ~a;\nendmodule\nmodule top(input a, output y);\n  leaf u(.a(a), .y(y));\nendmodule\n";
        let f = parse_source(src).unwrap();
        let report = mutation_report("r", &f, "top", 8);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].mutation_id, "leaf:1:UnaryDrop");
        assert_eq!(report[0].detectable, serde_json::Value::Bool(true));
    }

    #[test]
    fn inverter_unary_drop() {
        let f = parse_source(INV).unwrap();
        let sites = enumerate_mutations(&f);
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].operator, Operator::UnaryDrop);
        let (mutant, desc) = apply_mutation(&f, &sites[0]).unwrap();
        assert_eq!(desc.human_description, "negation removed at line 2");
        assert!(pretty_print(&mutant).contains("assign y = a;"));
        assert_eq!(f, parse_source(INV).unwrap());
        let Detection::Witness(w) = verify_mutant_detectable(&f, &mutant, "inv", 16).unwrap() else { panic!() };
        assert_eq!(w.input_vector[0].value, 0);
        assert_eq!(w.golden_output[0].value, 1);
        assert_eq!(w.mutant_output[0].value, 0);
    }

    #[test]
    fn and_to_or_witness() {
        let f = parse_source("module g(input a, b, output y); assign y = a & b; endmodule").unwrap();
        let sites = enumerate_mutations(&f);
        assert_eq!(sites[0].operator, Operator::BinOpSwap);
        let (mutant, desc) = apply_mutation(&f, &sites[0]).unwrap();
        assert!(desc.human_description.starts_with("AND replaced by OR at line 1"));
        let Detection::Witness(w) = verify_mutant_detectable(&f, &mutant, "g", 16).unwrap() else { panic!() };
        let ins: Vec<u64> = w.input_vector.iter().map(|p| p.value).collect();
        assert_eq!(ins, vec![0, 1]);
    }

    #[test]
    fn no_operators_no_sites() {
        let f = parse_source("module b(input a, output y); assign y = a; endmodule").unwrap();
        assert!(enumerate_mutations(&f).is_empty());
        let f = parse_source("module e; endmodule").unwrap();
        assert!(enumerate_mutations(&f).is_empty());
    }

    #[test]
    fn blocking_swap_only_in_clocked_blocks() {
        let f = parse_source("module d(input clk, a, output reg b); always @(posedge clk) b = a; endmodule").unwrap();
        let sites = enumerate_mutations(&f);
        assert_eq!(sites.len(), 1);
        let (mutant, _) = apply_mutation(&f, &sites[0]).unwrap();
        assert!(pretty_print(&mutant).contains("b <= a;"));
        let err = verify_mutant_detectable(&f, &mutant, "d", 16).unwrap_err();
        assert!(err.to_string().starts_with("undecidable by exhaustive evaluation"));
        let f = parse_source("module c(input a, output reg b); always @* b = a; endmodule").unwrap();
        assert!(enumerate_mutations(&f).is_empty());
    }

    #[test]
    fn mux_cond_invert_is_valid() {
        let f = parse_source("module mux(input s, a, b, output y); assign y = s ? b : a; endmodule").unwrap();
        let site = enumerate_mutations(&f).into_iter().find(|s| s.operator == Operator::CondInvert).unwrap();
        let (mutant, _) = apply_mutation(&f, &site).unwrap();
        assert!(check_syntax(&pretty_print(&mutant)).accepted());
    }

    #[test]
    fn stale_site_rejected() {
        let f = parse_source(INV).unwrap();
        let site = enumerate_mutations(&f).remove(0);
        let (mutant, _) = apply_mutation(&f, &site).unwrap();
        assert!(matches!(apply_mutation(&mutant, &site), Err(MutateError::StaleSite(_))));
    }

    #[test]
    fn testbench_for_inverter() {
        let f = parse_source(INV).unwrap();
        let site = enumerate_mutations(&f).remove(0);
        let (mutant, _) = apply_mutation(&f, &site).unwrap();
        let Detection::Witness(w) = verify_mutant_detectable(&f, &mutant, "inv", 16).unwrap() else { panic!() };
        let iface = extract_interface(&f, "inv").unwrap();
        let tb = generate_detection_testbench(&iface, &[w.clone(), w]).unwrap();
        assert!(tb.contains("a = 1'd0;"));
        assert!(tb.contains("y === 1'd1"));
        assert_eq!(tb.matches("$display(\"PASS").count(), 2);
        assert!(check_syntax(&tb).accepted(), "{tb}");
        assert_eq!(generate_detection_testbench(&iface, &[]), Err(MutateError::EmptyStimulus));
    }
}
