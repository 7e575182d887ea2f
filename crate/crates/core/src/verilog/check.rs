use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::diag::{codes, Diagnostic, Severity};
use super::parser::parse_source;
use super::scope::{build_scope, Scope, SignalKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub record_id: String,
    pub verdict: Verdict,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn from_diagnostics(record_id: impl Into<String>, mut diagnostics: Vec<Diagnostic>) -> Self {
        diagnostics.sort_by_key(|d| (d.line, d.col, d.severity));
        let verdict = if diagnostics.iter().any(Diagnostic::is_error) { Verdict::Rejected } else { Verdict::Accepted };
        Self { record_id: record_id.into(), verdict, diagnostics }
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    pub fn error_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error).count()
    }

    pub fn warning_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning).count()
    }
}

/// Lexes, parses and resolves `source`. Warnings never reject.
pub fn check_syntax(source: &str) -> ValidationReport {
    let diags = match parse_source(source) {
        Ok(file) => check_file(&file),
        Err(errs) => errs,
    };
    ValidationReport::from_diagnostics("", diags)
}

/// Resolution and typing checks over a parsed file.
pub fn check_file(file: &SourceFile) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    for m in &file.modules {
        if !seen.insert(m.name.name.as_str()) {
            diags.push(Diagnostic::error(codes::DUPLICATE, m.name.span, format!("duplicate module '{}'", m.name.name)));
        }
    }
    for m in &file.modules {
        check_module(file, m, &mut diags);
    }
    diags
}

struct ModuleChecker<'a> {
    file: &'a SourceFile,
    scope: Scope,
    diags: Vec<Diagnostic>,
    used: HashSet<String>,
}

impl ModuleChecker<'_> {
    fn read(&mut self, e: &Expr) {
        let mut names = Vec::new();
        e.referenced_names(&mut names);
        for n in names {
            if n.name.starts_with('$') {
                continue;
            }
            if !self.scope.is_declared(&n.name) {
                self.diags.push(Diagnostic::error(codes::UNDECLARED, n.span, format!("undeclared identifier '{}'", n.name)));
            } else {
                self.used.insert(n.name.clone());
            }
        }
        self.syscalls(e);
    }

    fn syscalls(&mut self, e: &Expr) {
        match e {
            Expr::SysCall { name, args } => {
                if !matches!(name.name.as_str(), "$signed" | "$unsigned" | "$clog2" | "$time" | "$random" | "$realtime" | "$stime") {
                    self.diags.push(Diagnostic::warning(codes::UNSUPPORTED, name.span, format!("unknown system function '{}'", name.name)));
                }
                args.iter().for_each(|a| self.syscalls(a));
            }
            Expr::Unary { operand, .. } => self.syscalls(operand),
            Expr::Binary { lhs, rhs, .. } => {
                self.syscalls(lhs);
                self.syscalls(rhs);
            }
            Expr::Ternary { cond, then_expr, else_expr, .. } => {
                self.syscalls(cond);
                self.syscalls(then_expr);
                self.syscalls(else_expr);
            }
            Expr::Concat(items, _) => items.iter().for_each(|i| self.syscalls(i)),
            _ => {}
        }
    }

    /// Checks an assignment target. `procedural` selects reg vs net rules.
    fn write(&mut self, lhs: &Expr, procedural: bool) {
        if !lhs.is_lvalue() {
            self.diags.push(Diagnostic::error(codes::SYNTAX, lhs.span(), "invalid assignment target"));
            return;
        }
        // Index expressions in the target are reads.
        match lhs {
            Expr::Index { index, .. } => self.read(index),
            Expr::Slice { msb, lsb, .. } => {
                self.read(msb);
                self.read(lsb);
            }
            Expr::Concat(items, _) => {
                for i in items {
                    self.write(i, procedural);
                }
                return;
            }
            _ => {}
        }
        let mut targets = Vec::new();
        lhs.target_names(&mut targets);
        for t in targets {
            if self.scope.param(&t.name).is_some() {
                self.diags.push(Diagnostic::error(codes::ASSIGN_KIND, t.span, format!("cannot assign to parameter '{}'", t.name)));
                continue;
            }
            let Some(sig) = self.scope.signal(&t.name) else {
                self.diags.push(Diagnostic::error(codes::UNDECLARED, t.span, format!("undeclared identifier '{}'", t.name)));
                continue;
            };
            self.used.insert(t.name.clone());
            if sig.direction == Some(Direction::Input) {
                self.diags.push(Diagnostic::error(codes::ASSIGN_KIND, t.span, format!("assignment to input '{}'", t.name)));
            } else if procedural && !sig.is_variable() {
                self.diags.push(Diagnostic::error(
                    codes::ASSIGN_KIND,
                    t.span,
                    format!("procedural assignment to net '{}' (declare it as reg)", t.name),
                ));
            } else if !procedural && sig.is_variable() {
                self.diags.push(Diagnostic::error(
                    codes::ASSIGN_KIND,
                    t.span,
                    format!("continuous assignment to reg '{}'", t.name),
                ));
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Block { stmts, .. } => stmts.iter().for_each(|st| self.stmt(st)),
            Stmt::If { cond, then_branch, else_branch } => {
                self.read(cond);
                self.stmt(then_branch);
                if let Some(e) = else_branch {
                    self.stmt(e);
                }
            }
            Stmt::Case { expr, arms, default, .. } => {
                self.read(expr);
                for arm in arms {
                    arm.labels.iter().for_each(|l| self.read(l));
                    self.stmt(&arm.body);
                }
                if let Some(d) = default {
                    self.stmt(d);
                }
            }
            Stmt::Blocking { lhs, rhs, .. } | Stmt::NonBlocking { lhs, rhs, .. } => {
                self.read(rhs);
                self.write(lhs, true);
            }
            Stmt::For { init, cond, step, body } => {
                self.stmt(init);
                self.read(cond);
                self.stmt(step);
                self.stmt(body);
            }
            Stmt::While { cond, body } => {
                self.read(cond);
                self.stmt(body);
            }
            Stmt::Repeat { count, body } => {
                self.read(count);
                self.stmt(body);
            }
            Stmt::Forever(body) => self.stmt(body),
            Stmt::Delay { amount, stmt } => {
                self.read(amount);
                if let Some(s) = stmt {
                    self.stmt(s);
                }
            }
            Stmt::Event { sensitivity, stmt } => {
                self.sensitivity(sensitivity);
                if let Some(s) = stmt {
                    self.stmt(s);
                }
            }
            Stmt::SystemCall { args, .. } => args.iter().for_each(|a| self.read(a)),
            Stmt::Null => {}
        }
    }

    fn sensitivity(&mut self, s: &Sensitivity) {
        if let Sensitivity::List(items) = s {
            for i in items {
                self.read(&Expr::Ident(i.signal.clone()));
            }
        }
    }

    fn instance(&mut self, inst: &Instance) {
        // Undeclared simple identifiers in port connections become implicit 1-bit nets.
        for c in &inst.connections {
            let expr = match c {
                Connection::Named { expr: Some(e), .. } | Connection::Positional(e) => e,
                _ => continue,
            };
            if let Expr::Ident(id) = expr {
                if !self.scope.is_declared(&id.name) {
                    self.diags.push(Diagnostic::warning(codes::IMPLICIT_NET, id.span, format!("implicit net '{}'", id.name)));
                    self.scope.add_implicit_net(&id.name, id.span);
                }
            }
            self.read(expr);
        }
        for c in &inst.params {
            match c {
                Connection::Named { expr: Some(e), .. } | Connection::Positional(e) => self.read(e),
                _ => {}
            }
        }
        let Some(target) = self.file.module(&inst.module.name) else {
            self.diags.push(Diagnostic::warning(
                codes::UNRESOLVED_MODULE,
                inst.module.span,
                format!("module '{}' is not defined in this file", inst.module.name),
            ));
            return;
        };
        let (tscope, _) = build_scope(target, &HashMap::new());
        let positional = inst.connections.iter().filter(|c| matches!(c, Connection::Positional(_))).count();
        if positional > 0 && positional != inst.connections.len() {
            self.diags.push(Diagnostic::error(codes::INSTANCE, inst.name.span, "cannot mix named and positional connections"));
        }
        if positional > tscope.port_order.len() {
            self.diags.push(Diagnostic::error(
                codes::INSTANCE,
                inst.name.span,
                format!("too many connections for module '{}' ({} > {})", inst.module.name, positional, tscope.port_order.len()),
            ));
        }
        let mut seen = HashSet::new();
        for c in &inst.connections {
            if let Connection::Named { port, .. } = c {
                if !tscope.port_order.contains(&port.name) {
                    self.diags.push(Diagnostic::error(
                        codes::INSTANCE,
                        port.span,
                        format!("module '{}' has no port '{}'", inst.module.name, port.name),
                    ));
                } else if !seen.insert(port.name.as_str()) {
                    self.diags.push(Diagnostic::error(codes::INSTANCE, port.span, format!("port '{}' connected twice", port.name)));
                }
            }
        }
        for c in &inst.params {
            if let Connection::Named { port, .. } = c {
                if tscope.param(&port.name).is_none_or(|p| p.local) {
                    self.diags.push(Diagnostic::error(
                        codes::INSTANCE,
                        port.span,
                        format!("module '{}' has no parameter '{}'", inst.module.name, port.name),
                    ));
                }
            }
        }
    }
}

fn check_module(file: &SourceFile, m: &Module, out: &mut Vec<Diagnostic>) {
    let (scope, scope_diags) = build_scope(m, &HashMap::new());
    let mut ck = ModuleChecker { file, scope, diags: scope_diags, used: HashSet::new() };

    for item in &m.items {
        match item {
            Item::Port(_) | Item::Param(_) => {}
            Item::Net(n) => {
                for d in &n.names {
                    if let Some(init) = &d.init {
                        ck.read(init);
                        ck.used.insert(d.name.name.clone());
                    }
                }
                if let Some(r) = &n.range {
                    ck.read(&r.msb);
                    ck.read(&r.lsb);
                }
            }
            Item::Assign(a) => {
                ck.read(&a.rhs);
                ck.write(&a.lhs, false);
                if let (Some(lw), Some(rw)) = (ck.scope.self_width(&a.lhs), ck.scope.self_width(&a.rhs)) {
                    let unsized_literal = matches!(&a.rhs, Expr::Number(n, _) if n.width.is_none());
                    if rw > lw && !unsized_literal {
                        ck.diags.push(Diagnostic::warning(
                            codes::WIDTH,
                            a.span,
                            format!("width mismatch: {rw}-bit value truncated to {lw} bits"),
                        ));
                    }
                }
            }
            Item::Always(a) => {
                if let Some(s) = &a.sensitivity {
                    ck.sensitivity(s);
                }
                ck.stmt(&a.body);
            }
            Item::Initial(s) => ck.stmt(s),
            Item::Instance(inst) => ck.instance(inst),
            Item::Gate(g) => {
                ck.write(&g.terminals[0], false);
                for t in &g.terminals[1..] {
                    ck.read(t);
                }
            }
        }
    }

    for sig in &ck.scope.signals {
        if sig.direction.is_none() && !sig.implicit && !ck.used.contains(&sig.name) {
            out_warning_unused(&mut ck.diags, sig.span, &sig.name, sig.kind);
        }
    }
    out.append(&mut ck.diags);
}

fn out_warning_unused(diags: &mut Vec<Diagnostic>, span: Span, name: &str, kind: SignalKind) {
    let what = match kind {
        SignalKind::Net => "net",
        SignalKind::Reg => "reg",
        SignalKind::Integer => "integer",
    };
    diags.push(Diagnostic::warning(codes::UNUSED, span, format!("{what} '{name}' is never used")));
}
