use std::collections::HashSet;

use crate::verilog::ast::*;

/// A node offered to the visitor. Statements carry whether they sit in an
/// edge-triggered always block; ranges are internal (non-port) declarations.
pub enum NodeMut<'a> {
    Expr(&'a mut Expr),
    Stmt(&'a mut Stmt, bool),
    Range(&'a mut Range),
}

struct Walker<'f> {
    next: usize,
    f: &'f mut dyn FnMut(usize, NodeMut<'_>),
}

/// Visits mutable nodes of `m` in preorder, passing each node's ordinal.
pub fn walk_module(m: &mut Module, f: &mut dyn FnMut(usize, NodeMut<'_>)) {
    let ports: HashSet<String> = match &m.ports {
        PortList::Ansi(decls) => decls.iter().flat_map(|d| d.names.iter().map(|n| n.name.clone())).collect(),
        PortList::NonAnsi(names) => names.iter().map(|n| n.name.clone()).collect(),
    };
    let mut w = Walker { next: 0, f };
    for item in &mut m.items {
        match item {
            Item::Port(_) | Item::Param(_) => {}
            Item::Net(n) => {
                let internal = n.names.iter().all(|d| !ports.contains(&d.name.name));
                if let (true, Some(r)) = (internal, n.range.as_mut()) {
                    w.visit(NodeMut::Range(r));
                }
                for d in &mut n.names {
                    if let Some(init) = &mut d.init {
                        w.expr(init);
                    }
                }
            }
            Item::Assign(a) => {
                w.expr(&mut a.lhs);
                w.expr(&mut a.rhs);
            }
            Item::Always(a) => {
                let clocked = a.is_clocked();
                w.stmt(&mut a.body, clocked);
            }
            Item::Initial(s) => w.stmt(s, false),
            Item::Instance(inst) => {
                for c in &mut inst.connections {
                    match c {
                        Connection::Named { expr: Some(e), .. } | Connection::Positional(e) => w.expr(e),
                        Connection::Named { expr: None, .. } => {}
                    }
                }
            }
            Item::Gate(g) => g.terminals.iter_mut().for_each(|t| w.expr(t)),
        }
    }
}

impl Walker<'_> {
    fn visit(&mut self, node: NodeMut<'_>) {
        let idx = self.next;
        self.next += 1;
        (self.f)(idx, node);
    }

    fn expr(&mut self, e: &mut Expr) {
        self.visit(NodeMut::Expr(e));
        match e {
            Expr::Ident(_) | Expr::Number(..) | Expr::Str(..) | Expr::Slice { .. } => {}
            Expr::Index { index, .. } => self.expr(index),
            Expr::Concat(items, _) => items.iter_mut().for_each(|i| self.expr(i)),
            Expr::Repeat { items, .. } => items.iter_mut().for_each(|i| self.expr(i)),
            Expr::Unary { operand, .. } => self.expr(operand),
            Expr::Binary { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            Expr::Ternary { cond, then_expr, else_expr, .. } => {
                self.expr(cond);
                self.expr(then_expr);
                self.expr(else_expr);
            }
            Expr::SysCall { args, .. } => args.iter_mut().for_each(|a| self.expr(a)),
        }
    }

    fn stmt(&mut self, s: &mut Stmt, clocked: bool) {
        self.visit(NodeMut::Stmt(s, clocked));
        match s {
            Stmt::Block { stmts, .. } => stmts.iter_mut().for_each(|st| self.stmt(st, clocked)),
            Stmt::If { cond, then_branch, else_branch } => {
                self.expr(cond);
                self.stmt(then_branch, clocked);
                if let Some(e) = else_branch {
                    self.stmt(e, clocked);
                }
            }
            Stmt::Case { expr, arms, default, .. } => {
                self.expr(expr);
                for arm in arms {
                    arm.labels.iter_mut().for_each(|l| self.expr(l));
                    self.stmt(&mut arm.body, clocked);
                }
                if let Some(d) = default {
                    self.stmt(d, clocked);
                }
            }
            Stmt::Blocking { lhs, rhs, .. } | Stmt::NonBlocking { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            // Loop control is left alone: mutating it tends to produce
            // unbounded loops rather than interesting bugs.
            Stmt::For { body, .. } | Stmt::While { body, .. } | Stmt::Repeat { body, .. } | Stmt::Forever(body) => {
                self.stmt(body, clocked)
            }
            Stmt::Delay { stmt, .. } | Stmt::Event { stmt, .. } => {
                if let Some(st) = stmt {
                    self.stmt(st, clocked);
                }
            }
            Stmt::SystemCall { .. } | Stmt::Null => {}
        }
    }
}
