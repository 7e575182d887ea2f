//! Per-module symbol table: ports, nets, registers and elaborated parameters.

use std::collections::HashMap;

use super::ast::*;
use super::diag::{codes, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Net,
    Reg,
    Integer,
}

#[derive(Debug, Clone)]
pub struct Signal {
    pub name: String,
    pub direction: Option<Direction>,
    pub kind: SignalKind,
    pub msb: i64,
    pub lsb: i64,
    pub signed: bool,
    pub span: Span,
    pub implicit: bool,
}

impl Signal {
    pub fn width(&self) -> u32 {
        ((self.msb - self.lsb).unsigned_abs() + 1) as u32
    }

    /// Bit offset (0 = least significant) of declared index `i`, if in range.
    pub fn bit_offset(&self, i: i64) -> Option<u32> {
        let off = if self.msb >= self.lsb { i - self.lsb } else { self.lsb - i };
        (0..i64::from(self.width())).contains(&off).then_some(off as u32)
    }

    pub fn is_variable(&self) -> bool {
        matches!(self.kind, SignalKind::Reg | SignalKind::Integer)
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: i64,
    pub width: u32,
    pub local: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub signals: Vec<Signal>,
    pub params: Vec<Param>,
    index: HashMap<String, usize>,
    param_index: HashMap<String, usize>,
    /// Port names in header order.
    pub port_order: Vec<String>,
}

impl Scope {
    pub fn signal(&self, name: &str) -> Option<&Signal> {
        self.index.get(name).map(|&i| &self.signals[i])
    }

    pub fn signal_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.param_index.get(name).map(|&i| &self.params[i])
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.index.contains_key(name) || self.param_index.contains_key(name)
    }

    pub fn add_implicit_net(&mut self, name: &str, span: Span) {
        if self.is_declared(name) {
            return;
        }
        self.index.insert(name.to_string(), self.signals.len());
        self.signals.push(Signal {
            name: name.to_string(),
            direction: None,
            kind: SignalKind::Net,
            msb: 0,
            lsb: 0,
            signed: false,
            span,
            implicit: true,
        });
    }

    pub fn ports(&self) -> impl Iterator<Item = &Signal> {
        self.port_order.iter().filter_map(|n| self.signal(n))
    }

    /// Evaluates a constant expression over parameters.
    pub fn const_eval(&self, e: &Expr) -> Option<i64> {
        Some(match e {
            Expr::Number(n, _) => {
                let (v, x, z) = n.bits()?;
                if x != 0 || z != 0 {
                    return None;
                }
                v as i64
            }
            Expr::Ident(i) => self.param(&i.name)?.value,
            Expr::Unary { op, operand, .. } => {
                let v = self.const_eval(operand)?;
                match op {
                    UnaryOp::Plus => v,
                    UnaryOp::Neg => v.checked_neg()?,
                    UnaryOp::LogicalNot => i64::from(v == 0),
                    UnaryOp::BitNot => !v,
                    _ => return None,
                }
            }
            Expr::Binary { op, lhs, rhs, .. } => {
                let a = self.const_eval(lhs)?;
                let b = self.const_eval(rhs)?;
                match op {
                    BinaryOp::Add => a.checked_add(b)?,
                    BinaryOp::Sub => a.checked_sub(b)?,
                    BinaryOp::Mul => a.checked_mul(b)?,
                    BinaryOp::Div => a.checked_div(b)?,
                    BinaryOp::Mod => a.checked_rem(b)?,
                    BinaryOp::Pow => a.checked_pow(u32::try_from(b).ok()?)?,
                    BinaryOp::Shl | BinaryOp::AShl => a.checked_shl(u32::try_from(b).ok()?)?,
                    BinaryOp::Shr | BinaryOp::AShr => a.checked_shr(u32::try_from(b).ok()?)?,
                    BinaryOp::Lt => i64::from(a < b),
                    BinaryOp::Le => i64::from(a <= b),
                    BinaryOp::Gt => i64::from(a > b),
                    BinaryOp::Ge => i64::from(a >= b),
                    BinaryOp::Eq | BinaryOp::CaseEq => i64::from(a == b),
                    BinaryOp::Ne | BinaryOp::CaseNe => i64::from(a != b),
                    BinaryOp::BitAnd => a & b,
                    BinaryOp::BitOr => a | b,
                    BinaryOp::BitXor => a ^ b,
                    BinaryOp::BitXnor => !(a ^ b),
                    BinaryOp::LogicalAnd => i64::from(a != 0 && b != 0),
                    BinaryOp::LogicalOr => i64::from(a != 0 || b != 0),
                }
            }
            Expr::Ternary { cond, then_expr, else_expr, .. } => {
                if self.const_eval(cond)? != 0 {
                    self.const_eval(then_expr)?
                } else {
                    self.const_eval(else_expr)?
                }
            }
            Expr::SysCall { name, args } if name.name == "$clog2" && args.len() == 1 => {
                let v = self.const_eval(&args[0])?;
                if v <= 1 {
                    0
                } else {
                    64 - i64::from((v - 1).leading_zeros())
                }
            }
            _ => return None,
        })
    }

    /// Self-determined bit width of an expression, when it can be computed.
    pub fn self_width(&self, e: &Expr) -> Option<u32> {
        Some(match e {
            Expr::Number(n, _) => n.self_width(),
            Expr::Str(s, _) => 8 * s.len().max(1) as u32,
            Expr::Ident(i) => match self.signal(&i.name) {
                Some(s) => s.width(),
                None => self.param(&i.name)?.width,
            },
            Expr::Index { .. } => 1,
            Expr::Slice { msb, lsb, .. } => {
                ((self.const_eval(msb)? - self.const_eval(lsb)?).unsigned_abs() + 1) as u32
            }
            Expr::Concat(items, _) => items.iter().map(|i| self.self_width(i)).sum::<Option<u32>>()?,
            Expr::Repeat { count, items, .. } => {
                let n = u32::try_from(self.const_eval(count)?).ok()?;
                n * items.iter().map(|i| self.self_width(i)).sum::<Option<u32>>()?
            }
            Expr::Unary { op, operand, .. } => match op {
                UnaryOp::Plus | UnaryOp::Neg | UnaryOp::BitNot => self.self_width(operand)?,
                _ => 1,
            },
            Expr::Binary { op, lhs, rhs, .. } => match op {
                BinaryOp::Add
                | BinaryOp::Sub
                | BinaryOp::Mul
                | BinaryOp::Div
                | BinaryOp::Mod
                | BinaryOp::BitAnd
                | BinaryOp::BitOr
                | BinaryOp::BitXor
                | BinaryOp::BitXnor => self.self_width(lhs)?.max(self.self_width(rhs)?),
                BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr | BinaryOp::Pow => {
                    self.self_width(lhs)?
                }
                _ => 1,
            },
            Expr::Ternary { then_expr, else_expr, .. } => {
                self.self_width(then_expr)?.max(self.self_width(else_expr)?)
            }
            Expr::SysCall { name, args } => match name.name.as_str() {
                "$signed" | "$unsigned" if args.len() == 1 => self.self_width(&args[0])?,
                _ => 32,
            },
        })
    }
}

/// Builds the symbol table for `m`. `overrides` replaces non-local parameter
/// values by name (instance parameter overrides).
pub fn build_scope(m: &Module, overrides: &HashMap<String, i64>) -> (Scope, Vec<Diagnostic>) {
    let mut scope = Scope::default();
    let mut diags = Vec::new();

    let add_param = |scope: &mut Scope, diags: &mut Vec<Diagnostic>, p: &ParamDecl| {
        if scope.is_declared(&p.name.name) {
            diags.push(Diagnostic::error(codes::DUPLICATE, p.name.span, format!("duplicate declaration of '{}'", p.name.name)));
            return;
        }
        let value = match overrides.get(&p.name.name).filter(|_| !p.local) {
            Some(v) => Some(*v),
            None => scope.const_eval(&p.value),
        };
        let Some(value) = value else {
            diags.push(Diagnostic::error(
                codes::UNDECLARED,
                p.value.span(),
                format!("parameter '{}' is not a constant expression", p.name.name),
            ));
            return;
        };
        let width = match &p.range {
            Some(r) => match (scope.const_eval(&r.msb), scope.const_eval(&r.lsb)) {
                (Some(a), Some(b)) => ((a - b).unsigned_abs() + 1) as u32,
                _ => 32,
            },
            None => match &p.value {
                Expr::Number(n, _) => n.self_width(),
                _ => 32,
            },
        };
        scope.param_index.insert(p.name.name.clone(), scope.params.len());
        scope.params.push(Param { name: p.name.name.clone(), value, width, local: p.local });
    };

    for p in &m.params {
        add_param(&mut scope, &mut diags, p);
    }
    // Body parameters may be referenced by port ranges, so elaborate them first.
    for item in &m.items {
        if let Item::Param(p) = item {
            add_param(&mut scope, &mut diags, p);
        }
    }

    let eval_range = |scope: &Scope, diags: &mut Vec<Diagnostic>, r: &Option<Range>, span: Span| -> (i64, i64) {
        match r {
            None => (0, 0),
            Some(r) => match (scope.const_eval(&r.msb), scope.const_eval(&r.lsb)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    diags.push(Diagnostic::error(codes::UNDECLARED, span, "range bounds must be constant expressions"));
                    (0, 0)
                }
            },
        }
    };

    let push_signal = |scope: &mut Scope, sig: Signal| {
        scope.index.insert(sig.name.clone(), scope.signals.len());
        scope.signals.push(sig);
    };

    match &m.ports {
        PortList::Ansi(ports) => {
            for p in ports {
                let (msb, lsb) = eval_range(&scope, &mut diags, &p.range, p.span);
                for n in &p.names {
                    if scope.is_declared(&n.name) {
                        diags.push(Diagnostic::error(codes::DUPLICATE, n.span, format!("duplicate port '{}'", n.name)));
                        continue;
                    }
                    scope.port_order.push(n.name.clone());
                    push_signal(
                        &mut scope,
                        Signal {
                            name: n.name.clone(),
                            direction: Some(p.direction),
                            kind: if p.net_type == NetType::Reg { SignalKind::Reg } else { SignalKind::Net },
                            msb,
                            lsb,
                            signed: p.signed,
                            span: n.span,
                            implicit: false,
                        },
                    );
                }
            }
        }
        PortList::NonAnsi(names) => {
            for n in names {
                if scope.port_order.contains(&n.name) {
                    diags.push(Diagnostic::error(codes::DUPLICATE, n.span, format!("duplicate port '{}'", n.name)));
                    continue;
                }
                scope.port_order.push(n.name.clone());
            }
        }
    }

    for item in &m.items {
        match item {
            Item::Port(p) => {
                let (msb, lsb) = eval_range(&scope, &mut diags, &p.range, p.span);
                for n in &p.names {
                    if !scope.port_order.contains(&n.name) || matches!(m.ports, PortList::Ansi(_)) {
                        diags.push(Diagnostic::error(
                            codes::PORT,
                            n.span,
                            format!("'{}' is declared as {} but is not in the port list", n.name, p.direction.keyword()),
                        ));
                        continue;
                    }
                    if let Some(i) = scope.signal_index(&n.name) {
                        let existing = &mut scope.signals[i];
                        if existing.direction.is_some() {
                            diags.push(Diagnostic::error(codes::DUPLICATE, n.span, format!("duplicate direction for port '{}'", n.name)));
                        } else {
                            existing.direction = Some(p.direction);
                            if p.range.is_some() {
                                existing.msb = msb;
                                existing.lsb = lsb;
                            }
                            existing.signed |= p.signed;
                            if p.net_type == NetType::Reg {
                                existing.kind = SignalKind::Reg;
                            }
                        }
                        continue;
                    }
                    push_signal(
                        &mut scope,
                        Signal {
                            name: n.name.clone(),
                            direction: Some(p.direction),
                            kind: if p.net_type == NetType::Reg { SignalKind::Reg } else { SignalKind::Net },
                            msb,
                            lsb,
                            signed: p.signed,
                            span: n.span,
                            implicit: false,
                        },
                    );
                }
            }
            Item::Net(n) => {
                let (msb, lsb) = match n.kind {
                    NetKind::Integer => (31, 0),
                    _ => eval_range(&scope, &mut diags, &n.range, n.span),
                };
                let kind = match n.kind {
                    NetKind::Wire => SignalKind::Net,
                    NetKind::Reg => SignalKind::Reg,
                    NetKind::Integer => SignalKind::Integer,
                };
                for d in &n.names {
                    let name = &d.name.name;
                    if scope.param(name).is_some() {
                        diags.push(Diagnostic::error(codes::DUPLICATE, d.name.span, format!("duplicate declaration of '{name}'")));
                        continue;
                    }
                    if let Some(i) = scope.signal_index(name) {
                        let existing = &mut scope.signals[i];
                        // `output y; reg y;` pairs a non-ANSI port with its net type.
                        let pairs_with_port = existing.direction.is_some()
                            && matches!(m.ports, PortList::NonAnsi(_))
                            && existing.kind == SignalKind::Net;
                        if pairs_with_port {
                            existing.kind = kind;
                            if n.range.is_some() || n.kind == NetKind::Integer {
                                existing.msb = msb;
                                existing.lsb = lsb;
                            }
                            existing.signed |= n.signed;
                        } else {
                            diags.push(Diagnostic::error(codes::DUPLICATE, d.name.span, format!("duplicate declaration of '{name}'")));
                        }
                        continue;
                    }
                    if scope.port_order.contains(name) {
                        // Net type declared before the direction.
                        push_signal(
                            &mut scope,
                            Signal { name: name.clone(), direction: None, kind, msb, lsb, signed: n.signed, span: d.name.span, implicit: false },
                        );
                        continue;
                    }
                    push_signal(
                        &mut scope,
                        Signal { name: name.clone(), direction: None, kind, msb, lsb, signed: n.signed, span: d.name.span, implicit: false },
                    );
                }
            }
            _ => {}
        }
    }

    if let PortList::NonAnsi(names) = &m.ports {
        for n in names {
            match scope.signal(&n.name) {
                Some(s) if s.direction.is_some() => {}
                _ => diags.push(Diagnostic::error(codes::PORT, n.span, format!("port '{}' has no direction declaration", n.name))),
            }
        }
    }

    (scope, diags)
}
