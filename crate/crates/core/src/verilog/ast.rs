//! Syntax tree for the supported Verilog subset.
//!
//! Every node that can be reported on carries a [`Span`]. Spans never take part
//! in equality: two trees compare equal when they have the same structure, which
//! is what the printer round-trip relies on.

use serde::{Deserialize, Serialize};

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Self { name: name.into(), span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceFile {
    pub modules: Vec<Module>,
}

impl SourceFile {
    /// The last module that no other module in the file instantiates.
    pub fn top(&self) -> Option<&Module> {
        let used: std::collections::HashSet<&str> = self
            .modules
            .iter()
            .flat_map(|m| m.items.iter())
            .filter_map(|i| match i {
                Item::Instance(inst) => Some(inst.module.name.as_str()),
                _ => None,
            })
            .collect();
        self.modules.iter().rev().find(|m| !used.contains(m.name.name.as_str())).or(self.modules.last())
    }

    pub fn module(&self, name: &str) -> Option<&Module> {
        self.modules.iter().find(|m| m.name.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Module {
    pub name: Ident,
    /// `#(parameter ...)` header parameters.
    pub params: Vec<ParamDecl>,
    pub ports: PortList,
    pub items: Vec<Item>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortList {
    /// `(input a, output [3:0] y)`; one entry per port name.
    Ansi(Vec<PortDecl>),
    /// `(a, y)` with directions declared in the body. Also used for `module m;`.
    NonAnsi(Vec<Ident>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetType {
    /// No explicit net keyword.
    Implicit,
    Wire,
    Reg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub direction: Direction,
    pub net_type: NetType,
    pub signed: bool,
    pub range: Option<Range>,
    pub names: Vec<Ident>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Wire,
    Reg,
    Integer,
}

impl NetKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NetKind::Wire => "wire",
            NetKind::Reg => "reg",
            NetKind::Integer => "integer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclName {
    pub name: Ident,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDecl {
    pub kind: NetKind,
    pub signed: bool,
    pub range: Option<Range>,
    pub names: Vec<DeclName>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub local: bool,
    pub signed: bool,
    pub range: Option<Range>,
    pub name: Ident,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuousAssign {
    pub lhs: Expr,
    pub rhs: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Posedge,
    Negedge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensItem {
    pub edge: Option<Edge>,
    pub signal: Ident,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sensitivity {
    /// `@*` or `@(*)`
    Star,
    List(Vec<SensItem>),
}

impl Sensitivity {
    pub fn has_edge(&self) -> bool {
        match self {
            Sensitivity::Star => false,
            Sensitivity::List(items) => items.iter().any(|i| i.edge.is_some()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlwaysBlock {
    pub sensitivity: Option<Sensitivity>,
    pub body: Stmt,
    pub span: Span,
}

impl AlwaysBlock {
    pub fn is_clocked(&self) -> bool {
        self.sensitivity.as_ref().is_some_and(Sensitivity::has_edge)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Connection {
    Named { port: Ident, expr: Option<Expr> },
    Positional(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub module: Ident,
    pub params: Vec<Connection>,
    pub name: Ident,
    pub connections: Vec<Connection>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    And,
    Or,
    Nand,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
}

impl GateKind {
    pub fn keyword(self) -> &'static str {
        match self {
            GateKind::And => "and",
            GateKind::Or => "or",
            GateKind::Nand => "nand",
            GateKind::Nor => "nor",
            GateKind::Xor => "xor",
            GateKind::Xnor => "xnor",
            GateKind::Not => "not",
            GateKind::Buf => "buf",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "and" => GateKind::And,
            "or" => GateKind::Or,
            "nand" => GateKind::Nand,
            "nor" => GateKind::Nor,
            "xor" => GateKind::Xor,
            "xnor" => GateKind::Xnor,
            "not" => GateKind::Not,
            "buf" => GateKind::Buf,
            _ => return None,
        })
    }
}

/// Gate primitive instance; the first terminal is the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub name: Option<Ident>,
    pub terminals: Vec<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Port(PortDecl),
    Net(NetDecl),
    Param(ParamDecl),
    Assign(ContinuousAssign),
    Always(AlwaysBlock),
    Initial(Stmt),
    Instance(Instance),
    Gate(Gate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

impl CaseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CaseKind::Case => "case",
            CaseKind::Casez => "casez",
            CaseKind::Casex => "casex",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseArm {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Block {
        label: Option<Ident>,
        stmts: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
    },
    Case {
        kind: CaseKind,
        expr: Expr,
        arms: Vec<CaseArm>,
        default: Option<Box<Stmt>>,
    },
    Blocking {
        lhs: Expr,
        rhs: Expr,
        span: Span,
    },
    NonBlocking {
        lhs: Expr,
        rhs: Expr,
        span: Span,
    },
    For {
        init: Box<Stmt>,
        cond: Expr,
        step: Box<Stmt>,
        body: Box<Stmt>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    Repeat {
        count: Expr,
        body: Box<Stmt>,
    },
    Forever(Box<Stmt>),
    Delay {
        amount: Expr,
        stmt: Option<Box<Stmt>>,
    },
    Event {
        sensitivity: Sensitivity,
        stmt: Option<Box<Stmt>>,
    },
    SystemCall {
        name: Ident,
        args: Vec<Expr>,
    },
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Base {
    Binary,
    Octal,
    Decimal,
    Hex,
}

impl Base {
    pub fn letter(self) -> char {
        match self {
            Base::Binary => 'b',
            Base::Octal => 'o',
            Base::Decimal => 'd',
            Base::Hex => 'h',
        }
    }

    pub fn radix(self) -> u32 {
        match self {
            Base::Binary => 2,
            Base::Octal => 8,
            Base::Decimal => 10,
            Base::Hex => 16,
        }
    }
}

/// Integer literal. `digits` is lowercased and free of underscores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Number {
    pub width: Option<u32>,
    pub signed: bool,
    /// `None` for a plain unsized decimal such as `42`.
    pub base: Option<Base>,
    pub digits: String,
}

impl Number {
    pub fn sized(width: u32, base: Base, digits: impl Into<String>) -> Self {
        Self { width: Some(width), signed: false, base: Some(base), digits: digits.into() }
    }

    pub fn decimal(value: u64) -> Self {
        Self { width: None, signed: false, base: None, digits: value.to_string() }
    }

    pub fn text(&self) -> String {
        match self.base {
            None => self.digits.clone(),
            Some(base) => {
                let mut s = String::new();
                if let Some(w) = self.width {
                    s.push_str(&w.to_string());
                }
                s.push('\'');
                if self.signed {
                    s.push('s');
                }
                s.push(base.letter());
                s.push_str(&self.digits);
                s
            }
        }
    }

    /// Returns (value, x_mask, z_mask) truncated to 64 bits. `?` counts as z.
    pub fn bits(&self) -> Option<(u64, u64, u64)> {
        let base = match self.base {
            None => return self.digits.parse::<u64>().ok().map(|v| (v, 0, 0)),
            Some(b) => b,
        };
        if base == Base::Decimal {
            return match self.digits.as_str() {
                "x" => Some((0, u64::MAX, 0)),
                "z" | "?" => Some((0, 0, u64::MAX)),
                d => d.parse::<u64>().ok().map(|v| (v, 0, 0)),
            }
            .map(|(v, x, z)| mask_triplet(v, x, z, self.width));
        }
        let per_digit = match base {
            Base::Binary => 1,
            Base::Octal => 3,
            Base::Hex => 4,
            Base::Decimal => unreachable!(),
        };
        let (mut v, mut x, mut z) = (0u64, 0u64, 0u64);
        let digit_mask = (1u64 << per_digit) - 1;
        for c in self.digits.chars() {
            v = v.checked_shl(per_digit).unwrap_or(0);
            x = x.checked_shl(per_digit).unwrap_or(0);
            z = z.checked_shl(per_digit).unwrap_or(0);
            match c {
                'x' => x |= digit_mask,
                'z' | '?' => z |= digit_mask,
                _ => v |= u64::from(c.to_digit(base.radix())?),
            }
        }
        // A leading x/z digit extends through the full width.
        let first = self.digits.chars().next();
        let used = per_digit * self.digits.len() as u32;
        if let (Some(w), Some(f)) = (self.width, first) {
            if w > used && used < 64 {
                let ext = mask(w.min(64)) & !mask(used);
                match f {
                    'x' => x |= ext,
                    'z' | '?' => z |= ext,
                    _ => {}
                }
            }
        }
        Some(mask_triplet(v, x, z, self.width))
    }

    /// Self-determined width: the declared size, or 32 for unsized literals.
    pub fn self_width(&self) -> u32 {
        self.width.unwrap_or(32)
    }
}

fn mask_triplet(v: u64, x: u64, z: u64, width: Option<u32>) -> (u64, u64, u64) {
    let m = mask(width.unwrap_or(64).min(64));
    (v & m, x & m, z & m)
}

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Plus,
    Neg,
    LogicalNot,
    BitNot,
    ReduceAnd,
    ReduceNand,
    ReduceOr,
    ReduceNor,
    ReduceXor,
    ReduceXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Plus => "+",
            UnaryOp::Neg => "-",
            UnaryOp::LogicalNot => "!",
            UnaryOp::BitNot => "~",
            UnaryOp::ReduceAnd => "&",
            UnaryOp::ReduceNand => "~&",
            UnaryOp::ReduceOr => "|",
            UnaryOp::ReduceNor => "~|",
            UnaryOp::ReduceXor => "^",
            UnaryOp::ReduceXnor => "~^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Pow,
    Mul,
    Div,
    Mod,
    Add,
    Sub,
    Shl,
    Shr,
    AShl,
    AShr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    BitAnd,
    BitXor,
    BitXnor,
    BitOr,
    LogicalAnd,
    LogicalOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Pow => "**",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Shl => "<<",
            BinaryOp::Shr => ">>",
            BinaryOp::AShl => "<<<",
            BinaryOp::AShr => ">>>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::CaseEq => "===",
            BinaryOp::CaseNe => "!==",
            BinaryOp::BitAnd => "&",
            BinaryOp::BitXor => "^",
            BinaryOp::BitXnor => "~^",
            BinaryOp::BitOr => "|",
            BinaryOp::LogicalAnd => "&&",
            BinaryOp::LogicalOr => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Pow => 12,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 11,
            BinaryOp::Add | BinaryOp::Sub => 10,
            BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr => 9,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 8,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::CaseEq | BinaryOp::CaseNe => 7,
            BinaryOp::BitAnd => 6,
            BinaryOp::BitXor | BinaryOp::BitXnor => 5,
            BinaryOp::BitOr => 4,
            BinaryOp::LogicalAnd => 3,
            BinaryOp::LogicalOr => 2,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "**" => BinaryOp::Pow,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Mod,
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "<<" => BinaryOp::Shl,
            ">>" => BinaryOp::Shr,
            "<<<" => BinaryOp::AShl,
            ">>>" => BinaryOp::AShr,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "===" => BinaryOp::CaseEq,
            "!==" => BinaryOp::CaseNe,
            "&" => BinaryOp::BitAnd,
            "^" => BinaryOp::BitXor,
            "~^" | "^~" => BinaryOp::BitXnor,
            "|" => BinaryOp::BitOr,
            "&&" => BinaryOp::LogicalAnd,
            "||" => BinaryOp::LogicalOr,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Ident(Ident),
    Number(Number, Span),
    Str(String, Span),
    Index {
        base: Ident,
        index: Box<Expr>,
    },
    Slice {
        base: Ident,
        msb: Box<Expr>,
        lsb: Box<Expr>,
    },
    Concat(Vec<Expr>, Span),
    Repeat {
        count: Box<Expr>,
        items: Vec<Expr>,
        span: Span,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
        span: Span,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
        span: Span,
    },
    SysCall {
        name: Ident,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn ident(name: &str) -> Self {
        Expr::Ident(Ident::new(name, Span::default()))
    }

    pub fn number(n: Number) -> Self {
        Expr::Number(n, Span::default())
    }

    pub fn span(&self) -> Span {
        match self {
            Expr::Ident(i) => i.span,
            Expr::Number(_, s) | Expr::Str(_, s) | Expr::Concat(_, s) => *s,
            Expr::Index { base, .. } | Expr::Slice { base, .. } => base.span,
            Expr::Repeat { span, .. }
            | Expr::Unary { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Ternary { span, .. } => *span,
            Expr::SysCall { name, .. } => name.span,
        }
    }

    /// Names of every identifier read by this expression, in order of appearance.
    pub fn referenced_names<'a>(&'a self, out: &mut Vec<&'a Ident>) {
        match self {
            Expr::Ident(i) => out.push(i),
            Expr::Number(..) | Expr::Str(..) => {}
            Expr::Index { base, index } => {
                out.push(base);
                index.referenced_names(out);
            }
            Expr::Slice { base, msb, lsb } => {
                out.push(base);
                msb.referenced_names(out);
                lsb.referenced_names(out);
            }
            Expr::Concat(items, _) => items.iter().for_each(|e| e.referenced_names(out)),
            Expr::Repeat { count, items, .. } => {
                count.referenced_names(out);
                items.iter().for_each(|e| e.referenced_names(out));
            }
            Expr::Unary { operand, .. } => operand.referenced_names(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.referenced_names(out);
                rhs.referenced_names(out);
            }
            Expr::Ternary { cond, then_expr, else_expr, .. } => {
                cond.referenced_names(out);
                then_expr.referenced_names(out);
                else_expr.referenced_names(out);
            }
            Expr::SysCall { args, .. } => args.iter().for_each(|e| e.referenced_names(out)),
        }
    }

    /// For an assignment target, the base signal names written.
    pub fn target_names<'a>(&'a self, out: &mut Vec<&'a Ident>) {
        match self {
            Expr::Ident(i) => out.push(i),
            Expr::Index { base, .. } | Expr::Slice { base, .. } => out.push(base),
            Expr::Concat(items, _) => items.iter().for_each(|e| e.target_names(out)),
            _ => {}
        }
    }

    pub fn is_lvalue(&self) -> bool {
        match self {
            Expr::Ident(_) | Expr::Index { .. } | Expr::Slice { .. } => true,
            Expr::Concat(items, _) => !items.is_empty() && items.iter().all(Expr::is_lvalue),
            _ => false,
        }
    }
}

impl Stmt {
    /// Visits this statement and all nested statements in preorder.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Block { stmts, .. } => stmts.iter().for_each(|s| s.walk(f)),
            Stmt::If { then_branch, else_branch, .. } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            Stmt::Case { arms, default, .. } => {
                arms.iter().for_each(|a| a.body.walk(f));
                if let Some(d) = default {
                    d.walk(f);
                }
            }
            Stmt::For { init, step, body, .. } => {
                init.walk(f);
                step.walk(f);
                body.walk(f);
            }
            Stmt::While { body, .. } | Stmt::Repeat { body, .. } | Stmt::Forever(body) => {
                body.walk(f)
            }
            Stmt::Delay { stmt, .. } | Stmt::Event { stmt, .. } => {
                if let Some(s) = stmt {
                    s.walk(f);
                }
            }
            Stmt::Blocking { .. } | Stmt::NonBlocking { .. } | Stmt::SystemCall { .. } | Stmt::Null => {}
        }
    }

    /// Expressions read directly by this statement (not by nested statements).
    pub fn own_read_exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::If { cond, .. } | Stmt::While { cond, .. } => vec![cond],
            Stmt::For { cond, .. } => vec![cond],
            Stmt::Case { expr, arms, .. } => {
                let mut v = vec![expr];
                for a in arms {
                    v.extend(a.labels.iter());
                }
                v
            }
            Stmt::Blocking { lhs, rhs, .. } | Stmt::NonBlocking { lhs, rhs, .. } => {
                let mut v = vec![rhs];
                // Index expressions inside the target are reads too.
                match lhs {
                    Expr::Index { index, .. } => v.push(index),
                    Expr::Slice { msb, lsb, .. } => {
                        v.push(msb);
                        v.push(lsb);
                    }
                    _ => {}
                }
                v
            }
            Stmt::Repeat { count, .. } => vec![count],
            Stmt::Delay { amount, .. } => vec![amount],
            Stmt::SystemCall { args, .. } => args.iter().collect(),
            _ => vec![],
        }
    }
}
