//! Recursive-descent parser for the supported subset.
//!
//! Errors inside a module abandon that module and resume after the next
//! `endmodule`, so a multi-module file reports one error per broken module.

use super::ast::*;
use super::diag::{codes, Diagnostic};
use super::lexer::{lex, Token, TokenKind};

type PResult<T> = Result<T, Diagnostic>;

/// Lexes and parses `source`.
pub fn parse_source(source: &str) -> Result<SourceFile, Vec<Diagnostic>> {
    let tokens = lex(source)?;
    parse(&tokens)
}

pub fn parse(tokens: &[Token]) -> Result<SourceFile, Vec<Diagnostic>> {
    let mut p = Parser { toks: tokens, pos: 0, errors: Vec::new() };
    let file = p.source_file();
    if p.errors.is_empty() {
        Ok(file)
    } else {
        Err(p.errors)
    }
}

const UNSUPPORTED_ITEMS: &[&str] = &[
    "generate", "function", "task", "genvar", "specify", "primitive", "real", "time", "tri",
    "supply0", "supply1", "event",
];

const UNSUPPORTED_STMTS: &[&str] = &["fork", "wait", "disable", "force", "release", "deassign"];

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    errors: Vec<Diagnostic>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + n)
    }

    fn at_eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn here(&self) -> Span {
        match self.peek().or_else(|| self.toks.last()) {
            Some(t) => t.span(),
            None => Span::new(1, 1),
        }
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn check(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokenKind::String)
    }

    fn check_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.kind == TokenKind::Keyword && t.text == kw)
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.check(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expected(&self, what: &str) -> Diagnostic {
        match self.peek() {
            Some(t) => Diagnostic::error(codes::SYNTAX, t.span(), format!("expected {what}, found '{}'", t.text)),
            None => Diagnostic::error(codes::SYNTAX, self.here(), format!("expected {what}")),
        }
    }

    fn expect(&mut self, text: &str) -> PResult<&'a Token> {
        if self.check(text) {
            Ok(self.bump().unwrap())
        } else if text == ";" && self.pos > 0 {
            // A missing terminator belongs to the end of the previous token.
            let prev = &self.toks[self.pos - 1];
            let span = Span::new(prev.line, prev.col + prev.text.chars().count() as u32);
            let found = self.peek().map_or_else(|| "end of file".to_string(), |t| format!("'{}'", t.text));
            Err(Diagnostic::error(codes::SYNTAX, span, format!("expected ';' after '{}', found {found}", prev.text)))
        } else {
            Err(self.expected(&format!("'{text}'")))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier && !t.text.starts_with('$') => {
                self.pos += 1;
                Ok(Ident::new(t.text.clone(), t.span()))
            }
            _ => Err(self.expected("identifier")),
        }
    }

    fn unsupported(&self, what: &str) -> Diagnostic {
        Diagnostic::error(codes::UNSUPPORTED, self.here(), format!("unsupported construct: {what}"))
    }

    fn source_file(&mut self) -> SourceFile {
        let mut modules = Vec::new();
        while !self.at_eof() {
            if !self.check_kw("module") {
                self.errors.push(self.expected("'module'"));
                // Skip to the next module header.
                while !self.at_eof() && !self.check_kw("module") {
                    self.pos += 1;
                }
                continue;
            }
            match self.module() {
                Ok(m) => modules.push(m),
                Err(d) => {
                    self.errors.push(d);
                    self.recover_to_endmodule();
                }
            }
        }
        SourceFile { modules }
    }

    fn recover_to_endmodule(&mut self) {
        while let Some(t) = self.bump() {
            if t.kind == TokenKind::Keyword && t.text == "endmodule" {
                return;
            }
            if t.kind == TokenKind::Keyword && t.text == "module" {
                // A new module started before this one ended.
                self.pos -= 1;
                return;
            }
        }
    }

    fn module(&mut self) -> PResult<Module> {
        let kw = self.expect("module")?;
        let span = kw.span();
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat("#") {
            self.expect("(")?;
            if !self.check(")") {
                loop {
                    self.eat("parameter");
                    params.push(self.param_assignment(false)?);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
        }
        let mut ports = PortList::NonAnsi(Vec::new());
        if self.eat("(") {
            if !self.check(")") {
                ports = if self.peek_direction().is_some() { self.ansi_ports()? } else { self.port_names()? };
            }
            self.expect(")")?;
        }
        self.expect(";")?;
        let mut items = Vec::new();
        loop {
            if self.at_eof() {
                return Err(Diagnostic::error(codes::SYNTAX, self.here(), "expected endmodule"));
            }
            if self.check_kw("endmodule") {
                self.pos += 1;
                break;
            }
            if self.check_kw("module") {
                return Err(Diagnostic::error(codes::SYNTAX, self.here(), "expected endmodule before next module"));
            }
            self.item(&mut items)?;
        }
        Ok(Module { name, params, ports, items, span })
    }

    fn peek_direction(&self) -> Option<Direction> {
        let t = self.peek()?;
        if t.kind != TokenKind::Keyword {
            return None;
        }
        match t.text.as_str() {
            "input" => Some(Direction::Input),
            "output" => Some(Direction::Output),
            "inout" => Some(Direction::Inout),
            _ => None,
        }
    }

    fn port_names(&mut self) -> PResult<PortList> {
        let mut names = vec![self.ident()?];
        while self.eat(",") {
            names.push(self.ident()?);
        }
        Ok(PortList::NonAnsi(names))
    }

    fn ansi_ports(&mut self) -> PResult<PortList> {
        let mut ports = Vec::new();
        let mut current: Option<PortDecl> = None;
        loop {
            if let Some(dir) = self.peek_direction() {
                let span = self.here();
                self.pos += 1;
                let (net_type, signed, range) = self.port_type()?;
                let name = self.ident()?;
                let decl = PortDecl { direction: dir, net_type, signed, range, names: vec![name], span };
                current = Some(decl.clone());
                ports.push(decl);
            } else {
                let proto = current.clone().ok_or_else(|| self.expected("port direction"))?;
                let name = self.ident()?;
                ports.push(PortDecl { span: name.span, names: vec![name], ..proto });
            }
            if !self.eat(",") {
                break;
            }
        }
        Ok(PortList::Ansi(ports))
    }

    fn port_type(&mut self) -> PResult<(NetType, bool, Option<Range>)> {
        let net_type = if self.eat("wire") {
            NetType::Wire
        } else if self.eat("reg") {
            NetType::Reg
        } else {
            NetType::Implicit
        };
        let signed = self.eat("signed");
        let range = self.opt_range()?;
        Ok((net_type, signed, range))
    }

    fn opt_range(&mut self) -> PResult<Option<Range>> {
        if !self.eat("[") {
            return Ok(None);
        }
        let msb = self.expr()?;
        self.expect(":")?;
        let lsb = self.expr()?;
        self.expect("]")?;
        Ok(Some(Range { msb, lsb }))
    }

    fn param_assignment(&mut self, local: bool) -> PResult<ParamDecl> {
        self.eat("integer");
        let signed = self.eat("signed");
        let range = self.opt_range()?;
        let name = self.ident()?;
        self.expect("=")?;
        let value = self.expr()?;
        Ok(ParamDecl { local, signed, range, name, value })
    }

    fn item(&mut self, items: &mut Vec<Item>) -> PResult<()> {
        let tok = self.peek().ok_or_else(|| self.expected("module item"))?;
        let span = tok.span();
        if tok.kind == TokenKind::Keyword {
            if let Some(dir) = self.peek_direction() {
                self.pos += 1;
                let (net_type, signed, range) = self.port_type()?;
                let mut names = vec![self.ident()?];
                while self.eat(",") {
                    names.push(self.ident()?);
                }
                self.expect(";")?;
                items.push(Item::Port(PortDecl { direction: dir, net_type, signed, range, names, span }));
                return Ok(());
            }
            match tok.text.as_str() {
                "wire" | "reg" | "integer" => {
                    self.pos += 1;
                    let kind = match tok.text.as_str() {
                        "wire" => NetKind::Wire,
                        "reg" => NetKind::Reg,
                        _ => NetKind::Integer,
                    };
                    let signed = self.eat("signed");
                    let range = if kind == NetKind::Integer { None } else { self.opt_range()? };
                    let mut names = Vec::new();
                    loop {
                        let name = self.ident()?;
                        if self.check("[") {
                            return Err(self.unsupported("memory array declaration"));
                        }
                        let init = if self.eat("=") { Some(self.expr()?) } else { None };
                        names.push(DeclName { name, init });
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect(";")?;
                    items.push(Item::Net(NetDecl { kind, signed, range, names, span }));
                }
                "parameter" | "localparam" => {
                    self.pos += 1;
                    let local = tok.text == "localparam";
                    let first = self.param_assignment(local)?;
                    let (signed, range) = (first.signed, first.range.clone());
                    items.push(Item::Param(first));
                    while self.eat(",") {
                        let name = self.ident()?;
                        self.expect("=")?;
                        let value = self.expr()?;
                        items.push(Item::Param(ParamDecl { local, signed, range: range.clone(), name, value }));
                    }
                    self.expect(";")?;
                }
                "assign" => {
                    self.pos += 1;
                    loop {
                        let span = self.here();
                        let lhs = self.lvalue()?;
                        self.expect("=")?;
                        let rhs = self.expr()?;
                        items.push(Item::Assign(ContinuousAssign { lhs, rhs, span }));
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect(";")?;
                }
                "always" => {
                    self.pos += 1;
                    let sensitivity = if self.eat("@") { Some(self.sensitivity()?) } else { None };
                    let body = self.stmt()?;
                    items.push(Item::Always(AlwaysBlock { sensitivity, body, span }));
                }
                "initial" => {
                    self.pos += 1;
                    items.push(Item::Initial(self.stmt()?));
                }
                text if GateKind::from_keyword(text).is_some() => {
                    let kind = GateKind::from_keyword(text).unwrap();
                    self.pos += 1;
                    if self.check("#") {
                        return Err(self.unsupported("gate delay"));
                    }
                    loop {
                        let span = self.here();
                        let name = if self.peek().is_some_and(|t| t.kind == TokenKind::Identifier) {
                            Some(self.ident()?)
                        } else {
                            None
                        };
                        self.expect("(")?;
                        let mut terminals = vec![self.expr()?];
                        while self.eat(",") {
                            terminals.push(self.expr()?);
                        }
                        self.expect(")")?;
                        if terminals.len() < 2 {
                            return Err(Diagnostic::error(codes::SYNTAX, span, "gate needs an output and at least one input"));
                        }
                        if !terminals[0].is_lvalue() {
                            return Err(Diagnostic::error(codes::SYNTAX, terminals[0].span(), "gate output must be a net"));
                        }
                        items.push(Item::Gate(Gate { kind, name, terminals, span }));
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect(";")?;
                }
                text if UNSUPPORTED_ITEMS.contains(&text) => {
                    return Err(self.unsupported(&format!("'{text}'")));
                }
                _ => return Err(self.expected("module item")),
            }
            return Ok(());
        }
        if tok.kind == TokenKind::Identifier && !tok.text.starts_with('$') {
            return self.instances(items);
        }
        Err(self.expected("module item"))
    }

    fn instances(&mut self, items: &mut Vec<Item>) -> PResult<()> {
        let span = self.here();
        let module = self.ident()?;
        let mut params = Vec::new();
        if self.eat("#") {
            self.expect("(")?;
            params = self.connections()?;
            self.expect(")")?;
        }
        loop {
            let name = self.ident()?;
            if self.check("[") {
                return Err(self.unsupported("instance array"));
            }
            self.expect("(")?;
            let connections = self.connections()?;
            self.expect(")")?;
            items.push(Item::Instance(Instance { module: module.clone(), params: params.clone(), name, connections, span }));
            if !self.eat(",") {
                break;
            }
        }
        self.expect(";")?;
        Ok(())
    }

    fn connections(&mut self) -> PResult<Vec<Connection>> {
        let mut out = Vec::new();
        if self.check(")") {
            return Ok(out);
        }
        loop {
            if self.eat(".") {
                let port = self.ident()?;
                self.expect("(")?;
                let expr = if self.check(")") { None } else { Some(self.expr()?) };
                self.expect(")")?;
                out.push(Connection::Named { port, expr });
            } else {
                out.push(Connection::Positional(self.expr()?));
            }
            if !self.eat(",") {
                break;
            }
        }
        Ok(out)
    }

    fn sensitivity(&mut self) -> PResult<Sensitivity> {
        if self.eat("*") {
            return Ok(Sensitivity::Star);
        }
        self.expect("(")?;
        if self.eat("*") {
            self.expect(")")?;
            return Ok(Sensitivity::Star);
        }
        let mut list = Vec::new();
        loop {
            let edge = if self.eat("posedge") {
                Some(Edge::Posedge)
            } else if self.eat("negedge") {
                Some(Edge::Negedge)
            } else {
                None
            };
            let signal = self.ident()?;
            if self.check("[") {
                return Err(self.unsupported("bit-select in sensitivity list"));
            }
            list.push(SensItem { edge, signal });
            if !(self.eat("or") || self.eat(",")) {
                break;
            }
        }
        self.expect(")")?;
        Ok(Sensitivity::List(list))
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let tok = self.peek().ok_or_else(|| self.expected("statement"))?;
        if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "begin" => {
                    self.pos += 1;
                    let label = if self.eat(":") { Some(self.ident()?) } else { None };
                    let mut stmts = Vec::new();
                    while !self.check_kw("end") {
                        if self.at_eof() || self.check_kw("endmodule") {
                            return Err(self.expected("'end'"));
                        }
                        stmts.push(self.stmt()?);
                    }
                    self.pos += 1;
                    return Ok(Stmt::Block { label, stmts });
                }
                "if" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let cond = self.expr()?;
                    self.expect(")")?;
                    let then_branch = Box::new(self.stmt()?);
                    let else_branch = if self.eat("else") { Some(Box::new(self.stmt()?)) } else { None };
                    return Ok(Stmt::If { cond, then_branch, else_branch });
                }
                "case" | "casez" | "casex" => {
                    self.pos += 1;
                    let kind = match tok.text.as_str() {
                        "case" => CaseKind::Case,
                        "casez" => CaseKind::Casez,
                        _ => CaseKind::Casex,
                    };
                    self.expect("(")?;
                    let expr = self.expr()?;
                    self.expect(")")?;
                    let mut arms = Vec::new();
                    let mut default = None;
                    while !self.check_kw("endcase") {
                        if self.at_eof() || self.check_kw("endmodule") {
                            return Err(self.expected("'endcase'"));
                        }
                        if self.eat("default") {
                            self.eat(":");
                            if default.is_some() {
                                return Err(Diagnostic::error(codes::SYNTAX, self.here(), "duplicate default in case"));
                            }
                            default = Some(Box::new(self.stmt()?));
                            continue;
                        }
                        let mut labels = vec![self.expr()?];
                        while self.eat(",") {
                            labels.push(self.expr()?);
                        }
                        self.expect(":")?;
                        let body = self.stmt()?;
                        arms.push(CaseArm { labels, body });
                    }
                    self.pos += 1;
                    return Ok(Stmt::Case { kind, expr, arms, default });
                }
                "for" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let init = Box::new(self.assignment_stmt(false)?);
                    self.expect(";")?;
                    let cond = self.expr()?;
                    self.expect(";")?;
                    let step = Box::new(self.assignment_stmt(false)?);
                    self.expect(")")?;
                    let body = Box::new(self.stmt()?);
                    return Ok(Stmt::For { init, cond, step, body });
                }
                "while" | "repeat" => {
                    self.pos += 1;
                    self.expect("(")?;
                    let cond = self.expr()?;
                    self.expect(")")?;
                    let body = Box::new(self.stmt()?);
                    return Ok(if tok.text == "while" {
                        Stmt::While { cond, body }
                    } else {
                        Stmt::Repeat { count: cond, body }
                    });
                }
                "forever" => {
                    self.pos += 1;
                    return Ok(Stmt::Forever(Box::new(self.stmt()?)));
                }
                text if UNSUPPORTED_STMTS.contains(&text) => {
                    return Err(self.unsupported(&format!("'{text}'")));
                }
                _ => return Err(self.expected("statement")),
            }
        }
        if self.eat(";") {
            return Ok(Stmt::Null);
        }
        if self.eat("#") {
            let amount = self.delay_value()?;
            let stmt = if self.eat(";") { None } else { Some(Box::new(self.stmt()?)) };
            return Ok(Stmt::Delay { amount, stmt });
        }
        if self.eat("@") {
            let sensitivity = self.sensitivity()?;
            let stmt = if self.eat(";") { None } else { Some(Box::new(self.stmt()?)) };
            return Ok(Stmt::Event { sensitivity, stmt });
        }
        if tok.kind == TokenKind::Identifier && tok.text.starts_with('$') {
            self.pos += 1;
            let name = Ident::new(tok.text.clone(), tok.span());
            let mut args = Vec::new();
            if self.eat("(") {
                if !self.check(")") {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
            }
            self.expect(";")?;
            return Ok(Stmt::SystemCall { name, args });
        }
        let s = self.assignment_stmt(true)?;
        self.expect(";")?;
        Ok(s)
    }

    fn delay_value(&mut self) -> PResult<Expr> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Number => self.primary(),
            Some(t) if t.kind == TokenKind::Identifier => Ok(Expr::Ident(self.ident()?)),
            Some(t) if t.text == "(" => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.expected("delay value")),
        }
    }

    fn assignment_stmt(&mut self, allow_nonblocking: bool) -> PResult<Stmt> {
        let span = self.here();
        let lhs = self.lvalue()?;
        if self.eat("=") {
            if self.check("#") {
                return Err(self.unsupported("intra-assignment delay"));
            }
            let rhs = self.expr()?;
            Ok(Stmt::Blocking { lhs, rhs, span })
        } else if allow_nonblocking && self.eat("<=") {
            if self.check("#") {
                return Err(self.unsupported("intra-assignment delay"));
            }
            let rhs = self.expr()?;
            Ok(Stmt::NonBlocking { lhs, rhs, span })
        } else {
            Err(self.expected("'=' or '<='"))
        }
    }

    fn lvalue(&mut self) -> PResult<Expr> {
        if self.check("{") {
            let span = self.here();
            self.pos += 1;
            let mut items = vec![self.lvalue()?];
            while self.eat(",") {
                items.push(self.lvalue()?);
            }
            self.expect("}")?;
            return Ok(Expr::Concat(items, span));
        }
        let base = self.ident()?;
        if self.check(".") {
            return Err(self.unsupported("hierarchical reference"));
        }
        self.select(base)
    }

    fn select(&mut self, base: Ident) -> PResult<Expr> {
        if !self.eat("[") {
            return Ok(Expr::Ident(base));
        }
        let first = self.expr()?;
        if self.check("+") && self.peek_at(1).is_some_and(|t| t.text == ":")
            || self.check("-") && self.peek_at(1).is_some_and(|t| t.text == ":")
        {
            return Err(self.unsupported("indexed part-select"));
        }
        if self.eat(":") {
            let lsb = self.expr()?;
            self.expect("]")?;
            Ok(Expr::Slice { base, msb: Box::new(first), lsb: Box::new(lsb) })
        } else {
            self.expect("]")?;
            if self.check("[") {
                return Err(self.unsupported("multi-dimensional select"));
            }
            Ok(Expr::Index { base, index: Box::new(first) })
        }
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let span = self.here();
        let cond = self.binary(2)?;
        if self.eat("?") {
            let then_expr = self.expr()?;
            self.expect(":")?;
            let else_expr = self.expr()?;
            return Ok(Expr::Ternary {
                cond: Box::new(cond),
                then_expr: Box::new(then_expr),
                else_expr: Box::new(else_expr),
                span,
            });
        }
        Ok(cond)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::Operator {
                break;
            }
            // `+:` / `-:` belong to part-selects.
            if (tok.text == "+" || tok.text == "-") && self.peek_at(1).is_some_and(|t| t.text == ":") {
                break;
            }
            let Some(op) = BinaryOp::from_symbol(&tok.text) else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let span = tok.span();
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else { return Err(self.expected("expression")) };
        if tok.kind == TokenKind::Operator {
            let op = match tok.text.as_str() {
                "+" => Some(UnaryOp::Plus),
                "-" => Some(UnaryOp::Neg),
                "!" => Some(UnaryOp::LogicalNot),
                "~" => Some(UnaryOp::BitNot),
                "&" => Some(UnaryOp::ReduceAnd),
                "~&" => Some(UnaryOp::ReduceNand),
                "|" => Some(UnaryOp::ReduceOr),
                "~|" => Some(UnaryOp::ReduceNor),
                "^" => Some(UnaryOp::ReduceXor),
                "~^" | "^~" => Some(UnaryOp::ReduceXnor),
                _ => None,
            };
            if let Some(op) = op {
                let span = tok.span();
                self.pos += 1;
                let operand = self.unary()?;
                return Ok(Expr::Unary { op, operand: Box::new(operand), span });
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else { return Err(self.expected("expression")) };
        let span = tok.span();
        match tok.kind {
            TokenKind::Number => {
                self.pos += 1;
                let n = parse_number(&tok.text)
                    .ok_or_else(|| Diagnostic::error(codes::BAD_NUMBER, span, format!("invalid number '{}'", tok.text)))?;
                Ok(Expr::Number(n, span))
            }
            TokenKind::String => {
                self.pos += 1;
                Ok(Expr::Str(tok.text[1..tok.text.len() - 1].to_string(), span))
            }
            TokenKind::Identifier if tok.text.starts_with('$') => {
                self.pos += 1;
                let name = Ident::new(tok.text.clone(), span);
                let mut args = Vec::new();
                if self.eat("(") {
                    if !self.check(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat(",") {
                                break;
                            }
                        }
                    }
                    self.expect(")")?;
                }
                Ok(Expr::SysCall { name, args })
            }
            TokenKind::Identifier => {
                let base = self.ident()?;
                if self.check("(") {
                    return Err(self.unsupported("function call"));
                }
                if self.check(".") {
                    return Err(self.unsupported("hierarchical reference"));
                }
                self.select(base)
            }
            TokenKind::Punctuation if tok.text == "(" => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            TokenKind::Punctuation if tok.text == "{" => {
                self.pos += 1;
                let first = self.expr()?;
                if self.check("{") {
                    self.pos += 1;
                    let mut items = vec![self.expr()?];
                    while self.eat(",") {
                        items.push(self.expr()?);
                    }
                    self.expect("}")?;
                    self.expect("}")?;
                    return Ok(Expr::Repeat { count: Box::new(first), items, span });
                }
                let mut items = vec![first];
                while self.eat(",") {
                    items.push(self.expr()?);
                }
                self.expect("}")?;
                Ok(Expr::Concat(items, span))
            }
            _ => Err(self.expected("expression")),
        }
    }
}

/// Converts literal text as produced by the lexer into a [`Number`].
pub fn parse_number(text: &str) -> Option<Number> {
    let clean: String = text.chars().filter(|c| *c != '_').collect();
    let Some(tick) = clean.find('\'') else {
        if clean.is_empty() || !clean.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        return Some(Number { width: None, signed: false, base: None, digits: clean });
    };
    let width = if tick == 0 {
        None
    } else {
        let w: u32 = clean[..tick].parse().ok()?;
        if w == 0 {
            return None;
        }
        Some(w)
    };
    let mut rest = clean[tick + 1..].chars();
    let mut c = rest.next()?.to_ascii_lowercase();
    let mut signed = false;
    if c == 's' {
        signed = true;
        c = rest.next()?.to_ascii_lowercase();
    }
    let base = match c {
        'b' => Base::Binary,
        'o' => Base::Octal,
        'd' => Base::Decimal,
        'h' => Base::Hex,
        _ => return None,
    };
    let digits: String = rest.map(|c| c.to_ascii_lowercase()).collect();
    if digits.is_empty() {
        return None;
    }
    Some(Number { width, signed, base: Some(base), digits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverter_module() {
        let f = parse_source("module m(input a, output y); assign y = ~a; endmodule").unwrap();
        assert_eq!(f.modules.len(), 1);
        let m = &f.modules[0];
        match &m.ports {
            PortList::Ansi(p) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(m.items.len(), 1);
        assert!(matches!(m.items[0], Item::Assign(_)));
    }

    #[test]
    fn empty_module() {
        let f = parse_source("module m; endmodule").unwrap();
        assert_eq!(f.modules.len(), 1);
        assert!(f.modules[0].items.is_empty());
    }

    #[test]
    fn missing_endmodule() {
        let errs = parse_source("module m(input a);").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("expected endmodule"), "{}", errs[0].message);
    }

    #[test]
    fn precedence() {
        let f = parse_source("module m(input a, b, c, output y); assign y = a | b & c; endmodule").unwrap();
        let Item::Assign(asg) = &f.modules[0].items[0] else { panic!() };
        let Expr::Binary { op, rhs, .. } = &asg.rhs else { panic!() };
        assert_eq!(*op, BinaryOp::BitOr);
        assert!(matches!(**rhs, Expr::Binary { op: BinaryOp::BitAnd, .. }));
    }

    #[test]
    fn nonansi_and_always() {
        let src = "module d(clk, d, q);\n input clk, d;\n output q;\n reg q;\n always @(posedge clk) q <= d;\nendmodule\n";
        let f = parse_source(src).unwrap();
        let m = &f.modules[0];
        assert!(matches!(&m.ports, PortList::NonAnsi(n) if n.len() == 3));
        let Item::Always(a) = &m.items[3] else { panic!() };
        assert!(a.is_clocked());
        assert!(matches!(a.body, Stmt::NonBlocking { .. }));
    }

    #[test]
    fn recovery_reports_every_module() {
        let src = "module a(input x, output y); assign y = x &; endmodule\nmodule b(input x, output y); assign y = ; endmodule\nmodule c; endmodule";
        let errs = parse_source(src).unwrap_err();
        assert_eq!(errs.len(), 2);
        assert_eq!(errs[0].line, 1);
        assert_eq!(errs[1].line, 2);
    }

    #[test]
    fn unsupported_constructs_are_diagnosed() {
        let errs = parse_source("module m; generate endgenerate endmodule").unwrap_err();
        assert_eq!(errs[0].code, codes::UNSUPPORTED);
        let errs = parse_source("module m(input [3:0] a, output y); assign y = a[1+:2]; endmodule").unwrap_err();
        assert_eq!(errs[0].code, codes::UNSUPPORTED);
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("4'b1010"), Some(Number::sized(4, Base::Binary, "1010")));
        assert_eq!(parse_number("8'HF_F").unwrap().digits, "ff");
        assert_eq!(parse_number("12").unwrap().bits(), Some((12, 0, 0)));
        assert_eq!(parse_number("4'b1x0z").unwrap().bits(), Some((0b1000, 0b0100, 0b0001)));
        assert_eq!(parse_number("0'b1"), None);
    }

    #[test]
    fn instances_and_gates() {
        let src = "module top(input a, b, output y); wire t; and g1(t, a, b); inv u0(.a(t), .y(y)); endmodule\nmodule inv(input a, output y); assign y = ~a; endmodule";
        let f = parse_source(src).unwrap();
        assert!(matches!(f.modules[0].items[1], Item::Gate(_)));
        assert!(matches!(f.modules[0].items[2], Item::Instance(_)));
    }

    #[test]
    fn testbench_constructs() {
        let src = "module tb; reg a; wire y; inv dut(.a(a), .y(y));\ninitial begin a = 1'b0; #1; if (y === 1'b1) $display(\"PASS\"); else $display(\"FAIL\"); $finish; end\nendmodule";
        parse_source(src).unwrap();
    }
}
