use serde::{Deserialize, Serialize};

use super::ast::Span;
use super::diag::{codes, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Number,
    Operator,
    Punctuation,
    String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }
}

pub const KEYWORDS: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "integer", "parameter",
    "localparam", "assign", "always", "initial", "begin", "end", "if", "else", "case", "casez",
    "casex", "endcase", "default", "posedge", "negedge", "or", "signed", "for", "while", "repeat",
    "forever", "and", "nand", "nor", "xor", "xnor", "not", "buf",
    // Recognized so they can be diagnosed as unsupported.
    "generate", "endgenerate", "function", "endfunction", "task", "endtask", "genvar", "fork",
    "join", "wait", "disable", "specify", "endspecify", "primitive", "endprimitive", "real",
    "time", "tri", "supply0", "supply1", "event", "deassign", "force", "release",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

const OPERATORS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "**", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "~&", "~|",
    "~^", "^~", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "=", "?", ":",
];

const PUNCTUATION: &[char] = &['(', ')', '[', ']', '{', '}', ';', ',', '.', '@', '#'];

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { chars: src.chars().collect(), pos: 0, line: 1, col: 1, _src: src }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c))
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Tokenizes `source`, dropping whitespace and comments.
///
/// Lexing continues past errors so every lexical problem in the file is
/// reported at once; any error makes the result `Err`.
pub fn lex(source: &str) -> Result<Vec<Token>, Vec<Diagnostic>> {
    let mut cur = Cursor::new(source);
    let mut tokens = Vec::new();
    let mut errors = Vec::new();

    while let Some(c) = cur.peek() {
        let start = cur.span();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with("//") {
            cur.skip_line();
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            let mut closed = false;
            while cur.peek().is_some() {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    closed = true;
                    break;
                }
                cur.bump();
            }
            if !closed {
                errors.push(Diagnostic::error(codes::UNTERMINATED_COMMENT, start, "unterminated comment"));
            }
            continue;
        }
        if c == '`' {
            cur.bump();
            let mut name = String::new();
            while let Some(d) = cur.peek().filter(|d| is_ident_char(*d)) {
                name.push(d);
                cur.bump();
            }
            cur.skip_line();
            match name.as_str() {
                "timescale" | "default_nettype" | "resetall" | "celldefine" | "endcelldefine" => {}
                _ => errors.push(Diagnostic::error(
                    codes::UNSUPPORTED,
                    start,
                    format!("unsupported construct: compiler directive `{name}"),
                )),
            }
            continue;
        }
        if c == '"' {
            cur.bump();
            let mut text = String::from("\"");
            let mut closed = false;
            while let Some(d) = cur.peek() {
                if d == '\n' {
                    break;
                }
                cur.bump();
                text.push(d);
                if d == '\\' {
                    if let Some(e) = cur.peek().filter(|e| *e != '\n') {
                        cur.bump();
                        text.push(e);
                    }
                    continue;
                }
                if d == '"' {
                    closed = true;
                    break;
                }
            }
            if closed {
                tokens.push(Token { kind: TokenKind::String, text, line: start.line, col: start.col });
            } else {
                errors.push(Diagnostic::error(codes::UNTERMINATED_STRING, start, "unterminated string"));
            }
            continue;
        }
        if c == '\\' {
            // Escaped identifiers run to the next whitespace.
            while cur.peek().is_some_and(|d| !d.is_whitespace()) {
                cur.bump();
            }
            errors.push(Diagnostic::error(codes::UNSUPPORTED, start, "unsupported construct: escaped identifier"));
            continue;
        }
        if is_ident_start(c) || c == '$' {
            let mut text = String::new();
            while let Some(d) = cur.peek().filter(|d| is_ident_char(*d)) {
                text.push(d);
                cur.bump();
            }
            if text == "$" {
                errors.push(Diagnostic::error(codes::BAD_CHAR, start, "stray '$'"));
                continue;
            }
            let kind = if is_keyword(&text) { TokenKind::Keyword } else { TokenKind::Identifier };
            tokens.push(Token { kind, text, line: start.line, col: start.col });
            continue;
        }
        if c.is_ascii_digit() || (c == '\'' && cur.peek_at(1).is_some_and(|d| "bBoOdDhHsS".contains(d))) {
            match lex_number(&mut cur) {
                Ok(text) => tokens.push(Token { kind: TokenKind::Number, text, line: start.line, col: start.col }),
                Err(msg) => errors.push(Diagnostic::error(codes::BAD_NUMBER, start, msg)),
            }
            continue;
        }
        if PUNCTUATION.contains(&c) {
            cur.bump();
            tokens.push(Token { kind: TokenKind::Punctuation, text: c.to_string(), line: start.line, col: start.col });
            continue;
        }
        if let Some(op) = OPERATORS.iter().find(|op| cur.starts_with(op)) {
            for _ in 0..op.len() {
                cur.bump();
            }
            tokens.push(Token { kind: TokenKind::Operator, text: op.to_string(), line: start.line, col: start.col });
            continue;
        }
        cur.bump();
        errors.push(Diagnostic::error(codes::BAD_CHAR, start, format!("unexpected character '{c}'")));
    }

    if errors.is_empty() {
        Ok(tokens)
    } else {
        Err(errors)
    }
}

fn lex_number(cur: &mut Cursor<'_>) -> Result<String, String> {
    let mut text = String::new();
    while let Some(d) = cur.peek().filter(|d| d.is_ascii_digit() || *d == '_') {
        text.push(d);
        cur.bump();
    }
    if cur.peek() == Some('.') && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
        cur.bump();
        while cur.peek().is_some_and(|d| d.is_ascii_digit() || d == '_') {
            cur.bump();
        }
        return Err("unsupported construct: real literal".into());
    }
    if cur.peek() != Some('\'') {
        return Ok(text);
    }
    // Based literal.
    let after = cur.peek_at(1);
    let after2 = cur.peek_at(2);
    let base_follows = after.is_some_and(|c| "bBoOdDhH".contains(c))
        || (after.is_some_and(|c| c == 's' || c == 'S') && after2.is_some_and(|c| "bBoOdDhH".contains(c)));
    if !base_follows {
        return Ok(text);
    }
    cur.bump();
    text.push('\'');
    if cur.peek().is_some_and(|c| c == 's' || c == 'S') {
        cur.bump();
        text.push('s');
    }
    let base = cur.bump().unwrap_or('d').to_ascii_lowercase();
    text.push(base);
    let valid: fn(char) -> bool = match base {
        'b' => |c| "01xXzZ?_".contains(c),
        'o' => |c| "01234567xXzZ?_".contains(c),
        'd' => |c| c.is_ascii_digit() || "xXzZ?_".contains(c),
        _ => |c| c.is_ascii_hexdigit() || "xXzZ?_".contains(c),
    };
    let mut digits = 0;
    while let Some(d) = cur.peek().filter(|d| valid(*d)) {
        text.push(d.to_ascii_lowercase());
        cur.bump();
        if d != '_' {
            digits += 1;
        }
    }
    if digits == 0 {
        return Err(format!("missing digits in based literal '{text}'"));
    }
    if cur.peek().is_some_and(is_ident_char) {
        let bad = cur.peek().unwrap();
        while cur.peek().is_some_and(is_ident_char) {
            cur.bump();
        }
        return Err(format!("invalid digit '{bad}' in literal '{text}'"));
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        lex(src).unwrap().into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn sized_literal_is_one_token() {
        assert_eq!(texts("assign y = 4'b1010;"), ["assign", "y", "=", "4'b1010", ";"]);
        let toks = lex("assign y = 4'b1010;").unwrap();
        assert_eq!(toks[3].kind, TokenKind::Number);
        assert_eq!(toks[0].kind, TokenKind::Keyword);
    }

    #[test]
    fn unterminated_comment_reports_start() {
        let errs = lex("/* open").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].message, "unterminated comment");
        assert_eq!((errs[0].line, errs[0].col), (1, 1));
    }

    #[test]
    fn empty_source() {
        assert!(lex("").unwrap().is_empty());
    }

    #[test]
    fn comments_and_positions() {
        let toks = lex("// c\n  wire /* x */ a;").unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!((toks[0].line, toks[0].col), (2, 3));
        assert_eq!((toks[1].line, toks[1].col), (2, 16));
    }

    #[test]
    fn operators_longest_match() {
        assert_eq!(texts("a <<< b !== c ~^ d <= e"), ["a", "<<<", "b", "!==", "c", "~^", "d", "<=", "e"]);
    }

    #[test]
    fn strings_and_system_names() {
        let toks = lex("$display(\"v=%d\\n\", a);").unwrap();
        assert_eq!(toks[0].text, "$display");
        assert_eq!(toks[2].kind, TokenKind::String);
        assert!(lex("\"open").is_err());
    }

    #[test]
    fn based_literals() {
        assert_eq!(texts("8'hFF 'b1 4'sd3 16'h_dead 3'bx1z"), ["8'hff", "'b1", "4'sd3", "16'h_dead", "3'bx1z"]);
        assert!(lex("4'b102").is_err());
        assert!(lex("4'b").is_err());
    }

    #[test]
    fn timescale_is_skipped() {
        assert_eq!(texts("`timescale 1ns/1ps\nmodule"), ["module"]);
        assert!(lex("`define W 4").is_err());
    }
}
