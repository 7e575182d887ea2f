use serde::{Deserialize, Serialize};

use super::OutputKind;
use crate::util::{extract_code, first_number_in};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorItem {
    pub error_name: String,
    pub description: String,
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Payload {
    Prose(String),
    Code(String),
    Table(String),
    Rating(f64),
    ErrorList(Vec<ErrorItem>),
}

impl Payload {
    /// The text that later prompts quote.
    pub fn text(&self) -> String {
        match self {
            Payload::Prose(s) | Payload::Code(s) | Payload::Table(s) => s.clone(),
            Payload::Rating(r) => format!("{r}"),
            Payload::ErrorList(items) => items
                .iter()
                .enumerate()
                .map(|(i, e)| match &e.location {
                    Some(loc) => format!("{}. {}: {} ({loc})", i + 1, e.error_name, e.description),
                    None => format!("{}. {}: {}", i + 1, e.error_name, e.description),
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }

    pub fn as_code(&self) -> Option<&str> {
        match self {
            Payload::Code(c) => Some(c),
            _ => None,
        }
    }
}

fn parse_error_list(text: &str) -> Vec<ErrorItem> {
    let item = regex::Regex::new(r"^\s*\d+[.)]\s+(.+?)\s*$").expect("valid regex");
    let loc = regex::Regex::new(r"(?i)\(?\s*(line\s+\d+)\s*\)?").expect("valid regex");
    text.lines()
        .filter_map(|l| item.captures(l))
        .map(|c| {
            let body = c[1].to_string();
            let location = loc.captures(&body).map(|m| m[1].to_lowercase());
            let stripped = loc.replace(&body, "").trim().trim_end_matches(['.', ',']).trim().to_string();
            let (name, desc) = match stripped.split_once(':') {
                Some((n, d)) => (n.trim().to_string(), d.trim().to_string()),
                None => (stripped.clone(), stripped.clone()),
            };
            ErrorItem { error_name: name, description: desc, location }
        })
        .collect()
}

/// Parses a raw response for the given output kind; `None` if nothing usable.
pub fn parse_payload(kind: OutputKind, raw: &str) -> Option<Payload> {
    match kind {
        OutputKind::Prose => {
            let t = raw.trim();
            (!t.is_empty()).then(|| Payload::Prose(t.to_string()))
        }
        OutputKind::Table => {
            let t = if raw.contains("```") { extract_code(raw) } else { raw.trim().to_string() };
            let t = t.trim().to_string();
            (t.lines().filter(|l| !l.trim().is_empty()).count() >= 2).then_some(Payload::Table(t))
        }
        OutputKind::Code => {
            let c = extract_code(raw);
            (!c.trim().is_empty()).then_some(Payload::Code(c))
        }
        OutputKind::Rating => first_number_in(raw, 0.0, 5.0).map(Payload::Rating),
        OutputKind::ErrorList => {
            let items = parse_error_list(raw);
            (!items.is_empty()).then_some(Payload::ErrorList(items))
        }
    }
}

/// Lightweight check for assertion code, which is outside the parsed subset:
/// it must mention an assertion and have balanced brackets.
pub fn assertion_screen(code: &str) -> Result<(), String> {
    if !code.contains("assert") {
        return Err("assertion screen: no assert statement".into());
    }
    let mut stack = Vec::new();
    for c in code.chars() {
        match c {
            '(' | '[' | '{' => stack.push(c),
            ')' | ']' | '}' => {
                let open = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                if stack.pop() != Some(open) {
                    return Err("assertion screen: unbalanced brackets".into());
                }
            }
            _ => {}
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err("assertion screen: unbalanced brackets".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rating() {
        assert_eq!(parse_payload(OutputKind::Rating, "Rating: 4 — well documented"), Some(Payload::Rating(4.0)));
        assert_eq!(parse_payload(OutputKind::Rating, "great"), None);
    }

    #[test]
    fn error_list() {
        let p = parse_payload(OutputKind::ErrorList, "Errors:\n1. Wrong operator: AND used instead of OR (line 3)\n2) Missing inversion: output not negated\n").unwrap();
        let Payload::ErrorList(items) = &p else { panic!() };
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].error_name, "Wrong operator");
        assert_eq!(items[0].location.as_deref(), Some("line 3"));
        assert_eq!(items[1].description, "output not negated");
        assert!(p.text().starts_with("1. Wrong operator: AND used instead of OR (line 3)"));
    }

    #[test]
    fn table_and_code() {
        assert!(parse_payload(OutputKind::Table, "| a | y |\n| 0 | 1 |").is_some());
        assert!(parse_payload(OutputKind::Table, "one line").is_none());
        assert_eq!(parse_payload(OutputKind::Code, "```\nmodule m; endmodule\n```"), Some(Payload::Code("module m; endmodule\n".into())));
    }

    #[test]
    fn screen() {
        assert!(assertion_screen("assert property (@(posedge clk) a |-> b);").is_ok());
        assert!(assertion_screen("assert property (a;").is_err());
        assert!(assertion_screen("always @* y = a;").is_err());
    }
}
