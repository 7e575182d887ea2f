//! Canonical source formatting. `parse(print(ast)) == ast` for any tree the
//! parser produces; parentheses are inserted only where precedence needs them.

use std::fmt::Write;

use super::ast::*;

pub fn pretty_print(file: &SourceFile) -> String {
    let mut out = String::new();
    for (i, m) in file.modules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_module(&mut out, m);
    }
    out
}

pub fn print_module(out: &mut String, m: &Module) {
    out.push_str("module ");
    out.push_str(&m.name.name);
    if !m.params.is_empty() {
        out.push_str(" #(\n");
        for (i, p) in m.params.iter().enumerate() {
            out.push_str("  ");
            out.push_str(&param_text(p));
            if i + 1 < m.params.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push(')');
    }
    match &m.ports {
        PortList::NonAnsi(names) if names.is_empty() => {}
        PortList::NonAnsi(names) => {
            out.push_str(" (");
            out.push_str(&names.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(", "));
            out.push(')');
        }
        PortList::Ansi(ports) => {
            out.push_str(" (\n");
            for (i, p) in ports.iter().enumerate() {
                out.push_str("  ");
                out.push_str(&port_text(p));
                if i + 1 < ports.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push(')');
        }
    }
    out.push_str(";\n");
    for item in &m.items {
        print_item(out, item);
    }
    out.push_str("endmodule\n");
}

fn range_text(r: &Option<Range>) -> String {
    match r {
        Some(r) => format!("[{}:{}] ", expr_text(&r.msb), expr_text(&r.lsb)),
        None => String::new(),
    }
}

fn param_text(p: &ParamDecl) -> String {
    format!(
        "{}{}{}{} = {}",
        if p.local { "localparam " } else { "parameter " },
        if p.signed { "signed " } else { "" },
        range_text(&p.range),
        p.name.name,
        expr_text(&p.value)
    )
}

fn port_text(p: &PortDecl) -> String {
    let mut s = String::from(p.direction.keyword());
    s.push(' ');
    match p.net_type {
        NetType::Wire => s.push_str("wire "),
        NetType::Reg => s.push_str("reg "),
        NetType::Implicit => {}
    }
    if p.signed {
        s.push_str("signed ");
    }
    s.push_str(&range_text(&p.range));
    s.push_str(&p.names.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(", "));
    s
}

fn print_item(out: &mut String, item: &Item) {
    match item {
        Item::Port(p) => {
            let _ = writeln!(out, "  {};", port_text(p));
        }
        Item::Net(n) => {
            let names: Vec<String> = n
                .names
                .iter()
                .map(|d| match &d.init {
                    Some(e) => format!("{} = {}", d.name.name, expr_text(e)),
                    None => d.name.name.clone(),
                })
                .collect();
            let _ = writeln!(
                out,
                "  {} {}{}{};",
                n.kind.keyword(),
                if n.signed { "signed " } else { "" },
                range_text(&n.range),
                names.join(", ")
            );
        }
        Item::Param(p) => {
            let _ = writeln!(out, "  {};", param_text(p));
        }
        Item::Assign(a) => {
            let _ = writeln!(out, "  assign {} = {};", expr_text(&a.lhs), expr_text(&a.rhs));
        }
        Item::Always(a) => {
            out.push_str("  always ");
            if let Some(s) = &a.sensitivity {
                out.push_str(&sensitivity_text(s));
                out.push(' ');
            }
            print_stmt_inline(out, &a.body, 1);
        }
        Item::Initial(s) => {
            out.push_str("  initial ");
            print_stmt_inline(out, s, 1);
        }
        Item::Instance(inst) => {
            out.push_str("  ");
            out.push_str(&inst.module.name);
            if !inst.params.is_empty() {
                let _ = write!(out, " #({})", connections_text(&inst.params));
            }
            let _ = writeln!(out, " {} ({});", inst.name.name, connections_text(&inst.connections));
        }
        Item::Gate(g) => {
            let terms: Vec<String> = g.terminals.iter().map(expr_text).collect();
            match &g.name {
                Some(n) => {
                    let _ = writeln!(out, "  {} {} ({});", g.kind.keyword(), n.name, terms.join(", "));
                }
                None => {
                    let _ = writeln!(out, "  {} ({});", g.kind.keyword(), terms.join(", "));
                }
            }
        }
    }
}

fn connections_text(conns: &[Connection]) -> String {
    conns
        .iter()
        .map(|c| match c {
            Connection::Named { port, expr } => {
                format!(".{}({})", port.name, expr.as_ref().map(expr_text).unwrap_or_default())
            }
            Connection::Positional(e) => expr_text(e),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn sensitivity_text(s: &Sensitivity) -> String {
    match s {
        Sensitivity::Star => "@(*)".to_string(),
        Sensitivity::List(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|i| match i.edge {
                    Some(Edge::Posedge) => format!("posedge {}", i.signal.name),
                    Some(Edge::Negedge) => format!("negedge {}", i.signal.name),
                    None => i.signal.name.clone(),
                })
                .collect();
            format!("@({})", parts.join(" or "))
        }
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Prints a statement whose first line continues the current line.
fn print_stmt_inline(out: &mut String, s: &Stmt, level: usize) {
    match s {
        Stmt::Block { label, stmts } => {
            out.push_str("begin");
            if let Some(l) = label {
                let _ = write!(out, " : {}", l.name);
            }
            out.push('\n');
            for st in stmts {
                print_stmt(out, st, level + 1);
            }
            indent(out, level);
            out.push_str("end\n");
        }
        Stmt::If { cond, then_branch, else_branch } => {
            let _ = write!(out, "if ({}) ", expr_text(cond));
            print_stmt_inline(out, then_branch, level);
            if let Some(e) = else_branch {
                indent(out, level);
                out.push_str("else ");
                print_stmt_inline(out, e, level);
            }
        }
        Stmt::Case { kind, expr, arms, default } => {
            let _ = writeln!(out, "{} ({})", kind.keyword(), expr_text(expr));
            for arm in arms {
                indent(out, level + 1);
                let labels: Vec<String> = arm.labels.iter().map(expr_text).collect();
                let _ = write!(out, "{}: ", labels.join(", "));
                print_stmt_inline(out, &arm.body, level + 1);
            }
            if let Some(d) = default {
                indent(out, level + 1);
                out.push_str("default: ");
                print_stmt_inline(out, d, level + 1);
            }
            indent(out, level);
            out.push_str("endcase\n");
        }
        Stmt::Blocking { lhs, rhs, .. } => {
            let _ = writeln!(out, "{} = {};", expr_text(lhs), expr_text(rhs));
        }
        Stmt::NonBlocking { lhs, rhs, .. } => {
            let _ = writeln!(out, "{} <= {};", expr_text(lhs), expr_text(rhs));
        }
        Stmt::For { init, cond, step, body } => {
            let _ = write!(out, "for ({}; {}; {}) ", assign_text(init), expr_text(cond), assign_text(step));
            print_stmt_inline(out, body, level);
        }
        Stmt::While { cond, body } => {
            let _ = write!(out, "while ({}) ", expr_text(cond));
            print_stmt_inline(out, body, level);
        }
        Stmt::Repeat { count, body } => {
            let _ = write!(out, "repeat ({}) ", expr_text(count));
            print_stmt_inline(out, body, level);
        }
        Stmt::Forever(body) => {
            out.push_str("forever ");
            print_stmt_inline(out, body, level);
        }
        Stmt::Delay { amount, stmt } => {
            let amount = match amount {
                Expr::Number(..) | Expr::Ident(_) => expr_text(amount),
                other => format!("({})", expr_text(other)),
            };
            let _ = write!(out, "#{amount}");
            match stmt {
                Some(s) => {
                    out.push(' ');
                    print_stmt_inline(out, s, level);
                }
                None => out.push_str(";\n"),
            }
        }
        Stmt::Event { sensitivity, stmt } => {
            out.push_str(&sensitivity_text(sensitivity));
            match stmt {
                Some(s) => {
                    out.push(' ');
                    print_stmt_inline(out, s, level);
                }
                None => out.push_str(";\n"),
            }
        }
        Stmt::SystemCall { name, args } => {
            if args.is_empty() {
                let _ = writeln!(out, "{};", name.name);
            } else {
                let a: Vec<String> = args.iter().map(expr_text).collect();
                let _ = writeln!(out, "{}({});", name.name, a.join(", "));
            }
        }
        Stmt::Null => out.push_str(";\n"),
    }
}

fn print_stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    print_stmt_inline(out, s, level);
}

fn assign_text(s: &Stmt) -> String {
    match s {
        Stmt::Blocking { lhs, rhs, .. } => format!("{} = {}", expr_text(lhs), expr_text(rhs)),
        Stmt::NonBlocking { lhs, rhs, .. } => format!("{} <= {}", expr_text(lhs), expr_text(rhs)),
        _ => String::new(),
    }
}

const TERNARY_PREC: u8 = 1;
const UNARY_PREC: u8 = 13;

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Ternary { .. } => TERNARY_PREC,
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { .. } => UNARY_PREC,
        _ => u8::MAX,
    }
}

pub fn expr_text(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_child(out: &mut String, e: &Expr, min_prec: u8) {
    if expr_prec(e) < min_prec {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Ident(i) => out.push_str(&i.name),
        Expr::Number(n, _) => out.push_str(&n.text()),
        Expr::Str(s, _) => {
            out.push('"');
            out.push_str(s);
            out.push('"');
        }
        Expr::Index { base, index } => {
            let _ = write!(out, "{}[{}]", base.name, expr_text(index));
        }
        Expr::Slice { base, msb, lsb } => {
            let _ = write!(out, "{}[{}:{}]", base.name, expr_text(msb), expr_text(lsb));
        }
        Expr::Concat(items, _) => {
            out.push('{');
            out.push_str(&items.iter().map(expr_text).collect::<Vec<_>>().join(", "));
            out.push('}');
        }
        Expr::Repeat { count, items, .. } => {
            out.push('{');
            write_child(out, count, u8::MAX);
            out.push('{');
            out.push_str(&items.iter().map(expr_text).collect::<Vec<_>>().join(", "));
            out.push_str("}}");
        }
        Expr::Unary { op, operand, .. } => {
            out.push_str(op.symbol());
            // Nested unary operators are parenthesized so `~(&a)` never lexes as `~&a`.
            let need = if matches!(**operand, Expr::Unary { .. }) { u8::MAX } else { UNARY_PREC };
            write_child(out, operand, need);
        }
        Expr::Binary { op, lhs, rhs, .. } => {
            let p = op.precedence();
            write_child(out, lhs, p);
            let _ = write!(out, " {} ", op.symbol());
            write_child(out, rhs, p + 1);
        }
        Expr::Ternary { cond, then_expr, else_expr, .. } => {
            write_child(out, cond, TERNARY_PREC + 1);
            out.push_str(" ? ");
            write_child(out, then_expr, TERNARY_PREC + 1);
            out.push_str(" : ");
            write_child(out, else_expr, TERNARY_PREC);
        }
        Expr::SysCall { name, args } => {
            out.push_str(&name.name);
            if !args.is_empty() {
                let _ = write!(out, "({})", args.iter().map(expr_text).collect::<Vec<_>>().join(", "));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verilog::parser::parse_source;

    fn roundtrip(src: &str) {
        let a = parse_source(src).unwrap();
        let printed = pretty_print(&a);
        let b = parse_source(&printed).unwrap_or_else(|e| panic!("{printed}\n{e:?}"));
        assert_eq!(a, b, "{printed}");
        assert_eq!(printed, pretty_print(&b));
    }

    #[test]
    fn inverter_roundtrip() {
        roundtrip("module m(input a, output y); assign y = ~a; endmodule");
    }

    #[test]
    fn precedence_roundtrip() {
        roundtrip("module m(input a,b,c,d, output y, z, w); assign y = (a | b) & c; assign z = a - (b - c); assign w = (a ? b : c) ? d : ~(a & b); endmodule");
    }

    #[test]
    fn nested_unary_does_not_fuse() {
        let file = parse_source("module m(input [3:0] a, output y); assign y = ~(&a); endmodule").unwrap();
        let text = pretty_print(&file);
        assert!(text.contains("~(&a)"), "{text}");
        roundtrip(&text);
    }

    #[test]
    fn statements_roundtrip() {
        roundtrip(
            "module m(input clk, input [1:0] s, input a, output reg [3:0] y);
             reg [3:0] r;
             always @(posedge clk) begin : blk if (s == 2'd0) r <= 4'd0; else if (s[1]) r <= r + 1; else begin r <= {r[2:0], a}; end end
             always @* begin case (s) 2'b00, 2'b11: y = r; 2'b01: y = {4{a}}; default: y = 4'b0; endcase end
             endmodule",
        );
    }
}
