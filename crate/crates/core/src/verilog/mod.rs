//! Front end for a synthesizable Verilog-2001 subset.

pub mod ast;
pub mod check;
pub mod diag;
pub mod eval;
pub mod interface;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod scope;

pub use ast::SourceFile;
pub use check::{check_syntax, ValidationReport, Verdict};
pub use diag::{Diagnostic, Severity};
pub use eval::{truth_table, Circuit, EvalError, PortBits, TruthTable};
pub use interface::{extract_interface, ModuleInterface, PortInfo};
pub use parser::parse_source;
pub use printer::pretty_print;
