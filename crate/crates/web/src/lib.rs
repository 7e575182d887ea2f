//! Browser bindings: syntax check, truth table and mutation report for a
//! pasted Verilog module.

use hdlforge::ingest::{normalize_text, record_id};
use hdlforge::mutate::{generate_detection_testbench, mutation_report};
use hdlforge::verilog::{check_syntax, extract_interface, parse_source, truth_table, SourceFile};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_BITS: u32 = 12;

fn parsed(source: &str) -> Result<SourceFile, String> {
    parse_source(source).map_err(|d| d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n"))
}

fn pick_module(file: &SourceFile, module: &str) -> Result<String, String> {
    if module.trim().is_empty() {
        file.top().map(|m| m.name.name.clone()).ok_or_else(|| "no module in source".to_string())
    } else if file.module(module.trim()).is_some() {
        Ok(module.trim().to_string())
    } else {
        Err(format!("no module named '{}'", module.trim()))
    }
}

/// Verdict and diagnostics as JSON.
pub fn check_json(source: &str) -> String {
    let r = check_syntax(source);
    json!({
        "verdict": format!("{:?}", r.verdict),
        "errors": r.error_count(),
        "warnings": r.warning_count(),
        "diagnostics": r.diagnostics,
    })
    .to_string()
}

/// Truth table as CSV; an empty `module` selects the top module.
pub fn truth_table_csv(source: &str, module: &str) -> Result<String, String> {
    let file = parsed(source)?;
    let name = pick_module(&file, module)?;
    truth_table(&file, &name, MAX_BITS).map(|t| t.to_csv()).map_err(|e| e.to_string())
}

/// Mutation report entries, each with a detection testbench when a witness exists.
pub fn mutations_json(source: &str, module: &str) -> Result<String, String> {
    let file = parsed(source)?;
    let name = pick_module(&file, module)?;
    let iface = extract_interface(&file, &name).map_err(|e| e.to_string())?;
    let id = record_id(&normalize_text(source));
    let rows: Vec<serde_json::Value> = mutation_report(&id, &file, &name, MAX_BITS)
        .into_iter()
        .map(|e| {
            let tb = e.witness.as_ref().and_then(|w| generate_detection_testbench(&iface, std::slice::from_ref(w)).ok());
            json!({ "entry": e, "testbench": tb })
        })
        .collect();
    Ok(serde_json::Value::Array(rows).to_string())
}

#[wasm_bindgen]
pub fn check(source: &str) -> String {
    check_json(source)
}

#[wasm_bindgen(js_name = truthTable)]
pub fn truth_table_js(source: &str, module: &str) -> Result<String, JsError> {
    truth_table_csv(source, module).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mutations(source: &str, module: &str) -> Result<String, JsError> {
    mutations_json(source, module).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MUX: &str = "module mux2(input a, input b, input sel, output y);\n  assign y = sel ? b : a;\nendmodule\n";

    #[test]
    fn check_reports_errors() {
        let v: serde_json::Value = serde_json::from_str(&check_json("module m(input a, output y);\n  assign y = a\nendmodule\n")).unwrap();
        assert_eq!(v["verdict"], "Rejected");
        assert_eq!(v["diagnostics"][0]["line"], 2);
    }

    #[test]
    fn table_and_mutations() {
        let csv = truth_table_csv(MUX, "").unwrap();
        assert_eq!(csv.lines().count(), 9);
        let m: serde_json::Value = serde_json::from_str(&mutations_json(MUX, "mux2").unwrap()).unwrap();
        let first = &m[0];
        assert_eq!(first["entry"]["detectable"], true);
        assert!(first["testbench"].as_str().unwrap().contains("module tb_mux2"));
        assert!(truth_table_csv(MUX, "nope").is_err());
    }
}
