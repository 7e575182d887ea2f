//! Scripted "model" responses for the bundled fixtures, written in the mock
//! backend's `<key>.<step>.<turn>.txt` layout.

use std::path::{Path, PathBuf};

use hdlforge::backend::MockBackend;
use hdlforge::config::PipelineConfig;
use hdlforge::dedup::{decontaminate, dedup, DedupParams};
use hdlforge::eval::{load_benchmark, EvalProblem, JudgeMode};
use hdlforge::ingest::{ingest, CorpusRecord};
use hdlforge::mutate::{apply_mutation, enumerate_mutations, generate_detection_testbench, verify_mutant_detectable, Detection};
use hdlforge::util::fnv1a64;
use hdlforge::verilog::{extract_interface, parse_source, pretty_print, truth_table, Circuit, ModuleInterface, SourceFile};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn suites() -> Vec<PathBuf> {
    vec![fixtures().join("bench/nyu1.jsonl"), fixtures().join("bench/nyu2.jsonl")]
}

/// Samples per problem in the fixture config.
pub const EVAL_N: usize = 10;

/// Pipeline config pointing at `<mock_root>/augment` and `<mock_root>/eval`.
pub fn config_text(mock_root: &Path) -> String {
    format!(
        r#"seed = 7

[augment]
backend = "scripted"
batch_size = 4

[eval]
backend = "sampler"
teacher_backend = "teacher"
n = {EVAL_N}
k = [1, 5, 10]

[backends.scripted]
mode = "mock"
script_dir = "{aug}"

[backends.sampler]
mode = "mock"
script_dir = "{ev}"

[backends.teacher]
mode = "mock"
script_dir = "{ev}"
"#,
        aug = mock_root.join("augment").display(),
        ev = mock_root.join("eval").display(),
    )
}

fn fenced(code: &str) -> String {
    format!("```verilog\n{code}```\n")
}

fn generic_tb(iface: &ModuleInterface) -> String {
    let m = &iface.module_name;
    let mut s = format!("module tb_{m};\n");
    for p in iface.inputs() {
        let r = if p.width > 1 { format!("[{}:0] ", p.width - 1) } else { String::new() };
        s.push_str(&format!("  reg {r}{};\n", p.name));
    }
    for p in iface.outputs() {
        let r = if p.width > 1 { format!("[{}:0] ", p.width - 1) } else { String::new() };
        s.push_str(&format!("  wire {r}{};\n", p.name));
    }
    let conns: Vec<String> = iface.ports.iter().map(|p| format!(".{0}({0})", p.name)).collect();
    s.push_str(&format!("  {m} dut({});\n  initial begin\n", conns.join(", ")));
    for p in iface.inputs() {
        s.push_str(&format!("    {} = 0;\n", p.name));
    }
    s.push_str("    #10;\n    $finish;\n  end\nendmodule\n");
    s
}

struct Bug {
    code: String,
    operator: String,
    description: String,
    line: u32,
    witness_tb: Option<String>,
}

/// First detectable catalog mutation for combinational modules, else the
/// first applicable one.
fn pick_bug(file: &SourceFile, module: &str, comb: bool, iface: &ModuleInterface) -> Option<Bug> {
    let sites: Vec<_> = enumerate_mutations(file).into_iter().filter(|s| s.module == module).collect();
    for site in &sites {
        let Ok((mutant, desc)) = apply_mutation(file, site) else { continue };
        let witness = if comb {
            match verify_mutant_detectable(file, &mutant, module, 12) {
                Ok(Detection::Witness(w)) => Some(w),
                _ => continue,
            }
        } else {
            None
        };
        return Some(Bug {
            code: pretty_print(&mutant),
            operator: site.operator.name().to_string(),
            description: desc.human_description.split(" at line").next().unwrap_or_default().to_string(),
            line: site.line,
            witness_tb: witness.and_then(|w| generate_detection_testbench(iface, &[w]).ok()),
        });
    }
    None
}

fn responses(rec: &CorpusRecord, first: bool) -> Vec<(String, u32, String)> {
    let file = parse_source(&rec.text).expect("fixture corpus parses");
    let module = file.top().expect("module").name.name.clone();
    let iface = extract_interface(&file, &module).expect("interface");
    let comb = Circuit::elaborate(&file, &module).is_ok_and(|c| c.input_bits() <= 12);
    let names = |it: Vec<&hdlforge::verilog::PortInfo>| it.iter().map(|p| p.name.clone()).collect::<Vec<_>>().join(", ");
    let ins = names(iface.inputs().collect());
    let outs = names(iface.outputs().collect());
    let h = fnv1a64(rec.record_id.as_bytes());

    let mut out = Vec::new();
    let mut put = |step: &str, turn: u32, text: String| out.push((step.to_string(), turn, text));

    put(
        "S1",
        0,
        format!(
            "The circuit is written in Verilog. Module {module} takes {ins} and drives {outs}. It is {}.",
            if comb { "combinational" } else { "sequential, driven by a clock edge" }
        ),
    );
    let table = if comb {
        format!("```\n{}```", truth_table(&file, &module, 12).expect("comb").to_csv())
    } else {
        let mut t = String::from("| port | direction | width |\n|---|---|---|\n");
        for p in &iface.ports {
            t.push_str(&format!("| {} | {:?} | {} |\n", p.name, p.direction, p.width));
        }
        t
    };
    put("S2", 0, table);
    put("S3", 0, fenced(&format!("// {module}: ports {ins} -> {outs}\n{}", rec.text)));
    put("S4", 0, format!("Rating: {}\nThe description matches the code.", 3 + h % 3));

    let s5 = pretty_print(&file);
    if first {
        put("S5", 0, fenced(&format!("module {module}(\n  input\n")));
        put("S5", 1, fenced(&s5));
    } else {
        put("S5", 0, fenced(&s5));
    }
    let s5_file = parse_source(&s5).expect("printed code parses");
    let bug = pick_bug(&s5_file, &module, comb, &iface);

    let tb = bug.as_ref().and_then(|b| b.witness_tb.clone()).unwrap_or_else(|| generic_tb(&iface));
    put("S6", 0, fenced(&tb));
    put("S7", 0, format!("```systemverilog\nalways @(*) assert (!$isunknown({{{outs}}}));\n```\n"));
    match &bug {
        Some(b) => {
            put("S8", 0, format!("1. {}: {} (line {})\n2. Reset polarity: reset treated as active low\n", b.operator, b.description, b.line));
            put("S9", 0, fenced(&b.code));
        }
        None => {
            put("S8", 0, "1. Width mismatch: output narrower than the result\n".into());
            put("S9", 0, fenced(&s5));
        }
    }
    put("S10", 0, fenced(&tb));
    out
}

/// Records that survive ingest, dedup and decontamination with `cfg`.
pub fn curated_records(cfg: &PipelineConfig) -> Vec<CorpusRecord> {
    let ing = ingest(&fixtures().join("corpus"), &cfg.ingest).expect("ingest fixtures");
    let p = DedupParams::from_config(cfg);
    let (deduped, _, _) = dedup(&ing.records, &p);
    let problems = load_problems();
    let (clean, _) = decontaminate(&deduped, &problems, &p, cfg.decontam.threshold);
    let mut v: Vec<CorpusRecord> = clean.into_iter().filter(CorpusRecord::is_active).collect();
    v.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    v
}

pub fn load_problems() -> Vec<EvalProblem> {
    suites().iter().flat_map(|s| load_benchmark(s, None).expect("fixture benchmark")).collect()
}

fn write(dir: &Path, key: &str, step: &str, turn: u32, text: &str) {
    std::fs::write(dir.join(MockBackend::file_name(key, step, turn)), text).expect("write mock script");
}

fn failing_sample(p: &EvalProblem) -> String {
    if p.judge_mode == JudgeMode::TruthTable {
        if let Ok(file) = parse_source(&p.reference_solution) {
            let m = file.top().map(|m| m.name.name.clone()).unwrap_or_default();
            let iface = extract_interface(&file, &m).expect("interface");
            if let Some(b) = pick_bug(&file, &m, true, &iface) {
                return fenced(&b.code);
            }
        }
    }
    "```verilog\nmodule top_module(\n  input a\n```\n".into()
}

/// Writes every scripted response for the fixture pipeline under `root`.
pub fn generate(root: &Path) {
    let aug = root.join("augment");
    let ev = root.join("eval");
    std::fs::create_dir_all(&aug).unwrap();
    std::fs::create_dir_all(&ev).unwrap();
    let cfg = PipelineConfig::default();
    for (i, rec) in curated_records(&cfg).iter().enumerate() {
        for (step, turn, text) in responses(rec, i == 0) {
            write(&aug, &rec.record_id, &step, turn, &text);
        }
    }
    for p in load_problems() {
        let h = fnv1a64(p.problem_id.as_bytes());
        let c = (h % (EVAL_N as u64 + 1)) as usize;
        let bad = failing_sample(&p);
        for i in 0..EVAL_N {
            let text = if i < c { fenced(&p.reference_solution) } else { bad.clone() };
            write(&ev, &p.problem_id, "sample", i as u32, &text);
            let grade = 2 + (h >> 8).wrapping_add(i as u64) % 4;
            write(&ev, &format!("{}-s{i}", p.problem_id), "grade", 0, &format!("Score: {grade}/5\nReadable and mostly correct."));
        }
    }
}
