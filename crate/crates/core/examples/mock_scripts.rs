//! Writes scripted backend responses for the bundled fixtures.
//!
//! Usage: cargo run --example mock_scripts -- <out-dir>
//! The config to use with them is written to `<out-dir>/pipeline.toml`.

#[path = "../tests/support/mockgen.rs"]
mod mockgen;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mock".into());
    let root = std::path::absolute(&out).expect("resolve output dir");
    mockgen::generate(&root);
    std::fs::write(root.join("pipeline.toml"), mockgen::config_text(&root)).expect("write config");
    println!("wrote scripts and {}", root.join("pipeline.toml").display());
}
