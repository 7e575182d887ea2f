//! Truth tables of bundled samples against reference functions written in Rust.

mod support;

use hdlforge::verilog::{parse_source, truth_table, TruthTable};

fn table(name: &str) -> TruthTable {
    let path = support::mockgen::fixtures().join("samples").join(name);
    let file = parse_source(&std::fs::read_to_string(path).unwrap()).unwrap();
    let top = file.top().unwrap().name.name.clone();
    truth_table(&file, &top, 16).unwrap()
}

/// Checks every row against `f`, which maps input port values to output port values.
fn agrees(name: &str, f: impl Fn(&[u64]) -> Vec<u64>) {
    let t = table(name);
    assert_eq!(t.rows.len(), 1 << t.input_bits(), "{name}");
    for (i, row) in t.rows.iter().enumerate() {
        let ins = t.input_values(i as u64);
        assert_eq!(row, &f(&ins), "{name} at inputs {ins:?}");
    }
}

#[test]
fn arithmetic() {
    agrees("c_adder4.v", |v| vec![v[0] + v[1]]);
    agrees("c_sub4.v", |v| {
        let t = table("c_sub4.v");
        let w = t.outputs[0].width;
        vec![v[0].wrapping_sub(v[1]) & ((1 << w) - 1)]
    });
    agrees("c_max2.v", |v| vec![v[0].max(v[1])]);
    agrees("c_eq4.v", |v| vec![u64::from(v[0] == v[1])]);
    agrees("c_half_adder.v", |v| vec![v[0] ^ v[1], v[0] & v[1]]);
    agrees("c_full_adder.v", |v| {
        let s = v[0] + v[1] + v[2];
        vec![s & 1, s >> 1]
    });
}

#[test]
fn selection_and_encoding() {
    agrees("c_mux2.v", |v| vec![if v[2] == 1 { v[1] } else { v[0] }]);
    agrees("c_decoder2to4.v", |v| {
        let t = table("c_decoder2to4.v");
        let en = t.inputs.iter().position(|p| p.name == "en");
        let sel = t.inputs.iter().position(|p| p.width == 2).unwrap();
        let on = en.is_none_or(|e| v[e] == 1);
        vec![if on { 1 << v[sel] } else { 0 }]
    });
    agrees("c_priority_enc.v", |v| {
        let r = v[0];
        if r == 0 {
            vec![0, 0]
        } else {
            vec![63 - u64::from(r.leading_zeros()), 1]
        }
    });
    agrees("c_parity.v", |v| vec![u64::from(v[0].count_ones() % 2)]);
    agrees("c_bitrev.v", |v| {
        let t = table("c_bitrev.v");
        let w = t.inputs[0].width;
        vec![(0..w).fold(0, |acc, i| acc | (((v[0] >> i) & 1) << (w - 1 - i)))]
    });
}
