//! Exhaustive two-state evaluation of combinational modules.
//!
//! Expression widths follow the usual context/self-determined rules, values
//! are unsigned and at most 64 bits wide. Out-of-range bit reads yield 0 and
//! out-of-range writes are dropped. Literals containing x/z are rejected except
//! as wildcard labels of `casez`/`casex`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::check::check_file;
use super::scope::{build_scope, Scope};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("not combinational: {0}")]
    NotCombinational(String),
    #[error("exhaustive limit: {bits} input bits exceeds the limit of {limit}")]
    ExhaustiveLimit { bits: u32, limit: u32 },
    #[error("incomplete assignment: '{0}' is not assigned on every path")]
    IncompleteAssignment(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("x/z value: {0}")]
    XValue(String),
    #[error("combinational logic does not settle")]
    NoSettle,
    #[error("output '{0}' is not driven")]
    Undriven(String),
    #[error("invalid module: {0}")]
    Invalid(String),
}

impl EvalError {
    pub fn is_not_combinational(&self) -> bool {
        matches!(self, EvalError::NotCombinational(_))
    }
}

type EResult<T> = Result<T, EvalError>;

const MAX_DEPTH: usize = 16;
const MAX_LOOP_ITERATIONS: usize = 1 << 16;

#[derive(Debug, Clone)]
enum Driver {
    Assign { lhs: Expr, rhs: Expr },
    Comb { body: Stmt },
    Gate { kind: GateKind, outputs: Vec<Expr>, inputs: Vec<Expr> },
    Instance { circuit: Box<Circuit>, inputs: Vec<(usize, Option<Expr>)>, outputs: Vec<(usize, Expr)> },
}

/// An elaborated combinational module, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub name: String,
    scope: Scope,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    drivers: Vec<Driver>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortBits {
    pub name: String,
    pub width: u32,
}

impl PortBits {
    /// Bit names from most to least significant, e.g. `a[3]`..`a[0]`.
    pub fn bit_names(&self) -> Vec<String> {
        if self.width == 1 {
            vec![self.name.clone()]
        } else {
            (0..self.width).rev().map(|i| format!("{}[{i}]", self.name)).collect()
        }
    }
}

/// Output values for every input vector, in ascending input-vector order.
/// The first input port occupies the most significant bits of the vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTable {
    pub module: String,
    pub inputs: Vec<PortBits>,
    pub outputs: Vec<PortBits>,
    /// One entry per row, one value per output port.
    pub rows: Vec<Vec<u64>>,
}

impl TruthTable {
    pub fn input_bits(&self) -> u32 {
        self.inputs.iter().map(|p| p.width).sum()
    }

    /// Splits a row index into per-port input values.
    pub fn input_values(&self, row: u64) -> Vec<u64> {
        split_vector(&self.inputs, row)
    }

    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = self.inputs.iter().flat_map(PortBits::bit_names).collect();
        header.extend(self.outputs.iter().flat_map(PortBits::bit_names));
        let mut out = header.join(",");
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells = Vec::new();
            for (port, v) in self.inputs.iter().zip(self.input_values(i as u64)) {
                push_bits(&mut cells, v, port.width);
            }
            for (port, v) in self.outputs.iter().zip(row) {
                push_bits(&mut cells, *v, port.width);
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn push_bits(cells: &mut Vec<String>, v: u64, width: u32) {
    for b in (0..width).rev() {
        cells.push(((v >> b) & 1).to_string());
    }
}

pub fn split_vector(ports: &[PortBits], vector: u64) -> Vec<u64> {
    let mut shift: u32 = ports.iter().map(|p| p.width).sum();
    ports
        .iter()
        .map(|p| {
            shift -= p.width;
            (vector >> shift) & mask(p.width)
        })
        .collect()
}

/// Builds the exhaustive truth table of `module_name`.
pub fn truth_table(file: &SourceFile, module_name: &str, max_input_bits: u32) -> EResult<TruthTable> {
    let circuit = Circuit::elaborate(file, module_name)?;
    circuit.truth_table(max_input_bits)
}

impl Circuit {
    /// Elaborates `module_name` (and any same-file submodules) for evaluation.
    pub fn elaborate(file: &SourceFile, module_name: &str) -> EResult<Self> {
        if let Some(err) = check_file(file).into_iter().find(|d| d.is_error()) {
            return Err(EvalError::Invalid(err.to_string()));
        }
        Self::build(file, module_name, &HashMap::new(), 0)
    }

    pub fn input_ports(&self) -> Vec<PortBits> {
        self.port_bits(&self.inputs)
    }

    pub fn output_ports(&self) -> Vec<PortBits> {
        self.port_bits(&self.outputs)
    }

    fn port_bits(&self, idx: &[usize]) -> Vec<PortBits> {
        idx.iter()
            .map(|&i| PortBits { name: self.scope.signals[i].name.clone(), width: self.scope.signals[i].width() })
            .collect()
    }

    pub fn input_bits(&self) -> u32 {
        self.inputs.iter().map(|&i| self.scope.signals[i].width()).sum()
    }

    pub fn truth_table(&self, max_input_bits: u32) -> EResult<TruthTable> {
        let bits = self.input_bits();
        if bits > max_input_bits || bits >= 64 {
            return Err(EvalError::ExhaustiveLimit { bits, limit: max_input_bits });
        }
        let inputs = self.input_ports();
        let rows = (0..1u64 << bits)
            .map(|v| self.eval_vector(&split_vector(&inputs, v)))
            .collect::<EResult<Vec<_>>>()?;
        Ok(TruthTable { module: self.name.clone(), inputs, outputs: self.output_ports(), rows })
    }

    /// Output port values for the given input port values.
    pub fn eval_vector(&self, input_values: &[u64]) -> EResult<Vec<u64>> {
        let mut state = vec![0u64; self.scope.signals.len()];
        for (&idx, &v) in self.inputs.iter().zip(input_values) {
            state[idx] = v & mask(self.scope.signals[idx].width());
        }
        self.settle(&mut state)?;
        Ok(self.outputs.iter().map(|&i| state[i]).collect())
    }

    fn build(file: &SourceFile, module_name: &str, overrides: &HashMap<String, i64>, depth: usize) -> EResult<Self> {
        if depth > MAX_DEPTH {
            return Err(EvalError::Unsupported("instance hierarchy too deep".into()));
        }
        let m = file.module(module_name).ok_or_else(|| EvalError::UnknownModule(module_name.to_string()))?;
        let (scope, diags) = build_scope(m, overrides);
        if let Some(d) = diags.into_iter().find(|d| d.is_error()) {
            return Err(EvalError::Invalid(d.to_string()));
        }
        for s in &scope.signals {
            if s.width() > 64 {
                return Err(EvalError::Unsupported(format!("'{}' is wider than 64 bits", s.name)));
            }
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for s in scope.ports() {
            let idx = scope.signal_index(&s.name).unwrap();
            match s.direction {
                Some(Direction::Input) => inputs.push(idx),
                Some(Direction::Output) => outputs.push(idx),
                _ => return Err(EvalError::Unsupported(format!("inout port '{}'", s.name))),
            }
        }

        let mut drivers = Vec::new();
        for item in &m.items {
            match item {
                Item::Port(_) | Item::Param(_) => {}
                Item::Net(n) => {
                    for d in &n.names {
                        if let Some(init) = &d.init {
                            if n.kind != NetKind::Wire {
                                return Err(EvalError::NotCombinational(format!("initialized variable '{}'", d.name.name)));
                            }
                            drivers.push(Driver::Assign { lhs: Expr::Ident(d.name.clone()), rhs: init.clone() });
                        }
                    }
                }
                Item::Assign(a) => drivers.push(Driver::Assign { lhs: a.lhs.clone(), rhs: a.rhs.clone() }),
                Item::Always(a) => {
                    check_comb_always(a, &scope)?;
                    drivers.push(Driver::Comb { body: a.body.clone() });
                }
                Item::Initial(_) => return Err(EvalError::NotCombinational("initial block".into())),
                Item::Gate(g) => {
                    let n_out = match g.kind {
                        GateKind::Not | GateKind::Buf => g.terminals.len() - 1,
                        _ => 1,
                    };
                    drivers.push(Driver::Gate {
                        kind: g.kind,
                        outputs: g.terminals[..n_out].to_vec(),
                        inputs: g.terminals[n_out..].to_vec(),
                    });
                }
                Item::Instance(inst) => drivers.push(instance_driver(file, &scope, inst, depth)?),
            }
        }

        let circuit = Circuit { name: module_name.to_string(), scope, inputs, outputs, drivers };
        let driven = circuit.driven_names();
        for &o in &circuit.outputs {
            let name = &circuit.scope.signals[o].name;
            if !driven.contains(name) {
                return Err(EvalError::Undriven(name.clone()));
            }
        }
        Ok(circuit)
    }

    fn driven_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |e: &Expr| {
            let mut t = Vec::new();
            e.target_names(&mut t);
            out.extend(t.into_iter().map(|i| i.name.clone()));
        };
        for d in &self.drivers {
            match d {
                Driver::Assign { lhs, .. } => add(lhs),
                Driver::Comb { body } => body.walk(&mut |s| {
                    if let Stmt::Blocking { lhs, .. } | Stmt::NonBlocking { lhs, .. } = s {
                        add(lhs)
                    }
                }),
                Driver::Gate { outputs, .. } => outputs.iter().for_each(&mut add),
                Driver::Instance { outputs, .. } => outputs.iter().for_each(|(_, e)| add(e)),
            }
        }
        out
    }

    fn settle(&self, state: &mut [u64]) -> EResult<()> {
        let limit = self.drivers.len() * 2 + self.scope.signals.len() + 4;
        for _ in 0..limit {
            let mut changed = false;
            for d in &self.drivers {
                changed |= self.apply(d, state)?;
            }
            if !changed {
                return Ok(());
            }
        }
        Err(EvalError::NoSettle)
    }

    fn apply(&self, d: &Driver, state: &mut [u64]) -> EResult<bool> {
        match d {
            Driver::Assign { lhs, rhs } => {
                let w = self.width(lhs)?.max(self.width(rhs)?);
                let v = self.eval(rhs, w, state)?;
                self.write(lhs, v, state)
            }
            Driver::Comb { body } => {
                let before = state.to_vec();
                let mut pending = Vec::new();
                self.exec(body, state, &mut pending)?;
                for (lhs, v) in pending {
                    self.write(&lhs, v, state)?;
                }
                Ok(before != state)
            }
            Driver::Gate { kind, outputs, inputs } => {
                let w = self.width(&outputs[0])?;
                let vals = inputs.iter().map(|e| self.eval(e, w, state)).collect::<EResult<Vec<_>>>()?;
                let m = mask(w);
                let v = match kind {
                    GateKind::And => vals.iter().fold(m, |a, b| a & b),
                    GateKind::Nand => !vals.iter().fold(m, |a, b| a & b),
                    GateKind::Or => vals.iter().fold(0, |a, b| a | b),
                    GateKind::Nor => !vals.iter().fold(0, |a, b| a | b),
                    GateKind::Xor => vals.iter().fold(0, |a, b| a ^ b),
                    GateKind::Xnor => !vals.iter().fold(0, |a, b| a ^ b),
                    GateKind::Not => !vals[0],
                    GateKind::Buf => vals[0],
                } & m;
                let mut changed = false;
                for o in outputs {
                    changed |= self.write(o, v, state)?;
                }
                Ok(changed)
            }
            Driver::Instance { circuit, inputs, outputs } => {
                let mut sub = vec![0u64; circuit.scope.signals.len()];
                for (idx, expr) in inputs {
                    let w = circuit.scope.signals[*idx].width();
                    if let Some(e) = expr {
                        let ew = w.max(self.width(e)?);
                        sub[*idx] = self.eval(e, ew, state)? & mask(w);
                    }
                }
                circuit.settle(&mut sub)?;
                let mut changed = false;
                for (idx, lhs) in outputs {
                    changed |= self.write(lhs, sub[*idx], state)?;
                }
                Ok(changed)
            }
        }
    }

    fn exec(&self, s: &Stmt, state: &mut [u64], pending: &mut Vec<(Expr, u64)>) -> EResult<()> {
        match s {
            Stmt::Block { stmts, .. } => {
                for st in stmts {
                    self.exec(st, state, pending)?;
                }
            }
            Stmt::If { cond, then_branch, else_branch } => {
                if self.truthy(cond, state)? {
                    self.exec(then_branch, state, pending)?;
                } else if let Some(e) = else_branch {
                    self.exec(e, state, pending)?;
                }
            }
            Stmt::Case { kind, expr, arms, default } => {
                let mut cw = self.width(expr)?;
                for arm in arms {
                    for l in &arm.labels {
                        cw = cw.max(self.width(l)?);
                    }
                }
                let sel = self.eval(expr, cw, state)?;
                for arm in arms {
                    for l in &arm.labels {
                        if self.case_matches(*kind, sel, l, cw, state)? {
                            return self.exec(&arm.body, state, pending);
                        }
                    }
                }
                if let Some(d) = default {
                    self.exec(d, state, pending)?;
                }
            }
            Stmt::Blocking { lhs, rhs, .. } => {
                let w = self.width(lhs)?.max(self.width(rhs)?);
                let v = self.eval(rhs, w, state)?;
                self.write(lhs, v, state)?;
            }
            Stmt::NonBlocking { lhs, rhs, .. } => {
                let w = self.width(lhs)?.max(self.width(rhs)?);
                let v = self.eval(rhs, w, state)?;
                pending.push((lhs.clone(), v));
            }
            Stmt::For { init, cond, step, body } => {
                self.exec(init, state, pending)?;
                let mut n = 0;
                while self.truthy(cond, state)? {
                    n += 1;
                    if n > MAX_LOOP_ITERATIONS {
                        return Err(EvalError::Unsupported("loop iteration bound exceeded".into()));
                    }
                    self.exec(body, state, pending)?;
                    self.exec(step, state, pending)?;
                }
            }
            Stmt::While { cond, body } => {
                let mut n = 0;
                while self.truthy(cond, state)? {
                    n += 1;
                    if n > MAX_LOOP_ITERATIONS {
                        return Err(EvalError::Unsupported("loop iteration bound exceeded".into()));
                    }
                    self.exec(body, state, pending)?;
                }
            }
            Stmt::Repeat { count, body } => {
                let w = self.width(count)?;
                let n = self.eval(count, w, state)?;
                if n as usize > MAX_LOOP_ITERATIONS {
                    return Err(EvalError::Unsupported("loop iteration bound exceeded".into()));
                }
                for _ in 0..n {
                    self.exec(body, state, pending)?;
                }
            }
            Stmt::SystemCall { .. } | Stmt::Null => {}
            Stmt::Forever(_) | Stmt::Delay { .. } | Stmt::Event { .. } => {
                return Err(EvalError::NotCombinational("timing control in always block".into()))
            }
        }
        Ok(())
    }

    fn case_matches(&self, kind: CaseKind, sel: u64, label: &Expr, cw: u32, state: &[u64]) -> EResult<bool> {
        let m = mask(cw);
        if let Expr::Number(n, _) = label {
            let (v, x, z) = n.bits().ok_or_else(|| EvalError::Unsupported(format!("literal '{}'", n.text())))?;
            let (dont_care, never) = match kind {
                CaseKind::Case => (0, x | z),
                CaseKind::Casez => (z, x),
                CaseKind::Casex => (x | z, 0),
            };
            if never != 0 {
                return Ok(false);
            }
            return Ok((sel ^ v) & !dont_care & m == 0);
        }
        let v = self.eval(label, cw, state)?;
        Ok((sel ^ v) & m == 0)
    }

    fn truthy(&self, e: &Expr, state: &[u64]) -> EResult<bool> {
        let w = self.width(e)?;
        Ok(self.eval(e, w, state)? != 0)
    }

    fn width(&self, e: &Expr) -> EResult<u32> {
        let w = self
            .scope
            .self_width(e)
            .ok_or_else(|| EvalError::Unsupported(format!("cannot size expression at {}:{}", e.span().line, e.span().col)))?;
        if w > 64 {
            return Err(EvalError::Unsupported("expression wider than 64 bits".into()));
        }
        Ok(w)
    }

    fn const_index(&self, e: &Expr) -> EResult<i64> {
        self.scope
            .const_eval(e)
            .ok_or_else(|| EvalError::Unsupported("part-select bounds must be constant".into()))
    }

    /// Evaluates `e` at context width `w` (w >= self width of `e`).
    fn eval(&self, e: &Expr, w: u32, state: &[u64]) -> EResult<u64> {
        let m = mask(w);
        Ok(match e {
            Expr::Number(n, _) => {
                let (v, x, z) = n.bits().ok_or_else(|| EvalError::Unsupported(format!("literal '{}'", n.text())))?;
                if x | z != 0 {
                    return Err(EvalError::XValue(format!("literal '{}'", n.text())));
                }
                v & m
            }
            Expr::Str(..) => return Err(EvalError::Unsupported("string in expression".into())),
            Expr::Ident(i) => match self.scope.signal_index(&i.name) {
                Some(idx) => state[idx] & m,
                None => {
                    let p = self.scope.param(&i.name).ok_or_else(|| EvalError::Invalid(format!("undeclared '{}'", i.name)))?;
                    (p.value as u64) & m & mask(p.width)
                }
            },
            Expr::Index { base, index } => {
                let iw = self.width(index)?;
                let i = self.eval(index, iw, state)? as i64;
                match self.scope.signal_index(&base.name) {
                    Some(idx) => match self.scope.signals[idx].bit_offset(i) {
                        Some(off) => (state[idx] >> off) & 1,
                        None => 0,
                    },
                    None => {
                        let p = self.scope.param(&base.name).ok_or_else(|| EvalError::Invalid(format!("undeclared '{}'", base.name)))?;
                        if (0..64).contains(&i) { ((p.value as u64) >> i) & 1 } else { 0 }
                    }
                }
            }
            Expr::Slice { base, msb, lsb } => {
                let (hi, lo) = (self.const_index(msb)?, self.const_index(lsb)?);
                let idx = self
                    .scope
                    .signal_index(&base.name)
                    .ok_or_else(|| EvalError::Unsupported(format!("part-select of '{}'", base.name)))?;
                let sig = &self.scope.signals[idx];
                let n = (hi - lo).unsigned_abs() + 1;
                let step: i64 = if hi >= lo { -1 } else { 1 };
                let mut v = 0u64;
                let mut i = hi;
                for _ in 0..n {
                    v <<= 1;
                    if let Some(off) = sig.bit_offset(i) {
                        v |= (state[idx] >> off) & 1;
                    }
                    i += step;
                }
                v & m
            }
            Expr::Concat(items, _) => {
                let mut v = 0u64;
                for it in items {
                    let iw = self.width(it)?;
                    v = v.checked_shl(iw).unwrap_or(0) | self.eval(it, iw, state)?;
                }
                v & m
            }
            Expr::Repeat { count, items, .. } => {
                let n = self.const_index(count)?;
                let mut v = 0u64;
                for _ in 0..n {
                    for it in items {
                        let iw = self.width(it)?;
                        v = v.checked_shl(iw).unwrap_or(0) | self.eval(it, iw, state)?;
                    }
                }
                v & m
            }
            Expr::Unary { op, operand, .. } => match op {
                UnaryOp::Plus => self.eval(operand, w, state)?,
                UnaryOp::Neg => self.eval(operand, w, state)?.wrapping_neg() & m,
                UnaryOp::BitNot => !self.eval(operand, w, state)? & m,
                UnaryOp::LogicalNot => u64::from(!self.truthy(operand, state)?),
                _ => {
                    let ow = self.width(operand)?;
                    let v = self.eval(operand, ow, state)?;
                    let all = v == mask(ow);
                    let any = v != 0;
                    let parity = v.count_ones() % 2 == 1;
                    u64::from(match op {
                        UnaryOp::ReduceAnd => all,
                        UnaryOp::ReduceNand => !all,
                        UnaryOp::ReduceOr => any,
                        UnaryOp::ReduceNor => !any,
                        UnaryOp::ReduceXor => parity,
                        UnaryOp::ReduceXnor => !parity,
                        _ => unreachable!(),
                    })
                }
            },
            Expr::Binary { op, lhs, rhs, .. } => {
                use BinaryOp::*;
                match op {
                    Add | Sub | Mul | Div | Mod | BitAnd | BitOr | BitXor | BitXnor => {
                        let a = self.eval(lhs, w, state)?;
                        let b = self.eval(rhs, w, state)?;
                        (match op {
                            Add => a.wrapping_add(b),
                            Sub => a.wrapping_sub(b),
                            Mul => a.wrapping_mul(b),
                            Div | Mod if b == 0 => return Err(EvalError::XValue("division by zero".into())),
                            Div => a / b,
                            Mod => a % b,
                            BitAnd => a & b,
                            BitOr => a | b,
                            BitXor => a ^ b,
                            _ => !(a ^ b),
                        }) & m
                    }
                    Pow => {
                        let a = self.eval(lhs, w, state)?;
                        let rw = self.width(rhs)?;
                        let b = self.eval(rhs, rw, state)?;
                        a.wrapping_pow(u32::try_from(b).unwrap_or(u32::MAX)) & m
                    }
                    Shl | Shr | AShl | AShr => {
                        let a = self.eval(lhs, w, state)?;
                        let rw = self.width(rhs)?;
                        let b = self.eval(rhs, rw, state)?;
                        if b >= 64 {
                            0
                        } else if matches!(op, Shl | AShl) {
                            (a << b) & m
                        } else {
                            a >> b
                        }
                    }
                    Lt | Le | Gt | Ge | Eq | Ne | CaseEq | CaseNe => {
                        let ow = self.width(lhs)?.max(self.width(rhs)?);
                        let a = self.eval(lhs, ow, state)?;
                        let b = self.eval(rhs, ow, state)?;
                        u64::from(match op {
                            Lt => a < b,
                            Le => a <= b,
                            Gt => a > b,
                            Ge => a >= b,
                            Eq | CaseEq => a == b,
                            _ => a != b,
                        })
                    }
                    LogicalAnd => u64::from(self.truthy(lhs, state)? && self.truthy(rhs, state)?),
                    LogicalOr => u64::from(self.truthy(lhs, state)? || self.truthy(rhs, state)?),
                }
            }
            Expr::Ternary { cond, then_expr, else_expr, .. } => {
                if self.truthy(cond, state)? {
                    self.eval(then_expr, w, state)?
                } else {
                    self.eval(else_expr, w, state)?
                }
            }
            Expr::SysCall { name, args } => match name.name.as_str() {
                "$signed" | "$unsigned" if args.len() == 1 => self.eval(&args[0], w, state)?,
                other => return Err(EvalError::Unsupported(format!("system function {other}"))),
            },
        })
    }

    /// Writes `value` into an assignment target; returns whether state changed.
    fn write(&self, lhs: &Expr, value: u64, state: &mut [u64]) -> EResult<bool> {
        match lhs {
            Expr::Ident(i) => {
                let idx = self.signal(&i.name)?;
                let v = value & mask(self.scope.signals[idx].width());
                let changed = state[idx] != v;
                state[idx] = v;
                Ok(changed)
            }
            Expr::Index { base, index } => {
                let idx = self.signal(&base.name)?;
                let iw = self.width(index)?;
                let i = self.eval(index, iw, state)? as i64;
                let Some(off) = self.scope.signals[idx].bit_offset(i) else { return Ok(false) };
                let old = state[idx];
                state[idx] = (old & !(1 << off)) | ((value & 1) << off);
                Ok(old != state[idx])
            }
            Expr::Slice { base, msb, lsb } => {
                let idx = self.signal(&base.name)?;
                let (hi, lo) = (self.const_index(msb)?, self.const_index(lsb)?);
                let old = state[idx];
                let n = (hi - lo).unsigned_abs() + 1;
                let step: i64 = if hi >= lo { 1 } else { -1 };
                // Walk from the select's lsb upward.
                let mut i = lo;
                for bit in 0..n {
                    if let Some(off) = self.scope.signals[idx].bit_offset(i) {
                        let b = (value >> bit) & 1;
                        state[idx] = (state[idx] & !(1 << off)) | (b << off);
                    }
                    i += step;
                }
                Ok(old != state[idx])
            }
            Expr::Concat(items, _) => {
                let mut changed = false;
                let mut shift = 0u32;
                for it in items.iter().rev() {
                    let iw = self.width(it)?;
                    let part = value.checked_shr(shift).unwrap_or(0) & mask(iw);
                    changed |= self.write(it, part, state)?;
                    shift += iw;
                }
                Ok(changed)
            }
            _ => Err(EvalError::Invalid("invalid assignment target".into())),
        }
    }

    fn signal(&self, name: &str) -> EResult<usize> {
        self.scope.signal_index(name).ok_or_else(|| EvalError::Invalid(format!("undeclared '{name}'")))
    }
}

fn instance_driver(file: &SourceFile, scope: &Scope, inst: &Instance, depth: usize) -> EResult<Driver> {
    let target = file
        .module(&inst.module.name)
        .ok_or_else(|| EvalError::Unsupported(format!("instance of undefined module '{}'", inst.module.name)))?;
    let (tscope, _) = build_scope(target, &HashMap::new());
    let mut overrides = HashMap::new();
    let public: Vec<&str> = target.params.iter().map(|p| p.name.name.as_str()).chain(target.items.iter().filter_map(|i| match i {
        Item::Param(p) if !p.local => Some(p.name.name.as_str()),
        _ => None,
    })).collect();
    for (pos, c) in inst.params.iter().enumerate() {
        let (name, expr) = match c {
            Connection::Named { port, expr: Some(e) } => (port.name.as_str(), e),
            Connection::Named { .. } => continue,
            Connection::Positional(e) => (*public.get(pos).ok_or_else(|| EvalError::Invalid("too many parameter overrides".into()))?, e),
        };
        let v = scope.const_eval(expr).ok_or_else(|| EvalError::Unsupported("non-constant parameter override".into()))?;
        overrides.insert(name.to_string(), v);
    }
    let circuit = Circuit::build(file, &inst.module.name, &overrides, depth + 1)?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (pos, c) in inst.connections.iter().enumerate() {
        let (port, expr) = match c {
            Connection::Named { port, expr } => (port.name.clone(), expr.clone()),
            Connection::Positional(e) => {
                (tscope.port_order.get(pos).cloned().ok_or_else(|| EvalError::Invalid("too many connections".into()))?, Some(e.clone()))
            }
        };
        let idx = circuit
            .scope
            .signal_index(&port)
            .ok_or_else(|| EvalError::Invalid(format!("no port '{port}' on '{}'", inst.module.name)))?;
        match circuit.scope.signals[idx].direction {
            Some(Direction::Input) => inputs.push((idx, expr)),
            Some(Direction::Output) => {
                if let Some(e) = expr {
                    if !e.is_lvalue() {
                        return Err(EvalError::Invalid(format!("output port '{port}' connected to an expression")));
                    }
                    outputs.push((idx, e));
                }
            }
            _ => return Err(EvalError::Unsupported(format!("inout port '{port}'"))),
        }
    }
    Ok(Driver::Instance { circuit: Box::new(circuit), inputs, outputs })
}

fn check_comb_always(a: &AlwaysBlock, scope: &Scope) -> EResult<()> {
    let Some(sens) = &a.sensitivity else {
        return Err(EvalError::NotCombinational("always block without event control".into()));
    };
    if sens.has_edge() {
        return Err(EvalError::NotCombinational("edge-triggered always block".into()));
    }
    let mut timing = false;
    let mut written = BTreeSet::new();
    let mut read = BTreeSet::new();
    a.body.walk(&mut |s| {
        match s {
            Stmt::Delay { .. } | Stmt::Event { .. } | Stmt::Forever(_) => timing = true,
            Stmt::Blocking { lhs, .. } | Stmt::NonBlocking { lhs, .. } => {
                let mut t = Vec::new();
                lhs.target_names(&mut t);
                written.extend(t.into_iter().map(|i| i.name.clone()));
            }
            _ => {}
        }
        for e in s.own_read_exprs() {
            let mut names = Vec::new();
            e.referenced_names(&mut names);
            read.extend(names.into_iter().map(|i| i.name.clone()));
        }
    });
    if timing {
        return Err(EvalError::NotCombinational("timing control in always block".into()));
    }
    if let Sensitivity::List(items) = sens {
        let listed: BTreeSet<&str> = items.iter().map(|i| i.signal.name.as_str()).collect();
        for r in &read {
            if scope.signal(r).is_some() && !written.contains(r) && !listed.contains(r.as_str()) {
                return Err(EvalError::NotCombinational(format!("incomplete sensitivity list (missing '{r}')")));
            }
        }
    }
    let assigned = definitely_assigned(&a.body, &BTreeSet::new());
    for w in &written {
        if !assigned.contains(w) {
            return Err(EvalError::IncompleteAssignment(w.clone()));
        }
    }
    Ok(())
}

fn definitely_assigned(s: &Stmt, before: &BTreeSet<String>) -> BTreeSet<String> {
    match s {
        Stmt::Blocking { lhs, .. } | Stmt::NonBlocking { lhs, .. } => {
            let mut out = before.clone();
            let mut t = Vec::new();
            lhs.target_names(&mut t);
            out.extend(t.into_iter().map(|i| i.name.clone()));
            out
        }
        Stmt::Block { stmts, .. } => stmts.iter().fold(before.clone(), |acc, st| definitely_assigned(st, &acc)),
        Stmt::If { then_branch, else_branch: Some(e), .. } => {
            let a = definitely_assigned(then_branch, before);
            let b = definitely_assigned(e, before);
            a.intersection(&b).cloned().collect()
        }
        Stmt::Case { arms, default: Some(d), .. } => {
            let mut acc = definitely_assigned(d, before);
            for arm in arms {
                let a = definitely_assigned(&arm.body, before);
                acc = acc.intersection(&a).cloned().collect();
            }
            acc
        }
        // Loop bounds in combinational code are constant in practice, so the
        // body is taken to run at least once.
        Stmt::For { init, body, .. } => definitely_assigned(body, &definitely_assigned(init, before)),
        _ => before.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verilog::parser::parse_source;

    fn table(src: &str) -> EResult<TruthTable> {
        let f = parse_source(src).unwrap();
        truth_table(&f, &f.modules[0].name.name, 16)
    }

    #[test]
    fn inverter() {
        let t = table("module inv(input a, output y); assign y = ~a; endmodule").unwrap();
        assert_eq!(t.rows, vec![vec![1], vec![0]]);
    }

    #[test]
    fn sequential_rejected() {
        let err = table("module d(input clk, input d, output reg q); always @(posedge clk) q <= d; endmodule").unwrap_err();
        assert!(err.to_string().starts_with("not combinational"), "{err}");
    }

    #[test]
    fn exhaustive_limit() {
        let f = parse_source("module w(input [16:0] a, output y); assign y = ^a; endmodule").unwrap();
        let err = truth_table(&f, "w", 16).unwrap_err();
        assert!(err.to_string().starts_with("exhaustive limit"), "{err}");
    }

    #[test]
    fn carry_uses_context_width() {
        let t = table("module add(input [1:0] a, b, output [2:0] s); assign s = a + b; endmodule").unwrap();
        // a=3, b=3 is row 0b1111.
        assert_eq!(t.rows[15], vec![6]);
        let t = table("module add(input [1:0] a, b, output c, output [1:0] s); assign {c, s} = a + b; endmodule").unwrap();
        assert_eq!(t.rows[15], vec![1, 2]);
    }

    #[test]
    fn missing_default_is_incomplete() {
        let err = table("module m(input [1:0] s, input a, output reg y); always @* case (s) 2'b00: y = a; 2'b01: y = ~a; endcase endmodule").unwrap_err();
        assert!(matches!(err, EvalError::IncompleteAssignment(ref n) if n == "y"), "{err}");
        table("module m(input [1:0] s, input a, output reg y); always @* begin y = 1'b0; case (s) 2'b00: y = a; endcase end endmodule").unwrap();
    }

    #[test]
    fn incomplete_sensitivity() {
        let err = table("module m(input a, b, output reg y); always @(a) y = a & b; endmodule").unwrap_err();
        assert!(err.is_not_combinational());
    }

    #[test]
    fn casez_wildcards() {
        let t = table("module p(input [2:0] r, output reg [1:0] g); always @* casez (r) 3'b1??: g = 2'd2; 3'b01?: g = 2'd1; default: g = 2'd0; endcase endmodule").unwrap();
        let g: Vec<u64> = t.rows.iter().map(|r| r[0]).collect();
        assert_eq!(g, vec![0, 0, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn hierarchy_and_gates() {
        let src = "module top(input a, b, output y); wire t; nand g(t, a, b); inv u(.i(t), .o(y)); endmodule\nmodule inv(input i, output o); assign o = ~i; endmodule";
        let t = table(src).unwrap();
        let y: Vec<u64> = t.rows.iter().map(|r| r[0]).collect();
        assert_eq!(y, vec![0, 0, 0, 1]);
    }

    #[test]
    fn loops_and_slices() {
        let src = "module rev(input [3:0] a, output reg [3:0] y); integer i; always @* begin for (i = 0; i < 4; i = i + 1) y[i] = a[3 - i]; end endmodule";
        let t = table(src).unwrap();
        assert_eq!(t.rows[0b0001], vec![0b1000]);
        assert_eq!(t.rows[0b0110], vec![0b0110]);
        let t = table("module s(input [7:0] a, output [3:0] y); assign y = a[5:2]; endmodule").unwrap();
        assert_eq!(t.rows[0b0011_1100], vec![0b1111]);
    }

    #[test]
    fn undriven_output() {
        assert!(matches!(table("module m(input a, output y); endmodule"), Err(EvalError::Undriven(_))));
    }

    #[test]
    fn csv_export() {
        let t = table("module m(input [1:0] a, output y); assign y = &a; endmodule").unwrap();
        assert_eq!(t.to_csv(), "a[1],a[0],y\n0,0,0\n0,1,0\n1,0,0\n1,1,1\n");
    }
}
