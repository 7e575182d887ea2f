use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
    S10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Prose,
    Code,
    Table,
    Rating,
    ErrorList,
}

impl StepId {
    pub const ALL: [StepId; 10] = [
        StepId::S1,
        StepId::S2,
        StepId::S3,
        StepId::S4,
        StepId::S5,
        StepId::S6,
        StepId::S7,
        StepId::S8,
        StepId::S9,
        StepId::S10,
    ];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn parse(s: &str) -> Option<Self> {
        let n: usize = s.strip_prefix('S')?.parse().ok()?;
        Self::ALL.get(n.checked_sub(1)?).copied()
    }

    pub fn depends_on(self) -> &'static [StepId] {
        use StepId::*;
        match self {
            S1 => &[],
            S2 => &[S1],
            S3 => &[S2],
            S4 => &[S3],
            S5 => &[S4],
            S6 | S7 | S8 => &[S5],
            S9 => &[S8],
            S10 => &[S9],
        }
    }

    /// Transitive dependencies.
    pub fn ancestors(self) -> Vec<StepId> {
        let mut out = Vec::new();
        let mut stack = self.depends_on().to_vec();
        while let Some(s) = stack.pop() {
            if !out.contains(&s) {
                out.push(s);
                stack.extend_from_slice(s.depends_on());
            }
        }
        out.sort();
        out
    }

    pub fn output_kind(self) -> OutputKind {
        use StepId::*;
        match self {
            S1 => OutputKind::Prose,
            S2 => OutputKind::Table,
            S4 => OutputKind::Rating,
            S8 => OutputKind::ErrorList,
            S3 | S5 | S6 | S7 | S9 | S10 => OutputKind::Code,
        }
    }

    pub fn template_id(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

pub fn default_template(step: StepId) -> &'static str {
    match step {
        StepId::S1 => include_str!("../../templates/S1.txt"),
        StepId::S2 => include_str!("../../templates/S2.txt"),
        StepId::S3 => include_str!("../../templates/S3.txt"),
        StepId::S4 => include_str!("../../templates/S4.txt"),
        StepId::S5 => include_str!("../../templates/S5.txt"),
        StepId::S6 => include_str!("../../templates/S6.txt"),
        StepId::S7 => include_str!("../../templates/S7.txt"),
        StepId::S8 => include_str!("../../templates/S8.txt"),
        StepId::S9 => include_str!("../../templates/S9.txt"),
        StepId::S10 => include_str!("../../templates/S10.txt"),
    }
}
