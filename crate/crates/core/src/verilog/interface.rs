use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ast::{Direction, SourceFile};
use super::scope::build_scope;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortInfo {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
    pub signed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleInterface {
    pub module_name: String,
    pub ports: Vec<PortInfo>,
}

impl ModuleInterface {
    pub fn inputs(&self) -> impl Iterator<Item = &PortInfo> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &PortInfo> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    pub fn input_bits(&self) -> u32 {
        self.inputs().map(|p| p.width).sum()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InterfaceError {
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("port '{0}' has no direction")]
    MissingDirection(String),
}

/// Port list of `module_name` in declaration order, widths from `[msb:lsb]`
/// with parameters at their default values.
pub fn extract_interface(file: &SourceFile, module_name: &str) -> Result<ModuleInterface, InterfaceError> {
    let m = file.module(module_name).ok_or_else(|| InterfaceError::UnknownModule(module_name.to_string()))?;
    let (scope, _) = build_scope(m, &HashMap::new());
    let mut ports = Vec::new();
    for name in &scope.port_order {
        let sig = scope.signal(name).ok_or_else(|| InterfaceError::MissingDirection(name.clone()))?;
        let direction = sig.direction.ok_or_else(|| InterfaceError::MissingDirection(name.clone()))?;
        ports.push(PortInfo { name: name.clone(), direction, width: sig.width(), signed: sig.signed });
    }
    Ok(ModuleInterface { module_name: module_name.to_string(), ports })
}
