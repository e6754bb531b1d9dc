use std::fmt;

use serde::Serialize;

use super::{IsaConfig, Opcode, Program};

/// A reason a program cannot run on a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DisabledOpcode {
        index: usize,
        op: Opcode,
    },
    Register {
        index: usize,
        register: u8,
        register_count: u32,
    },
    ProgramCounter {
        index: usize,
        pc_width_bits: u32,
    },
    DataAddress {
        address: u32,
        bar_width_bits: u32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DisabledOpcode { index, op } => {
                write!(f, "instruction {index}: opcode {op} is disabled")
            }
            Violation::Register {
                index,
                register,
                register_count,
            } => {
                write!(
                    f,
                    "instruction {index}: x{register} outside the {register_count}-register file"
                )
            }
            Violation::ProgramCounter {
                index,
                pc_width_bits,
            } => {
                write!(
                    f,
                    "instruction {index} not addressable with a {pc_width_bits}-bit PC"
                )
            }
            Violation::DataAddress {
                address,
                bar_width_bits,
            } => {
                write!(
                    f,
                    "data address {address} not addressable with a {bar_width_bits}-bit BAR"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn fits(value: u64, bits: u32) -> bool {
    bits >= 64 || value >> bits == 0
}

/// Statically checks a program against a configuration. Instruction-level
/// violations are listed per instruction; the data segment is reported once,
/// at its highest unaddressable word.
pub fn validate(program: &Program, config: &IsaConfig) -> ValidationReport {
    let mut violations = Vec::new();
    for (index, ins) in program.instructions.iter().enumerate() {
        if !config.is_enabled(ins.op) {
            violations.push(Violation::DisabledOpcode { index, op: ins.op });
        }
        if let Some(register) = ins
            .registers()
            .filter(|&r| r as u32 >= config.register_count)
            .max()
        {
            violations.push(Violation::Register {
                index,
                register,
                register_count: config.register_count,
            });
        }
        if !fits(index as u64, config.pc_width_bits) {
            violations.push(Violation::ProgramCounter {
                index,
                pc_width_bits: config.pc_width_bits,
            });
        }
    }
    if let Some(max) = program.data.max_address() {
        if !fits(max as u64, config.bar_width_bits) {
            violations.push(Violation::DataAddress {
                address: max,
                bar_width_bits: config.bar_width_bits,
            });
        }
    }
    ValidationReport { violations }
}
