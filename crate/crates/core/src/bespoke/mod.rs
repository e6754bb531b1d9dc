//! Usage analysis and derivation of trimmed core configurations.

mod cost;

use std::collections::BTreeSet;

use serde::Serialize;

pub use cost::{
    estimate_core_savings, rom_cost, CellGranularity, Component, ComponentCostTable, Removal,
    RomCellCost, RomCost, SavingsError, SavingsReport, Share,
};

use crate::isa::{IsaConfig, Opcode, Precision, Program};
use crate::machine::{CoreConfig, Machine, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Static,
    Dynamic,
}

/// What a program (or a set of programs) needs from the core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsageProfile {
    pub kind: ProfileKind,
    pub used_opcodes: BTreeSet<Opcode>,
    pub used_registers: BTreeSet<u8>,
    pub code_size: usize,
    pub max_data_address: Option<u32>,
}

impl UsageProfile {
    pub fn used_precisions(&self) -> BTreeSet<Precision> {
        self.used_opcodes
            .iter()
            .filter_map(|op| op.mac_precision())
            .collect()
    }

    /// Profile covering both programs.
    pub fn union(&self, other: &UsageProfile) -> UsageProfile {
        UsageProfile {
            kind: if self.kind == other.kind {
                self.kind
            } else {
                ProfileKind::Static
            },
            used_opcodes: self
                .used_opcodes
                .union(&other.used_opcodes)
                .copied()
                .collect(),
            used_registers: self
                .used_registers
                .union(&other.used_registers)
                .copied()
                .collect(),
            code_size: self.code_size.max(other.code_size),
            max_data_address: self.max_data_address.max(other.max_data_address),
        }
    }

    /// Opcodes enabled in `config` that the profile never uses.
    pub fn unused_opcodes(&self, config: &IsaConfig) -> Vec<Opcode> {
        config
            .enabled
            .difference(&self.used_opcodes)
            .copied()
            .collect()
    }
}

/// Every opcode and register named in the program text. x0 is always
/// counted for a non-empty program.
pub fn analyze_static(program: &Program) -> UsageProfile {
    let mut used_opcodes = BTreeSet::new();
    let mut used_registers = BTreeSet::new();
    for ins in &program.instructions {
        used_opcodes.insert(ins.op);
        used_registers.extend(ins.registers());
    }
    if !program.is_empty() {
        used_registers.insert(0);
    }
    UsageProfile {
        kind: ProfileKind::Static,
        used_opcodes,
        used_registers,
        code_size: program.len(),
        max_data_address: program.data.max_address(),
    }
}

/// Opcodes and registers of the instructions actually retired while running
/// `program` on `config` with the given memory words poked in first.
pub fn analyze_dynamic(
    program: &Program,
    config: &CoreConfig,
    inputs: &[(u32, u32)],
    max_cycles: u64,
) -> Result<UsageProfile, RunError> {
    let mut machine = Machine::new(program.clone(), config.clone());
    for &(address, value) in inputs {
        machine.write_word(address, value);
    }
    machine.enable_trace();
    let stats = machine.run(max_cycles)?;
    let mut retired = vec![false; program.len()];
    for r in machine.trace().unwrap_or_default() {
        retired[r.index as usize] = true;
    }
    let mut used_opcodes = BTreeSet::new();
    let mut used_registers = BTreeSet::new();
    for (ins, _) in program
        .instructions
        .iter()
        .zip(&retired)
        .filter(|(_, &r)| r)
    {
        used_opcodes.insert(ins.op);
        used_registers.extend(ins.registers());
    }
    Ok(UsageProfile {
        kind: ProfileKind::Dynamic,
        used_opcodes,
        used_registers,
        code_size: program.len(),
        max_data_address: program.data.max_address().max(stats.max_data_address),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeriveError {
    #[error("cannot derive a configuration from an empty profile")]
    EmptyProfile,
    #[error("{0} is used but disabled in the baseline")]
    NotInBaseline(Opcode),
}

/// Address width needed for `count` distinct locations, at least one bit.
pub fn bits_for(count: u64) -> u32 {
    // smallest w with count <= 2^w
    let w = 64 - count.saturating_sub(1).leading_zeros();
    w.max(1)
}

/// The smallest configuration that still runs every program in the profile.
pub fn derive_config(
    profile: &UsageProfile,
    baseline: &IsaConfig,
) -> Result<IsaConfig, DeriveError> {
    if profile.code_size == 0 {
        return Err(DeriveError::EmptyProfile);
    }
    if let Some(op) = profile
        .used_opcodes
        .iter()
        .find(|op| !baseline.is_enabled(**op))
    {
        return Err(DeriveError::NotInBaseline(*op));
    }
    let max_reg = profile.used_registers.iter().max().copied().unwrap_or(0) as u32;
    Ok(IsaConfig {
        enabled: profile.used_opcodes.clone(),
        csr_group: false,
        register_count: (max_reg + 1).max(2),
        pc_width_bits: bits_for(profile.code_size as u64),
        bar_width_bits: bits_for(profile.max_data_address.map_or(1, |a| a as u64 + 1)),
        word_width: baseline.word_width,
        mac_precisions: profile.used_precisions(),
    })
}
