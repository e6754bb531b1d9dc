//! Instruction set, assembly programs, ROM encoding and ISA configurations.

mod encode;
mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use encode::{decode, encode, EncodeError, RomImage};
pub use parse::{parse_assembly, pretty_print, AsmError};
pub use validate::{validate, ValidationReport, Violation};

/// Every opcode known to the toolchain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Sll,
    Srl,
    Sra,
    Slt,
    Addi,
    Andi,
    Ori,
    Xori,
    Slti,
    Slli,
    Srli,
    Srai,
    Mul,
    Mulh,
    Lw,
    Lb,
    Lbu,
    Sw,
    Sb,
    Beq,
    Bne,
    Blt,
    Bge,
    Jal,
    Jalr,
    Lui,
    Auipc,
    MacP32,
    MacP16,
    MacP8,
    MacP4,
    Macr,
    Macz,
    Halt,
}

/// Operand shape of an opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `rd, rs1, rs2`
    R,
    /// `rd, rs1, imm12`
    I,
    /// `rd, rs1, shamt`
    Shift,
    /// `rd, imm(rs1)`
    Load,
    /// `rs2, imm(rs1)`
    Store,
    /// `rs1, rs2, target`
    Branch,
    /// `rd, target`
    Jal,
    /// `rd, imm(rs1)`
    Jalr,
    /// `rd, imm20`
    U,
    /// `rs1, rs2`
    Mac,
    /// `rd`
    MacR,
    /// no operands
    None,
}

/// Cost class used by the cycle model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpClass {
    Alu,
    Mul,
    Load,
    Store,
    Branch,
    Jump,
    Mac,
    MacReduce,
    MacClear,
}

/// SIMD lane width of the MAC unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Precision {
    P4,
    P8,
    P16,
    P32,
}

impl Precision {
    pub const ALL: [Precision; 4] = [Precision::P32, Precision::P16, Precision::P8, Precision::P4];

    pub fn bits(self) -> u32 {
        match self {
            Precision::P4 => 4,
            Precision::P8 => 8,
            Precision::P16 => 16,
            Precision::P32 => 32,
        }
    }

    /// Number of lanes in a 32-bit word.
    pub fn lanes(self) -> usize {
        (32 / self.bits()) as usize
    }

    pub fn from_bits(bits: u32) -> Option<Precision> {
        match bits {
            4 => Some(Precision::P4),
            8 => Some(Precision::P8),
            16 => Some(Precision::P16),
            32 => Some(Precision::P32),
            _ => None,
        }
    }

    pub fn mac_opcode(self) -> Opcode {
        match self {
            Precision::P4 => Opcode::MacP4,
            Precision::P8 => Opcode::MacP8,
            Precision::P16 => Opcode::MacP16,
            Precision::P32 => Opcode::MacP32,
        }
    }
}

impl TryFrom<u32> for Precision {
    type Error = String;
    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        Precision::from_bits(bits).ok_or_else(|| format!("unsupported precision {bits}"))
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.bits()
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

impl Opcode {
    pub const ALL: [Opcode; 39] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Sll,
        Opcode::Srl,
        Opcode::Sra,
        Opcode::Slt,
        Opcode::Addi,
        Opcode::Andi,
        Opcode::Ori,
        Opcode::Xori,
        Opcode::Slti,
        Opcode::Slli,
        Opcode::Srli,
        Opcode::Srai,
        Opcode::Mul,
        Opcode::Mulh,
        Opcode::Lw,
        Opcode::Lb,
        Opcode::Lbu,
        Opcode::Sw,
        Opcode::Sb,
        Opcode::Beq,
        Opcode::Bne,
        Opcode::Blt,
        Opcode::Bge,
        Opcode::Jal,
        Opcode::Jalr,
        Opcode::Lui,
        Opcode::Auipc,
        Opcode::MacP32,
        Opcode::MacP16,
        Opcode::MacP8,
        Opcode::MacP4,
        Opcode::Macr,
        Opcode::Macz,
        Opcode::Halt,
    ];

    /// Dense index into [`Opcode::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::And => "AND",
            Opcode::Or => "OR",
            Opcode::Xor => "XOR",
            Opcode::Sll => "SLL",
            Opcode::Srl => "SRL",
            Opcode::Sra => "SRA",
            Opcode::Slt => "SLT",
            Opcode::Addi => "ADDI",
            Opcode::Andi => "ANDI",
            Opcode::Ori => "ORI",
            Opcode::Xori => "XORI",
            Opcode::Slti => "SLTI",
            Opcode::Slli => "SLLI",
            Opcode::Srli => "SRLI",
            Opcode::Srai => "SRAI",
            Opcode::Mul => "MUL",
            Opcode::Mulh => "MULH",
            Opcode::Lw => "LW",
            Opcode::Lb => "LB",
            Opcode::Lbu => "LBU",
            Opcode::Sw => "SW",
            Opcode::Sb => "SB",
            Opcode::Beq => "BEQ",
            Opcode::Bne => "BNE",
            Opcode::Blt => "BLT",
            Opcode::Bge => "BGE",
            Opcode::Jal => "JAL",
            Opcode::Jalr => "JALR",
            Opcode::Lui => "LUI",
            Opcode::Auipc => "AUIPC",
            Opcode::MacP32 => "MAC.P32",
            Opcode::MacP16 => "MAC.P16",
            Opcode::MacP8 => "MAC.P8",
            Opcode::MacP4 => "MAC.P4",
            Opcode::Macr => "MACR",
            Opcode::Macz => "MACZ",
            Opcode::Halt => "HALT",
        }
    }

    pub fn format(self) -> Format {
        use Opcode::*;
        match self {
            Add | Sub | And | Or | Xor | Sll | Srl | Sra | Slt | Mul | Mulh => Format::R,
            Addi | Andi | Ori | Xori | Slti => Format::I,
            Slli | Srli | Srai => Format::Shift,
            Lw | Lb | Lbu => Format::Load,
            Sw | Sb => Format::Store,
            Beq | Bne | Blt | Bge => Format::Branch,
            Jal => Format::Jal,
            Jalr => Format::Jalr,
            Lui | Auipc => Format::U,
            MacP32 | MacP16 | MacP8 | MacP4 => Format::Mac,
            Macr => Format::MacR,
            Macz | Halt => Format::None,
        }
    }

    pub fn class(self) -> OpClass {
        use Opcode::*;
        match self {
            Mul | Mulh => OpClass::Mul,
            Lw | Lb | Lbu => OpClass::Load,
            Sw | Sb => OpClass::Store,
            Beq | Bne | Blt | Bge => OpClass::Branch,
            Jal | Jalr => OpClass::Jump,
            MacP32 | MacP16 | MacP8 | MacP4 => OpClass::Mac,
            Macr => OpClass::MacReduce,
            Macz => OpClass::MacClear,
            _ => OpClass::Alu,
        }
    }

    /// Lane precision for the `MAC.Pn` opcodes.
    pub fn mac_precision(self) -> Option<Precision> {
        match self {
            Opcode::MacP32 => Some(Precision::P32),
            Opcode::MacP16 => Some(Precision::P16),
            Opcode::MacP8 => Some(Precision::P8),
            Opcode::MacP4 => Some(Precision::P4),
            _ => None,
        }
    }

    /// True for opcodes that need a hardware multiplier.
    pub fn uses_multiplier(self) -> bool {
        matches!(
            self.class(),
            OpClass::Mul | OpClass::Mac | OpClass::MacReduce | OpClass::MacClear
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for Opcode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic() == upper)
            .ok_or_else(|| format!("unknown mnemonic `{s}`"))
    }
}

impl Serialize for Opcode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.mnemonic())
    }
}

impl<'de> Deserialize<'de> for Opcode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One decoded instruction. Fields not used by the opcode's format are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub op: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    /// Immediate. For branches and JAL this is the offset relative to the
    /// instruction's own index.
    pub imm: i32,
}

impl Instruction {
    pub fn new(op: Opcode, rd: u8, rs1: u8, rs2: u8, imm: i32) -> Instruction {
        Instruction {
            op,
            rd,
            rs1,
            rs2,
            imm,
        }
    }

    /// Destination register, if the format writes one.
    pub fn dest(&self) -> Option<u8> {
        match self.op.format() {
            Format::R
            | Format::I
            | Format::Shift
            | Format::Load
            | Format::Jal
            | Format::Jalr
            | Format::U
            | Format::MacR => Some(self.rd),
            _ => None,
        }
    }

    /// Source registers read by the format.
    pub fn sources(&self) -> impl Iterator<Item = u8> {
        let (a, b) = match self.op.format() {
            Format::R | Format::Store | Format::Branch | Format::Mac => {
                (Some(self.rs1), Some(self.rs2))
            }
            Format::I | Format::Shift | Format::Load | Format::Jalr => (Some(self.rs1), None),
            _ => (None, None),
        };
        a.into_iter().chain(b)
    }

    /// All registers named by the instruction's operands.
    pub fn registers(&self) -> impl Iterator<Item = u8> {
        self.dest().into_iter().chain(self.sources())
    }
}

/// The initialised data segment: consecutive 32-bit words starting at `base`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataSegment {
    pub base: u32,
    pub words: Vec<i32>,
}

impl DataSegment {
    /// Highest data address, if the segment is non-empty.
    pub fn max_address(&self) -> Option<u32> {
        if self.words.is_empty() {
            None
        } else {
            Some(self.base + self.words.len() as u32 - 1)
        }
    }
}

/// An assembled program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// Code labels to instruction indices.
    pub labels: BTreeMap<String, u32>,
    /// Data labels to word addresses.
    pub data_labels: BTreeMap<String, u32>,
    pub data: DataSegment,
    pub entry: u32,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Address of a data label.
    pub fn data_address(&self, label: &str) -> Option<u32> {
        self.data_labels.get(label).copied()
    }
}

/// ROM word width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum WordWidth {
    W16,
    W32,
}

impl WordWidth {
    pub fn bits(self) -> u32 {
        match self {
            WordWidth::W16 => 16,
            WordWidth::W32 => 32,
        }
    }
}

impl TryFrom<u32> for WordWidth {
    type Error = String;
    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        match bits {
            16 => Ok(WordWidth::W16),
            32 => Ok(WordWidth::W32),
            _ => Err(format!("unsupported word width {bits}")),
        }
    }
}

impl From<WordWidth> for u32 {
    fn from(w: WordWidth) -> u32 {
        w.bits()
    }
}

/// Errors from [`IsaConfig::check`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("register_count {0} outside 2..=32")]
    RegisterCount(u32),
    #[error("pc_width_bits {0} outside 1..=32")]
    PcWidth(u32),
    #[error("bar_width_bits {0} outside 1..=32")]
    BarWidth(u32),
    #[error("{0} enabled but precision {1} is not in mac_precisions")]
    MacPrecision(Opcode, Precision),
    #[error("16-bit words allow at most 16 registers, got {0}")]
    NarrowRegisters(u32),
}

/// A (possibly trimmed) instruction-set configuration. Fields missing from
/// a serialized configuration take their baseline values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsaConfig {
    pub enabled: BTreeSet<Opcode>,
    /// The control/status register group of the baseline core. It has no
    /// executable semantics here; it only shows up in trimming reports.
    pub csr_group: bool,
    pub register_count: u32,
    pub pc_width_bits: u32,
    pub bar_width_bits: u32,
    pub word_width: WordWidth,
    pub mac_precisions: BTreeSet<Precision>,
}

impl IsaConfig {
    /// The untrimmed 32-bit core with every opcode and MAC mode.
    pub fn baseline() -> IsaConfig {
        IsaConfig {
            enabled: Opcode::ALL.iter().copied().collect(),
            csr_group: true,
            register_count: 32,
            pc_width_bits: 32,
            bar_width_bits: 32,
            word_width: WordWidth::W32,
            mac_precisions: Precision::ALL.iter().copied().collect(),
        }
    }

    /// The baseline with the listed opcodes removed.
    pub fn without(mut self, ops: &[Opcode]) -> IsaConfig {
        for op in ops {
            self.enabled.remove(op);
            if let Some(p) = op.mac_precision() {
                self.mac_precisions.remove(&p);
            }
        }
        self
    }

    pub fn is_enabled(&self, op: Opcode) -> bool {
        self.enabled.contains(&op)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(2..=32).contains(&self.register_count) {
            return Err(ConfigError::RegisterCount(self.register_count));
        }
        if !(1..=32).contains(&self.pc_width_bits) {
            return Err(ConfigError::PcWidth(self.pc_width_bits));
        }
        if !(1..=32).contains(&self.bar_width_bits) {
            return Err(ConfigError::BarWidth(self.bar_width_bits));
        }
        if self.word_width == WordWidth::W16 && self.register_count > 16 {
            return Err(ConfigError::NarrowRegisters(self.register_count));
        }
        for op in &self.enabled {
            if let Some(p) = op.mac_precision() {
                if !self.mac_precisions.contains(&p) {
                    return Err(ConfigError::MacPrecision(*op, p));
                }
            }
        }
        Ok(())
    }
}

impl Default for IsaConfig {
    fn default() -> Self {
        IsaConfig::baseline()
    }
}
