//! Cycle-counting simulator for a configured core.

mod mac;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use mac::{lane, MacUnit};

use crate::isa::{IsaConfig, OpClass, Opcode, Precision, Program};

/// Cycles charged per instruction class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub alu: u32,
    pub load: u32,
    pub store: u32,
    pub branch_not_taken: u32,
    pub branch_taken: u32,
    pub jump: u32,
    pub mul: u32,
    pub mac: u32,
    pub macreduce: u32,
    pub macclear: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            alu: 1,
            load: 1,
            store: 1,
            branch_not_taken: 1,
            branch_taken: 2,
            jump: 1,
            mul: 3,
            mac: 1,
            macreduce: 1,
            macclear: 1,
        }
    }
}

impl CostModel {
    /// Cycles for one retirement of `op`.
    pub fn cost(&self, op: Opcode, taken: bool) -> u32 {
        match op.class() {
            OpClass::Alu => self.alu,
            OpClass::Mul => self.mul,
            OpClass::Load => self.load,
            OpClass::Store => self.store,
            OpClass::Branch if taken => self.branch_taken,
            OpClass::Branch => self.branch_not_taken,
            OpClass::Jump => self.jump,
            OpClass::Mac => self.mac,
            OpClass::MacReduce => self.macreduce,
            OpClass::MacClear => self.macclear,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let all = [
            ("alu", self.alu),
            ("load", self.load),
            ("store", self.store),
            ("branch_not_taken", self.branch_not_taken),
            ("branch_taken", self.branch_taken),
            ("jump", self.jump),
            ("mul", self.mul),
            ("mac", self.mac),
            ("macreduce", self.macreduce),
            ("macclear", self.macclear),
        ];
        match all.iter().find(|(_, c)| *c == 0) {
            Some((name, _)) => Err(format!("cost `{name}` must be at least 1")),
            None => Ok(()),
        }
    }
}

pub const DEFAULT_MEMORY_WORDS: u32 = 4096;

/// Everything the simulator needs to know about the core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreConfig {
    pub memory_words: u32,
    pub isa: IsaConfig,
    pub costs: CostModel,
}

impl CoreConfig {
    pub fn new(isa: IsaConfig) -> CoreConfig {
        CoreConfig {
            isa,
            costs: CostModel::default(),
            memory_words: DEFAULT_MEMORY_WORDS,
        }
    }
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig::new(IsaConfig::baseline())
    }
}

/// Execution faults. `pc` is the index of the faulting instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    #[error("pc {pc} not addressable with a {pc_width_bits}-bit PC")]
    PcOutOfRange { pc: u32, pc_width_bits: u32 },
    #[error("pc {pc} outside the {len}-instruction program")]
    PcOutOfProgram { pc: u32, len: usize },
    #[error("pc {pc}: opcode {op} is disabled")]
    DisabledOpcode { pc: u32, op: Opcode },
    #[error("pc {pc}: {op} uses x{register} outside the {register_count}-register file")]
    Register {
        pc: u32,
        op: Opcode,
        register: u8,
        register_count: u32,
    },
    #[error("pc {pc}: {op} address {address} not addressable with a {bar_width_bits}-bit BAR")]
    DataAddress {
        pc: u32,
        op: Opcode,
        address: u32,
        bar_width_bits: u32,
    },
    #[error("pc {pc}: {op} address {address} beyond {memory_words}-word memory")]
    MemoryBounds {
        pc: u32,
        op: Opcode,
        address: u32,
        memory_words: usize,
    },
    #[error("pc {pc}: MAC precision switch from {from} to {to} without MACZ")]
    MacPrecisionSwitch {
        pc: u32,
        from: Precision,
        to: Precision,
    },
    #[error("machine is halted")]
    Halted,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error("cycle budget of {max_cycles} exhausted after {cycles} cycles without HALT")]
    CycleBudget { cycles: u64, max_cycles: u64 },
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub total_cycles: u64,
    pub instructions_retired: u64,
    pub per_opcode: BTreeMap<Opcode, u64>,
    pub mac_overflow_events: u64,
    /// Highest data address read or written.
    pub max_data_address: Option<u32>,
    pub halted: bool,
}

/// One retired instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub index: u32,
    pub op: Opcode,
    pub cycles: u32,
    pub cumulative: u64,
}

/// Renders a trace as `index<TAB>MNEMONIC<TAB>cycles<TAB>cumulative` lines.
pub fn format_trace(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(trace.len() * 24);
    for r in trace {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.index, r.op, r.cycles, r.cumulative);
    }
    out
}

/// Program plus per-instruction facts precomputed once and shared between
/// machine instances.
#[derive(Debug)]
struct Image {
    program: Program,
    config: CoreConfig,
    max_reg: Vec<u8>,
    enabled: [bool; Opcode::ALL.len()],
}

/// Simulator state.
#[derive(Debug, Clone)]
pub struct Machine {
    image: Arc<Image>,
    st: State,
}

#[derive(Debug, Clone)]
struct State {
    pc: u32,
    regs: [u32; 32],
    memory: Vec<u32>,
    mac: Option<MacUnit>,
    halted: bool,
    cycles: u64,
    retired: u64,
    counts: [u64; Opcode::ALL.len()],
    overflows: u64,
    max_addr: Option<u32>,
    trace: Option<Vec<TraceRecord>>,
}

fn fits(value: u32, bits: u32) -> bool {
    bits >= 32 || value >> bits == 0
}

impl Machine {
    /// Loads a program. Memory is `max(memory_words, data end)` words with
    /// the data segment at its base.
    pub fn new(program: Program, config: CoreConfig) -> Machine {
        let max_reg = program
            .instructions
            .iter()
            .map(|i| i.registers().max().unwrap_or(0))
            .collect();
        let mut enabled = [false; Opcode::ALL.len()];
        for op in &config.isa.enabled {
            enabled[op.index()] = true;
        }
        let data_end = (program.data.base as usize) + program.data.words.len();
        let mut memory = vec![0u32; (config.memory_words as usize).max(data_end)];
        for (i, &w) in program.data.words.iter().enumerate() {
            memory[program.data.base as usize + i] = w as u32;
        }
        let pc = program.entry;
        Machine {
            image: Arc::new(Image {
                program,
                config,
                max_reg,
                enabled,
            }),
            st: State {
                pc,
                regs: [0; 32],
                memory,
                mac: None,
                halted: false,
                cycles: 0,
                retired: 0,
                counts: [0; Opcode::ALL.len()],
                overflows: 0,
                max_addr: None,
                trace: None,
            },
        }
    }

    /// Starts recording a trace of retired instructions.
    pub fn enable_trace(&mut self) {
        self.st.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.st.trace.as_deref()
    }

    pub fn program(&self) -> &Program {
        &self.image.program
    }

    pub fn config(&self) -> &CoreConfig {
        &self.image.config
    }

    pub fn pc(&self) -> u32 {
        self.st.pc
    }

    pub fn is_halted(&self) -> bool {
        self.st.halted
    }

    pub fn register(&self, r: u8) -> u32 {
        self.st.regs[r as usize]
    }

    pub fn registers(&self) -> &[u32] {
        &self.st.regs[..self.image.config.isa.register_count.min(32) as usize]
    }

    pub fn memory(&self) -> &[u32] {
        &self.st.memory
    }

    pub fn mac(&self) -> Option<&MacUnit> {
        self.st.mac.as_ref()
    }

    pub fn read_word(&self, address: u32) -> Option<u32> {
        self.st.memory.get(address as usize).copied()
    }

    /// Writes a memory word directly (used to supply inputs). Returns false
    /// when the address is outside memory.
    pub fn write_word(&mut self, address: u32, value: u32) -> bool {
        match self.st.memory.get_mut(address as usize) {
            Some(w) => {
                *w = value;
                true
            }
            None => false,
        }
    }

    pub fn total_cycles(&self) -> u64 {
        self.st.cycles
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            total_cycles: self.st.cycles,
            instructions_retired: self.st.retired,
            per_opcode: Opcode::ALL
                .iter()
                .filter(|op| self.st.counts[op.index()] > 0)
                .map(|&op| (op, self.st.counts[op.index()]))
                .collect(),
            mac_overflow_events: self.st.overflows,
            max_data_address: self.st.max_addr,
            halted: self.st.halted,
        }
    }

    /// Executes one instruction. A halted machine returns [`Fault::Halted`].
    pub fn step(&mut self) -> Result<(), Fault> {
        self.st.step(&self.image)
    }

    /// Runs until HALT, a fault, or until `max_cycles` have been spent.
    pub fn run(&mut self, max_cycles: u64) -> Result<RunStats, RunError> {
        while !self.st.halted {
            if self.st.cycles >= max_cycles {
                return Err(RunError::CycleBudget {
                    cycles: self.st.cycles,
                    max_cycles,
                });
            }
            self.step()?;
        }
        Ok(self.stats())
    }
}

impl State {
    #[inline]
    fn set(&mut self, rd: u8, v: u32) {
        if rd != 0 {
            self.regs[rd as usize] = v;
        }
    }

    #[inline]
    fn address(&mut self, bar: u32, op: Opcode, base: u8, imm: i32) -> Result<usize, Fault> {
        let address = self.regs[base as usize].wrapping_add(imm as u32);
        if !fits(address, bar) {
            return Err(Fault::DataAddress {
                pc: self.pc,
                op,
                address,
                bar_width_bits: bar,
            });
        }
        if address as usize >= self.memory.len() {
            return Err(Fault::MemoryBounds {
                pc: self.pc,
                op,
                address,
                memory_words: self.memory.len(),
            });
        }
        self.max_addr = Some(self.max_addr.map_or(address, |m| m.max(address)));
        Ok(address as usize)
    }

    fn step(&mut self, image: &Image) -> Result<(), Fault> {
        if self.halted {
            return Err(Fault::Halted);
        }
        let isa = &image.config.isa;
        let pc = self.pc;
        if !fits(pc, isa.pc_width_bits) {
            return Err(Fault::PcOutOfRange {
                pc,
                pc_width_bits: isa.pc_width_bits,
            });
        }
        let Some(&ins) = image.program.instructions.get(pc as usize) else {
            return Err(Fault::PcOutOfProgram {
                pc,
                len: image.program.len(),
            });
        };
        let op = ins.op;
        if !image.enabled[op.index()] {
            return Err(Fault::DisabledOpcode { pc, op });
        }
        if image.max_reg[pc as usize] as u32 >= isa.register_count {
            let register = ins
                .registers()
                .filter(|&r| r as u32 >= isa.register_count)
                .max()
                .unwrap_or(0);
            return Err(Fault::Register {
                pc,
                op,
                register,
                register_count: isa.register_count,
            });
        }

        let a = self.regs[ins.rs1 as usize];
        let b = self.regs[ins.rs2 as usize];
        let imm = ins.imm as u32;
        let mut next = pc.wrapping_add(1);
        let mut taken = false;
        match op {
            Opcode::Add => self.set(ins.rd, a.wrapping_add(b)),
            Opcode::Sub => self.set(ins.rd, a.wrapping_sub(b)),
            Opcode::And => self.set(ins.rd, a & b),
            Opcode::Or => self.set(ins.rd, a | b),
            Opcode::Xor => self.set(ins.rd, a ^ b),
            Opcode::Sll => self.set(ins.rd, a << (b & 31)),
            Opcode::Srl => self.set(ins.rd, a >> (b & 31)),
            Opcode::Sra => self.set(ins.rd, ((a as i32) >> (b & 31)) as u32),
            Opcode::Slt => self.set(ins.rd, ((a as i32) < (b as i32)) as u32),
            Opcode::Addi => self.set(ins.rd, a.wrapping_add(imm)),
            Opcode::Andi => self.set(ins.rd, a & imm),
            Opcode::Ori => self.set(ins.rd, a | imm),
            Opcode::Xori => self.set(ins.rd, a ^ imm),
            Opcode::Slti => self.set(ins.rd, ((a as i32) < ins.imm) as u32),
            Opcode::Slli => self.set(ins.rd, a << (imm & 31)),
            Opcode::Srli => self.set(ins.rd, a >> (imm & 31)),
            Opcode::Srai => self.set(ins.rd, ((a as i32) >> (imm & 31)) as u32),
            Opcode::Mul => self.set(ins.rd, a.wrapping_mul(b)),
            Opcode::Mulh => self.set(ins.rd, ((a as i32 as i64 * b as i32 as i64) >> 32) as u32),
            Opcode::Lw | Opcode::Lb | Opcode::Lbu => {
                let at = self.address(isa.bar_width_bits, op, ins.rs1, ins.imm)?;
                let w = self.memory[at];
                let v = match op {
                    Opcode::Lw => w,
                    Opcode::Lb => w as u8 as i8 as i32 as u32,
                    _ => w & 0xff,
                };
                self.set(ins.rd, v);
            }
            Opcode::Sw => {
                let at = self.address(isa.bar_width_bits, op, ins.rs1, ins.imm)?;
                self.memory[at] = b;
            }
            Opcode::Sb => {
                let at = self.address(isa.bar_width_bits, op, ins.rs1, ins.imm)?;
                self.memory[at] = (self.memory[at] & !0xff) | (b & 0xff);
            }
            Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge => {
                taken = match op {
                    Opcode::Beq => a == b,
                    Opcode::Bne => a != b,
                    Opcode::Blt => (a as i32) < (b as i32),
                    _ => (a as i32) >= (b as i32),
                };
                if taken {
                    next = pc.wrapping_add(imm);
                }
            }
            Opcode::Jal => {
                self.set(ins.rd, pc.wrapping_add(1));
                next = pc.wrapping_add(imm);
            }
            Opcode::Jalr => {
                self.set(ins.rd, pc.wrapping_add(1));
                next = a.wrapping_add(imm);
            }
            Opcode::Lui => self.set(ins.rd, imm << 12),
            Opcode::Auipc => self.set(ins.rd, pc.wrapping_add(imm << 12)),
            Opcode::MacP32 | Opcode::MacP16 | Opcode::MacP8 | Opcode::MacP4 => {
                let p = op.mac_precision().expect("MAC opcode has a precision");
                let unit = match &mut self.mac {
                    Some(unit) if unit.precision() != p => {
                        return Err(Fault::MacPrecisionSwitch {
                            pc,
                            from: unit.precision(),
                            to: p,
                        });
                    }
                    Some(unit) => unit,
                    None => self.mac.insert(MacUnit::new(p)),
                };
                self.overflows += unit.step(a, b) as u64;
            }
            Opcode::Macr => {
                let v = self.mac.as_ref().map_or(0, MacUnit::reduce);
                self.set(ins.rd, v as u32);
            }
            Opcode::Macz => self.mac = None,
            Opcode::Halt => self.halted = true,
        }

        let cost = image.config.costs.cost(op, taken);
        self.cycles += cost as u64;
        self.retired += 1;
        self.counts[op.index()] += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                index: pc,
                op,
                cycles: cost,
                cumulative: self.cycles,
            });
        }
        self.pc = next;
        Ok(())
    }
}
