#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bespoke_core::isa::{parse_assembly, Format, Instruction, Opcode, Program};
use bespoke_core::mlcodegen::FloatModel;
use rand::Rng;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture_models() -> Vec<FloatModel> {
    let dir = repo_root().join("fixtures/models");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| FloatModel::load(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect()
}

pub fn benchmark(name: &str) -> Program {
    let path = repo_root().join("benchmarks").join(name);
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_assembly(&src).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const BENCHMARKS: [&str; 5] = ["dotprod.s", "sort.s", "dtree.s", "muldiv.s", "mlp3.s"];

pub fn asm(src: &str) -> Program {
    parse_assembly(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

/// An arbitrary encodable instruction at index `at` of an `len`-instruction
/// program. Branch and jump targets stay inside the program.
pub fn random_instruction(rng: &mut impl Rng, at: u32, len: u32, regs: u8) -> Instruction {
    let op = Opcode::ALL[rng.gen_range(0..Opcode::ALL.len())];
    let mut r = || rng.gen_range(0..regs);
    let (rd, rs1, rs2) = (r(), r(), r());
    let mut ins = Instruction::new(op, 0, 0, 0, 0);
    match op.format() {
        Format::R => (ins.rd, ins.rs1, ins.rs2) = (rd, rs1, rs2),
        Format::I | Format::Load | Format::Jalr => {
            (ins.rd, ins.rs1, ins.imm) = (rd, rs1, rng.gen_range(-2048..=2047))
        }
        Format::Shift => (ins.rd, ins.rs1, ins.imm) = (rd, rs1, rng.gen_range(0..32)),
        Format::Store => (ins.rs1, ins.rs2, ins.imm) = (rs1, rs2, rng.gen_range(-2048..=2047)),
        Format::Branch => {
            let target = rng.gen_range(0..len) as i32;
            (ins.rs1, ins.rs2, ins.imm) = (rs1, rs2, target - at as i32)
        }
        Format::Jal => {
            let target = rng.gen_range(0..len) as i32;
            (ins.rd, ins.imm) = (rd, target - at as i32)
        }
        Format::U => (ins.rd, ins.imm) = (rd, rng.gen_range(-(1 << 19)..(1 << 19))),
        Format::Mac => (ins.rs1, ins.rs2) = (rs1, rs2),
        Format::MacR => ins.rd = rd,
        Format::None => {}
    }
    ins
}

pub fn random_program(rng: &mut impl Rng, max_len: u32, data_words: usize) -> Program {
    let len = rng.gen_range(1..=max_len);
    let instructions = (0..len)
        .map(|i| random_instruction(rng, i, len, 32))
        .collect();
    let words = (0..data_words).map(|_| rng.gen()).collect();
    Program {
        instructions,
        data: bespoke_core::isa::DataSegment { base: 0, words },
        ..Program::default()
    }
}

/// A random program that always halts without faulting on the baseline core:
/// forward-only branches, loads and stores inside a 32-word data area
/// addressed from x0, one MAC precision, HALT last.
pub fn random_terminating_program(rng: &mut impl Rng) -> Program {
    let len: u32 = rng.gen_range(2..60);
    let regs = rng.gen_range(2..=32u8);
    let precision = bespoke_core::isa::Precision::ALL[rng.gen_range(0..4)];
    let mut instructions = Vec::with_capacity(len as usize);
    for at in 0..len - 1 {
        let mut ins = random_instruction(rng, at, len, regs);
        match ins.op.format() {
            Format::Load | Format::Store => {
                ins.rs1 = 0;
                ins.imm = rng.gen_range(0..32);
            }
            Format::Branch | Format::Jal => {
                ins.imm = rng.gen_range(1..(len - at) as i32);
            }
            Format::Jalr => {
                // pc = rs1 + imm with rs1 = x0 gives an absolute forward target
                ins.rs1 = 0;
                ins.imm = rng.gen_range(at + 1..len) as i32;
            }
            _ => {}
        }
        if ins.op == Opcode::Halt {
            ins = Instruction::new(Opcode::Addi, ins.rd, ins.rd, 0, 1);
        }
        if ins.op.mac_precision().is_some() {
            ins.op = precision.mac_opcode();
        }
        instructions.push(ins);
    }
    instructions.push(Instruction::new(Opcode::Halt, 0, 0, 0, 0));
    let words = (0..32).map(|_| rng.gen()).collect();
    Program {
        instructions,
        data: bespoke_core::isa::DataSegment { base: 0, words },
        ..Program::default()
    }
}
