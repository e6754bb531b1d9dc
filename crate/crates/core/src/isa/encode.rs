use std::fmt::Write as _;

use super::{Format, Instruction, Opcode, Program, WordWidth};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error(
        "instruction {index} ({instruction}) cannot be encoded in {width}-bit words: {reason}"
    )]
    Unencodable {
        index: usize,
        instruction: String,
        width: u32,
        reason: String,
    },
}

/// A ROM image: instruction words followed by the data segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RomImage {
    pub word_width: WordWidth,
    pub words: Vec<u32>,
    pub instruction_words: usize,
    pub data_words: usize,
}

impl RomImage {
    pub fn total_bits(&self) -> u64 {
        self.words.len() as u64 * self.word_width.bits() as u64
    }

    /// One lowercase hex word per line.
    pub fn to_hex(&self) -> String {
        let digits = (self.word_width.bits() / 4) as usize;
        let mut out = String::with_capacity(self.words.len() * (digits + 1));
        for w in &self.words {
            let _ = writeln!(out, "{w:0digits$x}");
        }
        out
    }

    /// Decodes the instruction part of the image.
    pub fn decode_instructions(&self) -> Option<Vec<Instruction>> {
        self.words[..self.instruction_words]
            .iter()
            .map(|&w| decode(w, self.word_width))
            .collect()
    }
}

fn fits_signed(v: i32, bits: u32) -> bool {
    let lim = 1i64 << (bits - 1);
    (-lim..lim).contains(&(v as i64))
}

fn sext(v: u32, bits: u32) -> i32 {
    ((v << (32 - bits)) as i32) >> (32 - bits)
}

fn opcode_number(op: Opcode) -> u32 {
    op.index() as u32 + 1
}

fn encode32(ins: &Instruction) -> Result<u32, String> {
    for r in [ins.rd, ins.rs1, ins.rs2] {
        if r >= 32 {
            return Err(format!("register x{r} does not exist"));
        }
    }
    let op = opcode_number(ins.op);
    let (rd, rs1, rs2) = (ins.rd as u32, ins.rs1 as u32, ins.rs2 as u32);
    let imm12 = |v: i32| -> Result<u32, String> {
        if fits_signed(v, 12) {
            Ok((v as u32) & 0xfff)
        } else {
            Err(format!("immediate {v} exceeds 12 bits"))
        }
    };
    Ok(match ins.op.format() {
        Format::R => op | rd << 7 | rs1 << 12 | rs2 << 17,
        Format::Shift => {
            if !(0..32).contains(&ins.imm) {
                return Err(format!("shift amount {} outside 0..31", ins.imm));
            }
            op | rd << 7 | rs1 << 12 | (ins.imm as u32) << 17
        }
        Format::I | Format::Load | Format::Jalr => op | rd << 7 | rs1 << 12 | imm12(ins.imm)? << 17,
        Format::Store | Format::Branch => op | rs2 << 7 | rs1 << 12 | imm12(ins.imm)? << 17,
        Format::U | Format::Jal => {
            if !fits_signed(ins.imm, 20) {
                return Err(format!("immediate {} exceeds 20 bits", ins.imm));
            }
            op | rd << 7 | ((ins.imm as u32) & 0xfffff) << 12
        }
        Format::Mac => op | rs1 << 12 | rs2 << 17,
        Format::MacR => op | rd << 7,
        Format::None => op,
    })
}

fn decode32(w: u32) -> Option<Instruction> {
    let n = (w & 0x7f) as usize;
    let op = *Opcode::ALL.get(n.checked_sub(1)?)?;
    let rd = ((w >> 7) & 31) as u8;
    let rs1 = ((w >> 12) & 31) as u8;
    let rs2 = ((w >> 17) & 31) as u8;
    let imm12 = sext((w >> 17) & 0xfff, 12);
    let mut ins = Instruction::new(op, 0, 0, 0, 0);
    match op.format() {
        Format::R => (ins.rd, ins.rs1, ins.rs2) = (rd, rs1, rs2),
        Format::Shift => (ins.rd, ins.rs1, ins.imm) = (rd, rs1, ((w >> 17) & 0xfff) as i32),
        Format::I | Format::Load | Format::Jalr => (ins.rd, ins.rs1, ins.imm) = (rd, rs1, imm12),
        Format::Store | Format::Branch => (ins.rs2, ins.rs1, ins.imm) = (rd, rs1, imm12),
        Format::U | Format::Jal => (ins.rd, ins.imm) = (rd, sext(w >> 12, 20)),
        Format::Mac => (ins.rs1, ins.rs2) = (rs1, rs2),
        Format::MacR => ins.rd = rd,
        Format::None => {}
    }
    Some(ins)
}

// 16-bit layout, major opcode in bits [15:12]:
//   0x0        [11:8] minor  [7:4] a  [3:0] b   two-address register forms
//   0x1..=0x8  [11:8] rd     [7:0] imm8         ADDI ANDI ORI XORI SLTI SLLI SRLI SRAI
//   0x9..=0xB  [11:8] rd     [7:0] imm8         LUI AUIPC JAL
//   0xC..=0xF  [11:8] rs1 [7:4] rs2 [3:0] off4  BEQ BNE BLT BGE
// rd = 0 is never a useful ALU-immediate target, so majors 0x1..=0x6 with
// rd = 0 carry MAC.P32/P16/P8/P4, JALR and the MACR/MACZ/HALT group.

const MINOR: [Opcode; 16] = [
    Opcode::Add,
    Opcode::Sub,
    Opcode::And,
    Opcode::Or,
    Opcode::Xor,
    Opcode::Sll,
    Opcode::Srl,
    Opcode::Sra,
    Opcode::Slt,
    Opcode::Mul,
    Opcode::Mulh,
    Opcode::Lw,
    Opcode::Lb,
    Opcode::Lbu,
    Opcode::Sw,
    Opcode::Sb,
];
const IMM_MAJOR: [Opcode; 11] = [
    Opcode::Addi,
    Opcode::Andi,
    Opcode::Ori,
    Opcode::Xori,
    Opcode::Slti,
    Opcode::Slli,
    Opcode::Srli,
    Opcode::Srai,
    Opcode::Lui,
    Opcode::Auipc,
    Opcode::Jal,
];
const BRANCH_MAJOR: [Opcode; 4] = [Opcode::Beq, Opcode::Bne, Opcode::Blt, Opcode::Bge];

fn encode16(ins: &Instruction) -> Result<u32, String> {
    let reg = |r: u8| -> Result<u32, String> {
        if r < 16 {
            Ok(r as u32)
        } else {
            Err(format!("register x{r} beyond x15"))
        }
    };
    let zero_offset = || -> Result<(), String> {
        if ins.imm == 0 {
            Ok(())
        } else {
            Err(format!("memory offset {} must be 0", ins.imm))
        }
    };
    let two_address = || -> Result<(), String> {
        if ins.rd == ins.rs1 {
            Ok(())
        } else {
            Err(format!("needs rd == rs1 (x{} != x{})", ins.rd, ins.rs1))
        }
    };
    let imm8 = |v: i32| -> Result<u32, String> {
        if fits_signed(v, 8) {
            Ok((v as u32) & 0xff)
        } else {
            Err(format!("immediate {v} exceeds 8 bits"))
        }
    };
    let escape = |major: u32, a: u32, b: u32| major << 12 | a << 4 | b;
    let op = ins.op;
    if let Some(minor) = MINOR.iter().position(|&m| m == op) {
        let minor = minor as u32;
        return Ok(match op.format() {
            Format::R => {
                two_address()?;
                minor << 8 | reg(ins.rd)? << 4 | reg(ins.rs2)?
            }
            Format::Load => {
                zero_offset()?;
                minor << 8 | reg(ins.rd)? << 4 | reg(ins.rs1)?
            }
            _ => {
                zero_offset()?;
                minor << 8 | reg(ins.rs2)? << 4 | reg(ins.rs1)?
            }
        });
    }
    if let Some(i) = IMM_MAJOR.iter().position(|&m| m == op) {
        let major = i as u32 + 1;
        if matches!(op.format(), Format::I | Format::Shift) {
            two_address()?;
            if ins.rd == 0 {
                return Err("rd x0 is reserved in the narrow immediate forms".into());
            }
        } else if ins.rd == 0 && op != Opcode::Jal {
            return Err("rd x0 is reserved in the narrow immediate forms".into());
        }
        return Ok(major << 12 | reg(ins.rd)? << 8 | imm8(ins.imm)?);
    }
    if let Some(i) = BRANCH_MAJOR.iter().position(|&m| m == op) {
        if !fits_signed(ins.imm, 4) {
            return Err(format!("branch offset {} exceeds 4 bits", ins.imm));
        }
        return Ok((0xC + i as u32) << 12
            | reg(ins.rs1)? << 8
            | reg(ins.rs2)? << 4
            | (ins.imm as u32 & 0xf));
    }
    Ok(match op {
        Opcode::MacP32 => escape(1, reg(ins.rs1)?, reg(ins.rs2)?),
        Opcode::MacP16 => escape(2, reg(ins.rs1)?, reg(ins.rs2)?),
        Opcode::MacP8 => escape(3, reg(ins.rs1)?, reg(ins.rs2)?),
        Opcode::MacP4 => escape(4, reg(ins.rs1)?, reg(ins.rs2)?),
        Opcode::Jalr => {
            zero_offset()?;
            escape(5, reg(ins.rd)?, reg(ins.rs1)?)
        }
        Opcode::Macr => escape(6, 0, reg(ins.rd)?),
        Opcode::Macz => escape(6, 1, 0),
        Opcode::Halt => escape(6, 2, 0),
        _ => unreachable!("every opcode has a narrow form"),
    })
}

fn decode16(w: u32) -> Option<Instruction> {
    let major = (w >> 12) & 0xf;
    let (f8, a, b) = (
        ((w >> 8) & 0xf) as u8,
        ((w >> 4) & 0xf) as u8,
        (w & 0xf) as u8,
    );
    let mut ins = Instruction::new(Opcode::Halt, 0, 0, 0, 0);
    match major {
        0 => {
            ins.op = MINOR[f8 as usize];
            match ins.op.format() {
                Format::R => (ins.rd, ins.rs1, ins.rs2) = (a, a, b),
                Format::Load => (ins.rd, ins.rs1) = (a, b),
                _ => (ins.rs2, ins.rs1) = (a, b),
            }
        }
        1..=6 if f8 == 0 => match major {
            1..=4 => {
                ins.op = [Opcode::MacP32, Opcode::MacP16, Opcode::MacP8, Opcode::MacP4]
                    [major as usize - 1];
                (ins.rs1, ins.rs2) = (a, b);
            }
            5 => (ins.op, ins.rd, ins.rs1) = (Opcode::Jalr, a, b),
            _ => match a {
                0 => (ins.op, ins.rd) = (Opcode::Macr, b),
                1 => ins.op = Opcode::Macz,
                2 => ins.op = Opcode::Halt,
                _ => return None,
            },
        },
        1..=0xB => {
            ins.op = IMM_MAJOR[major as usize - 1];
            ins.rd = f8;
            ins.imm = sext(w & 0xff, 8);
            if matches!(ins.op.format(), Format::I | Format::Shift) {
                ins.rs1 = f8;
            }
        }
        _ => {
            ins.op = BRANCH_MAJOR[major as usize - 0xC];
            (ins.rs1, ins.rs2, ins.imm) = (f8, a, sext(b as u32, 4));
        }
    }
    Some(ins)
}

/// Decodes one ROM instruction word.
pub fn decode(word: u32, width: WordWidth) -> Option<Instruction> {
    match width {
        WordWidth::W32 => decode32(word),
        WordWidth::W16 => decode16(word),
    }
}

/// Encodes a program into a ROM image. At 16-bit width every 32-bit data
/// word occupies two ROM words, low half first.
pub fn encode(program: &Program, width: WordWidth) -> Result<RomImage, EncodeError> {
    let mut words = Vec::with_capacity(program.len() + 2 * program.data.words.len());
    for (index, ins) in program.instructions.iter().enumerate() {
        let w = match width {
            WordWidth::W32 => encode32(ins),
            WordWidth::W16 => encode16(ins),
        };
        words.push(w.map_err(|reason| EncodeError::Unencodable {
            index,
            instruction: ins.to_string(),
            width: width.bits(),
            reason,
        })?);
    }
    let instruction_words = words.len();
    for &d in &program.data.words {
        match width {
            WordWidth::W32 => words.push(d as u32),
            WordWidth::W16 => {
                words.push(d as u32 & 0xffff);
                words.push(d as u32 >> 16);
            }
        }
    }
    let data_words = words.len() - instruction_words;
    Ok(RomImage {
        word_width: width,
        words,
        instruction_words,
        data_words,
    })
}
