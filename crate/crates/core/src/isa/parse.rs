use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{DataSegment, Format, Instruction, Opcode, Program};

/// Assembly errors. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: unresolved label `{label}`")]
    UnresolvedLabel {
        line: usize,
        column: usize,
        label: String,
    },
    #[error("line {line}, column {column}: duplicate label `{label}`")]
    DuplicateLabel {
        line: usize,
        column: usize,
        label: String,
    },
    #[error("line {line}, column {column}: immediate {value} out of range [{min}, {max}]")]
    ImmediateRange {
        line: usize,
        column: usize,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("line {line}, column {column}: `{expr}` points outside its segment")]
    LabelOutOfRange {
        line: usize,
        column: usize,
        expr: String,
    },
}

impl AsmError {
    pub fn line(&self) -> usize {
        match self {
            AsmError::Syntax { line, .. }
            | AsmError::UnresolvedLabel { line, .. }
            | AsmError::DuplicateLabel { line, .. }
            | AsmError::ImmediateRange { line, .. }
            | AsmError::LabelOutOfRange { line, .. } => *line,
        }
    }

    pub fn column(&self) -> usize {
        match self {
            AsmError::Syntax { column, .. }
            | AsmError::UnresolvedLabel { column, .. }
            | AsmError::DuplicateLabel { column, .. }
            | AsmError::ImmediateRange { column, .. }
            | AsmError::LabelOutOfRange { column, .. } => *column,
        }
    }
}

const IMM12: (i64, i64) = (-2048, 2047);
const IMM20: (i64, i64) = (-(1 << 19), (1 << 19) - 1);
const UIMM20: (i64, i64) = (-(1 << 19), (1 << 20) - 1);
const WORD: (i64, i64) = (i32::MIN as i64, u32::MAX as i64);
const MAX_SPACE: i64 = 1 << 24;

/// A slice of a source line with its 1-based column.
#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

impl<'a> Tok<'a> {
    fn trimmed(self) -> Tok<'a> {
        let lead = self.text.len() - self.text.trim_start().len();
        Tok {
            text: self.text.trim(),
            col: self.col + lead,
        }
    }

    fn split_at(self, at: usize) -> (Tok<'a>, Tok<'a>) {
        (
            Tok {
                text: &self.text[..at],
                col: self.col,
            },
            Tok {
                text: &self.text[at..],
                col: self.col + at,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Text,
    Data,
}

enum Item<'a> {
    Instr {
        line: usize,
        mnemonic: Tok<'a>,
        operands: Tok<'a>,
    },
    Words {
        line: usize,
        values: Vec<Tok<'a>>,
    },
    Space {
        count: usize,
    },
    Entry {
        line: usize,
        target: Tok<'a>,
    },
}

#[derive(Debug, Clone, Copy)]
enum Sym {
    Code(u32),
    Data(u32),
}

struct Ctx {
    symbols: BTreeMap<String, Sym>,
    code_len: u32,
    data_len: u32,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> AsmError {
    AsmError::Syntax {
        line,
        column: col,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if let Some(bin) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        i64::from_str_radix(bin, 2).ok()?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        body.parse().ok()?
    };
    Some(if neg { -v } else { v })
}

/// Strips a trailing `#` comment.
fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn split_operands(tok: Tok<'_>) -> Vec<Tok<'_>> {
    if tok.text.trim().is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in tok.text.char_indices() {
        if c == ',' {
            out.push(
                Tok {
                    text: &tok.text[start..i],
                    col: tok.col + start,
                }
                .trimmed(),
            );
            start = i + 1;
        }
    }
    out.push(
        Tok {
            text: &tok.text[start..],
            col: tok.col + start,
        }
        .trimmed(),
    );
    out
}

/// Value of an immediate expression before range checks.
enum Value {
    Num(i64),
    Code(i64),
    Data(i64),
}

impl Ctx {
    fn eval(&self, line: usize, tok: Tok<'_>) -> Result<Value, AsmError> {
        let text = tok.text;
        if text.is_empty() {
            return Err(syntax(line, tok.col, "missing operand"));
        }
        if !text.is_ascii() {
            return Err(syntax(
                line,
                tok.col,
                format!("unexpected character in `{text}`"),
            ));
        }
        if let Some(v) = parse_int(text) {
            return Ok(Value::Num(v));
        }
        let split = text[1..].find(['+', '-']).map(|i| i + 1);
        let (name, offset) = match split {
            Some(i) => {
                let off = parse_int(&text[i..])
                    .ok_or_else(|| syntax(line, tok.col + i, format!("bad offset in `{text}`")))?;
                (text[..i].trim(), off)
            }
            None => (text, 0),
        };
        if !is_ident(name) {
            return Err(syntax(
                line,
                tok.col,
                format!("expected immediate or label, found `{text}`"),
            ));
        }
        let sym = self
            .symbols
            .get(name)
            .ok_or_else(|| AsmError::UnresolvedLabel {
                line,
                column: tok.col,
                label: name.to_string(),
            })?;
        let out_of_range = || AsmError::LabelOutOfRange {
            line,
            column: tok.col,
            expr: text.to_string(),
        };
        match *sym {
            Sym::Code(i) => {
                let v = i as i64 + offset;
                if v < 0 || v > self.code_len as i64 {
                    return Err(out_of_range());
                }
                Ok(Value::Code(v))
            }
            Sym::Data(a) => {
                let v = a as i64 + offset;
                if v < 0 || v > self.data_len as i64 {
                    return Err(out_of_range());
                }
                Ok(Value::Data(v))
            }
        }
    }

    fn absolute(&self, line: usize, tok: Tok<'_>, range: (i64, i64)) -> Result<i64, AsmError> {
        let v = match self.eval(line, tok)? {
            Value::Num(v) | Value::Code(v) | Value::Data(v) => v,
        };
        check_range(line, tok, v, range)
    }

    fn relative(
        &self,
        line: usize,
        tok: Tok<'_>,
        pc: u32,
        range: (i64, i64),
    ) -> Result<i64, AsmError> {
        let v = match self.eval(line, tok)? {
            Value::Num(v) => v,
            Value::Code(target) => target - pc as i64,
            Value::Data(_) => {
                return Err(syntax(
                    line,
                    tok.col,
                    format!("`{}` is not a code label", tok.text),
                ))
            }
        };
        check_range(line, tok, v, range)
    }
}

fn check_range(line: usize, tok: Tok<'_>, v: i64, (min, max): (i64, i64)) -> Result<i64, AsmError> {
    if v < min || v > max {
        return Err(AsmError::ImmediateRange {
            line,
            column: tok.col,
            value: v,
            min,
            max,
        });
    }
    Ok(v)
}

fn register(line: usize, tok: Tok<'_>) -> Result<u8, AsmError> {
    let t = tok.text;
    let digits = t.strip_prefix('x').or_else(|| t.strip_prefix('X'));
    match digits.and_then(|d| {
        if d.bytes().all(|b| b.is_ascii_digit()) {
            d.parse::<u8>().ok()
        } else {
            None
        }
    }) {
        Some(r) if r < 32 => Ok(r),
        _ => Err(syntax(
            line,
            tok.col,
            format!("expected register x0..x31, found `{t}`"),
        )),
    }
}

/// Splits `imm(reg)` into its parts; a bare `(reg)` has offset 0.
fn memory_operand<'a>(line: usize, tok: Tok<'a>) -> Result<(Option<Tok<'a>>, Tok<'a>), AsmError> {
    let t = tok.text;
    let open = t.find('(');
    match (open, t.ends_with(')')) {
        (Some(i), true) => {
            let (imm, rest) = tok.split_at(i);
            let reg = Tok {
                text: &rest.text[1..rest.text.len() - 1],
                col: rest.col + 1,
            }
            .trimmed();
            let imm = imm.trimmed();
            Ok((if imm.text.is_empty() { None } else { Some(imm) }, reg))
        }
        _ => Err(syntax(
            line,
            tok.col,
            format!("expected offset(register), found `{t}`"),
        )),
    }
}

fn expect_operands(
    line: usize,
    mnemonic: Tok<'_>,
    ops: &[Tok<'_>],
    n: usize,
) -> Result<(), AsmError> {
    if ops.len() != n {
        return Err(syntax(
            line,
            mnemonic.col,
            format!(
                "{} expects {} operand(s), found {}",
                mnemonic.text.to_ascii_uppercase(),
                n,
                ops.len()
            ),
        ));
    }
    Ok(())
}

fn sign_extend(v: i64, bits: u32) -> i32 {
    let shift = 64 - bits;
    ((v << shift) >> shift) as i32
}

impl Ctx {
    fn instruction(
        &self,
        line: usize,
        pc: u32,
        mnemonic: Tok<'_>,
        operands: Tok<'_>,
    ) -> Result<Instruction, AsmError> {
        let op: Opcode = mnemonic
            .text
            .parse()
            .map_err(|e: String| syntax(line, mnemonic.col, e))?;
        let ops = split_operands(operands);
        let mut ins = Instruction::new(op, 0, 0, 0, 0);
        match op.format() {
            Format::R => {
                expect_operands(line, mnemonic, &ops, 3)?;
                ins.rd = register(line, ops[0])?;
                ins.rs1 = register(line, ops[1])?;
                ins.rs2 = register(line, ops[2])?;
            }
            Format::I | Format::Shift => {
                expect_operands(line, mnemonic, &ops, 3)?;
                ins.rd = register(line, ops[0])?;
                ins.rs1 = register(line, ops[1])?;
                let range = if op.format() == Format::Shift {
                    (0, 31)
                } else {
                    IMM12
                };
                ins.imm = self.absolute(line, ops[2], range)? as i32;
            }
            Format::Load | Format::Jalr | Format::Store => {
                expect_operands(line, mnemonic, &ops, 2)?;
                let reg = register(line, ops[0])?;
                let (imm, base) = memory_operand(line, ops[1])?;
                if op.format() == Format::Store {
                    ins.rs2 = reg;
                } else {
                    ins.rd = reg;
                }
                ins.rs1 = register(line, base)?;
                if let Some(imm) = imm {
                    ins.imm = self.absolute(line, imm, IMM12)? as i32;
                }
            }
            Format::Branch => {
                expect_operands(line, mnemonic, &ops, 3)?;
                ins.rs1 = register(line, ops[0])?;
                ins.rs2 = register(line, ops[1])?;
                ins.imm = self.relative(line, ops[2], pc, IMM12)? as i32;
            }
            Format::Jal => {
                expect_operands(line, mnemonic, &ops, 2)?;
                ins.rd = register(line, ops[0])?;
                ins.imm = self.relative(line, ops[1], pc, IMM20)? as i32;
            }
            Format::U => {
                expect_operands(line, mnemonic, &ops, 2)?;
                ins.rd = register(line, ops[0])?;
                ins.imm = sign_extend(self.absolute(line, ops[1], UIMM20)?, 20);
            }
            Format::Mac => {
                expect_operands(line, mnemonic, &ops, 2)?;
                ins.rs1 = register(line, ops[0])?;
                ins.rs2 = register(line, ops[1])?;
            }
            Format::MacR => {
                expect_operands(line, mnemonic, &ops, 1)?;
                ins.rd = register(line, ops[0])?;
            }
            Format::None => expect_operands(line, mnemonic, &ops, 0)?,
        }
        Ok(ins)
    }
}

/// Assembles a source text into a [`Program`].
///
/// Sections are introduced by `.text` (the default) and `.data`. Data
/// directives are `.word v[, v...]` and `.space n`. `.entry target` sets the
/// entry point. Comments start with `#`.
pub fn parse_assembly(src: &str) -> Result<Program, AsmError> {
    let mut section = Section::Text;
    let mut items = Vec::new();
    let mut ctx = Ctx {
        symbols: BTreeMap::new(),
        code_len: 0,
        data_len: 0,
    };
    let mut code_labels = BTreeMap::new();
    let mut data_labels = BTreeMap::new();

    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let mut rest = Tok {
            text: strip_comment(raw),
            col: 1,
        }
        .trimmed();
        // leading labels
        while let Some(colon) = rest.text.find(':') {
            let (name, after) = rest.split_at(colon);
            let name = name.trimmed();
            if !is_ident(name.text) {
                break;
            }
            if ctx.symbols.contains_key(name.text) {
                return Err(AsmError::DuplicateLabel {
                    line,
                    column: name.col,
                    label: name.text.to_string(),
                });
            }
            let sym = match section {
                Section::Text => {
                    code_labels.insert(name.text.to_string(), ctx.code_len);
                    Sym::Code(ctx.code_len)
                }
                Section::Data => {
                    data_labels.insert(name.text.to_string(), ctx.data_len);
                    Sym::Data(ctx.data_len)
                }
            };
            ctx.symbols.insert(name.text.to_string(), sym);
            rest = after.split_at(1).1.trimmed();
        }
        if rest.text.is_empty() {
            continue;
        }
        let word_end = rest
            .text
            .find(char::is_whitespace)
            .unwrap_or(rest.text.len());
        let (head, tail) = rest.split_at(word_end);
        let tail = tail.trimmed();
        if head.text.starts_with('.')
            && Opcode::ALL
                .iter()
                .all(|op| !op.mnemonic().eq_ignore_ascii_case(head.text))
        {
            match head.text.to_ascii_lowercase().as_str() {
                ".text" => section = Section::Text,
                ".data" => section = Section::Data,
                ".entry" => items.push(Item::Entry { line, target: tail }),
                ".word" | ".space" if section == Section::Text => {
                    return Err(syntax(
                        line,
                        head.col,
                        format!("{} outside .data", head.text),
                    ));
                }
                ".word" => {
                    let values = split_operands(tail);
                    if values.is_empty() {
                        return Err(syntax(line, head.col, ".word needs at least one value"));
                    }
                    ctx.data_len += values.len() as u32;
                    items.push(Item::Words { line, values });
                }
                ".space" => {
                    let n = parse_int(tail.text).ok_or_else(|| {
                        syntax(
                            line,
                            tail.col,
                            format!("expected word count, found `{}`", tail.text),
                        )
                    })?;
                    let n = check_range(line, tail, n, (0, MAX_SPACE))? as usize;
                    ctx.data_len += n as u32;
                    items.push(Item::Space { count: n });
                }
                other => {
                    return Err(syntax(
                        line,
                        head.col,
                        format!("unknown directive `{other}`"),
                    ))
                }
            }
            continue;
        }
        if section == Section::Data {
            return Err(syntax(line, head.col, "instruction inside .data"));
        }
        ctx.code_len += 1;
        items.push(Item::Instr {
            line,
            mnemonic: head,
            operands: tail,
        });
    }

    let mut program = Program {
        labels: code_labels,
        data_labels,
        data: DataSegment {
            base: 0,
            words: Vec::with_capacity(ctx.data_len as usize),
        },
        ..Program::default()
    };
    for item in items {
        match item {
            Item::Instr {
                line,
                mnemonic,
                operands,
            } => {
                let pc = program.instructions.len() as u32;
                program
                    .instructions
                    .push(ctx.instruction(line, pc, mnemonic, operands)?);
            }
            Item::Words { line, values } => {
                for v in values {
                    let w = ctx.absolute(line, v, WORD)?;
                    program.data.words.push(w as u32 as i32);
                }
            }
            Item::Space { count } => program
                .data
                .words
                .resize(program.data.words.len() + count, 0),
            Item::Entry { line, target } => {
                let v = match ctx.eval(line, target)? {
                    Value::Num(v) | Value::Code(v) => v,
                    Value::Data(_) => {
                        return Err(syntax(line, target.col, "entry must be a code label"))
                    }
                };
                program.entry =
                    check_range(line, target, v, (0, ctx.code_len.saturating_sub(1) as i64))?
                        as u32;
            }
        }
    }
    Ok(program)
}

fn format_instruction(ins: &Instruction) -> String {
    let m = ins.op.mnemonic();
    let (rd, rs1, rs2, imm) = (ins.rd, ins.rs1, ins.rs2, ins.imm);
    match ins.op.format() {
        Format::R => format!("{m} x{rd}, x{rs1}, x{rs2}"),
        Format::I | Format::Shift => format!("{m} x{rd}, x{rs1}, {imm}"),
        Format::Load | Format::Jalr => format!("{m} x{rd}, {imm}(x{rs1})"),
        Format::Store => format!("{m} x{rs2}, {imm}(x{rs1})"),
        Format::Branch => format!("{m} x{rs1}, x{rs2}, {imm}"),
        Format::Jal | Format::U => format!("{m} x{rd}, {imm}"),
        Format::Mac => format!("{m} x{rs1}, x{rs2}"),
        Format::MacR => format!("{m} x{rd}"),
        Format::None => m.to_string(),
    }
}

fn invert(labels: &BTreeMap<String, u32>) -> BTreeMap<u32, Vec<&str>> {
    let mut out: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for (name, &at) in labels {
        out.entry(at).or_default().push(name);
    }
    out
}

/// Renders a program as assembly that [`parse_assembly`] maps back to an
/// equal program. Branch and jump targets are printed as numeric offsets.
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::from(".text\n");
    if program.entry != 0 {
        let _ = writeln!(out, ".entry {}", program.entry);
    }
    let code = invert(&program.labels);
    for (i, ins) in program.instructions.iter().enumerate() {
        for name in code.get(&(i as u32)).into_iter().flatten() {
            let _ = writeln!(out, "{name}:");
        }
        let _ = writeln!(out, "    {}", format_instruction(ins));
    }
    for (_, names) in code.range(program.instructions.len() as u32..) {
        for name in names {
            let _ = writeln!(out, "{name}:");
        }
    }
    if program.data.words.is_empty() && program.data_labels.is_empty() {
        return out;
    }
    out.push_str(".data\n");
    let data = invert(&program.data_labels);
    for (i, w) in program.data.words.iter().enumerate() {
        for name in data.get(&(i as u32)).into_iter().flatten() {
            let _ = writeln!(out, "{name}:");
        }
        let _ = writeln!(out, "    .word {w}");
    }
    for (_, names) in data.range(program.data.words.len() as u32..) {
        for name in names {
            let _ = writeln!(out, "{name}:");
        }
    }
    out
}

impl std::fmt::Display for Instruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_instruction(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_offsets() {
        let p = parse_assembly(
            "start: ADDI x1, x0, 3\nloop: ADDI x1, x1, -1\n BNE x1, x0, loop\n HALT\n",
        )
        .unwrap();
        assert_eq!(p.labels["loop"], 1);
        assert_eq!(p.instructions[2].imm, -1);
    }

    #[test]
    fn data_label_arithmetic() {
        let p = parse_assembly(".data\nbuf: .space 4\nptr: .word buf+3\n.text\nLW x1, ptr(x0)\n")
            .unwrap();
        assert_eq!(p.data.words, vec![0, 0, 0, 0, 3]);
        assert_eq!(p.instructions[0].imm, 4);
        let err = parse_assembly(".data\nbuf: .space 4\n.text\nADDI x1, x0, buf+9\n").unwrap_err();
        assert!(matches!(err, AsmError::LabelOutOfRange { line: 4, .. }));
    }

    #[test]
    fn lui_accepts_unsigned_hex() {
        let p = parse_assembly("LUI x1, 0xFFFFF").unwrap();
        assert_eq!(p.instructions[0].imm, -1);
    }

    #[test]
    fn comment_only_program_is_empty() {
        let p = parse_assembly("# nothing\n\n   # here\n").unwrap();
        assert!(p.is_empty());
    }
}
