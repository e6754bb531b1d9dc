use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pack::pack_lanes;
use super::quant::{QLayer, QuantBody, QuantModel};
use crate::isa::{parse_assembly, Opcode, Precision, Program};

/// How multiply-accumulate is realised in the generated code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Shift-add multiplication subroutine, no multiplier hardware.
    #[serde(rename = "softmul", alias = "softmul_baseline")]
    Softmul,
    /// Hardware `MUL` followed by `ADD`.
    #[serde(rename = "mul")]
    Mul,
    /// One `MAC.P32` per term.
    #[serde(rename = "mac", alias = "mac_scalar")]
    MacScalar,
    /// `MAC.Pn` over packed words of `32 / n` terms.
    #[serde(rename = "simd", alias = "mac_simd")]
    MacSimd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Softmul,
        Variant::Mul,
        Variant::MacScalar,
        Variant::MacSimd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Softmul => "softmul",
            Variant::Mul => "mul",
            Variant::MacScalar => "mac",
            Variant::MacSimd => "simd",
        }
    }

    pub fn uses_mac(self) -> bool {
        matches!(self, Variant::MacScalar | Variant::MacSimd)
    }

    /// Opcodes the variant's arithmetic relies on.
    pub fn required_opcodes(self, precision: Precision) -> Vec<Opcode> {
        match self {
            Variant::Softmul => vec![],
            Variant::Mul => vec![Opcode::Mul],
            Variant::MacScalar => vec![Opcode::MacP32, Opcode::Macr, Opcode::Macz],
            Variant::MacSimd => vec![precision.mac_opcode(), Opcode::Macr, Opcode::Macz],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmul" | "softmul_baseline" => Ok(Variant::Softmul),
            "mul" => Ok(Variant::Mul),
            "mac" | "mac_scalar" => Ok(Variant::MacScalar),
            "simd" | "mac_simd" => Ok(Variant::MacSimd),
            _ => Err(format!(
                "unknown variant `{s}` (expected softmul, mul, mac or simd)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodegenOptions {
    pub variant: Variant,
    pub precision: Precision,
}

impl CodegenOptions {
    pub fn new(variant: Variant, precision: Precision) -> CodegenOptions {
        CodegenOptions { variant, precision }
    }

    pub fn check(&self) -> Result<(), CodegenError> {
        if self.variant == Variant::MacSimd && self.precision == Precision::P32 {
            return Err(CodegenError::Inconsistent(
                "simd needs precision 16 or less (at least two lanes)".into(),
            ));
        }
        Ok(())
    }

    /// Terms per multiply-accumulate step.
    pub fn lanes(&self) -> usize {
        if self.variant == Variant::MacSimd {
            self.precision.lanes()
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodegenError {
    #[error("inconsistent options: {0}")]
    Inconsistent(String),
    #[error("generated code failed to assemble: {0}")]
    Assemble(String),
}

/// A generated inference program and where its inputs and result live.
#[derive(Debug, Clone)]
pub struct GeneratedProgram {
    pub program: Program,
    pub source: String,
    pub input_address: u32,
    pub n_inputs: usize,
    pub result_address: u32,
}

/// Data segment under construction; tracks addresses as labels are added.
struct Data {
    text: String,
    next: u32,
}

impl Data {
    fn label(&mut self, name: &str) -> u32 {
        let _ = writeln!(self.text, "{name}:");
        self.next
    }

    fn space(&mut self, name: &str, n: usize) -> u32 {
        let at = self.label(name);
        if n > 0 {
            let _ = writeln!(self.text, "    .space {n}");
            self.next += n as u32;
        }
        at
    }

    fn words<T: fmt::Display>(&mut self, name: &str, values: &[T]) -> u32 {
        let at = self.label(name);
        for chunk in values.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(self.text, "    .word {}", line.join(", "));
        }
        self.next += values.len() as u32;
        at
    }
}

struct Code {
    text: String,
}

impl Code {
    fn ins(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.text, "    {}", s.as_ref());
    }

    fn label(&mut self, name: &str) {
        let _ = writeln!(self.text, "{name}:");
    }

    /// Loads a constant; `name` is used when it fits the 12-bit immediate.
    fn li(&mut self, rd: &str, value: i64, name: Option<&str>) {
        if (-2048..2048).contains(&value) {
            match name {
                Some(n) => self.ins(format!("ADDI {rd}, x0, {n}")),
                None => self.ins(format!("ADDI {rd}, x0, {value}")),
            }
        } else {
            let hi = (value + 0x800) >> 12;
            let lo = value - (hi << 12);
            self.ins(format!("LUI {rd}, {hi}"));
            if lo != 0 {
                self.ins(format!("ADDI {rd}, {rd}, {lo}"));
            }
        }
    }
}

enum Epilogue {
    /// ReLU after an arithmetic right shift, saturated to `max`.
    Hidden { shift: u32, max: i64 },
    /// Raw accumulator.
    Raw,
    /// One-vs-one vote through a table of (pos, neg) vote-counter addresses.
    Vote,
}

struct LayerSpec<'a> {
    tag: &'a str,
    weights: u32,
    biases: u32,
    input: (u32, String),
    n_inputs: usize,
    /// Output buffer, or the vote table for [`Epilogue::Vote`].
    output: (u32, String),
    n_outputs: usize,
    epilogue: Epilogue,
}

const SOFTMUL: &str = "__smac";

fn term_body(code: &mut Code, opts: &CodegenOptions, lanes: usize) {
    code.ins("LW x6, 0(x2)");
    code.ins("LW x7, 0(x3)");
    match opts.variant {
        Variant::Softmul => code.ins(format!("JAL x1, {SOFTMUL}")),
        Variant::Mul => {
            code.ins("MUL x6, x6, x7");
            code.ins("ADD x5, x5, x6");
        }
        Variant::MacScalar => code.ins("MAC.P32 x6, x7"),
        Variant::MacSimd => {
            // activations are non-negative and below 2^(n-1), so a shifted
            // copy occupies exactly its own lane
            let n = opts.precision.bits() as usize;
            for i in 1..lanes {
                code.ins(format!("LW x11, {i}(x3)"));
                code.ins(format!("SLLI x11, x11, {}", i * n));
                code.ins("OR x7, x7, x11");
            }
            code.ins(format!("MAC.P{n} x6, x7"));
        }
    }
}

fn dense_layer(code: &mut Code, opts: &CodegenOptions, l: &LayerSpec<'_>) {
    let k = opts.lanes();
    let (full, rem) = (l.n_inputs / k, l.n_inputs % k);
    let stride = if matches!(l.epilogue, Epilogue::Vote) {
        2
    } else {
        1
    };
    let (neuron, term) = (format!("{}_neuron", l.tag), format!("{}_term", l.tag));
    code.li("x2", l.weights as i64, None);
    code.li("x8", l.biases as i64, None);
    code.li("x9", l.output.0 as i64, Some(&l.output.1));
    let end = l.output.0 as i64 + (stride * l.n_outputs) as i64;
    code.li(
        "x10",
        end,
        Some(&format!("{}+{}", l.output.1, stride * l.n_outputs)),
    );
    if full > 0 {
        let end = l.input.0 as i64 + (full * k) as i64;
        code.li("x4", end, Some(&format!("{}+{}", l.input.1, full * k)));
    }
    code.label(&neuron);
    code.ins("LW x5, 0(x8)");
    if opts.variant.uses_mac() {
        code.ins("MACZ");
    }
    code.li("x3", l.input.0 as i64, Some(&l.input.1));
    if full > 0 {
        code.label(&term);
        term_body(code, opts, k);
        code.ins("ADDI x2, x2, 1");
        code.ins(format!("ADDI x3, x3, {k}"));
        code.ins(format!("BNE x3, x4, {term}"));
    }
    if rem > 0 {
        term_body(code, opts, rem);
        code.ins("ADDI x2, x2, 1");
    }
    if opts.variant.uses_mac() {
        code.ins("MACR x6");
        code.ins("ADD x5, x5, x6");
    }
    match l.epilogue {
        Epilogue::Hidden { shift, max } => {
            let (relu, sat) = (format!("{}_relu", l.tag), format!("{}_sat", l.tag));
            if shift > 0 {
                code.ins(format!("SRAI x5, x5, {shift}"));
            }
            code.ins(format!("BGE x5, x0, {relu}"));
            code.ins("ADDI x5, x0, 0");
            code.label(&relu);
            code.li("x6", max, None);
            code.ins(format!("BLT x5, x6, {sat}"));
            code.ins("ADDI x5, x6, 0");
            code.label(&sat);
            code.ins("SW x5, 0(x9)");
        }
        Epilogue::Raw => code.ins("SW x5, 0(x9)"),
        Epilogue::Vote => {
            let vote = format!("{}_vote", l.tag);
            code.ins("LW x6, 0(x9)");
            code.ins(format!("BLT x0, x5, {vote}"));
            code.ins("LW x6, 1(x9)");
            code.label(&vote);
            code.ins("LW x7, 0(x6)");
            code.ins("ADDI x7, x7, 1");
            code.ins("SW x7, 0(x6)");
        }
    }
    code.ins("ADDI x8, x8, 1");
    code.ins(format!("ADDI x9, x9, {stride}"));
    code.ins(format!("BNE x9, x10, {neuron}"));
}

/// Writes the index of the first maximum of `buf[0..n]` to `result`.
fn argmax(code: &mut Code, buf: (u32, &str), n: usize, result: u32) {
    code.li("x2", buf.0 as i64, Some(buf.1));
    code.li(
        "x4",
        buf.0 as i64 + n as i64,
        Some(&format!("{}+{n}", buf.1)),
    );
    code.ins("LW x5, 0(x2)");
    code.ins("ADDI x6, x0, 0");
    code.ins("ADDI x7, x0, 0");
    code.label("argmax_next");
    code.ins("ADDI x2, x2, 1");
    code.ins("ADDI x7, x7, 1");
    code.ins("BEQ x2, x4, argmax_done");
    code.ins("LW x3, 0(x2)");
    code.ins("BGE x5, x3, argmax_next");
    code.ins("ADDI x5, x3, 0");
    code.ins("ADDI x6, x7, 0");
    code.ins("JAL x0, argmax_next");
    code.label("argmax_done");
    code.li("x8", result as i64, Some("result"));
    code.ins("SW x6, 0(x8)");
}

/// x5 += x6 * x7 by shift-and-add. Clobbers x6, x7, x11.
fn softmul_routine(code: &mut Code) {
    code.label(SOFTMUL);
    code.ins(format!("BGE x7, x0, {SOFTMUL}_pos"));
    code.ins("SUB x6, x0, x6");
    code.ins("SUB x7, x0, x7");
    code.label(&format!("{SOFTMUL}_pos"));
    code.ins(format!("BEQ x7, x0, {SOFTMUL}_done"));
    code.label(&format!("{SOFTMUL}_bit"));
    code.ins("ANDI x11, x7, 1");
    code.ins(format!("BEQ x11, x0, {SOFTMUL}_skip"));
    code.ins("ADD x5, x5, x6");
    code.label(&format!("{SOFTMUL}_skip"));
    code.ins("SLLI x6, x6, 1");
    code.ins("SRLI x7, x7, 1");
    code.ins(format!("BNE x7, x0, {SOFTMUL}_bit"));
    code.label(&format!("{SOFTMUL}_done"));
    code.ins("JALR x0, 0(x1)");
}

/// Weight words of a layer: rows padded to whole packed words.
fn weight_words(layer: &QLayer, opts: &CodegenOptions) -> Vec<i32> {
    let mut out = Vec::new();
    for row in &layer.weights {
        if opts.variant == Variant::MacSimd {
            let packed = pack_lanes(row, opts.precision).expect("quantized codes fit their lanes");
            out.extend(packed.into_iter().map(|w| w as i32));
        } else {
            out.extend_from_slice(row);
        }
    }
    out
}

fn header(model: &QuantModel, opts: &CodegenOptions) -> String {
    format!(
        "# {} ({:?}), precision {}, variant {}, {} lane(s)\n",
        model.id,
        model.kind,
        opts.precision,
        opts.variant,
        opts.lanes()
    )
}

fn finish(
    model: &QuantModel,
    opts: &CodegenOptions,
    code: Code,
    data: Data,
    input: u32,
    result: u32,
) -> Result<GeneratedProgram, CodegenError> {
    let source = format!(
        "{}.text\n{}.data\n{}",
        header(model, opts),
        code.text,
        data.text
    );
    let program = parse_assembly(&source).map_err(|e| CodegenError::Assemble(e.to_string()))?;
    Ok(GeneratedProgram {
        program,
        source,
        input_address: input,
        n_inputs: model.n_features,
        result_address: result,
    })
}

fn check(model: &QuantModel, opts: &CodegenOptions) -> Result<(), CodegenError> {
    opts.check()?;
    if opts.precision != model.precision {
        return Err(CodegenError::Inconsistent(format!(
            "options ask for precision {} but the model is quantized at {}",
            opts.precision, model.precision
        )));
    }
    Ok(())
}

fn tail(code: &mut Code, opts: &CodegenOptions) {
    code.ins("HALT");
    if opts.variant == Variant::Softmul {
        softmul_routine(code);
    }
}

/// Generates the inference program for an MLP.
pub fn gen_mlp_program(
    model: &QuantModel,
    opts: &CodegenOptions,
) -> Result<GeneratedProgram, CodegenError> {
    check(model, opts)?;
    let QuantBody::Mlp {
        hidden,
        output,
        hidden_format,
        shift,
    } = &model.body
    else {
        return Err(CodegenError::Inconsistent(format!(
            "{} is not an MLP",
            model.id
        )));
    };
    let classifier = model.kind.is_classifier();
    let mut data = Data {
        text: String::new(),
        next: 0,
    };
    let input = data.space("input", model.n_features);
    let hid = data.space("hidden", hidden.outputs());
    let out = if classifier {
        Some(data.space("out", output.outputs()))
    } else {
        None
    };
    let result = data.space("result", 1);
    let w1 = data.words("w1", &weight_words(hidden, opts));
    let b1 = data.words("b1", &hidden.biases);
    let w2 = data.words("w2", &weight_words(output, opts));
    let b2 = data.words("b2", &output.biases);

    let mut code = Code {
        text: String::new(),
    };
    dense_layer(
        &mut code,
        opts,
        &LayerSpec {
            tag: "l1",
            weights: w1,
            biases: b1,
            input: (input, "input".into()),
            n_inputs: hidden.inputs(),
            output: (hid, "hidden".into()),
            n_outputs: hidden.outputs(),
            epilogue: Epilogue::Hidden {
                shift: *shift,
                max: hidden_format.max_code(),
            },
        },
    );
    let dest = match out {
        Some(o) => (o, "out".to_string()),
        None => (result, "result".to_string()),
    };
    dense_layer(
        &mut code,
        opts,
        &LayerSpec {
            tag: "l2",
            weights: w2,
            biases: b2,
            input: (hid, "hidden".into()),
            n_inputs: output.inputs(),
            output: dest,
            n_outputs: output.outputs(),
            epilogue: Epilogue::Raw,
        },
    );
    if let Some(o) = out {
        argmax(&mut code, (o, "out"), output.outputs(), result);
    }
    tail(&mut code, opts);
    finish(model, opts, code, data, input, result)
}

/// Generates the inference program for a linear SVM.
pub fn gen_svm_program(
    model: &QuantModel,
    opts: &CodegenOptions,
) -> Result<GeneratedProgram, CodegenError> {
    check(model, opts)?;
    let QuantBody::Svm { decisions, pairs } = &model.body else {
        return Err(CodegenError::Inconsistent(format!(
            "{} is not an SVM",
            model.id
        )));
    };
    let classifier = model.kind.is_classifier();
    let mut data = Data {
        text: String::new(),
        next: 0,
    };
    let input = data.space("input", model.n_features);
    let votes = if classifier {
        Some(data.space("votes", model.classes.len()))
    } else {
        None
    };
    let result = data.space("result", 1);
    let table = if classifier {
        let refs: Vec<String> = pairs
            .iter()
            .flat_map(|p| [format!("votes+{}", p.pos), format!("votes+{}", p.neg)])
            .collect();
        Some(data.words("pairs", &refs))
    } else {
        None
    };
    let w = data.words("w", &weight_words(decisions, opts));
    let b = data.words("b", &decisions.biases);

    let mut code = Code {
        text: String::new(),
    };
    let (output, epilogue) = match table {
        Some(t) => ((t, "pairs".to_string()), Epilogue::Vote),
        None => ((result, "result".to_string()), Epilogue::Raw),
    };
    dense_layer(
        &mut code,
        opts,
        &LayerSpec {
            tag: "svm",
            weights: w,
            biases: b,
            input: (input, "input".into()),
            n_inputs: decisions.inputs(),
            output,
            n_outputs: decisions.outputs(),
            epilogue,
        },
    );
    if let Some(v) = votes {
        argmax(&mut code, (v, "votes"), model.classes.len(), result);
    }
    tail(&mut code, opts);
    finish(model, opts, code, data, input, result)
}

/// Dispatches on the model kind.
pub fn gen_program(
    model: &QuantModel,
    opts: &CodegenOptions,
) -> Result<GeneratedProgram, CodegenError> {
    if model.kind.is_mlp() {
        gen_mlp_program(model, opts)
    } else {
        gen_svm_program(model, opts)
    }
}
