//! Fixed-point quantization of MLP/SVM models, lane packing, code
//! generation and reference interpreters.

mod codegen;
mod model;
mod pack;
mod quant;
mod reference;

pub use codegen::{
    gen_mlp_program, gen_program, gen_svm_program, CodegenError, CodegenOptions, GeneratedProgram,
    Variant,
};
pub use model::{
    DenseLayer, FloatModel, MlpBody, ModelError, ModelKind, Normalization, SvmBody, SvmPair,
    TestSplit, MODEL_FORMAT_VERSION,
};
pub use pack::{pack_lanes, unpack_lanes, PackError};
pub use quant::{
    frac_bits_for, quantize_model, value_bits, QFormat, QLayer, QPair, QuantBody, QuantError,
    QuantModel,
};
pub use reference::{
    reference_infer_float, reference_infer_quant, FloatPrediction, InputLengthError,
    QuantPrediction,
};
