//! Toolchain for bespoke printed microprocessors: an assembler and ROM
//! encoder, a cycle-counting simulator with a SIMD multiply-accumulate unit,
//! usage-driven core trimming with a cost model, fixed-point code generation
//! for small MLP and SVM models, and an evaluation harness.

pub mod bespoke;
pub mod config;
pub mod eval;
pub mod isa;
pub mod machine;
pub mod mlcodegen;
mod par;
