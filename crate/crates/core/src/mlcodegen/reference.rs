//! Reference interpreters. The fixed-point one works on unbounded integers
//! and shares no arithmetic with the simulator or the code generator.

use super::model::FloatModel;
use super::quant::{QLayer, QuantBody, QuantModel};

/// Prediction of the floating-point model: a class index or a real value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FloatPrediction {
    Class(usize),
    Value(f64),
}

/// Prediction of the fixed-point model: a class index or a raw output code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantPrediction {
    Class(usize),
    Code(i32),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("input has {got} features, model expects {expected}")]
pub struct InputLengthError {
    pub expected: usize,
    pub got: usize,
}

/// Index of the first maximum.
fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

fn votes(pairs: impl Iterator<Item = (usize, usize, bool)>, classes: usize) -> usize {
    let mut v = vec![0u32; classes];
    for (pos, neg, positive) in pairs {
        v[if positive { pos } else { neg }] += 1;
    }
    argmax_first(&v)
}

/// Exact floating-point forward pass.
pub fn reference_infer_float(
    model: &FloatModel,
    x: &[f64],
) -> Result<FloatPrediction, InputLengthError> {
    if x.len() != model.n_features {
        return Err(InputLengthError {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let dot = |w: &[f64], b: f64, v: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + b;
    if let Some((l1, l2)) = model.mlp_layers() {
        let h: Vec<f64> = l1
            .weights
            .iter()
            .zip(&l1.biases)
            .map(|(w, &b)| dot(w, b, x).max(0.0))
            .collect();
        let o: Vec<f64> = l2
            .weights
            .iter()
            .zip(&l2.biases)
            .map(|(w, &b)| dot(w, b, &h))
            .collect();
        return Ok(if model.kind.is_classifier() {
            FloatPrediction::Class(argmax_first(&o))
        } else {
            FloatPrediction::Value(o[0])
        });
    }
    let pairs = model.svm_pairs().unwrap_or_default();
    if model.kind.is_classifier() {
        let decisions = pairs
            .iter()
            .map(|p| (p.pos, p.neg, dot(&p.weights, p.bias, x) > 0.0));
        Ok(FloatPrediction::Class(votes(
            decisions,
            model.classes.len(),
        )))
    } else {
        Ok(FloatPrediction::Value(dot(
            &pairs[0].weights,
            pairs[0].bias,
            x,
        )))
    }
}

/// Accumulator of one neuron: exact sum, then reduced modulo 2^32 the way a
/// 32-bit register would hold it.
fn accumulate(layer: &QLayer, row: usize, x: &[i128]) -> i128 {
    let exact: i128 = layer.weights[row]
        .iter()
        .zip(x)
        .map(|(&w, &v)| w as i128 * v)
        .sum::<i128>()
        + layer.biases[row] as i128;
    let m = exact.rem_euclid(1 << 32);
    if m >= 1 << 31 {
        m - (1 << 32)
    } else {
        m
    }
}

/// Bit-exact fixed-point forward pass.
pub fn reference_infer_quant(model: &QuantModel, codes: &[i32]) -> QuantPrediction {
    let x: Vec<i128> = codes.iter().map(|&c| c as i128).collect();
    match &model.body {
        QuantBody::Mlp {
            hidden,
            output,
            hidden_format,
            shift,
        } => {
            let top = hidden_format.max_code() as i128;
            let h: Vec<i128> = (0..hidden.outputs())
                .map(|j| {
                    // floor division by 2^shift
                    let v = accumulate(hidden, j, &x).div_euclid(1i128 << shift);
                    v.clamp(0, top)
                })
                .collect();
            let o: Vec<i128> = (0..output.outputs())
                .map(|j| accumulate(output, j, &h))
                .collect();
            if model.kind.is_classifier() {
                QuantPrediction::Class(argmax_first(&o))
            } else {
                QuantPrediction::Code(o[0] as i32)
            }
        }
        QuantBody::Svm { decisions, pairs } => {
            if model.kind.is_classifier() {
                let d = pairs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| (p.pos, p.neg, accumulate(decisions, j, &x) > 0));
                QuantPrediction::Class(votes(d, model.classes.len()))
            } else {
                QuantPrediction::Code(accumulate(decisions, 0, &x) as i32)
            }
        }
    }
}

impl FloatModel {
    /// Whether a float prediction scores as correct for `label`. Regressors
    /// are correct when the output rounds (half away from zero) to the label.
    pub fn float_correct(&self, p: FloatPrediction, label: i64) -> bool {
        match p {
            FloatPrediction::Class(i) => self.classes[i] == label,
            FloatPrediction::Value(v) => v.round() as i64 == label,
        }
    }

    /// Accuracy of the floating-point model on its test split, in percent.
    pub fn float_test_accuracy(&self) -> f64 {
        let t = &self.test;
        if t.labels.is_empty() {
            return 0.0;
        }
        let hits = t
            .features
            .iter()
            .zip(&t.labels)
            .filter(|(x, &l)| {
                reference_infer_float(self, x).is_ok_and(|p| self.float_correct(p, l))
            })
            .count();
        100.0 * hits as f64 / t.labels.len() as f64
    }
}

impl QuantModel {
    /// Whether a fixed-point prediction scores as correct for `label`.
    pub fn quant_correct(&self, p: QuantPrediction, label: i64) -> bool {
        match p {
            QuantPrediction::Class(i) => self.classes[i] == label,
            QuantPrediction::Code(c) => {
                let v = c as f64 / (self.output_frac() as f64).exp2();
                v.round() as i64 == label
            }
        }
    }
}
