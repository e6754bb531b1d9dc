use serde::Serialize;

use super::model::{DenseLayer, FloatModel, ModelKind};
use crate::isa::Precision;

/// Signed fixed-point format: `bits` total, `frac` fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QFormat {
    pub bits: u32,
    pub frac: u32,
}

impl QFormat {
    pub fn new(bits: u32, frac: u32) -> QFormat {
        debug_assert!(frac < bits.max(1));
        QFormat { bits, frac }
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    /// Nearest code (ties away from zero), saturated. The flag reports
    /// saturation.
    pub fn quantize(&self, v: f64) -> (i32, bool) {
        let scaled = (v * (self.frac as f64).exp2()).round();
        let (lo, hi) = (self.min_code() as f64, self.max_code() as f64);
        if scaled > hi {
            (hi as i32, true)
        } else if scaled < lo {
            (lo as i32, true)
        } else {
            (scaled as i32, false)
        }
    }

    pub fn dequantize(&self, code: i64) -> f64 {
        code as f64 / (self.frac as f64).exp2()
    }
}

/// Largest `f <= bits - 1` with `max_abs < 2^(bits-1-f)`, or 0 if none.
pub fn frac_bits_for(max_abs: f64, bits: u32) -> u32 {
    (0..bits)
        .rev()
        .find(|&f| max_abs < ((bits - 1 - f) as f64).exp2())
        .unwrap_or(0)
}

/// Stored value width for a lane precision. Parameters are at most 16 bits
/// wide, so the 32-bit configurations hold 16-bit values.
pub fn value_bits(precision: Precision) -> u32 {
    precision.bits().min(16)
}

/// A quantized dense layer. Biases are at scale `weight_format.frac + input_frac`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QLayer {
    pub weights: Vec<Vec<i32>>,
    pub biases: Vec<i32>,
    pub weight_format: QFormat,
    pub input_frac: u32,
}

impl QLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    pub fn accumulator_frac(&self) -> u32 {
        self.weight_format.frac + self.input_frac
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QPair {
    pub pos: usize,
    pub neg: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum QuantBody {
    Mlp {
        hidden: QLayer,
        output: QLayer,
        /// Format of the hidden activations.
        hidden_format: QFormat,
        /// Right shift from the hidden accumulator scale to `hidden_format`.
        shift: u32,
    },
    /// One row of `decisions` per decision function.
    Svm {
        decisions: QLayer,
        pairs: Vec<QPair>,
    },
}

/// A fixed-point model ready for code generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuantModel {
    pub id: String,
    pub kind: ModelKind,
    pub n_features: usize,
    pub classes: Vec<i64>,
    pub precision: Precision,
    pub input_format: QFormat,
    pub body: QuantBody,
    /// Number of parameters clipped during quantization.
    pub saturations: usize,
}

impl QuantModel {
    /// Scale of the raw regressor output code.
    pub fn output_frac(&self) -> u32 {
        match &self.body {
            QuantBody::Mlp { output, .. } => output.accumulator_frac(),
            QuantBody::Svm { decisions, .. } => decisions.accumulator_frac(),
        }
    }

    /// Quantizes a normalised input vector.
    pub fn quantize_input(&self, x: &[f64]) -> Vec<i32> {
        x.iter().map(|&v| self.input_format.quantize(v).0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuantError {
    #[error("model `{id}`: non-finite value in {tensor}")]
    NonFinite { id: String, tensor: String },
}

fn max_abs<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.fold(0.0f64, |m, v| m.max(v.abs()))
}

fn quantize_layer(
    layer: &DenseLayer,
    bits: u32,
    input_frac: u32,
    input_max_code: i64,
    saturations: &mut usize,
) -> QLayer {
    let mut frac = frac_bits_for(max_abs(layer.weights.iter().flatten()), bits);
    loop {
        let mut sat = 0;
        let wf = QFormat::new(bits, frac);
        let weights: Vec<Vec<i32>> = layer
            .weights
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&w| {
                        let (c, s) = wf.quantize(w);
                        sat += s as usize;
                        c
                    })
                    .collect()
            })
            .collect();
        let bias_format = QFormat::new(32, 0);
        let bias_scale = ((frac + input_frac) as f64).exp2();
        let biases: Vec<i32> = layer
            .biases
            .iter()
            .map(|&b| {
                let (c, s) = bias_format.quantize(b * bias_scale);
                sat += s as usize;
                c
            })
            .collect();
        // worst-case accumulator magnitude over admissible inputs
        let bound = weights
            .iter()
            .zip(&biases)
            .map(|(row, &b)| {
                row.iter().map(|&w| (w as i64).abs()).sum::<i64>() * input_max_code
                    + (b as i64).abs()
            })
            .max()
            .unwrap_or(0);
        if bound < (1i64 << 31) || frac == 0 {
            *saturations += sat;
            return QLayer {
                weights,
                biases,
                weight_format: wf,
                input_frac,
            };
        }
        frac -= 1;
    }
}

fn check_finite(model: &FloatModel) -> Result<(), QuantError> {
    let bad = |tensor: &str| QuantError::NonFinite {
        id: model.id.clone(),
        tensor: tensor.to_string(),
    };
    if let Some((l1, l2)) = model.mlp_layers() {
        for (name, l) in [("hidden layer", l1), ("output layer", l2)] {
            if !l
                .weights
                .iter()
                .flatten()
                .chain(&l.biases)
                .all(|v| v.is_finite())
            {
                return Err(bad(name));
            }
        }
    }
    if let Some(pairs) = model.svm_pairs() {
        if !pairs
            .iter()
            .all(|p| p.bias.is_finite() && p.weights.iter().all(|v| v.is_finite()))
        {
            return Err(bad("svm decision functions"));
        }
    }
    Ok(())
}

/// Quantizes a model for lane precision `precision`.
///
/// Inputs in `[0, 1]` use `vb - 2` fractional bits. Each weight tensor takes
/// the largest frac count that represents its largest magnitude, reduced
/// until no admissible input can overflow the 32-bit accumulator. The
/// hidden activation format comes from an upper bound of the hidden
/// pre-activations over the unit input box.
pub fn quantize_model(model: &FloatModel, precision: Precision) -> Result<QuantModel, QuantError> {
    check_finite(model)?;
    let bits = value_bits(precision);
    let input_format = QFormat::new(bits, bits - 2);
    let input_max = 1i64 << input_format.frac;
    let mut saturations = 0;
    let body = if let Some((l1, l2)) = model.mlp_layers() {
        let hidden = quantize_layer(l1, bits, input_format.frac, input_max, &mut saturations);
        let bound = l1
            .weights
            .iter()
            .zip(&l1.biases)
            .map(|(row, &b)| b + row.iter().map(|&w| w.max(0.0)).sum::<f64>())
            .fold(0.0f64, f64::max);
        let hidden_frac = frac_bits_for(bound, bits).min(hidden.accumulator_frac());
        let hidden_format = QFormat::new(bits, hidden_frac);
        let shift = hidden.accumulator_frac() - hidden_frac;
        let output = quantize_layer(
            l2,
            bits,
            hidden_frac,
            hidden_format.max_code(),
            &mut saturations,
        );
        QuantBody::Mlp {
            hidden,
            output,
            hidden_format,
            shift,
        }
    } else {
        let pairs = model.svm_pairs().unwrap_or_default();
        let layer = DenseLayer {
            weights: pairs.iter().map(|p| p.weights.clone()).collect(),
            biases: pairs.iter().map(|p| p.bias).collect(),
        };
        let decisions =
            quantize_layer(&layer, bits, input_format.frac, input_max, &mut saturations);
        QuantBody::Svm {
            decisions,
            pairs: pairs
                .iter()
                .map(|p| QPair {
                    pos: p.pos,
                    neg: p.neg,
                })
                .collect(),
        }
    };
    Ok(QuantModel {
        id: model.id.clone(),
        kind: model.kind,
        n_features: model.n_features,
        classes: model.classes.clone(),
        precision,
        input_format,
        body,
        saturations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_rule() {
        assert_eq!(frac_bits_for(0.0, 8), 7);
        assert_eq!(frac_bits_for(0.5, 8), 7);
        assert_eq!(frac_bits_for(1.0, 8), 6);
        assert_eq!(frac_bits_for(1000.0, 8), 0);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let q = QFormat::new(8, 0);
        assert_eq!(q.quantize(2.5).0, 3);
        assert_eq!(q.quantize(-2.5).0, -3);
    }
}
