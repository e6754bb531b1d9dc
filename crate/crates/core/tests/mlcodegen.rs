mod common;

use bespoke_core::eval::run_sample;
use bespoke_core::isa::{Opcode, Precision};
use bespoke_core::machine::{CoreConfig, Machine};
use bespoke_core::mlcodegen::{
    gen_mlp_program, gen_program, gen_svm_program, pack_lanes, quantize_model,
    reference_infer_float, reference_infer_quant, unpack_lanes, CodegenError, CodegenOptions,
    FloatModel, FloatPrediction, ModelKind, PackError, QFormat, QuantBody, QuantPrediction,
    Variant, MODEL_FORMAT_VERSION,
};
use common::fixture_models;
use proptest::prelude::*;
use serde_json::json;

fn identity_mlp() -> FloatModel {
    FloatModel::from_json(
        &json!({
            "format_version": MODEL_FORMAT_VERSION,
            "id": "identity",
            "dataset": "none",
            "kind": "mlp_regressor",
            "n_features": 1,
            "normalization": {"min": [0.0], "max": [1.0]},
            "mlp": {"layers": [
                {"weights": [[1.0]], "biases": [0.0]},
                {"weights": [[1.0]], "biases": [0.0]}
            ]},
            "float_accuracy": 100.0,
            "test": {"features": [[0.0], [1.0]], "labels": [0, 1]}
        })
        .to_string(),
    )
    .unwrap()
}

fn svm_classifier(classes: usize) -> FloatModel {
    let mut pairs = Vec::new();
    for i in 0..classes {
        for j in i + 1..classes {
            pairs.push(
                json!({"pos": i, "neg": j, "weights": [0.5, -0.25], "bias": 0.1 * (i + j) as f64}),
            );
        }
    }
    FloatModel::from_json(
        &json!({
            "format_version": MODEL_FORMAT_VERSION,
            "id": format!("svm{classes}"),
            "dataset": "none",
            "kind": "svm_classifier",
            "n_features": 2,
            "classes": (0..classes as i64).collect::<Vec<_>>(),
            "normalization": {"min": [0.0, 0.0], "max": [1.0, 1.0]},
            "svm": {"pairs": pairs},
            "float_accuracy": 0.0,
            "test": {"features": [[0.2, 0.9]], "labels": [0]}
        })
        .to_string(),
    )
    .unwrap()
}

fn options() -> Vec<CodegenOptions> {
    let mut all = Vec::new();
    for p in Precision::ALL {
        for v in [
            Variant::Softmul,
            Variant::Mul,
            Variant::MacScalar,
            Variant::MacSimd,
        ] {
            let o = CodegenOptions::new(v, p);
            if o.check().is_ok() {
                all.push(o);
            }
        }
    }
    all
}

fn simulate(model: &FloatModel, opts: &CodegenOptions, x: &[f64]) -> (u32, u64) {
    let q = quantize_model(model, opts.precision).unwrap();
    let g = gen_program(&q, opts).unwrap();
    let m = Machine::new(g.program.clone(), CoreConfig::default());
    let (word, stats) = run_sample(&m, &g, &q.quantize_input(x), 10_000_000).unwrap();
    (word, stats.total_cycles)
}

#[test]
fn quantize_examples() {
    let q = QFormat::new(8, 7);
    assert_eq!(q.quantize(0.0), (0, false));
    assert_eq!(q.quantize(0.5), (64, false));
    assert_eq!(q.quantize(1.5), (127, true));
    assert_eq!(q.quantize(-1.0), (-128, false));
    assert_eq!(q.quantize(-1.5), (-128, true));
    for bits in [4, 8, 16, 32] {
        for frac in [0, bits / 2, bits - 1] {
            assert_eq!(QFormat::new(bits, frac).quantize(0.0), (0, false));
        }
    }
}

#[test]
fn saturation_is_counted_per_model() {
    let mut m = identity_mlp();
    // frac 0 at n=4 still cannot hold 100
    m.mlp.as_mut().unwrap().layers[0].weights[0][0] = 100.0;
    let q = quantize_model(&m, Precision::P4).unwrap();
    assert!(q.saturations >= 1);
    assert_eq!(
        quantize_model(&identity_mlp(), Precision::P4)
            .unwrap()
            .saturations,
        0
    );
}

#[test]
fn non_finite_weights_are_rejected() {
    let mut m = identity_mlp();
    m.mlp.as_mut().unwrap().layers[1].biases[0] = f64::NAN;
    assert!(quantize_model(&m, Precision::P8).is_err());
}

#[test]
fn pack_examples() {
    assert_eq!(
        pack_lanes(&[1, 2, 3, 4], Precision::P8).unwrap(),
        vec![0x0403_0201]
    );
    assert_eq!(pack_lanes(&[-1], Precision::P8).unwrap(), vec![0x0000_00ff]);
    assert_eq!(
        pack_lanes(&[-7], Precision::P32).unwrap(),
        vec![-7i32 as u32]
    );
    assert_eq!(
        pack_lanes(&[1, -1, 0, 7, -8, 1, 1, 1, 2], Precision::P4).unwrap(),
        vec![0x1118_70f1, 0x2]
    );
    assert_eq!(
        pack_lanes(&[0, 128], Precision::P8),
        Err(PackError::OutOfRange {
            index: 1,
            code: 128,
            bits: 8
        })
    );
    assert!(pack_lanes(&[], Precision::P16).unwrap().is_empty());
}

fn codes_strategy() -> impl Strategy<Value = (Precision, Vec<i32>)> {
    (0usize..4).prop_flat_map(|p| {
        let precision = Precision::ALL[p];
        let n = precision.bits();
        let (lo, hi) = (-(1i64 << (n - 1)), (1i64 << (n - 1)) - 1);
        (
            Just(precision),
            prop::collection::vec((lo..=hi).prop_map(|c| c as i32), 0..40),
        )
    })
}

proptest! {
    #[test]
    fn pack_then_unpack_is_identity((precision, codes) in codes_strategy()) {
        let words = pack_lanes(&codes, precision).unwrap();
        prop_assert_eq!(words.len(), codes.len().div_ceil(precision.lanes()));
        prop_assert_eq!(unpack_lanes(&words, precision, codes.len()), codes.clone());
        // padding lanes are zero
        let padded = unpack_lanes(&words, precision, words.len() * precision.lanes());
        prop_assert!(padded[codes.len()..].iter().all(|&c| c == 0));
    }

    #[test]
    fn quantization_error_is_half_an_lsb(bits in prop::sample::select(vec![4u32, 8, 16, 32]), frac_pick in 0u32..32, t in -1.0f64..1.0) {
        let frac = frac_pick % bits;
        let q = QFormat::new(bits, frac);
        let v = t * q.max_code() as f64 / (frac as f64).exp2();
        let (code, saturated) = q.quantize(v);
        prop_assert!(!saturated);
        prop_assert!((q.dequantize(code as i64) - v).abs() <= (-(frac as f64) - 1.0).exp2() + 1e-12);
    }

    #[test]
    fn identity_network_round_trips(code in 0i32..=64) {
        let model = identity_mlp();
        let x = code as f64 / 64.0;
        for opts in options() {
            let q = quantize_model(&model, opts.precision).unwrap();
            let (word, _) = simulate(&model, &opts, &[x]);
            let input = q.quantize_input(&[x])[0];
            let value = word as i32 as f64 / (q.output_frac() as f64).exp2();
            prop_assert_eq!(value, q.input_format.dequantize(input as i64), "{:?}", opts);
            prop_assert_eq!(reference_infer_quant(&q, &[input]), QuantPrediction::Code(word as i32));
        }
    }
}

#[test]
fn identity_network_in_float() {
    let m = identity_mlp();
    assert_eq!(
        reference_infer_float(&m, &[0.3]),
        Ok(FloatPrediction::Value(0.3))
    );
    assert!(reference_infer_float(&m, &[0.3, 0.1]).is_err());
}

#[test]
fn zero_weight_classifiers_break_ties_deterministically() {
    let mut m = svm_classifier(3);
    for p in &mut m.svm.as_mut().unwrap().pairs {
        p.weights.iter_mut().for_each(|w| *w = 0.0);
        p.bias = 0.0;
    }
    // every decision is non-positive and votes for `neg`; 0v1 -> 1, 0v2 -> 2, 1v2 -> 2
    assert_eq!(
        reference_infer_float(&m, &[0.5, 0.5]),
        Ok(FloatPrediction::Class(2))
    );
    let mut mlp = FloatModel::from_json(include_str!(
        "../../../fixtures/models/cardiotocography_mlp_classifier.json"
    ))
    .unwrap();
    let (_, out) = mlp.mlp.as_mut().map(|b| b.layers.split_at_mut(1)).unwrap();
    out[0].weights.iter_mut().flatten().for_each(|w| *w = 0.0);
    out[0].biases.iter_mut().for_each(|b| *b = 0.0);
    for x in mlp.test.features.iter().take(20) {
        assert_eq!(
            reference_infer_float(&mlp, x),
            Ok(FloatPrediction::Class(0))
        );
    }
}

#[test]
fn svm_emits_one_decision_per_pair() {
    for k in 2..=5 {
        let m = svm_classifier(k);
        let q = quantize_model(&m, Precision::P16).unwrap();
        let QuantBody::Svm { decisions, pairs } = &q.body else {
            panic!("not an svm")
        };
        assert_eq!(pairs.len(), k * (k - 1) / 2);
        assert_eq!(decisions.outputs(), k * (k - 1) / 2);
        let g =
            gen_svm_program(&q, &CodegenOptions::new(Variant::MacScalar, Precision::P16)).unwrap();
        let proto = Machine::new(g.program.clone(), CoreConfig::default());
        let (_, stats) = run_sample(
            &proto,
            &g,
            &q.quantize_input(&m.test.features[0]),
            1_000_000,
        )
        .unwrap();
        assert_eq!(
            stats.per_opcode[&Opcode::Macz],
            (k * (k - 1) / 2) as u64,
            "{k} classes"
        );
        for opts in options() {
            let q = quantize_model(&m, opts.precision).unwrap();
            let codes = q.quantize_input(&m.test.features[0]);
            let (word, _) = simulate(&m, &opts, &m.test.features[0]);
            assert_eq!(
                reference_infer_quant(&q, &codes),
                QuantPrediction::Class(word as usize),
                "{opts:?}"
            );
        }
    }
}

#[test]
fn generators_reject_mismatched_options() {
    let m = identity_mlp();
    let q = quantize_model(&m, Precision::P32).unwrap();
    let simd32 = CodegenOptions::new(Variant::MacSimd, Precision::P32);
    assert!(matches!(
        gen_mlp_program(&q, &simd32),
        Err(CodegenError::Inconsistent(_))
    ));
    let q8 = quantize_model(&m, Precision::P8).unwrap();
    assert!(gen_mlp_program(&q8, &CodegenOptions::new(Variant::MacSimd, Precision::P4)).is_err());
    let svm = quantize_model(&svm_classifier(2), Precision::P8).unwrap();
    assert!(gen_mlp_program(
        &svm,
        &CodegenOptions::new(Variant::MacScalar, Precision::P8)
    )
    .is_err());
    assert!(gen_svm_program(&q8, &CodegenOptions::new(Variant::MacScalar, Precision::P8)).is_err());
}

#[test]
fn generated_code_uses_only_its_variant() {
    let models = fixture_models();
    for m in &models {
        for opts in options() {
            let q = quantize_model(m, opts.precision).unwrap();
            let g = gen_program(&q, &opts).unwrap();
            let ops: Vec<Opcode> = g.program.instructions.iter().map(|i| i.op).collect();
            let has = |op: Opcode| ops.contains(&op);
            match opts.variant {
                Variant::Softmul => {
                    assert!(!has(Opcode::Mul) && ops.iter().all(|op| !op.uses_multiplier()))
                }
                Variant::Mul => {
                    assert!(has(Opcode::Mul) && ops.iter().all(|op| op.mac_precision().is_none()))
                }
                Variant::MacScalar => {
                    assert!(has(Opcode::MacP32) && !has(Opcode::Mul));
                    assert!(ops
                        .iter()
                        .all(|op| op.mac_precision().is_none_or(|p| p == Precision::P32)));
                }
                Variant::MacSimd => {
                    assert!(has(opts.precision.mac_opcode()) && !has(Opcode::Mul));
                    assert!(ops
                        .iter()
                        .all(|op| op.mac_precision().is_none_or(|p| p == opts.precision)));
                }
            }
            assert_eq!(g.n_inputs, m.n_features);
            assert_eq!(
                bespoke_core::isa::parse_assembly(&g.source).unwrap(),
                g.program,
                "{} {opts:?}",
                m.id
            );
        }
    }
}

#[test]
fn variants_agree_with_the_fixed_point_reference() {
    let models = fixture_models();
    assert_eq!(models.len(), 6);
    for m in &models {
        for p in Precision::ALL {
            let q = quantize_model(m, p).unwrap();
            let programs: Vec<_> = options()
                .into_iter()
                .filter(|o| o.precision == p)
                .map(|o| {
                    let g = gen_program(&q, &o).unwrap();
                    (o, Machine::new(g.program.clone(), CoreConfig::default()), g)
                })
                .collect();
            for x in m.test.features.iter().step_by(7) {
                let codes = q.quantize_input(x);
                let want = match reference_infer_quant(&q, &codes) {
                    QuantPrediction::Class(c) => c as u32,
                    QuantPrediction::Code(c) => c as u32,
                };
                for (o, proto, g) in &programs {
                    let (word, _) = run_sample(proto, g, &codes, 10_000_000).unwrap();
                    assert_eq!(word, want, "{} {o:?}", m.id);
                }
            }
        }
    }
}

#[test]
fn softmul_is_slowest_and_simd_fastest_per_model() {
    for m in &fixture_models() {
        let x = &m.test.features[0];
        let cyc = |v, p| simulate(m, &CodegenOptions::new(v, p), x).1;
        let soft = cyc(Variant::Softmul, Precision::P32);
        let mac = cyc(Variant::MacScalar, Precision::P32);
        let s16 = cyc(Variant::MacSimd, Precision::P16);
        let s8 = cyc(Variant::MacSimd, Precision::P8);
        let s4 = cyc(Variant::MacSimd, Precision::P4);
        assert!(
            soft > mac && mac > s16 && s16 > s8 && s8 > s4,
            "{}: {soft} {mac} {s16} {s8} {s4}",
            m.id
        );
    }
}

#[test]
fn mac_scalar_is_smaller_than_softmul() {
    for m in &fixture_models() {
        for p in Precision::ALL {
            let q = quantize_model(m, p).unwrap();
            let len = |v| {
                gen_program(&q, &CodegenOptions::new(v, p))
                    .unwrap()
                    .program
                    .len()
            };
            assert!(
                len(Variant::MacScalar) < len(Variant::Softmul),
                "{} n={}",
                m.id,
                p.bits()
            );
        }
    }
}

#[test]
fn float_interpreter_reproduces_recorded_accuracy() {
    for m in &fixture_models() {
        let acc = m.float_test_accuracy();
        assert!(
            (acc - m.float_accuracy).abs() <= 0.5,
            "{}: {acc} vs {}",
            m.id,
            m.float_accuracy
        );
    }
}

#[test]
fn sixteen_bit_labels_track_the_float_model() {
    for m in &fixture_models() {
        let q = quantize_model(m, Precision::P16).unwrap();
        let agree = m
            .test
            .features
            .iter()
            .filter(|x| {
                let f = reference_infer_float(m, x).unwrap();
                let fixed = reference_infer_quant(&q, &q.quantize_input(x));
                match (f, fixed) {
                    (FloatPrediction::Class(a), QuantPrediction::Class(b)) => a == b,
                    (FloatPrediction::Value(v), QuantPrediction::Code(c)) => {
                        v.round() == (c as f64 / (q.output_frac() as f64).exp2()).round()
                    }
                    _ => false,
                }
            })
            .count();
        let pct = 100.0 * agree as f64 / m.test.labels.len() as f64;
        assert!(pct >= 99.5, "{}: {pct:.2}%", m.id);
    }
}

#[test]
fn model_json_round_trips() {
    for m in &fixture_models() {
        let text = serde_json::to_string(m).unwrap();
        assert_eq!(&FloatModel::from_json(&text).unwrap(), m);
        assert_eq!(m.kind.is_classifier(), !m.classes.is_empty());
    }
    let kinds: std::collections::BTreeSet<ModelKind> =
        fixture_models().iter().map(|m| m.kind).collect();
    assert_eq!(kinds.len(), 4);
}

#[test]
fn model_json_is_validated() {
    let base = serde_json::to_value(identity_mlp()).unwrap();
    let broken = [
        ("/format_version", json!(2)),
        ("/n_features", json!(2)),
        ("/classes", json!([0, 1])),
        ("/test/features", json!([[1.5], [0.0]])),
        ("/mlp/layers/1/weights", json!([[1.0, 2.0]])),
    ];
    for (pointer, value) in broken {
        let mut v = base.clone();
        *v.pointer_mut(pointer).unwrap() = value;
        assert!(FloatModel::from_json(&v.to_string()).is_err(), "{pointer}");
    }
    assert!(FloatModel::from_json("{").is_err());
}
