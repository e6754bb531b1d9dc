//! Experiment driver: runs quantized models through the simulator for every
//! (model, precision, variant, core profile) cell and aggregates reports.

mod pareto;
mod render;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use pareto::{dominates, pareto_flags};
pub use render::{render_table, Rendered, CSV_HEADER, SCATTER_HEADER};

use crate::bespoke::{
    analyze_static, derive_config, estimate_core_savings, rom_cost, ComponentCostTable,
    RomCellCost, RomCost,
};
use crate::isa::{encode, IsaConfig, Opcode, Precision, WordWidth};
use crate::machine::{CoreConfig, CostModel, Machine, RunError, RunStats, DEFAULT_MEMORY_WORDS};
use crate::mlcodegen::{
    gen_program, quantize_model, reference_infer_quant, CodegenOptions, FloatModel,
    GeneratedProgram, QuantModel, QuantPrediction, Variant,
};
use crate::par;

/// Core the generated code runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Baseline core with a hardware multiplier.
    Mul,
    /// Baseline core without MUL/MULH.
    Nomul,
}

impl Profile {
    pub const ALL: [Profile; 2] = [Profile::Mul, Profile::Nomul];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Mul => "mul",
            Profile::Nomul => "nomul",
        }
    }

    pub fn isa(self) -> IsaConfig {
        match self {
            Profile::Mul => IsaConfig::baseline(),
            Profile::Nomul => IsaConfig::baseline().without(&[Opcode::Mul, Opcode::Mulh]),
        }
    }

    pub fn word_width(self) -> WordWidth {
        WordWidth::W32
    }

    /// Variant speedups are measured against.
    pub fn baseline_variant(self) -> Variant {
        match self {
            Profile::Mul => Variant::Mul,
            Profile::Nomul => Variant::Softmul,
        }
    }

    pub fn supports(self, variant: Variant) -> bool {
        match self {
            Profile::Mul => variant != Variant::Softmul,
            Profile::Nomul => variant != Variant::Mul,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mul" => Ok(Profile::Mul),
            "nomul" => Ok(Profile::Nomul),
            _ => Err(format!("unknown profile `{s}` (expected mul or nomul)")),
        }
    }
}

/// Cost parameters and execution options shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub costs: CostModel,
    pub rom_cell: RomCellCost,
    pub components: ComponentCostTable,
    pub max_cycles: u64,
    pub memory_words: u32,
    /// Use the rayon thread pool when the `parallel` feature is enabled.
    pub parallel: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            costs: CostModel::default(),
            rom_cell: RomCellCost::default(),
            components: ComponentCostTable::default(),
            max_cycles: 10_000_000,
            memory_words: DEFAULT_MEMORY_WORDS,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Inconsistent(String),
    #[error("sample {sample}: {error}")]
    Run { sample: usize, error: RunError },
    #[error("{0}")]
    Codegen(String),
}

/// Measurements of one (model, precision, variant, profile) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub accuracy: f64,
    pub avg_cycles: f64,
    pub instr_count: usize,
    pub rom_words: usize,
    pub rom: RomCost,
    pub core_area_saving_pct: f64,
    pub core_power_saving_pct: f64,
    pub modeled_core_area_mm2: f64,
    pub oracle_mismatches: usize,
    pub mac_overflows: u64,
    pub samples: usize,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub kind: String,
    pub precision: u32,
    pub variant: Variant,
    pub profile: Profile,
    pub word_width: u32,
    pub accuracy: f64,
    pub float_accuracy: f64,
    pub loss_pp: f64,
    pub cycles: f64,
    pub baseline_cycles: f64,
    pub speedup_pct: f64,
    pub instr_count: usize,
    pub rom_words: usize,
    pub rom_area_mm2: f64,
    pub rom_power_mw: f64,
    pub modeled_core_saving_pct: f64,
    pub modeled_core_power_saving_pct: f64,
    /// Modeled core area after trimming plus ROM area.
    pub modeled_area_mm2: f64,
    pub oracle_mismatches: usize,
    pub mac_overflows: u64,
    pub samples: usize,
    pub pareto: bool,
}

impl EvalReport {
    fn key(&self) -> (String, Profile, Variant, std::cmp::Reverse<u32>) {
        (
            self.model.clone(),
            self.profile,
            self.variant,
            std::cmp::Reverse(self.precision),
        )
    }
}

fn consistent(
    precision: Precision,
    variant: Variant,
    profile: Profile,
) -> Result<CodegenOptions, EvalError> {
    let opts = CodegenOptions::new(variant, precision);
    opts.check()
        .map_err(|e| EvalError::Inconsistent(e.to_string()))?;
    let isa = profile.isa();
    if let Some(op) = variant
        .required_opcodes(precision)
        .into_iter()
        .find(|op| !isa.is_enabled(*op))
    {
        return Err(EvalError::Inconsistent(format!(
            "variant {variant} needs {op}, absent from profile {profile}"
        )));
    }
    Ok(opts)
}

/// Runs one generated program on one input vector and returns the result
/// word with the run statistics.
pub fn run_sample(
    proto: &Machine,
    generated: &GeneratedProgram,
    codes: &[i32],
    max_cycles: u64,
) -> Result<(u32, RunStats), RunError> {
    let mut m = proto.clone();
    for (i, &c) in codes.iter().enumerate() {
        m.write_word(generated.input_address + i as u32, c as u32);
    }
    let stats = m.run(max_cycles)?;
    Ok((m.read_word(generated.result_address).unwrap_or(0), stats))
}

/// Simulates every test sample of one cell.
pub fn run_cell(
    model: &FloatModel,
    quant: &QuantModel,
    variant: Variant,
    profile: Profile,
    settings: &EvalSettings,
) -> Result<CellResult, EvalError> {
    let opts = consistent(quant.precision, variant, profile)?;
    let generated = gen_program(quant, &opts).map_err(|e| EvalError::Codegen(e.to_string()))?;
    let config = CoreConfig {
        isa: profile.isa(),
        costs: settings.costs,
        memory_words: settings.memory_words,
    };
    let proto = Machine::new(generated.program.clone(), config);
    let samples: Vec<(usize, &Vec<f64>, i64)> = model
        .test
        .features
        .iter()
        .zip(&model.test.labels)
        .enumerate()
        .map(|(i, (x, &l))| (i, x, l))
        .collect();
    let outcomes = par::map(settings.parallel, &samples, |&(i, x, label)| {
        let codes = quant.quantize_input(x);
        let (word, stats) = run_sample(&proto, &generated, &codes, settings.max_cycles)
            .map_err(|error| EvalError::Run { sample: i, error })?;
        let simulated = if quant.kind.is_classifier() {
            QuantPrediction::Class(word as usize)
        } else {
            QuantPrediction::Code(word as i32)
        };
        let reference = reference_infer_quant(quant, &codes);
        let correct = match simulated {
            QuantPrediction::Class(c) if c >= quant.classes.len() => false,
            p => quant.quant_correct(p, label),
        };
        Ok::<_, EvalError>((
            correct,
            stats.total_cycles,
            stats.mac_overflow_events,
            simulated != reference,
        ))
    });
    let mut hits = 0usize;
    let mut cycles = 0u64;
    let mut mismatches = 0usize;
    let mut overflows = 0u64;
    for o in outcomes {
        let (correct, c, ov, mismatch) = o?;
        hits += correct as usize;
        cycles += c;
        overflows += ov;
        mismatches += mismatch as usize;
    }
    let n = samples.len().max(1) as f64;

    let baseline = IsaConfig::baseline();
    let derived = derive_config(&analyze_static(&generated.program), &baseline)
        .map_err(|e| EvalError::Inconsistent(e.to_string()))?;
    let saving = estimate_core_savings(&derived, &baseline, &settings.components)
        .map_err(|e| EvalError::Inconsistent(e.to_string()))?;
    let image = encode(&generated.program, profile.word_width())
        .map_err(|e| EvalError::Codegen(e.to_string()))?;
    let rom = rom_cost(&image, &settings.rom_cell);
    Ok(CellResult {
        accuracy: 100.0 * hits as f64 / n,
        avg_cycles: cycles as f64 / n,
        instr_count: generated.program.len(),
        rom_words: image.words.len(),
        rom,
        core_area_saving_pct: saving.area_saving_pct,
        core_power_saving_pct: saving.power_saving_pct,
        modeled_core_area_mm2: saving.modeled_area_cm2 * 100.0,
        oracle_mismatches: mismatches,
        mac_overflows: overflows,
        samples: samples.len(),
    })
}

fn report(
    model: &FloatModel,
    float_accuracy: f64,
    precision: Precision,
    variant: Variant,
    profile: Profile,
    cell: &CellResult,
    base: &CellResult,
) -> EvalReport {
    EvalReport {
        model: model.id.clone(),
        kind: serde_json::to_value(model.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        precision: precision.bits(),
        variant,
        profile,
        word_width: profile.word_width().bits(),
        accuracy: cell.accuracy,
        float_accuracy,
        loss_pp: float_accuracy - cell.accuracy,
        cycles: cell.avg_cycles,
        baseline_cycles: base.avg_cycles,
        speedup_pct: 100.0 * (1.0 - cell.avg_cycles / base.avg_cycles),
        instr_count: cell.instr_count,
        rom_words: cell.rom_words,
        rom_area_mm2: cell.rom.area_mm2,
        rom_power_mw: cell.rom.power_mw,
        modeled_core_saving_pct: cell.core_area_saving_pct,
        modeled_core_power_saving_pct: cell.core_power_saving_pct,
        modeled_area_mm2: cell.modeled_core_area_mm2 + cell.rom.area_mm2,
        oracle_mismatches: cell.oracle_mismatches,
        mac_overflows: cell.mac_overflows,
        samples: cell.samples,
        pareto: true,
    }
}

/// Evaluates one configuration, including its profile's baseline variant
/// for the speedup.
pub fn evaluate(
    model: &FloatModel,
    precision: Precision,
    variant: Variant,
    profile: Profile,
    settings: &EvalSettings,
) -> Result<EvalReport, EvalError> {
    consistent(precision, variant, profile)?;
    let quant =
        quantize_model(model, precision).map_err(|e| EvalError::Inconsistent(e.to_string()))?;
    let cell = run_cell(model, &quant, variant, profile, settings)?;
    let base = if variant == profile.baseline_variant() {
        cell.clone()
    } else {
        run_cell(model, &quant, profile.baseline_variant(), profile, settings)?
    };
    Ok(report(
        model,
        model.float_test_accuracy(),
        precision,
        variant,
        profile,
        &cell,
        &base,
    ))
}

/// A configuration that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub model: String,
    pub precision: u32,
    pub variant: Variant,
    pub profile: Profile,
    pub error: String,
}

/// Mean of per-model values for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub precision: u32,
    pub variant: Variant,
    pub profile: Profile,
    pub models: usize,
    pub loss_pp: f64,
    pub cycles: f64,
    pub speedup_pct: f64,
    pub instr_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub reports: Vec<EvalReport>,
    pub means: Vec<MeanRow>,
    pub failures: Vec<CellFailure>,
}

impl SweepResult {
    pub fn find(
        &self,
        model: &str,
        precision: u32,
        variant: Variant,
        profile: Profile,
    ) -> Option<&EvalReport> {
        self.reports.iter().find(|r| {
            r.model == model
                && r.precision == precision
                && r.variant == variant
                && r.profile == profile
        })
    }

    pub fn mean(&self, precision: u32, variant: Variant, profile: Profile) -> Option<&MeanRow> {
        self.means
            .iter()
            .find(|m| m.precision == precision && m.variant == variant && m.profile == profile)
    }
}

/// Evaluates the cross product of the inputs. Inconsistent combinations are
/// skipped; cells that fail are recorded and the sweep continues. Pareto
/// flags are computed within each (model, profile) group.
pub fn sweep(
    models: &[FloatModel],
    precisions: &[Precision],
    variants: &[Variant],
    profiles: &[Profile],
    settings: &EvalSettings,
) -> SweepResult {
    let float_acc: Vec<f64> = par::map(settings.parallel, models, FloatModel::float_test_accuracy);
    let quants: Vec<(usize, Precision, Result<QuantModel, String>)> = models
        .iter()
        .enumerate()
        .flat_map(|(m, model)| {
            precisions
                .iter()
                .map(move |&p| (m, p, quantize_model(model, p).map_err(|e| e.to_string())))
        })
        .collect();

    // every requested cell plus the baselines it is compared against
    let mut wanted: BTreeMap<(usize, Precision, Variant, Profile), ()> = BTreeMap::new();
    let mut requested = Vec::new();
    for (m, _) in models.iter().enumerate() {
        for &p in precisions {
            for &profile in profiles {
                for &v in variants {
                    if !profile.supports(v) || consistent(p, v, profile).is_err() {
                        continue;
                    }
                    requested.push((m, p, v, profile));
                    wanted.insert((m, p, v, profile), ());
                    wanted.insert((m, p, profile.baseline_variant(), profile), ());
                }
            }
        }
    }
    let cells: Vec<(usize, Precision, Variant, Profile)> = wanted.into_keys().collect();
    let results = par::map(settings.parallel, &cells, |&(m, p, v, profile)| {
        let quant = quants
            .iter()
            .find(|(qm, qp, _)| *qm == m && *qp == p)
            .map(|(_, _, q)| q)
            .expect("quantized");
        match quant {
            Ok(q) => run_cell(&models[m], q, v, profile, settings).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        }
    });
    let by_key: BTreeMap<_, _> = cells.iter().copied().zip(results).collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (m, p, v, profile) in requested {
        let cell = &by_key[&(m, p, v, profile)];
        let base = &by_key[&(m, p, profile.baseline_variant(), profile)];
        match (cell, base) {
            (Ok(c), Ok(b)) => reports.push(report(&models[m], float_acc[m], p, v, profile, c, b)),
            (Err(e), _) | (_, Err(e)) => failures.push(CellFailure {
                model: models[m].id.clone(),
                precision: p.bits(),
                variant: v,
                profile,
                error: e.clone(),
            }),
        }
    }
    reports.sort_by_key(EvalReport::key);
    failures.sort_by(|a, b| {
        (&a.model, a.profile, a.variant, a.precision).cmp(&(
            &b.model,
            b.profile,
            b.variant,
            b.precision,
        ))
    });

    let mut start = 0;
    while start < reports.len() {
        let group = (reports[start].model.clone(), reports[start].profile);
        let end = start
            + reports[start..]
                .iter()
                .take_while(|r| (r.model.clone(), r.profile) == group)
                .count();
        let points: Vec<(f64, f64)> = reports[start..end]
            .iter()
            .map(|r| (r.modeled_area_mm2, r.speedup_pct))
            .collect();
        for (r, flag) in reports[start..end].iter_mut().zip(pareto_flags(&points)) {
            r.pareto = flag;
        }
        start = end;
    }

    let means = mean_rows(&reports);
    SweepResult {
        reports,
        means,
        failures,
    }
}

fn mean_rows(reports: &[EvalReport]) -> Vec<MeanRow> {
    let mut groups: BTreeMap<(Profile, Variant, std::cmp::Reverse<u32>), Vec<&EvalReport>> =
        BTreeMap::new();
    for r in reports {
        groups
            .entry((r.profile, r.variant, std::cmp::Reverse(r.precision)))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((profile, variant, precision), rows)| {
            let n = rows.len() as f64;
            let mean = |f: fn(&EvalReport) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            MeanRow {
                precision: precision.0,
                variant,
                profile,
                models: rows.len(),
                loss_pp: mean(|r| r.loss_pp),
                cycles: mean(|r| r.cycles),
                speedup_pct: mean(|r| r.speedup_pct),
                instr_count: mean(|r| r.instr_count as f64),
            }
        })
        .collect()
}
