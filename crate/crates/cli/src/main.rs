use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bespoke_core::bespoke::{analyze_dynamic, analyze_static, derive_config};
use bespoke_core::config::{core_config_to_toml, load_core_config, load_sweep_spec, SweepSpec};
use bespoke_core::eval::{render_table, sweep, Profile};
use bespoke_core::isa::{parse_assembly, validate, Precision, Program};
use bespoke_core::machine::{format_trace, CoreConfig, Machine, RunError};
use bespoke_core::mlcodegen::{gen_program, quantize_model, CodegenOptions, FloatModel, Variant};
use clap::{Parser, Subcommand};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model-format 1)");

const EXIT_PARSE: u8 = 1;
const EXIT_FAULT: u8 = 2;
const EXIT_EMPTY: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "bespoke", version = VERSION, about = "Bespoke printed-core toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile an assembly program and write the derived bespoke core config
    /// next to it.
    Analyze {
        asm: PathBuf,
        /// Profile the retired instructions of one run instead of the listing.
        #[arg(long)]
        dynamic: bool,
        /// Memory word to set before a dynamic run, as ADDR=VALUE.
        #[arg(long = "input", value_name = "ADDR=VALUE", value_parser = parse_poke)]
        inputs: Vec<(u32, u32)>,
        /// Core config the program is profiled against (default: baseline).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000_000)]
        max_cycles: u64,
        /// Where to write the derived config (default: <asm>.bespoke.toml).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an inference program for a model.
    Codegen {
        model: PathBuf,
        #[arg(long, value_parser = parse_precision)]
        precision: Precision,
        #[arg(long)]
        variant: Variant,
        /// Output assembly file (default: <model>.<variant>.p<n>.s).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an assembly program and print its statistics.
    Sim {
        asm: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write a per-instruction trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000_000)]
        max_cycles: u64,
    },
    /// Sweep every model in a directory and write the result tables.
    Report {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Evaluate cells one at a time.
        #[arg(long)]
        sequential: bool,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
    stdout: Option<serde_json::Value>,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code,
            error: error.into(),
            stdout: None,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse::<u32>()
        .ok()
        .and_then(Precision::from_bits)
        .ok_or_else(|| format!("`{s}` is not one of 4, 8, 16, 32"))
}

fn parse_poke(s: &str) -> Result<(u32, u32), String> {
    let (a, v) = s.split_once('=').ok_or("expected ADDR=VALUE")?;
    let num = |t: &str| -> Result<u32, String> {
        let t = t.trim();
        let parsed = match t.strip_prefix("0x") {
            Some(hex) => u32::from_str_radix(hex, 16).map_err(|e| e.to_string()),
            None => t.parse::<i64>().map_err(|e| e.to_string()).and_then(|v| {
                if (i32::MIN as i64..=u32::MAX as i64).contains(&v) {
                    Ok(v as u32)
                } else {
                    Err(format!("{v} does not fit a word"))
                }
            }),
        };
        parsed.map_err(|e| format!("`{t}`: {e}"))
    };
    Ok((num(a)?, num(v)?))
}

fn read_program(path: &Path) -> Result<Program, Failure> {
    let src = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;
    parse_assembly(&src)
        .map_err(|e| Failure::new(EXIT_PARSE, anyhow::anyhow!("{}: {e}", path.display())))
}

fn read_config(path: Option<&Path>) -> Result<CoreConfig, Failure> {
    match path {
        Some(p) => load_core_config(p).map_err(|e| Failure::new(EXIT_PARSE, e)),
        None => Ok(CoreConfig::default()),
    }
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))
}

fn print_json(value: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    // a closed pipe is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run_error_json(error: &RunError) -> serde_json::Value {
    match error {
        RunError::Fault(f) => {
            serde_json::json!({ "error": "fault", "message": f.to_string(), "fault": f })
        }
        RunError::CycleBudget { cycles, max_cycles } => serde_json::json!({
            "error": "cycle_budget",
            "message": error.to_string(),
            "cycles": cycles,
            "max_cycles": max_cycles,
        }),
    }
}

fn fault(error: RunError) -> Failure {
    let json = run_error_json(&error);
    Failure {
        code: EXIT_FAULT,
        error: error.into(),
        stdout: Some(json),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_analyze(
    asm: &Path,
    dynamic: bool,
    inputs: &[(u32, u32)],
    config: Option<&Path>,
    max_cycles: u64,
    out: Option<&Path>,
) -> CmdResult {
    let program = read_program(asm)?;
    let base = read_config(config)?;
    if !dynamic && !inputs.is_empty() {
        return Err(Failure::new(
            EXIT_USAGE,
            anyhow::anyhow!("--input needs --dynamic"),
        ));
    }
    let profile = if dynamic {
        analyze_dynamic(&program, &base, inputs, max_cycles).map_err(fault)?
    } else {
        analyze_static(&program)
    };
    let isa = derive_config(&profile, &base.isa).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let derived = CoreConfig { isa, ..base };
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| with_suffix(asm, ".bespoke.toml"));
    write(&out, &core_config_to_toml(&derived))?;
    print_json(&serde_json::json!({
        "profile": profile,
        "config": derived,
        "config_path": out.display().to_string(),
    }));
    Ok(())
}

fn cmd_codegen(
    model: &Path,
    precision: Precision,
    variant: Variant,
    out: Option<&Path>,
) -> CmdResult {
    let opts = CodegenOptions::new(variant, precision);
    opts.check().map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let float = FloatModel::load(model).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let quant = quantize_model(&float, precision).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let generated = gen_program(&quant, &opts).map_err(|e| Failure::new(EXIT_USAGE, e))?;

    let profile = if variant == Variant::Softmul {
        Profile::Nomul
    } else {
        Profile::Mul
    };
    let reparsed = parse_assembly(&generated.source).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let report = validate(&reparsed, &profile.isa());
    if !report.is_ok() {
        let listed: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(Failure::new(
            EXIT_PARSE,
            anyhow::anyhow!("generated code does not validate: {}", listed.join("; ")),
        ));
    }

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| {
        with_suffix(
            model,
            &format!(".{}.p{}.s", variant.name(), precision.bits()),
        )
    });
    write(&out, &generated.source)?;
    print_json(&serde_json::json!({
        "asm_path": out.display().to_string(),
        "model": float.id,
        "variant": variant,
        "precision": precision.bits(),
        "lanes": opts.lanes(),
        "profile": profile,
        "instructions": generated.program.len(),
        "data_words": generated.program.data.words.len(),
        "input_address": generated.input_address,
        "n_inputs": generated.n_inputs,
        "result_address": generated.result_address,
    }));
    Ok(())
}

fn cmd_sim(asm: &Path, config: Option<&Path>, trace: Option<&Path>, max_cycles: u64) -> CmdResult {
    let program = read_program(asm)?;
    let config = read_config(config)?;
    let mut machine = Machine::new(program, config);
    if trace.is_some() {
        machine.enable_trace();
    }
    let outcome = machine.run(max_cycles);
    if let Some(path) = trace {
        write(path, &format_trace(machine.trace().unwrap_or_default()))?;
    }
    let stats = outcome.map_err(fault)?;
    print_json(&stats);
    Ok(())
}

fn cmd_report(models: &Path, spec: Option<&Path>, out: &Path, sequential: bool) -> CmdResult {
    let spec = match spec {
        Some(p) => load_sweep_spec(p).map_err(|e| Failure::new(EXIT_PARSE, e))?,
        None => SweepSpec::default(),
    };
    let entries = fs::read_dir(models)
        .with_context(|| format!("reading {}", models.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    // every model must load before any cell runs
    let loaded: Vec<FloatModel> = paths
        .iter()
        .map(|p| FloatModel::load(p))
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;

    let mut settings = spec.settings();
    settings.parallel = !sequential;
    let result = sweep(
        &loaded,
        &spec.precisions,
        &spec.variants,
        &spec.profiles,
        &settings,
    );
    let rendered = render_table(&result);
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;
    write(&out.join("results.txt"), &rendered.table)?;
    write(&out.join("results.json"), &rendered.json)?;
    write(&out.join("results.csv"), &rendered.csv)?;
    write(&out.join("scatter.csv"), &rendered.scatter)?;
    for f in &result.failures {
        eprintln!(
            "cell failed: {} n={} {} {}: {}",
            f.model, f.precision, f.variant, f.profile, f.error
        );
    }
    print_json(&serde_json::json!({
        "models": loaded.len(),
        "cells": result.reports.len(),
        "failures": result.failures.len(),
        "out": out.display().to_string(),
    }));
    if result.reports.is_empty() {
        return Err(Failure::new(
            EXIT_EMPTY,
            anyhow::anyhow!("no cell produced a result"),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Analyze {
            asm,
            dynamic,
            inputs,
            config,
            max_cycles,
            out,
        } => cmd_analyze(
            asm,
            *dynamic,
            inputs,
            config.as_deref(),
            *max_cycles,
            out.as_deref(),
        ),
        Command::Codegen {
            model,
            precision,
            variant,
            out,
        } => cmd_codegen(model, *precision, *variant, out.as_deref()),
        Command::Sim {
            asm,
            config,
            trace,
            max_cycles,
        } => cmd_sim(asm, config.as_deref(), trace.as_deref(), *max_cycles),
        Command::Report {
            models,
            sweep,
            out,
            sequential,
        } => cmd_report(models, sweep.as_deref(), out, *sequential),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(json) = &f.stdout {
                print_json(json);
            }
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
