mod common;

use std::collections::BTreeSet;

use bespoke_core::bespoke::{
    analyze_dynamic, analyze_static, bits_for, derive_config, estimate_core_savings, rom_cost,
    CellGranularity, ComponentCostTable, DeriveError, ProfileKind, Removal, RomCellCost,
    SavingsError, UsageProfile,
};
use bespoke_core::isa::{encode, validate, IsaConfig, Opcode, Precision, Program, WordWidth};
use bespoke_core::machine::{CoreConfig, Machine};
use common::{asm, benchmark, random_terminating_program, BENCHMARKS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn profile(
    ops: &[Opcode],
    regs: &[u8],
    code_size: usize,
    max_data_address: Option<u32>,
) -> UsageProfile {
    UsageProfile {
        kind: ProfileKind::Static,
        used_opcodes: ops.iter().copied().collect(),
        used_registers: regs.iter().copied().collect(),
        code_size,
        max_data_address,
    }
}

/// The baseline without any MAC extension.
fn scalar_baseline() -> IsaConfig {
    let mut c = IsaConfig::baseline();
    c.enabled
        .retain(|op| !op.uses_multiplier() || matches!(op, Opcode::Mul | Opcode::Mulh));
    c.mac_precisions.clear();
    c
}

fn config_for(name: &str) -> CoreConfig {
    if name == "muldiv.s" {
        CoreConfig::new(IsaConfig::baseline().without(&[Opcode::Mul, Opcode::Mulh]))
    } else {
        CoreConfig::default()
    }
}

#[test]
fn static_profile_examples() {
    let p = asm("ADDI x1, x0, 1\nADD x2, x1, x1\nHALT");
    let prof = analyze_static(&p);
    assert!(!prof.used_opcodes.contains(&Opcode::Mul));
    assert!(!prof.used_opcodes.contains(&Opcode::Mulh));
    assert_eq!(
        prof.used_opcodes,
        [Opcode::Add, Opcode::Addi, Opcode::Halt]
            .into_iter()
            .collect()
    );

    let empty = analyze_static(&Program::default());
    assert!(empty.used_opcodes.is_empty() && empty.used_registers.is_empty());
    assert_eq!(empty.code_size, 0);

    let mut src = String::new();
    for r in 1..12 {
        src.push_str(&format!("ADDI x{r}, x{}, 1\n", r - 1));
    }
    src.push_str("HALT\n");
    let prof = analyze_static(&asm(&src));
    assert_eq!(prof.used_registers.len(), 12);
    let derived = derive_config(&prof, &IsaConfig::baseline()).unwrap();
    assert_eq!(derived.register_count, 12);
}

#[test]
fn dead_code_is_only_in_the_static_profile() {
    let p = asm("JAL x0, end\nMULH x7, x8, x9\nend: HALT");
    let s = analyze_static(&p);
    let d = analyze_dynamic(&p, &CoreConfig::default(), &[], 1000).unwrap();
    assert!(s.used_opcodes.contains(&Opcode::Mulh));
    assert!(!d.used_opcodes.contains(&Opcode::Mulh));
    assert!(!d.used_registers.contains(&7));
    assert_eq!(d.kind, ProfileKind::Dynamic);
    assert_eq!(
        d,
        analyze_dynamic(&p, &CoreConfig::default(), &[], 1000).unwrap()
    );
}

#[test]
fn dynamic_profile_is_contained_in_static() {
    for name in BENCHMARKS {
        let p = benchmark(name);
        let s = analyze_static(&p);
        let d = analyze_dynamic(&p, &config_for(name), &[], 1_000_000).unwrap();
        assert!(d.used_opcodes.is_subset(&s.used_opcodes), "{name}");
        assert!(d.used_registers.is_subset(&s.used_registers), "{name}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let p = random_terminating_program(&mut rng);
        let s = analyze_static(&p);
        let d = analyze_dynamic(&p, &CoreConfig::default(), &[], 100_000).unwrap();
        assert!(d.used_opcodes.is_subset(&s.used_opcodes));
        assert!(d.used_registers.is_subset(&s.used_registers));
    }
}

#[test]
fn dot_product_uses_exactly_its_kernel() {
    let p = benchmark("dotprod.s");
    let d = analyze_dynamic(&p, &CoreConfig::default(), &[], 10_000).unwrap();
    let kernel: BTreeSet<Opcode> = [
        Opcode::Addi,
        Opcode::Lw,
        Opcode::Mul,
        Opcode::Add,
        Opcode::Bne,
        Opcode::Sw,
        Opcode::Halt,
    ]
    .into_iter()
    .collect();
    assert_eq!(d.used_opcodes, kernel);
    assert_eq!(analyze_static(&p).used_opcodes, kernel);
}

#[test]
fn dynamic_inputs_steer_the_profile() {
    let p =
        asm("LW x1, flag(x0)\nBEQ x1, x0, end\nMUL x2, x1, x1\nend: HALT\n.data\nflag: .word 0");
    let off = analyze_dynamic(&p, &CoreConfig::default(), &[], 100).unwrap();
    let on = analyze_dynamic(&p, &CoreConfig::default(), &[(0, 1)], 100).unwrap();
    assert!(!off.used_opcodes.contains(&Opcode::Mul));
    assert!(on.used_opcodes.contains(&Opcode::Mul));
}

#[test]
fn derive_examples() {
    let base = IsaConfig::baseline();
    let ops = [Opcode::Addi, Opcode::Halt];
    let c = derive_config(&profile(&ops, &[0, 1], 600, None), &base).unwrap();
    assert_eq!(c.pc_width_bits, 10);
    let c = derive_config(&profile(&ops, &[0, 1], 10, Some(255)), &base).unwrap();
    assert_eq!(c.bar_width_bits, 8);
    let c = derive_config(&profile(&ops, &[0, 1], 10, Some(256)), &base).unwrap();
    assert_eq!(c.bar_width_bits, 9);
    let c = derive_config(&profile(&ops, &[0, 1], 1, None), &base).unwrap();
    assert_eq!(c.pc_width_bits, 1);
    assert_eq!(c.bar_width_bits, 1);
    assert_eq!(c.enabled, ops.into_iter().collect());
    assert!(!c.csr_group);
    assert_eq!(c.word_width, base.word_width);

    assert!(matches!(
        derive_config(&profile(&[], &[], 0, None), &base),
        Err(DeriveError::EmptyProfile)
    ));
    let no_mul = base.clone().without(&[Opcode::Mul]);
    assert!(matches!(
        derive_config(&profile(&[Opcode::Mul], &[0], 1, None), &no_mul),
        Err(DeriveError::NotInBaseline(_))
    ));
}

#[test]
fn ceil_log2_oracle() {
    for n in 1u64..5000 {
        let mut bits = 0;
        while (1u64 << bits) < n {
            bits += 1;
        }
        assert_eq!(bits_for(n), bits.max(1), "{n}");
    }
}

#[test]
fn derived_configs_validate_their_programs() {
    for name in BENCHMARKS {
        let p = benchmark(name);
        let c = derive_config(&analyze_static(&p), &config_for(name).isa).unwrap();
        assert!(
            validate(&p, &c).is_ok(),
            "{name}: {:?}",
            validate(&p, &c).violations
        );
    }
    let mlp3 = derive_config(
        &analyze_static(&benchmark("mlp3.s")),
        &IsaConfig::baseline(),
    )
    .unwrap();
    assert_eq!((mlp3.pc_width_bits, mlp3.bar_width_bits), (10, 8));
}

#[test]
fn trimmed_cores_run_random_programs_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb15);
    for case in 0..100 {
        let p = random_terminating_program(&mut rng);
        let mut full = Machine::new(p.clone(), CoreConfig::default());
        let full_stats = full
            .run(100_000)
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        let derived = derive_config(&analyze_static(&p), &IsaConfig::baseline()).unwrap();
        assert!(validate(&p, &derived).is_ok(), "case {case}");
        let mut trimmed = Machine::new(p.clone(), CoreConfig::new(derived));
        let trimmed_stats = trimmed
            .run(100_000)
            .unwrap_or_else(|e| panic!("case {case}: {e}\n{p:?}"));
        assert_eq!(full_stats, trimmed_stats, "case {case}");
        assert_eq!(full.memory(), trimmed.memory(), "case {case}");
        let n = trimmed.registers().len();
        assert_eq!(&full.registers()[..n], trimmed.registers(), "case {case}");
    }
}

#[test]
fn union_covers_both_programs() {
    let a = analyze_static(&benchmark("dotprod.s"));
    let b = analyze_static(&benchmark("sort.s"));
    let u = a.union(&b);
    let c = derive_config(&u, &IsaConfig::baseline()).unwrap();
    assert!(validate(&benchmark("dotprod.s"), &c).is_ok());
    assert!(validate(&benchmark("sort.s"), &c).is_ok());
}

#[test]
fn rom_cost_examples() {
    let cell = RomCellCost::default();
    let image = bespoke_core::isa::RomImage {
        word_width: WordWidth::W32,
        words: vec![0; 100],
        instruction_words: 100,
        data_words: 0,
    };
    let c = rom_cost(&image, &cell);
    assert_eq!(c.cells, 3200);
    assert!((c.area_mm2 - 2688.0).abs() < 1e-9);
    assert!((c.power_mw - 58.336).abs() < 1e-9);

    let empty = encode(&Program::default(), WordWidth::W32).unwrap();
    let c = rom_cost(&empty, &cell);
    assert_eq!((c.area_mm2, c.power_mw), (0.0, 0.0));

    let p = asm("ADD x1, x1, x2\nADDI x1, x1, 3\nHALT");
    let wide = rom_cost(&encode(&p, WordWidth::W32).unwrap(), &cell);
    let narrow = rom_cost(&encode(&p, WordWidth::W16).unwrap(), &cell);
    assert_eq!(narrow.area_mm2 * 2.0, wide.area_mm2);
    assert_eq!(narrow.power_mw * 2.0, wide.power_mw);

    let per_word = RomCellCost {
        granularity: CellGranularity::PerWord,
        ..cell
    };
    assert_eq!(
        rom_cost(&encode(&p, WordWidth::W32).unwrap(), &per_word).cells,
        3
    );
}

#[test]
fn rom_cost_is_linear_on_benchmarks() {
    let cell = RomCellCost::default();
    for name in BENCHMARKS {
        let p = benchmark(name);
        let image = encode(&p, WordWidth::W32).unwrap();
        let c = rom_cost(&image, &cell);
        let bits = 32 * (p.len() + p.data.words.len()) as u64;
        assert_eq!(c.cells, bits);
        assert_eq!(c.area_mm2, bits as f64 * 0.84, "{name}");
        assert_eq!(c.power_mw, bits as f64 * 18.23 / 1000.0, "{name}");

        let mut doubled = p.clone();
        doubled.instructions.extend(p.instructions.iter().copied());
        doubled.data.words.extend(p.data.words.iter().copied());
        let d = rom_cost(&encode(&doubled, WordWidth::W32).unwrap(), &cell);
        assert_eq!(d.area_mm2, 2.0 * c.area_mm2, "{name}");
        assert_eq!(d.power_mw, 2.0 * c.power_mw, "{name}");
    }
}

#[test]
fn savings_examples() {
    let table = ComponentCostTable::default();
    let base = IsaConfig::baseline();
    let same = estimate_core_savings(&base, &base, &table).unwrap();
    assert_eq!((same.area_saving_pct, same.power_saving_pct), (0.0, 0.0));
    let scalar = scalar_baseline();
    let same = estimate_core_savings(&scalar, &base, &table).unwrap();
    assert_eq!((same.area_saving_pct, same.power_saving_pct), (0.0, 0.0));

    // multiplier gone and every register removed
    let s = table.removal_saving(&Removal {
        mul_removed: true,
        registers_removed: 32,
        register_file_size: 32,
        ..Default::default()
    });
    assert!(
        (s.0 - 46.5).abs() < 1e-9 && (s.1 - 46.2).abs() < 1e-9,
        "{s:?}"
    );

    let twelve = IsaConfig {
        register_count: 12,
        ..scalar.clone()
    };
    let r = estimate_core_savings(&twelve, &base, &table).unwrap();
    let rf = table.component("rf");
    assert!((r.area_saving_pct - 100.0 * rf.area * 20.0 / 32.0).abs() < 1e-9);
    assert!((r.power_saving_pct - 100.0 * rf.power * 20.0 / 32.0).abs() < 1e-9);

    let no_mul = scalar.clone().without(&[Opcode::Mul, Opcode::Mulh]);
    let r = estimate_core_savings(&no_mul, &base, &table).unwrap();
    assert!(r.removal.mul_removed);
    assert!((r.area_saving_pct - 28.0).abs() < 1e-9);
    assert!((r.power_saving_pct - 27.7).abs() < 1e-9);
    assert!(r.removed_opcodes.contains(&Opcode::Mulh));
    assert!(r.removed_opcodes.contains(&Opcode::MacP8));

    // a MAC mode keeps the multiplier and is charged on top
    let mut mac8 = no_mul.clone();
    mac8.enabled
        .extend([Opcode::MacP8, Opcode::Macr, Opcode::Macz]);
    mac8.mac_precisions = [Precision::P8].into_iter().collect();
    let r = estimate_core_savings(&mac8, &base, &table).unwrap();
    assert!(!r.removal.mul_removed);
    assert_eq!(r.removal.mac_modes_added, 1);
    assert_eq!(r.area_saving_pct, 0.0);

    let wider = IsaConfig {
        pc_width_bits: 33,
        ..base.clone()
    };
    assert!(matches!(
        estimate_core_savings(&wider, &base, &table),
        Err(SavingsError::NotSubset(_))
    ));
    assert!(estimate_core_savings(&base, &no_mul, &table).is_err());
}

#[test]
fn savings_are_monotone() {
    let table = ComponentCostTable::default();
    let base = IsaConfig::baseline();
    let scalar = scalar_baseline();
    let mut prev = 0.0;
    for regs in (2..=32).rev() {
        let c = IsaConfig {
            register_count: regs,
            ..scalar.clone()
        };
        let s = estimate_core_savings(&c, &base, &table)
            .unwrap()
            .area_saving_pct;
        assert!(s >= prev);
        prev = s;
    }
    let mut prev = 0.0;
    for pc in (1..=32).rev() {
        let c = IsaConfig {
            pc_width_bits: pc,
            bar_width_bits: pc,
            ..scalar.clone()
        };
        let s = estimate_core_savings(&c, &base, &table).unwrap();
        assert!(s.area_saving_pct >= prev && (0.0..=100.0).contains(&s.area_saving_pct));
        prev = s.area_saving_pct;
    }
    // removing an opcode never costs area
    let mut c = scalar.clone();
    let mut prev = 0.0;
    for op in scalar.enabled.iter().rev() {
        c.enabled.remove(op);
        let s = estimate_core_savings(&c, &base, &table)
            .unwrap()
            .area_saving_pct;
        assert!(s >= prev, "{op}");
        prev = s;
    }
}

#[test]
fn savings_report_renders() {
    let table = ComponentCostTable::default();
    let base = IsaConfig::baseline();
    let derived = derive_config(&analyze_static(&benchmark("mlp3.s")), &base).unwrap();
    let r = estimate_core_savings(&derived, &base, &table).unwrap();
    let text = r.to_string();
    assert!(text.contains("pc width"));
    assert!(text.contains("modeled"));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["pc_width_bits"], serde_json::json!([32, 10]));
}
