use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::isa::{IsaConfig, Opcode, RomImage};

/// What one ROM cell stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellGranularity {
    #[default]
    PerBit,
    PerWord,
}

/// Area and power of one ROM cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomCellCost {
    pub area_mm2: f64,
    pub power_uw: f64,
    pub granularity: CellGranularity,
}

impl Default for RomCellCost {
    fn default() -> Self {
        RomCellCost {
            area_mm2: 0.84,
            power_uw: 18.23,
            granularity: CellGranularity::PerBit,
        }
    }
}

impl RomCellCost {
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [("area_mm2", self.area_mm2), ("power_uw", self.power_uw)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("rom_cell.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RomCost {
    pub cells: u64,
    pub area_mm2: f64,
    pub power_mw: f64,
}

/// Cost of storing a ROM image.
pub fn rom_cost(image: &RomImage, cell: &RomCellCost) -> RomCost {
    let cells = match cell.granularity {
        CellGranularity::PerBit => image.total_bits(),
        CellGranularity::PerWord => image.words.len() as u64,
    };
    RomCost {
        cells,
        area_mm2: cells as f64 * cell.area_mm2,
        power_mw: cells as f64 * cell.power_uw / 1000.0,
    }
}

/// Area and power fractions of the baseline core.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Share {
    pub area: f64,
    pub power: f64,
}

impl Share {
    fn scaled(self, k: f64) -> Share {
        Share {
            area: self.area * k,
            power: self.power * k,
        }
    }
}

impl std::ops::Add for Share {
    type Output = Share;
    fn add(self, o: Share) -> Share {
        Share {
            area: self.area + o.area,
            power: self.power + o.power,
        }
    }
}

impl std::ops::Sub for Share {
    type Output = Share;
    fn sub(self, o: Share) -> Share {
        Share {
            area: self.area - o.area,
            power: self.power - o.power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub area: f64,
    pub power: f64,
}

/// Per-component breakdown of the baseline core used by the savings model.
/// The components named `mul` and `rf` are credited when the multiplier or
/// registers are removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentCostTable {
    pub baseline_area_cm2: f64,
    pub baseline_power_mw: f64,
    pub components: Vec<Component>,
    /// Share of one PC bit.
    pub pc_bit: Share,
    /// Share of one BAR bit.
    pub bar_bit: Share,
    /// Added cost of each enabled MAC precision mode.
    pub mac_mode: Share,
}

impl Default for ComponentCostTable {
    fn default() -> Self {
        let ifidctl = Share {
            area: 0.25,
            power: 0.25,
        };
        let c = |name: &str, area, power| Component {
            name: name.to_string(),
            area,
            power,
        };
        ComponentCostTable {
            baseline_area_cm2: 67.53,
            baseline_power_mw: 291.21,
            components: vec![
                c("ex", 0.20, 0.20),
                c("mul", 0.28, 0.277),
                c("rf", 0.185, 0.185),
                c("ifidctl", ifidctl.area, ifidctl.power),
                c("other", 0.085, 0.088),
            ],
            pc_bit: ifidctl.scaled(1.0 / 64.0),
            bar_bit: ifidctl.scaled(1.0 / 64.0),
            mac_mode: Share {
                area: 0.024,
                power: 0.024,
            },
        }
    }
}

/// Hardware removed from (or added to) the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Removal {
    pub mul_removed: bool,
    pub registers_removed: u32,
    pub register_file_size: u32,
    pub pc_bits_removed: u32,
    pub bar_bits_removed: u32,
    pub mac_modes_added: u32,
}

impl ComponentCostTable {
    pub fn component(&self, name: &str) -> Share {
        self.components
            .iter()
            .find(|c| c.name == name)
            .map_or(Share::default(), |c| Share {
                area: c.area,
                power: c.power,
            })
    }

    /// Net (area, power) saving in percent, clamped to `[0, 100]`.
    pub fn removal_saving(&self, r: &Removal) -> (f64, f64) {
        let mut saved = Share::default();
        if r.mul_removed {
            saved = saved + self.component("mul");
        }
        if r.register_file_size > 0 {
            saved = saved
                + self
                    .component("rf")
                    .scaled(r.registers_removed as f64 / r.register_file_size as f64);
        }
        saved = saved
            + self.pc_bit.scaled(r.pc_bits_removed as f64)
            + self.bar_bit.scaled(r.bar_bits_removed as f64);
        saved = saved - self.mac_mode.scaled(r.mac_modes_added as f64);
        let pct = |v: f64| (v * 100.0).clamp(0.0, 100.0);
        (pct(saved.area), pct(saved.power))
    }

    pub fn check(&self) -> Result<(), String> {
        let area: f64 = self.components.iter().map(|c| c.area).sum();
        let power: f64 = self.components.iter().map(|c| c.power).sum();
        if area > 1.0 + 1e-9 || power > 1.0 + 1e-9 {
            return Err(format!(
                "component fractions sum to {area:.3} area / {power:.3} power, above 1"
            ));
        }
        if self
            .components
            .iter()
            .any(|c| c.area < 0.0 || c.power < 0.0)
        {
            return Err("component fractions must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SavingsError {
    #[error("bespoke configuration is not a subset of the baseline: {0}")]
    NotSubset(String),
}

/// Modeled savings of a bespoke configuration against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingsReport {
    pub removed_opcodes: Vec<Opcode>,
    pub csr_group_removed: bool,
    pub removal: Removal,
    pub registers: (u32, u32),
    pub pc_width_bits: (u32, u32),
    pub bar_width_bits: (u32, u32),
    pub area_saving_pct: f64,
    pub power_saving_pct: f64,
    pub modeled_area_cm2: f64,
    pub modeled_power_mw: f64,
}

fn has_multiplier(config: &IsaConfig) -> bool {
    config.enabled.iter().any(|op| op.uses_multiplier())
}

/// Estimates the core area and power saved by trimming `baseline` down to
/// `bespoke`. The baseline's MAC opcodes count as optional extensions: each
/// MAC mode enabled in `bespoke` is charged on top of the baseline core.
pub fn estimate_core_savings(
    bespoke: &IsaConfig,
    baseline: &IsaConfig,
    table: &ComponentCostTable,
) -> Result<SavingsReport, SavingsError> {
    if let Some(op) = bespoke.enabled.difference(&baseline.enabled).next() {
        return Err(SavingsError::NotSubset(format!(
            "{op} is not enabled in the baseline"
        )));
    }
    let checks = [
        (
            "register_count",
            bespoke.register_count,
            baseline.register_count,
        ),
        (
            "pc_width_bits",
            bespoke.pc_width_bits,
            baseline.pc_width_bits,
        ),
        (
            "bar_width_bits",
            bespoke.bar_width_bits,
            baseline.bar_width_bits,
        ),
    ];
    if let Some((name, b, base)) = checks.iter().find(|(_, b, base)| b > base) {
        return Err(SavingsError::NotSubset(format!(
            "{name} {b} exceeds baseline {base}"
        )));
    }
    if !bespoke.mac_precisions.is_subset(&baseline.mac_precisions) {
        return Err(SavingsError::NotSubset(
            "MAC precision not in the baseline".into(),
        ));
    }
    let baseline_mul = baseline.is_enabled(Opcode::Mul) || baseline.is_enabled(Opcode::Mulh);
    let removal = Removal {
        mul_removed: baseline_mul && !has_multiplier(bespoke),
        registers_removed: baseline.register_count - bespoke.register_count,
        register_file_size: baseline.register_count,
        pc_bits_removed: baseline.pc_width_bits - bespoke.pc_width_bits,
        bar_bits_removed: baseline.bar_width_bits - bespoke.bar_width_bits,
        mac_modes_added: bespoke.mac_precisions.len() as u32,
    };
    let (area_saving_pct, power_saving_pct) = table.removal_saving(&removal);
    let removed: BTreeSet<Opcode> = baseline
        .enabled
        .difference(&bespoke.enabled)
        .copied()
        .collect();
    Ok(SavingsReport {
        removed_opcodes: removed.into_iter().collect(),
        csr_group_removed: baseline.csr_group && !bespoke.csr_group,
        removal,
        registers: (baseline.register_count, bespoke.register_count),
        pc_width_bits: (baseline.pc_width_bits, bespoke.pc_width_bits),
        bar_width_bits: (baseline.bar_width_bits, bespoke.bar_width_bits),
        area_saving_pct,
        power_saving_pct,
        modeled_area_cm2: table.baseline_area_cm2 * (1.0 - area_saving_pct / 100.0),
        modeled_power_mw: table.baseline_power_mw * (1.0 - power_saving_pct / 100.0),
    })
}

impl fmt::Display for SavingsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22}{:>12}{:>12}", "", "baseline", "bespoke")?;
        writeln!(
            f,
            "{:<22}{:>12}{:>12}",
            "registers", self.registers.0, self.registers.1
        )?;
        writeln!(
            f,
            "{:<22}{:>12}{:>12}",
            "pc width (bits)", self.pc_width_bits.0, self.pc_width_bits.1
        )?;
        writeln!(
            f,
            "{:<22}{:>12}{:>12}",
            "bar width (bits)", self.bar_width_bits.0, self.bar_width_bits.1
        )?;
        writeln!(
            f,
            "multiplier removed: {}",
            if self.removal.mul_removed {
                "yes"
            } else {
                "no"
            }
        )?;
        writeln!(
            f,
            "csr group removed: {}",
            if self.csr_group_removed { "yes" } else { "no" }
        )?;
        let ops: Vec<&str> = self.removed_opcodes.iter().map(|o| o.mnemonic()).collect();
        writeln!(f, "removed opcodes ({}): {}", ops.len(), ops.join(" "))?;
        writeln!(
            f,
            "modeled area saving: {:.2}% ({:.2} cm2)",
            self.area_saving_pct, self.modeled_area_cm2
        )?;
        write!(
            f,
            "modeled power saving: {:.2}% ({:.2} mW)",
            self.power_saving_pct, self.modeled_power_mw
        )
    }
}
