use std::fmt::Write;

use super::SweepResult;

pub const CSV_HEADER: &str =
    "model,precision,variant,profile,accuracy,loss_pp,cycles,speedup_pct,instr_count,rom_area_mm2,rom_power_mW,modeled_core_saving_pct";
pub const SCATTER_HEADER: &str = "modeled_area_mm2,speedup_pct,label,pareto";

/// The four report artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub table: String,
    pub json: String,
    pub csv: String,
    pub scatter: String,
}

fn csv_text(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Renders a sweep as a text table, JSON, the results CSV and the
/// area/speedup scatter CSV.
pub fn render_table(result: &SweepResult) -> Rendered {
    let csv = csv_text(
        CSV_HEADER,
        result.reports.iter().map(|r| {
            vec![
                r.model.clone(),
                r.precision.to_string(),
                r.variant.to_string(),
                r.profile.to_string(),
                format!("{:.2}", r.accuracy),
                format!("{:.2}", r.loss_pp),
                format!("{:.1}", r.cycles),
                format!("{:.2}", r.speedup_pct),
                r.instr_count.to_string(),
                format!("{:.4}", r.rom_area_mm2),
                format!("{:.4}", r.rom_power_mw),
                format!("{:.2}", r.modeled_core_saving_pct),
            ]
        }),
    );
    let scatter = csv_text(
        SCATTER_HEADER,
        result.reports.iter().map(|r| {
            vec![
                format!("{:.4}", r.modeled_area_mm2),
                format!("{:.2}", r.speedup_pct),
                format!("{}/{}/{}/{}", r.model, r.profile, r.variant, r.precision),
                r.pareto.to_string(),
            ]
        }),
    );

    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<34} {:>4} {:>7} {:>5} {:>8} {:>7} {:>11} {:>8} {:>6} {:>9} {:>8} {:>3}",
        "model",
        "n",
        "variant",
        "prof",
        "acc%",
        "loss_pp",
        "cycles",
        "speedup%",
        "instr",
        "rom_mm2",
        "core_sv%",
        "P"
    );
    for r in &result.reports {
        let _ = writeln!(
            t,
            "{:<34} {:>4} {:>7} {:>5} {:>8.2} {:>7.2} {:>11.1} {:>8.2} {:>6} {:>9.4} {:>8.2} {:>3}",
            r.model,
            r.precision,
            r.variant.name(),
            r.profile.name(),
            r.accuracy,
            r.loss_pp,
            r.cycles,
            r.speedup_pct,
            r.instr_count,
            r.rom_area_mm2,
            r.modeled_core_saving_pct,
            if r.pareto { "*" } else { "" }
        );
    }
    if !result.means.is_empty() {
        let _ = writeln!(t, "\nmeans over models");
        let _ = writeln!(
            t,
            "{:>4} {:>7} {:>5} {:>6} {:>7} {:>11} {:>8} {:>8}",
            "n", "variant", "prof", "models", "loss_pp", "cycles", "speedup%", "instr"
        );
        for m in &result.means {
            let _ = writeln!(
                t,
                "{:>4} {:>7} {:>5} {:>6} {:>7.2} {:>11.1} {:>8.2} {:>8.1}",
                m.precision,
                m.variant.name(),
                m.profile.name(),
                m.models,
                m.loss_pp,
                m.cycles,
                m.speedup_pct,
                m.instr_count
            );
        }
    }
    if !result.failures.is_empty() {
        let _ = writeln!(t, "\nfailed cells");
        for f in &result.failures {
            let _ = writeln!(
                t,
                "{} n={} {} {}: {}",
                f.model, f.precision, f.variant, f.profile, f.error
            );
        }
    }
    let _ = writeln!(
        t,
        "\narea and power figures are modeled estimates, not synthesis results"
    );

    let json = serde_json::to_string_pretty(result).expect("reports always serialize");
    Rendered {
        table: t,
        json,
        csv,
        scatter,
    }
}
