//! Amortization curves and break-even volumes against a reference system.

use std::fmt::Write as _;

use serde::Serialize;

use kdlca::accounting::total_at_volume;
use kdlca::amortization::{break_even, format_token_count, BreakEvenRelation};
use kdlca::units::{SystemProfile, SystemRole};

use crate::analysis::{build_pipeline, build_profiles};
use crate::commands::{pretty_json, Report};
use crate::config::ProjectConfig;
use crate::records::SystemRecord;
use crate::svg::{
    nice_ticks, tick_label, Scale, Svg, CHART_HEIGHT, CHART_WIDTH, MARGIN_BOTTOM, MARGIN_LEFT,
    MARGIN_RIGHT, MARGIN_TOP, PALETTE,
};
use crate::CliError;

/// Which baseline the curves are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Against {
    Teacher,
    Nokd,
}

#[derive(Serialize)]
struct BreakevenRow {
    system: String,
    production_kgco2e: f64,
    infer_cost_kgco2e_per_token: f64,
    relation: BreakEvenRelation,
    breakeven_tokens: Option<f64>,
    breakeven_label: String,
}

#[derive(Serialize)]
struct BreakevenJson {
    schema_version: u32,
    against: String,
    reference: String,
    volume_tokens: u64,
    systems: Vec<BreakevenRow>,
}

/// Solves every system's break-even against the reference and draws the
/// amortization lines with crossing markers.
pub fn cmd_breakeven(
    records: &[SystemRecord],
    config: &ProjectConfig,
    volume_tokens: u64,
    against: Against,
) -> Result<Report, CliError> {
    let pipeline = build_pipeline(records, config)?;
    let profiles = build_profiles(&pipeline, config, None)?;

    let reference = match against {
        Against::Teacher => profiles
            .iter()
            .find(|p| p.role == SystemRole::Teacher)
            .ok_or_else(|| CliError::Data("no teacher system declared".to_string()))?,
        Against::Nokd => profiles
            .iter()
            .find(|p| p.role == SystemRole::NoKd)
            .ok_or_else(|| CliError::Data("no No-KD system declared".to_string()))?,
    }
    .clone();

    let mut rows = Vec::new();
    for profile in profiles.iter().filter(|p| p.name != reference.name) {
        let result = break_even(profile, &reference);
        let breakeven_tokens = match result.relation {
            BreakEvenRelation::CrossesAt => result.breakeven_tokens,
            _ => None,
        };
        rows.push(BreakevenRow {
            system: profile.name.clone(),
            production_kgco2e: profile.production_footprint_kgco2e,
            infer_cost_kgco2e_per_token: profile.infer_cost_kgco2e_per_token,
            relation: result.relation,
            breakeven_label: breakeven_tokens
                .map(format_token_count)
                .unwrap_or_else(|| "\u{2014}".to_string()),
            breakeven_tokens,
        });
    }

    let against_label = match against {
        Against::Teacher => "teacher",
        Against::Nokd => "nokd",
    };
    let mut table = String::new();
    let _ = writeln!(
        table,
        "Break-even vs {} ('{}')",
        against_label, reference.name
    );
    let _ = writeln!(
        table,
        "{:<18} {:>14} {:>16} {:>12}",
        "system", "production", "kgCO2e/token", "break-even"
    );
    for row in &rows {
        let _ = writeln!(
            table,
            "{:<18} {:>14.4} {:>16.3e} {:>12}",
            row.system, row.production_kgco2e, row.infer_cost_kgco2e_per_token, row.breakeven_label
        );
    }

    let json = pretty_json(&BreakevenJson {
        schema_version: 1,
        against: against_label.to_string(),
        reference: reference.name.clone(),
        volume_tokens,
        systems: rows,
    })?;

    let svg = render_amortization(&profiles, &reference, volume_tokens);

    Ok(Report {
        table,
        stem: "breakeven".to_string(),
        json,
        svgs: vec![("breakeven.svg".to_string(), svg)],
        extra_files: Vec::new(),
    })
}

fn render_amortization(
    profiles: &[SystemProfile],
    reference: &SystemProfile,
    volume_tokens: u64,
) -> String {
    let mut svg = Svg::new();

    let crossings: Vec<f64> = profiles
        .iter()
        .filter(|p| p.name != reference.name)
        .filter_map(|p| {
            let r = break_even(p, reference);
            match r.relation {
                BreakEvenRelation::CrossesAt => r.breakeven_tokens,
                _ => None,
            }
        })
        .collect();
    let max_crossing = crossings.iter().copied().fold(0.0f64, f64::max);
    let x_max = (volume_tokens as f64).max(max_crossing * 1.3).max(1.0);

    let y_max = profiles
        .iter()
        .map(|p| total_at_volume(p, x_max as u64))
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let x = Scale {
        domain: (0.0, x_max),
        range: (MARGIN_LEFT, CHART_WIDTH - MARGIN_RIGHT),
    };
    let y = Scale {
        domain: (0.0, y_max * 1.05),
        range: (CHART_HEIGHT - MARGIN_BOTTOM, MARGIN_TOP),
    };

    svg.text(
        MARGIN_LEFT,
        MARGIN_TOP - 22.0,
        13.0,
        "start",
        "Total life-cycle emissions vs served tokens (kgCO2e)",
    );
    for tick in nice_ticks(0.0, y_max * 1.05, 5) {
        let ty = y.map(tick);
        svg.line(
            MARGIN_LEFT,
            ty,
            CHART_WIDTH - MARGIN_RIGHT,
            ty,
            "#dddddd",
            1.0,
        );
        svg.text(MARGIN_LEFT - 6.0, ty + 4.0, 10.0, "end", &tick_label(tick));
    }
    for tick in nice_ticks(0.0, x_max, 6) {
        let tx = x.map(tick);
        svg.line(
            tx,
            CHART_HEIGHT - MARGIN_BOTTOM,
            tx,
            CHART_HEIGHT - MARGIN_BOTTOM + 4.0,
            "#333333",
            1.0,
        );
        svg.text(
            tx,
            CHART_HEIGHT - MARGIN_BOTTOM + 16.0,
            10.0,
            "middle",
            &tick_label(tick),
        );
    }
    svg.text(
        (MARGIN_LEFT + CHART_WIDTH - MARGIN_RIGHT) / 2.0,
        CHART_HEIGHT - 12.0,
        11.0,
        "middle",
        "served tokens X",
    );

    let mut color = 0usize;
    for profile in profiles {
        let is_reference = profile.name == reference.name;
        let stroke = if is_reference {
            "#000000"
        } else {
            let c = PALETTE[color % PALETTE.len()];
            color += 1;
            c
        };
        let points: Vec<(f64, f64)> = (0..=60)
            .map(|i| {
                let vx = x_max * i as f64 / 60.0;
                (x.map(vx), y.map(total_at_volume(profile, vx as u64)))
            })
            .collect();
        svg.polyline(&points, stroke, if is_reference { 2.0 } else { 1.5 });
        let label_y = y.map(total_at_volume(profile, x_max as u64));
        svg.text(
            CHART_WIDTH - MARGIN_RIGHT - 4.0,
            label_y - 4.0,
            9.0,
            "end",
            &profile.name,
        );

        if !is_reference {
            let r = break_even(profile, reference);
            if let (BreakEvenRelation::CrossesAt, Some(x_star)) = (r.relation, r.breakeven_tokens) {
                if x_star <= x_max {
                    let cy = y.map(total_at_volume(profile, x_star as u64));
                    svg.circle(x.map(x_star), cy, 4.0, stroke);
                }
            }
        }
    }
    svg.line(
        MARGIN_LEFT,
        CHART_HEIGHT - MARGIN_BOTTOM,
        CHART_WIDTH - MARGIN_RIGHT,
        CHART_HEIGHT - MARGIN_BOTTOM,
        "#333333",
        1.0,
    );
    svg.finish()
}
