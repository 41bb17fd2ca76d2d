//! Total footprint decomposed into one-time and volume-dependent parts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use kdlca::units::SystemRole;

use crate::analysis::{build_pipeline, decompose, Decomposition};
use crate::commands::{pretty_json, Report};
use crate::config::ProjectConfig;
use crate::records::SystemRecord;
use crate::svg::{
    nice_ticks, tick_label, Scale, Svg, CHART_HEIGHT, CHART_WIDTH, MARGIN_BOTTOM, MARGIN_LEFT,
    MARGIN_RIGHT, MARGIN_TOP, PALETTE,
};
use crate::CliError;

#[derive(Serialize)]
struct FootprintJson<'a> {
    schema_version: u32,
    volume_tokens: u64,
    horizon_label: &'a str,
    systems: Vec<Decomposition>,
}

/// Per-system stacked decomposition (own training, allocated teacher share,
/// distillation, inference at the served volume).
pub fn cmd_footprint(
    records: &[SystemRecord],
    config: &ProjectConfig,
    volume_tokens: u64,
    scores: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<Report, CliError> {
    let pipeline = build_pipeline(records, config)?;
    let mut rows = decompose(&pipeline, config, volume_tokens, scores)?;

    // Teacher first, then the rest ordered by quality when known, by name
    // otherwise.
    rows.sort_by(|a, b| {
        let rank = |d: &Decomposition| match d.role {
            SystemRole::Teacher => 0u8,
            _ => 1,
        };
        rank(a)
            .cmp(&rank(b))
            .then_with(|| match (a.mean_quality, b.mean_quality) {
                (Some(qa), Some(qb)) => qb.partial_cmp(&qa).unwrap(),
                _ => std::cmp::Ordering::Equal,
            })
            .then_with(|| a.system.cmp(&b.system))
    });

    let mut table = String::new();
    let _ = writeln!(
        table,
        "Footprint decomposition at X = {volume_tokens} tokens ({}), kgCO2e",
        config.functional_unit.horizon_label
    );
    let _ = writeln!(
        table,
        "{:<18} {:<10} {:>12} {:>14} {:>12} {:>12} {:>12} {:>9}",
        "system", "role", "train", "teacher-share", "distill", "infer@X", "total", "quality"
    );
    for d in &rows {
        let quality = match d.mean_quality {
            Some(q) => format!("{q:.4}"),
            None => "-".to_string(),
        };
        let _ = writeln!(
            table,
            "{:<18} {:<10} {:>12.4} {:>14.4} {:>12.4} {:>12.4} {:>12.4} {:>9}",
            d.system,
            d.role.to_string(),
            d.train_kgco2e,
            d.teacher_share_kgco2e,
            d.distill_kgco2e,
            d.infer_at_volume_kgco2e,
            d.total_at_volume_kgco2e,
            quality
        );
    }

    let json = pretty_json(&FootprintJson {
        schema_version: 1,
        volume_tokens,
        horizon_label: &config.functional_unit.horizon_label,
        systems: rows.clone(),
    })?;

    let svg = render_stacked_bars(&rows, volume_tokens);

    Ok(Report {
        table,
        stem: "footprint".to_string(),
        json,
        svgs: vec![("footprint.svg".to_string(), svg)],
        extra_files: Vec::new(),
    })
}

fn render_stacked_bars(rows: &[Decomposition], volume_tokens: u64) -> String {
    let mut svg = Svg::new();
    let max_total = rows
        .iter()
        .map(|d| d.total_at_volume_kgco2e)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let y = Scale {
        domain: (0.0, max_total * 1.05),
        range: (CHART_HEIGHT - MARGIN_BOTTOM, MARGIN_TOP),
    };
    let plot_width = CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let slot = plot_width / rows.len().max(1) as f64;
    let bar_width = (slot * 0.6).min(80.0);

    svg.text(
        MARGIN_LEFT,
        MARGIN_TOP - 22.0,
        13.0,
        "start",
        &format!("Total footprint at X = {volume_tokens} tokens (kgCO2e)"),
    );
    let segments = ["train", "teacher share", "distill", "infer@X"];
    for (i, label) in segments.iter().enumerate() {
        let lx = MARGIN_LEFT + 150.0 * i as f64;
        svg.rect(lx, MARGIN_TOP - 14.0, 10.0, 10.0, PALETTE[i]);
        svg.text(lx + 14.0, MARGIN_TOP - 5.0, 11.0, "start", label);
    }

    for tick in nice_ticks(0.0, max_total * 1.05, 5) {
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
    svg.line(
        MARGIN_LEFT,
        y.map(0.0),
        CHART_WIDTH - MARGIN_RIGHT,
        y.map(0.0),
        "#333333",
        1.0,
    );

    for (i, d) in rows.iter().enumerate() {
        let x0 = MARGIN_LEFT + slot * i as f64 + (slot - bar_width) / 2.0;
        let parts = [
            d.train_kgco2e,
            d.teacher_share_kgco2e,
            d.distill_kgco2e,
            d.infer_at_volume_kgco2e,
        ];
        let mut cumulative = 0.0;
        for (j, part) in parts.iter().enumerate() {
            if *part <= 0.0 {
                continue;
            }
            let y_low = y.map(cumulative);
            let y_high = y.map(cumulative + part);
            svg.rect(x0, y_high, bar_width, y_low - y_high, PALETTE[j]);
            cumulative += part;
        }
        svg.text(
            x0 + bar_width / 2.0,
            y.map(cumulative) - 4.0,
            10.0,
            "middle",
            &format!("{:.3}", d.total_at_volume_kgco2e),
        );
        svg.text(
            x0 + bar_width / 2.0,
            CHART_HEIGHT - MARGIN_BOTTOM + 16.0,
            10.0,
            "middle",
            &d.system,
        );
        if let Some(q) = d.mean_quality {
            svg.text(
                x0 + bar_width / 2.0,
                CHART_HEIGHT - MARGIN_BOTTOM + 30.0,
                9.0,
                "middle",
                &format!("q={q:.3}"),
            );
        }
    }
    svg.finish()
}
