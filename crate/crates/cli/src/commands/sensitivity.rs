//! One-way sensitivity sweep over the emission parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use kdlca::accounting::production_footprint;
use kdlca::sensitivity::{one_way_sweep, ordering_report, OrderingReport, SensitivityRow};

use crate::analysis::build_pipeline;
use crate::commands::{pretty_json, Report};
use crate::config::ProjectConfig;
use crate::records::SystemRecord;
use crate::svg::{
    Scale, Svg, CHART_HEIGHT, CHART_WIDTH, MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, PALETTE,
};
use crate::CliError;

#[derive(Serialize)]
struct SensitivityJson {
    schema_version: u32,
    /// "file" when ranges came from a ranges file, otherwise
    /// "builtin-illustrative" placeholders.
    ranges_source: String,
    rows: Vec<SensitivityRow>,
    ordering: OrderingReport,
}

pub fn cmd_sensitivity(
    records: &[SystemRecord],
    config: &ProjectConfig,
    ranges: &[kdlca::sensitivity::ParamRange],
    ranges_from_file: bool,
) -> Result<Report, CliError> {
    let pipeline = build_pipeline(records, config)?;
    let devices = config.device_map();
    let teacher = pipeline.teacher_ledger().cloned();

    let rows = one_way_sweep(
        &pipeline.ledgers,
        teacher.as_ref(),
        &devices,
        &config.params,
        ranges,
    )
    .map_err(CliError::data)?;

    let mut baselines = BTreeMap::new();
    for ledger in &pipeline.ledgers {
        let teacher_for = match &teacher {
            Some(t) if t.system_name != ledger.system_name => Some(t),
            _ => None,
        };
        baselines.insert(
            ledger.system_name.clone(),
            production_footprint(ledger, teacher_for).map_err(CliError::data)?,
        );
    }
    let ordering = ordering_report(&rows, &baselines);

    let ranges_source = if ranges_from_file {
        "file"
    } else {
        "builtin-illustrative"
    }
    .to_string();

    let mut table = String::new();
    let _ = writeln!(
        table,
        "One-way sensitivity of production footprints (ranges: {ranges_source})"
    );
    let _ = writeln!(
        table,
        "{:<18} {:<36} {:>14} {:>14}",
        "system", "parameter [low..high]", "delta@low", "delta@high"
    );
    for row in &rows {
        let _ = writeln!(
            table,
            "{:<18} {:<36} {:>14.4} {:>14.4}",
            row.system_name,
            format!(
                "{} [{}..{}]",
                row.parameter.parameter.as_str(),
                row.parameter.low,
                row.parameter.high
            ),
            row.delta_low_kgco2e,
            row.delta_high_kgco2e
        );
    }
    let _ = writeln!(table);
    let _ = writeln!(
        table,
        "ordering stability: {}",
        if ordering.stable {
            "PASS (rank order preserved at every extreme)"
        } else {
            "UNSTABLE"
        }
    );
    if !ordering.stable {
        for entry in ordering.entries.iter().filter(|e| !e.matches_baseline) {
            let _ = writeln!(
                table,
                "  {} @ {:?}: {}",
                entry.parameter.as_str(),
                entry.extreme,
                entry.order.join(" < ")
            );
        }
    }

    let json = pretty_json(&SensitivityJson {
        schema_version: 1,
        ranges_source,
        rows: rows.clone(),
        ordering,
    })?;

    let svg = render_paired_bars(&rows);

    Ok(Report {
        table,
        stem: "sensitivity".to_string(),
        json,
        svgs: vec![("sensitivity.svg".to_string(), svg)],
        extra_files: Vec::new(),
    })
}

fn render_paired_bars(rows: &[SensitivityRow]) -> String {
    let mut svg = Svg::new();
    let max_abs = rows
        .iter()
        .flat_map(|r| [r.delta_low_kgco2e.abs(), r.delta_high_kgco2e.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let x = Scale {
        domain: (-max_abs * 1.05, max_abs * 1.05),
        range: (MARGIN_LEFT + 150.0, CHART_WIDTH - MARGIN_RIGHT),
    };
    let row_height = ((CHART_HEIGHT - MARGIN_TOP - 30.0) / rows.len().max(1) as f64).min(26.0);

    svg.text(
        MARGIN_LEFT,
        MARGIN_TOP - 22.0,
        13.0,
        "start",
        "Production-footprint deviation per parameter range (kgCO2e)",
    );
    svg.rect(
        x.map(0.0) - 0.5,
        MARGIN_TOP - 10.0,
        1.0,
        rows.len() as f64 * row_height + 14.0,
        "#333333",
    );
    svg.text(
        x.map(-max_abs),
        MARGIN_TOP - 12.0,
        9.0,
        "start",
        &format!("-{max_abs:.3}"),
    );
    svg.text(
        x.map(max_abs),
        MARGIN_TOP - 12.0,
        9.0,
        "end",
        &format!("+{max_abs:.3}"),
    );

    for (i, row) in rows.iter().enumerate() {
        let y0 = MARGIN_TOP + i as f64 * row_height;
        let label = format!("{} / {}", row.system_name, row.parameter.parameter.as_str());
        svg.text(
            x.map(-max_abs * 1.05) - 6.0,
            y0 + row_height * 0.65,
            9.0,
            "end",
            &label,
        );
        let bar = |svg: &mut Svg, delta: f64, color: &str, lane: f64| {
            let (x0, x1) = if delta >= 0.0 {
                (x.map(0.0), x.map(delta))
            } else {
                (x.map(delta), x.map(0.0))
            };
            svg.rect(x0, y0 + lane, (x1 - x0).max(0.5), row_height * 0.32, color);
        };
        bar(
            &mut svg,
            row.delta_low_kgco2e,
            PALETTE[0],
            row_height * 0.12,
        );
        bar(
            &mut svg,
            row.delta_high_kgco2e,
            PALETTE[1],
            row_height * 0.52,
        );
    }

    let legend_y = MARGIN_TOP + rows.len() as f64 * row_height + 18.0;
    svg.rect(MARGIN_LEFT + 150.0, legend_y, 10.0, 10.0, PALETTE[0]);
    svg.text(
        MARGIN_LEFT + 164.0,
        legend_y + 9.0,
        10.0,
        "start",
        "parameter at low end",
    );
    svg.rect(MARGIN_LEFT + 330.0, legend_y, 10.0, 10.0, PALETTE[1]);
    svg.text(
        MARGIN_LEFT + 344.0,
        legend_y + 9.0,
        10.0,
        "start",
        "parameter at high end",
    );
    svg.finish()
}
