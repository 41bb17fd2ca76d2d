//! Footprint/quality scatter with the Pareto frontier and bootstrap CIs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use kdlca::frontier::{
    deduplicate_checkpoints, paired_bootstrap_ci, pareto_frontier, FrontierPoint,
};
use kdlca::units::SystemRole;

use crate::analysis::{build_pipeline, build_profiles};
use crate::commands::{pretty_json, Report};
use crate::config::ProjectConfig;
use crate::records::SystemRecord;
use crate::seeding::{derive_seed, STREAM_BOOTSTRAP};
use crate::svg::{
    nice_ticks, tick_label, Scale, Svg, CHART_HEIGHT, CHART_WIDTH, MARGIN_BOTTOM, MARGIN_LEFT,
    MARGIN_RIGHT, MARGIN_TOP, PALETTE,
};
use crate::CliError;

#[derive(Serialize)]
struct ParetoJson {
    schema_version: u32,
    bootstrap_n: usize,
    bootstrap_level: f64,
    bootstrap_seed: u64,
    teacher_quality: f64,
    teacher_quality_ci: (f64, f64),
    points: Vec<FrontierPoint>,
}

/// Builds the frontier over the non-teacher systems; the teacher appears as
/// a reference quality line with its own interval.
pub fn cmd_pareto(
    records: &[SystemRecord],
    config: &ProjectConfig,
    scores: &BTreeMap<String, Vec<f64>>,
    root_seed: u64,
) -> Result<Report, CliError> {
    let pipeline = build_pipeline(records, config)?;
    let profiles = build_profiles(&pipeline, config, Some(scores))?;
    for p in &profiles {
        if p.quality_scores.is_empty() {
            return Err(CliError::Data(format!(
                "system '{}' has no quality scores",
                p.name
            )));
        }
    }

    let n = config.bootstrap.n;
    let level = config.bootstrap.level;
    let seed = derive_seed(root_seed, STREAM_BOOTSTRAP);

    // One shared set of resample index vectors across every system.
    let matrix: Vec<Vec<f64>> = profiles.iter().map(|p| p.quality_scores.clone()).collect();
    let cis = paired_bootstrap_ci(&matrix, n, level, seed).map_err(CliError::data)?;

    let teacher_index = profiles
        .iter()
        .position(|p| p.role == SystemRole::Teacher)
        .ok_or_else(|| CliError::Data("no teacher system declared".to_string()))?;
    let teacher_quality = profiles[teacher_index]
        .mean_quality()
        .map_err(CliError::data)?;
    let teacher_ci = cis[teacher_index];

    let mut points = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        if p.role == SystemRole::Teacher {
            continue;
        }
        points.push(
            FrontierPoint::new(
                &p.name,
                p.production_footprint_kgco2e,
                p.mean_quality().map_err(CliError::data)?,
                cis[i],
            )
            .map_err(CliError::data)?,
        );
    }
    let points = pareto_frontier(deduplicate_checkpoints(&points));

    let mut table = String::new();
    let _ = writeln!(
        table,
        "Footprint/quality frontier (teacher quality {teacher_quality:.4})"
    );
    let _ = writeln!(
        table,
        "{:<18} {:>14} {:>9} {:>19} {:>9}",
        "system", "production", "quality", "95% CI", "frontier"
    );
    for p in &points {
        let _ = writeln!(
            table,
            "{:<18} {:>14.4} {:>9.4} {:>9.4}..{:>8.4} {:>9}",
            p.system_name,
            p.production_footprint_kgco2e,
            p.mean_quality,
            p.quality_ci.0,
            p.quality_ci.1,
            if p.on_frontier { "*" } else { "" }
        );
    }

    let json = pretty_json(&ParetoJson {
        schema_version: 1,
        bootstrap_n: n,
        bootstrap_level: level,
        bootstrap_seed: seed,
        teacher_quality,
        teacher_quality_ci: teacher_ci,
        points: points.clone(),
    })?;

    let svg = render_scatter(&points, teacher_quality, teacher_ci);

    Ok(Report {
        table,
        stem: "pareto".to_string(),
        json,
        svgs: vec![("pareto.svg".to_string(), svg)],
        extra_files: Vec::new(),
    })
}

fn render_scatter(
    points: &[FrontierPoint],
    teacher_quality: f64,
    teacher_ci: (f64, f64),
) -> String {
    let mut svg = Svg::new();
    let x_max = points
        .iter()
        .map(|p| p.production_footprint_kgco2e)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut q_low = teacher_ci.0;
    let mut q_high = teacher_ci.1;
    for p in points {
        q_low = q_low.min(p.quality_ci.0);
        q_high = q_high.max(p.quality_ci.1);
    }
    let pad = ((q_high - q_low) * 0.15).max(1e-6);
    let x = Scale {
        domain: (0.0, x_max * 1.08),
        range: (MARGIN_LEFT, CHART_WIDTH - MARGIN_RIGHT),
    };
    let y = Scale {
        domain: (q_low - pad, q_high + pad),
        range: (CHART_HEIGHT - MARGIN_BOTTOM, MARGIN_TOP),
    };

    svg.text(
        MARGIN_LEFT,
        MARGIN_TOP - 22.0,
        13.0,
        "start",
        "Quality vs production footprint (kgCO2e); * marks the Pareto frontier",
    );
    for tick in nice_ticks(q_low - pad, q_high + pad, 5) {
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
    for tick in nice_ticks(0.0, x_max * 1.08, 6) {
        let tx = x.map(tick);
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
        "production footprint (kgCO2e)",
    );

    // Teacher reference band: dashed mean line plus faint CI bounds.
    let ty = y.map(teacher_quality);
    svg.dashed_line(MARGIN_LEFT, ty, CHART_WIDTH - MARGIN_RIGHT, ty, "#555555");
    svg.text(
        CHART_WIDTH - MARGIN_RIGHT - 4.0,
        ty - 4.0,
        9.0,
        "end",
        "teacher quality",
    );
    for bound in [teacher_ci.0, teacher_ci.1] {
        let by = y.map(bound);
        svg.dashed_line(MARGIN_LEFT, by, CHART_WIDTH - MARGIN_RIGHT, by, "#bbbbbb");
    }

    // Frontier polyline through frontier points (already footprint-sorted).
    let frontier: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.on_frontier)
        .map(|p| (x.map(p.production_footprint_kgco2e), y.map(p.mean_quality)))
        .collect();
    if frontier.len() >= 2 {
        svg.polyline(&frontier, "#59a14f", 1.5);
    }

    for (i, p) in points.iter().enumerate() {
        let px = x.map(p.production_footprint_kgco2e);
        let color = PALETTE[i % PALETTE.len()];
        // CI whisker.
        svg.line(
            px,
            y.map(p.quality_ci.0),
            px,
            y.map(p.quality_ci.1),
            color,
            1.2,
        );
        svg.circle(
            px,
            y.map(p.mean_quality),
            if p.on_frontier { 4.5 } else { 3.0 },
            color,
        );
        svg.text(
            px + 6.0,
            y.map(p.mean_quality) - 6.0,
            9.0,
            "start",
            &p.system_name,
        );
    }
    svg.finish()
}
