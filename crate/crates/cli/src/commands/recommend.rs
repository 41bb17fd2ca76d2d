//! Deployment recommendation from the decision procedure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use kdlca::frontier::{recommend, Recommendation, Verdict};

use crate::analysis::{build_pipeline, build_profiles};
use crate::commands::{pretty_json, Report};
use crate::config::ProjectConfig;
use crate::records::SystemRecord;
use crate::seeding::{derive_seed, STREAM_BOOTSTRAP};
use crate::CliError;

#[derive(Serialize)]
struct RecommendJson {
    schema_version: u32,
    target_quality: f64,
    expected_volume_tokens: u64,
    bootstrap_n: usize,
    bootstrap_seed: u64,
    verdict: Verdict,
    rationale: Vec<String>,
    breakeven_tokens_vs_teacher: Option<f64>,
    quality_gap_significant: bool,
}

pub fn cmd_recommend(
    records: &[SystemRecord],
    config: &ProjectConfig,
    scores: &BTreeMap<String, Vec<f64>>,
    volume_tokens: u64,
    root_seed: u64,
) -> Result<Report, CliError> {
    let target_quality = config.target_quality.ok_or_else(|| {
        CliError::Usage(
            "recommend needs target_quality in the config (the quality level the deployed \
             system must reach)"
                .to_string(),
        )
    })?;

    let pipeline = build_pipeline(records, config)?;
    let profiles = build_profiles(&pipeline, config, Some(scores))?;
    let seed = derive_seed(root_seed, STREAM_BOOTSTRAP);
    let rec: Recommendation = recommend(
        &profiles,
        target_quality,
        volume_tokens,
        config.bootstrap.n,
        seed,
    )
    .map_err(CliError::data)?;

    let verdict_line = match &rec.verdict {
        Verdict::UseTeacher => "use the teacher".to_string(),
        Verdict::UseNoKd => "use the No-KD baseline".to_string(),
        Verdict::UseKdStudent(name) => format!("distill: deploy KD student '{name}'"),
    };

    let mut table = String::new();
    let _ = writeln!(
        table,
        "Recommendation at target quality {target_quality:.4}, expected volume \
         {volume_tokens} tokens:"
    );
    let _ = writeln!(table, "  verdict: {verdict_line}");
    if let Some(x) = rec.breakeven_tokens_vs_teacher {
        let _ = writeln!(
            table,
            "  break-even vs teacher: {} tokens",
            kdlca::amortization::format_token_count(x)
        );
    }
    let _ = writeln!(
        table,
        "  quality gain over baseline statistically significant: {}",
        rec.quality_gap_significant
    );
    let _ = writeln!(table, "  rationale:");
    for (i, line) in rec.rationale.iter().enumerate() {
        let _ = writeln!(table, "    {}. {line}", i + 1);
    }

    let json = pretty_json(&RecommendJson {
        schema_version: 1,
        target_quality,
        expected_volume_tokens: volume_tokens,
        bootstrap_n: config.bootstrap.n,
        bootstrap_seed: seed,
        verdict: rec.verdict.clone(),
        rationale: rec.rationale.clone(),
        breakeven_tokens_vs_teacher: rec.breakeven_tokens_vs_teacher,
        quality_gap_significant: rec.quality_gap_significant,
    })?;

    Ok(Report {
        table,
        stem: "recommend".to_string(),
        json,
        svgs: Vec::new(),
        extra_files: Vec::new(),
    })
}
