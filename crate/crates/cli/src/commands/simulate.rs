//! Desk-scale pipeline simulation: drives the toy scorer fixtures through
//! the distillation kernels, counts token steps, and emits measurement
//! records consumable by every other command.

use std::fmt::Write as _;

use serde::Serialize;

use kdlca::kd::{
    build_seq_kd_corpus, cross_entropy, selection_mask, token_f1, trace_to_records, word_kd_loss,
    ComputeTrace, DecodeParams, Scorer, SelectionStrategy, SeqKdPolicy, StepEnergy, TokenId,
};
use kdlca::units::{Phase, TokenDistribution};

use crate::commands::{pretty_json, Report};
use crate::config::{KdPlan, PlanMethod, PlanSelection, PlanSeqPolicy};
use crate::fixtures::{load_fixture, EOS, VOCAB_SIZE};
use crate::records::{write_records_string, SystemRecord};
use crate::CliError;

#[derive(Serialize)]
struct TraceJson {
    phase: Phase,
    teacher_token_steps: u64,
    student_token_steps: u64,
}

#[derive(Serialize)]
struct SimulateJson {
    schema_version: u32,
    system: String,
    fixture: String,
    method: PlanMethod,
    epochs: u32,
    beam: usize,
    alpha: f64,
    traces: Vec<TraceJson>,
    loss_total: Option<f64>,
    synthetic_pairs: usize,
    records_emitted: usize,
}

fn check_tokens(side: &str, seqs: &[Vec<TokenId>]) -> Result<(), CliError> {
    for (i, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            return Err(CliError::Data(format!("{side} sentence {i} is empty")));
        }
        for &t in seq {
            if t >= VOCAB_SIZE || t == EOS {
                return Err(CliError::Data(format!(
                    "{side} sentence {i} holds token {t}, outside the fixture vocabulary \
                     (1..{})",
                    VOCAB_SIZE - 1
                )));
            }
        }
    }
    Ok(())
}

/// Teacher-forced distributions at every target position.
fn forced_dists(
    scorer: &dyn Scorer,
    source: &[TokenId],
    target: &[TokenId],
) -> Vec<TokenDistribution> {
    (0..target.len())
        .map(|t| scorer.next_token(source, &target[..t]))
        .collect()
}

fn one_hot_refs(target: &[TokenId]) -> Vec<TokenDistribution> {
    target
        .iter()
        .map(|&t| TokenDistribution::one_hot(t, VOCAB_SIZE).expect("token checked against vocab"))
        .collect()
}

fn plan_strategy(selection: Option<PlanSelection>) -> SelectionStrategy {
    match selection {
        None | Some(PlanSelection::All) => SelectionStrategy::All,
        Some(PlanSelection::HardestFraction { r }) => SelectionStrategy::HardestFraction(r),
        Some(PlanSelection::TeacherTop1 { r }) => SelectionStrategy::TeacherTop1Margin(r),
    }
}

pub fn cmd_simulate(plan: &KdPlan) -> Result<(Report, Vec<SystemRecord>), CliError> {
    let fixture = load_fixture(&plan.fixture)?;
    let sources = plan
        .sources
        .clone()
        .unwrap_or_else(|| fixture.sources.clone());
    let refs = plan.refs.clone().unwrap_or_else(|| fixture.refs.clone());
    check_tokens("source", &sources)?;
    check_tokens("reference", &refs)?;
    if refs.len() != sources.len() {
        return Err(CliError::Data(format!(
            "plan has {} sources but {} references",
            sources.len(),
            refs.len()
        )));
    }

    let teacher = fixture.teacher.as_ref();
    let student = fixture.student.as_ref();
    let decode = DecodeParams {
        beam_width: plan.beam,
        max_len: plan.max_len,
        length_penalty: plan.length_penalty,
    };

    let mut traces = Vec::new();
    let mut loss_total = 0.0;
    let mut synthetic_pairs = 0usize;
    let mut extra_files = Vec::new();

    match plan.method {
        PlanMethod::None => {
            // Direct training on the references; no teacher involvement.
            let mut trace = ComputeTrace::new(Phase::TeacherTrain);
            for _ in 0..plan.epochs {
                for (x, y) in sources.iter().zip(&refs) {
                    trace.add_student_steps((x.len() + y.len()) as u64);
                    let dists = forced_dists(student, x, y);
                    for (r, d) in one_hot_refs(y).iter().zip(&dists) {
                        loss_total += cross_entropy(r, d);
                    }
                }
            }
            traces.push(trace);
        }
        PlanMethod::WordKd => {
            // Teacher-forced passes on both sides every epoch.
            let mut trace = ComputeTrace::new(Phase::Distill);
            let strategy = plan_strategy(plan.selection);
            for _ in 0..plan.epochs {
                for (x, y) in sources.iter().zip(&refs) {
                    trace.add_teacher_steps((x.len() + y.len()) as u64);
                    trace.add_student_steps((x.len() + y.len()) as u64);
                    let refs_oh = one_hot_refs(y);
                    let teacher_dists = forced_dists(teacher, x, y);
                    let student_dists = forced_dists(student, x, y);
                    let mask = selection_mask(strategy, &refs_oh, &teacher_dists, &student_dists);
                    loss_total += word_kd_loss(
                        &refs_oh,
                        &teacher_dists,
                        &student_dists,
                        plan.alpha,
                        Some(&mask),
                    )
                    .map_err(CliError::data)?;
                }
            }
            traces.push(trace);
        }
        PlanMethod::SeqKd => {
            // One-time teacher decoding, then student training on the
            // synthetic corpus.
            let mut trace = ComputeTrace::new(Phase::Distill);
            let policy = match plan.seq_policy.unwrap_or(PlanSeqPolicy::Plain) {
                PlanSeqPolicy::Plain => SeqKdPolicy::Plain,
                PlanSeqPolicy::Inter => SeqKdPolicy::Inter {
                    refs: &refs,
                    sim: &token_f1,
                },
                PlanSeqPolicy::Rep => SeqKdPolicy::Rep {
                    refs: &refs,
                    quality: &token_f1,
                    threshold: plan.rep_threshold,
                },
            };
            let corpus = build_seq_kd_corpus(teacher, &sources, decode, &policy, &mut trace)
                .map_err(CliError::data)?;
            synthetic_pairs = corpus.pairs.len();
            for _ in 0..plan.epochs {
                for (x, y_hat) in &corpus.pairs {
                    trace.add_student_steps((x.len() + y_hat.len()) as u64);
                    let dists = forced_dists(student, x, y_hat);
                    for (r, d) in one_hot_refs(y_hat).iter().zip(&dists) {
                        loss_total += cross_entropy(r, d);
                    }
                }
            }
            extra_files.push(("corpus.tsv".to_string(), corpus.to_tsv()));
            traces.push(trace);
        }
    }

    if let Some(infer_tokens) = plan.infer_tokens {
        if infer_tokens > 0 {
            let mut trace = ComputeTrace::new(Phase::Infer);
            trace.add_student_steps(infer_tokens);
            traces.push(trace);
        }
    }

    let energy = StepEnergy {
        teacher_kwh_per_step: plan.teacher_kwh_per_step,
        student_kwh_per_step: plan.student_kwh_per_step,
    };
    let mut records = Vec::new();
    for trace in &traces {
        for record in trace_to_records(
            trace,
            &energy,
            &plan.device_id,
            plan.throughput_steps_per_hour,
        ) {
            records.push(SystemRecord {
                system: plan.system.clone(),
                record,
            });
        }
    }
    extra_files.insert(
        0,
        ("records.csv".to_string(), write_records_string(&records)?),
    );

    let mut table = String::new();
    let _ = writeln!(
        table,
        "Simulated '{}' ({:?} on fixture '{}'), {} epoch(s), beam {}",
        plan.system, plan.method, plan.fixture, plan.epochs, plan.beam
    );
    for t in &traces {
        let _ = writeln!(
            table,
            "  phase {:<8} teacher steps {:>10}  student steps {:>10}",
            t.phase.to_string(),
            t.teacher_token_steps,
            t.student_token_steps
        );
    }
    let _ = writeln!(table, "  training loss total: {loss_total:.6}");
    let _ = writeln!(table, "  records emitted: {}", records.len());

    let json = pretty_json(&SimulateJson {
        schema_version: 1,
        system: plan.system.clone(),
        fixture: plan.fixture.clone(),
        method: plan.method,
        epochs: plan.epochs,
        beam: plan.beam,
        alpha: plan.alpha,
        traces: traces
            .iter()
            .map(|t| TraceJson {
                phase: t.phase,
                teacher_token_steps: t.teacher_token_steps,
                student_token_steps: t.student_token_steps,
            })
            .collect(),
        loss_total: Some(loss_total),
        synthetic_pairs,
        records_emitted: records.len(),
    })?;

    let report = Report {
        table,
        stem: "simulate".to_string(),
        json,
        svgs: Vec::new(),
        extra_files,
    };
    Ok((report, records))
}
