//! Earliness and false-alarm metrics.
//!
//! A loop case counts as an early detection when the alert sentence comes
//! strictly before the onset sentence. Any alert on a normal case is a
//! false positive. ASE and ATE average the sentence and token lead over
//! early detections only.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::cusum::{calibrate_scores, replay, sentence_scores, AlertEvent, CusumConfig, ScoredSentence};
use crate::error::{Error, Result};
use crate::textual::{textual_onset, DetectorConfig};
use crate::trace::{LoopType, Trace};

pub const COMPLETION_BUDGETS: [usize; 4] = [512, 1024, 2048, 4096];
pub const CALIBRATION_CASES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub loop_type: LoopType,
    pub onset_sentence: Option<usize>,
    pub onset_token: Option<usize>,
}

impl GroundTruth {
    pub fn normal() -> Self {
        Self {
            loop_type: LoopType::None,
            onset_sentence: None,
            onset_token: None,
        }
    }

    pub fn looped(loop_type: LoopType, onset_sentence: usize, onset_token: usize) -> Self {
        Self {
            loop_type,
            onset_sentence: Some(onset_sentence),
            onset_token: Some(onset_token),
        }
    }

    pub fn is_loop(&self) -> bool {
        self.loop_type != LoopType::None
    }
}

/// The meta.json label when it carries a loop with both onsets, otherwise
/// the textual detector's verdict.
pub fn ground_truth(trace: &Trace, detector: &DetectorConfig) -> GroundTruth {
    let label = &trace.meta.label;
    if let (true, Some(s), Some(t)) = (label.is_loop(), label.onset_sentence_index, label.onset_token_index) {
        return GroundTruth::looped(label.loop_type, s, t);
    }
    match textual_onset(trace, detector) {
        Some(a) => GroundTruth {
            loop_type: a.loop_type,
            onset_sentence: a.onset_sentence_index,
            onset_token: Some(a.onset_token_index),
        },
        None => GroundTruth::normal(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub trace_id: String,
    pub truth: GroundTruth,
    pub alert: Option<AlertEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_loop: usize,
    pub n_normal: usize,
    pub n_early: usize,
    pub n_fp: usize,
    pub edr: f64,
    pub fpr: f64,
    /// Mean sentence lead of early detections.
    pub ase_sentences: Option<f64>,
    /// Mean token lead of early detections.
    pub ate_tokens: Option<f64>,
}

/// JSON form with the alternative lead-time names alongside.
#[derive(Serialize)]
struct ReportWithAliases<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    aslt: Option<f64>,
    atlt: Option<f64>,
}

impl EvalReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ReportWithAliases {
            report: self,
            aslt: self.ase_sentences,
            atlt: self.ate_tokens,
        })
        .expect("report serializes")
    }
}

pub fn evaluate_prediction(cases: &[EvalCase]) -> Result<EvalReport> {
    let (mut n_loop, mut n_normal, mut n_early, mut n_fp) = (0, 0, 0, 0);
    let (mut sent_lead, mut tok_lead) = (0usize, 0usize);
    for case in cases {
        if !case.truth.is_loop() {
            n_normal += 1;
            n_fp += usize::from(case.alert.is_some());
            continue;
        }
        n_loop += 1;
        let (Some(onset_s), Some(onset_t)) = (case.truth.onset_sentence, case.truth.onset_token) else {
            return Err(Error::MissingOnsetLabel(case.trace_id.clone()));
        };
        if let Some(alert) = case.alert.filter(|a| a.sentence_index < onset_s) {
            n_early += 1;
            sent_lead += onset_s - alert.sentence_index;
            tok_lead += onset_t.saturating_sub(alert.token_index);
        }
    }
    if n_loop == 0 {
        return Err(Error::EmptyClass("loop"));
    }
    if n_normal == 0 {
        return Err(Error::EmptyClass("normal"));
    }
    let lead = |total: usize| (n_early > 0).then(|| total as f64 / n_early as f64);
    Ok(EvalReport {
        n_loop,
        n_normal,
        n_early,
        n_fp,
        edr: n_early as f64 / n_loop as f64,
        fpr: n_fp as f64 / n_normal as f64,
        ase_sentences: lead(sent_lead),
        ate_tokens: lead(tok_lead),
    })
}

/// A case whose sentence scores are computed once and replayed under many
/// monitor settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCase {
    pub trace_id: String,
    pub truth: GroundTruth,
    pub sentences: Vec<ScoredSentence>,
}

/// Scores every sentence of every trace once, with ground truth attached.
pub fn score_cases(traces: &[Trace], model: &ClassifierModel, detector: &DetectorConfig) -> Result<Vec<ScoredCase>> {
    traces
        .iter()
        .map(|t| {
            Ok(ScoredCase {
                trace_id: t.id().to_string(),
                truth: ground_truth(t, detector),
                sentences: sentence_scores(t, model)?,
            })
        })
        .collect()
}

pub fn evaluate_scored(cases: &[ScoredCase], cfg: &CusumConfig) -> Result<(EvalReport, Vec<EvalCase>)> {
    let mut ordered: Vec<&ScoredCase> = cases.iter().collect();
    ordered.sort_by(|a, b| a.trace_id.cmp(&b.trace_id));
    let evals = ordered
        .into_iter()
        .map(|c| {
            Ok(EvalCase {
                trace_id: c.trace_id.clone(),
                truth: c.truth,
                alert: replay(&c.sentences, cfg)?.alert,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((evaluate_prediction(&evals)?, evals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub p: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Re-runs the monitor for each persistence value on the cached scores.
pub fn ablate_persistence(cases: &[ScoredCase], base: &CusumConfig, p_values: &[usize]) -> Result<Vec<AblationRow>> {
    if p_values.is_empty() {
        return Err(Error::InvalidConfig("no persistence values to ablate".into()));
    }
    p_values
        .iter()
        .map(|&p| {
            let cfg = base.with_p(p);
            cfg.validate()?;
            Ok(AblationRow {
                p,
                report: evaluate_scored(cases, &cfg)?.0,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
    let mut out = String::from("p,edr,fpr,ase,ate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.p,
            r.report.edr,
            r.report.fpr,
            fmt(r.report.ase_sentences),
            fmt(r.report.ate_tokens)
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: CusumConfig,
    pub report: EvalReport,
}

/// Sweeps `p` and `alpha`, calibrating each `alpha` on the same normal
/// score streams. Points come back in sweep order.
pub fn grid_search(
    calibration: &[Vec<f64>],
    cases: &[ScoredCase],
    p_values: &[usize],
    alphas: &[f64],
) -> Result<Vec<GridPoint>> {
    let mut out = Vec::with_capacity(p_values.len() * alphas.len());
    for &p in p_values {
        for &alpha in alphas {
            let config = calibrate_scores(calibration, alpha, p)?;
            out.push(GridPoint {
                config,
                report: evaluate_scored(cases, &config)?.0,
            });
        }
    }
    Ok(out)
}

/// Highest `edr - fpr`; ties go to the earlier point of the sweep.
pub fn best_grid_point(points: &[GridPoint]) -> Option<GridPoint> {
    points.iter().copied().reduce(|best, g| {
        if g.report.edr - g.report.fpr > best.report.edr - best.report.fpr {
            g
        } else {
            best
        }
    })
}

/// Index of the token that completes the first end-of-thought marker.
pub fn marker_position(trace: &Trace) -> Option<usize> {
    let marker = &trace.meta.end_of_thought_marker;
    if marker.is_empty() {
        return None;
    }
    let text = trace.text();
    let at = text.find(marker.as_str())?;
    let last_byte = at + marker.len() - 1;
    let mut end = 0;
    trace.tokens.iter().position(|t| {
        end += t.text.len();
        end > last_byte
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionRate {
    pub budget: usize,
    pub rate: f64,
}

/// Share of continuations that emit the end-of-thought marker within the
/// first `budget` tokens.
pub fn completion_rate(continuations: &[Trace], budgets: &[usize]) -> Vec<CompletionRate> {
    let positions: Vec<Option<usize>> = continuations.iter().map(marker_position).collect();
    budgets
        .iter()
        .map(|&budget| {
            let hits = positions.iter().filter(|p| p.is_some_and(|p| p < budget)).count();
            CompletionRate {
                budget,
                rate: if continuations.is_empty() { 0.0 } else { hits as f64 / continuations.len() as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopRates {
    pub traces: usize,
    /// Numerical loop rate.
    pub nlr: f64,
    /// Statement loop rate.
    pub slr: f64,
}

pub fn loop_rates(truths: &[GroundTruth]) -> LoopRates {
    let n = truths.len();
    let rate = |kind: LoopType| {
        if n == 0 {
            0.0
        } else {
            truths.iter().filter(|t| t.loop_type == kind).count() as f64 / n as f64
        }
    };
    LoopRates {
        traces: n,
        nlr: rate(LoopType::Numerical),
        slr: rate(LoopType::Statement),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub calibration: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded split: `calibration` normal cases for the monitor, a balanced
/// test set of `test_per_class` per class, and everything else for
/// training. Index lists come back sorted.
pub fn split_cases(is_loop: &[bool], calibration: usize, test_per_class: usize, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loops: Vec<usize> = (0..is_loop.len()).filter(|&i| is_loop[i]).collect();
    let mut normals: Vec<usize> = (0..is_loop.len()).filter(|&i| !is_loop[i]).collect();
    if normals.len() < calibration + test_per_class || loops.len() < test_per_class {
        return Err(Error::InvalidConfig(format!(
            "need {} normal and {test_per_class} loop cases, have {} and {}",
            calibration + test_per_class,
            normals.len(),
            loops.len()
        )));
    }
    loops.shuffle(&mut rng);
    normals.shuffle(&mut rng);
    let mut cal: Vec<usize> = normals.drain(..calibration).collect();
    let mut test: Vec<usize> = normals.drain(..test_per_class).chain(loops.drain(..test_per_class)).collect();
    let mut train: Vec<usize> = normals.into_iter().chain(loops).collect();
    cal.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split {
        calibration: cal,
        train,
        test,
    })
}
