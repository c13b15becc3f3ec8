//! Exact textual loop detection.
//!
//! A numerical loop is a digit run whose periodic tail covers more than
//! `numerical_threshold` symbols (`k * l > 500` by default). A statement
//! loop is a block of sentences repeated more than `statement_threshold`
//! consecutive times (`k > 3`). Breakpoints fire earlier, at a plain
//! repetition count, and are what an intervening producer acts on.
//!
//! Offline detection reports the earliest prefix of the trace that
//! satisfies a rule, which is exactly what [`StreamDetector`] sees token by
//! token.

use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::trace::{LoopType, SentenceRecord, Trace};

mod period;
mod stream;

pub use period::{minimal_period, periodic_tail, prefix_function, z_function, PeriodicityResult, TailPeriods};
pub use stream::StreamDetector;

#[cfg(test)]
pub(crate) use period::oracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericalUnit {
    #[default]
    Characters,
    Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub numerical_threshold: usize,
    pub statement_threshold: usize,
    pub numerical_breakpoint: usize,
    pub statement_breakpoint: usize,
    pub numerical_unit: NumericalUnit,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            numerical_threshold: 500,
            statement_threshold: 3,
            numerical_breakpoint: 20,
            statement_breakpoint: 3,
            numerical_unit: NumericalUnit::Characters,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.numerical_threshold == 0
            || self.statement_threshold == 0
            || self.numerical_breakpoint == 0
            || self.statement_breakpoint == 0
        {
            return Err(crate::Error::InvalidConfig(
                "detector thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetAnnotation {
    pub loop_type: LoopType,
    pub onset_token_index: usize,
    pub onset_sentence_index: Option<usize>,
    pub unit_len: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    NumericalOnset,
    StatementOnset,
    NumericalBreakpoint,
    StatementBreakpoint,
}

/// One line of detector output. `token_index` is the first token of the
/// periodic tail; `reps` is the count when the condition was first met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    #[serde(rename = "type")]
    pub kind: DetectionKind,
    pub token_index: usize,
    pub sentence_index: Option<usize>,
    pub unit_len: usize,
    pub reps: usize,
}

impl DetectionEvent {
    pub fn to_onset(&self) -> Option<OnsetAnnotation> {
        let loop_type = match self.kind {
            DetectionKind::NumericalOnset => LoopType::Numerical,
            DetectionKind::StatementOnset => LoopType::Statement,
            _ => return None,
        };
        Some(OnsetAnnotation {
            loop_type,
            onset_token_index: self.token_index,
            onset_sentence_index: self.sentence_index,
            unit_len: self.unit_len,
            reps: self.reps,
        })
    }
}

/// Which events have already fired; each fires at most once per trace.
#[derive(Debug, Default, Clone)]
pub(crate) struct Fired(u8);

impl Fired {
    fn bit(kind: DetectionKind) -> u8 {
        1 << kind as u8
    }

    pub(crate) fn take(&mut self, kind: DetectionKind) -> bool {
        let fresh = self.0 & Self::bit(kind) == 0;
        self.0 |= Self::bit(kind);
        fresh
    }

    pub(crate) fn has(&self, kind: DetectionKind) -> bool {
        self.0 & Self::bit(kind) != 0
    }
}

/// Applies the numerical rules to a prefix of a digit run. `symbol_tokens`
/// maps each symbol of the run to the token it came from.
pub(crate) fn check_numerical(
    symbols: &[u32],
    symbol_tokens: &[usize],
    cfg: &DetectorConfig,
    fired: &mut Fired,
) -> Vec<DetectionEvent> {
    let mut out = Vec::new();
    if fired.has(DetectionKind::NumericalOnset) && fired.has(DetectionKind::NumericalBreakpoint) {
        return out;
    }
    let tails = TailPeriods::new(symbols);
    let event = |kind, r: PeriodicityResult| DetectionEvent {
        kind,
        token_index: symbol_tokens[r.tail_start],
        sentence_index: None,
        unit_len: r.unit_len,
        reps: r.reps,
    };
    if let Some(r) = tails.longest_repeated(2) {
        if r.repeated_len > cfg.numerical_threshold && fired.take(DetectionKind::NumericalOnset) {
            out.push(event(DetectionKind::NumericalOnset, r));
        }
    }
    if let Some(r) = tails.most_repetitions() {
        if r.reps >= cfg.numerical_breakpoint.max(2) && fired.take(DetectionKind::NumericalBreakpoint) {
            out.push(event(DetectionKind::NumericalBreakpoint, r));
        }
    }
    out
}

/// Applies the statement rules to the sentences closed so far.
pub(crate) fn check_statement(
    fingerprints: &[u32],
    sentence_starts: &[usize],
    cfg: &DetectorConfig,
    fired: &mut Fired,
) -> Vec<DetectionEvent> {
    let mut out = Vec::new();
    if fired.has(DetectionKind::StatementOnset) && fired.has(DetectionKind::StatementBreakpoint) {
        return out;
    }
    let Some(r) = periodic_tail(fingerprints) else {
        return out;
    };
    let event = |kind| DetectionEvent {
        kind,
        token_index: sentence_starts[r.tail_start],
        sentence_index: Some(r.tail_start),
        unit_len: r.unit_len,
        reps: r.reps,
    };
    if r.reps >= cfg.statement_breakpoint.max(2) && fired.take(DetectionKind::StatementBreakpoint) {
        out.push(event(DetectionKind::StatementBreakpoint));
    }
    if r.reps > cfg.statement_threshold && fired.take(DetectionKind::StatementOnset) {
        out.push(event(DetectionKind::StatementOnset));
    }
    out
}

/// Exact-match sentence identity: whitespace runs collapsed, case kept.
#[derive(Debug, Default, Clone)]
pub struct FingerprintTable {
    ids: HashMap<String, u32>,
}

impl FingerprintTable {
    pub fn fingerprint(&mut self, text: &str) -> u32 {
        let key = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let next = self.ids.len() as u32;
        *self.ids.entry(key).or_insert(next)
    }
}

pub fn fingerprints(sentences: &[SentenceRecord]) -> Vec<u32> {
    let mut table = FingerprintTable::default();
    sentences
        .iter()
        .map(|s| table.fingerprint(&s.text_normalized))
        .collect()
}

fn statement_events(sentences: &[SentenceRecord], cfg: &DetectorConfig) -> Vec<DetectionEvent> {
    let fps = fingerprints(sentences);
    let starts: Vec<usize> = sentences.iter().map(|s| s.start).collect();
    let mut fired = Fired::default();
    let mut out = Vec::new();
    for m in 1..=fps.len() {
        out.extend(check_statement(&fps[..m], &starts[..m], cfg, &mut fired));
        if fired.has(DetectionKind::StatementOnset) && fired.has(DetectionKind::StatementBreakpoint) {
            break;
        }
    }
    out
}

pub fn detect_statement_loop(sentences: &[SentenceRecord], cfg: &DetectorConfig) -> Option<OnsetAnnotation> {
    statement_events(sentences, cfg)
        .into_iter()
        .find_map(|e| e.to_onset())
}

/// A maximal digit run with the prefix lengths at which it is checked.
struct DigitRun {
    symbols: Vec<u32>,
    symbol_tokens: Vec<usize>,
    checkpoints: Vec<usize>,
}

fn digit_run_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[0-9]+(?:[., ][0-9]+)*").expect("valid regex"))
}

fn digit_runs(trace: &Trace, unit: NumericalUnit) -> Vec<DigitRun> {
    let text = trace.text();
    let mut token_ends = Vec::with_capacity(trace.len());
    let mut end = 0;
    for t in &trace.tokens {
        end += t.text.len();
        token_ends.push(end);
    }
    let token_at = |pos: usize| token_ends.partition_point(|&e| e <= pos);

    digit_run_regex()
        .find_iter(&text)
        .map(|m| {
            let digits: Vec<(usize, u8)> = m
                .as_str()
                .bytes()
                .enumerate()
                .filter(|(_, b)| b.is_ascii_digit())
                .map(|(i, b)| (token_at(m.start() + i), b))
                .collect();
            let (symbols, symbol_tokens): (Vec<u32>, Vec<usize>) = match unit {
                NumericalUnit::Characters => digits.iter().map(|&(t, b)| (u32::from(b - b'0'), t)).unzip(),
                NumericalUnit::Tokens => {
                    let mut pairs: Vec<(u32, usize)> = Vec::new();
                    for &(t, _) in &digits {
                        if pairs.last().map(|&(_, last)| last) != Some(t) {
                            pairs.push((trace.tokens[t].token_id, t));
                        }
                    }
                    pairs.into_iter().unzip()
                }
            };
            let first = symbol_tokens[0];
            let last = *symbol_tokens.last().expect("non-empty run");
            let mut checkpoints: Vec<usize> = (first..=last)
                .map(|t| symbol_tokens.partition_point(|&st| st <= t))
                .collect();
            checkpoints.dedup();
            DigitRun {
                symbols,
                symbol_tokens,
                checkpoints,
            }
        })
        .collect()
}

fn numerical_events(trace: &Trace, cfg: &DetectorConfig) -> Vec<DetectionEvent> {
    let mut fired = Fired::default();
    let mut out = Vec::new();
    for run in digit_runs(trace, cfg.numerical_unit) {
        for &m in &run.checkpoints {
            out.extend(check_numerical(&run.symbols[..m], &run.symbol_tokens[..m], cfg, &mut fired));
        }
    }
    out
}

pub fn detect_numerical_loop(trace: &Trace, cfg: &DetectorConfig) -> Option<OnsetAnnotation> {
    numerical_events(trace, cfg)
        .into_iter()
        .find_map(|e| e.to_onset())
}

/// Every detection event of a trace, computed offline.
pub fn detect_events(trace: &Trace, cfg: &DetectorConfig) -> Vec<DetectionEvent> {
    let sentences = crate::trace::segment_sentences(trace);
    let mut events = numerical_events(trace, cfg);
    events.extend(statement_events(&sentences, cfg));
    events
}

/// Textual ground truth for a trace: the earlier of the two loop onsets,
/// with the sentence filled in from segmentation.
pub fn textual_onset(trace: &Trace, cfg: &DetectorConfig) -> Option<OnsetAnnotation> {
    let sentences = crate::trace::segment_sentences(trace);
    let statement = detect_statement_loop(&sentences, cfg);
    let numerical = detect_numerical_loop(trace, cfg).map(|mut a| {
        a.onset_sentence_index = sentences
            .iter()
            .position(|s| s.token_span().contains(&a.onset_token_index));
        a
    });
    match (statement, numerical) {
        (Some(s), Some(n)) => Some(if n.onset_token_index < s.onset_token_index { n } else { s }),
        (s, n) => s.or(n),
    }
}
