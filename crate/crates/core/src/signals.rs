//! Observational statistics over traces: entropy collapse, pivot-token
//! windows, attention phases and hidden-state convergence across cycles.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textual::{fingerprints, OnsetAnnotation};
use crate::trace::synth::PIVOTS;
use crate::trace::{segment_sentences, AttentionSummary, LoopType, SentenceRecord, Trace};

pub const DEFAULT_SHIFT_WINDOW: usize = 64;
pub const DEFAULT_DROP_RATIO: f64 = 0.2;
pub const DEFAULT_PHASE_WINDOW: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    EntropyNats,
    Top1Prob,
    AttentionRecentMass,
    AttentionSinkMass,
    MarkedMass,
}

impl SignalKind {
    pub const ALL: [SignalKind; 5] = [
        SignalKind::EntropyNats,
        SignalKind::Top1Prob,
        SignalKind::AttentionRecentMass,
        SignalKind::AttentionSinkMass,
        SignalKind::MarkedMass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::EntropyNats => "entropy_nats",
            SignalKind::Top1Prob => "top1_prob",
            SignalKind::AttentionRecentMass => "attention_recent_mass",
            SignalKind::AttentionSinkMass => "attention_sink_mass",
            SignalKind::MarkedMass => "marked_mass",
        }
    }

    fn attention(self) -> Option<fn(&AttentionSummary) -> f64> {
        match self {
            SignalKind::AttentionRecentMass => Some(|a| a.recent_mass),
            SignalKind::AttentionSinkMass => Some(|a| a.sink_mass),
            SignalKind::MarkedMass => Some(|a| a.marked_mass),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub kind: SignalKind,
    pub values: Vec<f64>,
}

pub fn signal_series(trace: &Trace, kind: SignalKind) -> Result<SignalSeries> {
    let values = match kind {
        SignalKind::EntropyNats => trace.tokens.iter().map(|t| t.entropy_nats).collect(),
        SignalKind::Top1Prob => trace.tokens.iter().map(|t| t.top1_prob).collect(),
        _ => {
            let get = kind.attention().expect("attention kind");
            trace
                .tokens
                .iter()
                .map(|t| t.attn.as_ref().map(get))
                .collect::<Option<Vec<f64>>>()
                .ok_or(Error::SignalAbsent(kind.name()))?
        }
    };
    Ok(SignalSeries { kind, values })
}

/// Trailing moving average; the first values average what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// First index `t` where the mean of the `window` values from `t` on drops
/// below `drop_ratio` times the mean of the `window` values before `t`.
pub fn determinism_shift(entropy: &[f64], window: usize, drop_ratio: f64) -> Result<Option<usize>> {
    let needed = 2 * window;
    if window == 0 || entropy.len() <= needed {
        return Err(Error::TooShort { needed, got: entropy.len() });
    }
    Ok((window..=entropy.len() - window).find(|&t| {
        let before = mean(&entropy[t - window..t]);
        let after = mean(&entropy[t..t + window]);
        after < drop_ratio * before
    }))
}

/// Reflective pivot tokens, matched at the start of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighEntropyLexicon {
    tokens: BTreeSet<String>,
}

impl Default for HighEntropyLexicon {
    fn default() -> Self {
        Self {
            tokens: PIVOTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl HighEntropyLexicon {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Result<Self> {
        let tokens: BTreeSet<String> = tokens.into_iter().map(Into::into).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            return Err(Error::InvalidConfig("pivot lexicon must not be empty".into()));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Case-sensitive match of the sentence's first word.
    pub fn starts(&self, sentence: &str) -> bool {
        let s = sentence.trim_start();
        let word_end = s.find(|c: char| !c.is_alphanumeric()).unwrap_or(s.len());
        self.tokens.contains(&s[..word_end])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Sentences just before the loop onset.
    Onset,
    /// Sentences from the onset on.
    Stable,
    /// Pre-onset sentences outside the onset window.
    History,
    /// Whole normal traces.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub kind: WindowKind,
    /// Traces that contributed a non-empty window.
    pub traces: usize,
    pub sentences: usize,
    pub pivot_count: usize,
    /// Pivots per sentence.
    pub pivot_density: f64,
    /// Mean marked-token attention mass; absent without attention data.
    pub pivot_attention_share: Option<f64>,
}

/// Pivot statistics of one contiguous sentence window.
pub fn window_stats(
    trace: &Trace,
    sentences: &[SentenceRecord],
    window: Range<usize>,
    lexicon: &HighEntropyLexicon,
    kind: WindowKind,
) -> WindowStats {
    let window = window.start.min(sentences.len())..window.end.min(sentences.len());
    let chosen = &sentences[window];
    let pivot_count = chosen.iter().filter(|s| lexicon.starts(&s.text_normalized)).count();
    let marked: Option<Vec<f64>> = chosen
        .iter()
        .flat_map(|s| &trace.tokens[s.token_span()])
        .map(|t| t.attn.map(|a| a.marked_mass))
        .collect();
    let share = marked.filter(|m| !m.is_empty()).map(|m| mean(&m));
    WindowStats {
        kind,
        traces: usize::from(!chosen.is_empty()),
        sentences: chosen.len(),
        pivot_count,
        pivot_density: if chosen.is_empty() { 0.0 } else { pivot_count as f64 / chosen.len() as f64 },
        pivot_attention_share: share,
    }
}

fn onset_sentence(trace: &Trace, sentences: &[SentenceRecord]) -> Option<usize> {
    let label = &trace.meta.label;
    if !label.is_loop() {
        return None;
    }
    label.onset_sentence_index.or_else(|| {
        let token = label.onset_token_index?;
        sentences.iter().position(|s| s.token_span().contains(&token))
    })
}

/// Per-window pivot statistics over a corpus, averaged per trace and then
/// across traces. Windows are clipped at trace boundaries.
pub fn high_entropy_window_stats(
    traces: &[Trace],
    lexicon: &HighEntropyLexicon,
    onset_window: usize,
    stable_window: usize,
) -> Vec<WindowStats> {
    let mut order: Vec<&Trace> = traces.iter().collect();
    order.sort_by(|a, b| a.id().cmp(b.id()));

    let kinds = [WindowKind::Onset, WindowKind::Stable, WindowKind::History, WindowKind::Baseline];
    let mut per_kind: Vec<Vec<WindowStats>> = vec![Vec::new(); kinds.len()];
    for trace in order {
        let sentences = segment_sentences(trace);
        let n = sentences.len();
        let windows = match onset_sentence(trace, &sentences) {
            Some(o) => vec![
                (WindowKind::Onset, o.saturating_sub(onset_window)..o),
                (WindowKind::Stable, o..(o + stable_window).min(n)),
                (WindowKind::History, 0..o.saturating_sub(onset_window)),
            ],
            None if !trace.meta.label.is_loop() => vec![(WindowKind::Baseline, 0..n)],
            None => Vec::new(),
        };
        for (kind, range) in windows {
            let stats = window_stats(trace, &sentences, range, lexicon, kind);
            if stats.sentences > 0 {
                per_kind[kind as usize].push(stats);
            }
        }
    }

    kinds
        .iter()
        .zip(per_kind)
        .map(|(&kind, stats)| {
            let count = stats.len();
            let density = if count == 0 { 0.0 } else { stats.iter().map(|s| s.pivot_density).sum::<f64>() / count as f64 };
            let shares: Option<Vec<f64>> = stats.iter().map(|s| s.pivot_attention_share).collect();
            WindowStats {
                kind,
                traces: count,
                sentences: stats.iter().map(|s| s.sentences).sum(),
                pivot_count: stats.iter().map(|s| s.pivot_count).sum(),
                pivot_density: density,
                pivot_attention_share: shares.filter(|s| !s.is_empty()).map(|s| mean(&s)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMeans {
    pub tokens: usize,
    pub sink_mass: f64,
    pub recent_mass: f64,
    pub marked_mass: f64,
}

impl PhaseMeans {
    fn of(attn: &[AttentionSummary]) -> Option<Self> {
        if attn.is_empty() {
            return None;
        }
        let n = attn.len() as f64;
        Some(Self {
            tokens: attn.len(),
            sink_mass: attn.iter().map(|a| a.sink_mass).sum::<f64>() / n,
            recent_mass: attn.iter().map(|a| a.recent_mass).sum::<f64>() / n,
            marked_mass: attn.iter().map(|a| a.marked_mass).sum::<f64>() / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub onset_token: usize,
    pub pre: Option<PhaseMeans>,
    pub post: Option<PhaseMeans>,
    pub recent_series: Vec<f64>,
    /// Least-squares slope of recent mass per token after the onset.
    pub post_recent_slope: Option<f64>,
}

/// Ordinary least-squares slope of `values` against their index.
pub fn ls_slope(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = mean(values);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

pub fn attention_profile(trace: &Trace, onset_token: usize) -> Result<AttentionProfile> {
    let attn: Vec<AttentionSummary> = trace
        .tokens
        .iter()
        .map(|t| t.attn)
        .collect::<Option<_>>()
        .filter(|a: &Vec<AttentionSummary>| !a.is_empty())
        .ok_or(Error::SignalAbsent("attn"))?;
    let split = onset_token.min(attn.len());
    let recent_series: Vec<f64> = attn.iter().map(|a| a.recent_mass).collect();
    Ok(AttentionProfile {
        onset_token,
        pre: PhaseMeans::of(&attn[..split]),
        post: PhaseMeans::of(&attn[split..]),
        post_recent_slope: ls_slope(&recent_series[split..]),
        recent_series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStat {
    /// Cycle `k`, compared against cycle `k - 1`.
    pub cycle: usize,
    pub tokens: usize,
    pub cosine: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSimilarity {
    pub unit_sentences: usize,
    pub cycles: Vec<CycleStat>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (true, true) => (dot / (na * nb)).clamp(-1.0, 1.0),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Compares token `t` of every repetition cycle with token `t` of the cycle
/// before it. Cycles are followed for as long as the sentence block keeps
/// repeating verbatim.
pub fn cycle_state_similarity(trace: &Trace, onset: &OnsetAnnotation) -> Result<CycleSimilarity> {
    let hidden = trace.require_hidden()?;
    if onset.loop_type != LoopType::Statement {
        return Err(Error::NoLoop("cycle alignment needs a statement loop".into()));
    }
    let start = onset
        .onset_sentence_index
        .ok_or_else(|| Error::NoLoop("onset has no sentence index".into()))?;
    let unit = onset.unit_len;
    let sentences = segment_sentences(trace);
    if unit == 0 || start + 2 * unit > sentences.len() {
        return Err(Error::NoLoop(format!("fewer than two cycles of {unit} sentences after sentence {start}")));
    }
    let fps = fingerprints(&sentences);
    let first = &fps[start..start + unit];
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut k = 0;
    while start + (k + 1) * unit <= sentences.len() && &fps[start + k * unit..start + (k + 1) * unit] == first {
        let lo = sentences[start + k * unit].start;
        let hi = sentences[start + (k + 1) * unit - 1].end;
        spans.push(lo..hi);
        k += 1;
    }
    if spans.len() < 2 {
        return Err(Error::NoLoop("the unit does not repeat".into()));
    }
    let row = |i: usize| -> Vec<f64> { hidden.row(i).iter().map(|&v| f64::from(v)).collect() };
    let cycles = spans
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let n = w[0].len().min(w[1].len());
            let (mut cos, mut l2) = (0.0, 0.0);
            for t in 0..n {
                let (a, b) = (row(w[1].start + t), row(w[0].start + t));
                cos += cosine(&a, &b);
                l2 += l2_distance(&a, &b);
            }
            CycleStat {
                cycle: i + 1,
                tokens: n,
                cosine: cos / n as f64,
                l2: l2 / n as f64,
            }
        })
        .collect();
    Ok(CycleSimilarity { unit_sentences: unit, cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::synth::{synth_corpus, synth_trace, CorpusSpec, LoopShape, SynthSpec};
    use crate::trace::{HiddenStates, LoopLabel, TokenEvent, TraceMeta};
    use proptest::prelude::*;

    fn trace_of(pieces: &[&str], entropy: &[f64], attn: Option<&[AttentionSummary]>, hidden: Option<HiddenStates>) -> Trace {
        let tokens = pieces
            .iter()
            .enumerate()
            .map(|(i, t)| TokenEvent {
                index: i,
                token_id: i as u32,
                text: t.to_string(),
                entropy_nats: entropy.get(i).copied().unwrap_or(1.0),
                top1_prob: (-entropy.get(i).copied().unwrap_or(1.0)).exp(),
                attn: attn.map(|a| a[i]),
            })
            .collect();
        let dim = hidden.as_ref().map_or(0, HiddenStates::dim);
        Trace::new(TraceMeta::new("sig", dim, LoopLabel::none()), tokens, hidden).unwrap()
    }

    #[test]
    fn extraction_is_verbatim() {
        let t = trace_of(&["a", "b", "c"], &[1.0, 0.5, 0.0], None, None);
        assert_eq!(signal_series(&t, SignalKind::EntropyNats).unwrap().values, vec![1.0, 0.5, 0.0]);
        assert!(matches!(
            signal_series(&t, SignalKind::AttentionRecentMass),
            Err(Error::SignalAbsent("attention_recent_mass"))
        ));
    }

    #[test]
    fn uniform_four_way_entropy() {
        let p = [0.25f64; 4];
        let h: f64 = -p.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((h - 4f64.ln()).abs() < 1e-12);
        assert!((h - 1.386).abs() < 1e-3);
    }

    #[test]
    fn moving_average_warms_up() {
        assert_eq!(moving_average(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn constant_entropy_has_no_shift() {
        assert_eq!(determinism_shift(&[1.0; 300], 64, 0.2).unwrap(), None);
        assert!(matches!(determinism_shift(&[1.0; 128], 64, 0.2), Err(Error::TooShort { .. })));
    }

    #[test]
    fn step_function_shift_is_near_the_step() {
        let mut e = vec![1.0; 100];
        e.extend(vec![0.0; 200]);
        let t = determinism_shift(&e, 64, 0.2).unwrap().unwrap();
        // The after-window mean is (100 - t) / 64, first below 0.2 at t = 88.
        assert_eq!(t, 88);
    }

    #[test]
    fn synthetic_shift_tracks_the_onset() {
        let mut spec = SynthSpec::new("num", 0, 0.0, LoopShape::Numerical { unit_digits: 7, reps: 120 });
        spec.normal_sentences = 20;
        spec.drift_sentences = 5;
        let trace = synth_trace(&spec, 5).unwrap();
        let onset = trace.meta.label.onset_token_index.unwrap();
        let e = signal_series(&trace, SignalKind::EntropyNats).unwrap().values;
        let t = determinism_shift(&e, 64, 0.2).unwrap().unwrap();
        assert!(t + 64 >= onset && t <= onset + 64, "{t} vs {onset}");
    }

    #[test]
    fn pivots_are_counted_at_sentence_start() {
        let t = trace_of(&["But", " A.", " C.", " But", " B."], &[], None, None);
        let sents = segment_sentences(&t);
        let stats = window_stats(&t, &sents, 0..3, &HighEntropyLexicon::default(), WindowKind::Onset);
        assert_eq!(stats.pivot_count, 2);
        assert!((stats.pivot_density - 2.0 / 3.0).abs() < 1e-12);
        let lex = HighEntropyLexicon::default();
        assert!(!lex.starts("but lowercase"));
        assert!(!lex.starts("Butter is not a pivot"));
        assert!(lex.starts("Wait, again"));
    }

    #[test]
    fn empty_lexicon_is_rejected() {
        assert!(HighEntropyLexicon::new(Vec::<String>::new()).is_err());
        assert!(HighEntropyLexicon::new([""]).is_err());
    }

    #[test]
    fn onset_window_is_denser_than_baseline() {
        let spec = CorpusSpec { cases: 40, hidden_dim: 0, ..CorpusSpec::default() };
        let corpus = synth_corpus(&spec, 3).unwrap();
        let stats = high_entropy_window_stats(&corpus, &HighEntropyLexicon::default(), 30, 30);
        let onset = stats.iter().find(|s| s.kind == WindowKind::Onset).unwrap();
        let baseline = stats.iter().find(|s| s.kind == WindowKind::Baseline).unwrap();
        assert!(onset.pivot_density > baseline.pivot_density, "{onset:?} {baseline:?}");
        assert!(onset.pivot_attention_share.unwrap() > baseline.pivot_attention_share.unwrap());

        let mut reversed = corpus.clone();
        reversed.reverse();
        assert_eq!(stats, high_entropy_window_stats(&reversed, &HighEntropyLexicon::default(), 30, 30));
    }

    fn summary(recent: f64) -> AttentionSummary {
        AttentionSummary { sink_mass: 0.2, recent_mass: recent, marked_mass: 0.05 }
    }

    #[test]
    fn constant_attention_has_equal_phases() {
        let attn = vec![summary(0.4); 6];
        let t = trace_of(&["a"; 6], &[], Some(&attn), None);
        let p = attention_profile(&t, 3).unwrap();
        assert_eq!(p.pre.unwrap(), p.post.unwrap());
        assert!(matches!(attention_profile(&trace_of(&["a"], &[], None, None), 0), Err(Error::SignalAbsent(_))));
    }

    #[test]
    fn ramp_slope_is_recovered() {
        let mut attn = vec![summary(0.4); 20];
        attn.extend((0..40).map(|i| summary(0.45 + 0.004 * f64::from(i))));
        let t = trace_of(&["a"; 60], &[], Some(&attn), None);
        let p = attention_profile(&t, 20).unwrap();
        assert!(p.post.unwrap().recent_mass > p.pre.unwrap().recent_mass);
        assert!((p.post_recent_slope.unwrap() - 0.004).abs() < 1e-6);
    }

    fn looped_trace(rows: impl Fn(usize, usize) -> Vec<f32>) -> (Trace, OnsetAnnotation) {
        // Two sentences of two tokens, then four cycles of one sentence.
        let mut pieces = vec!["Intro", " one.", " Intro", " two."];
        for _ in 0..4 {
            pieces.extend([" Same", " words", " again."]);
        }
        let hidden: Vec<Vec<f32>> = (0..pieces.len())
            .map(|i| if i < 4 { vec![0.5, 0.5] } else { rows((i - 4) / 3, (i - 4) % 3) })
            .collect();
        let h = HiddenStates::from_rows(2, &hidden).unwrap();
        let t = trace_of(&pieces, &[], None, Some(h));
        let onset = OnsetAnnotation {
            loop_type: LoopType::Statement,
            onset_token_index: 4,
            onset_sentence_index: Some(2),
            unit_len: 1,
            reps: 4,
        };
        (t, onset)
    }

    #[test]
    fn identical_cycles_are_fully_similar() {
        let (t, onset) = looped_trace(|_, tok| vec![1.0, tok as f32]);
        let sim = cycle_state_similarity(&t, &onset).unwrap();
        assert_eq!(sim.cycles.len(), 3);
        assert!(sim.cycles.iter().all(|c| (c.cosine - 1.0).abs() < 1e-12 && c.l2 == 0.0 && c.tokens == 3));
    }

    #[test]
    fn scaled_cycles_keep_direction() {
        let (t, onset) = looped_trace(|k, _| vec![2f32.powi(k as i32), 0.0]);
        let sim = cycle_state_similarity(&t, &onset).unwrap();
        for c in &sim.cycles {
            assert!((c.cosine - 1.0).abs() < 1e-12);
            assert!((c.l2 - 2f64.powi(c.cycle as i32 - 1)).abs() < 1e-9);
        }
    }

    #[test]
    fn converging_cycles() {
        let (t, onset) = looped_trace(|k, tok| {
            let d = 0.5f32.powi(k as i32);
            vec![1.0 + d * (tok as f32 - 1.0), 1.0 + d]
        });
        let sim = cycle_state_similarity(&t, &onset).unwrap();
        for w in sim.cycles.windows(2) {
            assert!(w[1].cosine > w[0].cosine);
            assert!(w[1].l2 < w[0].l2);
        }
        assert!(sim.cycles.last().unwrap().cosine > 0.99);
    }

    #[test]
    fn similarity_needs_a_statement_loop() {
        let (t, mut onset) = looped_trace(|_, _| vec![1.0, 1.0]);
        onset.loop_type = LoopType::Numerical;
        assert!(matches!(cycle_state_similarity(&t, &onset), Err(Error::NoLoop(_))));
        let bare = trace_of(&["a"], &[], None, None);
        assert!(matches!(cycle_state_similarity(&bare, &onset), Err(Error::MissingHidden(_))));
    }

    proptest! {
        #[test]
        fn cosine_ignores_positive_scale(v in prop::collection::vec(-10.0f64..10.0, 1..8), c in 0.01f64..100.0) {
            prop_assume!(v.iter().any(|&x| x.abs() > 1e-3));
            let w: Vec<f64> = v.iter().map(|x| c * x).collect();
            prop_assert!((cosine(&v, &w) - 1.0).abs() < 1e-12);
            prop_assert_eq!(l2_distance(&v, &v), 0.0);
        }

        #[test]
        fn step_is_found_within_a_window(step in 70usize..300, window in 4usize..64) {
            let mut e = vec![1.0; step];
            e.extend(vec![0.0; 2 * window + 10]);
            let t = determinism_shift(&e, window, 0.2).unwrap().unwrap();
            prop_assert!(t + window >= step && t <= step + window);
        }
    }
}
