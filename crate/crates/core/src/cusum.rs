//! One-sided CUSUM over per-sentence probe scores.
//!
//! `S_i = max(0, S_{i-1} + x_i - r)`. An alert fires once `S > h` has held
//! for `p` consecutive sentences. `r` is the pooled mean score of normal
//! traces and `h = alpha * S_max`, the largest statistic seen when
//! replaying those traces.

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::trace::{mean_rows, segment_sentences, HiddenStates, Segmenter, Trace};

pub const DEFAULT_P: usize = 4;
pub const DEFAULT_ALPHA: f64 = 1.3;
/// Floor for `h` when calibration never moves the statistic.
pub const EPSILON: f64 = 1e-6;
pub const GRID_P: [usize; 4] = [3, 4, 5, 6];

/// `alpha` values 1.0, 1.1, ..., 2.0.
pub fn grid_alphas() -> Vec<f64> {
    (10..=20).map(|k| f64::from(k) / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumConfig {
    pub r: f64,
    pub h: f64,
    pub p: usize,
    pub alpha: f64,
}

impl CusumConfig {
    pub fn new(r: f64, h: f64, p: usize) -> Self {
        Self { r, h, p, alpha: DEFAULT_ALPHA }
    }

    pub fn with_p(self, p: usize) -> Self {
        Self { p, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidConfig("persistence p must be at least 1".into()));
        }
        if !(self.h.is_finite() && self.h >= 0.0) {
            return Err(Error::InvalidConfig(format!("threshold h = {} must be finite and >= 0", self.h)));
        }
        if !self.r.is_finite() {
            return Err(Error::InvalidConfig("reference r must be finite".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CusumState {
    pub s: f64,
    /// Consecutive steps with `S > h`.
    pub counter: usize,
    /// Scores consumed so far.
    pub step: usize,
    /// 1-based step at which the alert fired.
    pub triggered_at: Option<usize>,
}

/// Advances the statistic by one score. The flag is true on the single
/// step where the alert fires; later steps keep updating `S` only.
pub fn cusum_step(state: CusumState, x: f64, cfg: &CusumConfig) -> Result<(CusumState, bool)> {
    if !x.is_finite() {
        return Err(Error::NonFiniteScore(x));
    }
    let s = (state.s + (x - cfg.r)).max(0.0);
    let counter = if s > cfg.h { state.counter + 1 } else { 0 };
    let step = state.step + 1;
    let fires = state.triggered_at.is_none() && counter >= cfg.p;
    let next = CusumState {
        s,
        counter,
        step,
        triggered_at: if fires { Some(step) } else { state.triggered_at },
    };
    Ok((next, fires))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub sentence_index: usize,
    /// First token of the alerting sentence.
    pub token_index: usize,
    pub statistic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub x: f64,
}

pub fn sentence_scores(trace: &Trace, model: &ClassifierModel) -> Result<Vec<ScoredSentence>> {
    trace.require_hidden()?;
    segment_sentences(trace)
        .into_iter()
        .map(|s| {
            let x = model.score(s.mean_hidden.as_deref().expect("hidden present"))?;
            Ok(ScoredSentence {
                sentence_index: s.sentence_index,
                start: s.start,
                end: s.end,
                x,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRun {
    pub sentences: Vec<ScoredSentence>,
    /// `S_i` after each sentence.
    pub statistics: Vec<f64>,
    pub alert: Option<AlertEvent>,
}

impl MonitorRun {
    pub fn scores(&self) -> Vec<f64> {
        self.sentences.iter().map(|s| s.x).collect()
    }
}

/// Folds the CUSUM over precomputed sentence scores.
pub fn replay(sentences: &[ScoredSentence], cfg: &CusumConfig) -> Result<MonitorRun> {
    let mut state = CusumState::default();
    let mut statistics = Vec::with_capacity(sentences.len());
    let mut alert = None;
    for sent in sentences {
        let (next, fires) = cusum_step(state, sent.x, cfg)?;
        state = next;
        statistics.push(state.s);
        if fires {
            alert = Some(AlertEvent {
                sentence_index: sent.sentence_index,
                token_index: sent.start,
                statistic: state.s,
            });
        }
    }
    Ok(MonitorRun {
        sentences: sentences.to_vec(),
        statistics,
        alert,
    })
}

pub fn monitor_trace(trace: &Trace, model: &ClassifierModel, cfg: &CusumConfig) -> Result<MonitorRun> {
    replay(&sentence_scores(trace, model)?, cfg)
}

/// Largest statistic reached on a score stream with reference `r`.
pub fn max_statistic(scores: &[f64], r: f64) -> f64 {
    let mut s: f64 = 0.0;
    let mut max: f64 = 0.0;
    for &x in scores {
        s = (s + (x - r)).max(0.0);
        max = max.max(s);
    }
    max
}

/// Calibrates `r` and `h` from the score streams of normal traces.
pub fn calibrate_scores(streams: &[Vec<f64>], alpha: f64, p: usize) -> Result<CusumConfig> {
    let count: usize = streams.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    if let Some(&bad) = streams.iter().flatten().find(|x| !x.is_finite()) {
        return Err(Error::NonFiniteScore(bad));
    }
    let r = streams.iter().flatten().sum::<f64>() / count as f64;
    let s_max = streams.iter().map(|s| max_statistic(s, r)).fold(0.0, f64::max);
    let cfg = CusumConfig {
        r,
        h: (alpha * s_max).max(EPSILON),
        p,
        alpha,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn calibrate(normal_traces: &[Trace], model: &ClassifierModel, alpha: f64, p: usize) -> Result<CusumConfig> {
    if normal_traces.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let streams = normal_traces
        .iter()
        .map(|t| Ok(sentence_scores(t, model)?.iter().map(|s| s.x).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    calibrate_scores(&streams, alpha, p)
}

/// Output of the streaming monitor, one JSON object per line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MonitorEvent {
    Score { sentence: usize, x: f64, s: f64 },
    Alert { sentence: usize, token: usize, s: f64 },
}

/// Token-by-token monitor. Sentences are scored as soon as the segmenter
/// closes them.
#[derive(Debug)]
pub struct LiveMonitor<'m> {
    model: &'m ClassifierModel,
    cfg: CusumConfig,
    segmenter: Segmenter,
    hidden: HiddenStates,
    state: CusumState,
    alert: Option<AlertEvent>,
}

impl<'m> LiveMonitor<'m> {
    pub fn new(model: &'m ClassifierModel, cfg: CusumConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        Ok(Self {
            model,
            cfg,
            segmenter: Segmenter::new(),
            hidden: HiddenStates::new(model.hidden_dim.max(1), Vec::new())?,
            state: CusumState::default(),
            alert: None,
        })
    }

    pub fn alert(&self) -> Option<AlertEvent> {
        self.alert
    }

    pub fn state(&self) -> CusumState {
        self.state
    }

    pub fn feed(&mut self, token_text: &str, hidden_row: &[f32]) -> Result<Vec<MonitorEvent>> {
        self.hidden.push_row(hidden_row)?;
        let closed = self.segmenter.push(token_text);
        self.score_all(closed.into_iter().map(|s| (s.index, s.start, s.end)))
    }

    pub fn finish(mut self) -> Result<(Vec<MonitorEvent>, Option<AlertEvent>)> {
        let segmenter = std::mem::take(&mut self.segmenter);
        let closed = segmenter.finish();
        let events = self.score_all(closed.into_iter().map(|s| (s.index, s.start, s.end)))?;
        Ok((events, self.alert))
    }

    fn score_all(&mut self, spans: impl Iterator<Item = (usize, usize, usize)>) -> Result<Vec<MonitorEvent>> {
        let mut out = Vec::new();
        for (index, start, end) in spans {
            let x = self.model.score(&mean_rows(&self.hidden, start, end))?;
            let (next, fires) = cusum_step(self.state, x, &self.cfg)?;
            self.state = next;
            out.push(MonitorEvent::Score { sentence: index, x, s: next.s });
            if fires {
                self.alert = Some(AlertEvent {
                    sentence_index: index,
                    token_index: start,
                    statistic: next.s,
                });
                out.push(MonitorEvent::Alert { sentence: index, token: start, s: next.s });
            }
        }
        Ok(out)
    }
}
