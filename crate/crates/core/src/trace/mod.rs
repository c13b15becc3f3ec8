//! Trace data model: one generation run with per-token signals, optional
//! final-layer hidden states and ground-truth loop labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod format;
mod segment;
pub mod synth;

pub use format::{parse_trace, write_trace, HIDDEN_FILE, META_FILE, TOKENS_FILE};
pub use segment::{mean_rows, segment_sentences, Segmenter, SentenceRecord, SentenceSpan};

/// Slack allowed on probability-like invariants.
pub const PROB_TOL: f64 = 1e-6;

pub const DEFAULT_END_OF_THOUGHT: &str = "</think>";

/// Producer-side attention summary for one generation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    /// Mass on the leading sink positions.
    pub sink_mass: f64,
    /// Mass on the trailing window (128 tokens by default).
    pub recent_mass: f64,
    /// Mass on producer-marked positions outside both windows.
    pub marked_mass: f64,
}

impl AttentionSummary {
    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("sink_mass", self.sink_mass),
            ("recent_mass", self.recent_mass),
            ("marked_mass", self.marked_mass),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(format!("attn.{name} = {v} is outside [0, 1]"));
            }
        }
        if self.sink_mass + self.recent_mass > 1.0 + PROB_TOL {
            return Err(format!(
                "attn.sink_mass + attn.recent_mass = {} exceeds 1",
                self.sink_mass + self.recent_mass
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    #[serde(rename = "i")]
    pub index: usize,
    #[serde(rename = "id")]
    pub token_id: u32,
    pub text: String,
    pub entropy_nats: f64,
    pub top1_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn: Option<AttentionSummary>,
}

impl TokenEvent {
    /// Checks the per-token invariants. The error names the offending key.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.entropy_nats.is_finite() || self.entropy_nats < 0.0 {
            return Err(format!("entropy_nats = {} must be finite and >= 0", self.entropy_nats));
        }
        if !self.top1_prob.is_finite() || !(0.0..=1.0).contains(&self.top1_prob) {
            return Err(format!("top1_prob = {} is outside [0, 1]", self.top1_prob));
        }
        if self.entropy_nats == 0.0 && (self.top1_prob - 1.0).abs() > PROB_TOL {
            return Err(format!(
                "top1_prob = {} but entropy_nats is 0 (a one-hot step has top1_prob 1)",
                self.top1_prob
            ));
        }
        if let Some(attn) = &self.attn {
            attn.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopType {
    None,
    Numerical,
    Statement,
}

impl std::fmt::Display for LoopType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LoopType::None => "none",
            LoopType::Numerical => "numerical",
            LoopType::Statement => "statement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopLabel {
    pub loop_type: LoopType,
    pub onset_token_index: Option<usize>,
    pub onset_sentence_index: Option<usize>,
}

impl LoopLabel {
    pub fn none() -> Self {
        Self {
            loop_type: LoopType::None,
            onset_token_index: None,
            onset_sentence_index: None,
        }
    }

    pub fn is_loop(&self) -> bool {
        self.loop_type != LoopType::None
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let has_onset = self.onset_token_index.is_some() || self.onset_sentence_index.is_some();
        match (self.loop_type, has_onset) {
            (LoopType::None, true) => Err("label.loop_type is none but an onset is set".into()),
            (LoopType::Numerical | LoopType::Statement, false) => Err(format!(
                "label.loop_type is {} but both onset fields are null",
                self.loop_type
            )),
            _ => Ok(()),
        }
    }
}

fn default_marker() -> String {
    DEFAULT_END_OF_THOUGHT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub trace_id: String,
    pub model_name: String,
    /// Width of the hidden rows, or 0 when the trace has none.
    pub hidden_dim: usize,
    pub prompt: String,
    #[serde(default = "default_marker")]
    pub end_of_thought_marker: String,
    pub label: LoopLabel,
    /// Producer-specific keys (capture layer, intervention flags, ...),
    /// carried through unchanged.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl TraceMeta {
    pub fn new(trace_id: impl Into<String>, hidden_dim: usize, label: LoopLabel) -> Self {
        Self {
            trace_id: trace_id.into(),
            model_name: "synthetic".into(),
            hidden_dim,
            prompt: String::new(),
            end_of_thought_marker: default_marker(),
            label,
            extra: BTreeMap::new(),
        }
    }
}

/// Row-major matrix of final-layer hidden states, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    dim: usize,
    data: Vec<f32>,
}

impl HiddenStates {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("hidden_dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} floats do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has width {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "row has width {}, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub tokens: Vec<TokenEvent>,
    pub hidden: Option<HiddenStates>,
}

impl Trace {
    /// Builds a trace and checks every invariant.
    pub fn new(meta: TraceMeta, tokens: Vec<TokenEvent>, hidden: Option<HiddenStates>) -> Result<Self> {
        let trace = Self { meta, tokens, hidden };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        self.meta
            .label
            .validate()
            .map_err(|m| Error::schema(META_FILE, m))?;
        for (pos, tok) in self.tokens.iter().enumerate() {
            let location = format!("{TOKENS_FILE}:{}", pos + 1);
            if tok.index != pos {
                return Err(Error::schema(
                    location,
                    format!("i = {} but the token is at position {pos}", tok.index),
                ));
            }
            tok.validate().map_err(|m| Error::schema(location, m))?;
        }
        match &self.hidden {
            Some(h) => {
                if h.dim() != self.meta.hidden_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "meta hidden_dim is {} but rows have width {}",
                        self.meta.hidden_dim,
                        h.dim()
                    )));
                }
                if h.num_rows() != self.tokens.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} hidden rows for {} tokens",
                        h.num_rows(),
                        self.tokens.len()
                    )));
                }
            }
            None if self.meta.hidden_dim != 0 => {
                return Err(Error::schema(
                    META_FILE,
                    format!("hidden_dim = {} but the trace has no hidden rows", self.meta.hidden_dim),
                ));
            }
            None => {}
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.meta.trace_id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Concatenated surface text.
    pub fn text(&self) -> String {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn has_attention(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.attn.is_some())
    }

    pub fn require_hidden(&self) -> Result<&HiddenStates> {
        self.hidden
            .as_ref()
            .ok_or_else(|| Error::MissingHidden(self.meta.trace_id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tok(i: usize, text: &str) -> TokenEvent {
        TokenEvent {
            index: i,
            token_id: i as u32,
            text: text.into(),
            entropy_nats: 1.0,
            top1_prob: 0.5,
            attn: None,
        }
    }

    #[test]
    fn one_hot_step_requires_unit_top1() {
        let mut t = tok(0, "a");
        t.entropy_nats = 0.0;
        t.top1_prob = 1.0;
        assert!(t.validate().is_ok());
        t.top1_prob = 0.9;
        assert!(t.validate().unwrap_err().contains("top1_prob"));
    }

    #[test]
    fn label_onsets_must_match_type() {
        let mut label = LoopLabel::none();
        assert!(label.validate().is_ok());
        label.onset_token_index = Some(3);
        assert!(label.validate().is_err());
        label.loop_type = LoopType::Statement;
        assert!(label.validate().is_ok());
        label.onset_token_index = None;
        assert!(label.validate().is_err());
    }

    #[test]
    fn attention_windows_cannot_exceed_unit_mass() {
        let a = AttentionSummary {
            sink_mass: 0.6,
            recent_mass: 0.5,
            marked_mass: 0.0,
        };
        assert!(a.validate().unwrap_err().contains("sink_mass + attn.recent_mass"));
    }

    #[test]
    fn hidden_rows_must_match_tokens() {
        let meta = TraceMeta::new("t", 2, LoopLabel::none());
        let hidden = HiddenStates::from_rows(2, &[[0.0f32, 1.0]]).unwrap();
        let err = Trace::new(meta, vec![tok(0, "a"), tok(1, "b")], Some(hidden)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }
}
