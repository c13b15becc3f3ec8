//! Seeded synthetic traces for desk-scale experiments.
//!
//! A loop trace is a run of ordinary sentences, the last `drift_sentences`
//! of which already draw their hidden states from the loop generator, then
//! an injected verbatim repetition (a sentence block or a digit unit).
//! Entropy collapses once the repetition starts and the recent-window
//! attention mass ramps up.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AttentionSummary, HiddenStates, LoopLabel, LoopType, TokenEvent, Trace, TraceMeta};
use crate::error::{Error, Result};

pub const PIVOTS: [&str; 7] = ["But", "Wait", "Alternatively", "However", "Maybe", "Therefore", "Hmm"];

const WORDS: [&str; 64] = [
    "the", "value", "of", "each", "term", "must", "be", "checked", "again", "against", "second",
    "constraint", "so", "we", "consider", "case", "where", "sum", "remains", "bounded", "and",
    "ratio", "grows", "slowly", "then", "previous", "step", "implies", "that", "first", "person",
    "is", "lying", "about", "neighbor", "statement", "which", "means", "assignment", "fails",
    "under", "current", "hypothesis", "still", "holds", "for", "remaining", "cases", "if", "all",
    "positions", "are", "shifted", "by", "one", "pattern", "repeats", "with", "period", "three",
    "modulo", "thirty", "digits", "carry",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LoopShape {
    None,
    /// A block of `unit_sentences` distinct sentences repeated `reps` times.
    Statement { unit_sentences: usize, reps: usize },
    /// A digit unit of length `unit_digits` repeated `reps` times.
    Numerical { unit_digits: usize, reps: usize },
}

/// Isotropic Gaussian over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGenerator {
    pub mean: Vec<f64>,
    pub stddev: f64,
}

/// Uniform ranges, in nats, for token entropies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub normal: (f64, f64),
    pub pivot: (f64, f64),
    pub collapsed: (f64, f64),
}

impl Default for EntropyProfile {
    fn default() -> Self {
        Self {
            normal: (0.4, 2.4),
            pivot: (2.6, 4.0),
            collapsed: (0.0, 0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub trace_id: String,
    /// 0 disables hidden states.
    pub hidden_dim: usize,
    /// Sentences before the onset (all sentences for a non-loop trace).
    pub normal_sentences: usize,
    /// How many of the pre-onset sentences already come from the loop generator.
    pub drift_sentences: usize,
    pub shape: LoopShape,
    pub normal_state: StateGenerator,
    pub loop_state: StateGenerator,
    /// Distance between the per-position modes of the loop unit.
    pub mode_spread: f64,
    /// Noise multiplier applied per repetition cycle, in (0, 1].
    pub cycle_decay: f64,
    pub entropy: EntropyProfile,
    pub pivot_rate_normal: f64,
    pub pivot_rate_drift: f64,
    pub with_attention: bool,
    pub paragraph_rate: f64,
}

impl SynthSpec {
    /// A plain spec with hidden states of width `hidden_dim` and the loop
    /// generator shifted `separation` standard deviations from the normal one.
    pub fn new(trace_id: impl Into<String>, hidden_dim: usize, separation: f64, shape: LoopShape) -> Self {
        let normal_mean = vec![0.0; hidden_dim];
        let mut loop_mean = vec![0.0; hidden_dim];
        if hidden_dim > 0 {
            loop_mean[0] = separation;
        }
        Self {
            trace_id: trace_id.into(),
            hidden_dim,
            normal_sentences: 30,
            drift_sentences: 0,
            shape,
            normal_state: StateGenerator { mean: normal_mean, stddev: 1.0 },
            loop_state: StateGenerator { mean: loop_mean, stddev: 1.0 },
            mode_spread: 0.0,
            cycle_decay: 0.7,
            entropy: EntropyProfile::default(),
            pivot_rate_normal: 0.1,
            pivot_rate_drift: 0.6,
            with_attention: true,
            paragraph_rate: 0.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match self.shape {
            LoopShape::None if self.drift_sentences > 0 => {
                return bad("drift requires a loop shape".into())
            }
            LoopShape::Statement { unit_sentences, reps } | LoopShape::Numerical { unit_digits: unit_sentences, reps } => {
                if unit_sentences == 0 {
                    return bad("loop unit must be non-empty".into());
                }
                if reps < 2 {
                    return bad(format!("repetition count {reps} < 2"));
                }
            }
            LoopShape::None => {}
        }
        if self.drift_sentences > self.normal_sentences {
            return bad(format!(
                "drift of {} sentences exceeds the {} pre-onset sentences",
                self.drift_sentences, self.normal_sentences
            ));
        }
        if self.shape == LoopShape::None && self.normal_sentences == 0 {
            return bad("a non-loop trace needs at least one sentence".into());
        }
        for (name, g) in [("normal_state", &self.normal_state), ("loop_state", &self.loop_state)] {
            if self.hidden_dim > 0 && g.mean.len() != self.hidden_dim {
                return bad(format!("{name}.mean has {} entries, expected {}", g.mean.len(), self.hidden_dim));
            }
            if !(g.stddev.is_finite() && g.stddev >= 0.0) {
                return bad(format!("{name}.stddev = {}", g.stddev));
            }
        }
        if !(self.cycle_decay > 0.0 && self.cycle_decay <= 1.0) {
            return bad(format!("cycle_decay = {} outside (0, 1]", self.cycle_decay));
        }
        for (name, (lo, hi)) in [
            ("entropy.normal", self.entropy.normal),
            ("entropy.pivot", self.entropy.pivot),
            ("entropy.collapsed", self.entropy.collapsed),
        ] {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return bad(format!("{name} range ({lo}, {hi}) is invalid"));
            }
        }
        for (name, r) in [
            ("pivot_rate_normal", self.pivot_rate_normal),
            ("pivot_rate_drift", self.pivot_rate_drift),
            ("paragraph_rate", self.paragraph_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Region {
    Normal,
    Drift { phase: usize },
    Loop,
}

struct Builder<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
    tokens: Vec<TokenEvent>,
    rows: Vec<f32>,
    onset_token: Option<usize>,
    sentences: usize,
}

fn token_id(text: &str) -> u32 {
    // FNV-1a, folded into a 50k vocabulary.
    let mut h: u32 = 0x811c_9dc5;
    for b in text.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h % 50_000
}

impl Builder<'_> {
    fn uniform(&mut self, (lo, hi): (f64, f64)) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn gaussian(&mut self, center: &[f64], stddev: f64) -> Vec<f64> {
        center
            .iter()
            .map(|&c| c + stddev * self.rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn unit_vector(&mut self) -> Vec<f64> {
        let dim = self.spec.hidden_dim;
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    fn attention(&mut self, index: usize, region: Region) -> Option<AttentionSummary> {
        if !self.spec.with_attention {
            return None;
        }
        let sink = self.uniform((0.15, 0.25));
        let marked = match region {
            Region::Normal => self.uniform((0.02, 0.06)),
            Region::Drift { .. } => self.uniform((0.12, 0.2)),
            Region::Loop => self.uniform((0.04, 0.08)),
        };
        let jitter = self.uniform((-0.01, 0.01));
        let recent = match (region, self.onset_token) {
            (Region::Loop, Some(onset)) => 0.45 + 0.004 * (index - onset) as f64 + jitter,
            _ => 0.4 + 4.0 * jitter,
        };
        let recent = recent.clamp(0.0, 1.0 - sink - marked - 0.01);
        Some(AttentionSummary {
            sink_mass: sink,
            recent_mass: recent,
            marked_mass: marked,
        })
    }

    fn push(&mut self, text: String, entropy: f64, region: Region, hidden: Option<Vec<f64>>) {
        let index = self.tokens.len();
        let attn = self.attention(index, region);
        self.tokens.push(TokenEvent {
            index,
            token_id: token_id(&text),
            text,
            entropy_nats: entropy,
            top1_prob: (-entropy).exp(),
            attn,
        });
        if let Some(h) = hidden {
            self.rows.extend(h.into_iter().map(|v| v as f32));
        }
    }

    /// Surface pieces of a fresh sentence; the first piece carries its
    /// leading separator.
    fn sentence_pieces(&mut self, pivot_rate: f64, first: bool) -> Vec<String> {
        let mut pieces = Vec::new();
        let mut lead = if first {
            String::new()
        } else if self.rng.random_bool(self.spec.paragraph_rate) {
            pieces.push("\n\n".to_string());
            String::new()
        } else {
            " ".to_string()
        };
        let has_pivot = self.rng.random_bool(pivot_rate);
        if has_pivot {
            let pivot = PIVOTS[self.rng.random_range(0..PIVOTS.len())];
            pieces.push(format!("{lead}{pivot}"));
            pieces.push(",".into());
            lead = " ".into();
        }
        let n_words = self.rng.random_range(6..=10);
        for w in 0..n_words {
            let word = WORDS[self.rng.random_range(0..WORDS.len())];
            let word = if w == 0 && !has_pivot {
                capitalize(word)
            } else {
                word.to_string()
            };
            pieces.push(format!("{lead}{word}"));
            lead = " ".into();
        }
        pieces.push(".".into());
        pieces
    }

    fn is_pivot(text: &str) -> bool {
        PIVOTS.contains(&text.trim_start())
    }

    fn emit_fresh_sentence(&mut self, region: Region, modes: &[Vec<f64>]) {
        let rate = match region {
            Region::Drift { .. } => self.spec.pivot_rate_drift,
            _ => self.spec.pivot_rate_normal,
        };
        let pieces = self.sentence_pieces(rate, self.tokens.is_empty());
        for piece in pieces {
            let entropy = if Self::is_pivot(&piece) {
                self.uniform(self.spec.entropy.pivot)
            } else {
                self.uniform(self.spec.entropy.normal)
            };
            let hidden = (self.spec.hidden_dim > 0).then(|| match region {
                Region::Normal => {
                    let g = &self.spec.normal_state;
                    let (mean, sd) = (g.mean.clone(), g.stddev);
                    self.gaussian(&mean, sd)
                }
                Region::Drift { phase } => {
                    let sd = self.spec.loop_state.stddev;
                    self.gaussian(&modes[phase], sd)
                }
                Region::Loop => unreachable!("loop sentences are replayed"),
            });
            self.push(piece, entropy, region, hidden);
        }
        self.sentences += 1;
    }
}

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn is_primitive(unit: &[u8]) -> bool {
    let n = unit.len();
    (1..n).filter(|&p| n.is_multiple_of(p)).all(|p| (p..n).any(|i| unit[i] != unit[i - p]))
}

pub fn synth_trace(spec: &SynthSpec, seed: u64) -> Result<Trace> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        tokens: Vec::new(),
        rows: Vec::new(),
        onset_token: None,
        sentences: 0,
    };

    let unit_positions = match spec.shape {
        LoopShape::Statement { unit_sentences, .. } => unit_sentences,
        _ => 1,
    };
    let modes: Vec<Vec<f64>> = if spec.hidden_dim > 0 {
        (0..unit_positions)
            .map(|_| {
                let dir = b.unit_vector();
                spec.loop_state
                    .mean
                    .iter()
                    .zip(dir)
                    .map(|(m, d)| m + spec.mode_spread * d)
                    .collect()
            })
            .collect()
    } else {
        vec![Vec::new(); unit_positions]
    };

    let drift_start = spec.normal_sentences - spec.drift_sentences;
    for s in 0..spec.normal_sentences {
        let region = if s >= drift_start {
            let back = spec.normal_sentences - s;
            Region::Drift {
                phase: (unit_positions - back % unit_positions) % unit_positions,
            }
        } else {
            Region::Normal
        };
        b.emit_fresh_sentence(region, &modes);
    }

    let label = match spec.shape {
        LoopShape::None => LoopLabel::none(),
        LoopShape::Statement { unit_sentences, reps } => {
            // The unit: fresh text and a per-token base state, replayed verbatim.
            let mut unit: Vec<Vec<(String, Option<Vec<f64>>)>> = Vec::with_capacity(unit_sentences);
            let mut seen = std::collections::HashSet::new();
            while unit.len() < unit_sentences {
                let rate = if unit.is_empty() { 0.5 } else { spec.pivot_rate_normal };
                let pieces = b.sentence_pieces(rate, false);
                let key: String = pieces.concat().trim().to_string();
                if !seen.insert(key) {
                    continue;
                }
                let j = unit.len();
                let sentence = pieces
                    .into_iter()
                    .map(|p| {
                        let base = (spec.hidden_dim > 0).then(|| {
                            let sd = spec.loop_state.stddev;
                            b.gaussian(&modes[j], sd)
                        });
                        (p, base)
                    })
                    .collect();
                unit.push(sentence);
            }
            let onset_sentence = b.sentences;
            b.onset_token = Some(b.tokens.len());
            for cycle in 0..reps {
                let noise = spec.loop_state.stddev * spec.cycle_decay.powi(cycle as i32);
                for sentence in &unit {
                    for (piece, base) in sentence {
                        let entropy = b.uniform(spec.entropy.collapsed);
                        let hidden = base.as_ref().map(|base| b.gaussian(base, noise));
                        b.push(piece.clone(), entropy, Region::Loop, hidden);
                    }
                    b.sentences += 1;
                }
            }
            LoopLabel {
                loop_type: LoopType::Statement,
                onset_token_index: b.onset_token,
                onset_sentence_index: Some(onset_sentence),
            }
        }
        LoopShape::Numerical { unit_digits, reps } => {
            let unit: Vec<u8> = loop {
                let u: Vec<u8> = (0..unit_digits).map(|_| b'0' + b.rng.random_range(0..10u8)).collect();
                if is_primitive(&u) {
                    break u;
                }
            };
            let mut intro = vec![" The".to_string(), " expansion".into(), " continues".into(), " as".into()];
            if b.tokens.is_empty() {
                intro[0] = "The".into();
            }
            let onset_sentence = b.sentences;
            for piece in intro {
                let entropy = b.uniform(spec.entropy.normal);
                let hidden = (spec.hidden_dim > 0).then(|| {
                    let sd = spec.loop_state.stddev;
                    b.gaussian(&modes[0], sd)
                });
                b.push(piece, entropy, Region::Drift { phase: 0 }, hidden);
            }
            let digits: Vec<u8> = unit.iter().copied().cycle().take(unit_digits * reps).collect();
            b.onset_token = Some(b.tokens.len());
            let mut pos = 0;
            let mut first = true;
            while pos < digits.len() {
                let len = b.rng.random_range(1..=3).min(digits.len() - pos);
                let chunk = std::str::from_utf8(&digits[pos..pos + len]).expect("ascii digits");
                let text = if first { format!(" {chunk}") } else { chunk.to_string() };
                first = false;
                let cycle = pos / unit_digits;
                let noise = spec.loop_state.stddev * spec.cycle_decay.powi(cycle as i32);
                let entropy = b.uniform(spec.entropy.collapsed);
                let hidden = (spec.hidden_dim > 0).then(|| b.gaussian(&modes[0], noise));
                b.push(text, entropy, Region::Loop, hidden);
                pos += len;
            }
            b.sentences += 1;
            LoopLabel {
                loop_type: LoopType::Numerical,
                onset_token_index: b.onset_token,
                onset_sentence_index: Some(onset_sentence),
            }
        }
    };

    let hidden = if spec.hidden_dim > 0 {
        Some(HiddenStates::new(spec.hidden_dim, b.rows)?)
    } else {
        None
    };
    let mut meta = TraceMeta::new(spec.trace_id.clone(), spec.hidden_dim, label);
    meta.prompt = "synthetic".into();
    Trace::new(meta, b.tokens, hidden)
}

/// Parameters of a whole synthetic corpus sharing one pair of generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub cases: usize,
    pub loop_ratio: f64,
    /// Share of loop cases that are numerical rather than statement loops.
    pub numerical_share: f64,
    pub hidden_dim: usize,
    /// Distance between the normal and loop means, in standard deviations.
    pub separation: f64,
    pub stddev: f64,
    pub mode_spread: f64,
    pub normal_sentences: (usize, usize),
    pub drift_sentences: (usize, usize),
    pub unit_sentences: (usize, usize),
    pub statement_reps: (usize, usize),
    pub unit_digits: (usize, usize),
    pub with_attention: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            cases: 200,
            loop_ratio: 0.5,
            numerical_share: 0.0,
            hidden_dim: 16,
            separation: 4.0,
            stddev: 1.0,
            mode_spread: 1.0,
            normal_sentences: (30, 50),
            drift_sentences: (10, 14),
            unit_sentences: (1, 3),
            statement_reps: (5, 8),
            unit_digits: (3, 12),
            with_attention: true,
        }
    }
}

pub fn synth_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<Trace>> {
    if !(0.0..=1.0).contains(&spec.loop_ratio) || !(0.0..=1.0).contains(&spec.numerical_share) {
        return Err(Error::InvalidSpec("ratios must lie in [0, 1]".into()));
    }
    let range_ok = |(lo, hi): (usize, usize)| lo <= hi;
    if ![
        spec.normal_sentences,
        spec.drift_sentences,
        spec.unit_sentences,
        spec.statement_reps,
        spec.unit_digits,
    ]
    .into_iter()
    .all(range_ok)
    {
        return Err(Error::InvalidSpec("every (lo, hi) range needs lo <= hi".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.hidden_dim;
    let normal_mean: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let loop_mean: Vec<f64> = normal_mean
        .iter()
        .zip(&direction)
        .map(|(m, d)| m + spec.separation * spec.stddev * d)
        .collect();

    let n_loop = (spec.cases as f64 * spec.loop_ratio).round() as usize;
    let n_numerical = (n_loop as f64 * spec.numerical_share).round() as usize;
    let mut kinds: Vec<u8> = (0..spec.cases)
        .map(|i| match i {
            i if i < n_numerical => 2,
            i if i < n_loop => 1,
            _ => 0,
        })
        .collect();
    kinds.shuffle(&mut rng);

    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)| rng.random_range(lo..=hi);
    let mut traces = Vec::with_capacity(spec.cases);
    for (i, kind) in kinds.into_iter().enumerate() {
        let case_seed = rng.next_u64();
        let shape = match kind {
            1 => LoopShape::Statement {
                unit_sentences: pick(&mut rng, spec.unit_sentences),
                reps: pick(&mut rng, spec.statement_reps),
            },
            2 => {
                let l = pick(&mut rng, spec.unit_digits).max(1);
                LoopShape::Numerical {
                    unit_digits: l,
                    reps: 500 / l + rng.random_range(2..=10),
                }
            }
            _ => LoopShape::None,
        };
        let mut s = SynthSpec::new(format!("case-{i:04}"), dim, 0.0, shape);
        s.normal_state = StateGenerator { mean: normal_mean.clone(), stddev: spec.stddev };
        s.loop_state = StateGenerator { mean: loop_mean.clone(), stddev: spec.stddev };
        s.mode_spread = spec.mode_spread * spec.stddev;
        s.with_attention = spec.with_attention;
        s.normal_sentences = pick(&mut rng, spec.normal_sentences);
        if shape == LoopShape::None {
            // Match the length of loop traces.
            s.normal_sentences += pick(&mut rng, spec.drift_sentences) + 12;
        } else {
            s.drift_sentences = pick(&mut rng, spec.drift_sentences);
            s.normal_sentences += s.drift_sentences;
        }
        traces.push(synth_trace(&s, case_seed)?);
    }
    Ok(traces)
}

/// Draws one sample per class from `Normal(±shift, 1)` along a random
/// direction. Used by separability experiments.
pub fn two_gaussians(
    per_class: usize,
    dim: usize,
    shift: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut xs = Vec::with_capacity(2 * per_class);
    let mut ys = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let positive = i % 2 == 0;
        let sign = if positive { 1.0 } else { -1.0 };
        xs.push(dir.iter().map(|d| sign * shift * d + unit.sample(&mut rng)).collect());
        ys.push(positive);
    }
    (xs, ys)
}
