//! Linear hidden-state probe.
//!
//! The score of a hidden vector is `x = w · standardize(h) + b`, and
//! `x > 0` reads as "entering a loop state". Training is deterministic
//! full-batch gradient descent on a class-weighted logistic loss with an
//! L2 penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{segment_sentences, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One mean hidden vector per sentence.
    #[default]
    Statement,
    /// One hidden vector per token.
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub mode: FeatureMode,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    /// `true` for loop-state samples.
    pub labels: Vec<bool>,
}

impl FeatureSet {
    pub fn new(mode: FeatureMode, vectors: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(bad) = vectors.iter().position(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "vector {bad} has length {}, expected {dim}",
                vectors[bad].len()
            )));
        }
        Ok(Self { mode, dim, vectors, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn extend(&mut self, other: FeatureSet) -> Result<()> {
        if !self.is_empty() && !other.is_empty() && other.dim != self.dim {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.dim, other.dim)));
        }
        if self.is_empty() {
            self.dim = other.dim;
        }
        self.vectors.extend(other.vectors);
        self.labels.extend(other.labels);
        Ok(())
    }
}

/// Builds labeled samples. Loop traces are split at their onset; normal
/// traces only contribute negatives.
pub fn extract_features(traces: &[Trace], mode: FeatureMode) -> Result<FeatureSet> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for trace in traces {
        let hidden = trace.require_hidden()?;
        let label = &trace.meta.label;
        let onset = if label.is_loop() {
            let onset = match mode {
                FeatureMode::Statement => label.onset_sentence_index,
                FeatureMode::Numerical => label.onset_token_index,
            };
            Some(onset.ok_or_else(|| Error::MissingOnsetLabel(trace.id().to_string()))?)
        } else {
            None
        };
        let is_loop = |i: usize| onset.is_some_and(|o| i >= o);
        match mode {
            FeatureMode::Statement => {
                for s in segment_sentences(trace) {
                    labels.push(is_loop(s.sentence_index));
                    vectors.push(s.mean_hidden.expect("hidden present"));
                }
            }
            FeatureMode::Numerical => {
                for (i, row) in hidden.rows().enumerate() {
                    labels.push(is_loop(i));
                    vectors.push(row.iter().map(|&v| f64::from(v)).collect());
                }
            }
        }
    }
    FeatureSet::new(mode, vectors, labels)
}

/// Per-dimension z-score transform. Dimensions without variance are
/// dropped: they map to 0 and carry no weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(rename = "std_mean")]
    pub mean: Vec<f64>,
    #[serde(rename = "std_scale")]
    pub scale: Vec<f64>,
    pub dropped_dims: Vec<usize>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            dropped_dims: Vec::new(),
        }
    }

    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptyInput)?;
        let dim = first.len();
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for v in vectors {
            var.iter_mut()
                .zip(v.iter().zip(&mean))
                .for_each(|(s, (x, m))| *s += (x - m) * (x - m));
        }
        let mut scale = Vec::with_capacity(dim);
        let mut dropped_dims = Vec::new();
        for (j, (s, m)) in var.iter().zip(&mean).enumerate() {
            let sd = (s / n).sqrt();
            if sd.is_finite() && sd > 1e-12 * m.abs().max(1.0) {
                scale.push(sd);
            } else {
                scale.push(1.0);
                dropped_dims.push(j);
            }
        }
        Ok(Self { mean, scale, dropped_dims })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, h: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = h
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        for &j in &self.dropped_dims {
            z[j] = 0.0;
        }
        z
    }

    pub fn unstandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    /// Weight samples by inverse class frequency.
    pub balance_classes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.1,
            max_epochs: 500,
            tolerance: 1e-8,
            balance_classes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub hidden_dim: usize,
    pub w: Vec<f64>,
    pub b: f64,
    #[serde(flatten)]
    pub standardizer: Standardizer,
    pub seed: u64,
    #[serde(default)]
    pub epochs: usize,
    #[serde(default)]
    pub l2: f64,
}

impl ClassifierModel {
    /// A model with the given weights acting on unscaled inputs.
    pub fn from_weights(w: Vec<f64>, b: f64) -> Self {
        let dim = w.len();
        Self {
            hidden_dim: dim,
            w,
            b,
            standardizer: Standardizer::identity(dim),
            seed: 0,
            epochs: 0,
            l2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.hidden_dim;
        let s = &self.standardizer;
        if self.w.len() != d || s.mean.len() != d || s.scale.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "model vectors must have length hidden_dim = {d}"
            )));
        }
        if s.dropped_dims.iter().any(|&j| j >= d) {
            return Err(Error::InvalidConfig("dropped dimension out of range".into()));
        }
        let finite = self.w.iter().chain(&s.mean).all(|v| v.is_finite()) && self.b.is_finite();
        if !finite || s.scale.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("model entries must be finite, scales positive".into()));
        }
        Ok(())
    }

    pub fn score(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.hidden_dim {
            return Err(Error::DimensionMismatch(format!(
                "hidden vector has length {}, model expects {}",
                h.len(),
                self.hidden_dim
            )));
        }
        Ok(linear(&self.w, self.b, &self.standardizer.standardize(h)))
    }

    pub fn score_f32(&self, h: &[f32]) -> Result<f64> {
        let h: Vec<f64> = h.iter().map(|&v| f64::from(v)).collect();
        self.score(&h)
    }
}

fn linear(w: &[f64], b: f64, z: &[f64]) -> f64 {
    w.iter().zip(z).map(|(w, z)| w * z).sum::<f64>() + b
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    /// Objective after every epoch, starting with the initial value.
    pub loss_history: Vec<f64>,
    /// Scores of the training samples under the final model.
    pub train_scores: Vec<f64>,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct Objective<'a> {
    z: &'a [Vec<f64>],
    y: Vec<f64>,
    weight: Vec<f64>,
    total_weight: f64,
    l2: f64,
}

impl Objective<'_> {
    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let data: f64 = self
            .z
            .iter()
            .zip(self.y.iter().zip(&self.weight))
            .map(|(z, (y, c))| c * softplus(-y * linear(w, b, z)))
            .sum();
        data / self.total_weight + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (z, (y, c)) in self.z.iter().zip(self.y.iter().zip(&self.weight)) {
            let coef = -c * y * sigmoid(-y * linear(w, b, z)) / self.total_weight;
            gw.iter_mut().zip(z).for_each(|(g, z)| *g += coef * z);
            gb += coef;
        }
        gw.iter_mut().zip(w).for_each(|(g, w)| *g += self.l2 * w);
        (gw, gb)
    }
}

/// Fits the probe. The weights start at zero, so `seed` only labels the
/// run; the result is identical for identical inputs.
pub fn train(features: &FeatureSet, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let n_pos = features.positives();
    let n_neg = features.negatives();
    if n_pos == 0 {
        return Err(Error::SingleClass("no loop-state samples"));
    }
    if n_neg == 0 {
        return Err(Error::SingleClass("no normal samples"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.l2 >= 0.0) {
        return Err(Error::InvalidConfig("learning rate must be positive, l2 non-negative".into()));
    }

    let standardizer = Standardizer::fit(&features.vectors)?;
    let z: Vec<Vec<f64>> = features.vectors.iter().map(|v| standardizer.standardize(v)).collect();
    let n = features.len() as f64;
    let (w_pos, w_neg) = if cfg.balance_classes {
        (n / (2.0 * n_pos as f64), n / (2.0 * n_neg as f64))
    } else {
        (1.0, 1.0)
    };
    let weight: Vec<f64> = features.labels.iter().map(|&l| if l { w_pos } else { w_neg }).collect();
    let objective = Objective {
        z: &z,
        y: features.labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect(),
        total_weight: weight.iter().sum(),
        weight,
        l2: cfg.l2,
    };

    let mut w = vec![0.0; features.dim];
    let mut b = 0.0;
    let mut lr = cfg.learning_rate;
    let mut loss = objective.loss(&w, b);
    let mut history = vec![loss];
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        let (gw, gb) = objective.gradient(&w, b);
        let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(w, g)| w - lr * g).collect();
        let cand_b = b - lr * gb;
        let cand_loss = objective.loss(&cand_w, cand_b);
        if !cand_loss.is_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        if cand_loss > loss {
            lr *= 0.5;
            history.push(loss);
            continue;
        }
        let delta = loss - cand_loss;
        w = cand_w;
        b = cand_b;
        loss = cand_loss;
        history.push(loss);
        if delta < cfg.tolerance {
            break;
        }
    }

    let train_scores = z.iter().map(|z| linear(&w, b, z)).collect();
    let model = ClassifierModel {
        hidden_dim: features.dim,
        w,
        b,
        standardizer,
        seed,
        epochs,
        l2: cfg.l2,
    };
    Ok(TrainOutcome {
        model,
        loss_history: history,
        train_scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityStats {
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
}

/// Area under the ROC curve by the Mann–Whitney statistic, ties counted
/// half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("auc needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; a tie group shares the average rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn separability(scores: &[f64], labels: &[bool]) -> Result<SeparabilityStats> {
    let auc = auc(scores, labels)?;
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&x, &l) in scores.iter().zip(labels) {
        let predicted = x > 0.0;
        match (predicted, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        if predicted == l {
            correct += 1;
        }
    }
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    Ok(SeparabilityStats {
        acc: correct as f64 / scores.len() as f64,
        f1,
        auc,
    })
}

pub fn evaluate_classifier(model: &ClassifierModel, features: &FeatureSet) -> Result<SeparabilityStats> {
    let scores = features
        .vectors
        .iter()
        .map(|v| model.score(v))
        .collect::<Result<Vec<_>>>()?;
    separability(&scores, &features.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::synth::{synth_trace, two_gaussians, LoopShape, SynthSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    fn toy() -> FeatureSet {
        FeatureSet::new(FeatureMode::Statement, vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![false, true]).unwrap()
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let out = train(&toy(), &TrainConfig::default(), 1).unwrap();
        let stats = evaluate_classifier(&out.model, &toy()).unwrap();
        assert_eq!(stats.acc, 1.0);
        assert_eq!(out.model.standardizer.dropped_dims, vec![1]);
        assert_eq!(out.model.w[1], 0.0);
    }

    #[test]
    fn one_class_is_rejected() {
        let fs = FeatureSet::new(FeatureMode::Statement, vec![vec![1.0]; 3], vec![true; 3]).unwrap();
        assert!(matches!(train(&fs, &TrainConfig::default(), 0), Err(Error::SingleClass(_))));
        assert!(matches!(evaluate_classifier(&ClassifierModel::from_weights(vec![1.0], 0.0), &fs), Err(Error::SingleClass(_))));
    }

    #[test]
    fn zero_model_scores_zero() {
        let m = ClassifierModel::from_weights(vec![0.0; 3], 0.0);
        assert_eq!(m.score(&[5.0, -2.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn dot_product_arithmetic() {
        let m = ClassifierModel::from_weights(vec![1.0, 0.0], -1.0);
        assert_eq!(m.score(&[3.0, 7.0]).unwrap(), 2.0);
        assert!(matches!(m.score(&[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn training_scores_are_reproduced_exactly() {
        let (x, y) = two_gaussians(100, 6, 1.0, 3);
        let fs = FeatureSet::new(FeatureMode::Statement, x, y).unwrap();
        let out = train(&fs, &TrainConfig::default(), 3).unwrap();
        for (v, &s) in fs.vectors.iter().zip(&out.train_scores) {
            assert_eq!(out.model.score(v).unwrap().to_bits(), s.to_bits());
        }
        let again = train(&fs, &TrainConfig::default(), 3).unwrap();
        assert_eq!(again.model, out.model);
    }

    #[test]
    fn loss_never_increases() {
        let (x, y) = two_gaussians(200, 4, 0.5, 9);
        let fs = FeatureSet::new(FeatureMode::Statement, x, y).unwrap();
        let cfg = TrainConfig { learning_rate: 50.0, ..TrainConfig::default() };
        let out = train(&fs, &cfg, 0).unwrap();
        assert!(out.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn model_json_has_documented_keys() {
        let out = train(&toy(), &TrainConfig::default(), 5).unwrap();
        let v = serde_json::to_value(&out.model).unwrap();
        for key in ["hidden_dim", "w", "b", "std_mean", "std_scale", "dropped_dims", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: ClassifierModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, out.model);
    }

    #[test]
    fn perfect_scores() {
        let s = separability(&[1.0, 1.0, -1.0, -1.0], &[true, true, false, false]).unwrap();
        assert_eq!((s.acc, s.f1, s.auc), (1.0, 1.0, 1.0));
    }

    #[test]
    fn random_scores_have_chance_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
        let a = auc(&scores, &labels).unwrap();
        assert!((a - 0.5).abs() <= 0.02, "{a}");
    }

    #[test]
    fn statement_features_split_at_onset() {
        let mut spec = SynthSpec::new("loop", 4, 2.0, LoopShape::Statement { unit_sentences: 1, reps: 5 });
        spec.normal_sentences = 5;
        spec.drift_sentences = 0;
        let looped = synth_trace(&spec, 1).unwrap();
        let mut spec = SynthSpec::new("normal", 4, 2.0, LoopShape::None);
        spec.normal_sentences = 8;
        spec.drift_sentences = 0;
        let normal = synth_trace(&spec, 2).unwrap();
        let fs = extract_features(&[looped, normal], FeatureMode::Statement).unwrap();
        assert_eq!((fs.positives(), fs.negatives()), (5, 13));
    }

    #[test]
    fn numerical_features_follow_token_onset() {
        let spec = SynthSpec::new("num", 3, 2.0, LoopShape::Numerical { unit_digits: 3, reps: 10 });
        let trace = synth_trace(&spec, 4).unwrap();
        let onset = trace.meta.label.onset_token_index.unwrap();
        let fs = extract_features(std::slice::from_ref(&trace), FeatureMode::Numerical).unwrap();
        assert_eq!(fs.len(), trace.len());
        assert!(fs.labels.iter().enumerate().all(|(i, &l)| l == (i >= onset)));
    }

    #[test]
    fn missing_hidden_is_reported() {
        let spec = SynthSpec::new("bare", 0, 0.0, LoopShape::None);
        let trace = synth_trace(&spec, 0).unwrap();
        assert!(matches!(extract_features(&[trace], FeatureMode::Statement), Err(Error::MissingHidden(_))));
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(
            data in prop::collection::vec((-5i32..5, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
            let shifted: Vec<f64> = scores.iter().map(|x| 2.0 * x + 3.0).collect();
            prop_assert_eq!(auc(&shifted, &labels).unwrap(), a);
        }

        #[test]
        fn standardization_round_trips(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)
        ) {
            let st = Standardizer::fit(&rows).unwrap();
            prop_assume!(st.dropped_dims.is_empty());
            for r in &rows {
                let back = st.unstandardize(&st.standardize(r));
                for (a, b) in back.iter().zip(r) {
                    prop_assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }
}
