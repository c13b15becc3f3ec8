//! Reasoning graphs: K-means over sentence states and the label trajectory
//! they induce.
//!
//! A semantic cycle is a periodic tail of the cluster-label sequence. It
//! usually starts before the text itself repeats, and the difference
//! between the two onsets is the semantic lead.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textual::{detect_statement_loop, DetectorConfig, TailPeriods};
use crate::trace::{segment_sentences, Trace};

pub const DEFAULT_K: usize = 200;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_MIN_REPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment pass.
    pub inertia_history: Vec<f64>,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Nearest centroid; ties go to the lowest id.
    pub fn assign(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(v, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

fn check_dims(vectors: &[Vec<f64>], dim: usize) -> Result<()> {
    match vectors.iter().position(|v| v.len() != dim) {
        Some(i) => Err(Error::DimensionMismatch(format!(
            "vector {i} has length {}, expected {dim}",
            vectors[i].len()
        ))),
        None => Ok(()),
    }
}

fn distinct_count(vectors: &[Vec<f64>]) -> usize {
    vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// k-means++ seeding followed by Lloyd iterations. `k` is clamped to the
/// number of distinct vectors.
pub fn kmeans_fit(vectors: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    check_dims(vectors, first.len())?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let k = k.min(distinct_count(vectors));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![vectors[rng.random_range(0..vectors.len())].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("k does not exceed distinct vectors");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(vectors[pick].clone());
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &centroids[centroids.len() - 1]));
        }
    }

    let mut model = ClusterModel {
        k,
        centroids,
        inertia: f64::INFINITY,
        inertia_history: Vec::new(),
        seed,
    };
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..max_iter.max(1) {
        let assigned: Vec<(usize, f64)> = vectors.iter().map(|v| model.assign(v)).collect();
        let inertia = assigned.iter().map(|a| a.1).sum();
        model.inertia = inertia;
        model.inertia_history.push(inertia);
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if new_labels == labels {
            break;
        }
        labels = new_labels;

        let dim = model.dim();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        let mut taken = HashSet::new();
        for j in 0..k {
            if counts[j] > 0 {
                model.centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // Reseed to the point worst served by its current centroid.
                let far = (0..vectors.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| assigned[a].1.total_cmp(&assigned[b].1).then(b.cmp(&a)))
                    .expect("more points than clusters");
                taken.insert(far);
                model.centroids[j] = vectors[far].clone();
            }
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<usize>,
    pub edges: BTreeMap<(usize, usize), usize>,
}

impl Trajectory {
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let mut edges = BTreeMap::new();
        for w in labels.windows(2) {
            *edges.entry((w[0], w[1])).or_insert(0) += 1;
        }
        Self { labels, edges }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().sum()
    }

    pub fn edge_list(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|(&(src, dst), &count)| Edge { src, dst, count })
            .collect()
    }
}

pub fn build_trajectory(model: &ClusterModel, sentence_vectors: &[Vec<f64>]) -> Result<Trajectory> {
    check_dims(sentence_vectors, model.dim())?;
    Ok(Trajectory::from_labels(
        sentence_vectors.iter().map(|v| model.assign(v).0).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCycle {
    pub period: usize,
    pub reps: usize,
    /// First sentence of the periodic tail.
    pub start: usize,
}

/// The longest periodic tail of the label sequence with at least
/// `min_reps` full repetitions.
pub fn detect_cycle(labels: &[usize], min_reps: usize) -> Option<LabelCycle> {
    TailPeriods::new(labels)
        .earliest_start(min_reps.max(2))
        .map(|r| LabelCycle {
            period: r.unit_len,
            reps: r.reps,
            start: r.tail_start,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub period: Option<usize>,
    pub reps: Option<usize>,
    pub semantic_onset_sentence: Option<usize>,
    pub textual_onset_sentence: Option<usize>,
    /// Textual minus semantic onset. Negative leads are kept.
    pub lead_sentences: Option<i64>,
}

/// Mean hidden vector of every sentence.
pub fn sentence_vectors(trace: &Trace) -> Result<Vec<Vec<f64>>> {
    trace.require_hidden()?;
    Ok(segment_sentences(trace)
        .into_iter()
        .map(|s| s.mean_hidden.expect("hidden present"))
        .collect())
}

pub fn semantic_lead(
    trace: &Trace,
    model: &ClusterModel,
    detector: &DetectorConfig,
    min_reps: usize,
) -> Result<(CycleReport, Trajectory)> {
    trace.require_hidden()?;
    let sentences = segment_sentences(trace);
    let vectors: Vec<Vec<f64>> = sentences
        .iter()
        .map(|s| s.mean_hidden.clone().expect("hidden present"))
        .collect();
    let trajectory = build_trajectory(model, &vectors)?;
    let cycle = detect_cycle(&trajectory.labels, min_reps);
    let textual = detect_statement_loop(&sentences, detector).and_then(|o| o.onset_sentence_index);
    let semantic = cycle.map(|c| c.start);
    let report = CycleReport {
        period: cycle.map(|c| c.period),
        reps: cycle.map(|c| c.reps),
        semantic_onset_sentence: semantic,
        textual_onset_sentence: textual,
        lead_sentences: semantic.zip(textual).map(|(s, t)| t as i64 - s as i64),
    };
    Ok((report, trajectory))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<Vec<f64>>>,
}

impl GraphExport {
    pub fn new(model: &ClusterModel, trajectory: &Trajectory, with_centroids: bool) -> Self {
        let mut counts = vec![0; model.k];
        for &l in &trajectory.labels {
            counts[l] += 1;
        }
        Self {
            nodes: counts.into_iter().enumerate().map(|(id, count)| Node { id, count }).collect(),
            edges: trajectory.edge_list(),
            labels: trajectory.labels.clone(),
            centroids: with_centroids.then(|| model.centroids.clone()),
        }
    }
}

/// Projection onto the two leading principal components, found by power
/// iteration with deflation.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let dim = first.len();
    check_dims(vectors, dim)?;
    let n = vectors.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for v in &centered {
        for a in 0..dim {
            for b in 0..dim {
                cov[a][b] += v[a] * v[b] / n;
            }
        }
    }

    let mut components: Vec<Vec<f64>> = Vec::new();
    for c in 0..2 {
        let mut u: Vec<f64> = (0..dim).map(|j| 1.0 + (j + c) as f64 * 0.01).collect();
        for _ in 0..500 {
            let mut next: Vec<f64> = cov.iter().map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
            for prev in &components {
                let dot: f64 = next.iter().zip(prev).map(|(a, b)| a * b).sum();
                next.iter_mut().zip(prev).for_each(|(x, p)| *x -= dot * p);
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                u = vec![0.0; dim];
                break;
            }
            next.iter_mut().for_each(|x| *x /= norm);
            let change: f64 = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).sum();
            u = next;
            if change < 1e-12 {
                break;
            }
        }
        components.push(u);
    }
    Ok(centered
        .iter()
        .map(|v| {
            let proj = |c: &Vec<f64>| v.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&components[0]), proj(&components[1])]
        })
        .collect())
}
