use std::io::{BufRead, Write};

use anyhow::Context;
use loop_sentinel::classifier::{evaluate_classifier, extract_features, train as fit, ClassifierModel, TrainConfig};
use loop_sentinel::cusum::{
    calibrate as fit_cusum, grid_alphas, monitor_trace, sentence_scores, CusumConfig, LiveMonitor, MonitorEvent,
    GRID_P,
};
use loop_sentinel::eval::{
    ablate_persistence, ablation_csv, best_grid_point, evaluate_scored, ground_truth, grid_search, loop_rates,
    score_cases,
};
use loop_sentinel::graph::{kmeans_fit, semantic_lead, sentence_vectors, GraphExport};
use loop_sentinel::signals::{
    attention_profile, cycle_state_similarity, determinism_shift, high_entropy_window_stats, moving_average,
    signal_series, HighEntropyLexicon, SignalKind,
};
use loop_sentinel::textual::{textual_onset, DetectionEvent, StreamDetector};
use loop_sentinel::trace::synth::{synth_corpus, CorpusSpec};
use loop_sentinel::trace::{write_trace, LoopType, TokenEvent, Trace};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::{
    CalibrateArgs, EvalArgs, GenArgs, GraphArgs, MonitorArgs, PlotArgs, PlotKind, SplitArg, StatsArgs, TrainArgs,
};
use crate::io::{load_trace, load_traces, print_json, read_json, select, write_json, write_text};
use crate::svg::{Chart, Rule, Series};
use crate::{DataError, Outcome};

pub fn gen(a: GenArgs, seed: u64) -> anyhow::Result<Outcome> {
    let spec = CorpusSpec {
        cases: a.cases,
        loop_ratio: a.loop_ratio,
        numerical_share: a.numerical_share,
        hidden_dim: a.hidden_dim,
        separation: a.separation,
        with_attention: !a.no_attention,
        ..CorpusSpec::default()
    };
    let traces = synth_corpus(&spec, seed)?;
    for t in &traces {
        write_trace(t, a.out.join(t.id()))?;
    }
    write_json(&a.out.join("corpus.json"), &json!({ "seed": seed, "spec": spec }))?;
    let loops = traces.iter().filter(|t| t.meta.label.is_loop()).count();
    print_json(&json!({ "out": a.out, "cases": traces.len(), "loops": loops }))?;
    Ok(Outcome::Clean)
}

fn load_model(path: &std::path::Path) -> anyhow::Result<ClassifierModel> {
    let model: ClassifierModel = read_json(path)?;
    model.validate().with_context(|| format!("checking {}", path.display()))?;
    Ok(model)
}

fn load_cusum(path: &std::path::Path) -> anyhow::Result<CusumConfig> {
    let cfg: CusumConfig = read_json(path)?;
    cfg.validate().with_context(|| format!("checking {}", path.display()))?;
    Ok(cfg)
}

pub fn train(a: TrainArgs, seed: u64) -> anyhow::Result<Outcome> {
    let detector = a.detector.config()?;
    let selection = select(&a.corpus, a.split, &detector, seed)?;
    let traces: Vec<Trace> = selection.labeled().into_iter().filter(|t| t.meta.label.is_loop()).collect();
    if traces.is_empty() {
        return Err(DataError("the selected split holds no loop traces to train on".into()).into());
    }
    let features = extract_features(&traces, a.mode.into())?;
    let cfg = TrainConfig {
        l2: a.l2,
        learning_rate: a.learning_rate,
        max_epochs: a.epochs,
        ..TrainConfig::default()
    };
    let outcome = fit(&features, &cfg, seed)?;
    let stats = evaluate_classifier(&outcome.model, &features)?;
    write_json(&a.out, &outcome.model)?;
    print_json(&json!({
        "traces": traces.len(),
        "samples": features.len(),
        "positives": features.positives(),
        "negatives": features.negatives(),
        "epochs": outcome.model.epochs,
        "final_loss": outcome.loss_history.last(),
        "train": stats,
    }))?;
    Ok(Outcome::Clean)
}

pub fn calibrate(a: CalibrateArgs, seed: u64) -> anyhow::Result<Outcome> {
    let detector = a.detector.config()?;
    let model = load_model(&a.model)?;
    let selection = select(&a.corpus, a.split, &detector, seed)?;
    let normals: Vec<Trace> = selection
        .traces
        .into_iter()
        .zip(&selection.truths)
        .filter(|(_, g)| !g.is_loop())
        .map(|(t, _)| t)
        .collect();
    let cfg = fit_cusum(&normals, &model, a.alpha, a.p)?;
    write_json(&a.out, &cfg)?;
    print_json(&json!({ "traces": normals.len(), "cusum": cfg }))?;
    Ok(Outcome::Clean)
}

/// One line of a live token stream: a token event with an optional
/// hidden row.
#[derive(Deserialize)]
struct StreamLine {
    #[serde(flatten)]
    event: TokenEvent,
    #[serde(default)]
    hidden: Option<Vec<f32>>,
}

struct Session<'m, W: Write> {
    detector: StreamDetector,
    monitor: Option<LiveMonitor<'m>>,
    out: W,
    scores: bool,
}

impl<W: Write> Session<'_, W> {
    fn emit(&mut self, detections: Vec<DetectionEvent>, monitored: Vec<MonitorEvent>) -> anyhow::Result<()> {
        for d in detections {
            writeln!(self.out, "{}", serde_json::to_string(&d)?)?;
        }
        for m in monitored {
            if self.scores || matches!(m, MonitorEvent::Alert { .. }) {
                writeln!(self.out, "{}", serde_json::to_string(&m)?)?;
            }
        }
        Ok(())
    }

    fn feed(&mut self, event: &TokenEvent, hidden: Option<&[f32]>) -> anyhow::Result<()> {
        event
            .validate()
            .map_err(|m| DataError(format!("token {}: {m}", event.index)))?;
        let detections = self.detector.feed(event)?;
        let monitored = match self.monitor.as_mut() {
            Some(m) => {
                let row = hidden.ok_or_else(|| DataError(format!("token {} carries no hidden vector", event.index)))?;
                m.feed(&event.text, row)?
            }
            None => Vec::new(),
        };
        self.emit(detections, monitored)
    }

    fn finish(mut self) -> anyhow::Result<bool> {
        let detector = std::mem::replace(&mut self.detector, StreamDetector::new(Default::default()));
        let detections = detector.finish();
        let (monitored, alert) = match self.monitor.take() {
            Some(m) => m.finish()?,
            None => (Vec::new(), None),
        };
        self.emit(detections, monitored)?;
        self.out.flush()?;
        Ok(alert.is_some())
    }
}

pub fn monitor(a: MonitorArgs) -> anyhow::Result<Outcome> {
    let detector = a.detector.config()?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    let cusum = a.cusum.as_deref().map(load_cusum).transpose()?;
    let live = match (&model, cusum) {
        (Some(m), Some(c)) => Some(LiveMonitor::new(m, c)?),
        _ => None,
    };
    let stdout = std::io::stdout();
    let mut session = Session {
        detector: StreamDetector::new(detector),
        monitor: live,
        out: stdout.lock(),
        scores: !a.no_scores,
    };

    if let Some(dir) = &a.trace {
        let trace = load_trace(dir)?;
        if session.monitor.is_some() {
            trace.require_hidden()?;
        }
        for (i, event) in trace.tokens.iter().enumerate() {
            session.feed(event, trace.hidden.as_ref().map(|h| h.row(i)))?;
        }
    } else {
        let stdin = std::io::stdin();
        for (n, line) in stdin.lock().lines().enumerate() {
            let line = line.context("reading standard input")?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StreamLine =
                serde_json::from_str(&line).with_context(|| format!("standard input line {}", n + 1))?;
            session.feed(&parsed.event, parsed.hidden.as_deref())?;
        }
    }

    Ok(if session.finish()? { Outcome::Alert } else { Outcome::Clean })
}

fn with_p(report: &loop_sentinel::eval::EvalReport, p: usize) -> Value {
    let mut v = report.to_json_value();
    v["p"] = json!(p);
    v
}

pub fn eval(a: EvalArgs, seed: u64) -> anyhow::Result<Outcome> {
    let detector = a.detector.config()?;
    let model = load_model(&a.model)?;
    let cfg = load_cusum(&a.cusum)?;
    let selection = select(&a.corpus, a.split, &detector, seed)?;
    let cases = score_cases(&selection.traces, &model, &detector)?;
    let (report, per_case) = evaluate_scored(&cases, &cfg)?;
    let ablation = ablate_persistence(&cases, &cfg, &a.ablate)?;

    let mut result = json!({
        "cusum": cfg,
        "report": report.to_json_value(),
        "ablation": ablation.iter().map(|r| with_p(&r.report, r.p)).collect::<Vec<_>>(),
        "loop_rates": loop_rates(&selection.truths),
    });
    if a.grid {
        let calibration = select(&a.corpus, SplitArg::Calibration, &detector, seed)?;
        let streams = calibration
            .traces
            .iter()
            .zip(&calibration.truths)
            .filter(|(_, g)| !g.is_loop())
            .map(|(t, _)| Ok(sentence_scores(t, &model)?.iter().map(|s| s.x).collect()))
            .collect::<anyhow::Result<Vec<Vec<f64>>>>()?;
        let points = grid_search(&streams, &cases, &GRID_P, &grid_alphas())?;
        result["grid"] = points
            .iter()
            .map(|g| json!({ "cusum": g.config, "report": g.report.to_json_value() }))
            .collect();
        result["best"] = best_grid_point(&points)
            .map(|g| json!({ "cusum": g.config, "report": g.report.to_json_value() }))
            .unwrap_or(Value::Null);
    }
    if let Some(csv) = &a.csv {
        write_text(csv, &ablation_csv(&ablation))?;
    }
    print_json(&result)?;
    if let Some(out) = &a.out {
        result["cases"] = serde_json::to_value(&per_case)?;
        write_json(out, &result)?;
    }
    Ok(Outcome::Clean)
}

pub fn graph(a: GraphArgs, seed: u64) -> anyhow::Result<Outcome> {
    let detector = a.detector.config()?;
    let trace = load_trace(&a.trace)?;
    let vectors = sentence_vectors(&trace)?;
    let model = kmeans_fit(&vectors, a.k, seed, a.max_iter)?;
    let (report, trajectory) = semantic_lead(&trace, &model, &detector, a.min_reps)?;
    if let Some(out) = &a.out {
        write_json(out, &GraphExport::new(&model, &trajectory, a.centroids))?;
    }
    print_json(&json!({
        "trace_id": trace.id(),
        "sentences": trajectory.labels.len(),
        "k": model.k,
        "inertia": model.inertia,
        "edges": trajectory.edge_count(),
        "cycle": report,
    }))?;
    Ok(Outcome::Clean)
}

pub fn stats(a: StatsArgs) -> anyhow::Result<Outcome> {
    let detector = a.detector.config()?;
    let lexicon = match &a.lexicon {
        Some(tokens) => HighEntropyLexicon::new(tokens.iter().map(String::as_str))?,
        None => HighEntropyLexicon::default(),
    };
    let traces = load_traces(&a.corpus)?;
    let windows = high_entropy_window_stats(&traces, &lexicon, a.onset_window, a.stable_window);

    let mut per_trace = Vec::with_capacity(traces.len());
    for trace in &traces {
        let truth = ground_truth(trace, &detector);
        let entropy = signal_series(trace, SignalKind::EntropyNats)?.values;
        let shift = determinism_shift(&entropy, a.shift_window, a.drop_ratio).ok().flatten();
        let attention = match truth.onset_token {
            Some(onset) if trace.has_attention() => Some(attention_profile(trace, onset)?),
            _ => None,
        };
        let cycles = match textual_onset(trace, &detector) {
            Some(onset) if onset.loop_type == LoopType::Statement && trace.hidden.is_some() => {
                cycle_state_similarity(trace, &onset).ok()
            }
            _ => None,
        };
        per_trace.push(json!({
            "trace_id": trace.id(),
            "truth": truth,
            "determinism_shift": shift,
            "attention": attention,
            "cycle_similarity": cycles,
        }));
    }
    let result = json!({ "windows": windows, "traces": per_trace });
    print_json(&result)?;
    if let Some(out) = &a.out {
        write_json(out, &result)?;
    }
    Ok(Outcome::Clean)
}

pub fn plot(a: PlotArgs) -> anyhow::Result<Outcome> {
    let trace = load_trace(&a.trace)?;
    let truth = ground_truth(&trace, &Default::default());
    let smooth = |kind: SignalKind| -> anyhow::Result<Vec<f64>> {
        Ok(moving_average(&signal_series(&trace, kind)?.values, a.smooth))
    };
    let title = format!("{} ({})", trace.id(), truth.loop_type);

    let svg = match a.kind {
        PlotKind::Scores => {
            let model = load_model(a.model.as_deref().expect("required by the parser"))?;
            let cfg = load_cusum(a.cusum.as_deref().expect("required by the parser"))?;
            let run = monitor_trace(&trace, &model, &cfg)?;
            let scores = run.scores();
            let mut chart = Chart {
                title: &title,
                x_label: "sentence",
                series: vec![
                    Series { name: "score x", values: &scores, color: "#1f77b4" },
                    Series { name: "CUSUM S", values: &run.statistics, color: "#d62728" },
                ],
                levels: vec![Rule { at: cfg.h, label: "threshold h", color: "#d62728" }],
                ..Chart::default()
            };
            if let Some(onset) = truth.onset_sentence {
                chart.marks.push(Rule { at: onset as f64, label: "onset", color: "#555555" });
            }
            if let Some(alert) = run.alert {
                chart.marks.push(Rule { at: alert.sentence_index as f64, label: "alert", color: "#ff7f0e" });
            }
            chart.render()
        }
        PlotKind::Entropy => {
            let entropy = smooth(SignalKind::EntropyNats)?;
            let top1 = smooth(SignalKind::Top1Prob)?;
            let mut chart = Chart {
                title: &title,
                x_label: "token",
                series: vec![
                    Series { name: "entropy (nats)", values: &entropy, color: "#1f77b4" },
                    Series { name: "top-1 prob", values: &top1, color: "#2ca02c" },
                ],
                ..Chart::default()
            };
            if let Some(onset) = truth.onset_token {
                chart.marks.push(Rule { at: onset as f64, label: "onset", color: "#555555" });
            }
            chart.render()
        }
        PlotKind::Attention => {
            let sink = smooth(SignalKind::AttentionSinkMass)?;
            let recent = smooth(SignalKind::AttentionRecentMass)?;
            let marked = smooth(SignalKind::MarkedMass)?;
            let mut chart = Chart {
                title: &title,
                x_label: "token",
                series: vec![
                    Series { name: "sink mass", values: &sink, color: "#9467bd" },
                    Series { name: "recent mass", values: &recent, color: "#1f77b4" },
                    Series { name: "marked mass", values: &marked, color: "#ff7f0e" },
                ],
                ..Chart::default()
            };
            if let Some(onset) = truth.onset_token {
                chart.marks.push(Rule { at: onset as f64, label: "onset", color: "#555555" });
            }
            chart.render()
        }
    };
    write_text(&a.out, &svg)?;
    print_json(&json!({ "out": a.out, "kind": format!("{:?}", a.kind).to_lowercase() }))?;
    Ok(Outcome::Clean)
}
