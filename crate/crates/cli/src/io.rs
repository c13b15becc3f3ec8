use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use loop_sentinel::eval::{ground_truth, split_cases, GroundTruth};
use loop_sentinel::textual::DetectorConfig;
use loop_sentinel::trace::{parse_trace, LoopLabel, Trace, META_FILE};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{CorpusArgs, SplitArg};
use crate::DataError;

/// Loads one trace directory, or every trace directory directly below
/// `path`, sorted by directory name.
pub fn load_traces(path: &Path) -> anyhow::Result<Vec<Trace>> {
    if path.join(META_FILE).is_file() {
        return Ok(vec![parse_trace(path)?]);
    }
    let entries = fs::read_dir(path).with_context(|| format!("reading {}", path.display()))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.with_context(|| format!("reading {}", path.display()))?;
        let p = entry.path();
        if p.join(META_FILE).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(DataError(format!("no trace directories under {}", path.display())).into());
    }
    dirs.iter().map(|d| Ok(parse_trace(d)?)).collect()
}

pub fn load_trace(path: &Path) -> anyhow::Result<Trace> {
    Ok(parse_trace(path)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(value)?).context("writing standard output")?;
    out.flush().context("writing standard output")
}

/// A corpus with ground truth, narrowed to one split.
pub struct Selection {
    pub traces: Vec<Trace>,
    pub truths: Vec<GroundTruth>,
}

impl Selection {
    /// Traces whose labels are filled in from ground truth, so that loops
    /// found only by the textual detector train like labeled ones.
    pub fn labeled(&self) -> Vec<Trace> {
        self.traces
            .iter()
            .zip(&self.truths)
            .map(|(t, g)| {
                let mut t = t.clone();
                t.meta.label = if g.is_loop() {
                    LoopLabel {
                        loop_type: g.loop_type,
                        onset_token_index: g.onset_token,
                        onset_sentence_index: g.onset_sentence,
                    }
                } else {
                    LoopLabel::none()
                };
                t
            })
            .collect()
    }
}

pub fn select(corpus: &CorpusArgs, split: SplitArg, detector: &DetectorConfig, seed: u64) -> anyhow::Result<Selection> {
    let traces = load_traces(&corpus.corpus)?;
    let truths: Vec<GroundTruth> = traces.iter().map(|t| ground_truth(t, detector)).collect();
    let keep: Vec<usize> = match split {
        SplitArg::All => (0..traces.len()).collect(),
        _ => {
            let is_loop: Vec<bool> = truths.iter().map(GroundTruth::is_loop).collect();
            let s = split_cases(&is_loop, corpus.calibration_cases, corpus.test_per_class, seed)?;
            match split {
                SplitArg::Train => s.train,
                SplitArg::Calibration => s.calibration,
                SplitArg::Test => s.test,
                SplitArg::All => unreachable!(),
            }
        }
    };
    let mut out = Selection {
        traces: Vec::with_capacity(keep.len()),
        truths: Vec::with_capacity(keep.len()),
    };
    let mut traces: Vec<Option<Trace>> = traces.into_iter().map(Some).collect();
    for i in keep {
        out.traces.push(traces[i].take().expect("split indices are distinct"));
        out.truths.push(truths[i]);
    }
    Ok(out)
}
