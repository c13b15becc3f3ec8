use super::{check_numerical, check_statement, DetectionEvent, DetectorConfig, Fired, FingerprintTable, NumericalUnit};
use crate::error::{Error, Result};
use crate::trace::{Segmenter, TokenEvent};

const RUN_SEPARATORS: [char; 3] = ['.', ',', ' '];

#[derive(Debug, Default)]
struct DigitRunState {
    symbols: Vec<u32>,
    symbol_tokens: Vec<usize>,
    checked: usize,
    /// A single separator was seen after a digit; one more digit continues
    /// the run, anything else ends it.
    separator_pending: bool,
}

impl DigitRunState {
    fn active(&self) -> bool {
        !self.symbols.is_empty()
    }
}

/// Online form of the textual detectors. Feed tokens in order; each event
/// kind is reported at most once.
#[derive(Debug)]
pub struct StreamDetector {
    cfg: DetectorConfig,
    next_index: usize,
    segmenter: Segmenter,
    table: FingerprintTable,
    fingerprints: Vec<u32>,
    sentence_starts: Vec<usize>,
    run: DigitRunState,
    numerical_fired: Fired,
    statement_fired: Fired,
}

impl StreamDetector {
    pub fn new(cfg: DetectorConfig) -> Self {
        Self {
            cfg,
            next_index: 0,
            segmenter: Segmenter::new(),
            table: FingerprintTable::default(),
            fingerprints: Vec::new(),
            sentence_starts: Vec::new(),
            run: DigitRunState::default(),
            numerical_fired: Fired::default(),
            statement_fired: Fired::default(),
        }
    }

    pub fn tokens_seen(&self) -> usize {
        self.next_index
    }

    pub fn feed(&mut self, event: &TokenEvent) -> Result<Vec<DetectionEvent>> {
        if event.index != self.next_index {
            return Err(Error::OutOfOrderEvent {
                expected: self.next_index,
                got: event.index,
            });
        }
        let t = event.index;
        self.next_index += 1;
        let mut out = Vec::new();

        for ch in event.text.chars() {
            if ch.is_ascii_digit() {
                let symbol = match self.cfg.numerical_unit {
                    NumericalUnit::Characters => Some(ch as u32 - '0' as u32),
                    NumericalUnit::Tokens => {
                        (self.run.symbol_tokens.last() != Some(&t)).then_some(event.token_id)
                    }
                };
                if let Some(symbol) = symbol {
                    self.run.symbols.push(symbol);
                    self.run.symbol_tokens.push(t);
                }
                self.run.separator_pending = false;
            } else if self.run.active() && !self.run.separator_pending && RUN_SEPARATORS.contains(&ch) {
                self.run.separator_pending = true;
            } else if self.run.active() {
                out.extend(self.close_run());
            }
        }
        if self.run.active() {
            out.extend(self.check_run());
        }

        for sentence in self.segmenter.push(&event.text) {
            out.extend(self.close_sentence(sentence.start, &sentence.text));
        }
        Ok(out)
    }

    /// Ends the stream, flushing the last digit run and sentence.
    pub fn finish(mut self) -> Vec<DetectionEvent> {
        let mut out = self.close_run();
        let segmenter = std::mem::take(&mut self.segmenter);
        for sentence in segmenter.finish() {
            out.extend(self.close_sentence(sentence.start, &sentence.text));
        }
        out
    }

    fn check_run(&mut self) -> Vec<DetectionEvent> {
        if self.run.symbols.len() == self.run.checked {
            return Vec::new();
        }
        self.run.checked = self.run.symbols.len();
        check_numerical(&self.run.symbols, &self.run.symbol_tokens, &self.cfg, &mut self.numerical_fired)
    }

    fn close_run(&mut self) -> Vec<DetectionEvent> {
        let out = if self.run.active() { self.check_run() } else { Vec::new() };
        self.run = DigitRunState::default();
        out
    }

    fn close_sentence(&mut self, start: usize, text: &str) -> Vec<DetectionEvent> {
        self.fingerprints.push(self.table.fingerprint(text));
        self.sentence_starts.push(start);
        check_statement(&self.fingerprints, &self.sentence_starts, &self.cfg, &mut self.statement_fired)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{detect_events, DetectionKind};
    use super::*;
    use crate::trace::synth::{synth_trace, LoopShape, SynthSpec};
    use crate::trace::Trace;
    use proptest::prelude::*;

    fn stream_events(trace: &Trace, cfg: DetectorConfig) -> Vec<DetectionEvent> {
        let mut det = StreamDetector::new(cfg);
        let mut out = Vec::new();
        for tok in &trace.tokens {
            out.extend(det.feed(tok).unwrap());
        }
        out.extend(det.finish());
        out.sort();
        out
    }

    fn offline_events(trace: &Trace, cfg: DetectorConfig) -> Vec<DetectionEvent> {
        let mut out = detect_events(trace, &cfg);
        out.sort();
        out
    }

    fn zeros(n: usize) -> Trace {
        let mut pieces = vec!["Result".to_string(), " =".into(), " ".into()];
        pieces.extend(std::iter::repeat_n("0".to_string(), n));
        super::super::tests::trace_of(&pieces)
    }

    #[test]
    fn onset_fires_on_the_completing_token() {
        let trace = zeros(501);
        let mut det = StreamDetector::new(DetectorConfig::default());
        let mut onset_at = None;
        for tok in &trace.tokens {
            let events = det.feed(tok).unwrap();
            if events.iter().any(|e| e.kind == DetectionKind::NumericalOnset) {
                onset_at = Some(tok.index);
            }
        }
        // three prefix tokens, then the 501st zero
        assert_eq!(onset_at, Some(3 + 500));
        assert_eq!(stream_events(&trace, DetectorConfig::default()), offline_events(&trace, DetectorConfig::default()));
    }

    #[test]
    fn out_of_order_is_rejected() {
        let trace = zeros(3);
        let mut det = StreamDetector::new(DetectorConfig::default());
        det.feed(&trace.tokens[0]).unwrap();
        let err = det.feed(&trace.tokens[2]).unwrap_err();
        assert!(matches!(err, Error::OutOfOrderEvent { expected: 1, got: 2 }));
    }

    #[test]
    fn synthetic_corpus_agrees_with_offline() {
        for seed in 0..200u64 {
            let shape = match seed % 4 {
                0 => LoopShape::None,
                1 => LoopShape::Statement { unit_sentences: 1 + (seed as usize % 3), reps: 3 + (seed as usize % 5) },
                _ => LoopShape::Numerical { unit_digits: 1 + (seed as usize % 11), reps: 30 + (seed as usize % 60) },
            };
            let mut spec = SynthSpec::new(format!("s{seed}"), 0, 0.0, shape);
            spec.normal_sentences = 5 + (seed as usize % 10);
            let trace = synth_trace(&spec, seed).unwrap();
            for unit in [NumericalUnit::Characters, NumericalUnit::Tokens] {
                let cfg = DetectorConfig { numerical_unit: unit, ..DetectorConfig::default() };
                assert_eq!(stream_events(&trace, cfg), offline_events(&trace, cfg), "seed {seed}");
            }
        }
    }

    fn piece() -> impl Strategy<Value = String> {
        prop::sample::select(vec![
            "0", "1", "12", "21", "3", ".", ",", " ", "  ", "1.", ",2", "A.", " B.", "\n\n", "x", "9 9",
        ])
        .prop_map(str::to_string)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn random_token_streams_agree(pieces in prop::collection::vec(piece(), 0..200), bp in 2usize..6, th in 3usize..20) {
            let trace = super::super::tests::trace_of(&pieces);
            let cfg = DetectorConfig {
                numerical_threshold: th,
                numerical_breakpoint: bp,
                statement_threshold: 2,
                statement_breakpoint: 2,
                ..DetectorConfig::default()
            };
            prop_assert_eq!(stream_events(&trace, cfg), offline_events(&trace, cfg));
            let tokens = DetectorConfig { numerical_unit: NumericalUnit::Tokens, ..cfg };
            prop_assert_eq!(stream_events(&trace, tokens), offline_events(&trace, tokens));
        }
    }
}
