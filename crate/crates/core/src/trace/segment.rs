//! Sentence segmentation over a token stream.
//!
//! A cut falls after any of `. ? ! : ;` that is followed by whitespace, and
//! before every `"\n\n"`. Cuts are snapped to token boundaries: the sentence
//! ends with the token holding the character just before the cut. Leading
//! whitespace belongs to the following sentence, so a sentence is only
//! closed once the next non-whitespace character arrives in a later token.
//! The same [`Segmenter`] drives offline segmentation and live monitoring,
//! so both see identical sentences.

use serde::{Deserialize, Serialize};

use super::{HiddenStates, Trace};

const TERMINATORS: [char; 5] = ['.', '?', '!', ':', ';'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub index: usize,
    /// First token of the sentence.
    pub start: usize,
    /// One past the last token.
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub text_normalized: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_hidden: Option<Vec<f64>>,
}

impl SentenceRecord {
    pub fn token_span(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn num_tokens(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Default, Clone)]
pub struct Segmenter {
    text: String,
    /// Exclusive byte offset where each token ends.
    token_ends: Vec<usize>,
    /// Next byte to examine.
    scan: usize,
    sent_start: usize,
    /// Last token of a confirmed cut awaiting the next sentence's content.
    pending_end: Option<usize>,
    emitted: usize,
}

impl Segmenter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tokens_seen(&self) -> usize {
        self.token_ends.len()
    }

    /// Appends one token and returns any sentences it closes.
    pub fn push(&mut self, token_text: &str) -> Vec<SentenceSpan> {
        self.text.push_str(token_text);
        self.token_ends.push(self.text.len());
        self.advance(false)
    }

    /// Flushes the remaining sentences. Trailing whitespace joins the last.
    pub fn finish(mut self) -> Vec<SentenceSpan> {
        let mut closed = self.advance(true);
        let n = self.token_ends.len();
        if self.sent_start < n && self.has_content(self.sent_start, n) {
            closed.push(self.close(n));
        }
        closed
    }

    fn advance(&mut self, at_end: bool) -> Vec<SentenceSpan> {
        let mut closed = Vec::new();
        while self.scan < self.text.len() {
            let q = self.scan;
            let ch = self.text[q..].chars().next().expect("char boundary");
            let after = q + ch.len_utf8();
            let next = self.text[after..].chars().next();
            if next.is_none() && !at_end {
                // Need one character of lookahead.
                break;
            }

            if !ch.is_whitespace() {
                if let Some(pending) = self.pending_end {
                    let owner = self.token_at(q);
                    if owner > pending {
                        closed.push(self.close(pending + 1));
                    } else {
                        // Content follows the cut inside the same token.
                        self.pending_end = None;
                    }
                }
            }

            let cut = match next {
                Some(n) if TERMINATORS.contains(&ch) && n.is_whitespace() => Some(after),
                Some('\n') if ch == '\n' => Some(q),
                _ => None,
            };
            if let Some(cut) = cut.filter(|&c| c > 0) {
                let end_tok = self.token_at(cut - 1);
                if end_tok >= self.sent_start && self.has_content(self.sent_start, end_tok + 1) {
                    self.pending_end = Some(self.pending_end.map_or(end_tok, |p| p.max(end_tok)));
                }
            }
            self.scan = after;
        }
        closed
    }

    fn close(&mut self, end: usize) -> SentenceSpan {
        let span = SentenceSpan {
            index: self.emitted,
            start: self.sent_start,
            end,
            text: self.slice(self.sent_start, end).trim().to_string(),
        };
        self.emitted += 1;
        self.sent_start = end;
        self.pending_end = None;
        span
    }

    fn token_start(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.token_ends[i - 1]
        }
    }

    fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.token_start(start)..self.token_start(end)]
    }

    fn has_content(&self, start: usize, end: usize) -> bool {
        self.slice(start, end).chars().any(|c| !c.is_whitespace())
    }

    /// Token holding byte `pos`.
    fn token_at(&self, pos: usize) -> usize {
        self.token_ends.partition_point(|&end| end <= pos)
    }
}

/// Mean of rows `[start, end)`, accumulated in f64 in row order.
pub fn mean_rows(hidden: &HiddenStates, start: usize, end: usize) -> Vec<f64> {
    let mut acc = vec![0.0f64; hidden.dim()];
    for i in start..end {
        for (a, &v) in acc.iter_mut().zip(hidden.row(i)) {
            *a += f64::from(v);
        }
    }
    let n = (end - start) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub fn segment_sentences(trace: &Trace) -> Vec<SentenceRecord> {
    let mut seg = Segmenter::new();
    let mut spans = Vec::new();
    for tok in &trace.tokens {
        spans.extend(seg.push(&tok.text));
    }
    spans.extend(seg.finish());
    spans
        .into_iter()
        .map(|s| SentenceRecord {
            sentence_index: s.index,
            start: s.start,
            end: s.end,
            text_normalized: s.text,
            mean_hidden: trace.hidden.as_ref().map(|h| mean_rows(h, s.start, s.end)),
        })
        .collect()
}
