//! Periodicity of finite sequences.
//!
//! [`minimal_period`] analyses a whole window with the prefix function.
//! The tail queries look at suffixes instead: for every candidate period `p`
//! they need the longest suffix with period `p`, which is `p + Z[p]` on the
//! reversed sequence. All of them run in linear time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicityResult {
    /// Length of the repeating unit.
    pub unit_len: usize,
    /// Number of full copies of the unit.
    pub reps: usize,
    /// `reps * unit_len`.
    pub repeated_len: usize,
    /// Where the first full copy starts.
    pub tail_start: usize,
}

impl PeriodicityResult {
    fn new(unit_len: usize, reps: usize, tail_start: usize) -> Self {
        Self {
            unit_len,
            reps,
            repeated_len: unit_len * reps,
            tail_start,
        }
    }
}

/// Knuth–Morris–Pratt failure function: `pi[i]` is the length of the longest
/// proper border of `s[..=i]`.
pub fn prefix_function<T: Eq>(s: &[T]) -> Vec<usize> {
    let mut pi = vec![0; s.len()];
    for i in 1..s.len() {
        let mut k = pi[i - 1];
        while k > 0 && s[i] != s[k] {
            k = pi[k - 1];
        }
        if s[i] == s[k] {
            k += 1;
        }
        pi[i] = k;
    }
    pi
}

/// `z[i]` is the length of the longest common prefix of `s` and `s[i..]`;
/// `z[0]` is `s.len()`.
pub fn z_function<T: Eq>(s: &[T]) -> Vec<usize> {
    let n = s.len();
    let mut z = vec![0; n];
    if n == 0 {
        return z;
    }
    z[0] = n;
    let (mut l, mut r) = (0, 0);
    for i in 1..n {
        if i < r {
            z[i] = (r - i).min(z[i - l]);
        }
        while i + z[i] < n && s[z[i]] == s[i + z[i]] {
            z[i] += 1;
        }
        if i + z[i] > r {
            l = i;
            r = i + z[i];
        }
    }
    z
}

/// Smallest period of the whole sequence and the number of full copies.
/// A partial trailing copy is not counted.
pub fn minimal_period<T: Eq>(s: &[T]) -> Result<PeriodicityResult> {
    if s.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = s.len();
    let border = prefix_function(s)[n - 1];
    let p = n - border;
    Ok(PeriodicityResult::new(p, n / p, 0))
}

/// For every candidate period of a sequence, the longest suffix that has it.
#[derive(Debug, Clone)]
pub struct TailPeriods {
    n: usize,
    /// `suffix_len[p - 1]` is the longest suffix with period `p`.
    suffix_len: Vec<usize>,
}

impl TailPeriods {
    pub fn new<T: Eq + Clone>(s: &[T]) -> Self {
        let n = s.len();
        let rev: Vec<T> = s.iter().rev().cloned().collect();
        let z = z_function(&rev);
        let suffix_len = (1..=n)
            .map(|p| if p == n { n } else { (p + z[p]).min(n) })
            .collect();
        Self { n, suffix_len }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn candidate(&self, p: usize) -> PeriodicityResult {
        let len = self.suffix_len[p - 1];
        PeriodicityResult::new(p, len / p, self.n - len)
    }

    fn candidates(&self) -> impl Iterator<Item = PeriodicityResult> + '_ {
        (1..=self.n).map(|p| self.candidate(p))
    }

    /// The period with the most full copies; ties go to the shorter unit.
    pub fn most_repetitions(&self) -> Option<PeriodicityResult> {
        self.candidates()
            .reduce(|best, c| if c.reps > best.reps { c } else { best })
    }

    /// The period covering the most symbols with at least `min_reps` full
    /// copies; ties go to the shorter unit.
    pub fn longest_repeated(&self, min_reps: usize) -> Option<PeriodicityResult> {
        self.candidates()
            .filter(|c| c.reps >= min_reps)
            .reduce(|best, c| if c.repeated_len > best.repeated_len { c } else { best })
    }

    /// The period whose periodic suffix reaches furthest back, among those
    /// with at least `min_reps` full copies; ties go to the shorter unit.
    pub fn earliest_start(&self, min_reps: usize) -> Option<PeriodicityResult> {
        self.candidates()
            .filter(|c| c.reps >= min_reps)
            .reduce(|best, c| if c.tail_start < best.tail_start { c } else { best })
    }
}

/// Periodic tail with the most full repetitions. `None` for empty input.
pub fn periodic_tail<T: Eq + Clone>(s: &[T]) -> Option<PeriodicityResult> {
    TailPeriods::new(s).most_repetitions()
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constructed_periodic_string() {
        let r = minimal_period(b"909090").unwrap();
        assert_eq!((r.unit_len, r.reps, r.repeated_len), (2, 3, 6));
    }

    #[test]
    fn aperiodic_string_has_one_copy() {
        let r = minimal_period(b"abcab").unwrap();
        assert_eq!((r.unit_len, r.reps), (3, 1));
        assert_eq!(oracle::minimal_period(b"abcab"), (3, 1));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(minimal_period::<u8>(&[]), Err(Error::EmptyInput)));
        assert!(periodic_tail::<u8>(&[]).is_none());
    }

    #[test]
    fn tail_ignores_the_prefix_and_partial_copy() {
        let r = periodic_tail(b"xyzabababababa").unwrap();
        assert_eq!((r.unit_len, r.reps, r.tail_start), (2, 5, 3));
    }

    #[test]
    fn z_function_matches_definition() {
        let s = b"aabxaab";
        assert_eq!(z_function(s), vec![7, 1, 0, 0, 3, 1, 0]);
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        (2u8..=4).prop_flat_map(|k| prop::collection::vec(0..k, 1..64))
    }

    proptest! {
        #[test]
        fn minimal_period_matches_oracle(s in seq()) {
            let r = minimal_period(&s).unwrap();
            prop_assert_eq!((r.unit_len, r.reps), oracle::minimal_period(&s));
        }

        #[test]
        fn tail_candidates_match_oracle(s in seq()) {
            let tails = TailPeriods::new(&s);
            for c in oracle::tail_candidates(&s) {
                prop_assert_eq!(tails.candidate(c.unit_len), c);
            }
        }

        #[test]
        fn tail_really_repeats(s in seq()) {
            let r = periodic_tail(&s).unwrap();
            let unit = &s[r.tail_start..r.tail_start + r.unit_len];
            for k in 0..r.reps {
                let at = r.tail_start + k * r.unit_len;
                prop_assert_eq!(&s[at..at + r.unit_len], unit);
            }
        }

        #[test]
        fn appending_a_copy_keeps_the_unit(s in seq()) {
            let before = periodic_tail(&s).unwrap();
            let mut longer = s.clone();
            longer.extend_from_slice(&s[s.len() - before.unit_len..]);
            let after = periodic_tail(&longer).unwrap();
            prop_assert_eq!(after.unit_len, before.unit_len);
            prop_assert!(after.reps > before.reps);
        }
    }
}
