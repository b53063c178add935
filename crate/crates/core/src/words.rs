//! Letters, trace-words and trace-tuples: the index language shared by every
//! moment function in the crate.
//!
//! A [`TraceTuple`] stands for a product of normalized traces
//! `tr(w_1) tr(w_2) ... tr(w_r)` of words in the blocks `u_ij` and their
//! adjoints, each letter stamped with one of the tuple's time points.
//! Tuples are always kept in canonical form so that they can serve directly
//! as hash keys for state spaces and memo tables.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A time point of the process. Compared, hashed and printed through the
/// shortest decimal string that round-trips the underlying `f64`, so keys
/// built from it are stable.
#[derive(Clone, Copy, Debug)]
pub struct Time(f64);

impl Time {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time must be a finite non-negative number, got {value}"
            )));
        }
        // normalizes -0.0
        Ok(Time(value + 0.0))
    }

    pub fn zero() -> Self {
        Time(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Time {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Time {}

impl Hash for Time {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One block letter `u_ij` (or `u_ij*` when `star`), stamped with a time.
///
/// The derived ordering compares `(time_id, i, j, star)` in that order; it is
/// the ordering used to pick canonical rotations. Indices are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub time_id: usize,
    pub i: usize,
    pub j: usize,
    pub star: bool,
}

impl Letter {
    pub fn new(i: usize, j: usize, star: bool) -> Self {
        Letter {
            time_id: 0,
            i,
            j,
            star,
        }
    }

    pub fn at(self, time_id: usize) -> Self {
        Letter { time_id, ..self }
    }

    /// The adjoint letter: same block, star flag flipped.
    pub fn adjoint(self) -> Self {
        Letter {
            star: !self.star,
            ..self
        }
    }

    /// Counit value δ_ij (the value of the letter at the identity).
    pub fn counit(self) -> i64 {
        i64::from(self.i == self.j)
    }
}

/// A non-empty cyclic word, stored in its lexicographically minimal rotation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceWord {
    letters: Vec<Letter>,
}

impl TraceWord {
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::Malformed("empty trace".into()));
        }
        Ok(TraceWord {
            letters: min_rotation(letters),
        })
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    fn adjoint(&self) -> TraceWord {
        let letters = self.letters.iter().rev().map(|l| l.adjoint()).collect();
        TraceWord {
            letters: min_rotation(letters),
        }
    }
}

fn min_rotation(letters: Vec<Letter>) -> Vec<Letter> {
    let k = letters.len();
    let best = (0..k)
        .min_by(|&a, &b| {
            let ra = letters[a..].iter().chain(&letters[..a]);
            let rb = letters[b..].iter().chain(&letters[..b]);
            ra.cmp(rb)
        })
        .unwrap_or(0);
    if best == 0 {
        return letters;
    }
    let mut rotated = letters;
    rotated.rotate_left(best);
    rotated
}

/// A canonical product of normalized traces together with its time table.
///
/// Invariants: `times` strictly increasing and every entry referenced by at
/// least one letter; traces sorted. A tuple with no traces is the constant 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceTuple {
    traces: Vec<TraceWord>,
    times: Vec<Time>,
}

impl TraceTuple {
    /// Builds and canonicalizes a tuple from raw (possibly rotated, unsorted)
    /// letter sequences.
    pub fn from_parts(traces: Vec<Vec<Letter>>, times: Vec<Time>) -> Result<Self> {
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed("times must be strictly increasing".into()));
        }
        let mut words = Vec::with_capacity(traces.len());
        for letters in traces {
            if let Some(bad) = letters.iter().find(|l| l.time_id >= times.len()) {
                return Err(Error::Malformed(format!(
                    "time id {} has no entry in a table of {} times",
                    bad.time_id,
                    times.len()
                )));
            }
            words.push(TraceWord::new(letters)?);
        }
        Ok(TraceTuple {
            traces: words,
            times,
        }
        .canonicalize())
    }

    /// Single-time tuple with every letter at time `t`.
    pub fn single_time(traces: Vec<Vec<Letter>>, t: f64) -> Result<Self> {
        let traces = traces
            .into_iter()
            .map(|w| w.into_iter().map(|l| l.at(0)).collect())
            .collect();
        Self::from_parts(traces, vec![Time::new(t)?])
    }

    /// The empty product (value 1 under any state).
    pub fn unit() -> Self {
        TraceTuple {
            traces: Vec::new(),
            times: Vec::new(),
        }
    }

    pub fn traces(&self) -> &[TraceWord] {
        &self.traces
    }

    pub fn times(&self) -> &[Time] {
        &self.times
    }

    pub fn is_unit(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn letter_count(&self) -> usize {
        self.traces.iter().map(TraceWord::len).sum()
    }

    /// Largest block index used by any letter.
    pub fn max_index(&self) -> usize {
        self.letters().map(|l| l.i.max(l.j)).max().unwrap_or(0)
    }

    pub fn letters(&self) -> impl Iterator<Item = &Letter> {
        self.traces.iter().flat_map(|w| w.letters.iter())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self
            .letters()
            .map(|l| l.i.max(l.j))
            .find(|&m| m > n || m == 0)
        {
            Some(index) => Err(Error::IndexOutOfRange { index, n }),
            None if n == 0 => Err(Error::InvalidArgument("n must be at least 1".into())),
            None => Ok(()),
        }
    }

    /// Unique canonical representative: unused times dropped, every trace in
    /// minimal rotation, traces sorted.
    pub fn canonicalize(&self) -> TraceTuple {
        let mut used = vec![false; self.times.len()];
        for l in self.letters() {
            used[l.time_id] = true;
        }
        let mut remap = vec![usize::MAX; self.times.len()];
        let mut times = Vec::new();
        for (old, &t) in self.times.iter().enumerate() {
            if used[old] {
                remap[old] = times.len();
                times.push(t);
            }
        }
        let mut traces: Vec<TraceWord> = self
            .traces
            .iter()
            .map(|w| TraceWord {
                letters: min_rotation(w.letters.iter().map(|l| l.at(remap[l.time_id])).collect()),
            })
            .collect();
        traces.sort();
        TraceTuple { traces, times }
    }

    /// Each trace reversed with every star flipped (`(ab)* = b* a*`).
    pub fn adjoint(&self) -> TraceTuple {
        let mut traces: Vec<TraceWord> = self.traces.iter().map(TraceWord::adjoint).collect();
        traces.sort();
        TraceTuple {
            traces,
            times: self.times.clone(),
        }
    }

    /// Value at the identity: the product of δ_ij over all letters.
    pub fn counit(&self) -> i64 {
        self.letters().map(|l| l.counit()).product()
    }

    pub fn counit_eval(&self) -> Complex64 {
        Complex64::new(self.counit() as f64, 0.0)
    }

    /// Replaces the whole time table by the single time `t`.
    pub fn at_single_time(&self, t: f64) -> Result<TraceTuple> {
        let traces = self
            .traces
            .iter()
            .map(|w| w.letters.clone())
            .collect::<Vec<_>>();
        TraceTuple::single_time(traces, t)
    }

    /// Moves every letter stamped `from` onto the time `to` (both ids into
    /// this tuple's table) and re-canonicalizes.
    pub fn restamp(&self, from: usize, to: usize) -> TraceTuple {
        let traces = self
            .traces
            .iter()
            .map(|w| TraceWord {
                letters: w
                    .letters
                    .iter()
                    .map(|l| if l.time_id == from { l.at(to) } else { *l })
                    .collect(),
            })
            .collect();
        TraceTuple {
            traces,
            times: self.times.clone(),
        }
        .canonicalize()
    }

    /// One single-trace tuple per factor.
    pub fn factors(&self) -> Vec<TraceTuple> {
        self.traces
            .iter()
            .map(|w| {
                TraceTuple {
                    traces: vec![w.clone()],
                    times: self.times.clone(),
                }
                .canonicalize()
            })
            .collect()
    }

    pub(crate) fn from_raw_words(traces: Vec<Vec<Letter>>, times: Vec<Time>) -> TraceTuple {
        let traces = traces
            .into_iter()
            .filter(|w| !w.is_empty())
            .map(|letters| TraceWord { letters })
            .collect();
        TraceTuple { traces, times }.canonicalize()
    }

    /// Key with explicit time values on every letter; stable across runs.
    pub fn key(&self) -> String {
        self.render(true)
    }

    fn render(&self, always_stamp: bool) -> String {
        if self.traces.is_empty() {
            return "1".into();
        }
        let stamp = always_stamp || self.times.len() > 1;
        let mut out = String::new();
        for (k, w) in self.traces.iter().enumerate() {
            if k > 0 {
                out.push_str("; ");
            }
            out.push_str("tr(");
            for (p, l) in w.letters.iter().enumerate() {
                if p > 0 {
                    out.push(' ');
                }
                out.push_str(&format!("u{}{}", l.i, l.j));
                if l.star {
                    out.push('*');
                }
                if stamp {
                    out.push_str(&format!("@{}", self.times[l.time_id]));
                }
            }
            out.push(')');
        }
        out
    }
}

impl fmt::Display for TraceTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

/// Parses a word with unstamped letters placed at time 0.
pub fn parse_word(text: &str, n: usize) -> Result<TraceTuple> {
    parse_word_at(text, n, 0.0)
}

/// Parses `tr(u11 u22*@0.5); tr(u12)` and friends. Letters without an `@`
/// stamp are placed at `default_time`. A bare `u` abbreviates `u11`.
pub fn parse_word_at(text: &str, n: usize, default_time: f64) -> Result<TraceTuple> {
    let default_time = Time::new(default_time)?;
    let raw = Parser::new(text).tuple()?;
    let mut times: Vec<Time> = raw
        .iter()
        .flatten()
        .map(|l| l.time.unwrap_or(default_time))
        .collect();
    times.sort();
    times.dedup();
    let traces = raw
        .into_iter()
        .map(|w| {
            w.into_iter()
                .map(|l| {
                    let t = l.time.unwrap_or(default_time);
                    let time_id = times.binary_search(&t).expect("time collected above");
                    Letter {
                        time_id,
                        i: l.i,
                        j: l.j,
                        star: l.star,
                    }
                })
                .collect()
        })
        .collect();
    let tuple = TraceTuple::from_parts(traces, times)?;
    tuple.validate(n)?;
    Ok(tuple)
}

struct RawLetter {
    i: usize,
    j: usize,
    star: bool,
    time: Option<Time>,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        if self.src[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            self.err(format!("expected `{lit}`"))
        }
    }

    fn tuple(&mut self) -> Result<Vec<Vec<RawLetter>>> {
        let mut traces = vec![self.trace()?];
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(traces),
                Some(';') => {
                    self.bump();
                    traces.push(self.trace()?);
                }
                Some(c) => return self.err(format!("unexpected `{c}`")),
            }
        }
    }

    fn trace(&mut self) -> Result<Vec<RawLetter>> {
        self.skip_ws();
        self.expect("tr(")?;
        let mut letters = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') => {
                    self.bump();
                    break;
                }
                Some('u') => letters.push(self.letter()?),
                Some(c) => return self.err(format!("unexpected `{c}` inside trace")),
                None => return self.err("unterminated trace"),
            }
        }
        if letters.is_empty() {
            return Err(Error::Malformed("empty trace".into()));
        }
        Ok(letters)
    }

    fn letter(&mut self) -> Result<RawLetter> {
        self.expect("u")?;
        let (i, j) = match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                let i = self.digit()?;
                let j = self.digit()?;
                (i, j)
            }
            _ => (1, 1),
        };
        let star = if self.peek() == Some('*') {
            self.bump();
            true
        } else {
            false
        };
        let time = if self.peek() == Some('@') {
            self.bump();
            Some(self.number()?)
        } else {
            None
        };
        Ok(RawLetter { i, j, star, time })
    }

    fn digit(&mut self) -> Result<usize> {
        match self.peek().and_then(|c| c.to_digit(10)) {
            Some(d) => {
                self.bump();
                Ok(d as usize)
            }
            None => self.err("expected a block index digit"),
        }
    }

    fn number(&mut self) -> Result<Time> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'))
        {
            self.bump();
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) => Time::new(v).map_err(|_| Error::Parse {
                pos: start,
                msg: format!("invalid time `{text}`"),
            }),
            Err(_) => Err(Error::Parse {
                pos: start,
                msg: format!("invalid time `{text}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(i: usize, j: usize, star: bool) -> Letter {
        Letter::new(i, j, star)
    }

    #[test]
    fn rotations_share_a_canonical_form() {
        let a = TraceTuple::single_time(vec![vec![l(1, 1, false), l(1, 2, false)]], 1.0).unwrap();
        let b = TraceTuple::single_time(vec![vec![l(1, 2, false), l(1, 1, false)]], 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_order_is_irrelevant() {
        let a =
            TraceTuple::single_time(vec![vec![l(1, 1, false)], vec![l(2, 2, false)]], 1.0).unwrap();
        let b =
            TraceTuple::single_time(vec![vec![l(2, 2, false)], vec![l(1, 1, false)]], 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_rotation_starts_at_least_letter() {
        let word = vec![l(1, 2, false), l(2, 1, false), l(1, 1, false)];
        let t = TraceTuple::single_time(vec![word.clone()], 0.0).unwrap();
        // brute-force minimum over the three rotations
        let expected = (0..3)
            .map(|r| {
                let mut w = word.clone();
                w.rotate_left(r);
                w
            })
            .min()
            .unwrap();
        assert_eq!(t.traces()[0].letters(), expected.as_slice());
        assert_eq!(t.traces()[0].letters()[0], l(1, 1, false));
    }

    #[test]
    fn empty_trace_is_malformed() {
        let err = TraceTuple::single_time(vec![vec![]], 0.0).unwrap_err();
        assert!(matches!(err, Error::Malformed(_)));
        assert!(matches!(parse_word("tr()", 2), Err(Error::Malformed(_))));
    }

    #[test]
    fn adjoint_examples() {
        let t = parse_word("tr(u11)", 2).unwrap();
        assert_eq!(t.adjoint(), parse_word("tr(u11*)", 2).unwrap());
        let t = parse_word("tr(u12 u34*)", 4).unwrap();
        assert_eq!(t.adjoint(), parse_word("tr(u34 u12*)", 4).unwrap());
    }

    #[test]
    fn counit_examples() {
        assert_eq!(parse_word("tr(u11 u22)", 2).unwrap().counit(), 1);
        assert_eq!(parse_word("tr(u12 u21)", 2).unwrap().counit(), 0);
        assert_eq!(parse_word("tr(u11); tr(u13 u31*)", 3).unwrap().counit(), 0);
    }

    #[test]
    fn parse_examples() {
        let t = parse_word("tr(u11 u22*)", 2).unwrap();
        assert_eq!(t.traces().len(), 1);
        let letters = t.traces()[0].letters();
        assert_eq!(letters, &[l(1, 1, false), l(2, 2, true)]);

        let t = parse_word("tr(u11@0 u11@1)", 1).unwrap();
        assert_eq!(t.times().len(), 2);
        let ids: Vec<_> = t.letters().map(|l| l.time_id).collect();
        assert_eq!(ids, vec![0, 1]);

        assert_eq!(
            parse_word("tr(u31)", 2).unwrap_err(),
            Error::IndexOutOfRange { index: 3, n: 2 }
        );
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(parse_word("tr(u1)", 2), Err(Error::Parse { .. })));
        assert!(matches!(parse_word("tr(u11", 2), Err(Error::Parse { .. })));
        assert!(matches!(parse_word("tr(x11)", 2), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_word("tr(u11@-1)", 2),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_word("tr(u11) tr(u22)", 2),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bare_u_and_decimal_times() {
        let t = parse_word("tr(u@0.5 u@1)", 1).unwrap();
        assert_eq!(
            t.times(),
            &[Time::new(0.5).unwrap(), Time::new(1.0).unwrap()]
        );
        assert_eq!(t.to_string(), "tr(u11@0.5 u11@1)");
        assert_eq!(t.key(), "tr(u11@0.5 u11@1)");
        assert_eq!(parse_word("tr(u u)", 1).unwrap().to_string(), "tr(u11 u11)");
    }

    #[test]
    fn display_roundtrips() {
        for text in ["tr(u11 u22*); tr(u12)", "tr(u11@0.25 u21*@1); tr(u11@1)"] {
            let t = parse_word(text, 2).unwrap();
            assert_eq!(parse_word(&t.to_string(), 2).unwrap(), t);
        }
    }

    #[test]
    fn unused_times_are_dropped() {
        let t = TraceTuple::from_parts(
            vec![vec![l(1, 1, false).at(2)]],
            vec![
                Time::zero(),
                Time::new(0.5).unwrap(),
                Time::new(1.0).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(t.times(), &[Time::new(1.0).unwrap()]);
        assert_eq!(t.letters().next().unwrap().time_id, 0);
    }

    #[test]
    fn restamp_merges_times() {
        let t = parse_word("tr(u11@0.5 u12@1)", 2).unwrap();
        let r = t.restamp(1, 0);
        assert_eq!(r, parse_word_at("tr(u11 u12)", 2, 0.5).unwrap());
    }
}
