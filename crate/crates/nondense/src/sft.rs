//! Alphabets, transition matrices, valid words and block structure.
//!
//! Letters are 1-based (`1..=s`) in all public I/O. A word of `k` letters is
//! the paper-style `(k-1)`-string; [`Word::n`] returns that index form.

use crate::{input_err, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A letter of the alphabet, in `1..=s`.
pub type Letter = u8;

/// A 0/1 transition matrix over the alphabet `{1, ..., s}`.
///
/// Invariants enforced at construction:
/// - at least two letters,
/// - every letter has at least one valid successor,
/// - at least one letter is nondegenerate (has two or more successors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSystem {
    size: usize,
    matrix: Vec<Vec<bool>>,
    successors: Vec<Vec<Letter>>,
    degenerate: Vec<bool>,
}

impl TransitionSystem {
    /// Build from a 0/1 matrix, validating the type invariants.
    pub fn new(matrix: Vec<Vec<bool>>) -> Result<Self> {
        let s = matrix.len();
        if s < 2 {
            return input_err("alphabet must have at least two letters");
        }
        if s > Letter::MAX as usize {
            return input_err(format!("alphabet size {s} exceeds the supported maximum"));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != s {
                return input_err(format!("row {} has length {}, expected {s}", i + 1, row.len()));
            }
        }
        let successors: Vec<Vec<Letter>> = matrix
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(j, _)| (j + 1) as Letter)
                    .collect()
            })
            .collect();
        for (i, succ) in successors.iter().enumerate() {
            if succ.is_empty() {
                return input_err(format!("letter {} has no valid successor", i + 1));
            }
        }
        let degenerate: Vec<bool> = successors.iter().map(|s| s.len() == 1).collect();
        if degenerate.iter().all(|&d| d) {
            return input_err("all letters are degenerate");
        }
        // A cycle of degenerate letters would give a valid word whose
        // cylinder never shrinks, impossible for an expanding map; it would
        // also break the distinct-letters property of degenerate-only words.
        for start in 0..s {
            if !degenerate[start] {
                continue;
            }
            let mut cur = start;
            let mut steps = 0usize;
            while degenerate[cur] {
                cur = (successors[cur][0] - 1) as usize;
                steps += 1;
                if steps > s {
                    return input_err(format!(
                        "letters starting at {} form a degenerate cycle",
                        start + 1
                    ));
                }
            }
        }
        Ok(Self { size: s, matrix, successors, degenerate })
    }

    /// Build from a 0/1 integer matrix.
    pub fn from_ints(matrix: &[Vec<u8>]) -> Result<Self> {
        Self::new(matrix.iter().map(|r| r.iter().map(|&x| x != 0).collect()).collect())
    }

    /// The full shift on `s` letters (all transitions allowed).
    pub fn full_shift(s: usize) -> Self {
        Self::new(vec![vec![true; s]; s]).expect("full shift is always valid")
    }

    /// Number of letters.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether letter `i` may be followed by letter `j`.
    pub fn allows(&self, i: Letter, j: Letter) -> bool {
        self.matrix[(i - 1) as usize][(j - 1) as usize]
    }

    /// Valid successors of `i`, ascending.
    pub fn successors(&self, i: Letter) -> &[Letter] {
        &self.successors[(i - 1) as usize]
    }

    /// Whether `i` has exactly one valid successor.
    pub fn is_degenerate(&self, i: Letter) -> bool {
        self.degenerate[(i - 1) as usize]
    }

    /// True when no letter of the alphabet is degenerate.
    pub fn has_no_degenerate_letters(&self) -> bool {
        self.degenerate.iter().all(|&d| !d)
    }

    fn check_letters(&self, w: &Word) -> Result<()> {
        for &a in w.letters() {
            if a == 0 || a as usize > self.size {
                return input_err(format!("letter {a} out of range 1..={}", self.size));
            }
        }
        Ok(())
    }

    /// True iff every adjacent pair of `w` is an allowed transition.
    /// Empty and single-letter words are valid by fiat.
    pub fn is_valid_word(&self, w: &Word) -> Result<bool> {
        self.check_letters(w)?;
        Ok(w.letters().windows(2).all(|p| self.allows(p[0], p[1])))
    }

    /// Validate `w` or return an input error.
    pub fn require_valid(&self, w: &Word) -> Result<()> {
        if self.is_valid_word(w)? {
            Ok(())
        } else {
            input_err(format!("word {w} is not valid for this transition system"))
        }
    }

    /// Iterator over the valid `n`-strings (words of `n + 1` letters) in
    /// lexicographic order, optionally constrained to extend `prefix` by
    /// `n + 1` further letters.
    pub fn words(&self, n: usize, prefix: Option<&Word>) -> Result<WordIter<'_>> {
        if let Some(p) = prefix {
            self.require_valid(p)?;
            if p.is_empty() {
                return input_err("prefix must be nonempty");
            }
        }
        let fixed = prefix.map_or_else(Vec::new, |p| p.letters().to_vec());
        Ok(WordIter {
            ts: self,
            fixed: fixed.len(),
            target_len: n + 1 + fixed.len(),
            state: Some(fixed),
            started: false,
        })
    }

    /// Materialize [`TransitionSystem::words`] up to `cap` entries.
    ///
    /// The default cap used by the CLI is 10^7; the word sets grow
    /// exponentially, so larger requests should use the iterator.
    pub fn enumerate_words(&self, n: usize, prefix: Option<&Word>, cap: usize) -> Result<Vec<Word>> {
        let mut out = Vec::new();
        for w in self.words(n, prefix)? {
            if out.len() == cap {
                return Err(Error::Resource(format!(
                    "word enumeration exceeded cap {cap}; use the streaming iterator"
                )));
            }
            out.push(w);
        }
        Ok(out)
    }

    /// Exact count of valid words with `len` letters (matrix-power route).
    pub fn word_count(&self, len: usize) -> num_bigint::BigUint {
        use num_bigint::BigUint;
        if len == 0 {
            return BigUint::from(0u32);
        }
        let mut v = vec![BigUint::from(1u32); self.size];
        for _ in 1..len {
            let mut next = vec![BigUint::from(0u32); self.size];
            for i in 0..self.size {
                for &j in &self.successors[i] {
                    next[i] += &v[(j - 1) as usize];
                }
            }
            v = next;
        }
        v.iter().sum()
    }

    /// Serialize as the interchange JSON `{"s": .., "matrix": [[0|1,..],..]}`.
    pub fn to_json(&self) -> TransitionSystemFile {
        TransitionSystemFile {
            s: self.size,
            matrix: self
                .matrix
                .iter()
                .map(|r| r.iter().map(|&b| u8::from(b)).collect())
                .collect(),
        }
    }
}

/// JSON representation of a [`TransitionSystem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionSystemFile {
    /// Alphabet size.
    pub s: usize,
    /// 0/1 transition matrix.
    pub matrix: Vec<Vec<u8>>,
}

impl TransitionSystemFile {
    /// Validate and convert into a [`TransitionSystem`].
    pub fn build(&self) -> Result<TransitionSystem> {
        if self.matrix.len() != self.s {
            return input_err("matrix size does not match s");
        }
        TransitionSystem::from_ints(&self.matrix)
    }
}

/// Streaming lexicographic word enumerator.
pub struct WordIter<'a> {
    ts: &'a TransitionSystem,
    /// Leading prefix letters that are never changed.
    fixed: usize,
    target_len: usize,
    /// Current word, or `None` when exhausted.
    state: Option<Vec<Letter>>,
    started: bool,
}

impl WordIter<'_> {
    /// Extend `w` minimally (smallest letters) to the target length.
    fn descend(&self, w: &mut Vec<Letter>) {
        while w.len() < self.target_len {
            let next = match w.last() {
                Some(&p) => self.ts.successors(p)[0],
                None => 1,
            };
            w.push(next);
        }
    }

    /// Advance `w` to the next valid word of the same length; false when
    /// the non-fixed suffix is exhausted.
    fn bump(&self, w: &mut Vec<Letter>) -> bool {
        while w.len() > self.fixed {
            let last = *w.last().unwrap();
            let prev = if w.len() >= 2 { Some(w[w.len() - 2]) } else { None };
            let next = match prev {
                Some(p) => self.ts.successors(p).iter().copied().find(|&c| c > last),
                None => {
                    if (last as usize) < self.ts.size {
                        Some(last + 1)
                    } else {
                        None
                    }
                }
            };
            w.pop();
            if let Some(c) = next {
                w.push(c);
                self.descend(w);
                return true;
            }
        }
        false
    }
}

impl Iterator for WordIter<'_> {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        let w = self.state.as_mut()?;
        if !self.started {
            self.started = true;
            let mut first = std::mem::take(w);
            self.descend(&mut first);
            *self.state.as_mut().unwrap() = first;
        } else {
            let mut cur = std::mem::take(w);
            if !self.bump(&mut cur) {
                self.state = None;
                return None;
            }
            *self.state.as_mut().unwrap() = cur;
        }
        self.state.as_ref().map(|w| Word::from_letters(w.clone()))
    }
}

/// A finite word: a `(h, h + len - 1)`-string.  `start_index` is `h`; it
/// defaults to 0 and only affects bookkeeping displays, never validity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    letters: Vec<Letter>,
    start_index: i64,
}

impl Word {
    /// Word from raw letters (1-based), starting at index 0.
    pub fn from_letters(letters: Vec<Letter>) -> Self {
        Self { letters, start_index: 0 }
    }

    /// Word with an explicit start index.
    pub fn with_start(letters: Vec<Letter>, start_index: i64) -> Self {
        Self { letters, start_index }
    }

    /// The empty word.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Underlying letters.
    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    /// Number of letters `l(w)`.
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    /// True when the word has no letters.
    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Paper-style string index: a word of `k` letters is a `(k-1)`-string.
    /// Errors on the empty word.
    pub fn n(&self) -> Result<usize> {
        if self.is_empty() {
            input_err("empty word has no string index")
        } else {
            Ok(self.len() - 1)
        }
    }

    /// Start index `h`.
    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    /// Letter at position `t` (0-based from the word start).
    pub fn at(&self, t: usize) -> Letter {
        self.letters[t]
    }

    /// Concatenation.
    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { letters, start_index: self.start_index }
    }

    /// Append a single letter.
    pub fn push(&mut self, a: Letter) {
        self.letters.push(a);
    }

    /// Parse from the interchange form: space-free digits when `s <= 9`,
    /// whitespace-separated integers otherwise (always accepted).
    pub fn parse(text: &str, s: usize) -> Result<Word> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Word::empty());
        }
        let letters: Vec<Letter> = if text.contains(char::is_whitespace) {
            text.split_whitespace()
                .map(|t| t.parse::<Letter>().map_err(|e| Error::Input(format!("bad letter {t:?}: {e}"))))
                .collect::<Result<_>>()?
        } else if s <= 9 {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as Letter)
                        .ok_or_else(|| Error::Input(format!("bad digit {c:?} in word")))
                })
                .collect::<Result<_>>()?
        } else {
            return input_err("words over alphabets with s > 9 must be space-separated");
        };
        for &a in &letters {
            if a == 0 || a as usize > s {
                return input_err(format!("letter {a} out of range 1..={s}"));
            }
        }
        Ok(Word::from_letters(letters))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.iter().all(|&a| a <= 9) {
            for &a in &self.letters {
                write!(f, "{a}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.letters.iter().map(|a| a.to_string()).collect();
            write!(f, "{}", parts.join(" "))
        }
    }
}

impl From<&[Letter]> for Word {
    fn from(letters: &[Letter]) -> Self {
        Word::from_letters(letters.to_vec())
    }
}

/// Per-letter degeneracy tags and successor sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LetterClassification {
    /// `degenerate[i]` refers to letter `i + 1`.
    pub degenerate: Vec<bool>,
    /// `successor_sets[i]` lists the valid successors of letter `i + 1`.
    pub successor_sets: Vec<Vec<Letter>>,
}

/// Tag each letter as degenerate (exactly one successor) or not.
pub fn classify_letters(ts: &TransitionSystem) -> LetterClassification {
    LetterClassification {
        degenerate: (1..=ts.size() as Letter).map(|i| ts.is_degenerate(i)).collect(),
        successor_sets: (1..=ts.size() as Letter).map(|i| ts.successors(i).to_vec()).collect(),
    }
}

/// Kind of a segment produced by [`block_decompose`] or recognized by the
/// classification helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Exactly one nondegenerate letter, at the largest index.
    Block,
    /// Exactly one nondegenerate letter, anywhere.
    GeneralBlock,
    /// Exactly one nondegenerate letter, at the smallest index.
    ReverseBlock,
    /// A block followed by a reverse block (two adjacent nondegenerate letters).
    DoubleGeneralBlock,
    /// Trailing run of degenerate letters with no terminating nondegenerate
    /// letter; a word-final segment the block grammar leaves unnamed.
    OpenSegment,
}

/// One segment of a block decomposition: letters `word[start..end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Inclusive start position.
    pub start: usize,
    /// Exclusive end position.
    pub end: usize,
    /// Segment kind.
    pub kind: SegmentKind,
}

/// Greedy left-to-right block decomposition of a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDecomposition {
    /// Segments in order; all are blocks except a possible final open segment.
    pub segments: Vec<Segment>,
    /// Sorted positions of the nondegenerate letters.
    pub nondegenerate_positions: Vec<usize>,
}

/// Segment a valid word greedily: each nondegenerate letter terminates a
/// block; a trailing degenerate run is reported as an open segment.
pub fn block_decompose(ts: &TransitionSystem, w: &Word) -> Result<BlockDecomposition> {
    ts.require_valid(w)?;
    let mut segments = Vec::new();
    let mut nondeg = Vec::new();
    let mut start = 0usize;
    for (t, &a) in w.letters().iter().enumerate() {
        if !ts.is_degenerate(a) {
            nondeg.push(t);
            segments.push(Segment { start, end: t + 1, kind: SegmentKind::Block });
            start = t + 1;
        }
    }
    if start < w.len() {
        segments.push(Segment { start, end: w.len(), kind: SegmentKind::OpenSegment });
    }
    Ok(BlockDecomposition { segments, nondegenerate_positions: nondeg })
}

/// True iff `seg` has exactly one nondegenerate letter (a general block).
pub fn is_general_block(ts: &TransitionSystem, seg: &[Letter]) -> bool {
    seg.iter().filter(|&&a| !ts.is_degenerate(a)).count() == 1
}

/// True iff `seg` is a block followed by a reverse block: exactly two
/// nondegenerate letters, adjacent to each other.
pub fn is_double_general_block(ts: &TransitionSystem, seg: &[Letter]) -> bool {
    let pos: Vec<usize> = seg
        .iter()
        .enumerate()
        .filter(|(_, &a)| !ts.is_degenerate(a))
        .map(|(t, _)| t)
        .collect();
    pos.len() == 2 && pos[1] == pos[0] + 1
}

/// Maximal block length `B`: the longest block any valid word can contain,
/// computed as (longest degenerate-only chain) + 1.
///
/// Degenerate-only chains have pairwise distinct letters, so the search
/// terminates and `B <= s`.
pub fn max_block_length(ts: &TransitionSystem) -> usize {
    let mut best = 0usize;
    for start in 1..=ts.size() as Letter {
        if !ts.is_degenerate(start) {
            continue;
        }
        let mut len = 0usize;
        let mut cur = start;
        let mut seen = vec![false; ts.size() + 1];
        while ts.is_degenerate(cur) && !seen[cur as usize] {
            seen[cur as usize] = true;
            len += 1;
            cur = ts.successors(cur)[0];
        }
        debug_assert!(
            !ts.is_degenerate(cur) || !seen[cur as usize],
            "degenerate-only chains have distinct letters"
        );
        best = best.max(len);
    }
    let b = best + 1;
    assert!(b <= ts.size(), "maximal block length exceeds alphabet size");
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn degenerate_three() -> TransitionSystem {
        TransitionSystem::from_ints(&[vec![1, 1, 0], vec![0, 0, 1], vec![1, 1, 1]]).unwrap()
    }

    fn w(text: &str) -> Word {
        Word::parse(text, 9).unwrap()
    }

    #[test]
    fn classify_full_shift() {
        let ts = TransitionSystem::full_shift(2);
        let c = classify_letters(&ts);
        assert_eq!(c.degenerate, vec![false, false]);
        assert_eq!(c.successor_sets, vec![vec![1, 2], vec![1, 2]]);
    }

    #[test]
    fn classify_degenerate_system() {
        let ts = degenerate_three();
        let c = classify_letters(&ts);
        assert_eq!(c.degenerate, vec![false, true, false]);
        assert_eq!(c.successor_sets[1], vec![3]);
    }

    #[test]
    fn classify_single_successor_row() {
        let ts = TransitionSystem::from_ints(&[vec![0, 1], vec![1, 1]]).unwrap();
        assert!(ts.is_degenerate(1));
        assert!(!ts.is_degenerate(2));
    }

    #[test]
    fn invariants_rejected_at_construction() {
        assert!(TransitionSystem::from_ints(&[vec![1]]).is_err());
        assert!(TransitionSystem::from_ints(&[vec![0, 0], vec![1, 1]]).is_err());
        // all letters degenerate
        assert!(TransitionSystem::from_ints(&[vec![0, 1], vec![1, 0]]).is_err());
        // degenerate two-cycle
        assert!(TransitionSystem::from_ints(&[
            vec![0, 1, 0],
            vec![1, 0, 0],
            vec![1, 1, 1]
        ])
        .is_err());
    }

    #[test]
    fn validity() {
        let full = TransitionSystem::full_shift(2);
        assert!(full.is_valid_word(&w("2111")).unwrap());
        let ts = degenerate_three();
        assert!(ts.is_valid_word(&w("231")).unwrap());
        assert!(!ts.is_valid_word(&w("21")).unwrap());
        assert!(ts.is_valid_word(&Word::empty()).unwrap());
        assert!(ts.is_valid_word(&w("2")).unwrap());
        assert!(ts.is_valid_word(&w("4")).is_err());
    }

    #[test]
    fn enumerate_small() {
        let full = TransitionSystem::full_shift(2);
        let words = full.enumerate_words(1, None, 1 << 20).unwrap();
        let txt: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        assert_eq!(txt, vec!["11", "12", "21", "22"]);

        let ts = TransitionSystem::from_ints(&[vec![0, 1], vec![1, 1]]).unwrap();
        let words = ts.enumerate_words(2, None, 1 << 20).unwrap();
        let txt: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        assert_eq!(txt, vec!["121", "122", "212", "221", "222"]);
    }

    #[test]
    fn enumerate_with_prefix() {
        let full = TransitionSystem::full_shift(2);
        let prefix = w("121");
        let words = full.enumerate_words(1, Some(&prefix), 1 << 20).unwrap();
        assert_eq!(words.len(), 4);
        assert!(words.iter().all(|x| x.letters().starts_with(prefix.letters())));
        assert!(full.enumerate_words(1, Some(&w("2113")), 1024).is_err());
    }

    #[test]
    fn enumerate_count_matches_matrix_power() {
        let systems = [TransitionSystem::full_shift(2), degenerate_three()];
        for ts in &systems {
            for n in 0..=12usize {
                let count = ts.words(n, None).unwrap().count();
                assert_eq!(num_bigint::BigUint::from(count), ts.word_count(n + 1), "n={n}");
            }
        }
    }

    #[test]
    fn enumeration_cap_is_a_resource_error() {
        let full = TransitionSystem::full_shift(2);
        assert!(matches!(full.enumerate_words(10, None, 5), Err(Error::Resource(_))));
    }

    #[test]
    fn blocks_full_shift() {
        let full = TransitionSystem::full_shift(2);
        let d = block_decompose(&full, &w("1212")).unwrap();
        assert_eq!(d.segments.len(), 4);
        assert!(d.segments.iter().all(|s| s.kind == SegmentKind::Block && s.end - s.start == 1));
        assert_eq!(d.nondegenerate_positions, vec![0, 1, 2, 3]);
    }

    #[test]
    fn blocks_degenerate_system() {
        let ts = degenerate_three();
        let d = block_decompose(&ts, &w("231")).unwrap();
        assert_eq!(d.segments.len(), 2);
        assert_eq!((d.segments[0].start, d.segments[0].end), (0, 2));
        assert_eq!(d.segments[0].kind, SegmentKind::Block);
        assert_eq!((d.segments[1].start, d.segments[1].end), (2, 3));
        // trailing degenerate run is an open segment
        let d = block_decompose(&ts, &w("12")).unwrap();
        assert_eq!(d.segments[1].kind, SegmentKind::OpenSegment);
        let d = block_decompose(&ts, &Word::empty()).unwrap();
        assert!(d.segments.is_empty());
    }

    #[test]
    fn max_block_lengths() {
        assert_eq!(max_block_length(&TransitionSystem::full_shift(2)), 1);
        assert_eq!(max_block_length(&degenerate_three()), 2);
    }

    #[test]
    fn degenerate_only_words_have_distinct_letters() {
        // exhaustive over random valid systems with s <= 6
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 400 {
            let s = rng.gen_range(2..=6usize);
            let matrix: Vec<Vec<u8>> =
                (0..s).map(|_| (0..s).map(|_| rng.gen_range(0..=1u8)).collect()).collect();
            let Ok(ts) = TransitionSystem::from_ints(&matrix) else { continue };
            checked += 1;
            // walk every degenerate-only chain
            for start in 1..=s as Letter {
                if !ts.is_degenerate(start) {
                    continue;
                }
                let mut seen = vec![false; s + 1];
                let mut cur = start;
                while ts.is_degenerate(cur) {
                    assert!(!seen[cur as usize], "degenerate cycle found");
                    seen[cur as usize] = true;
                    cur = ts.successors(cur)[0];
                }
            }
            let _ = max_block_length(&ts); // also asserts B <= s internally
        }
    }

    #[test]
    fn word_display_and_parse() {
        let word = Word::from_letters(vec![2, 1, 1]);
        assert_eq!(word.to_string(), "211");
        assert_eq!(Word::parse("211", 2).unwrap(), word);
        assert_eq!(Word::parse("2 1 1", 12).unwrap(), word);
        assert!(Word::parse("219", 2).is_err());
        let wide = Word::from_letters(vec![11, 2]);
        assert_eq!(wide.to_string(), "11 2");
        assert_eq!(Word::parse("11 2", 16).unwrap(), wide);
    }

    #[test]
    fn ts_json_round_trip() {
        let ts = degenerate_three();
        let file = ts.to_json();
        let text = serde_json::to_string(&file).unwrap();
        let back: TransitionSystemFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.build().unwrap(), ts);
    }
}
