//! Match and partial-match detection, exceptional-form recognition, and the
//! constructive no-matching extension with its serial application.
//!
//! The central operation is [`no_matching_extend`]: given a forbidden word
//! `gamma` and a word `alpha` that contains no match of `gamma`, it appends
//! two short pieces `b0`, `b1` (each at most `s` letters) after which *no*
//! valid continuation can ever complete a match of `gamma`, as long as the
//! total appended length stays within one `gamma`-length. The guarantee is
//! certified independently by the exported oracle [`verify_extension`].

use crate::sft::{is_double_general_block, is_general_block, Letter, TransitionSystem, Word};
use crate::{input_err, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A suffix-of-`alpha` / proper-prefix-of-`gamma` coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialMatch {
    /// Start position of the coincidence inside `alpha`; always `> N - n`.
    pub head: usize,
    /// Number of `gamma`-letters matched by the tail of `alpha`.
    pub matched_len: usize,
}

/// All heads `i` with `alpha[i + t] == gamma[t]` for the full length of
/// `gamma`; empty iff `gamma` is not an extrinsic substring of `alpha`.
pub fn find_matches(gamma: &Word, alpha: &Word) -> Vec<usize> {
    let g = gamma.letters();
    let a = alpha.letters();
    if g.is_empty() || g.len() > a.len() {
        return Vec::new();
    }
    (0..=a.len() - g.len()).filter(|&i| &a[i..i + g.len()] == g).collect()
}

/// All partial matches of `gamma` with `alpha`, sorted by head.
///
/// Any two reported heads `i < j` satisfy the right-shift-and-crop relation:
/// cropping the head-`i` coincidence by `j - i` letters yields the head-`j`
/// one.
pub fn find_partial_matches(gamma: &Word, alpha: &Word) -> Vec<PartialMatch> {
    let g = gamma.letters();
    let a = alpha.letters();
    let mut out = Vec::new();
    if g.is_empty() || a.is_empty() {
        return out;
    }
    let lo = a.len().saturating_sub(g.len() - 1);
    for head in lo..a.len() {
        let m = a.len() - head;
        if a[head..] == g[..m] {
            out.push(PartialMatch { head, matched_len: m });
        }
    }
    out
}

/// Tail form of an exceptional word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailKind {
    /// The tail is a general block not equivalent to the doubled leading block.
    GeneralBlock,
    /// The tail is a double general block not equivalent to the doubled
    /// leading block.
    DoubleGeneralBlock,
}

/// One decomposition witnessing exceptionality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionalWitness {
    /// The repeated leading general block.
    pub repeated_block: Word,
    /// How many identical leading copies precede the tail.
    pub copies: usize,
    /// Shape of the tail.
    pub tail_kind: TailKind,
}

/// Result of [`detect_exceptional`]. Both tail forms may hold at once, via
/// different decompositions; all witnesses are reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionalForm {
    /// Every decomposition of the word into identical leading general blocks
    /// followed by an eligible tail.
    pub witnesses: Vec<ExceptionalWitness>,
}

impl ExceptionalForm {
    /// Whether the word is exceptional (has any witness).
    pub fn is_exceptional(&self) -> bool {
        !self.witnesses.is_empty()
    }

    /// The first witness's repeated block, when exceptional.
    pub fn repeated_block(&self) -> Option<&Word> {
        self.witnesses.first().map(|w| &w.repeated_block)
    }
}

/// `u` is equivalent to `v` when the shorter is a prefix of the longer.
fn equivalent(u: &[Letter], v: &[Letter]) -> bool {
    let k = u.len().min(v.len());
    u[..k] == v[..k]
}

/// Minimum eligible string index for the extension machinery: `8s - 4`.
pub fn min_eligible_n(ts: &TransitionSystem) -> usize {
    8 * ts.size() - 4
}

/// Decide whether `gamma` has the exceptional shape that the extension
/// lemma excludes: identical leading general blocks `a a ... a` followed by
/// a tail that is a general block or double general block not equivalent
/// to `aa`.
///
/// Preconditions: `gamma` valid, its next-to-last letter nondegenerate, and
/// string index `n >= 8s - 4`.
pub fn detect_exceptional(ts: &TransitionSystem, gamma: &Word) -> Result<ExceptionalForm> {
    ts.require_valid(gamma)?;
    let n = gamma.n()?;
    if n < min_eligible_n(ts) {
        return input_err(format!(
            "gamma has string index {n}, below the eligible minimum {}",
            min_eligible_n(ts)
        ));
    }
    if ts.is_degenerate(gamma.at(n - 1)) {
        return input_err("next-to-last letter of gamma is degenerate");
    }
    let g = gamma.letters();
    let mut witnesses = Vec::new();
    for block_len in 1..g.len() {
        let a0 = &g[..block_len];
        if !is_general_block(ts, a0) {
            continue;
        }
        let aa: Vec<Letter> = [a0, a0].concat();
        let mut copies = 1usize;
        while (copies + 1) * block_len < g.len()
            && &g[copies * block_len..(copies + 1) * block_len] == a0
        {
            copies += 1;
        }
        // try every prefix of identical copies; the tail is what remains
        for t in 1..=copies {
            let tail = &g[t * block_len..];
            if tail.is_empty() || equivalent(tail, &aa) {
                continue;
            }
            if is_general_block(ts, tail) {
                witnesses.push(ExceptionalWitness {
                    repeated_block: Word::from_letters(a0.to_vec()),
                    copies: t,
                    tail_kind: TailKind::GeneralBlock,
                });
            }
            if is_double_general_block(ts, tail) {
                witnesses.push(ExceptionalWitness {
                    repeated_block: Word::from_letters(a0.to_vec()),
                    copies: t,
                    tail_kind: TailKind::DoubleGeneralBlock,
                });
            }
        }
    }
    Ok(ExceptionalForm { witnesses })
}

/// Which branch of the extension case analysis produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtensionCase {
    /// No partial matches.
    #[serde(rename = "1")]
    One,
    /// Exactly one partial match.
    #[serde(rename = "2")]
    Two,
    /// Two or more partial matches whose repeating substring is a general block.
    #[serde(rename = "3A")]
    ThreeA,
    /// Two or more partial matches whose repeating substring is not a
    /// general block.
    #[serde(rename = "3B")]
    ThreeB,
}

impl std::fmt::Display for ExtensionCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExtensionCase::One => "1",
            ExtensionCase::Two => "2",
            ExtensionCase::ThreeA => "3A",
            ExtensionCase::ThreeB => "3B",
        };
        write!(f, "{s}")
    }
}

/// The two appended pieces produced by [`no_matching_extend`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    /// First appended piece, at most `s` letters.
    pub b0: Word,
    /// Second appended piece, at most `s` letters.
    pub b1: Word,
    /// Case label of the analysis branch taken.
    pub case: ExtensionCase,
}

impl Extension {
    /// Both pieces concatenated.
    pub fn appended(&self) -> Word {
        self.b0.concat(&self.b1)
    }
}

/// A live threat: a partial match whose required letters have all appeared
/// so far. `next` is the `gamma`-index the next appended letter must equal
/// for the threat to stay alive.
#[derive(Debug, Clone, Copy)]
struct LiveHead {
    head: usize,
    next: usize,
}

/// Tracks which partial matches remain alive while letters are appended.
struct Tracker<'a> {
    gamma: &'a [Letter],
    n: usize,
    live: Vec<LiveHead>,
}

impl<'a> Tracker<'a> {
    fn new(gamma: &'a Word, heads: &[PartialMatch]) -> Self {
        let n = gamma.len() - 1;
        Self {
            gamma: gamma.letters(),
            n,
            live: heads.iter().map(|p| LiveHead { head: p.head, next: p.matched_len }).collect(),
        }
    }

    /// Letters that would complete some live threat outright (at most one
    /// distinct value: the final letter of `gamma`).
    fn completing(&self) -> BTreeSet<Letter> {
        self.live.iter().filter(|h| h.next == self.n).map(|h| self.gamma[h.next]).collect()
    }

    /// Next required letters of all live threats.
    fn requirements(&self) -> BTreeSet<Letter> {
        self.live.iter().map(|h| self.gamma[h.next]).collect()
    }

    fn requirement_of(&self, head: usize) -> Option<Letter> {
        self.live.iter().find(|h| h.head == head).map(|h| self.gamma[h.next])
    }

    /// Record an appended letter; errors if a threat completes a match.
    fn advance(&mut self, letter: Letter) -> Result<()> {
        let gamma = self.gamma;
        let n = self.n;
        let mut completed = None;
        self.live.retain(|h| {
            if gamma[h.next] != letter {
                return false;
            }
            if h.next == n {
                completed = Some(h.head);
                return false;
            }
            true
        });
        for h in &mut self.live {
            h.next += 1;
        }
        match completed {
            Some(head) => {
                Err(Error::Defect(format!("appended letter completed a match at head {head}")))
            }
            None => Ok(()),
        }
    }
}

/// Piece builder: appends forced letters while the current last letter is
/// degenerate, then a deflection letter chosen to dodge a ban set.
struct PieceBuilder<'a> {
    ts: &'a TransitionSystem,
    tracker: Tracker<'a>,
    last: Letter,
    appended: Vec<Letter>,
}

impl PieceBuilder<'_> {
    fn push(&mut self, letter: Letter) -> Result<()> {
        debug_assert!(self.ts.allows(self.last, letter));
        self.tracker.advance(letter)?;
        self.appended.push(letter);
        self.last = letter;
        Ok(())
    }

    /// Append the forced continuation while the last letter is degenerate.
    /// Chains never revisit a letter, so at most `s - 1` letters appear.
    fn forced_chain(&mut self) -> Result<()> {
        let mut count = 0usize;
        while self.ts.is_degenerate(self.last) {
            let next = self.ts.successors(self.last)[0];
            self.push(next)?;
            count += 1;
            if count >= self.ts.size() {
                return Err(Error::Defect("forced chain exceeded alphabet size".into()));
            }
        }
        Ok(())
    }

    /// Append the smallest valid letter avoiding `ban`, tiering down to the
    /// mandatory completion-letter ban when `ban` blocks every successor.
    /// Returns false only if even the mandatory ban blocks everything.
    fn deflect(&mut self, recipe_ban: &BTreeSet<Letter>) -> Result<bool> {
        let mandatory = self.tracker.completing();
        let succ = self.ts.successors(self.last).to_vec();
        let full: BTreeSet<Letter> = recipe_ban.union(&mandatory).copied().collect();
        let pick = succ
            .iter()
            .copied()
            .find(|c| !full.contains(c))
            .or_else(|| succ.iter().copied().find(|c| !mandatory.contains(c)));
        match pick {
            Some(c) => {
                self.push(c)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

fn eligibility(ts: &TransitionSystem, gamma: &Word, alpha: &Word) -> Result<(usize, usize)> {
    ts.require_valid(gamma)?;
    ts.require_valid(alpha)?;
    let n = gamma.n()?;
    let cap = alpha.n().map_err(|_| Error::Input("alpha must be nonempty".into()))?;
    if n < min_eligible_n(ts) {
        return input_err(format!("gamma index {n} below eligible minimum {}", min_eligible_n(ts)));
    }
    if cap < n {
        return input_err(format!("alpha index {cap} shorter than gamma index {n}"));
    }
    if ts.is_degenerate(gamma.at(n - 1)) {
        return input_err("next-to-last letter of gamma is degenerate");
    }
    let exc = detect_exceptional(ts, gamma)?;
    if exc.is_exceptional() {
        return input_err("gamma has the exceptional repeated-block shape");
    }
    if !find_matches(gamma, alpha).is_empty() {
        return input_err("alpha already contains a match of gamma");
    }
    Ok((n, cap))
}

/// Classify the partial-match configuration into the case tree.
fn classify(ts: &TransitionSystem, gamma: &Word, heads: &[PartialMatch]) -> ExtensionCase {
    match heads.len() {
        0 => ExtensionCase::One,
        1 => ExtensionCase::Two,
        _ => {
            let period = heads[1].head - heads[0].head;
            let c = &gamma.letters()[..period];
            if is_general_block(ts, c) {
                ExtensionCase::ThreeA
            } else {
                ExtensionCase::ThreeB
            }
        }
    }
}

/// Append two pieces `b0`, `b1` (each at most `s` letters) to `alpha` so
/// that no valid continuation within the remaining window of one
/// `gamma`-length can complete a match of `gamma`.
///
/// Preconditions: `N >= n >= 8s - 4` for the string indices of `alpha` and
/// `gamma`, the next-to-last letter of `gamma` nondegenerate, `gamma` not
/// exceptional, and no match of `gamma` with `alpha`.
pub fn no_matching_extend(ts: &TransitionSystem, gamma: &Word, alpha: &Word) -> Result<Extension> {
    let _ = eligibility(ts, gamma, alpha)?;
    let heads = find_partial_matches(gamma, alpha);
    let case = classify(ts, gamma, &heads);
    if let Some(ext) = primary_recipe(ts, gamma, alpha, &heads, case)? {
        return Ok(ext);
    }
    fallback_search(ts, gamma, &heads, alpha, case)
}

/// The constructive per-case recipe. Returns `None` when a deflection point
/// cannot dodge every live requirement and a live threat survives; the
/// bounded fallback search then takes over.
fn primary_recipe(
    ts: &TransitionSystem,
    gamma: &Word,
    alpha: &Word,
    heads: &[PartialMatch],
    case: ExtensionCase,
) -> Result<Option<Extension>> {
    let mut b = PieceBuilder {
        ts,
        tracker: Tracker::new(gamma, heads),
        last: *alpha.letters().last().unwrap(),
        appended: Vec::new(),
    };

    // piece b0
    if b.tracker.live.is_empty() {
        b.deflect(&BTreeSet::new())?;
    } else {
        b.forced_chain()?;
        let recipe_ban: BTreeSet<Letter> = match case {
            ExtensionCase::One => BTreeSet::new(),
            ExtensionCase::Two => b.tracker.requirements(),
            ExtensionCase::ThreeA => {
                // deflect the repeating-substring continuation shared by the
                // later heads; the deepest head may survive into b1
                let deepest = heads[0].head;
                b.tracker
                    .live
                    .iter()
                    .filter(|h| h.head != deepest)
                    .map(|h| b.tracker.gamma[h.next])
                    .collect()
            }
            // deflect the deepest head's own continuation
            ExtensionCase::ThreeB => b.tracker.requirement_of(heads[0].head).into_iter().collect(),
        };
        // prefer killing every live threat at once when the alphabet allows
        let tier1: BTreeSet<Letter> =
            b.tracker.requirements().union(&recipe_ban).copied().collect();
        if !b.deflect(&tier1)? {
            return Ok(None);
        }
    }
    let b0_len = b.appended.len();
    if b0_len > ts.size() {
        return Ok(None);
    }

    // piece b1
    if b.tracker.live.is_empty() {
        b.deflect(&BTreeSet::new())?;
    } else {
        b.forced_chain()?;
        if b.tracker.live.is_empty() {
            b.deflect(&BTreeSet::new())?;
        } else if !b.deflect(&b.tracker.requirements())? {
            return Ok(None);
        }
    }
    let b1_len = b.appended.len() - b0_len;
    if b1_len > ts.size() || !b.tracker.live.is_empty() {
        return Ok(None);
    }

    let b0 = Word::from_letters(b.appended[..b0_len].to_vec());
    let b1 = Word::from_letters(b.appended[b0_len..].to_vec());
    Ok(Some(Extension { b0, b1, case }))
}

/// Deterministic bounded search over all piece pairs, smallest first. Only
/// reached when the constructive recipe leaves a live threat; every eligible
/// input admits some pair, so exhaustion is an internal defect.
fn fallback_search(
    ts: &TransitionSystem,
    gamma: &Word,
    heads: &[PartialMatch],
    alpha: &Word,
    case: ExtensionCase,
) -> Result<Extension> {
    let s = ts.size();
    let last = *alpha.letters().last().unwrap();
    let mut candidates: Vec<Vec<Letter>> = Vec::new();
    let mut frontier: Vec<Vec<Letter>> = vec![Vec::new()];
    for _ in 0..2 * s {
        let mut next = Vec::new();
        for seq in &frontier {
            let from = *seq.last().unwrap_or(&last);
            for &c in ts.successors(from) {
                let mut ext = seq.clone();
                ext.push(c);
                candidates.push(ext.clone());
                next.push(ext);
            }
        }
        frontier = next;
    }
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    for seq in &candidates {
        if seq.len() < 2 {
            continue;
        }
        let mut tracker = Tracker::new(gamma, heads);
        let mut ok = true;
        for &c in seq.iter() {
            if tracker.advance(c).is_err() {
                ok = false;
                break;
            }
        }
        if !(ok && tracker.live.is_empty()) {
            continue;
        }
        for split in 1..seq.len() {
            if split <= s && seq.len() - split <= s {
                return Ok(Extension {
                    b0: Word::from_letters(seq[..split].to_vec()),
                    b1: Word::from_letters(seq[split..].to_vec()),
                    case,
                });
            }
        }
    }
    Err(Error::Defect(
        "case-analysis exhaustion: no piece pair neutralizes every partial match".into(),
    ))
}

/// Outcome of the all-continuations oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutcome {
    /// True when no continuation up to the budget creates a match.
    pub ok: bool,
    /// A shortest continuation creating a match, when one exists.
    pub counterexample: Option<Word>,
    /// The continuation budget actually certified.
    pub checked_to: usize,
}

/// Exhaustive all-continuations check: does some valid `beta` with
/// `l(beta) <= budget` make `alpha . ext . beta` contain a match of `gamma`?
///
/// The budget is clamped to `n - l(ext)` so the total appended length stays
/// within one `gamma`-length, the window the extension guarantees; within
/// it any match must begin inside `alpha`, so the search prunes branches
/// with no live partial match. Passing at the returned budget implies
/// passing at every smaller budget (a shorter counterexample is found
/// first).
pub fn verify_extension(
    ts: &TransitionSystem,
    gamma: &Word,
    alpha: &Word,
    ext: &Word,
    budget: usize,
) -> Result<OracleOutcome> {
    ts.require_valid(gamma)?;
    let n = gamma.n()?;
    let full = alpha.concat(ext);
    ts.require_valid(&full)?;
    if ext.len() > n {
        return input_err("extension longer than gamma");
    }
    let budget = budget.min(n - ext.len());
    if !find_matches(gamma, &full).is_empty() {
        return Ok(OracleOutcome {
            ok: false,
            counterexample: Some(Word::empty()),
            checked_to: budget,
        });
    }
    // only threats anchored inside alpha can complete within the window
    let threats: Vec<PartialMatch> = find_partial_matches(gamma, &full)
        .into_iter()
        .filter(|p| p.head < alpha.len())
        .collect();
    let mut tracker = Tracker::new(gamma, &threats);
    let mut beta: Vec<Letter> = Vec::new();
    let last = *full.letters().last().unwrap();
    let found = dfs_match(ts, &mut tracker, last, &mut beta, budget);
    Ok(OracleOutcome {
        ok: found.is_none(),
        counterexample: found.map(Word::from_letters),
        checked_to: budget,
    })
}

fn dfs_match(
    ts: &TransitionSystem,
    tracker: &mut Tracker<'_>,
    last: Letter,
    beta: &mut Vec<Letter>,
    budget: usize,
) -> Option<Vec<Letter>> {
    if tracker.live.is_empty() || beta.len() == budget {
        return None;
    }
    for &c in ts.successors(last) {
        let saved = tracker.live.clone();
        beta.push(c);
        if tracker.advance(c).is_err() {
            let hit = beta.clone();
            beta.pop();
            tracker.live = saved;
            return Some(hit);
        }
        if let Some(hit) = dfs_match(ts, tracker, c, beta, budget) {
            beta.pop();
            tracker.live = saved;
            return Some(hit);
        }
        beta.pop();
        tracker.live = saved;
    }
    None
}

/// Plain enumeration form of the oracle, used to cross-validate the pruned
/// search on small inputs. Exponential in the budget.
pub fn verify_extension_naive(
    ts: &TransitionSystem,
    gamma: &Word,
    alpha: &Word,
    ext: &Word,
    budget: usize,
) -> Result<OracleOutcome> {
    let n = gamma.n()?;
    let full = alpha.concat(ext);
    ts.require_valid(&full)?;
    if ext.len() > n {
        return input_err("extension longer than gamma");
    }
    let budget = budget.min(n - ext.len());
    let mut passed_upto: Option<usize> = None;
    for len in 0..=budget {
        let hit = if len == 0 {
            if find_matches(gamma, &full).is_empty() {
                None
            } else {
                Some(Word::empty())
            }
        } else {
            let mut found = None;
            for beta in ts.words(len - 1, Some(&full))? {
                if !find_matches(gamma, &beta).is_empty() {
                    found = Some(Word::from_letters(beta.letters()[full.len()..].to_vec()));
                    break;
                }
            }
            found
        };
        if let Some(beta) = hit {
            // monotone restriction: a failure never appears after a pass at
            // a longer horizon, because matches persist under extension
            assert!(passed_upto.map_or(true, |p| p + 1 == len || len == 0));
            return Ok(OracleOutcome { ok: false, counterexample: Some(beta), checked_to: budget });
        }
        passed_upto = Some(len);
    }
    Ok(OracleOutcome { ok: true, counterexample: None, checked_to: budget })
}

/// One step of a serial extension.
#[derive(Debug, Clone)]
pub struct SerialStep {
    /// Index of the processed word in the input list.
    pub target_index: usize,
    /// Its least partial-match head at processing time, if it had one.
    pub least_head: Option<usize>,
    /// Gap to the previously processed word's least head.
    pub head_gap: Option<usize>,
    /// The appended piece pair.
    pub extension: Extension,
}

/// Result of [`serial_extend`].
#[derive(Debug, Clone)]
pub struct SerialExtension {
    /// Per-word steps in processing order.
    pub steps: Vec<SerialStep>,
    /// Every appended letter, in order.
    pub appended: Word,
}

/// Check the pairwise tail-separation precondition: for every ordered pair
/// and every shift `t <= 2s`, the shifted word and the other word disagree
/// at every one of the last `2s + 1` positions of their overlap.
pub fn check_separation(ts: &TransitionSystem, gammas: &[Word]) -> Result<()> {
    let s = ts.size();
    for (ia, ga) in gammas.iter().enumerate() {
        for (ib, gb) in gammas.iter().enumerate() {
            if ia == ib {
                continue;
            }
            let a = ga.letters();
            let b = gb.letters();
            for t in 0..=2 * s {
                if t >= a.len() {
                    break;
                }
                let u = &a[t..];
                let overlap = u.len().min(b.len());
                let window = overlap.min(2 * s + 1);
                for p in overlap - window..overlap {
                    if u[p] == b[p] {
                        return input_err(format!(
                            "words {} and {} agree at tail position {p} under shift {t}; \
                             the pair violates the 2s+1 disagreement requirement",
                            ia + 1,
                            ib + 1
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Serially neutralize several forbidden words: process them in order of
/// least partial-match head (ties by list order), appending one piece pair
/// per word, so that afterwards no valid continuation within the remaining
/// window can complete a match of any of them.
///
/// Preconditions: all words share one length with string index
/// `q >= 2sP + 1` (`P` = word count), pairwise tail separation holds, every
/// word is eligible for [`no_matching_extend`], and none matches `alpha`.
pub fn serial_extend(
    ts: &TransitionSystem,
    gammas: &[Word],
    alpha: &Word,
) -> Result<SerialExtension> {
    if gammas.is_empty() {
        return input_err("no target words supplied");
    }
    let q = gammas[0].n()?;
    for g in gammas {
        if g.n()? != q {
            return input_err("all target words must have the same length");
        }
    }
    let s = ts.size();
    let p_count = gammas.len();
    if q < 2 * s * p_count + 1 {
        return input_err(format!(
            "q = {q} too small for {p_count} words: need q >= 2sP + 1 = {}",
            2 * s * p_count + 1
        ));
    }
    if p_count > 1 {
        check_separation(ts, gammas)?;
    }
    for (i, g) in gammas.iter().enumerate() {
        if !find_matches(g, alpha).is_empty() {
            return input_err(format!("word {} already matches alpha", i + 1));
        }
    }

    let mut current = alpha.clone();
    let mut remaining: Vec<usize> = (0..p_count).collect();
    let mut steps = Vec::new();
    let mut appended = Word::empty();
    let mut prev_head: Option<usize> = None;
    while !remaining.is_empty() {
        // least smallest head first; head-free words last, in list order
        let pick_pos = remaining
            .iter()
            .enumerate()
            .min_by_key(|(_, &j)| {
                let heads = find_partial_matches(&gammas[j], &current);
                (heads.first().map_or(usize::MAX, |h| h.head), j)
            })
            .map(|(pos, _)| pos)
            .unwrap();
        let j = remaining.remove(pick_pos);
        let heads = find_partial_matches(&gammas[j], &current);
        let least_head = heads.first().map(|h| h.head);
        let head_gap = match (prev_head, least_head) {
            (Some(a), Some(b)) => Some(b.saturating_sub(a)),
            _ => None,
        };
        let ext = no_matching_extend(ts, &gammas[j], &current)?;
        current = current.concat(&ext.appended());
        appended = appended.concat(&ext.appended());
        // the separation precondition protects every unprocessed word
        for &k in &remaining {
            if !find_matches(&gammas[k], &current).is_empty() {
                return Err(Error::Defect(format!(
                    "appending for word {} created a match of word {}",
                    j + 1,
                    k + 1
                )));
            }
        }
        prev_head = least_head.or(prev_head);
        steps.push(SerialStep { target_index: j, least_head, head_gap, extension: ext });
    }
    Ok(SerialExtension { steps, appended })
}

/// CLI-facing JSON report for one extension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtensionReport {
    /// Target word.
    pub gamma: String,
    /// Base word.
    pub alpha: String,
    /// Case label.
    pub case: String,
    /// First piece.
    pub b0: String,
    /// Second piece.
    pub b1: String,
    /// Continuation budget certified by the oracle.
    pub oracle_checked_to: usize,
}

impl ExtensionReport {
    /// Build the report, running the oracle on the extension.
    pub fn new(ts: &TransitionSystem, gamma: &Word, alpha: &Word, ext: &Extension) -> Result<Self> {
        let n = gamma.n()?;
        let outcome = verify_extension(ts, gamma, alpha, &ext.appended(), n)?;
        if !outcome.ok {
            return Err(Error::Defect("extension failed its own oracle".into()));
        }
        Ok(Self {
            gamma: gamma.to_string(),
            alpha: alpha.to_string(),
            case: ext.case.to_string(),
            b0: ext.b0.to_string(),
            b1: ext.b1.to_string(),
            oracle_checked_to: outcome.checked_to,
        })
    }
}
