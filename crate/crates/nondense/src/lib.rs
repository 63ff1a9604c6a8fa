//! Symbolic dynamics of expanding circle maps with exact rational arithmetic.
//!
//! The crate covers, end to end, the machinery needed to build and certify
//! sets of points whose forward orbits avoid a target word or point:
//!
//! - [`sft`] — alphabets, transition matrices, valid words, degenerate
//!   letters and block decompositions (the symbolic substrate),
//! - [`matching`] — match/partial-match detection and the constructive
//!   string extension that makes a word permanently safe from a forbidden
//!   word, with a brute-force certification oracle,
//! - [`partition`] — Markov partitions of piecewise-linear expanding circle
//!   maps with exact rational endpoints, cylinder sets, boundary weights,
//!   distortion constants and interval fitting,
//! - [`avoidance`] — leveled avoidance collections, stage densities and
//!   certified Hausdorff-dimension lower bounds,
//! - [`oracle`] — forbidden-substring automata, exact word counts and
//!   spectral-radius dimension used as independent ground truth,
//! - [`game`] — the Schmidt game on the circle with a fitted-descent White
//!   strategy and machine-checkable transcripts,
//! - [`runner`] — experiment orchestration behind the `nondense` binary.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! examples/
//! ├── symbolic_basics.rs          # alphabets, valid words, blocks
//! ├── forbidden_word_extension.rs # safe extensions + oracle certificates
//! ├── circle_partitions.rs        # exact partitions, cylinders, weights
//! ├── avoidance_levels.rs         # level constructions and densities
//! ├── dimension_bounds.rs         # certified lower bounds vs. the oracle
//! ├── word_counting_oracle.rs     # automaton counts, spectral dimension
//! └── schmidt_game.rs             # play and verify a full game
//! ```
//!
//! Run one with `cargo run --example schmidt_game`.
//!
//! All geometry is exact: interval endpoints, measures, densities and game
//! radii are arbitrary-precision rationals. Logarithms appear only in the
//! final dimension bounds and are evaluated with directed rounding so that
//! every reported bound is a certified lower bound.

pub mod avoidance;
pub mod certlog;
pub mod game;
pub mod matching;
pub mod oracle;
pub mod partition;
pub mod runner;
pub mod sft;

use thiserror::Error;

/// Exact rational scalar used throughout the crate.
pub type Rat = num_rational::BigRational;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: input/validation problems are
/// exit 1, a failure of a strategy that is guaranteed to win is exit 2,
/// and internal defects are exit 3.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller supplied an argument outside an operation's contract.
    #[error("input error: {0}")]
    Input(String),
    /// A structural property failed to hold for supplied data.
    #[error("validation error: property {property} violated: {witness}")]
    Validation {
        /// Name of the violated property.
        property: String,
        /// Concrete witness of the violation.
        witness: String,
    },
    /// A computation exceeded a configured resource cap.
    #[error("resource error: {0}")]
    Resource(String),
    /// A level of an avoidance collection died (stage density zero).
    #[error("collection death at level {level}: stage density is zero")]
    CollectionDeath {
        /// First level whose density vanished.
        level: usize,
    },
    /// A winning strategy failed to produce a legal move.
    #[error("strategy failure: {0}")]
    StrategyFailure(String),
    /// An operation is outside the supported fragment.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// An internal invariant was violated. Must never fire.
    #[error("internal defect: {0}")]
    Defect(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

/// Parse a rational from a `"p/q"` or `"p"` string.
pub fn parse_rat(s: &str) -> Result<Rat> {
    use num_bigint::BigInt;
    use std::str::FromStr;
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n = BigInt::from_str(num.trim()).map_err(|e| Error::Input(format!("bad rational {s:?}: {e}")))?;
    let d = BigInt::from_str(den.trim()).map_err(|e| Error::Input(format!("bad rational {s:?}: {e}")))?;
    if d == BigInt::from(0) {
        return input_err(format!("bad rational {s:?}: zero denominator"));
    }
    Ok(Rat::new(n, d))
}

/// Render a rational as `"p/q"` (or `"p"` when the denominator is 1).
pub fn rat_str(r: &Rat) -> String {
    use num_traits::One;
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Convenience constructor for small rationals.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(n.into(), d.into())
}

/// Lossy `f64` rendering for reports; never used in computations.
pub fn rat_f64(r: &Rat) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}
