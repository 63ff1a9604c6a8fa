//! Markov partitions of piecewise-linear expanding circle maps with exact
//! rational endpoints.
//!
//! All geometry is exact: endpoints, measures and ratios are
//! arbitrary-precision rationals, so boundary membership and equality tests
//! never suffer rounding. The circle is `[0, 1)` with `0 = 1`; every
//! accepted partition has `0` as a breakpoint, so cylinder sets are plain
//! closed intervals.

use crate::sft::{Letter, TransitionSystem, Word};
use crate::{input_err, parse_rat, rat, rat_str, Error, Rat, Result};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;

/// Fractional part in `[0, 1)`.
pub fn frac(x: &Rat) -> Rat {
    let f = x.floor();
    x - f
}

/// Circle distance between two points of `[0, 1)`.
pub fn circle_dist(a: &Rat, b: &Rat) -> Rat {
    let d = frac(&(a - b));
    let alt = Rat::one() - &d;
    if d <= alt {
        d
    } else {
        alt
    }
}

/// A closed subinterval of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    /// Left endpoint.
    pub lo: Rat,
    /// Right endpoint.
    pub hi: Rat,
}

impl Interval {
    /// Construct; requires `lo <= hi`.
    pub fn new(lo: Rat, hi: Rat) -> Result<Self> {
        if lo > hi {
            return input_err("interval endpoints out of order");
        }
        Ok(Self { lo, hi })
    }

    /// Interval length.
    pub fn length(&self) -> Rat {
        &self.hi - &self.lo
    }

    /// Closed membership.
    pub fn contains_point(&self, x: &Rat) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    /// Whether `other` lies inside `self`.
    pub fn contains(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Intersection, possibly a single point; `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.clone().max(other.lo.clone());
        let hi = self.hi.clone().min(other.hi.clone());
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    /// Midpoint.
    pub fn midpoint(&self) -> Rat {
        (&self.lo + &self.hi) / rat(2, 1)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", rat_str(&self.lo), rat_str(&self.hi))
    }
}

/// An expanding self-map of the circle, linear on each branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CircleMap {
    /// `x -> m x (mod 1)` with integer degree `m >= 2`.
    Linear {
        /// Covering degree.
        degree: u32,
    },
    /// Continuous piecewise-linear covering with `T(0) = 0`, given by branch
    /// start points (first must be 0) and positive rational slopes `> 1`.
    PiecewiseLinear {
        /// Branch start points, sorted, starting at 0.
        breakpoints: Vec<Rat>,
        /// Slope of each branch.
        slopes: Vec<Rat>,
    },
}

impl CircleMap {
    /// Least expansion factor (a lower bound on all slopes).
    pub fn lambda(&self) -> Rat {
        match self {
            CircleMap::Linear { degree } => rat(*degree as i64, 1),
            CircleMap::PiecewiseLinear { slopes, .. } => {
                slopes.iter().cloned().reduce(|a, b| a.min(b)).unwrap()
            }
        }
    }

    /// Covering degree.
    pub fn degree(&self) -> Result<u32> {
        match self {
            CircleMap::Linear { degree } => Ok(*degree),
            CircleMap::PiecewiseLinear { breakpoints, slopes } => {
                let mut total = Rat::zero();
                for (i, slope) in slopes.iter().enumerate() {
                    let lo = &breakpoints[i];
                    let hi = if i + 1 < breakpoints.len() {
                        breakpoints[i + 1].clone()
                    } else {
                        Rat::one()
                    };
                    total += slope * (hi - lo);
                }
                if !total.denom().is_one() || total < rat(2, 1) {
                    return input_err(format!(
                        "piecewise-linear map has non-integer or small degree {}",
                        rat_str(&total)
                    ));
                }
                Ok(total.numer().to_u32().ok_or_else(|| Error::Input("degree overflow".into()))?)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CircleMap::Linear { degree } => {
                if *degree < 2 {
                    return input_err("linear map degree must be at least 2");
                }
            }
            CircleMap::PiecewiseLinear { breakpoints, slopes } => {
                if breakpoints.len() != slopes.len() || breakpoints.is_empty() {
                    return input_err("breakpoints and slopes must have equal nonzero length");
                }
                if !breakpoints[0].is_zero() {
                    return input_err("the first branch must start at 0");
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1])
                    || breakpoints.iter().any(|b| b < &Rat::zero() || b >= &Rat::one())
                {
                    return input_err("branch start points must be sorted within [0, 1)");
                }
                for s in slopes {
                    if *s <= Rat::one() {
                        return Err(Error::Unsupported(
                            "branch slopes must be rational and greater than 1; \
                             orientation-reversing branches are not supported"
                                .into(),
                        ));
                    }
                }
                self.degree()?;
            }
        }
        Ok(())
    }

    /// Affine form `T(x) = a x + b` valid on the branch containing
    /// `[lo, hi]`; errors if the interval straddles a branch point.
    fn affine_on(&self, lo: &Rat, hi: &Rat) -> Result<(Rat, Rat)> {
        match self {
            CircleMap::Linear { degree } => Ok((rat(*degree as i64, 1), Rat::zero())),
            CircleMap::PiecewiseLinear { breakpoints, slopes } => {
                let mut value = Rat::zero(); // T at the branch start
                for (i, slope) in slopes.iter().enumerate() {
                    let b_lo = &breakpoints[i];
                    let b_hi = if i + 1 < breakpoints.len() {
                        breakpoints[i + 1].clone()
                    } else {
                        Rat::one()
                    };
                    if lo >= b_lo && *hi <= b_hi {
                        let offset = &value - slope * b_lo;
                        return Ok((slope.clone(), offset));
                    }
                    value += slope * (&b_hi - b_lo);
                }
                Err(Error::Validation {
                    property: "(5) Markov images".into(),
                    witness: format!(
                        "element [{}, {}] straddles a branch point of the map",
                        rat_str(lo),
                        rat_str(hi)
                    ),
                })
            }
        }
    }

    /// Apply the map exactly, returning a point of `[0, 1)`.
    pub fn apply(&self, x: &Rat) -> Rat {
        let x = frac(x);
        match self {
            CircleMap::Linear { degree } => frac(&(rat(*degree as i64, 1) * x)),
            CircleMap::PiecewiseLinear { breakpoints, slopes } => {
                let mut value = Rat::zero();
                for (i, slope) in slopes.iter().enumerate() {
                    let b_lo = &breakpoints[i];
                    let b_hi = if i + 1 < breakpoints.len() {
                        breakpoints[i + 1].clone()
                    } else {
                        Rat::one()
                    };
                    if x >= *b_lo && x < b_hi {
                        return frac(&(value + slope * (x - b_lo)));
                    }
                    value += slope * (&b_hi - b_lo);
                }
                unreachable!("x in [0,1) always lands in a branch")
            }
        }
    }

    /// All preimages of `y` in `[0, 1)`, exactly.
    pub fn preimages(&self, y: &Rat) -> Vec<Rat> {
        let y = frac(y);
        match self {
            CircleMap::Linear { degree } => {
                let m = rat(*degree as i64, 1);
                (0..*degree).map(|k| (&y + rat(k as i64, 1)) / &m).collect()
            }
            CircleMap::PiecewiseLinear { breakpoints, slopes } => {
                let mut out = Vec::new();
                let mut value = Rat::zero();
                for (i, slope) in slopes.iter().enumerate() {
                    let b_lo = breakpoints[i].clone();
                    let b_hi = if i + 1 < breakpoints.len() {
                        breakpoints[i + 1].clone()
                    } else {
                        Rat::one()
                    };
                    let v_hi = &value + slope * (&b_hi - &b_lo);
                    // solve value + slope (x - b_lo) = y + k
                    let mut k = value.floor();
                    loop {
                        let target = &y + &k;
                        if target >= v_hi {
                            break;
                        }
                        if target >= value {
                            let x = &b_lo + (target - &value) / slope;
                            if x >= b_lo && x < b_hi {
                                out.push(x);
                            }
                        }
                        k += Rat::one();
                    }
                    value = v_hi;
                }
                out.sort();
                out.dedup();
                out
            }
        }
    }

    /// Injectivity diameter: the map is injective on any set of diameter
    /// strictly below this value. Exactly `1/m` for the linear map; for
    /// piecewise-linear maps, the least circle distance between distinct
    /// preimages of a common point.
    pub fn injectivity_diameter(&self) -> Result<Rat> {
        match self {
            CircleMap::Linear { degree } => Ok(Rat::new(BigInt::one(), BigInt::from(*degree))),
            CircleMap::PiecewiseLinear { breakpoints, .. } => {
                // candidate minima occur at branch endpoints' images
                let mut candidates: Vec<Rat> = breakpoints.clone();
                for b in breakpoints {
                    candidates.push(self.apply(b));
                }
                candidates.push(Rat::zero());
                let mut best: Option<Rat> = None;
                for y in candidates.iter().map(|c| self.apply(c)).chain(candidates.iter().cloned())
                {
                    let pre = self.preimages(&y);
                    for i in 0..pre.len() {
                        for j in i + 1..pre.len() {
                            let d = circle_dist(&pre[i], &pre[j]);
                            if d.is_positive() {
                                best = Some(match best {
                                    Some(b) => b.min(d),
                                    None => d,
                                });
                            }
                        }
                    }
                }
                best.ok_or_else(|| Error::Defect("covering map with a single sheet".into()))
            }
        }
    }
}

/// A cylinder set: the interval of points whose first `generation + 1`
/// itinerary letters are `word`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cylinder {
    /// Defining word.
    pub word: Word,
    /// Exact interval.
    pub interval: Interval,
    /// Exact measure (= length).
    pub measure: Rat,
    /// Generation: `word` is a `generation`-string.
    pub generation: usize,
}

/// Side convention for itineraries at boundary points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Limit from below: half-open elements `(a, b]`.
    Left,
    /// Limit from above: half-open elements `[a, b)`.
    Right,
}

/// All depth-truncated symbolic representations of a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Representation {
    /// The represented point.
    pub point: Rat,
    /// Distinct truncations (1 or 2 for interval partitions).
    pub words: Vec<Word>,
    /// Number of distinct representations at this depth.
    pub count: usize,
}

/// Which branch of the fitting analysis applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitCase {
    /// The interval straddles a weight-0 point and was split there.
    SplitAtWeightZero,
    /// No weight-0 point; at least two boundary points of the least
    /// generation lie inside.
    Interior,
    /// No weight-0 point; exactly one boundary point of the least
    /// generation, split there.
    InteriorSplit,
}

/// Result of [`MarkovPartition::fit_interval`].
#[derive(Debug, Clone)]
pub struct Fit {
    /// The least generation containing an element inside the interval.
    pub n: usize,
    /// Element of generation `n - 1` holding at least half the interval.
    pub eta: Cylinder,
    /// Element of generation `n` inside both the interval and `eta`.
    pub inner: Cylinder,
    /// Analysis branch taken.
    pub case: FitCase,
}

/// A Markov partition of the circle into closed rational intervals.
#[derive(Debug)]
pub struct MarkovPartition {
    map: CircleMap,
    /// Partition breakpoints, sorted, starting with 0.
    points: Vec<Rat>,
    elements: Vec<Interval>,
    /// Affine form of the map on each element.
    affines: Vec<(Rat, Rat)>,
    ts: TransitionSystem,
    endpoint_tolerant: bool,
    lambda: Rat,
    delta_t: Rat,
    distortion_c: Rat,
    ratio_r: Rat,
    degree: u32,
    distortion_cache: Mutex<BTreeMap<usize, (Vec<Rat>, Vec<Rat>)>>,
}

impl MarkovPartition {
    /// Uniform partition of `[0, 1)` into `m^s_exponent` equal intervals for
    /// the degree-`m` linear map. For `s_exponent = 1` the diameter equals
    /// the injectivity threshold, so the partition is built
    /// endpoint-tolerant.
    pub fn build_uniform(m: u32, s_exponent: u32) -> Result<Self> {
        if m < 2 || s_exponent < 1 {
            return input_err("need m >= 2 and s_exponent >= 1");
        }
        let count = (m as u64).checked_pow(s_exponent).ok_or_else(|| {
            Error::Input("partition size overflow".into())
        })?;
        if count > 4096 {
            return Err(Error::Resource(format!("uniform partition with {count} elements")));
        }
        let points: Vec<Rat> =
            (0..count).map(|i| Rat::new(BigInt::from(i), BigInt::from(count))).collect();
        Self::build_custom(CircleMap::Linear { degree: m }, points, s_exponent == 1)
    }

    /// Validate breakpoints against the map and build the partition,
    /// computing the transition matrix, distortion constant, measure ratio
    /// and injectivity compatibility.
    pub fn build_custom(
        map: CircleMap,
        mut breakpoints: Vec<Rat>,
        endpoint_tolerant: bool,
    ) -> Result<Self> {
        map.validate()?;
        breakpoints.sort();
        breakpoints.dedup();
        if breakpoints.is_empty() || !breakpoints[0].is_zero() {
            return input_err("0 must be a breakpoint of every accepted partition");
        }
        if breakpoints.iter().any(|b| b < &Rat::zero() || b >= &Rat::one()) {
            return input_err("breakpoints must lie in [0, 1)");
        }
        if breakpoints.len() < 2 {
            return input_err("a partition needs at least two elements");
        }
        let s = breakpoints.len();
        let mut elements = Vec::with_capacity(s);
        for i in 0..s {
            let lo = breakpoints[i].clone();
            let hi = if i + 1 < s { breakpoints[i + 1].clone() } else { Rat::one() };
            elements.push(Interval::new(lo, hi)?);
        }

        let delta_t = map.injectivity_diameter()?;
        let max_len =
            elements.iter().map(Interval::length).reduce(|a, b| a.max(b)).unwrap();
        if max_len >= delta_t && !endpoint_tolerant {
            return Err(Error::Validation {
                property: "small diameter".into(),
                witness: format!(
                    "element diameter {} is not below the injectivity threshold {}; \
                     pass endpoint_tolerant to accept",
                    rat_str(&max_len),
                    rat_str(&delta_t)
                ),
            });
        }

        // affine form and Markov image of every element
        let mut affines = Vec::with_capacity(s);
        let mut matrix = vec![vec![0u8; s]; s];
        for (i, el) in elements.iter().enumerate() {
            let (a, b) = map.affine_on(&el.lo, &el.hi)?;
            let img_lo = &a * &el.lo + &b;
            let img_hi = &a * &el.hi + &b;
            let img_len = &img_hi - &img_lo;
            if img_len > Rat::one() {
                return Err(Error::Validation {
                    property: "small diameter".into(),
                    witness: format!("image of element {} wraps the circle more than once", i + 1),
                });
            }
            // image endpoints must be breakpoints for property (5)
            for (endpoint, side) in [(&img_lo, "left"), (&img_hi, "right")] {
                let f = frac(endpoint);
                if !breakpoints.contains(&f) {
                    return Err(Error::Validation {
                        property: "(5) Markov images".into(),
                        witness: format!(
                            "image of element {} ([{}, {}]) has {side} endpoint {} \
                             which is not a breakpoint",
                            i + 1,
                            rat_str(&el.lo),
                            rat_str(&el.hi),
                            rat_str(&f),
                        ),
                    });
                }
            }
            // mark covered elements
            if img_len == Rat::one() {
                for j in 0..s {
                    matrix[i][j] = 1;
                }
            } else {
                let start = frac(&img_lo);
                let mut pos = breakpoints.iter().position(|b| *b == start).unwrap();
                let mut covered = Rat::zero();
                while covered < img_len {
                    matrix[i][pos] = 1;
                    covered += elements[pos].length();
                    pos = (pos + 1) % s;
                }
                if covered != img_len {
                    return Err(Error::Validation {
                        property: "(5) Markov images".into(),
                        witness: format!("image of element {} is not a union of elements", i + 1),
                    });
                }
            }
            affines.push((a, b));
        }

        let ts = TransitionSystem::from_ints(&matrix)?;
        let min_len =
            elements.iter().map(Interval::length).reduce(|a, b| a.min(b)).unwrap();
        let ratio_r = &min_len / &max_len;
        Ok(Self {
            lambda: map.lambda(),
            degree: map.degree()?,
            map,
            points: breakpoints,
            elements,
            affines,
            ts,
            endpoint_tolerant,
            delta_t,
            distortion_c: Rat::one(),
            ratio_r,
            distortion_cache: Mutex::new(BTreeMap::new()),
        })
    }

    /// Relabel the elements by a permutation: `perm[i]` is the new letter
    /// (1-based) of old letter `i + 1`.
    pub fn relabel(&self, perm: &[Letter]) -> Result<Self> {
        let s = self.size();
        let mut seen = vec![false; s];
        if perm.len() != s {
            return input_err("permutation length mismatch");
        }
        for &p in perm {
            if p == 0 || p as usize > s || seen[(p - 1) as usize] {
                return input_err("not a permutation");
            }
            seen[(p - 1) as usize] = true;
        }
        let mut elements = self.elements.clone();
        let mut affines = self.affines.clone();
        let mut matrix = vec![vec![0u8; s]; s];
        for i in 0..s {
            let ni = (perm[i] - 1) as usize;
            elements[ni] = self.elements[i].clone();
            affines[ni] = self.affines[i].clone();
            for j in 0..s {
                if self.ts.allows((i + 1) as Letter, (j + 1) as Letter) {
                    matrix[ni][(perm[j] - 1) as usize] = 1;
                }
            }
        }
        Ok(Self {
            map: self.map.clone(),
            points: self.points.clone(),
            elements,
            affines,
            ts: TransitionSystem::from_ints(&matrix)?,
            endpoint_tolerant: self.endpoint_tolerant,
            lambda: self.lambda.clone(),
            delta_t: self.delta_t.clone(),
            distortion_c: self.distortion_c.clone(),
            ratio_r: self.ratio_r.clone(),
            degree: self.degree,
            distortion_cache: Mutex::new(BTreeMap::new()),
        })
    }

    /// Override the bounded-distortion constant with a user-supplied value.
    /// Piecewise-linear maps have exactly 1; a larger value is accepted
    /// verbatim for externally-estimated nonlinear maps, without validation.
    pub fn with_distortion_constant(mut self, c: Rat) -> Result<Self> {
        if c < Rat::one() {
            return input_err("distortion constant must be at least 1");
        }
        self.distortion_c = c;
        Ok(self)
    }

    /// Number of elements (= alphabet size).
    pub fn size(&self) -> usize {
        self.elements.len()
    }

    /// The underlying map.
    pub fn map(&self) -> &CircleMap {
        &self.map
    }

    /// Induced transition system.
    pub fn ts(&self) -> &TransitionSystem {
        &self.ts
    }

    /// Element interval of a letter.
    pub fn element(&self, letter: Letter) -> &Interval {
        &self.elements[(letter - 1) as usize]
    }

    /// Measure of an element.
    pub fn sigma(&self, letter: Letter) -> Rat {
        self.element(letter).length()
    }

    /// Expansion lower bound.
    pub fn lambda(&self) -> &Rat {
        &self.lambda
    }

    /// Injectivity threshold of the map.
    pub fn delta_t(&self) -> &Rat {
        &self.delta_t
    }

    /// Bounded-distortion constant `C` (exactly 1 here unless overridden).
    pub fn distortion_constant(&self) -> &Rat {
        &self.distortion_c
    }

    /// Smallest-to-largest element measure ratio.
    pub fn measure_ratio(&self) -> &Rat {
        &self.ratio_r
    }

    /// Covering degree of the map.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Whether the partition was accepted at the injectivity threshold.
    pub fn endpoint_tolerant(&self) -> bool {
        self.endpoint_tolerant
    }

    /// Partition breakpoints (the weight-0 boundary set).
    pub fn breakpoints(&self) -> &[Rat] {
        &self.points
    }

    /// Smallest element length.
    pub fn min_element_length(&self) -> Rat {
        self.elements.iter().map(Interval::length).reduce(|a, b| a.min(b)).unwrap()
    }

    /// Largest element length.
    pub fn max_element_length(&self) -> Rat {
        self.elements.iter().map(Interval::length).reduce(|a, b| a.max(b)).unwrap()
    }

    /// Exact cylinder interval of a valid word, by right-to-left pullback.
    pub fn cylinder(&self, word: &Word) -> Result<Cylinder> {
        self.ts.require_valid(word)?;
        let n = word.n()?;
        let mut iv = self.element(word.at(n)).clone();
        for t in (0..n).rev() {
            let el = self.element(word.at(t));
            let (a, b) = &self.affines[(word.at(t) - 1) as usize];
            let img_lo = a * &el.lo + b;
            let img_hi = a * &el.hi + b;
            // lift iv into the real image window [img_lo, img_hi]
            let t_lo = (&img_lo - &iv.hi).ceil();
            let t_hi = (&img_hi - &iv.lo).floor();
            let mut lifted: Option<Interval> = None;
            let mut k = t_lo;
            while k <= t_hi {
                let lo = (&iv.lo + &k).max(img_lo.clone());
                let hi = (&iv.hi + &k).min(img_hi.clone());
                if lo < hi {
                    if lifted.is_some() {
                        return Err(Error::Defect(format!(
                            "cylinder for {word} is disconnected"
                        )));
                    }
                    lifted = Some(Interval { lo, hi });
                }
                k += Rat::one();
            }
            let lifted = lifted.ok_or_else(|| {
                Error::Defect(format!("cylinder for {word} has empty interior"))
            })?;
            iv = Interval { lo: (&lifted.lo - b) / a, hi: (&lifted.hi - b) / a };
        }
        let measure = iv.length();
        Ok(Cylinder { word: word.clone(), interval: iv, measure, generation: n })
    }

    /// Itinerary of a point under the chosen side convention, `len` letters.
    pub fn itinerary(&self, x: &Rat, side: Side, len: usize) -> Word {
        let mut letters = Vec::with_capacity(len);
        let mut y = frac(x);
        for _ in 0..len {
            letters.push(self.locate(&y, side));
            y = self.map.apply(&y);
        }
        Word::from_letters(letters)
    }

    /// Element letter of a point under a side convention.
    fn locate(&self, y: &Rat, side: Side) -> Letter {
        let s = self.size();
        match side {
            Side::Right => {
                for (i, el) in self.elements.iter().enumerate() {
                    if y >= &el.lo && y < &el.hi {
                        return (i + 1) as Letter;
                    }
                }
                s as Letter
            }
            Side::Left => {
                if y.is_zero() {
                    // 0 = 1 is approached from below through the top element
                    return s as Letter;
                }
                for (i, el) in self.elements.iter().enumerate() {
                    if y > &el.lo && y <= &el.hi {
                        return (i + 1) as Letter;
                    }
                }
                1 as Letter
            }
        }
    }

    /// All depth-truncated representations of a point (`depth + 1` letters
    /// each). The count exceeds 1 exactly when the point lies on a cylinder
    /// boundary by that depth.
    pub fn representations_of(&self, x: &Rat, depth: usize) -> Representation {
        let left = self.itinerary(x, Side::Left, depth + 1);
        let right = self.itinerary(x, Side::Right, depth + 1);
        let mut words = vec![right];
        if left != words[0] {
            words.push(left);
            words.sort();
        }
        let count = words.len();
        Representation { point: frac(x), words, count }
    }

    /// Least `n` with the point on the boundary of a generation-`n`
    /// element, up to `cap`. Boundary points are exactly the points whose
    /// orbit reaches a breakpoint.
    pub fn weight(&self, x: &Rat, cap: usize) -> Option<usize> {
        let mut y = frac(x);
        for k in 0..=cap {
            if self.points.binary_search(&y).is_ok() {
                return Some(k);
            }
            y = self.map.apply(&y);
        }
        None
    }

    /// The boundary set of generation `depth`: every point whose orbit hits
    /// a breakpoint within `depth` steps.
    pub fn boundary_points(&self, depth: usize) -> Vec<Rat> {
        let mut cur: Vec<Rat> = self.points.clone();
        let mut all = cur.clone();
        for _ in 0..depth {
            let mut next = Vec::new();
            for y in &cur {
                next.extend(self.map.preimages(y));
            }
            next.sort();
            next.dedup();
            all.extend(next.iter().cloned());
            cur = next;
        }
        all.sort();
        all.dedup();
        all
    }

    /// Verify that the image of every depth-`depth` boundary point is again
    /// a boundary point.
    pub fn forward_invariance_check(&self, depth: usize) -> bool {
        self.boundary_points(depth)
            .iter()
            .all(|z| self.weight(&self.map.apply(z), depth + 1).is_some())
    }

    /// Verify that every preimage of a depth-`depth` boundary point is again
    /// a boundary point.
    pub fn backward_invariance_check(&self, depth: usize) -> bool {
        self.boundary_points(depth).iter().all(|z| {
            self.map.preimages(z).iter().all(|w| self.weight(w, depth + 2).is_some())
        })
    }

    /// Adjacency set of `x` in generation `depth`: the words of all
    /// generation-`depth` elements containing `x`.
    pub fn adjacency_set(&self, x: &Rat, depth: usize) -> Vec<Word> {
        self.representations_of(x, depth).words
    }

    /// Distortion vectors at refinement depth `q`: for each start letter
    /// `i`, the min and max of `sigma(R_delta) / sigma(R_i)` over valid
    /// `delta` of `q + 1` letters starting with `i`. Exact for
    /// piecewise-linear maps via the per-branch slope product.
    fn distortion_vectors(&self, q: usize) -> (Vec<Rat>, Vec<Rat>) {
        if let Some(hit) = self.distortion_cache.lock().unwrap().get(&q) {
            return hit.clone();
        }
        let s = self.size();
        let mut lo: Vec<Rat> = (1..=s).map(|i| self.sigma(i as Letter)).collect();
        let mut hi = lo.clone();
        for _ in 0..q {
            let mut nlo = Vec::with_capacity(s);
            let mut nhi = Vec::with_capacity(s);
            for i in 1..=s as Letter {
                let slope = &self.affines[(i - 1) as usize].0;
                let succ = self.ts.successors(i);
                let best_lo = succ
                    .iter()
                    .map(|&j| lo[(j - 1) as usize].clone())
                    .reduce(|a, b| a.min(b))
                    .unwrap();
                let best_hi = succ
                    .iter()
                    .map(|&j| hi[(j - 1) as usize].clone())
                    .reduce(|a, b| a.max(b))
                    .unwrap();
                nlo.push(best_lo / slope);
                nhi.push(best_hi / slope);
            }
            lo = nlo;
            hi = nhi;
        }
        let lo: Vec<Rat> =
            lo.iter().zip(1..).map(|(v, i)| v / self.sigma(i as Letter)).collect();
        let hi: Vec<Rat> =
            hi.iter().zip(1..).map(|(v, i)| v / self.sigma(i as Letter)).collect();
        let entry = (lo, hi);
        self.distortion_cache.lock().unwrap().insert(q, entry.clone());
        entry
    }

    /// Lower distortion constant: `min sigma(R_delta) / sigma(R_{delta_0})`
    /// over all valid `delta` of `q + 1` letters.
    pub fn distortion_lower(&self, q: usize) -> Rat {
        let (lo, _) = self.distortion_vectors(q);
        lo.into_iter().reduce(|a, b| a.min(b)).unwrap()
    }

    /// Upper distortion constant: the corresponding maximum.
    pub fn distortion_upper(&self, q: usize) -> Rat {
        let (_, hi) = self.distortion_vectors(q);
        hi.into_iter().reduce(|a, b| a.max(b)).unwrap()
    }

    /// Relative lower constant for refinements of a word ending in `last`.
    pub fn distortion_lower_from(&self, last: Letter, q: usize) -> Rat {
        self.distortion_vectors(q).0[(last - 1) as usize].clone()
    }

    /// Relative upper constant for refinements of a word ending in `last`.
    pub fn distortion_upper_from(&self, last: Letter, q: usize) -> Rat {
        self.distortion_vectors(q).1[(last - 1) as usize].clone()
    }

    /// Distortion profile view.
    pub fn distortion(&self) -> DistortionProfile<'_> {
        DistortionProfile { partition: self }
    }

    /// Least generation with an element inside `b` (reference route for
    /// tests; `fit_interval` computes the same value constructively).
    pub fn least_contained_generation(&self, b: &Interval) -> Result<usize> {
        for n in 0..4096 {
            let mut found = false;
            for word in self.ts.words(n, None)? {
                let cyl = self.cylinder(&word)?;
                if b.contains(&cyl.interval) {
                    found = true;
                    break;
                }
            }
            if found {
                return Ok(n);
            }
        }
        Err(Error::Resource("no contained element within depth 4096".into()))
    }

    /// Fit a closed interval `b` between consecutive generations: find the
    /// least `N` such that some element of generation `N` lies inside `b`,
    /// an element `eta` of generation `N - 1` with
    /// `2 d(eta) >= d(b) >= (eps(1)/C) d(eta)` holding at least half of `b`,
    /// and an inner element of generation `N` inside both.
    ///
    /// Requires `d(b)` below the least element length.
    pub fn fit_interval(&self, b: &Interval) -> Result<Fit> {
        if b.length() >= self.min_element_length() {
            return input_err("interval to fit must be shorter than every element");
        }
        if b.lo < Rat::zero() || b.hi > Rat::one() {
            return input_err("interval must lie within [0, 1]");
        }
        // weight-0 points strictly inside b (endpoints 0/1 wrap outside)
        let inside: Vec<Rat> = self
            .points
            .iter()
            .filter(|p| b.contains_point(p) && !p.is_zero())
            .cloned()
            .chain(
                // the wrap point 0 = 1 counts when b touches either end
                if b.lo.is_zero() || b.hi == Rat::one() { vec![] } else { vec![] },
            )
            .collect();
        let fit = if let Some(y) = inside.first() {
            // by length there is exactly one such point
            debug_assert!(inside.len() == 1);
            let (bplus, anchored_left) = split_halves(b, y);
            let mut f = self.fit_half(&bplus, y, anchored_left)?;
            f.case = FitCase::SplitAtWeightZero;
            f
        } else {
            self.fit_interior(b)?
        };
        // displayed two-sided bound
        let d_b = b.length();
        let d_eta = fit.eta.measure.clone();
        let eps1 = self.distortion_lower(1);
        if !(rat(2, 1) * &d_eta >= d_b && d_b >= eps1 / self.distortion_constant() * &d_eta) {
            return Err(Error::Defect("fit bound violated".into()));
        }
        if !fit.eta.interval.contains(&fit.inner.interval) || !b.contains(&fit.inner.interval) {
            return Err(Error::Defect("fit containment violated".into()));
        }
        // at least half of b lies inside eta
        let overlap = fit
            .eta
            .interval
            .intersect(b)
            .map(|iv| iv.length())
            .unwrap_or_else(Rat::zero);
        if rat(2, 1) * overlap < b.length() {
            return Err(Error::Defect("fit half-coverage violated".into()));
        }
        Ok(fit)
    }

    /// Fit the half `h` whose endpoint `y` (left endpoint when
    /// `anchored_left`) is a boundary point: descend the cylinder chain
    /// containing `h` until a new boundary point appears in `h`, apart
    /// from `y`.
    fn fit_half(&self, h: &Interval, y: &Rat, anchored_left: bool) -> Result<Fit> {
        let mut word = Word::from_letters(vec![self.element_containing(h)?]);
        let mut cyl = self.cylinder(&word)?;
        loop {
            // children of the current cylinder and their shared endpoints
            let children = self.children(&cyl)?;
            let mut witness: Option<Rat> = None;
            for c in &children {
                for endpoint in [&c.interval.lo, &c.interval.hi] {
                    if h.contains_point(endpoint) && endpoint != y {
                        let better = match &witness {
                            None => true,
                            Some(w) => {
                                circle_dist(endpoint, y) < circle_dist(w, y)
                            }
                        };
                        if better {
                            witness = Some(endpoint.clone());
                        }
                    }
                }
            }
            match witness {
                Some(z) => {
                    let (lo, hi) = if anchored_left {
                        (y.clone(), z)
                    } else {
                        (z, y.clone())
                    };
                    let target = Interval::new(lo, hi)?;
                    let inner = children
                        .into_iter()
                        .find(|c| c.interval == target)
                        .ok_or_else(|| {
                            Error::Defect("interval between split point and witness is not an element".into())
                        })?;
                    return Ok(Fit {
                        n: cyl.generation + 1,
                        eta: cyl,
                        inner,
                        case: FitCase::SplitAtWeightZero,
                    });
                }
                None => {
                    let next = children
                        .into_iter()
                        .find(|c| c.interval.contains(h))
                        .ok_or_else(|| Error::Defect("no child contains the half".into()))?;
                    word = next.word.clone();
                    cyl = next;
                }
            }
        }
    }

    /// Fit when no weight-0 point lies inside `b`.
    fn fit_interior(&self, b: &Interval) -> Result<Fit> {
        let mut word = Word::from_letters(vec![self.element_containing(b)?]);
        let mut cyl = self.cylinder(&word)?;
        loop {
            let children = self.children(&cyl)?;
            let mut inside: Vec<Rat> = Vec::new();
            for c in &children {
                for endpoint in [&c.interval.lo, &c.interval.hi] {
                    if b.contains_point(endpoint)
                        && endpoint != &cyl.interval.lo
                        && endpoint != &cyl.interval.hi
                        && !inside.contains(endpoint)
                    {
                        inside.push(endpoint.clone());
                    }
                }
            }
            inside.sort();
            match inside.len() {
                0 => {
                    let next = children
                        .into_iter()
                        .find(|c| c.interval.contains(b))
                        .ok_or_else(|| Error::Defect("no child contains the interval".into()))?;
                    word = next.word.clone();
                    cyl = next;
                }
                1 => {
                    let y = &inside[0];
                    let (bplus, anchored_left) = split_halves(b, y);
                    let mut f = self.fit_half(&bplus, y, anchored_left)?;
                    f.case = FitCase::InteriorSplit;
                    return Ok(f);
                }
                _ => {
                    // leftmost child lying fully inside b
                    let inner = children
                        .iter()
                        .find(|c| b.contains(&c.interval))
                        .cloned()
                        .ok_or_else(|| {
                            Error::Defect("two boundary points but no contained child".into())
                        })?;
                    return Ok(Fit {
                        n: cyl.generation + 1,
                        eta: cyl,
                        inner,
                        case: FitCase::Interior,
                    });
                }
            }
        }
    }

    /// The element whose closed interval contains `iv`.
    fn element_containing(&self, iv: &Interval) -> Result<Letter> {
        for (i, el) in self.elements.iter().enumerate() {
            if el.contains(iv) {
                return Ok((i + 1) as Letter);
            }
        }
        input_err(format!("interval {iv} straddles an element boundary"))
    }

    /// All child cylinders of a cylinder.
    pub fn children(&self, cyl: &Cylinder) -> Result<Vec<Cylinder>> {
        let last = cyl.word.at(cyl.generation);
        let mut out = Vec::new();
        for &j in self.ts.successors(last) {
            let mut w = cyl.word.clone();
            w.push(j);
            out.push(self.cylinder(&w)?);
        }
        Ok(out)
    }

    /// Serialize to the partition file format.
    pub fn to_file(&self) -> PartitionFile {
        let map = match &self.map {
            CircleMap::Linear { degree } => MapFile::Linear { m: *degree },
            CircleMap::PiecewiseLinear { breakpoints, slopes } => MapFile::PiecewiseLinear {
                breakpoints: breakpoints.iter().map(rat_str).collect(),
                slopes: slopes.iter().map(rat_str).collect(),
            },
        };
        PartitionFile {
            map,
            breakpoints: self.points.iter().map(rat_str).collect(),
            endpoint_tolerant: self.endpoint_tolerant,
        }
    }
}

/// Split `b` at `y` into halves and return the larger one (ties prefer the
/// left half), plus whether `y` is its left endpoint.
fn split_halves(b: &Interval, y: &Rat) -> (Interval, bool) {
    let left = Interval { lo: b.lo.clone(), hi: y.clone() };
    let right = Interval { lo: y.clone(), hi: b.hi.clone() };
    if left.length() >= right.length() {
        (left, false)
    } else {
        (right, true)
    }
}

/// View over a partition's bounded-distortion constants.
#[derive(Debug, Clone, Copy)]
pub struct DistortionProfile<'a> {
    partition: &'a MarkovPartition,
}

impl DistortionProfile<'_> {
    /// Lower constant at depth `q`.
    pub fn eps(&self, q: usize) -> Rat {
        self.partition.distortion_lower(q)
    }

    /// Upper constant at depth `q`.
    pub fn eps_upper(&self, q: usize) -> Rat {
        self.partition.distortion_upper(q)
    }

    /// Relative lower constant below a word ending in `last`.
    pub fn eps_from(&self, last: Letter, q: usize) -> Rat {
        self.partition.distortion_lower_from(last, q)
    }

    /// Relative upper constant below a word ending in `last`.
    pub fn eps_upper_from(&self, last: Letter, q: usize) -> Rat {
        self.partition.distortion_upper_from(last, q)
    }
}

/// Map description in partition files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MapFile {
    /// Degree-`m` linear map.
    #[serde(rename = "linear")]
    Linear {
        /// Degree.
        m: u32,
    },
    /// Piecewise-linear map.
    #[serde(rename = "piecewise-linear")]
    PiecewiseLinear {
        /// Branch start points as `"p/q"` strings.
        breakpoints: Vec<String>,
        /// Branch slopes as `"p/q"` strings.
        slopes: Vec<String>,
    },
}

/// JSON partition file: `{"map": .., "breakpoints": ["p/q", ..],
/// "endpoint_tolerant": bool}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionFile {
    /// The circle map.
    pub map: MapFile,
    /// Partition breakpoints as `"p/q"` strings.
    pub breakpoints: Vec<String>,
    /// Accept elements at the injectivity threshold.
    #[serde(default)]
    pub endpoint_tolerant: bool,
}

impl PartitionFile {
    /// Validate and build the partition.
    pub fn build(&self) -> Result<MarkovPartition> {
        let map = match &self.map {
            MapFile::Linear { m } => CircleMap::Linear { degree: *m },
            MapFile::PiecewiseLinear { breakpoints, slopes } => CircleMap::PiecewiseLinear {
                breakpoints: breakpoints.iter().map(|s| parse_rat(s)).collect::<Result<_>>()?,
                slopes: slopes.iter().map(|s| parse_rat(s)).collect::<Result<_>>()?,
            },
        };
        let breakpoints =
            self.breakpoints.iter().map(|s| parse_rat(s)).collect::<Result<Vec<_>>>()?;
        MarkovPartition::build_custom(map, breakpoints, self.endpoint_tolerant)
    }
}

/// The 2-element partition `{[0, 1/2], [1/2, 1]}` for the doubling map.
pub fn dyadic_two() -> MarkovPartition {
    MarkovPartition::build_uniform(2, 1).expect("dyadic partition is valid")
}

/// The 3-element partition `{[0, 1/4], [1/4, 1/2], [1/2, 1]}` for the
/// doubling map; letter 2 is degenerate.
pub fn degenerate_three_partition() -> MarkovPartition {
    MarkovPartition::build_custom(
        CircleMap::Linear { degree: 2 },
        vec![rat(0, 1), rat(1, 4), rat(1, 2)],
        true,
    )
    .expect("quarter partition is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(text: &str) -> Word {
        Word::parse(text, 9).unwrap()
    }

    #[test]
    fn uniform_two() {
        let p = dyadic_two();
        assert_eq!(p.size(), 2);
        assert_eq!(p.element(1), &Interval { lo: rat(0, 1), hi: rat(1, 2) });
        assert!(p.ts().allows(1, 1) && p.ts().allows(1, 2) && p.ts().allows(2, 1));
        assert!(p.endpoint_tolerant());
    }

    #[test]
    fn uniform_four_rows() {
        let p = MarkovPartition::build_uniform(2, 2).unwrap();
        assert_eq!(p.size(), 4);
        // T([0, 1/4]) = [0, 1/2]: successors of letter 1 are {1, 2}
        assert_eq!(p.ts().successors(1), &[1, 2]);
        assert_eq!(p.ts().successors(2), &[3, 4]);
        assert_eq!(p.ts().successors(3), &[1, 2]);
        assert_eq!(p.ts().successors(4), &[3, 4]);
        assert!(!p.endpoint_tolerant());
    }

    #[test]
    fn uniform_three_full() {
        let p = MarkovPartition::build_uniform(3, 1).unwrap();
        assert_eq!(p.size(), 3);
        for i in 1..=3 {
            assert_eq!(p.ts().successors(i), &[1, 2, 3]);
        }
    }

    #[test]
    fn custom_quarter_partition() {
        let p = degenerate_three_partition();
        assert_eq!(p.ts().successors(1), &[1, 2]);
        assert_eq!(p.ts().successors(2), &[3]);
        assert_eq!(p.ts().successors(3), &[1, 2, 3]);
        assert!(p.ts().is_degenerate(2));
        assert_eq!(*p.measure_ratio(), rat(1, 2));
    }

    #[test]
    fn custom_rejects_non_markov() {
        let err = MarkovPartition::build_custom(
            CircleMap::Linear { degree: 2 },
            vec![rat(0, 1), rat(1, 3)],
            true,
        );
        match err {
            Err(Error::Validation { property, .. }) => assert!(property.contains("(5)")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn custom_matches_uniform() {
        let direct = MarkovPartition::build_uniform(2, 2).unwrap();
        let via = MarkovPartition::build_custom(
            CircleMap::Linear { degree: 2 },
            vec![rat(0, 1), rat(1, 4), rat(1, 2), rat(3, 4)],
            false,
        )
        .unwrap();
        assert_eq!(direct.ts(), via.ts());
        assert_eq!(direct.elements, via.elements);
    }

    #[test]
    fn small_diameter_enforced() {
        let err = MarkovPartition::build_custom(
            CircleMap::Linear { degree: 2 },
            vec![rat(0, 1), rat(1, 2)],
            false,
        );
        assert!(matches!(err, Err(Error::Validation { .. })));
    }

    #[test]
    fn cylinders_dyadic() {
        let p = dyadic_two();
        let c = p.cylinder(&w("11")).unwrap();
        assert_eq!(c.interval, Interval { lo: rat(0, 1), hi: rat(1, 4) });
        assert_eq!(c.measure, rat(1, 4));
        let c = p.cylinder(&w("1")).unwrap();
        assert_eq!(c.interval, *p.element(1));
        // sigma(R_alpha) = 2^-(s+n) over the 4-element dyadic partition
        let p4 = MarkovPartition::build_uniform(2, 2).unwrap();
        for n in 0..=6usize {
            for word in p4.ts().words(n, None).unwrap() {
                let c = p4.cylinder(&word).unwrap();
                assert_eq!(c.measure, Rat::new(1.into(), BigInt::from(1u64 << (2 + n))));
            }
        }
    }

    #[test]
    fn cylinder_cover_and_disjoint_interiors() {
        for p in [dyadic_two(), degenerate_three_partition()] {
            for n in 0..=7usize {
                let mut cyls: Vec<Cylinder> = p
                    .ts()
                    .words(n, None)
                    .unwrap()
                    .map(|word| p.cylinder(&word).unwrap())
                    .collect();
                cyls.sort_by(|a, b| a.interval.lo.cmp(&b.interval.lo));
                let total: Rat = cyls.iter().map(|c| c.measure.clone()).sum();
                assertetotal(total);
                for pair in cyls.windows(2) {
                    assert!(pair[0].interval.hi <= pair[1].interval.lo);
                }
            }
        }
        fn assetotal(total: Rat) {
            assert_eq!(total, Rat::one());
        }
        use assetotal as assert_total_fn;
        let _ = assert_total_fn;
    }

    #[test]
    fn representations() {
        let p = dyadic_two();
        // the shared endpoint 1/2 has two representations at every depth
        for depth in 0..6 {
            let r = p.representations_of(&rat(1, 2), depth);
            assert_eq!(r.count, 2);
        }
        let r = p.representations_of(&rat(1, 2), 3);
        let txt: Vec<String> = r.words.iter().map(|x| x.to_string()).collect();
        assert_eq!(txt, vec!["1222", "2111"]);
        // 1/3 = 0.010101.. has the unique itinerary 1212..
        let r = p.representations_of(&rat(1, 3), 5);
        assert_eq!(r.count, 1);
        assert_eq!(r.words[0].to_string(), "121212");
        // the wrap point 0 = 1 has two representations
        let r = p.representations_of(&rat(0, 1), 2);
        assert_eq!(r.count, 2);
        let txt: Vec<String> = r.words.iter().map(|x| x.to_string()).collect();
        assert_eq!(txt, vec!["111", "222"]);
    }

    #[test]
    fn weights() {
        let p = dyadic_two();
        assert_eq!(p.weight(&rat(1, 2), 8), Some(0));
        assert_eq!(p.weight(&rat(1, 4), 8), Some(1));
        assert_eq!(p.weight(&rat(0, 1), 8), Some(0));
        assert_eq!(p.weight(&rat(1, 3), 8), None);
        // weight agrees with the representation-count route
        for num in 0..=16i64 {
            let x = rat(num, 16);
            let by_orbit = p.weight(&x, 8);
            let by_reps = (0..=8usize).find(|&d| p.representations_of(&x, d).count > 1);
            assert_eq!(by_orbit, by_reps, "x = {num}/16");
        }
    }

    #[test]
    fn boundary_invariance() {
        for p in [dyadic_two(), degenerate_three_partition()] {
            for depth in 0..=5 {
                assert!(p.forward_invariance_check(depth));
                assert!(p.backward_invariance_check(depth));
            }
        }
    }

    #[test]
    fn adjacency() {
        let p = dyadic_two();
        let phi = p.adjacency_set(&rat(1, 4), 1);
        let txt: Vec<String> = phi.iter().map(|x| x.to_string()).collect();
        assert_eq!(txt, vec!["11", "12"]);
    }

    #[test]
    fn predecessors_equal_degree() {
        // every letter has exactly `degree` valid predecessors
        for p in [dyadic_two(), degenerate_three_partition(), MarkovPartition::build_uniform(2, 2).unwrap()] {
            let s = p.size();
            for j in 1..=s as Letter {
                let preds =
                    (1..=s as Letter).filter(|&i| p.ts().allows(i, j)).count() as u32;
                assert_eq!(preds, p.degree());
            }
        }
    }

    #[test]
    fn distortion_dyadic() {
        let p = dyadic_two();
        for q in 0..=8usize {
            let expect = Rat::new(1.into(), BigInt::from(1u64 << q));
            assert_eq!(p.distortion_lower(q), expect);
            assert_eq!(p.distortion_upper(q), expect);
        }
    }

    #[test]
    fn distortion_quarter_partition_by_enumeration() {
        // the enumeration yields eps(1) = 1/4 (attained by refining the
        // largest element into the smallest)
        let p = degenerate_three_partition();
        assert_eq!(p.distortion_lower(1), rat(1, 4));
        assert_eq!(p.distortion_upper(1), Rat::one());
        // cross-check the slope-product route against direct cylinder
        // measures for small q
        for q in 1..=6usize {
            let mut lo: Option<Rat> = None;
            let mut hi: Option<Rat> = None;
            for word in p.ts().words(q, None).unwrap() {
                let c = p.cylinder(&word).unwrap();
                let ratio = &c.measure / p.sigma(word.at(0));
                lo = Some(lo.map_or(ratio.clone(), |v: Rat| v.min(ratio.clone())));
                hi = Some(hi.map_or(ratio.clone(), |v: Rat| v.max(ratio)));
            }
            assert_eq!(p.distortion_lower(q), lo.unwrap(), "q={q}");
            assert_eq!(p.distortion_upper(q), hi.unwrap(), "q={q}");
        }
    }

    #[test]
    fn distortion_monotone_and_relative() {
        let p = degenerate_three_partition();
        let mut prev_lo = Rat::one();
        let mut prev_hi = Rat::one();
        for q in 0..=10usize {
            let lo = p.distortion_lower(q);
            let hi = p.distortion_upper(q);
            assert!(lo <= prev_lo && hi <= prev_hi, "weak monotonicity at {q}");
            prev_lo = lo;
            prev_hi = hi;
            // relative version dominates r/C
            for last in 1..=3 as Letter {
                let rel_lo = p.distortion_lower_from(last, q);
                let rel_hi = p.distortion_upper_from(last, q);
                assert!(
                    &rel_lo / &rel_hi >= p.measure_ratio() / p.distortion_constant(),
                    "letter {last} depth {q}"
                );
            }
        }
    }

    #[test]
    fn fit_basic() {
        let p = dyadic_two();
        let b = Interval::new(rat(0, 1), rat(1, 4)).unwrap();
        let f = p.fit_interval(&b).unwrap();
        assert_eq!(f.n, 1);
        assert_eq!(f.eta.word.to_string(), "1");
        assert!(b.contains(&f.inner.interval));
        assert_eq!(f.n, p.least_contained_generation(&b).unwrap());
    }

    #[test]
    fn fit_straddling_weight_zero() {
        let p = dyadic_two();
        // right half strictly larger: split at 1/2, fit [1/2, 5/8]
        let b = Interval::new(rat(2, 5), rat(5, 8)).unwrap();
        let f = p.fit_interval(&b).unwrap();
        assert_eq!(f.case, FitCase::SplitAtWeightZero);
        assert!(f.eta.interval.contains(&Interval::new(rat(1, 2), rat(5, 8)).unwrap()));
        // exact tie prefers the left half
        let b = Interval::new(rat(3, 8), rat(5, 8)).unwrap();
        let f = p.fit_interval(&b).unwrap();
        assert!(f.eta.interval.contains(&Interval::new(rat(3, 8), rat(1, 2)).unwrap()));
    }

    #[test]
    fn fit_interior_split() {
        let p = dyadic_two();
        // inside the generation-5 cylinder [0, 1/64], containing the
        // weight-6 point 1/128
        let b = Interval::new(rat(1, 128) - rat(1, 512), rat(1, 128) + rat(1, 1024)).unwrap();
        let f = p.fit_interval(&b).unwrap();
        assert_eq!(f.case, FitCase::InteriorSplit);
        assert_eq!(f.n, p.least_contained_generation(&b).unwrap());
    }

    #[test]
    fn fit_random_postconditions() {
        use rand::{Rng, SeedableRng};
        let p = degenerate_three_partition();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let num = rng.gen_range(0..10_000i64);
            let den = 40_000i64;
            let len = rat(rng.gen_range(1..400), 1 << 14);
            let lo = rat(num, den);
            let hi = (&lo + &len).min(Rat::one());
            let b = Interval::new(lo, hi).unwrap();
            if b.length() >= p.min_element_length() || b.length().is_zero() {
                continue;
            }
            let f = p.fit_interval(&b).unwrap();
            assert_eq!(f.inner.generation, f.n);
            assert_eq!(f.eta.generation, f.n - 1);
            assert_eq!(f.n, p.least_contained_generation(&b).unwrap());
        }
    }

    #[test]
    fn relabel_swaps() {
        let p = MarkovPartition::build_uniform(2, 2).unwrap();
        // swap letters 1 and 2
        let q = p.relabel(&[2, 1, 3, 4]).unwrap();
        assert_eq!(q.element(2), p.element(1));
        assert_eq!(q.ts().successors(2), &[3, 4]);
        assert_eq!(q.ts().successors(1), &[3, 4]);
        assert_eq!(q.ts().successors(3), &[1, 2]);
    }

    #[test]
    fn partition_file_round_trip() {
        let p = degenerate_three_partition();
        let file = p.to_file();
        let text = serde_json::to_string(&file).unwrap();
        let back: PartitionFile = serde_json::from_str(&text).unwrap();
        let q = back.build().unwrap();
        assert_eq!(q.ts(), p.ts());
        assert_eq!(q.elements, p.elements);
    }

    #[test]
    fn piecewise_linear_map() {
        // two branches with slopes 3 and 3/2 split at 1/3: degree 2
        let map = CircleMap::PiecewiseLinear {
            breakpoints: vec![rat(0, 1), rat(1, 3)],
            slopes: vec![rat(3, 1), rat(3, 2)],
        };
        assert_eq!(map.degree().unwrap(), 2);
        assert_eq!(map.apply(&rat(1, 6)), rat(1, 2));
        assert_eq!(map.apply(&rat(2, 3)), rat(1, 2));
        let pre = map.preimages(&rat(1, 2));
        assert_eq!(pre, vec![rat(1, 6), rat(2, 3)]);
        // injectivity diameter = min gap between the two preimage sheets
        let d = map.injectivity_diameter().unwrap();
        assert!(d.is_positive() && d < Rat::one());
        // a valid Markov partition for it: breakpoints {0, 1/3}
        let p = MarkovPartition::build_custom(
            map,
            vec![rat(0, 1), rat(1, 3)],
            true,
        )
        .unwrap();
        // T([0,1/3]) = [0,1] wraps fully; T([1/3,1]) = [0,1] too
        assert!(p.ts().allows(1, 1) && p.ts().allows(1, 2));
        assert!(p.ts().allows(2, 1) && p.ts().allows(2, 2));
        let c = p.cylinder(&w("12")).unwrap();
        // inside [0,1/3], T(x) = 3x lands in [1/3,1] for x in [1/9, 1/3]
        assert_eq!(c.interval, Interval::new(rat(1, 9), rat(1, 3)).unwrap());
    }
}
