//! Ordinal preference sets, weighted profiles and pairwise tallies.
//!
//! A [`PreferenceSet`] is a total preorder written as a list of tiers: earlier
//! tiers are strictly preferred, alternatives sharing a tier are indifferent.
//! A [`WeightedProfile`] attaches an exact rational weight to each set. All
//! arithmetic over weights is exact so that worked examples reproduce bit for
//! bit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational weight.
pub type Weight = BigRational;

/// Tolerance applied when weights arrive as decimals.
pub const DECIMAL_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile is not coherent: {0}")]
    Incoherent(ValidationReport),
    #[error("unknown alternative `{0}`")]
    UnknownAlternative(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// A single option being ranked.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alternative(String);

impl Alternative {
    pub fn new(id: impl Into<String>) -> Self {
        Alternative(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Alternative {
    fn from(s: &str) -> Self {
        Alternative::new(s)
    }
}

/// A total preorder over alternatives, stored as tiers from best to worst.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceSet {
    tiers: Vec<Vec<Alternative>>,
}

impl PreferenceSet {
    pub fn new(tiers: Vec<Vec<Alternative>>) -> Self {
        PreferenceSet { tiers }
    }

    /// A strict ordering, one alternative per tier.
    pub fn strict<I, A>(ids: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<Alternative>,
    {
        PreferenceSet {
            tiers: ids.into_iter().map(|a| vec![a.into()]).collect(),
        }
    }

    pub fn tiers(&self) -> &[Vec<Alternative>] {
        &self.tiers
    }

    pub fn alternatives(&self) -> impl Iterator<Item = &Alternative> {
        self.tiers.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.tiers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the tier containing `alt`.
    pub fn tier_of(&self, alt: &Alternative) -> Option<usize> {
        self.tiers.iter().position(|t| t.contains(alt))
    }

    /// `Some(true)` when `a` is strictly preferred to `b`.
    pub fn prefers(&self, a: &Alternative, b: &Alternative) -> Option<bool> {
        Some(self.tier_of(a)? < self.tier_of(b)?)
    }

    /// The set with `alt` deleted; tiers left empty are dropped.
    pub fn without(&self, alt: &Alternative) -> PreferenceSet {
        let tiers = self
            .tiers
            .iter()
            .map(|t| t.iter().filter(|a| *a != alt).cloned().collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        PreferenceSet { tiers }
    }

    pub fn relabel(&self, map: &BTreeMap<Alternative, Alternative>) -> PreferenceSet {
        let tiers = self
            .tiers
            .iter()
            .map(|t| {
                t.iter()
                    .map(|a| map.get(a).cloned().unwrap_or_else(|| a.clone()))
                    .collect()
            })
            .collect();
        PreferenceSet { tiers }
    }
}

/// Parses `"A>B>C~D"`; `>` separates tiers and `~` joins indifferent alternatives.
impl FromStr for PreferenceSet {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tiers = Vec::new();
        for tier in s.split('>') {
            let alts: Vec<Alternative> = tier
                .split('~')
                .map(str::trim)
                .map(|id| {
                    if id.is_empty() {
                        Err(ProfileError::Parse(format!("empty alternative in `{s}`")))
                    } else {
                        Ok(Alternative::new(id))
                    }
                })
                .collect::<Result<_, _>>()?;
            tiers.push(alts);
        }
        Ok(PreferenceSet { tiers })
    }
}

impl fmt::Display for PreferenceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .tiers
            .iter()
            .map(|t| {
                t.iter()
                    .map(Alternative::as_str)
                    .collect::<Vec<_>>()
                    .join("~")
            })
            .collect();
        f.write_str(&parts.join(">"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileEntry {
    pub set: PreferenceSet,
    pub weight: Weight,
}

/// A pool of weighted preference sets over a fixed universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedProfile {
    universe: Vec<Alternative>,
    entries: Vec<ProfileEntry>,
}

/// One defect found by [`validate_profile`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    EmptyAlternativeId,
    DuplicateInUniverse { alternative: String },
    MissingAlternative { entry: usize, alternative: String },
    DuplicateAlternative { entry: usize, alternative: String },
    UnknownAlternative { entry: usize, alternative: String },
    EmptyTier { entry: usize },
    NegativeWeight { entry: usize, weight: String },
    WeightSumMismatch { sum: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyAlternativeId => write!(f, "universe contains an empty id"),
            Violation::DuplicateInUniverse { alternative } => {
                write!(f, "`{alternative}` listed twice in the universe")
            }
            Violation::MissingAlternative { entry, alternative } => {
                write!(f, "entry {entry} omits `{alternative}`")
            }
            Violation::DuplicateAlternative { entry, alternative } => {
                write!(f, "entry {entry} ranks `{alternative}` more than once")
            }
            Violation::UnknownAlternative { entry, alternative } => {
                write!(
                    f,
                    "entry {entry} ranks `{alternative}`, which is not in the universe"
                )
            }
            Violation::EmptyTier { entry } => write!(f, "entry {entry} has an empty tier"),
            Violation::NegativeWeight { entry, weight } => {
                write!(f, "entry {entry} has negative weight {weight}")
            }
            Violation::WeightSumMismatch { sum } => write!(f, "weights sum to {sum}, not 1"),
        }
    }
}

/// Outcome of profile validation. Never an error by itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub coherent: bool,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coherent {
            return f.write_str("coherent");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl WeightedProfile {
    /// Builds a profile without checking it; see [`validate_profile`].
    pub fn new(universe: Vec<Alternative>, entries: Vec<ProfileEntry>) -> Self {
        WeightedProfile { universe, entries }
    }

    /// Builds a profile and rejects it unless coherent.
    pub fn coherent(
        universe: Vec<Alternative>,
        entries: Vec<ProfileEntry>,
    ) -> Result<Self, ProfileError> {
        let p = WeightedProfile::new(universe, entries);
        p.ensure_coherent()?;
        Ok(p)
    }

    /// Convenience constructor from `(weight, "A>B~C")` pairs with weights as `"p/q"`.
    pub fn from_pairs(universe: &[&str], entries: &[(&str, &str)]) -> Result<Self, ProfileError> {
        let universe = universe.iter().map(|s| Alternative::new(*s)).collect();
        let entries = entries
            .iter()
            .map(|(w, set)| {
                Ok(ProfileEntry {
                    weight: parse_rational(w)?,
                    set: set.parse()?,
                })
            })
            .collect::<Result<Vec<_>, ProfileError>>()?;
        WeightedProfile::coherent(universe, entries)
    }

    pub fn universe(&self) -> &[Alternative] {
        &self.universe
    }

    pub fn entries(&self) -> &[ProfileEntry] {
        &self.entries
    }

    pub fn index_of(&self, alt: &Alternative) -> Option<usize> {
        self.universe.iter().position(|a| a == alt)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_profile(self)
    }

    pub fn ensure_coherent(&self) -> Result<(), ProfileError> {
        let report = self.validate();
        if report.coherent {
            Ok(())
        } else {
            Err(ProfileError::Incoherent(report))
        }
    }

    /// Tier index of every universe alternative, per entry. Assumes coherence.
    pub(crate) fn tier_matrix(&self) -> Vec<Vec<usize>> {
        let index: HashMap<&Alternative, usize> = self
            .universe
            .iter()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect();
        self.entries
            .iter()
            .map(|e| {
                let mut row = vec![usize::MAX; self.universe.len()];
                for (t, tier) in e.set.tiers().iter().enumerate() {
                    for a in tier {
                        if let Some(&i) = index.get(a) {
                            row[i] = t;
                        }
                    }
                }
                row
            })
            .collect()
    }

    /// Adds `set` with weight `weight`, scaling every existing weight by `1 - weight`
    /// so the old entries keep their proportions.
    pub fn with_added(&self, set: PreferenceSet, weight: Weight) -> WeightedProfile {
        let keep = Weight::one() - &weight;
        let mut entries: Vec<ProfileEntry> = self
            .entries
            .iter()
            .map(|e| ProfileEntry {
                set: e.set.clone(),
                weight: &e.weight * &keep,
            })
            .collect();
        entries.push(ProfileEntry { set, weight });
        WeightedProfile {
            universe: self.universe.clone(),
            entries,
        }
    }

    /// The profile with `alt` deleted from the universe and from every tier.
    pub fn without(&self, alt: &Alternative) -> WeightedProfile {
        WeightedProfile {
            universe: self
                .universe
                .iter()
                .filter(|a| *a != alt)
                .cloned()
                .collect(),
            entries: self
                .entries
                .iter()
                .map(|e| ProfileEntry {
                    set: e.set.without(alt),
                    weight: e.weight.clone(),
                })
                .collect(),
        }
    }

    /// Renames alternatives; ids missing from `map` are kept.
    pub fn relabel(&self, map: &BTreeMap<Alternative, Alternative>) -> WeightedProfile {
        WeightedProfile {
            universe: self
                .universe
                .iter()
                .map(|a| map.get(a).cloned().unwrap_or_else(|| a.clone()))
                .collect(),
            entries: self
                .entries
                .iter()
                .map(|e| ProfileEntry {
                    set: e.set.relabel(map),
                    weight: e.weight.clone(),
                })
                .collect(),
        }
    }
}

/// Checks completeness, uniqueness and Kolmogorov-style weights.
pub fn validate_profile(profile: &WeightedProfile) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for a in &profile.universe {
        if a.as_str().is_empty() {
            violations.push(Violation::EmptyAlternativeId);
        }
        if !seen.insert(a) {
            violations.push(Violation::DuplicateInUniverse {
                alternative: a.to_string(),
            });
        }
    }

    let mut sum = Weight::zero();
    for (i, entry) in profile.entries.iter().enumerate() {
        let mut ranked = HashSet::new();
        for tier in entry.set.tiers() {
            if tier.is_empty() {
                violations.push(Violation::EmptyTier { entry: i });
            }
            for a in tier {
                if !seen.contains(a) {
                    violations.push(Violation::UnknownAlternative {
                        entry: i,
                        alternative: a.to_string(),
                    });
                } else if !ranked.insert(a) {
                    violations.push(Violation::DuplicateAlternative {
                        entry: i,
                        alternative: a.to_string(),
                    });
                }
            }
        }
        for a in &profile.universe {
            if !ranked.contains(a) {
                violations.push(Violation::MissingAlternative {
                    entry: i,
                    alternative: a.to_string(),
                });
            }
        }
        if entry.weight.is_negative() {
            violations.push(Violation::NegativeWeight {
                entry: i,
                weight: entry.weight.to_string(),
            });
        }
        sum += &entry.weight;
    }
    if !profile.entries.is_empty() && !sum.is_one() {
        violations.push(Violation::WeightSumMismatch {
            sum: sum.to_string(),
        });
    }

    ValidationReport {
        coherent: violations.is_empty(),
        violations,
    }
}

/// How an indifferent pair is booked in a [`TallyMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieConvention {
    /// Ties count toward neither side and are recorded in `tied`.
    #[default]
    Neither,
    /// Ties are split evenly into both supports; `tied` stays zero.
    SplitHalf,
}

/// Weighted head-to-head support between every ordered pair of alternatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyMatrix {
    alternatives: Vec<Alternative>,
    support: Vec<Vec<Weight>>,
    tied: Vec<Vec<Weight>>,
}

impl TallyMatrix {
    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn len(&self) -> usize {
        self.alternatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alternatives.is_empty()
    }

    pub fn index_of(&self, alt: &Alternative) -> Option<usize> {
        self.alternatives.iter().position(|a| a == alt)
    }

    pub fn support_at(&self, x: usize, y: usize) -> &Weight {
        &self.support[x][y]
    }

    pub fn tied_at(&self, x: usize, y: usize) -> &Weight {
        &self.tied[x][y]
    }

    /// Weight of entries ranking `x` strictly above `y`.
    pub fn support(&self, x: &Alternative, y: &Alternative) -> Result<&Weight, ProfileError> {
        let i = self
            .index_of(x)
            .ok_or_else(|| ProfileError::UnknownAlternative(x.to_string()))?;
        let j = self
            .index_of(y)
            .ok_or_else(|| ProfileError::UnknownAlternative(y.to_string()))?;
        Ok(&self.support[i][j])
    }

    pub fn tied(&self, x: &Alternative, y: &Alternative) -> Result<&Weight, ProfileError> {
        let i = self
            .index_of(x)
            .ok_or_else(|| ProfileError::UnknownAlternative(x.to_string()))?;
        let j = self
            .index_of(y)
            .ok_or_else(|| ProfileError::UnknownAlternative(y.to_string()))?;
        Ok(&self.tied[i][j])
    }

    /// `support[x][y] - support[y][x]`.
    pub fn margin_at(&self, x: usize, y: usize) -> Weight {
        &self.support[x][y] - &self.support[y][x]
    }

    /// Builds a tally directly from support values; `tied` is set to the remainder.
    pub fn from_support(alternatives: Vec<Alternative>, support: Vec<Vec<Weight>>) -> Self {
        let n = alternatives.len();
        let mut tied = vec![vec![Weight::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    tied[i][j] = Weight::one() - &support[i][j] - &support[j][i];
                }
            }
        }
        TallyMatrix {
            alternatives,
            support,
            tied,
        }
    }
}

pub fn pairwise_tally(profile: &WeightedProfile) -> Result<TallyMatrix, ProfileError> {
    pairwise_tally_with(profile, TieConvention::Neither)
}

pub fn pairwise_tally_with(
    profile: &WeightedProfile,
    ties: TieConvention,
) -> Result<TallyMatrix, ProfileError> {
    profile.ensure_coherent()?;
    let n = profile.universe.len();
    let mut support = vec![vec![Weight::zero(); n]; n];
    let mut tied = vec![vec![Weight::zero(); n]; n];
    let half = Weight::new(BigInt::from(1), BigInt::from(2));
    for (entry, row) in profile.entries.iter().zip(profile.tier_matrix()) {
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                if row[x] < row[y] {
                    support[x][y] += &entry.weight;
                } else if row[x] == row[y] {
                    match ties {
                        TieConvention::Neither => tied[x][y] += &entry.weight,
                        TieConvention::SplitHalf => support[x][y] += &entry.weight * &half,
                    }
                }
            }
        }
    }
    Ok(TallyMatrix {
        alternatives: profile.universe.clone(),
        support,
        tied,
    })
}

/// The alternative beating every other head to head, if any.
///
/// A lone alternative is vacuously the winner.
pub fn condorcet_winner(tally: &TallyMatrix) -> Option<Alternative> {
    let n = tally.len();
    (0..n)
        .find(|&x| (0..n).all(|y| y == x || tally.support[x][y] > tally.support[y][x]))
        .map(|x| tally.alternatives[x].clone())
}

/// The alternative losing every head to head, if any. Needs at least two alternatives.
pub fn condorcet_loser(tally: &TallyMatrix) -> Option<Alternative> {
    let n = tally.len();
    if n < 2 {
        return None;
    }
    (0..n)
        .find(|&x| (0..n).all(|y| y == x || tally.support[x][y] < tally.support[y][x]))
        .map(|x| tally.alternatives[x].clone())
}

/// Parses `"p/q"` or an integer string exactly.
pub fn parse_rational(s: &str) -> Result<Weight, ProfileError> {
    let s = s.trim();
    let bad = || ProfileError::Parse(format!("not a rational: `{s}`"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Weight::new(p, q))
        }
        None if s.contains('.') || s.contains('e') || s.contains('E') => parse_decimal(s),
        None => Ok(Weight::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Exact value of a decimal literal such as `0.3333` or `1e-3`.
pub fn parse_decimal(s: &str) -> Result<Weight, ProfileError> {
    let bad = || ProfileError::Parse(format!("not a decimal: `{s}`"));
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mut value = Weight::from_integer(digits.parse::<BigInt>().map_err(|_| bad())?);
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    if scale >= 0 {
        value *= Weight::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Weight::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Converts decimal weights to exact rationals, renormalizing to sum exactly one
/// when their total is within [`DECIMAL_SUM_TOLERANCE`] of one. Otherwise the raw
/// values are returned and validation reports the mismatch.
pub fn normalize_decimal_weights(raw: Vec<Weight>) -> Vec<Weight> {
    let sum: Weight = raw.iter().cloned().sum();
    let tolerance = parse_decimal(&format!("{DECIMAL_SUM_TOLERANCE:e}")).expect("valid literal");
    if sum.is_zero() || (&sum - Weight::one()).abs() > tolerance {
        return raw;
    }
    raw.into_iter().map(|w| w / &sum).collect()
}
