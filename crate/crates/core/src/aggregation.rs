//! Second-order aggregation rules: weighted Borda, Ranked Pairs, Elo and plurality.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::preference::{
    pairwise_tally, Alternative, PreferenceSet, ProfileError, TallyMatrix, Weight, WeightedProfile,
};

pub const DEFAULT_K_FACTOR: f64 = 32.0;
pub const DEFAULT_INITIAL_RATING: f64 = 1000.0;

/// Orders equal-margin pairs in Ranked Pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Ascending `(winner, loser)` ids.
    #[default]
    Lexicographic,
    /// Pairs are ordered by the position of winner, then loser, in this list.
    /// Alternatives missing from the list sort after listed ones, by id.
    Priority(Vec<Alternative>),
}

impl TieBreak {
    fn key(&self, alt: &Alternative) -> (usize, Alternative) {
        match self {
            TieBreak::Lexicographic => (0, alt.clone()),
            TieBreak::Priority(order) => (
                order.iter().position(|a| a == alt).unwrap_or(usize::MAX),
                alt.clone(),
            ),
        }
    }
}

/// An aggregation rule with its parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Rule {
    #[default]
    Borda,
    RankedPairs(TieBreak),
    Elo {
        k_factor: f64,
        initial: f64,
    },
    Plurality,
}

impl Rule {
    pub fn elo() -> Rule {
        Rule::Elo {
            k_factor: DEFAULT_K_FACTOR,
            initial: DEFAULT_INITIAL_RATING,
        }
    }

    pub fn ranked_pairs() -> Rule {
        Rule::RankedPairs(TieBreak::Lexicographic)
    }

    pub fn id(&self) -> &'static str {
        match self {
            Rule::Borda => "borda",
            Rule::RankedPairs(_) => "ranked-pairs",
            Rule::Elo { .. } => "elo",
            Rule::Plurality => "plurality",
        }
    }

    pub fn aggregate(&self, profile: &WeightedProfile) -> Result<AggregateOrdering, ProfileError> {
        match self {
            Rule::Borda => weighted_borda(profile),
            Rule::RankedPairs(tb) => ranked_pairs(profile, tb),
            Rule::Elo { k_factor, initial } => elo_rank(profile, *k_factor, *initial),
            Rule::Plurality => plurality_winner(profile),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownRule(pub String);

impl fmt::Display for UnknownRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown rule `{}` (expected borda, ranked-pairs, elo or plurality)",
            self.0
        )
    }
}

impl std::error::Error for UnknownRule {}

impl FromStr for Rule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "borda" => Ok(Rule::Borda),
            "ranked-pairs" => Ok(Rule::ranked_pairs()),
            "elo" => Ok(Rule::elo()),
            "plurality" => Ok(Rule::Plurality),
            other => Err(UnknownRule(other.to_string())),
        }
    }
}

/// Score attached to an alternative by a rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Score {
    Exact(Weight),
    Real(f64),
}

impl Score {
    pub fn to_f64(&self) -> f64 {
        match self {
            Score::Exact(w) => w.to_f64().unwrap_or(f64::NAN),
            Score::Real(x) => *x,
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Exact(w) => serializer.serialize_str(&w.to_string()),
            Score::Real(x) => serializer.serialize_f64(*x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BordaTerm {
    pub entry: usize,
    pub borda: i64,
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub winner: Alternative,
    pub loser: Alternative,
    pub margin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EloMatch {
    pub entry: usize,
    pub winner: Alternative,
    pub loser: Alternative,
    pub weight: f64,
    pub winner_rating: f64,
    pub loser_rating: f64,
}

/// Rule-specific provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Trace {
    Borda {
        terms: BTreeMap<Alternative, Vec<BordaTerm>>,
    },
    RankedPairs {
        locked: Vec<PairRecord>,
        skipped: Vec<PairRecord>,
    },
    Elo {
        k_factor: f64,
        initial: f64,
        history: Vec<EloMatch>,
    },
    Plurality,
}

/// A ranking with per-alternative scores and the rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateOrdering {
    pub rule: String,
    pub ranking: Vec<Vec<Alternative>>,
    pub scores: BTreeMap<Alternative, Score>,
    pub trace: Trace,
}

impl AggregateOrdering {
    /// The top tier.
    pub fn winners(&self) -> &[Alternative] {
        self.ranking.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn losers(&self) -> &[Alternative] {
        self.ranking.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn position(&self, alt: &Alternative) -> Option<usize> {
        self.ranking.iter().position(|t| t.contains(alt))
    }

    /// Relation between `a` and `b` in the ranking (`Greater` = `a` ranked above).
    pub fn compare(&self, a: &Alternative, b: &Alternative) -> Option<Ordering> {
        Some(self.position(b)?.cmp(&self.position(a)?))
    }

    pub fn as_preference_set(&self) -> PreferenceSet {
        PreferenceSet::new(self.ranking.clone())
    }
}

/// Groups alternatives into tiers by descending score; equal scores share a tier.
fn tiers_by_score<T, F>(alts: &[Alternative], scores: &[T], cmp: F) -> Vec<Vec<Alternative>>
where
    F: Fn(&T, &T) -> Ordering,
{
    let mut order: Vec<usize> = (0..alts.len()).collect();
    order.sort_by(|&i, &j| cmp(&scores[j], &scores[i]).then(i.cmp(&j)));
    let mut tiers: Vec<Vec<Alternative>> = Vec::new();
    let mut prev: Option<usize> = None;
    for i in order {
        match prev {
            Some(p) if cmp(&scores[p], &scores[i]) == Ordering::Equal => {
                tiers.last_mut().expect("tier exists").push(alts[i].clone())
            }
            _ => tiers.push(vec![alts[i].clone()]),
        }
        prev = Some(i);
    }
    tiers
}

/// Alternatives strictly worse than `alt` minus alternatives strictly better.
pub fn borda_score(alt: &Alternative, set: &PreferenceSet) -> Result<i64, ProfileError> {
    let tier = set
        .tier_of(alt)
        .ok_or_else(|| ProfileError::UnknownAlternative(alt.to_string()))?;
    let better: usize = set.tiers()[..tier].iter().map(Vec::len).sum();
    let worse: usize = set.tiers()[tier + 1..].iter().map(Vec::len).sum();
    Ok(worse as i64 - better as i64)
}

pub fn weighted_borda(profile: &WeightedProfile) -> Result<AggregateOrdering, ProfileError> {
    profile.ensure_coherent()?;
    let alts = profile.universe();
    let mut totals = vec![Weight::zero(); alts.len()];
    let mut terms: BTreeMap<Alternative, Vec<BordaTerm>> = BTreeMap::new();
    for (e, entry) in profile.entries().iter().enumerate() {
        for (i, a) in alts.iter().enumerate() {
            let b = borda_score(a, &entry.set)?;
            totals[i] += &entry.weight * Weight::from_integer(BigInt::from(b));
            terms.entry(a.clone()).or_default().push(BordaTerm {
                entry: e,
                borda: b,
                weight: entry.weight.to_string(),
            });
        }
    }
    let ranking = tiers_by_score(alts, &totals, |a, b| a.cmp(b));
    Ok(AggregateOrdering {
        rule: Rule::Borda.id().into(),
        ranking,
        scores: alts
            .iter()
            .cloned()
            .zip(totals.into_iter().map(Score::Exact))
            .collect(),
        trace: Trace::Borda { terms },
    })
}

/// True when `to` is reachable from `from` along locked edges.
fn reaches(locked: &[Vec<bool>], from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![false; locked.len()];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend((0..locked.len()).filter(|&w| locked[v][w] && !seen[w]));
    }
    false
}

/// Locked graph of Ranked Pairs as an adjacency matrix plus the lock/skip log.
pub fn lock_pairs(
    tally: &TallyMatrix,
    tie_break: &TieBreak,
) -> (Vec<Vec<bool>>, Vec<PairRecord>, Vec<PairRecord>) {
    let n = tally.len();
    let alts = tally.alternatives();
    let mut pairs: Vec<(usize, usize, Weight)> = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                let m = tally.margin_at(x, y);
                if m > Weight::zero() {
                    pairs.push((x, y, m));
                }
            }
        }
    }
    pairs.sort_by(|(x1, y1, m1), (x2, y2, m2)| {
        m2.cmp(m1).then_with(|| {
            (tie_break.key(&alts[*x1]), tie_break.key(&alts[*y1]))
                .cmp(&(tie_break.key(&alts[*x2]), tie_break.key(&alts[*y2])))
        })
    });

    let mut locked = vec![vec![false; n]; n];
    let mut locked_log = Vec::new();
    let mut skipped_log = Vec::new();
    for (x, y, m) in pairs {
        let record = PairRecord {
            winner: alts[x].clone(),
            loser: alts[y].clone(),
            margin: m.to_string(),
        };
        if reaches(&locked, y, x) {
            skipped_log.push(record);
        } else {
            locked[x][y] = true;
            locked_log.push(record);
        }
    }
    (locked, locked_log, skipped_log)
}

/// Ranked Pairs (Tideman). Tiers come from repeatedly removing the sources of
/// the locked graph; each alternative scores the number ranked strictly below it.
pub fn ranked_pairs(
    profile: &WeightedProfile,
    tie_break: &TieBreak,
) -> Result<AggregateOrdering, ProfileError> {
    let tally = pairwise_tally(profile)?;
    let n = tally.len();
    let alts = tally.alternatives();
    let (locked, locked_log, skipped_log) = lock_pairs(&tally, tie_break);

    let mut remaining: Vec<bool> = vec![true; n];
    let mut ranking: Vec<Vec<Alternative>> = Vec::new();
    let mut layer_of = vec![0usize; n];
    while remaining.iter().any(|&r| r) {
        let sources: Vec<usize> = (0..n)
            .filter(|&v| remaining[v] && !(0..n).any(|u| remaining[u] && locked[u][v]))
            .collect();
        debug_assert!(!sources.is_empty(), "locked graph must be acyclic");
        for &v in &sources {
            remaining[v] = false;
            layer_of[v] = ranking.len();
        }
        ranking.push(sources.iter().map(|&v| alts[v].clone()).collect());
    }
    let mut below = vec![0usize; ranking.len() + 1];
    for l in (0..ranking.len()).rev() {
        below[l] = below[l + 1] + ranking.get(l + 1).map_or(0, Vec::len);
    }
    let scores = (0..n)
        .map(|v| {
            (
                alts[v].clone(),
                Score::Exact(Weight::from_integer(BigInt::from(below[layer_of[v]]))),
            )
        })
        .collect();

    Ok(AggregateOrdering {
        rule: Rule::ranked_pairs().id().into(),
        ranking,
        scores,
        trace: Trace::RankedPairs {
            locked: locked_log,
            skipped: skipped_log,
        },
    })
}

/// Probability-like expected score of a player rated `r_self` against `r_opponent`.
pub fn elo_expected(r_self: f64, r_opponent: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_opponent - r_self) / 400.0))
}

/// Ratings of tracked alternatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EloState {
    pub ratings: BTreeMap<Alternative, f64>,
    pub k_factor: f64,
}

impl EloState {
    pub fn new<'a, I>(alternatives: I, initial: f64, k_factor: f64) -> Self
    where
        I: IntoIterator<Item = &'a Alternative>,
    {
        EloState {
            ratings: alternatives
                .into_iter()
                .map(|a| (a.clone(), initial))
                .collect(),
            k_factor,
        }
    }

    pub fn rating(&self, alt: &Alternative) -> Option<f64> {
        self.ratings.get(alt).copied()
    }
}

/// One match between `winner` and `loser`; `score_s` is the winner's actual score.
pub fn elo_update(
    state: &EloState,
    winner: &Alternative,
    loser: &Alternative,
    score_s: f64,
) -> Result<EloState, ProfileError> {
    elo_update_weighted(state, winner, loser, score_s, 1.0)
}

/// As [`elo_update`] with the rating transfer scaled by `weight`.
pub fn elo_update_weighted(
    state: &EloState,
    winner: &Alternative,
    loser: &Alternative,
    score_s: f64,
    weight: f64,
) -> Result<EloState, ProfileError> {
    let rw = state
        .rating(winner)
        .ok_or_else(|| ProfileError::UnknownAlternative(winner.to_string()))?;
    let rl = state
        .rating(loser)
        .ok_or_else(|| ProfileError::UnknownAlternative(loser.to_string()))?;
    // The loser's own update, K((1 - S) - (1 - E_w)), is the exact negation.
    let delta = weight * state.k_factor * (score_s - elo_expected(rw, rl));
    let mut next = state.clone();
    next.ratings.insert(winner.clone(), rw + delta);
    next.ratings.insert(loser.clone(), rl - delta);
    Ok(next)
}

/// Replays every strictly ordered pair of every entry, in input order, as a win.
///
/// The result depends on entry order.
pub fn elo_rank(
    profile: &WeightedProfile,
    k_factor: f64,
    initial: f64,
) -> Result<AggregateOrdering, ProfileError> {
    profile.ensure_coherent()?;
    let alts = profile.universe();
    let mut state = EloState::new(alts, initial, k_factor);
    let mut history = Vec::new();
    for (e, entry) in profile.entries().iter().enumerate() {
        let weight = entry.weight.to_f64().unwrap_or(0.0);
        let tiers = entry.set.tiers();
        for (ti, upper) in tiers.iter().enumerate() {
            for lower in &tiers[ti + 1..] {
                for w in upper {
                    for l in lower {
                        state = elo_update_weighted(&state, w, l, 1.0, weight)?;
                        history.push(EloMatch {
                            entry: e,
                            winner: w.clone(),
                            loser: l.clone(),
                            weight,
                            winner_rating: state.ratings[w],
                            loser_rating: state.ratings[l],
                        });
                    }
                }
            }
        }
    }
    let ratings: Vec<f64> = alts.iter().map(|a| state.ratings[a]).collect();
    Ok(AggregateOrdering {
        rule: Rule::elo().id().into(),
        ranking: tiers_by_score(alts, &ratings, |a, b| a.total_cmp(b)),
        scores: alts
            .iter()
            .cloned()
            .zip(ratings.into_iter().map(Score::Real))
            .collect(),
        trace: Trace::Elo {
            k_factor,
            initial,
            history,
        },
    })
}

/// First-preference weight; a tied top tier splits its entry's weight evenly.
pub fn plurality_winner(profile: &WeightedProfile) -> Result<AggregateOrdering, ProfileError> {
    profile.ensure_coherent()?;
    let alts = profile.universe();
    let mut totals = vec![Weight::zero(); alts.len()];
    for entry in profile.entries() {
        let Some(top) = entry.set.tiers().first() else {
            continue;
        };
        let share = &entry.weight / Weight::from_integer(BigInt::from(top.len()));
        for a in top {
            if let Some(i) = profile.index_of(a) {
                totals[i] += &share;
            }
        }
    }
    Ok(AggregateOrdering {
        rule: Rule::Plurality.id().into(),
        ranking: tiers_by_score(alts, &totals, |a, b| a.cmp(b)),
        scores: alts
            .iter()
            .cloned()
            .zip(totals.into_iter().map(Score::Exact))
            .collect(),
        trace: Trace::Plurality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alt(s: &str) -> Alternative {
        Alternative::new(s)
    }

    fn q(p: i64, d: i64) -> Weight {
        Weight::new(p.into(), d.into())
    }

    fn exact(o: &AggregateOrdering, a: &str) -> Weight {
        match &o.scores[&alt(a)] {
            Score::Exact(w) => w.clone(),
            Score::Real(_) => panic!("expected exact score"),
        }
    }

    fn ids(o: &AggregateOrdering) -> String {
        o.as_preference_set().to_string()
    }

    fn election_100() -> WeightedProfile {
        WeightedProfile::from_pairs(
            &["A", "B", "C"],
            &[
                ("70/100", "A>B>C"),
                ("20/100", "B>C>A"),
                ("10/100", "C>A>B"),
            ],
        )
        .unwrap()
    }

    fn election_24() -> WeightedProfile {
        WeightedProfile::from_pairs(
            &["A", "B", "C", "D"],
            &[
                ("8/24", "A>B>C>D"),
                ("3/24", "D>A>B>C"),
                ("6/24", "D>A>C>B"),
                ("7/24", "B>C>D>A"),
            ],
        )
        .unwrap()
    }

    fn election_32() -> WeightedProfile {
        WeightedProfile::from_pairs(
            &["A", "B", "C", "D"],
            &[
                ("6/32", "A>B>C>D"),
                ("3/32", "D>A>B>C"),
                ("8/32", "D>A>C>B"),
                ("7/32", "B>C>D>A"),
                ("8/32", "C~D>B>A"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn borda_score_examples() {
        assert_eq!(
            borda_score(&alt("A"), &"A>B>C>D".parse().unwrap()).unwrap(),
            3
        );
        assert_eq!(
            borda_score(&alt("C"), &"C~D>B>A".parse().unwrap()).unwrap(),
            2
        );
        assert_eq!(borda_score(&alt("X"), &"X".parse().unwrap()).unwrap(), 0);
        assert!(borda_score(&alt("Q"), &"A>B".parse().unwrap()).is_err());
    }

    #[test]
    fn weighted_borda_updated_profile() {
        let o = weighted_borda(&election_32()).unwrap();
        assert_eq!(exact(&o, "D"), q(3, 4));
        assert_eq!(exact(&o, "C"), q(0, 1));
        assert_eq!(exact(&o, "B"), q(-1, 4));
        assert_eq!(exact(&o, "A"), q(-1, 2));
        assert_eq!(ids(&o), "D>C>B>A");
    }

    #[test]
    fn weighted_borda_pre_update_profile() {
        let o = weighted_borda(&election_24()).unwrap();
        assert_eq!(exact(&o, "A"), q(1, 2));
        assert_eq!(exact(&o, "B"), q(1, 3));
        assert_eq!(exact(&o, "D"), q(-1, 6));
        assert_eq!(exact(&o, "C"), q(-2, 3));
    }

    #[test]
    fn single_voter_borda_is_identity() {
        let p = WeightedProfile::from_pairs(&["A", "B", "C"], &[("1", "B>A~C")]).unwrap();
        let o = weighted_borda(&p).unwrap();
        assert_eq!(ids(&o), "B>A~C");
        assert_eq!(exact(&o, "B"), q(2, 1));
        assert_eq!(exact(&o, "A"), q(-1, 1));
    }

    #[test]
    fn ranked_pairs_examples() {
        let o = ranked_pairs(&election_100(), &TieBreak::Lexicographic).unwrap();
        assert_eq!(ids(&o), "A>B>C");
        let o = ranked_pairs(&election_24(), &TieBreak::Lexicographic).unwrap();
        assert_eq!(ids(&o), "D>A>B>C");
        let Trace::RankedPairs { locked, skipped } = &o.trace else {
            panic!()
        };
        assert_eq!(locked.len(), 4);
        assert_eq!(skipped.len(), 2);
        assert_eq!(
            (locked[0].winner.as_str(), locked[0].loser.as_str()),
            ("B", "C")
        );

        let p =
            WeightedProfile::from_pairs(&["A", "B"], &[("2/5", "B>A"), ("3/5", "A>B")]).unwrap();
        assert_eq!(
            ids(&ranked_pairs(&p, &TieBreak::Lexicographic).unwrap()),
            "A>B"
        );
    }

    #[test]
    fn ranked_pairs_with_tied_pair_keeps_both_in_a_tier() {
        let p =
            WeightedProfile::from_pairs(&["A", "B"], &[("1/2", "B>A"), ("1/2", "A>B")]).unwrap();
        assert_eq!(
            ids(&ranked_pairs(&p, &TieBreak::Lexicographic).unwrap()),
            "A~B"
        );
    }

    #[test]
    fn tie_break_changes_equal_margin_cycles() {
        let p = WeightedProfile::from_pairs(
            &["R", "P", "S"],
            &[("1/3", "R>S>P"), ("1/3", "P>R>S"), ("1/3", "S>P>R")],
        )
        .unwrap();
        let lex = ranked_pairs(&p, &TieBreak::Lexicographic).unwrap();
        let pri =
            ranked_pairs(&p, &TieBreak::Priority(vec![alt("S"), alt("P"), alt("R")])).unwrap();
        assert_ne!(lex.winners(), pri.winners());
    }

    #[test]
    fn elo_expected_examples() {
        assert!((elo_expected(1600.0, 1000.0) - 0.9693).abs() < 1e-4);
        assert_eq!(elo_expected(1234.5, 1234.5), 0.5);
        assert!((elo_expected(1000.0, 1400.0) - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn elo_update_examples() {
        let (a, b) = (alt("A"), alt("B"));
        let mut s = EloState::new([&a, &b], 1000.0, 32.0);
        s.ratings.insert(a.clone(), 1600.0);
        let n = elo_update(&s, &a, &b, 1.0).unwrap();
        assert!((n.ratings[&a] - 1600.98).abs() < 0.01);
        assert!((n.ratings[&b] - 999.02).abs() < 0.01);
        assert!((n.ratings[&a] + n.ratings[&b] - 2600.0).abs() < 1e-9);

        let s = EloState::new([&a, &b], 1000.0, 32.0);
        let draw = elo_update(&s, &a, &b, 0.5).unwrap();
        assert_eq!(draw.ratings, s.ratings);
        let win = elo_update(&s, &a, &b, 1.0).unwrap();
        assert_eq!(win.ratings[&a], 1016.0);
        assert_eq!(win.ratings[&b], 984.0);

        assert!(elo_update(&s, &a, &alt("Z"), 1.0).is_err());
    }

    #[test]
    fn elo_rank_examples() {
        let p = WeightedProfile::from_pairs(&["A", "B"], &[("1", "A>B")]).unwrap();
        let o = elo_rank(&p, 32.0, 1000.0).unwrap();
        assert_eq!(ids(&o), "A>B");

        let o = elo_rank(&election_100(), 32.0, 1000.0).unwrap();
        assert_eq!(o.winners(), &[alt("A")]);

        let empty = WeightedProfile::new(vec![alt("A"), alt("B")], vec![]);
        let o = elo_rank(&empty, 32.0, 1000.0).unwrap();
        assert_eq!(ids(&o), "A~B");
        assert_eq!(o.scores[&alt("A")], Score::Real(1000.0));
    }

    #[test]
    fn plurality_examples() {
        let o = plurality_winner(&election_100()).unwrap();
        assert_eq!(o.winners(), &[alt("A")]);
        assert_eq!(exact(&o, "A"), q(7, 10));

        let p =
            WeightedProfile::from_pairs(&["A", "B"], &[("1/2", "A>B"), ("1/2", "B>A")]).unwrap();
        assert_eq!(ids(&plurality_winner(&p).unwrap()), "A~B");

        let p = WeightedProfile::from_pairs(&["A", "B", "C", "D"], &[("1", "C~D>A>B")]).unwrap();
        let o = plurality_winner(&p).unwrap();
        assert_eq!(exact(&o, "C"), q(1, 2));
        assert_eq!(exact(&o, "D"), q(1, 2));
    }

    #[test]
    fn rules_reject_incoherent_profiles() {
        let p = WeightedProfile::new(
            vec![alt("A"), alt("B")],
            vec![crate::preference::ProfileEntry {
                set: "A>B".parse().unwrap(),
                weight: q(1, 3),
            }],
        );
        for rule in [
            Rule::Borda,
            Rule::ranked_pairs(),
            Rule::elo(),
            Rule::Plurality,
        ] {
            assert!(
                matches!(rule.aggregate(&p), Err(ProfileError::Incoherent(_))),
                "{rule}"
            );
        }
    }

    #[test]
    fn rule_ids_parse() {
        for id in ["borda", "ranked-pairs", "elo", "plurality"] {
            assert_eq!(id.parse::<Rule>().unwrap().id(), id);
        }
        assert!("nosuch".parse::<Rule>().is_err());
    }
}
