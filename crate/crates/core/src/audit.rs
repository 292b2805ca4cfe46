//! Social-choice criteria audits: single-profile checks and seeded randomized searches.
//!
//! Every trial draws its randomness from `(seed, trial)` alone, so searches give
//! the same answer whatever the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{AggregateOrdering, Rule};
use crate::preference::{
    condorcet_loser, condorcet_winner, pairwise_tally, Alternative, PreferenceSet, ProfileEntry,
    ProfileError, Weight, WeightedProfile,
};
use crate::profile_file::ProfileFile;

/// Common denominator of randomly drawn weights.
pub const WEIGHT_DENOMINATOR: u32 = 1000;
pub const MAX_ALTERNATIVES: usize = 5;
pub const MAX_SETS: usize = 6;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Holds,
    Violated,
    NotApplicable,
}

impl Outcome {
    pub fn id(self) -> &'static str {
        match self {
            Outcome::Holds => "holds",
            Outcome::Violated => "violated",
            Outcome::NotApplicable => "not-applicable",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Participation,
    /// A Condorcet loser is never in the top tier.
    CondorcetLoser,
    /// A Condorcet winner is never in the bottom tier.
    CondorcetWinner,
    /// A Condorcet winner is ranked alone at the top.
    CondorcetWinnerFirst,
    Iia,
    Pareto,
    NonDictatorship,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::Participation,
        Criterion::CondorcetLoser,
        Criterion::CondorcetWinner,
        Criterion::CondorcetWinnerFirst,
        Criterion::Iia,
        Criterion::Pareto,
        Criterion::NonDictatorship,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Criterion::Participation => "participation",
            Criterion::CondorcetLoser => "condorcet-loser",
            Criterion::CondorcetWinner => "condorcet-winner",
            Criterion::CondorcetWinnerFirst => "condorcet-winner-first",
            Criterion::Iia => "iia",
            Criterion::Pareto => "pareto",
            Criterion::NonDictatorship => "non-dictatorship",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Criterion {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Criterion::ALL.iter().map(|c| c.id()).collect();
                AuditError::Invalid(format!(
                    "unknown criterion `{s}` (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    None,
    AddSet { set: String, weight: String },
    RemoveAlternative { alternative: Alternative },
}

/// Everything needed to re-run the rule and see the failure again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trial: Option<u64>,
    pub profile: ProfileFile,
    pub perturbation: Perturbation,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub after_profile: Option<ProfileFile>,
    pub before: Vec<Vec<Alternative>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub after: Option<Vec<Vec<Alternative>>>,
    pub detail: String,
}

impl Witness {
    /// Re-runs `rule` on the stored profiles and confirms both the stored
    /// orderings and the failure of `criterion`.
    pub fn revalidate(&self, rule: &Rule, criterion: Criterion) -> Result<bool, AuditError> {
        let before_profile = self.profile.to_profile()?;
        let before = rule.aggregate(&before_profile)?;
        if before.ranking != self.before {
            return Ok(false);
        }
        match (criterion, &self.perturbation) {
            (Criterion::Participation, Perturbation::AddSet { set, weight }) => {
                let set: PreferenceSet = set.parse()?;
                let weight = crate::preference::parse_rational(weight)?;
                let after_profile = before_profile.with_added(set.clone(), weight);
                if self.after_profile.as_ref() != Some(&ProfileFile::from_profile(&after_profile)) {
                    return Ok(false);
                }
                let after = rule.aggregate(&after_profile)?;
                Ok(Some(&after.ranking) == self.after.as_ref()
                    && participation_outcome(&before, &after, &set) == Outcome::Violated)
            }
            (Criterion::Iia, Perturbation::RemoveAlternative { alternative }) => {
                let after = rule.aggregate(&before_profile.without(alternative))?;
                Ok(Some(&after.ranking) == self.after.as_ref()
                    && first_flip(&before, &after).is_some())
            }
            (Criterion::CondorcetLoser, Perturbation::None)
            | (Criterion::CondorcetWinner, Perturbation::None)
            | (Criterion::CondorcetWinnerFirst, Perturbation::None) => {
                Ok(condorcet_check(criterion, &before_profile, &before)? == Outcome::Violated)
            }
            (Criterion::Pareto, Perturbation::None) => {
                Ok(pareto_violation(&before_profile, &before).is_some())
            }
            (Criterion::NonDictatorship, Perturbation::None) => Ok(before_profile
                .entries()
                .iter()
                .any(|e| e.set.tiers() == before.ranking.as_slice())),
            _ => Ok(false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub criterion: Criterion,
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trials: Option<u64>,
    pub outcome: Outcome,
    /// Per-trial outcome counts for randomized runs.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub counts: BTreeMap<Outcome, u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
}

impl AuditVerdict {
    fn single(
        criterion: Criterion,
        rule: &Rule,
        outcome: Outcome,
        witness: Option<Witness>,
    ) -> Self {
        AuditVerdict {
            criterion,
            rule: rule.id().into(),
            trials: None,
            outcome,
            counts: BTreeMap::new(),
            witness,
        }
    }
}

/// Bounds and seed of a randomized search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_alternatives: usize,
    /// Number of preference sets per sampled profile. For participation this
    /// counts the added set.
    pub n_sets: usize,
    pub trials: u64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(n_alternatives: usize, n_sets: usize, trials: u64, seed: u64) -> Self {
        SearchConfig {
            n_alternatives,
            n_sets,
            trials,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), AuditError> {
        if !(1..=MAX_ALTERNATIVES).contains(&self.n_alternatives) {
            return Err(AuditError::Invalid(format!(
                "n_alternatives must be in 1..={MAX_ALTERNATIVES}, got {}",
                self.n_alternatives
            )));
        }
        if !(1..=MAX_SETS).contains(&self.n_sets) {
            return Err(AuditError::Invalid(format!(
                "n_sets must be in 1..={MAX_SETS}, got {}",
                self.n_sets
            )));
        }
        Ok(())
    }
}

/// Labels `A`, `B`, `C`, ...
pub fn labels(n: usize) -> Vec<Alternative> {
    (0..n)
        .map(|i| Alternative::new(((b'A' + i as u8) as char).to_string()))
        .collect()
}

/// Every total preorder over `alts`, in a fixed order.
pub fn weak_orders(alts: &[Alternative]) -> Vec<PreferenceSet> {
    fn go(rest: &[Alternative], prefix: &mut Vec<Vec<Alternative>>, out: &mut Vec<PreferenceSet>) {
        if rest.is_empty() {
            out.push(PreferenceSet::new(prefix.clone()));
            return;
        }
        let n = rest.len();
        for mask in 1u32..(1 << n) {
            let (tier, remaining): (Vec<_>, Vec<_>) = rest
                .iter()
                .enumerate()
                .partition(|(i, _)| mask & (1 << i) != 0);
            prefix.push(tier.into_iter().map(|(_, a)| a.clone()).collect());
            let remaining: Vec<Alternative> =
                remaining.into_iter().map(|(_, a)| a.clone()).collect();
            go(&remaining, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(alts, &mut Vec::new(), &mut out);
    out
}

/// Flat-Dirichlet weights rounded to integers summing to `denominator` by largest remainder.
pub fn dirichlet_counts<R: Rng + ?Sized>(rng: &mut R, n: usize, denominator: u32) -> Vec<u32> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let scaled: Vec<f64> = draws
        .iter()
        .map(|x| x / total * denominator as f64)
        .collect();
    let mut counts: Vec<u32> = scaled.iter().map(|x| x.floor() as u32).collect();
    let mut short = denominator - counts.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (scaled[j] - scaled[j].floor())
            .total_cmp(&(scaled[i] - scaled[i].floor()))
            .then(i.cmp(&j))
    });
    for i in order.into_iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts
}

fn ratio(p: u32, q: u32) -> Weight {
    Weight::new(BigInt::from(p), BigInt::from(q))
}

/// Samples a coherent profile: uniform weak orders, flat-Dirichlet weights.
pub fn random_profile<R: Rng + ?Sized>(
    rng: &mut R,
    universe: &[Alternative],
    orders: &[PreferenceSet],
    n_sets: usize,
) -> WeightedProfile {
    let counts = dirichlet_counts(rng, n_sets, WEIGHT_DENOMINATOR);
    let entries = counts
        .into_iter()
        .map(|c| ProfileEntry {
            set: orders[rng.random_range(0..orders.len())].clone(),
            weight: ratio(c, WEIGHT_DENOMINATOR),
        })
        .collect();
    WeightedProfile::new(universe.to_vec(), entries)
}

/// RNG of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn top(o: &AggregateOrdering) -> &[Alternative] {
    o.winners()
}

/// Outcome of adding `added` given the orderings before and after.
///
/// Top tiers are compared as sets. The update is a violation when `added`
/// strictly prefers some `a` from the old top tier to some `b` in the new one
/// and the pair moved: `a` left the top tier or `b` joined it.
pub fn participation_outcome(
    before: &AggregateOrdering,
    after: &AggregateOrdering,
    added: &PreferenceSet,
) -> Outcome {
    let (t0, t1) = (top(before), top(after));
    let same = t0.len() == t1.len() && t0.iter().all(|a| t1.contains(a));
    if same {
        return Outcome::Holds;
    }
    for a in t0 {
        for b in t1 {
            let moved = !t1.contains(a) || !t0.contains(b);
            if moved && added.prefers(a, b) == Some(true) {
                return Outcome::Violated;
            }
        }
    }
    Outcome::NotApplicable
}

/// Adds `set` at `weight` (rescaling the rest by `1 - weight`) and checks the winner.
pub fn audit_participation_update(
    rule: &Rule,
    profile: &WeightedProfile,
    set: &PreferenceSet,
    weight: &Weight,
) -> Result<AuditVerdict, AuditError> {
    let (outcome, witness) = participation_trial(rule, profile, set, weight)?;
    Ok(AuditVerdict::single(
        Criterion::Participation,
        rule,
        outcome,
        witness,
    ))
}

fn participation_trial(
    rule: &Rule,
    profile: &WeightedProfile,
    set: &PreferenceSet,
    weight: &Weight,
) -> Result<(Outcome, Option<Witness>), AuditError> {
    let before = rule.aggregate(profile)?;
    let after_profile = profile.with_added(set.clone(), weight.clone());
    let after = rule.aggregate(&after_profile)?;
    let outcome = participation_outcome(&before, &after, set);
    let witness = (outcome == Outcome::Violated).then(|| Witness {
        trial: None,
        profile: ProfileFile::from_profile(profile),
        perturbation: Perturbation::AddSet {
            set: set.to_string(),
            weight: weight.to_string(),
        },
        after_profile: Some(ProfileFile::from_profile(&after_profile)),
        before: before.ranking.clone(),
        after: Some(after.ranking.clone()),
        detail: format!(
            "top tier moved from {} to {} although the added set is {}",
            PreferenceSet::new(vec![top(&before).to_vec()]),
            PreferenceSet::new(vec![top(&after).to_vec()]),
            set
        ),
    });
    Ok((outcome, witness))
}

/// Per-trial result folded by [`run_trials`].
#[derive(Debug, Clone, Default)]
struct Tally {
    counts: BTreeMap<Outcome, u64>,
    first: Option<Witness>,
}

impl Tally {
    fn one(outcome: Outcome, witness: Option<Witness>) -> Self {
        Tally {
            counts: BTreeMap::from([(outcome, 1)]),
            first: witness,
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.first = match (self.first, other.first) {
            (Some(a), Some(b)) => Some(if b.trial < a.trial { b } else { a }),
            (a, b) => a.or(b),
        };
        self
    }
}

fn run_trials<F>(
    cfg: &SearchConfig,
    criterion: Criterion,
    rule: &Rule,
    trial: F,
) -> Result<AuditVerdict, AuditError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<(Outcome, Option<Witness>), AuditError> + Sync,
{
    cfg.check()?;
    let tally = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let (outcome, witness) = trial(&mut rng)?;
            Ok::<_, AuditError>(Tally::one(
                outcome,
                witness.map(|w| Witness {
                    trial: Some(t),
                    ..w
                }),
            ))
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let outcome = if tally.first.is_some() {
        Outcome::Violated
    } else if tally.counts.get(&Outcome::Holds).copied().unwrap_or(0) > 0 {
        Outcome::Holds
    } else {
        Outcome::NotApplicable
    };
    log::debug!("{criterion} under {rule}: {:?}", tally.counts);
    Ok(AuditVerdict {
        criterion,
        rule: rule.id().into(),
        trials: Some(cfg.trials),
        outcome,
        counts: tally.counts,
        witness: tally.first,
    })
}

/// Random participation search. Each trial draws `n_sets` flat-Dirichlet weights;
/// the last set is the one added, and the others form the base profile at their
/// proportions, so the updated profile carries exactly the drawn weights.
pub fn participation_search(rule: &Rule, cfg: &SearchConfig) -> Result<AuditVerdict, AuditError> {
    if cfg.n_sets < 2 {
        return Err(AuditError::Invalid(
            "participation needs at least two sets".into(),
        ));
    }
    let universe = labels(cfg.n_alternatives);
    let orders = weak_orders(&universe);
    run_trials(cfg, Criterion::Participation, rule, |rng| {
        let counts = dirichlet_counts(rng, cfg.n_sets, WEIGHT_DENOMINATOR);
        let sets: Vec<PreferenceSet> = (0..cfg.n_sets)
            .map(|_| orders[rng.random_range(0..orders.len())].clone())
            .collect();
        let added = counts[cfg.n_sets - 1];
        if added == 0 || added == WEIGHT_DENOMINATOR {
            return Ok((Outcome::NotApplicable, None));
        }
        let rest = WEIGHT_DENOMINATOR - added;
        let base = WeightedProfile::new(
            universe.clone(),
            sets[..cfg.n_sets - 1]
                .iter()
                .zip(&counts)
                .map(|(s, &c)| ProfileEntry {
                    set: s.clone(),
                    weight: ratio(c, rest),
                })
                .collect(),
        );
        participation_trial(
            rule,
            &base,
            &sets[cfg.n_sets - 1],
            &ratio(added, WEIGHT_DENOMINATOR),
        )
    })
}

/// First witness of a participation failure, if the search finds one.
pub fn search_participation_violation(
    rule: &Rule,
    cfg: &SearchConfig,
) -> Result<Option<Witness>, AuditError> {
    Ok(participation_search(rule, cfg)?.witness)
}

fn condorcet_check(
    criterion: Criterion,
    profile: &WeightedProfile,
    ordering: &AggregateOrdering,
) -> Result<Outcome, AuditError> {
    let tally = pairwise_tally(profile)?;
    let outcome = match criterion {
        Criterion::CondorcetLoser => match condorcet_loser(&tally) {
            None => Outcome::NotApplicable,
            Some(l) if ordering.winners().contains(&l) => Outcome::Violated,
            Some(_) => Outcome::Holds,
        },
        Criterion::CondorcetWinner => match condorcet_winner(&tally) {
            Some(w) if profile.universe().len() >= 2 => {
                if ordering.losers().contains(&w) {
                    Outcome::Violated
                } else {
                    Outcome::Holds
                }
            }
            _ => Outcome::NotApplicable,
        },
        Criterion::CondorcetWinnerFirst => match condorcet_winner(&tally) {
            Some(w) if profile.universe().len() >= 2 => {
                if ordering.winners() == [w] {
                    Outcome::Holds
                } else {
                    Outcome::Violated
                }
            }
            _ => Outcome::NotApplicable,
        },
        other => {
            return Err(AuditError::Invalid(format!(
                "{other} is not a Condorcet criterion"
            )))
        }
    };
    Ok(outcome)
}

fn condorcet_trial(
    criterion: Criterion,
    rule: &Rule,
    profile: &WeightedProfile,
) -> Result<(Outcome, Option<Witness>), AuditError> {
    let ordering = rule.aggregate(profile)?;
    let outcome = condorcet_check(criterion, profile, &ordering)?;
    let witness = (outcome == Outcome::Violated).then(|| Witness {
        trial: None,
        profile: ProfileFile::from_profile(profile),
        perturbation: Perturbation::None,
        after_profile: None,
        before: ordering.ranking.clone(),
        after: None,
        detail: format!(
            "{criterion} fails: ordering is {}",
            ordering.as_preference_set()
        ),
    });
    Ok((outcome, witness))
}

/// Checks one Condorcet criterion on a single profile.
pub fn audit_condorcet(
    rule: &Rule,
    criterion: Criterion,
    profile: &WeightedProfile,
) -> Result<AuditVerdict, AuditError> {
    let (outcome, witness) = condorcet_trial(criterion, rule, profile)?;
    Ok(AuditVerdict::single(criterion, rule, outcome, witness))
}

/// Randomized run of one Condorcet criterion.
pub fn condorcet_search(
    rule: &Rule,
    criterion: Criterion,
    cfg: &SearchConfig,
) -> Result<AuditVerdict, AuditError> {
    let universe = labels(cfg.n_alternatives);
    let orders = weak_orders(&universe);
    run_trials(cfg, criterion, rule, |rng| {
        let profile = random_profile(rng, &universe, &orders, cfg.n_sets);
        condorcet_trial(criterion, rule, &profile)
    })
}

/// The loser-never-first and winner-never-last verdicts, in that order.
pub fn audit_condorcet_consistency(
    rule: &Rule,
    cfg: &SearchConfig,
) -> Result<(AuditVerdict, AuditVerdict), AuditError> {
    Ok((
        condorcet_search(rule, Criterion::CondorcetLoser, cfg)?,
        condorcet_search(rule, Criterion::CondorcetWinner, cfg)?,
    ))
}

/// First surviving pair whose relative order differs between the two orderings.
fn first_flip(
    before: &AggregateOrdering,
    after: &AggregateOrdering,
) -> Option<(Alternative, Alternative)> {
    let survivors: Vec<&Alternative> = after.ranking.iter().flatten().collect();
    for (i, x) in survivors.iter().enumerate() {
        for y in &survivors[i + 1..] {
            if before.compare(x, y) != after.compare(x, y) {
                return Some(((*x).clone(), (*y).clone()));
            }
        }
    }
    None
}

fn iia_trial(
    rule: &Rule,
    profile: &WeightedProfile,
    removed: &Alternative,
) -> Result<(Outcome, Option<Witness>), AuditError> {
    if profile.index_of(removed).is_none() {
        return Err(ProfileError::UnknownAlternative(removed.to_string()).into());
    }
    let before = rule.aggregate(profile)?;
    if before.winners().contains(removed) {
        return Ok((Outcome::NotApplicable, None));
    }
    let after = rule.aggregate(&profile.without(removed))?;
    let Some((x, y)) = first_flip(&before, &after) else {
        return Ok((Outcome::Holds, None));
    };
    let witness = Witness {
        trial: None,
        profile: ProfileFile::from_profile(profile),
        perturbation: Perturbation::RemoveAlternative {
            alternative: removed.clone(),
        },
        after_profile: Some(ProfileFile::from_profile(&profile.without(removed))),
        before: before.ranking.clone(),
        after: Some(after.ranking.clone()),
        detail: format!("removing {removed} changed the relation between {x} and {y}"),
    };
    Ok((Outcome::Violated, Some(witness)))
}

/// Deletes `removed` everywhere and checks that no surviving pair changes its
/// relation, including changes to or from indifference.
pub fn audit_iia(
    rule: &Rule,
    profile: &WeightedProfile,
    removed: &Alternative,
) -> Result<AuditVerdict, AuditError> {
    let (outcome, witness) = iia_trial(rule, profile, removed)?;
    Ok(AuditVerdict::single(Criterion::Iia, rule, outcome, witness))
}

/// Random IIA search removing a uniformly chosen alternative each trial.
pub fn iia_search(rule: &Rule, cfg: &SearchConfig) -> Result<AuditVerdict, AuditError> {
    let universe = labels(cfg.n_alternatives);
    let orders = weak_orders(&universe);
    run_trials(cfg, Criterion::Iia, rule, |rng| {
        let profile = random_profile(rng, &universe, &orders, cfg.n_sets);
        let removed = &universe[rng.random_range(0..universe.len())];
        iia_trial(rule, &profile, removed)
    })
}

/// A pair every set ranks `x` over `y` while the output puts `y` strictly above `x`.
fn pareto_violation(
    profile: &WeightedProfile,
    ordering: &AggregateOrdering,
) -> Option<(Alternative, Alternative)> {
    let u = profile.universe();
    if profile.entries().is_empty() {
        return None;
    }
    for x in u {
        for y in u {
            let unanimous = x != y
                && profile
                    .entries()
                    .iter()
                    .all(|e| e.set.prefers(x, y) == Some(true));
            if unanimous && ordering.compare(y, x) == Some(std::cmp::Ordering::Greater) {
                return Some((x.clone(), y.clone()));
            }
        }
    }
    None
}

fn pareto_trial(
    rule: &Rule,
    profile: &WeightedProfile,
) -> Result<(Outcome, Option<Witness>), AuditError> {
    let ordering = rule.aggregate(profile)?;
    let Some((x, y)) = pareto_violation(profile, &ordering) else {
        return Ok((Outcome::Holds, None));
    };
    Ok((
        Outcome::Violated,
        Some(Witness {
            trial: None,
            profile: ProfileFile::from_profile(profile),
            perturbation: Perturbation::None,
            after_profile: None,
            before: ordering.ranking.clone(),
            after: None,
            detail: format!("every set ranks {x} above {y} but the output ranks {y} higher"),
        }),
    ))
}

pub fn audit_pareto(rule: &Rule, profile: &WeightedProfile) -> Result<AuditVerdict, AuditError> {
    let (outcome, witness) = pareto_trial(rule, profile)?;
    Ok(AuditVerdict::single(
        Criterion::Pareto,
        rule,
        outcome,
        witness,
    ))
}

pub fn pareto_search(rule: &Rule, cfg: &SearchConfig) -> Result<AuditVerdict, AuditError> {
    let universe = labels(cfg.n_alternatives);
    let orders = weak_orders(&universe);
    run_trials(cfg, Criterion::Pareto, rule, |rng| {
        let profile = random_profile(rng, &universe, &orders, cfg.n_sets);
        pareto_trial(rule, &profile)
    })
}

/// Looks for an entry index whose set equals the output ordering in every sampled profile.
///
/// Violated only if such a dictator index survives all trials; the witness is
/// then the first sampled profile.
pub fn dictatorship_probe(rule: &Rule, cfg: &SearchConfig) -> Result<AuditVerdict, AuditError> {
    cfg.check()?;
    if cfg.n_sets < 3 {
        return Err(AuditError::Invalid(
            "the dictatorship probe needs at least three sets".into(),
        ));
    }
    let universe = labels(cfg.n_alternatives);
    let orders = weak_orders(&universe);
    let matches: Vec<(Vec<bool>, Option<Witness>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let profile = random_profile(&mut rng, &universe, &orders, cfg.n_sets);
            let ordering = rule.aggregate(&profile)?;
            let hits = profile
                .entries()
                .iter()
                .map(|e| e.set.tiers() == ordering.ranking.as_slice())
                .collect();
            let witness = (t == 0).then(|| Witness {
                trial: Some(t),
                profile: ProfileFile::from_profile(&profile),
                perturbation: Perturbation::None,
                after_profile: None,
                before: ordering.ranking.clone(),
                after: None,
                detail: String::new(),
            });
            Ok((hits, witness))
        })
        .collect::<Result<_, AuditError>>()?;
    let dictators: Vec<usize> = (0..cfg.n_sets)
        .filter(|&i| !matches.is_empty() && matches.iter().all(|(h, _)| h[i]))
        .collect();
    let (outcome, witness) = match dictators.first() {
        Some(&i) => {
            let mut w = matches.into_iter().next().and_then(|(_, w)| w);
            if let Some(w) = w.as_mut() {
                w.detail = format!("entry {i} matched the output ordering in every trial");
            }
            (Outcome::Violated, w)
        }
        None if cfg.trials == 0 => (Outcome::NotApplicable, None),
        None => (Outcome::Holds, None),
    };
    Ok(AuditVerdict {
        criterion: Criterion::NonDictatorship,
        rule: rule.id().into(),
        trials: Some(cfg.trials),
        outcome,
        counts: BTreeMap::new(),
        witness,
    })
}

/// Randomized audit of any criterion.
pub fn run_audit(
    rule: &Rule,
    criterion: Criterion,
    cfg: &SearchConfig,
) -> Result<AuditVerdict, AuditError> {
    match criterion {
        Criterion::Participation => participation_search(rule, cfg),
        Criterion::CondorcetLoser
        | Criterion::CondorcetWinner
        | Criterion::CondorcetWinnerFirst => condorcet_search(rule, criterion, cfg),
        Criterion::Iia => iia_search(rule, cfg),
        Criterion::Pareto => pareto_search(rule, cfg),
        Criterion::NonDictatorship => dictatorship_probe(rule, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alt(s: &str) -> Alternative {
        Alternative::new(s)
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

    #[test]
    fn weak_order_counts_are_fubini_numbers() {
        let counts: Vec<usize> = (1..=5).map(|n| weak_orders(&labels(n)).len()).collect();
        assert_eq!(counts, vec![1, 3, 13, 75, 541]);
    }

    #[test]
    fn dirichlet_counts_sum_exactly() {
        let mut rng = trial_rng(7, 0);
        for n in 1..=6 {
            assert_eq!(
                dirichlet_counts(&mut rng, n, WEIGHT_DENOMINATOR)
                    .iter()
                    .sum::<u32>(),
                WEIGHT_DENOMINATOR
            );
        }
    }

    #[test]
    fn random_profiles_are_coherent() {
        let u = labels(4);
        let orders = weak_orders(&u);
        let mut rng = trial_rng(1, 2);
        for _ in 0..50 {
            assert!(random_profile(&mut rng, &u, &orders, 5).validate().coherent);
        }
    }

    #[test]
    fn borda_update_on_24_voter_profile_is_not_applicable() {
        let p5: PreferenceSet = "C~D>B>A".parse().unwrap();
        let v =
            audit_participation_update(&Rule::Borda, &election_24(), &p5, &ratio(8, 32)).unwrap();
        assert_eq!(v.outcome, Outcome::NotApplicable);
        let after = Rule::Borda
            .aggregate(&election_24().with_added(p5, ratio(8, 32)))
            .unwrap();
        assert_eq!(after.winners(), &[alt("D")]);
    }

    #[test]
    fn ranked_pairs_update_on_24_voter_profile() {
        let p5: PreferenceSet = "C~D>B>A".parse().unwrap();
        let before = Rule::ranked_pairs().aggregate(&election_24()).unwrap();
        assert_eq!(before.winners(), &[alt("D")]);
        let v =
            audit_participation_update(&Rule::ranked_pairs(), &election_24(), &p5, &ratio(8, 32))
                .unwrap();
        assert_eq!(v.outcome, Outcome::Violated);
        let w = v.witness.unwrap();
        assert_eq!(w.after.as_ref().unwrap()[0], vec![alt("B")]);
        assert!(w
            .revalidate(&Rule::ranked_pairs(), Criterion::Participation)
            .unwrap());
    }

    #[test]
    fn two_way_plurality_topping_the_winner_holds() {
        let p =
            WeightedProfile::from_pairs(&["A", "B"], &[("3/5", "A>B"), ("2/5", "B>A")]).unwrap();
        let v =
            audit_participation_update(&Rule::Plurality, &p, &"A>B".parse().unwrap(), &ratio(1, 4))
                .unwrap();
        assert_eq!(v.outcome, Outcome::Holds);
    }

    #[test]
    fn participation_outcome_cases() {
        let o = |s: &str| AggregateOrdering {
            rule: "x".into(),
            ranking: s.parse::<PreferenceSet>().unwrap().tiers().to_vec(),
            scores: BTreeMap::new(),
            trace: crate::aggregation::Trace::Plurality,
        };
        let added: PreferenceSet = "A>B>C".parse().unwrap();
        assert_eq!(
            participation_outcome(&o("A>B>C"), &o("A>C>B"), &added),
            Outcome::Holds
        );
        assert_eq!(
            participation_outcome(&o("A>B>C"), &o("B>A>C"), &added),
            Outcome::Violated
        );
        assert_eq!(
            participation_outcome(&o("B>A>C"), &o("A>B>C"), &added),
            Outcome::NotApplicable
        );
        assert_eq!(
            participation_outcome(&o("A>B>C"), &o("A~B>C"), &added),
            Outcome::Violated
        );
    }

    #[test]
    fn iia_unanimous_and_two_alternative_cases_hold() {
        let p =
            WeightedProfile::from_pairs(&["A", "B", "C"], &[("1/2", "A>B>C"), ("1/2", "A>B>C")])
                .unwrap();
        for rule in [
            Rule::Borda,
            Rule::ranked_pairs(),
            Rule::elo(),
            Rule::Plurality,
        ] {
            assert_eq!(
                audit_iia(&rule, &p, &alt("C")).unwrap().outcome,
                Outcome::Holds
            );
            assert_eq!(
                audit_iia(&rule, &p, &alt("A")).unwrap().outcome,
                Outcome::NotApplicable
            );
        }
        let p = WeightedProfile::from_pairs(&["A", "B"], &[("1", "A>B")]).unwrap();
        assert_eq!(
            audit_iia(&Rule::Borda, &p, &alt("B")).unwrap().outcome,
            Outcome::Holds
        );
        assert!(audit_iia(&Rule::Borda, &p, &alt("Z")).is_err());
    }

    #[test]
    fn borda_iia_counterexample_by_hand() {
        // Removing C lets B catch up with A.
        let p =
            WeightedProfile::from_pairs(&["A", "B", "C"], &[("1/2", "A>C>B"), ("1/2", "B>A>C")])
                .unwrap();
        let v = audit_iia(&Rule::Borda, &p, &alt("C")).unwrap();
        assert_eq!(v.outcome, Outcome::Violated);
        assert!(v
            .witness
            .unwrap()
            .revalidate(&Rule::Borda, Criterion::Iia)
            .unwrap());
    }

    #[test]
    fn condorcet_on_70_20_10() {
        let p = WeightedProfile::from_pairs(
            &["A", "B", "C"],
            &[
                ("70/100", "A>B>C"),
                ("20/100", "B>C>A"),
                ("10/100", "C>A>B"),
            ],
        )
        .unwrap();
        for c in [
            Criterion::CondorcetLoser,
            Criterion::CondorcetWinner,
            Criterion::CondorcetWinnerFirst,
        ] {
            assert_eq!(
                audit_condorcet(&Rule::Borda, c, &p).unwrap().outcome,
                Outcome::Holds
            );
        }
    }

    #[test]
    fn search_is_independent_of_thread_count() {
        let cfg = SearchConfig::new(4, 5, 2000, 11);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = one.install(|| participation_search(&Rule::ranked_pairs(), &cfg).unwrap());
        let b = participation_search(&Rule::ranked_pairs(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_bounds_are_checked() {
        assert!(SearchConfig::new(6, 3, 1, 0).check().is_err());
        assert!(SearchConfig::new(3, 7, 1, 0).check().is_err());
        assert!(dictatorship_probe(&Rule::Borda, &SearchConfig::new(3, 2, 1, 0)).is_err());
        assert!("nosuch".parse::<Criterion>().is_err());
    }
}
