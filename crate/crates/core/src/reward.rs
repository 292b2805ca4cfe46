//! Rewards from comparison data: Bradley-Terry fitting, DPO and KL-penalized
//! objectives over tabular softmax policies, constrained rewards and a
//! rejection-sampling gate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{elo_update_weighted, EloState};
use crate::preference::Alternative;

pub const DEFAULT_PSEUDO_COUNT: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("no comparison records")]
    EmptyData,
    #[error("pseudo-count must be positive, got {0}")]
    InvalidPseudo(f64),
    #[error("record {index}: chosen and rejected are both `{id}`")]
    SelfComparison { index: usize, id: String },
    #[error("record {index}: weight must be finite and non-negative, got {weight}")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("unknown output `{0}`")]
    UnknownOutput(String),
    #[error("output `{output}` has zero probability in context `{context}`")]
    ZeroProbability { context: String, output: String },
    #[error("policy shape mismatch: {0}")]
    Shape(String),
    #[error("{name} must be finite and non-negative, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("sigma must lie in [0, 1], got {0}")]
    InvalidSigma(f64),
    #[error("unknown variant `{0}` (expected sum, sigma-on-c, sigma-on-h or sigma-offset)")]
    UnknownVariant(String),
}

fn non_negative(name: &'static str, value: f64) -> Result<(), RewardError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(RewardError::InvalidParameter { name, value })
    }
}

/// One preference judgement: `chosen_id` was preferred to `rejected_id` in `context_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub context_id: String,
    pub chosen_id: String,
    pub rejected_id: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl ComparisonRecord {
    pub fn new(context: &str, chosen: &str, rejected: &str) -> Self {
        ComparisonRecord {
            context_id: context.into(),
            chosen_id: chosen.into(),
            rejected_id: rejected.into(),
            weight: 1.0,
        }
    }

    pub fn weighted(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

fn check_records(data: &[ComparisonRecord]) -> Result<(), RewardError> {
    if data.is_empty() {
        return Err(RewardError::EmptyData);
    }
    for (index, r) in data.iter().enumerate() {
        if r.chosen_id == r.rejected_id {
            return Err(RewardError::SelfComparison {
                index,
                id: r.chosen_id.clone(),
            });
        }
        if !(r.weight.is_finite() && r.weight >= 0.0) {
            return Err(RewardError::InvalidWeight {
                index,
                weight: r.weight,
            });
        }
    }
    Ok(())
}

/// Fitted Bradley-Terry strengths, normalized to geometric mean one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrengthTable {
    pub strengths: BTreeMap<String, f64>,
    /// Log-likelihood of the data plus pseudo-counts at the returned strengths.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the start and after every iteration.
    pub history: Vec<f64>,
}

impl StrengthTable {
    pub fn strength(&self, item: &str) -> Result<f64, RewardError> {
        self.strengths
            .get(item)
            .copied()
            .ok_or_else(|| RewardError::UnknownItem(item.to_string()))
    }

    /// Log-strength, usable as a scalar reward.
    pub fn reward(&self, item: &str) -> Result<f64, RewardError> {
        Ok(self.strength(item)?.ln())
    }
}

fn bt_log_likelihood(wins: &[Vec<f64>], s: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, row) in wins.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if i != j && w > 0.0 {
                ll += w * (s[i].ln() - (s[i] + s[j]).ln());
            }
        }
    }
    ll
}

fn normalize_geometric(s: &mut [f64]) {
    let mean_log = s.iter().map(|x| x.ln()).sum::<f64>() / s.len() as f64;
    let g = mean_log.exp();
    for x in s.iter_mut() {
        *x /= g;
    }
}

/// Minorization-maximization fit of Bradley-Terry strengths (simultaneous updates).
///
/// Items are keyed by output id; contexts are ignored. `pseudo` phantom wins are
/// added in both directions for every pair of items.
pub fn fit_bradley_terry(
    data: &[ComparisonRecord],
    max_iters: usize,
    tol: f64,
    pseudo: f64,
) -> Result<StrengthTable, RewardError> {
    check_records(data)?;
    if !(pseudo.is_finite() && pseudo > 0.0) {
        return Err(RewardError::InvalidPseudo(pseudo));
    }
    let items: Vec<String> = data
        .iter()
        .flat_map(|r| [r.chosen_id.clone(), r.rejected_id.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = items
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let n = items.len();
    let mut wins = vec![vec![pseudo; n]; n];
    for (i, row) in wins.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for r in data {
        wins[index[r.chosen_id.as_str()]][index[r.rejected_id.as_str()]] += r.weight;
    }
    let total_wins: Vec<f64> = wins.iter().map(|row| row.iter().sum()).collect();

    let mut s = vec![1.0; n];
    let mut history = vec![bt_log_likelihood(&wins, &s)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let denom: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (wins[i][j] + wins[j][i]) / (s[i] + s[j]))
                .sum();
            next[i] = total_wins[i] / denom;
        }
        normalize_geometric(&mut next);
        let change = s
            .iter()
            .zip(&next)
            .map(|(a, b)| ((b - a) / a).abs())
            .fold(0.0, f64::max);
        s = next;
        history.push(bt_log_likelihood(&wins, &s));
        if change < tol {
            converged = true;
            break;
        }
    }
    log::debug!("bradley-terry: {iterations} iterations, converged={converged}");
    Ok(StrengthTable {
        strengths: items.into_iter().zip(s.iter().copied()).collect(),
        log_likelihood: *history.last().expect("history is non-empty"),
        iterations,
        converged,
        history,
    })
}

/// `s_k / (s_k + s_j)`.
pub fn bt_win_probability(table: &StrengthTable, k: &str, j: &str) -> Result<f64, RewardError> {
    let (sk, sj) = (table.strength(k)?, table.strength(j)?);
    Ok(sk / (sk + sj))
}

/// Elo ratings from replaying the records in order, each as a weighted win.
pub fn elo_from_comparisons(
    data: &[ComparisonRecord],
    k_factor: f64,
    initial: f64,
) -> Result<BTreeMap<String, f64>, RewardError> {
    check_records(data)?;
    let items: BTreeSet<Alternative> = data
        .iter()
        .flat_map(|r| {
            [
                Alternative::new(r.chosen_id.as_str()),
                Alternative::new(r.rejected_id.as_str()),
            ]
        })
        .collect();
    let mut state = EloState::new(&items, initial, k_factor);
    for r in data {
        let (w, l) = (
            Alternative::new(r.chosen_id.as_str()),
            Alternative::new(r.rejected_id.as_str()),
        );
        state = elo_update_weighted(&state, &w, &l, 1.0, r.weight)
            .map_err(|e| RewardError::UnknownItem(e.to_string()))?;
    }
    Ok(state
        .ratings
        .into_iter()
        .map(|(a, r)| (a.to_string(), r))
        .collect())
}

/// Tabular softmax policy over a shared output vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    outputs: Vec<String>,
    logits: BTreeMap<String, Vec<f64>>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl CategoricalPolicy {
    pub fn new(
        outputs: Vec<String>,
        logits: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, RewardError> {
        let unique: BTreeSet<&String> = outputs.iter().collect();
        if unique.len() != outputs.len() {
            return Err(RewardError::Shape("duplicate output ids".into()));
        }
        for (ctx, row) in &logits {
            if row.len() != outputs.len() {
                return Err(RewardError::Shape(format!(
                    "context `{ctx}` has {} logits for {} outputs",
                    row.len(),
                    outputs.len()
                )));
            }
            if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(RewardError::Shape(format!(
                    "context `{ctx}` has a NaN or +inf logit"
                )));
            }
        }
        Ok(CategoricalPolicy { outputs, logits })
    }

    /// All-zero logits, i.e. uniform probabilities.
    pub fn uniform(contexts: &[&str], outputs: &[&str]) -> Self {
        CategoricalPolicy {
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            logits: contexts
                .iter()
                .map(|c| (c.to_string(), vec![0.0; outputs.len()]))
                .collect(),
        }
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn contexts(&self) -> impl Iterator<Item = &String> {
        self.logits.keys()
    }

    pub fn logits(&self, context: &str) -> Result<&[f64], RewardError> {
        self.logits
            .get(context)
            .map(Vec::as_slice)
            .ok_or_else(|| RewardError::UnknownContext(context.to_string()))
    }

    pub fn logits_mut(&mut self, context: &str) -> Result<&mut Vec<f64>, RewardError> {
        self.logits
            .get_mut(context)
            .ok_or_else(|| RewardError::UnknownContext(context.to_string()))
    }

    pub fn output_index(&self, output: &str) -> Result<usize, RewardError> {
        self.outputs
            .iter()
            .position(|o| o == output)
            .ok_or_else(|| RewardError::UnknownOutput(output.to_string()))
    }

    pub fn log_probs(&self, context: &str) -> Result<Vec<f64>, RewardError> {
        let row = self.logits(context)?;
        let z = log_sum_exp(row);
        Ok(row.iter().map(|x| x - z).collect())
    }

    pub fn probs(&self, context: &str) -> Result<Vec<f64>, RewardError> {
        Ok(self.log_probs(context)?.into_iter().map(f64::exp).collect())
    }

    /// Finite log-probability of `output`; zero probability is an error.
    pub fn log_prob(&self, context: &str, output: &str) -> Result<f64, RewardError> {
        let lp = self.log_probs(context)?[self.output_index(output)?];
        if lp.is_finite() {
            Ok(lp)
        } else {
            Err(RewardError::ZeroProbability {
                context: context.to_string(),
                output: output.to_string(),
            })
        }
    }

    fn same_shape(&self, other: &CategoricalPolicy) -> Result<(), RewardError> {
        if self.outputs != other.outputs {
            return Err(RewardError::Shape("output vocabularies differ".into()));
        }
        if !self.logits.keys().eq(other.logits.keys()) {
            return Err(RewardError::Shape("context sets differ".into()));
        }
        Ok(())
    }
}

/// Per-record `beta * (log-ratio of chosen - log-ratio of rejected)`.
fn dpo_logit(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    r: &ComparisonRecord,
    beta: f64,
) -> Result<f64, RewardError> {
    let ratio = |y: &str| -> Result<f64, RewardError> {
        Ok(policy.log_prob(&r.context_id, y)? - reference.log_prob(&r.context_id, y)?)
    };
    let d = ratio(&r.chosen_id)? - ratio(&r.rejected_id)?;
    Ok(if beta == 0.0 { 0.0 } else { beta * d })
}

/// `-log sigmoid(z)`, stable for large |z|.
fn neg_log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn batch_weight(batch: &[ComparisonRecord]) -> Result<f64, RewardError> {
    check_records(batch)?;
    let total: f64 = batch.iter().map(|r| r.weight).sum();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(RewardError::EmptyData)
    }
}

/// Weighted mean of `-log sigmoid(beta * (chosen log-ratio - rejected log-ratio))`.
pub fn dpo_loss(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    batch: &[ComparisonRecord],
    beta: f64,
) -> Result<f64, RewardError> {
    non_negative("beta", beta)?;
    let total = batch_weight(batch)?;
    let mut loss = 0.0;
    for r in batch {
        loss += r.weight * neg_log_sigmoid(dpo_logit(policy, reference, r, beta)?);
    }
    Ok(loss / total)
}

/// Gradient of [`dpo_loss`] with respect to the policy logits, per context.
///
/// The softmax normalizer cancels between chosen and rejected, leaving
/// `(sigmoid(z) - 1) * beta * (e_chosen - e_rejected)` per record.
pub fn dpo_gradient(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    batch: &[ComparisonRecord],
    beta: f64,
) -> Result<BTreeMap<String, Vec<f64>>, RewardError> {
    non_negative("beta", beta)?;
    let total = batch_weight(batch)?;
    let mut grad: BTreeMap<String, Vec<f64>> = policy
        .logits
        .keys()
        .map(|c| (c.clone(), vec![0.0; policy.outputs.len()]))
        .collect();
    for r in batch {
        let z = dpo_logit(policy, reference, r, beta)?;
        let coef = r.weight * (sigmoid(z) - 1.0) * beta / total;
        let (c, j) = (
            policy.output_index(&r.chosen_id)?,
            policy.output_index(&r.rejected_id)?,
        );
        let row = grad
            .get_mut(&r.context_id)
            .expect("context checked by log_prob");
        row[c] += coef;
        row[j] -= coef;
    }
    Ok(grad)
}

/// One gradient-descent step on [`dpo_loss`].
pub fn dpo_step(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    batch: &[ComparisonRecord],
    beta: f64,
    step_size: f64,
) -> Result<CategoricalPolicy, RewardError> {
    non_negative("step_size", step_size)?;
    let grad = dpo_gradient(policy, reference, batch, beta)?;
    let mut next = policy.clone();
    for (ctx, g) in grad {
        for (x, gk) in next
            .logits
            .get_mut(&ctx)
            .expect("same contexts")
            .iter_mut()
            .zip(g)
        {
            *x -= step_size * gk;
        }
    }
    Ok(next)
}

/// `log pi(chosen|x) - log pi(rejected|x)`.
pub fn preference_margin(
    policy: &CategoricalPolicy,
    record: &ComparisonRecord,
) -> Result<f64, RewardError> {
    Ok(policy.log_prob(&record.context_id, &record.chosen_id)?
        - policy.log_prob(&record.context_id, &record.rejected_id)?)
}

pub type RewardTable = BTreeMap<(String, String), f64>;

fn reward_rows(
    policy: &CategoricalPolicy,
    rewards: &RewardTable,
) -> Result<BTreeMap<String, Vec<f64>>, RewardError> {
    let mut rows: BTreeMap<String, Vec<f64>> = policy
        .logits
        .keys()
        .map(|c| (c.clone(), vec![0.0; policy.outputs.len()]))
        .collect();
    for ((ctx, out), r) in rewards {
        let k = policy.output_index(out)?;
        rows.get_mut(ctx)
            .ok_or_else(|| RewardError::UnknownContext(ctx.clone()))?[k] = *r;
    }
    Ok(rows)
}

/// `KL(policy || reference)` summed over contexts.
pub fn kl_divergence(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
) -> Result<f64, RewardError> {
    policy.same_shape(reference)?;
    let mut kl = 0.0;
    for ctx in policy.logits.keys() {
        let (lp, lq) = (policy.log_probs(ctx)?, reference.log_probs(ctx)?);
        for (a, b) in lp.iter().zip(&lq) {
            let p = a.exp();
            if p > 0.0 {
                kl += p * (a - b);
            }
        }
    }
    Ok(kl.max(0.0))
}

/// Expected reward under `policy` minus `beta * KL(policy || reference)`, summed
/// over contexts. Missing reward entries count as zero.
pub fn kl_penalized_objective(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    rewards: &RewardTable,
    beta: f64,
) -> Result<f64, RewardError> {
    non_negative("beta", beta)?;
    policy.same_shape(reference)?;
    let rows = reward_rows(policy, rewards)?;
    let mut expected = 0.0;
    for (ctx, r) in &rows {
        expected += policy
            .probs(ctx)?
            .iter()
            .zip(r)
            .map(|(p, r)| p * r)
            .sum::<f64>();
    }
    Ok(expected - beta * kl_divergence(policy, reference)?)
}

/// Gradient of [`kl_penalized_objective`] with respect to the policy logits:
/// `p_k (g_k - E_p[g])` with `g = r - beta (log p - log q)`.
pub fn kl_objective_gradient(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    rewards: &RewardTable,
    beta: f64,
) -> Result<BTreeMap<String, Vec<f64>>, RewardError> {
    non_negative("beta", beta)?;
    policy.same_shape(reference)?;
    let rows = reward_rows(policy, rewards)?;
    let mut grad = BTreeMap::new();
    for (ctx, r) in rows {
        let (lp, lq) = (policy.log_probs(&ctx)?, reference.log_probs(&ctx)?);
        let p: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
        let g: Vec<f64> = (0..p.len())
            .map(|k| r[k] - beta * (lp[k] - lq[k]))
            .collect();
        let mean: f64 = p.iter().zip(&g).map(|(p, g)| p * g).sum();
        grad.insert(ctx, p.iter().zip(&g).map(|(p, g)| p * (g - mean)).collect());
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AscentRun {
    pub policy: CategoricalPolicy,
    /// Objective at the start and after every accepted step.
    pub objective: Vec<f64>,
    pub rejected_steps: usize,
}

/// Gradient ascent on [`kl_penalized_objective`]. A step that would lower the
/// objective is retried at half the size, up to 30 times, then dropped.
pub fn kl_ascent(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    rewards: &RewardTable,
    beta: f64,
    step_size: f64,
    steps: usize,
) -> Result<AscentRun, RewardError> {
    non_negative("step_size", step_size)?;
    let mut current = policy.clone();
    let mut value = kl_penalized_objective(&current, reference, rewards, beta)?;
    let mut objective = vec![value];
    let mut rejected_steps = 0;
    for _ in 0..steps {
        let grad = kl_objective_gradient(&current, reference, rewards, beta)?;
        let mut eta = step_size;
        let mut accepted = false;
        for _ in 0..30 {
            let mut candidate = current.clone();
            for (ctx, g) in &grad {
                for (x, gk) in candidate
                    .logits
                    .get_mut(ctx)
                    .expect("same contexts")
                    .iter_mut()
                    .zip(g)
                {
                    *x += eta * gk;
                }
            }
            let v = kl_penalized_objective(&candidate, reference, rewards, beta)?;
            if v >= value {
                current = candidate;
                value = v;
                accepted = true;
                break;
            }
            eta /= 2.0;
        }
        if accepted {
            objective.push(value);
        } else {
            rejected_steps += 1;
        }
    }
    Ok(AscentRun {
        policy: current,
        objective,
        rejected_steps,
    })
}

/// Helpful reward `r_h`, guardrail reward `r_c` and scaling factor `sigma` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardPair {
    pub r_h: f64,
    pub r_c: f64,
    pub sigma: f64,
}

impl RewardPair {
    pub fn new(r_h: f64, r_c: f64, sigma: f64) -> Result<Self, RewardError> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(RewardError::InvalidSigma(sigma));
        }
        Ok(RewardPair { r_h, r_c, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintVariant {
    Sum,
    SigmaOnC,
    SigmaOnH,
    SigmaOffset,
}

impl ConstraintVariant {
    pub const ALL: [ConstraintVariant; 4] = [
        ConstraintVariant::Sum,
        ConstraintVariant::SigmaOnC,
        ConstraintVariant::SigmaOnH,
        ConstraintVariant::SigmaOffset,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ConstraintVariant::Sum => "sum",
            ConstraintVariant::SigmaOnC => "sigma-on-c",
            ConstraintVariant::SigmaOnH => "sigma-on-h",
            ConstraintVariant::SigmaOffset => "sigma-offset",
        }
    }
}

impl fmt::Display for ConstraintVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ConstraintVariant {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConstraintVariant::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| RewardError::UnknownVariant(s.to_string()))
    }
}

/// Loss to minimize for each variant. `sigma-offset` adds `sigma` to the negated sum.
pub fn constrained_loss(pair: &RewardPair, variant: ConstraintVariant) -> f64 {
    let RewardPair { r_h, r_c, sigma } = *pair;
    match variant {
        ConstraintVariant::Sum => -(r_h + r_c),
        ConstraintVariant::SigmaOnC => -(r_h + sigma * r_c),
        ConstraintVariant::SigmaOnH => -(r_c + sigma * r_h),
        ConstraintVariant::SigmaOffset => -(r_h + r_c) + sigma,
    }
}

/// The learning signal of each variant, the negation of [`constrained_loss`].
pub fn constrained_reward(pair: &RewardPair, variant: ConstraintVariant) -> f64 {
    -constrained_loss(pair, variant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub helpful: f64,
    pub harm: f64,
}

impl Candidate {
    pub fn new(id: &str, helpful: f64, harm: f64) -> Self {
        Candidate {
            id: id.into(),
            helpful,
            harm,
        }
    }
}

pub const SAFETY_PROTOCOL: &str = "safety-protocol";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateReport {
    pub selected: String,
    pub safety_protocol: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<&'static str>,
    pub harm_threshold: f64,
    /// Ids of blocked candidates, sorted.
    pub blocked: Vec<String>,
    /// Ids of surviving candidates, sorted.
    pub survivors: Vec<String>,
}

/// Drops candidates whose harm exceeds the threshold (or is NaN) and returns the
/// most helpful survivor, smallest id first on ties. With no survivors the
/// fallback is returned and the report is flagged.
pub fn rejection_gate(candidates: &[Candidate], harm_threshold: f64, fallback: &str) -> GateReport {
    let (survivors, blocked): (Vec<&Candidate>, Vec<&Candidate>) =
        candidates.iter().partition(|c| c.harm <= harm_threshold);
    let best = survivors.iter().copied().reduce(|best, c| {
        match c
            .helpful
            .total_cmp(&best.helpful)
            .then_with(|| best.id.cmp(&c.id))
        {
            std::cmp::Ordering::Greater => c,
            _ => best,
        }
    });
    let sorted = |v: Vec<&Candidate>| {
        let mut ids: Vec<String> = v.into_iter().map(|c| c.id.clone()).collect();
        ids.sort();
        ids
    };
    let (selected, safety_protocol) = match best {
        Some(c) => (c.id.clone(), false),
        None => (fallback.to_string(), true),
    };
    GateReport {
        selected,
        safety_protocol,
        flag: safety_protocol.then_some(SAFETY_PROTOCOL),
        harm_threshold,
        blocked: sorted(blocked),
        survivors: sorted(survivors),
    }
}
