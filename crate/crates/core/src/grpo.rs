//! Group-relative policy optimization against the verifier.
//!
//! Each statement gets a group of `G` sampled proofs from a frozen snapshot
//! of the policy. Terminal rewards are standardized within the group and
//! the standardized value is used as the advantage of every token of that
//! proof. The policy then ascends the clipped surrogate
//!
//! ```text
//! J = mean_groups 1/G sum_i 1/|o_i| sum_t min(r_it * A_i, clip(r_it, 1-eps, 1+eps) * A_i)
//! r_it = exp(logp_new(o_it) - logp_old(o_it))
//! ```
//!
//! with no KL term and no reference model. The `DrGrpo` variant drops the
//! standard-deviation division and replaces `1/|o_i|` by a constant
//! `1/max_rollout_len` (an approximation of that recipe, not a transcription).

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::Statement;
use crate::policy::{decode, derive_seed, ordered_grad_sum, PolicyParams, SamplerConfig, Token};
use crate::verifier::{reward_of, verify_batch, RewardConfig, VerifierOutcome, DEFAULT_STEP_BUDGET};

/// Standard deviations below this are treated as a constant reward group.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Grpo,
    DrGrpo,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grpo" => Ok(Variant::Grpo),
            "dr_grpo" => Ok(Variant::DrGrpo),
            _ => Err(format!("unknown variant `{s}` (expected grpo or dr_grpo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub group_size: usize,
    pub epsilon: f64,
    pub lr: f64,
    pub statements_per_batch: usize,
    pub max_rollout_len: usize,
    pub variant: Variant,
    pub iterations: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub temperature: f64,
    pub inner_epochs: usize,
    pub step_budget: usize,
    pub workers: usize,
    pub reward: RewardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 8,
            epsilon: 0.2,
            lr: 1e-3,
            statements_per_batch: 16,
            max_rollout_len: 8,
            variant: Variant::Grpo,
            iterations: 200,
            eval_every: 50,
            seed: 0,
            temperature: 1.0,
            inner_epochs: 1,
            step_budget: DEFAULT_STEP_BUDGET,
            workers: 1,
            reward: RewardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.group_size < 2 {
            return Err(format!("group size must be at least 2, got {}", self.group_size));
        }
        if self.max_rollout_len == 0 || self.statements_per_batch == 0 || self.inner_epochs == 0 {
            return Err("rollout length, batch size and inner epochs must be positive".into());
        }
        if self.temperature <= 0.0 {
            return Err("temperature must be positive".into());
        }
        if !self.reward.is_valid() {
            return Err("r_success must exceed r_fail".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("output {output} of group {group}: {tokens} tokens but {logprobs} old log-probabilities")]
    LengthMismatch { group: usize, output: usize, tokens: usize, logprobs: usize },
    #[error("no groups to optimize")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub statement: Statement,
    pub outputs: Vec<Vec<Token>>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub outcomes: Vec<VerifierOutcome>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Group-normalized advantages. `Grpo` subtracts the mean and divides by
/// the population standard deviation (all zeros for a constant group);
/// `DrGrpo` only subtracts the mean.
pub fn compute_advantages(rewards: &[f64], variant: Variant) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    match variant {
        Variant::DrGrpo => centered,
        Variant::Grpo => {
            let std = (centered.iter().map(|c| c * c).sum::<f64>() / n).sqrt();
            if std < DEGENERATE_STD {
                vec![0.0; rewards.len()]
            } else {
                centered.iter().map(|c| c / std).collect()
            }
        }
    }
}

pub fn rollout_group(old: &PolicyParams, q: &Statement, cfg: &TrainConfig, seed: u64) -> RolloutGroup {
    let prep = old.prepare(q);
    let (outputs, old_logprobs): (Vec<_>, Vec<_>) = (0..cfg.group_size)
        .map(|i| {
            let sc = SamplerConfig {
                temperature: cfg.temperature,
                max_len: cfg.max_rollout_len,
                seed: derive_seed(seed, i as u64, 0),
            };
            prep.sample(&sc)
        })
        .unzip();
    let items: Vec<_> = outputs.iter().map(|o| (q.clone(), decode(o))).collect();
    let outcomes = verify_batch(&items, 1, cfg.step_budget);
    let rewards: Vec<f64> = outcomes.iter().map(|o| reward_of(o, &cfg.reward)).collect();
    let advantages = compute_advantages(&rewards, cfg.variant);
    RolloutGroup { statement: q.clone(), outputs, old_logprobs, outcomes, rewards, advantages }
}

/// One token's surrogate term and its derivative with respect to the new
/// log-probability. The unclipped branch wins ties.
pub fn clipped_term(new_lp: f64, old_lp: f64, advantage: f64, epsilon: f64) -> (f64, f64, bool) {
    let ratio = (new_lp - old_lp).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped, false)
    } else {
        (clipped, 0.0, true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Fraction of tokens on the clipped (zero-gradient) branch.
    pub clip_fraction: f64,
}

fn token_weight(variant: Variant, len: usize, cfg: &TrainConfig) -> f64 {
    match variant {
        Variant::Grpo => 1.0 / len as f64,
        Variant::DrGrpo => 1.0 / cfg.max_rollout_len as f64,
    }
}

pub fn check_lengths(groups: &[RolloutGroup]) -> Result<(), GrpoError> {
    if groups.is_empty() {
        return Err(GrpoError::Empty);
    }
    for (g, grp) in groups.iter().enumerate() {
        for (i, (o, lp)) in grp.outputs.iter().zip(&grp.old_logprobs).enumerate() {
            if o.len() != lp.len() {
                return Err(GrpoError::LengthMismatch { group: g, output: i, tokens: o.len(), logprobs: lp.len() });
            }
        }
        if grp.outputs.len() != grp.old_logprobs.len() || grp.outputs.len() != grp.advantages.len() {
            return Err(GrpoError::LengthMismatch {
                group: g,
                output: grp.outputs.len(),
                tokens: grp.outputs.len(),
                logprobs: grp.old_logprobs.len(),
            });
        }
    }
    Ok(())
}

/// Clipped surrogate value and its exact gradient.
pub fn grpo_objective(theta: &PolicyParams, groups: &[RolloutGroup], cfg: &TrainConfig) -> Result<Objective, GrpoError> {
    check_lengths(groups)?;
    // (group, output) pairs in a fixed order
    let items: Vec<(usize, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| (0..grp.outputs.len()).map(move |i| (g, i)))
        .collect();
    let n_groups = groups.len() as f64;

    let per_output: Vec<(f64, Vec<f64>, usize)> = items
        .par_iter()
        .map(|&(g, i)| {
            let grp = &groups[g];
            let prep = theta.prepare(&grp.statement);
            let o = &grp.outputs[i];
            let (_, new_lp) = prep.seq_logprob(o);
            let w = token_weight(cfg.variant, o.len(), cfg) / (grp.outputs.len() as f64 * n_groups);
            let mut value = 0.0;
            let mut clipped = 0;
            let coefs = new_lp
                .iter()
                .zip(&grp.old_logprobs[i])
                .map(|(&n, &old)| {
                    let (term, d, c) = clipped_term(n, old, grp.advantages[i], cfg.epsilon);
                    value += w * term;
                    clipped += usize::from(c);
                    w * d
                })
                .collect();
            (value, coefs, clipped)
        })
        .collect();

    let value = per_output.iter().map(|p| p.0).sum();
    let tokens: usize = items.iter().map(|&(g, i)| groups[g].outputs[i].len()).sum();
    let clipped: usize = per_output.iter().map(|p| p.2).sum();
    let gradient = ordered_grad_sum(theta.theta.len(), items.len(), |k, grad| {
        let (g, i) = items[k];
        let coefs = &per_output[k].1;
        if coefs.iter().any(|&c| c != 0.0) {
            theta.prepare(&groups[g].statement).accumulate_grad(&groups[g].outputs[i], coefs, grad);
        }
    });
    Ok(Objective { value, gradient, clip_fraction: clipped as f64 / tokens.max(1) as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub iteration: usize,
    pub mean_reward: f64,
    pub verified_fraction: f64,
    pub mean_len: f64,
    pub clip_fraction: f64,
    pub wall_ms: u64,
}

/// Rolls out one group per statement from a frozen copy of `theta`, then
/// takes `inner_epochs` ascent steps on the surrogate.
pub fn train_step(
    theta: &PolicyParams,
    batch: &[Statement],
    cfg: &TrainConfig,
    iteration: usize,
) -> (PolicyParams, StepMetrics, Vec<RolloutGroup>) {
    let start = Instant::now();
    let old = theta.clone();
    let groups: Vec<RolloutGroup> = batch
        .par_iter()
        .enumerate()
        .map(|(k, q)| rollout_group(&old, q, cfg, derive_seed(cfg.seed, iteration as u64, k as u64 + 1)))
        .collect();

    let mut next = theta.clone();
    let mut clip_fraction = 0.0;
    if !groups.is_empty() {
        for _ in 0..cfg.inner_epochs {
            let obj = grpo_objective(&next, &groups, cfg).expect("rollouts have consistent lengths");
            clip_fraction = obj.clip_fraction;
            next = next.ascend(&obj.gradient, cfg.lr);
        }
    }

    let total: usize = groups.iter().map(|g| g.outputs.len()).sum();
    let verified: usize = groups.iter().flat_map(|g| &g.outcomes).filter(|o| o.is_success()).count();
    let reward_sum: f64 = groups.iter().flat_map(|g| &g.rewards).sum();
    let len_sum: usize = groups.iter().flat_map(|g| &g.outputs).map(|o| o.len()).sum();
    let denom = total.max(1) as f64;
    let metrics = StepMetrics {
        iteration,
        mean_reward: reward_sum / denom,
        verified_fraction: verified as f64 / denom,
        mean_len: len_sum as f64 / denom,
        clip_fraction,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    (next, metrics, groups)
}

/// Held-out pass@N measured during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub iteration: usize,
    pub n: usize,
    pub solved: usize,
    pub total: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: PolicyParams,
    pub curve: Vec<StepMetrics>,
    pub evals: Vec<EvalRow>,
}

/// Runs `cfg.iterations` GRPO steps over `pool`, visiting statements
/// round-robin in a freshly shuffled order each epoch. `evaluate` is called
/// every `eval_every` iterations (and at the end) with the current params.
pub fn train_rl<E>(theta0: &PolicyParams, pool: &[Statement], cfg: &TrainConfig, mut evaluate: E) -> TrainResult
where
    E: FnMut(&PolicyParams, usize) -> Option<EvalRow>,
{
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    assert!(!pool.is_empty() || cfg.iterations == 0, "RL pool must be non-empty");
    let mut theta = theta0.clone();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut evals = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    for it in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.statements_per_batch);
        while batch.len() < cfg.statements_per_batch.min(pool.len()) {
            if cursor == order.len() {
                order = (0..pool.len()).collect();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch, 0xE90C));
                order.shuffle(&mut rng);
                epoch += 1;
                cursor = 0;
            }
            batch.push(pool[order[cursor]].clone());
            cursor += 1;
        }
        let (next, metrics, _) = train_step(&theta, &batch, cfg, it);
        theta = next;
        curve.push(metrics);
        let done = it + 1;
        if cfg.eval_every > 0 && (done % cfg.eval_every == 0 || done == cfg.iterations) {
            if let Some(row) = evaluate(&theta, done) {
                evals.push(row);
            }
        }
    }
    TrainResult { params: theta, curve, evals }
}
