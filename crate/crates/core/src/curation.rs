//! Data pipeline: synthetic statements, pass@N measurement, RL pool
//! selection, expert iteration, and first-error prefix repair.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{apply_tactic, render_script, Expr, ProofScript, Statement, Tactic, Var};
use crate::policy::{decode, derive_seed, encode_script, PolicyParams, SamplerConfig, Token, Vocab};
use crate::verifier::{check_proof, Status, VerifierOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurationError {
    #[error("statement generation exhausted: 100 consecutive scramble attempts failed")]
    GenerationExhausted,
    #[error("statement {0} not found in corpus")]
    MissingStatement(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatementRecord {
    pub id: usize,
    pub statement: Statement,
    pub source: String,
    pub scramble_steps: usize,
    pub pass_count: Option<usize>,
    pub pass_n: Option<usize>,
    pub min_proof_len: Option<usize>,
}

impl StatementRecord {
    pub fn new(id: usize, statement: Statement, source: &str, scramble_steps: usize) -> Self {
        StatementRecord {
            id,
            statement,
            source: source.to_string(),
            scramble_steps,
            pass_count: None,
            pass_n: None,
            min_proof_len: None,
        }
    }
}

/// A generated statement plus the inverse-scramble proof that witnesses it.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub record: StatementRecord,
    pub witness: ProofScript,
}

fn random_leaf(rng: &mut ChaCha8Rng) -> Expr {
    if rng.random_bool(0.6) {
        Expr::Var(Var::ALL[rng.random_range(0..3)])
    } else {
        Expr::Const(rng.random_range(0..=9))
    }
}

fn random_expr(rng: &mut ChaCha8Rng, depth: usize, root: bool) -> Expr {
    if depth <= 1 || (!root && rng.random_bool(0.35)) {
        return random_leaf(rng);
    }
    let l = random_expr(rng, depth - 1, false);
    let r = random_expr(rng, depth - 1, false);
    if rng.random_bool(0.5) {
        Expr::add(l, r)
    } else {
        Expr::mul(l, r)
    }
}

/// Applies `steps` random reversible tactics (token-representable paths,
/// no repeated states). `None` if some step has no candidate.
fn scramble(rng: &mut ChaCha8Rng, base: &Expr, steps: usize) -> Option<(Expr, Vec<Tactic>)> {
    let vocab = Vocab::get();
    let mut cur = base.clone();
    let mut seen = HashSet::from([cur.clone()]);
    let mut applied = Vec::with_capacity(steps);
    for _ in 0..steps {
        let candidates: Vec<(&Tactic, Expr)> = vocab
            .tactics()
            .iter()
            .filter(|t| t.rule.reversible())
            .filter_map(|t| apply_tactic(&cur, t).ok().map(|e| (t, e)))
            .filter(|(_, e)| !seen.contains(e))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let (t, next) = candidates[rng.random_range(0..candidates.len())].clone();
        seen.insert(next.clone());
        applied.push(t.clone());
        cur = next;
    }
    Some((cur, applied))
}

/// Generates `n` provable statements `e' = e`, where `e'` is `e` scrambled
/// by `k` reversible tactics, `k` drawn uniformly from `1..=scramble_steps`
/// (exactly 0 when `scramble_steps` is 0).
pub fn gen_statements_with_witness(
    seed: u64,
    n: usize,
    max_depth: usize,
    scramble_steps: usize,
) -> Result<Vec<Generated>, CurationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = format!("gen-d{max_depth}-s{scramble_steps}");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = if scramble_steps == 0 { 0 } else { rng.random_range(1..=scramble_steps) };
        let mut failures = 0;
        let (base, scrambled, tactics) = loop {
            let base = random_expr(&mut rng, max_depth.max(1), true);
            if let Some((e, ts)) = scramble(&mut rng, &base, k) {
                break (base, e, ts);
            }
            failures += 1;
            if failures >= 100 {
                return Err(CurationError::GenerationExhausted);
            }
        };
        let witness = ProofScript::new(tactics.iter().rev().map(Tactic::inverse).collect());
        let record = StatementRecord::new(out.len(), Statement::new(scrambled, base), &source, k);
        out.push(Generated { record, witness });
    }
    Ok(out)
}

pub fn gen_statements(
    seed: u64,
    n: usize,
    max_depth: usize,
    scramble_steps: usize,
) -> Result<Vec<StatementRecord>, CurationError> {
    Ok(gen_statements_with_witness(seed, n, max_depth, scramble_steps)?
        .into_iter()
        .map(|g| g.record)
        .collect())
}

/// Seed for the sample stream of one statement.
pub fn statement_seed(seed: u64, id: usize) -> u64 {
    derive_seed(seed, id as u64, 0x9A55)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub tokens: Vec<Token>,
    pub script: ProofScript,
    pub outcome: VerifierOutcome,
}

/// Draws `n` samples; sample `j` uses its own derived seed, so the first
/// `m` samples are the same for every `n >= m`.
pub fn sample_outcomes(
    theta: &PolicyParams,
    s: &Statement,
    n: usize,
    sampler: &SamplerConfig,
    step_budget: usize,
) -> Vec<Sampled> {
    let prep = theta.prepare(s);
    (0..n)
        .map(|j| {
            let cfg = sampler.with_seed(derive_seed(sampler.seed, j as u64, 0));
            let (tokens, _) = prep.sample(&cfg);
            let script = decode(&tokens);
            let outcome = check_proof(s, &script, step_budget);
            Sampled { tokens, script, outcome }
        })
        .collect()
}

pub fn estimate_pass(
    theta: &PolicyParams,
    s: &Statement,
    n: usize,
    sampler: &SamplerConfig,
    step_budget: usize,
) -> usize {
    sample_outcomes(theta, s, n, sampler, step_budget).iter().filter(|x| x.outcome.is_success()).count()
}

/// Fills `pass_count` for every record (out of `n` samples).
pub fn measure_pass(
    records: &[StatementRecord],
    theta: &PolicyParams,
    n: usize,
    sampler: &SamplerConfig,
    step_budget: usize,
) -> Vec<StatementRecord> {
    records
        .par_iter()
        .map(|r| {
            let cfg = sampler.with_seed(statement_seed(sampler.seed, r.id));
            let count = estimate_pass(theta, &r.statement, n, &cfg, step_budget);
            StatementRecord { pass_count: Some(count), pass_n: Some(n), ..r.clone() }
        })
        .collect()
}

/// Records whose pass count lies in `[lo, hi]` (inclusive).
pub fn window_filter(records: &[StatementRecord], lo: usize, hi: usize) -> Vec<StatementRecord> {
    records
        .iter()
        .filter(|r| r.pass_count.is_some_and(|c| lo <= c && c <= hi))
        .cloned()
        .collect()
}

/// Measures pass@`n` and keeps statements with `lo <= pass_count <= hi`.
/// Also returns every measured record for histogramming.
pub fn select_rl_pool(
    records: &[StatementRecord],
    theta: &PolicyParams,
    n: usize,
    lo: usize,
    hi: usize,
    sampler: &SamplerConfig,
    step_budget: usize,
) -> (Vec<StatementRecord>, Vec<StatementRecord>) {
    assert!(lo <= hi && hi <= n, "window must satisfy lo <= hi <= n");
    let measured = measure_pass(records, theta, n, sampler, step_budget);
    (window_filter(&measured, lo, hi), measured)
}

/// A harvested proof line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProofRecord {
    pub statement_id: usize,
    pub script: String,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertIterConfig {
    pub rounds: usize,
    pub samples_per_stmt: usize,
    pub sft_lr: f64,
    pub sft_epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub max_len: usize,
    pub step_budget: usize,
    pub seed: u64,
}

impl Default for ExpertIterConfig {
    fn default() -> Self {
        ExpertIterConfig {
            rounds: 2,
            samples_per_stmt: 16,
            sft_lr: 0.1,
            sft_epochs: 2,
            batch_size: 8,
            temperature: 1.0,
            max_len: 8,
            step_budget: crate::verifier::DEFAULT_STEP_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub new_proofs: usize,
    pub corpus_size: usize,
    /// Fraction of statements with at least one verified proof in the corpus.
    pub coverage: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// Mean negative log-likelihood of the pairs.
pub fn sft_loss(theta: &PolicyParams, pairs: &[(Statement, Vec<Token>)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs.par_iter().map(|(s, o)| -theta.seq_logprob(s, o).0).collect::<Vec<_>>().iter().sum();
    total / pairs.len() as f64
}

/// Minibatch SFT over `pairs` for `epochs` passes in seeded shuffled order.
pub fn supervised_finetune(
    theta: &PolicyParams,
    pairs: &[(Statement, Vec<Token>)],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> (PolicyParams, Vec<EpochLoss>) {
    let mut theta = theta.clone();
    let mut losses = Vec::with_capacity(epochs);
    if pairs.is_empty() {
        return (theta, losses);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64, 0x5F7));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<_> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            theta = theta.sft_step(&batch, lr);
        }
        losses.push(EpochLoss { epoch, loss: sft_loss(&theta, pairs) });
    }
    (theta, losses)
}

fn proofs_to_pairs(
    corpus: &[ProofRecord],
    by_id: &HashMap<usize, &StatementRecord>,
) -> Result<Vec<(Statement, Vec<Token>)>, CurationError> {
    let mut out = Vec::with_capacity(corpus.len());
    for p in corpus.iter().filter(|p| p.verified) {
        let rec = by_id.get(&p.statement_id).ok_or(CurationError::MissingStatement(p.statement_id))?;
        let script = crate::lang::parse_script(&p.script).expect("corpus scripts are rendered by this crate");
        // proofs with paths deeper than the token vocabulary cannot be imitated
        if let Some(tokens) = encode_script(&script) {
            out.push((rec.statement.clone(), tokens));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertIterResult {
    pub params: PolicyParams,
    pub corpus: Vec<ProofRecord>,
    pub rounds: Vec<RoundStats>,
    pub losses: Vec<EpochLoss>,
}

/// Expert iteration. `initial` proofs (for example harvested from another
/// prover) seed the corpus before the first round. Each round samples
/// `samples_per_stmt` proofs per statement from the current policy, adds
/// the verified ones not already present (exact script text, per
/// statement), and fine-tunes on the whole accumulated corpus.
pub fn expert_iteration(
    theta: &PolicyParams,
    records: &[StatementRecord],
    initial: &[ProofRecord],
    cfg: &ExpertIterConfig,
) -> Result<ExpertIterResult, CurationError> {
    let by_id: HashMap<usize, &StatementRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut corpus: Vec<ProofRecord> = Vec::new();
    let mut seen: HashSet<(usize, String)> = HashSet::new();
    for p in initial.iter().filter(|p| p.verified) {
        if seen.insert((p.statement_id, p.script.clone())) {
            corpus.push(p.clone());
        }
    }
    let mut theta = theta.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut losses = Vec::new();
    let sampler = SamplerConfig { temperature: cfg.temperature, max_len: cfg.max_len, seed: 0 };
    for round in 0..cfg.rounds {
        let round_seed = derive_seed(cfg.seed, round as u64, 0xE17);
        let harvested: Vec<Vec<ProofRecord>> = records
            .par_iter()
            .map(|r| {
                let sc = sampler.with_seed(statement_seed(round_seed, r.id));
                sample_outcomes(&theta, &r.statement, cfg.samples_per_stmt, &sc, cfg.step_budget)
                    .into_iter()
                    .filter(|x| x.outcome.is_success())
                    .map(|x| ProofRecord { statement_id: r.id, script: render_script(&x.script), verified: true })
                    .collect()
            })
            .collect();
        let mut new_proofs = 0;
        for p in harvested.into_iter().flatten() {
            if seen.insert((p.statement_id, p.script.clone())) {
                corpus.push(p);
                new_proofs += 1;
            }
        }
        let pairs = proofs_to_pairs(&corpus, &by_id)?;
        let (next, epoch_losses) = supervised_finetune(
            &theta,
            &pairs,
            cfg.sft_epochs,
            cfg.batch_size,
            cfg.sft_lr,
            derive_seed(round_seed, 1, 0),
        );
        theta = next;
        let covered: HashSet<usize> = corpus.iter().map(|p| p.statement_id).collect();
        let loss = epoch_losses.last().map_or(0.0, |l| l.loss);
        let offset = losses.len();
        losses.extend(epoch_losses.into_iter().map(|l| EpochLoss { epoch: offset + l.epoch, ..l }));
        rounds.push(RoundStats {
            round,
            new_proofs,
            corpus_size: corpus.len(),
            coverage: covered.len() as f64 / records.len().max(1) as f64,
            loss,
        });
    }
    Ok(ExpertIterResult { params: theta, corpus, rounds, losses })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairPair {
    pub statement_id: usize,
    pub statement: Statement,
    pub failing: ProofScript,
    pub outcome: VerifierOutcome,
    pub repaired: ProofScript,
}

impl RepairPair {
    pub fn first_failure(&self) -> usize {
        self.outcome.first_failure.expect("repair pairs come from tactic errors")
    }

    /// Checks the prefix-sharing and verification contract.
    pub fn is_valid(&self, step_budget: usize) -> bool {
        let Some(k) = self.outcome.first_failure else {
            return false;
        };
        !self.outcome.is_success()
            && self.repaired.tactics.len() >= k
            && self.failing.tactics.len() > k
            && self.repaired.tactics[..k] == self.failing.tactics[..k]
            && check_proof(&self.statement, &self.repaired, step_budget).is_success()
    }
}

/// Keeps the tactics before the first failure, then samples up to
/// `attempts` completions conditioned on that prefix and returns the first
/// one that verifies.
#[allow(clippy::too_many_arguments)]
pub fn prefix_repair(
    theta: &PolicyParams,
    statement_id: usize,
    s: &Statement,
    failed: &ProofScript,
    outcome: &VerifierOutcome,
    attempts: usize,
    sampler: &SamplerConfig,
    step_budget: usize,
) -> Option<RepairPair> {
    let k = outcome.first_failure?;
    let prefix = ProofScript::new(failed.tactics[..k].to_vec());
    let mut prefix_tokens = encode_script(&prefix)?;
    prefix_tokens.pop(); // EOS
    let prep = theta.prepare(s);
    (0..attempts).find_map(|j| {
        let cfg = sampler.with_seed(derive_seed(sampler.seed, j as u64, 0x7E9));
        let (suffix, _) = prep.sample_after(&prefix_tokens, &cfg);
        let mut tactics = prefix.tactics.clone();
        tactics.extend(decode(&suffix).tactics);
        let repaired = ProofScript::new(tactics);
        check_proof(s, &repaired, step_budget).is_success().then(|| RepairPair {
            statement_id,
            statement: s.clone(),
            failing: failed.clone(),
            outcome: outcome.clone(),
            repaired,
        })
    })
}

/// Failing samples whose status names a failing tactic.
pub fn repairable(samples: &[Sampled]) -> impl Iterator<Item = &Sampled> {
    samples.iter().filter(|x| x.outcome.status.is_tactic_error())
}

/// Counts of each status, in [`Status::ALL`] order.
pub fn status_histogram<'a>(outcomes: impl IntoIterator<Item = &'a VerifierOutcome>) -> Vec<(Status, usize)> {
    let mut counts: HashMap<Status, usize> = HashMap::new();
    for o in outcomes {
        *counts.entry(o.status).or_default() += 1;
    }
    Status::ALL.iter().map(|s| (*s, counts.get(s).copied().unwrap_or(0))).collect()
}
