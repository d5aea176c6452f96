//! The pipeline stages. Each `cmd_*` fills in default input paths, writes
//! its artifacts and manifest, and returns a short human-readable summary.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use rwprover::corpus::{write_proofs, write_repairs, write_statements};
use rwprover::curation::{
    expert_iteration, gen_statements, measure_pass, prefix_repair, repairable, sample_outcomes, select_rl_pool,
    statement_seed, ProofRecord, RepairPair, Sampled, StatementRecord,
};
use rwprover::grpo::{train_rl, EvalRow};
use rwprover::lang::{parse_script, render_script};
use rwprover::policy::{derive_seed, PolicyParams, SamplerConfig};
use rwprover::prompts::render_reflection_prompt;
use rwprover::verifier::{check_proof, oracle_prove, Status};

use crate::config::RunConfig;
use crate::io::*;
use crate::HarnessError;

pub const STATEMENTS: &str = "statements.jsonl";
pub const SFT_CKPT: &str = "sft.ckpt";
pub const RL_CKPT: &str = "rl.ckpt";

// Stream tags keep the sample streams of different stages independent.
const POOL_STREAM: u64 = 0x9001;
const HELDOUT_STREAM: u64 = 0xE7A1;
const EVAL_STREAM: u64 = 0xE7A2;
const REPAIR_STREAM: u64 = 0x8E9A;

/// Splits a corpus into (train, held-out); the held-out part is the last
/// `round(n * fraction)` records.
pub fn split_records(records: &[StatementRecord], fraction: f64) -> (Vec<StatementRecord>, Vec<StatementRecord>) {
    let held = ((records.len() as f64) * fraction).round() as usize;
    let (train, heldout) = records.split_at(records.len() - held.min(records.len()));
    (train.to_vec(), heldout.to_vec())
}

fn select_split(records: &[StatementRecord], cfg: &RunConfig) -> Vec<StatementRecord> {
    let (train, heldout) = split_records(records, cfg.heldout_fraction);
    match cfg.split.as_str() {
        "train" => train,
        "all" => records.to_vec(),
        _ => heldout,
    }
}

fn with_default(path: &str, cfg: &RunConfig, name: &str) -> String {
    if path.is_empty() {
        out_dir(cfg).join(name).display().to_string()
    } else {
        path.to_string()
    }
}

/// Fills the stage's default input paths so the manifest is self-contained.
pub fn resolve_inputs(cfg: &RunConfig, stage: &str) -> RunConfig {
    let mut cfg = cfg.clone();
    if stage != "gen" {
        cfg.corpus = with_default(&cfg.corpus, &cfg, STATEMENTS);
    }
    match stage {
        "rl" => cfg.checkpoint = with_default(&cfg.checkpoint, &cfg, SFT_CKPT),
        "eval" | "repair" => cfg.checkpoint = with_default(&cfg.checkpoint, &cfg, RL_CKPT),
        _ => {}
    }
    cfg
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<String, HarnessError> {
    let cfg = resolve_inputs(cfg, "gen");
    let records = gen_statements(cfg.seed, cfg.gen_n, cfg.gen_depth, cfg.gen_scramble)
        .map_err(|e| HarnessError::Data(e.to_string()))?;
    let path = out_dir(&cfg).join(STATEMENTS);
    write_file(&path, write_statements(&records))?;
    write_manifest(&cfg, "gen")?;
    let (_, heldout) = split_records(&records, cfg.heldout_fraction);
    Ok(format!(
        "wrote {} statements to {} (last {} held out)",
        records.len(),
        path.display(),
        heldout.len()
    ))
}

/// Oracle proofs for the first `fraction` of `records`: the stand-in for
/// proofs harvested from other provers.
pub fn teacher_proofs(records: &[StatementRecord], fraction: f64) -> Vec<ProofRecord> {
    let take = ((records.len() as f64) * fraction).round() as usize;
    records[..take.min(records.len())]
        .par_iter()
        .filter_map(|r| {
            let proof = oracle_prove(&r.statement, r.scramble_steps).ok().flatten()?;
            Some(ProofRecord { statement_id: r.id, script: render_script(&proof), verified: true })
        })
        .collect()
}

pub fn cmd_sft(cfg: &RunConfig) -> Result<String, HarnessError> {
    let cfg = resolve_inputs(cfg, "sft");
    let records = load_statements(cfg.corpus.as_ref())?;
    let (train, _) = split_records(&records, cfg.heldout_fraction);
    let initial = if cfg.proofs.is_empty() {
        teacher_proofs(&train, cfg.teacher_fraction)
    } else {
        load_proofs(cfg.proofs.as_ref())?
    };
    let init = PolicyParams::init(cfg.arch(), cfg.seed);
    let ei = expert_iteration(&init, &train, &initial, &cfg.expert_config())
        .map_err(|e| HarnessError::Data(e.to_string()))?;

    let out = out_dir(&cfg);
    save_checkpoint(&out.join(SFT_CKPT), &ei.params)?;
    write_file(&out.join("proofs.jsonl"), write_proofs(&ei.corpus))?;
    let epochs = cfg.sft_epochs.max(1);
    let loss_rows: Vec<_> = ei
        .losses
        .iter()
        .map(|l| vec![(l.epoch / epochs).to_string(), l.epoch.to_string(), f(l.loss)])
        .collect();
    write_table(&out.join("sft_loss.csv"), &["round", "epoch", "loss"], &loss_rows)?;
    let round_rows: Vec<_> = ei
        .rounds
        .iter()
        .map(|r| {
            vec![r.round.to_string(), r.new_proofs.to_string(), r.corpus_size.to_string(), f(r.coverage), f(r.loss)]
        })
        .collect();
    write_table(&out.join("sft_rounds.csv"), &["round", "new_proofs", "corpus_size", "coverage", "loss"], &round_rows)?;
    write_manifest(&cfg, "sft")?;
    Ok(format!(
        "sft: {} seed proofs, {} rounds, corpus {} proofs, final loss {}",
        initial.len(),
        ei.rounds.len(),
        ei.corpus.len(),
        ei.losses.last().map_or("n/a".into(), |l| format!("{:.4}", l.loss))
    ))
}

fn pass_histogram(measured: &[StatementRecord], n: usize) -> Vec<usize> {
    let mut hist = vec![0; n + 1];
    for r in measured {
        if let Some(c) = r.pass_count {
            hist[c.min(n)] += 1;
        }
    }
    hist
}

fn heldout_eval(theta: &PolicyParams, heldout: &[StatementRecord], cfg: &RunConfig, iteration: usize) -> EvalRow {
    let sampler = cfg.sampler(derive_seed(cfg.seed, 0, HELDOUT_STREAM));
    let measured = measure_pass(heldout, theta, cfg.heldout_samples, &sampler, cfg.step_budget);
    let solved = measured.iter().filter(|r| r.pass_count.unwrap_or(0) > 0).count();
    EvalRow {
        iteration,
        n: cfg.heldout_samples,
        solved,
        total: heldout.len(),
        pass_rate: solved as f64 / heldout.len().max(1) as f64,
    }
}

pub fn cmd_rl(cfg: &RunConfig) -> Result<String, HarnessError> {
    let cfg = resolve_inputs(cfg, "rl");
    let records = load_statements(cfg.corpus.as_ref())?;
    let (train, heldout) = split_records(&records, cfg.heldout_fraction);
    let theta = load_checkpoint(cfg.checkpoint.as_ref(), &cfg.arch())?;
    let out = out_dir(&cfg);

    let sampler = cfg.sampler(derive_seed(cfg.seed, 0, POOL_STREAM));
    let (pool, measured) =
        select_rl_pool(&train, &theta, cfg.pool_samples, cfg.window_lo, cfg.window_hi, &sampler, cfg.step_budget);
    let hist = pass_histogram(&measured, cfg.pool_samples);
    let hist_rows: Vec<_> = hist.iter().enumerate().map(|(c, n)| vec![c.to_string(), n.to_string()]).collect();
    write_table(&out.join("pool_hist.csv"), &["pass_count", "statements"], &hist_rows)?;
    write_file(&out.join("pool.jsonl"), write_statements(&pool))?;
    if pool.is_empty() && cfg.iterations > 0 {
        let nonzero: Vec<String> =
            hist.iter().enumerate().filter(|(_, n)| **n > 0).map(|(c, n)| format!("{c}:{n}")).collect();
        return Err(HarnessError::Data(format!(
            "RL pool is empty: no training statement has a pass count in [{}, {}] out of {} samples; \
             pass histogram (count:statements) {}",
            cfg.window_lo,
            cfg.window_hi,
            cfg.pool_samples,
            nonzero.join(" ")
        )));
    }

    let mut evals = Vec::new();
    if !heldout.is_empty() && cfg.eval_every > 0 {
        evals.push(heldout_eval(&theta, &heldout, &cfg, 0));
    }
    let statements: Vec<_> = pool.iter().map(|r| r.statement.clone()).collect();
    let result = train_rl(&theta, &statements, &cfg.train_config(), |th, it| {
        (!heldout.is_empty()).then(|| heldout_eval(th, &heldout, &cfg, it))
    });
    evals.extend(result.evals);

    save_checkpoint(&out.join(RL_CKPT), &result.params)?;
    let curve_rows: Vec<_> = result
        .curve
        .iter()
        .map(|m| {
            vec![
                m.iteration.to_string(),
                f(m.mean_reward),
                f(m.verified_fraction),
                f(m.mean_len),
                f(m.clip_fraction),
                m.wall_ms.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("rl_curve.csv"),
        &["iteration", "mean_reward", "verified_fraction", "mean_len", "clip_fraction", "wall_ms"],
        &curve_rows,
    )?;
    let eval_rows: Vec<_> = evals
        .iter()
        .map(|e| vec![e.iteration.to_string(), e.n.to_string(), e.solved.to_string(), e.total.to_string(), f(e.pass_rate)])
        .collect();
    write_table(&out.join("rl_eval.csv"), &["iteration", "n", "solved", "total", "pass_rate"], &eval_rows)?;
    write_manifest(&cfg, "rl")?;

    let q = result.curve.len() / 4;
    let trend = if q > 0 {
        let avg = |m: &[rwprover::grpo::StepMetrics]| m.iter().map(|x| x.mean_reward).sum::<f64>() / m.len() as f64;
        format!(
            ", mean reward first quarter {:.3} -> last quarter {:.3}",
            avg(&result.curve[..q]),
            avg(&result.curve[result.curve.len() - q..])
        )
    } else {
        String::new()
    };
    let held = match (evals.first(), evals.last()) {
        (Some(a), Some(b)) => format!(", held-out pass@{} {:.3} -> {:.3}", a.n, a.pass_rate, b.pass_rate),
        _ => String::new(),
    };
    Ok(format!("rl: pool {} of {} statements, {} iterations{trend}{held}", pool.len(), train.len(), result.curve.len()))
}

/// Per-statement success indicators of `n` nested samples.
fn success_matrix(theta: &PolicyParams, records: &[StatementRecord], n: usize, sampler: &SamplerConfig, budget: usize) -> Vec<Vec<Sampled>> {
    records
        .par_iter()
        .map(|r| sample_outcomes(theta, &r.statement, n, &sampler.with_seed(statement_seed(sampler.seed, r.id)), budget))
        .collect()
}

fn solved_at(samples: &[Vec<Sampled>], k: usize) -> usize {
    samples.iter().filter(|s| s.iter().take(k).any(|x| x.outcome.is_success())).count()
}

fn verified_samples(samples: &[Vec<Sampled>], k: usize) -> usize {
    samples.iter().map(|s| s.iter().take(k).filter(|x| x.outcome.is_success()).count()).sum()
}

fn scramble_bucket(steps: usize) -> String {
    match steps {
        0 => "0".into(),
        1 => "1".into(),
        2 => "2".into(),
        3 => "3".into(),
        _ => "4+".into(),
    }
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String, HarnessError> {
    let cfg = resolve_inputs(cfg, "eval");
    let records = load_statements(cfg.corpus.as_ref())?;
    let records = select_split(&records, &cfg);
    let theta = load_checkpoint(cfg.checkpoint.as_ref(), &cfg.arch())?;
    let out = out_dir(&cfg);
    let total = records.len();
    let rate = |solved: usize| solved as f64 / total.max(1) as f64;

    let mut budgets = cfg.eval_budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    let max_k = *budgets.last().expect("validated non-empty");

    // (a) pass@k over nested pools, per seed and summarized
    let mut per_seed_rows = Vec::new();
    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut first_samples = None;
    for &seed in &cfg.eval_seeds {
        let sampler = cfg.sampler(derive_seed(seed, 0, EVAL_STREAM));
        let samples = success_matrix(&theta, &records, max_k, &sampler, cfg.step_budget);
        for &k in &budgets {
            let solved = solved_at(&samples, k);
            per_seed_rows.push(vec![
                seed.to_string(),
                k.to_string(),
                solved.to_string(),
                total.to_string(),
                f(rate(solved)),
                verified_samples(&samples, k).to_string(),
            ]);
            by_k.entry(k).or_default().push(rate(solved));
        }
        first_samples.get_or_insert(samples);
    }
    write_table(&out.join("eval_passk.csv"), &["seed", "k", "solved", "total", "pass_rate", "verified_samples"],
        &per_seed_rows,)?;
    let summary_rows: Vec<_> = by_k
        .iter()
        .map(|(k, xs)| {
            let (m, s) = mean_std(xs);
            vec![k.to_string(), f(m), f(s), xs.len().to_string()]
        })
        .collect();
    write_table(&out.join("eval_passk_summary.csv"), &["k", "mean", "std", "seeds"], &summary_rows)?;

    // (b) temperature sweep of pass@sweep_k, with the mean first-step entropy
    let mut sweep_rows = Vec::new();
    for &t in &cfg.sweep_temperatures {
        let rates: Vec<f64> = cfg
            .eval_seeds
            .iter()
            .map(|&seed| {
                let sampler = SamplerConfig { temperature: t, ..cfg.sampler(derive_seed(seed, 1, EVAL_STREAM)) };
                rate(solved_at(&success_matrix(&theta, &records, cfg.sweep_k, &sampler, cfg.step_budget), cfg.sweep_k))
            })
            .collect();
        let entropy: f64 =
            records.iter().map(|r| theta.prepare(&r.statement).step_entropy(&[], t)).sum::<f64>() / total.max(1) as f64;
        let (m, s) = mean_std(&rates);
        sweep_rows.push(vec![format!("{t:.1}"), cfg.sweep_k.to_string(), f(m), f(s), f(entropy)]);
    }
    write_table(&out.join("eval_temperature.csv"), &["temperature", "k", "mean", "std", "first_step_entropy"], &sweep_rows)?;

    // (c) failure statuses of the first seed's samples, by source and by scramble depth
    let samples = first_samples.unwrap_or_default();
    let mut by_source: BTreeMap<(String, &'static str), usize> = BTreeMap::new();
    let mut by_scramble: BTreeMap<(String, &'static str), usize> = BTreeMap::new();
    for (r, ss) in records.iter().zip(&samples) {
        for x in ss.iter().filter(|x| x.outcome.status != Status::Success) {
            *by_source.entry((r.source.clone(), x.outcome.status.name())).or_default() += 1;
            *by_scramble.entry((scramble_bucket(r.scramble_steps), x.outcome.status.name())).or_default() += 1;
        }
    }
    let rows = |m: &BTreeMap<(String, &str), usize>| -> Vec<Vec<String>> {
        m.iter().map(|((g, s), c)| vec![g.clone(), s.to_string(), c.to_string()]).collect()
    };
    write_table(&out.join("eval_failures_source.csv"), &["source", "status", "count"], &rows(&by_source))?;
    write_table(&out.join("eval_failures_scramble.csv"), &["scramble_steps", "status", "count"], &rows(&by_scramble))?;
    write_manifest(&cfg, "eval")?;

    let lines: Vec<String> = summary_rows.iter().map(|r| format!("pass@{} = {} ± {}", r[0], r[1], r[2])).collect();
    Ok(format!("eval on {} {} statements over {} seeds: {}", total, cfg.split, cfg.eval_seeds.len(), lines.join(", ")))
}

pub fn cmd_repair(cfg: &RunConfig) -> Result<String, HarnessError> {
    let cfg = resolve_inputs(cfg, "repair");
    let records = load_statements(cfg.corpus.as_ref())?;
    let records = select_split(&records, &cfg);
    let theta = load_checkpoint(cfg.checkpoint.as_ref(), &cfg.arch())?;
    let out = out_dir(&cfg);
    let base = derive_seed(cfg.seed, 0, REPAIR_STREAM);

    let samples = success_matrix(&theta, &records, cfg.repair_samples, &cfg.sampler(base), cfg.step_budget);
    let failing: Vec<(&StatementRecord, &Sampled)> = records
        .iter()
        .zip(&samples)
        .flat_map(|(r, ss)| repairable(ss).map(move |x| (r, x)))
        .take(cfg.repair_max_failures)
        .collect();
    let pairs: Vec<RepairPair> = failing
        .par_iter()
        .enumerate()
        .filter_map(|(i, (r, x))| {
            let sampler = cfg.sampler(derive_seed(base, i as u64, 1));
            prefix_repair(&theta, r.id, &r.statement, &x.script, &x.outcome, cfg.repair_attempts, &sampler, cfg.step_budget)
        })
        .collect();

    write_file(&out.join("repairs.jsonl"), write_repairs(&pairs))?;
    let prompt_dir = out.join("prompts");
    if prompt_dir.exists() {
        std::fs::remove_dir_all(&prompt_dir)
            .map_err(|source| HarnessError::Io { path: prompt_dir.display().to_string(), source })?;
    }
    for (i, p) in pairs.iter().enumerate() {
        let text = render_reflection_prompt(&render_script(&p.failing), &p.outcome.feedback(), &render_script(&p.repaired));
        write_file(&prompt_path(&prompt_dir, i), text)?;
    }
    let rate = pairs.len() as f64 / failing.len().max(1) as f64;
    write_table(
        &out.join("repair_summary.csv"),
        &["failing_samples", "repaired", "repair_rate", "attempts"],
        &[vec![failing.len().to_string(), pairs.len().to_string(), f(rate), cfg.repair_attempts.to_string()]],
    )?;
    write_manifest(&cfg, "repair")?;
    Ok(format!(
        "repair: {} of {} failing samples repaired (rate {:.3}) with {} attempts each",
        pairs.len(),
        failing.len(),
        rate,
        cfg.repair_attempts
    ))
}

pub fn prompt_path(dir: &std::path::Path, index: usize) -> PathBuf {
    dir.join(format!("reflection_{index:04}.txt"))
}

/// Re-checks written repair pairs against their statements: each repaired
/// script must verify and keep the failing script's tactics before the
/// first failure. Returns the number of pairs checked.
pub fn reverify_repairs(cfg: &RunConfig) -> Result<usize, HarnessError> {
    let cfg = resolve_inputs(cfg, "repair");
    let records = load_statements(cfg.corpus.as_ref())?;
    let lines = load_repairs(&out_dir(&cfg).join("repairs.jsonl"))?;
    for (i, line) in lines.iter().enumerate() {
        let rec = records
            .iter()
            .find(|r| r.id == line.statement_id)
            .ok_or_else(|| HarnessError::Data(format!("repair {i}: unknown statement {}", line.statement_id)))?;
        let failing = parse_script(&line.failing_script).map_err(|e| HarnessError::Data(e.to_string()))?;
        let repaired = parse_script(&line.repaired_script).map_err(|e| HarnessError::Data(e.to_string()))?;
        let k = line.first_failure;
        let failed = check_proof(&rec.statement, &failing, cfg.step_budget);
        let ok = failed.first_failure == Some(k)
            && repaired.tactics.len() >= k
            && repaired.tactics[..k] == failing.tactics[..k]
            && check_proof(&rec.statement, &repaired, cfg.step_budget).is_success();
        if !ok {
            return Err(HarnessError::Data(format!("repair {i} for statement {} does not re-verify", line.statement_id)));
        }
    }
    Ok(lines.len())
}
