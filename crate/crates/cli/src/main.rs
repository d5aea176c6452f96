use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwprover_cli::{stages, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "rwprover", version, about = "Whole-proof RL harness for a toy rewriting prover")]
struct Cli {
    /// Config file (flat `key = value`); stage manifests can be passed here
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named profile: desk or paper-shaped
    #[arg(long, global = true)]
    profile: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker threads for sampling and verification
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override any config key, e.g. `--set iterations=50` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a statement corpus
    Gen(GenArgs),
    /// Expert iteration / supervised fine-tuning
    Sft(SftArgs),
    /// GRPO training on the windowed pool
    Rl(RlArgs),
    /// pass@k tables, temperature sweep, failure distribution
    Eval(EvalArgs),
    /// First-error prefix repair and reflection prompts
    Repair(RepairArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    scramble: Option<usize>,
}

#[derive(Args)]
struct SftArgs {
    #[arg(long)]
    corpus: Option<String>,
    /// Seed proof corpus (defaults to oracle proofs)
    #[arg(long)]
    proofs: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct RlArgs {
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    /// grpo or dr_grpo
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    /// heldout, train or all
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct RepairArgs {
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    attempts: Option<usize>,
}

fn push<T: Into<toml::Value>>(over: &mut Vec<(String, toml::Value)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        over.push((key.to_string(), v.into()));
    }
}

fn parse_set(item: &str) -> Result<(String, toml::Value), HarnessError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
    let key = key.trim().to_string();
    // parse as a TOML value; bare words fall back to strings
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    Ok((key, value))
}

fn usize_value(v: Option<usize>) -> Option<i64> {
    v.map(|x| x as i64)
}

fn resolve(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let file_text = match &cli.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    // Generic `--set` entries first so the dedicated flags win over them.
    let mut over = cli.set.iter().map(|item| parse_set(item)).collect::<Result<Vec<_>, _>>()?;
    push(&mut over, "seed", cli.seed.map(|s| s as i64));
    push(&mut over, "out", cli.out.clone());
    push(&mut over, "workers", usize_value(cli.workers));
    match &cli.command {
        Command::Gen(a) => {
            push(&mut over, "gen_n", usize_value(a.n));
            push(&mut over, "gen_depth", usize_value(a.depth));
            push(&mut over, "gen_scramble", usize_value(a.scramble));
        }
        Command::Sft(a) => {
            push(&mut over, "corpus", a.corpus.clone());
            push(&mut over, "proofs", a.proofs.clone());
            push(&mut over, "ei_rounds", usize_value(a.rounds));
            push(&mut over, "sft_epochs", usize_value(a.epochs));
        }
        Command::Rl(a) => {
            push(&mut over, "corpus", a.corpus.clone());
            push(&mut over, "checkpoint", a.checkpoint.clone());
            push(&mut over, "iterations", usize_value(a.iterations));
            push(&mut over, "variant", a.variant.clone());
        }
        Command::Eval(a) => {
            push(&mut over, "corpus", a.corpus.clone());
            push(&mut over, "checkpoint", a.checkpoint.clone());
            push(&mut over, "split", a.split.clone());
        }
        Command::Repair(a) => {
            push(&mut over, "corpus", a.corpus.clone());
            push(&mut over, "checkpoint", a.checkpoint.clone());
            push(&mut over, "repair_attempts", usize_value(a.attempts));
        }
    }
    RunConfig::resolve(cli.profile.as_deref(), file_text.as_deref(), &over)
}

fn run(cli: &Cli) -> Result<String, HarnessError> {
    let cfg = resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Gen(_) => stages::cmd_gen(&cfg),
        Command::Sft(_) => stages::cmd_sft(&cfg),
        Command::Rl(_) => stages::cmd_rl(&cfg),
        Command::Eval(_) => stages::cmd_eval(&cfg),
        Command::Repair(_) => stages::cmd_repair(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
