use std::path::Path;
use std::process::{Command, Output};

use rwprover::corpus::read_statements;
use rwprover::policy::{Arch, PolicyParams};
use rwprover_cli::io::read_table;

fn rwprover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwprover")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rwprover(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small but complete settings so each stage runs in a second or two.
const SMALL: &[&str] = &[
    "--set", "ei_rounds=1", "--set", "ei_samples=4", "--set", "iterations=6", "--set", "eval_every=3",
    "--set", "statements_per_batch=4", "--set", "heldout_samples=8", "--set", "eval_budgets=[1, 4, 8]",
    "--set", "sweep_k=4", "--set", "sweep_temperatures=[0.6, 1.0, 1.4]", "--set", "repair_samples=4",
    "--set", "repair_max_failures=20",
];

fn small(args: &[&str]) -> Vec<String> {
    args.iter().chain(SMALL).map(|a| a.to_string()).collect()
}

fn run_small(args: &[&str]) -> String {
    let v = small(args);
    ok(&v.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn gen_is_reproducible_and_creates_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a/nested");
    let b = tmp.path().join("b");
    ok(&["gen", "--n", "500", "--depth", "3", "--scramble", "3", "--seed", "7", "--out", s(&a)]);
    ok(&["gen", "--n", "500", "--depth", "3", "--scramble", "3", "--seed", "7", "--out", s(&b)]);
    let text = std::fs::read(a.join("statements.jsonl")).unwrap();
    assert_eq!(text, std::fs::read(b.join("statements.jsonl")).unwrap());
    assert_eq!(read_statements(std::str::from_utf8(&text).unwrap()).unwrap().len(), 500);
    assert!(a.join("gen.manifest.toml").exists());
}

#[test]
fn empty_corpus_still_gets_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["gen", "--n", "0", "--out", s(tmp.path())]);
    assert_eq!(std::fs::read_to_string(tmp.path().join("statements.jsonl")).unwrap(), "");
    let manifest = std::fs::read_to_string(tmp.path().join("gen.manifest.toml")).unwrap();
    let cfg = rwprover_cli::RunConfig::from_text(&manifest).unwrap();
    assert_eq!(cfg.gen_n, 0);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\ngroup_sise = 8\n").unwrap();
    let out = rwprover(&["gen", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("group_sise"));
    assert_eq!(rwprover(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rwprover(&["gen", "--profile", "huge"]).status.code(), Some(1));
    assert_eq!(rwprover(&["rl", "--set", "epsilon=2.0"]).status.code(), Some(1));
}

#[test]
fn corpus_errors_report_line_numbers_and_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    std::fs::write(
        &corpus,
        "{\"id\":0,\"lhs\":\"a\",\"rhs\":\"a\",\"source\":\"t\",\"scramble_steps\":0}\n{\"id\":1,\"lhs\":\"(a +\"}\n",
    )
    .unwrap();
    let out = rwprover(&["sft", "--corpus", s(&corpus), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_epochs_and_zero_iterations_are_identities() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    ok(&["gen", "--n", "40", "--seed", "2", "--out", out]);
    run_small(&["sft", "--seed", "2", "--out", out, "--epochs", "0"]);
    let init = PolicyParams::init(Arch::default(), 2).to_bytes();
    assert_eq!(std::fs::read(tmp.path().join("sft.ckpt")).unwrap(), init);
    let (header, rows) = read_table(&tmp.path().join("sft_loss.csv")).unwrap();
    assert_eq!(header, ["round", "epoch", "loss"]);
    assert!(rows.is_empty());

    let rl_out = tmp.path().join("rl0");
    run_small(&["rl", "--seed", "2", "--out", s(&rl_out), "--corpus", &format!("{out}/statements.jsonl"),
        "--checkpoint", &format!("{out}/sft.ckpt"), "--iterations", "0"]);
    assert_eq!(std::fs::read(rl_out.join("rl.ckpt")).unwrap(), init);
    assert!(read_table(&rl_out.join("rl_curve.csv")).unwrap().1.is_empty());
}

#[test]
fn empty_pool_exits_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    ok(&["gen", "--n", "40", "--seed", "3", "--out", out]);
    run_small(&["sft", "--seed", "3", "--out", out, "--epochs", "0"]);
    let v = small(&["rl", "--seed", "3", "--out", out]);
    let res = rwprover(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("[2, 16]") && err.contains("pass histogram"), "{err}");
    assert!(tmp.path().join("pool_hist.csv").exists());
}

#[test]
fn full_pipeline_tables_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    ok(&["gen", "--n", "80", "--seed", "4", "--out", out]);
    run_small(&["sft", "--seed", "4", "--out", out]);
    run_small(&["rl", "--seed", "4", "--out", out, "--set", "window_lo=1", "--set", "window_hi=32"]);
    run_small(&["eval", "--seed", "4", "--out", out, "--set", "eval_seeds=[5]"]);
    let summary = run_small(&["repair", "--seed", "4", "--out", out]);
    assert!(summary.contains("repaired"));

    let p = |name: &str| tmp.path().join(name);
    assert_eq!(read_table(&p("rl_curve.csv")).unwrap().1.len(), 6);
    let (header, rows) = read_table(&p("rl_eval.csv")).unwrap();
    assert_eq!(header, ["iteration", "n", "solved", "total", "pass_rate"]);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["0", "3", "6"]);
    let (_, hist) = read_table(&p("pool_hist.csv")).unwrap();
    assert_eq!(hist.len(), 33);
    assert_eq!(hist.iter().map(|r| r[1].parse::<usize>().unwrap()).sum::<usize>(), 60);

    // one eval seed: sigma is exactly zero; pass@k non-decreasing
    let (_, sum) = read_table(&p("eval_passk_summary.csv")).unwrap();
    assert!(sum.iter().all(|r| r[2] == "0.000000"));
    let (_, per_seed) = read_table(&p("eval_passk.csv")).unwrap();
    let rates: Vec<f64> = per_seed.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]));
    // failure counts = statements x budget - verified samples
    let last = per_seed.last().unwrap();
    let (statements, budget, verified): (usize, usize, usize) =
        (last[3].parse().unwrap(), last[1].parse().unwrap(), last[5].parse().unwrap());
    for table in ["eval_failures_source.csv", "eval_failures_scramble.csv"] {
        let (_, rows) = read_table(&p(table)).unwrap();
        let failures: usize = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
        assert_eq!(failures, statements * budget - verified, "{table}");
    }
    let (_, temps) = read_table(&p("eval_temperature.csv")).unwrap();
    assert_eq!(temps.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["0.6", "1.0", "1.4"]);
}
