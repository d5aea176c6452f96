use std::collections::BTreeSet;

use rwprover::curation::gen_statements;
use rwprover::lang::{parse_script, ProofScript, Statement};
use rwprover::verifier::*;

fn outcome(status: Status, warnings: Vec<Warning>) -> VerifierOutcome {
    let s = Statement::parse("a = a").unwrap();
    VerifierOutcome {
        status,
        first_failure: status.is_tactic_error().then_some(0),
        warnings,
        final_lhs: s.lhs,
    }
}

#[test]
fn reward_is_two_valued_and_ignores_warnings() {
    let cfg = RewardConfig::default();
    let mut seen = BTreeSet::new();
    for status in Status::ALL {
        let bare = reward_of(&outcome(status, vec![]), &cfg);
        let warned = reward_of(&outcome(status, vec![Warning::NoOpRewrite(0), Warning::NoOpRewrite(3)]), &cfg);
        assert_eq!(bare, warned, "{status:?}");
        assert_eq!(bare, if status == Status::Success { 1.0 } else { -1.0 });
        seen.insert(bare.to_bits());
    }
    assert_eq!(seen.len(), 2);
    assert_eq!(reward_of(&outcome(Status::StepBudgetExceeded, vec![]), &cfg), cfg.r_fail);
}

#[test]
fn budget_exhaustion_is_a_failure() {
    let s = Statement::parse("(a + b) = (b + a)").unwrap();
    let script = parse_script("rw add_comm at .\nrw add_comm at .\nrw add_comm at .").unwrap();
    let o = check_proof(&s, &script, 2);
    assert_eq!(o.status, Status::StepBudgetExceeded);
    assert_eq!(o.first_failure, None);
    assert_eq!(reward_of(&o, &RewardConfig::default()), -1.0);
}

fn batch(n: usize) -> Vec<(Statement, ProofScript)> {
    let recs = gen_statements(17, n, 3, 3).unwrap();
    recs.iter()
        .enumerate()
        .map(|(i, r)| {
            // alternate oracle proofs with proofs for a neighbouring statement
            let src = &recs[if i % 2 == 0 { i } else { (i + 1) % n }];
            let proof = oracle_prove(&src.statement, src.scramble_steps).unwrap().unwrap();
            (r.statement.clone(), proof)
        })
        .collect()
}

#[test]
fn batch_verification_is_independent_of_workers() {
    let items = batch(1000);
    let sequential: Vec<_> = items.iter().map(|(s, p)| check_proof(s, p, 32)).collect();
    for workers in [1, 2, 8] {
        assert_eq!(verify_batch(&items, workers, 32), sequential, "workers={workers}");
    }
    assert!(sequential.iter().any(|o| o.is_success()) && sequential.iter().any(|o| !o.is_success()));
    assert!(verify_batch(&[], 8, 32).is_empty());
}

#[test]
fn oracle_agrees_with_verifier_on_generated_statements() {
    let recs = gen_statements(29, 500, 3, 3).unwrap();
    for r in &recs {
        let proof = oracle_prove(&r.statement, r.scramble_steps)
            .unwrap()
            .unwrap_or_else(|| panic!("{} not provable in {} steps", r.statement, r.scramble_steps));
        assert!(proof.tactics.len() <= r.scramble_steps);
        assert!(check_proof(&r.statement, &proof, 32).is_success());
    }
}

#[test]
fn oracle_search_respects_node_cap() {
    let s = Statement::parse("((a * (b + c)) * (c + (a * 2))) = ((c * 2) + (b * a))").unwrap();
    assert!(matches!(oracle_prove_capped(&s, 6, 50), Err(OracleError::SearchBudgetExceeded { cap: 50 })));
}

#[test]
fn records_roundtrip_as_lines() {
    let cfg = RewardConfig::default();
    for (i, (s, p)) in batch(20).iter().enumerate() {
        let rec = VerificationRecord::new(i, &check_proof(s, p, 32), &cfg);
        assert_eq!(VerificationRecord::from_line(&rec.to_line()).unwrap(), rec);
    }
}
