mod common;

use common::*;
use proptest::prelude::*;
use rwprover::grpo::*;
use rwprover::policy::{Arch, PolicyParams};
use rwprover::verifier::{reward_of_status, RewardConfig, Status};

fn non_constant_rewards() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2..40).prop_filter("non-constant", |r| {
        let m = r.iter().sum::<f64>() / r.len() as f64;
        (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / r.len() as f64).sqrt() > 1e-3
    })
}

fn binary_rewards() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::bool::ANY, 2..33)
        .prop_map(|bits| bits.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn advantages_are_standardized(r in non_constant_rewards()) {
        let a = compute_advantages(&r, Variant::Grpo);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn advantages_ignore_positive_affine_maps(r in non_constant_rewards(), alpha in 0.01f64..100.0, beta in -50.0f64..50.0) {
        let a = compute_advantages(&r, Variant::Grpo);
        let mapped: Vec<f64> = r.iter().map(|x| alpha * x + beta).collect();
        for (x, y) in a.iter().zip(compute_advantages(&mapped, Variant::Grpo)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_groups_get_zero_advantage(v in -5.0f64..5.0, n in 2usize..40) {
        prop_assert_eq!(compute_advantages(&vec![v; n], Variant::Grpo), vec![0.0; n]);
    }

    #[test]
    fn reward_levels_do_not_change_binary_advantages(bits in binary_rewards(), lo in -5.0f64..0.0, gap in 0.1f64..5.0) {
        let cfg = RewardConfig { r_success: lo + gap, r_fail: lo };
        let relabeled: Vec<f64> = bits.iter().map(|&b| {
            reward_of_status(if b > 0.0 { Status::Success } else { Status::UnsolvedGoal }, &cfg)
        }).collect();
        let a = compute_advantages(&bits, Variant::Grpo);
        for (x, y) in a.iter().zip(compute_advantages(&relabeled, Variant::Grpo)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn deadzone_has_zero_derivative(log_ratio in 0.2f64..3.0, adv in 0.01f64..5.0, eps in 0.05f64..0.5, old in -8.0f64..0.0) {
        prop_assume!(log_ratio.exp() > 1.0 + eps);
        let (_, d, clipped) = clipped_term(old + log_ratio, old, adv, eps);
        prop_assert!(clipped);
        prop_assert_eq!(d, 0.0);
        prop_assume!((-log_ratio).exp() < 1.0 - eps);
        let (_, d, clipped) = clipped_term(old - log_ratio, old, -adv, eps);
        prop_assert!(clipped);
        prop_assert_eq!(d, 0.0);
    }

    #[test]
    fn surrogate_depends_on_logprob_differences_only(new in -8.0f64..0.0, old in -8.0f64..0.0, shift in -20.0f64..20.0, adv in -3.0f64..3.0) {
        let a = clipped_term(new, old, adv, 0.2);
        let b = clipped_term(new + shift, old + shift, adv, 0.2);
        prop_assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9 && a.2 == b.2);
    }
}

fn rollout_batch(p: &PolicyParams, cfg: &TrainConfig, seed: u64) -> Vec<RolloutGroup> {
    statements(seed, 6).iter().enumerate().map(|(k, s)| rollout_group(p, s, cfg, seed + k as u64)).collect()
}

#[test]
fn on_policy_value_is_zero_and_gradient_is_policy_gradient() {
    let p = random_params(Arch::default(), 0.1, 1);
    let cfg = TrainConfig { group_size: 8, ..Default::default() };
    let mut groups = rollout_batch(&p, &cfg, 3);
    // force non-degenerate advantages so the check is not vacuous
    for g in &mut groups {
        g.rewards = (0..g.outputs.len()).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        g.advantages = compute_advantages(&g.rewards, Variant::Grpo);
    }
    let obj = grpo_objective(&p, &groups, &cfg).unwrap();
    assert!(obj.value.abs() < 1e-6, "{}", obj.value);
    assert_eq!(obj.clip_fraction, 0.0);

    let mut pg = vec![0.0; p.theta.len()];
    let n_groups = groups.len() as f64;
    for g in &groups {
        for (o, a) in g.outputs.iter().zip(&g.advantages) {
            let w = a / (o.len() as f64 * g.outputs.len() as f64 * n_groups);
            for (acc, d) in pg.iter_mut().zip(p.grad_seq_logprob(&g.statement, o)) {
                *acc += w * d;
            }
        }
    }
    for (x, y) in obj.gradient.iter().zip(&pg) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn degenerate_groups_contribute_nothing() {
    let p = random_params(Arch::default(), 0.1, 2);
    let cfg = TrainConfig::default();
    let mut groups = rollout_batch(&p, &cfg, 7);
    for g in &mut groups {
        g.rewards = vec![-1.0; g.outputs.len()];
        g.advantages = compute_advantages(&g.rewards, Variant::Grpo);
    }
    let obj = grpo_objective(&p, &groups, &cfg).unwrap();
    assert_eq!(obj.value, 0.0);
    assert!(obj.gradient.iter().all(|&g| g == 0.0));
}

#[test]
fn mismatched_logprobs_are_rejected() {
    let p = PolicyParams::zeros(Arch::default());
    let cfg = TrainConfig::default();
    let mut groups = rollout_batch(&p, &cfg, 1);
    groups[2].old_logprobs[1].push(0.0);
    assert!(matches!(grpo_objective(&p, &groups, &cfg), Err(GrpoError::LengthMismatch { group: 2, output: 1, .. })));
    assert_eq!(grpo_objective(&p, &[], &cfg).unwrap_err(), GrpoError::Empty);
}

#[test]
fn training_is_independent_of_thread_count() {
    let p = PolicyParams::init(Arch::default(), 3);
    let pool = statements(30, 8);
    let cfg = TrainConfig { iterations: 3, statements_per_batch: 4, lr: 0.05, ..Default::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_rl(&p, &pool, &cfg, |_, _| None))
    };
    let a = run(1);
    for threads in [2, 8] {
        let b = run(threads);
        assert_eq!(a.params, b.params);
        let strip = |r: &TrainResult| r.curve.iter().map(|m| (m.iteration, m.mean_reward.to_bits(), m.clip_fraction.to_bits())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }
}

#[test]
fn groups_replay_from_seed() {
    let p = random_params(Arch::default(), 0.1, 5);
    let cfg = TrainConfig::default();
    let s = &statements(2, 1)[0];
    assert_eq!(rollout_group(&p, s, &cfg, 11), rollout_group(&p, s, &cfg, 11));
}
