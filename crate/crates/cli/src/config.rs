//! Run configuration: named profiles, a flat `key = value` file format
//! (TOML subset; unknown keys are rejected), and manifests.

use std::path::Path;

use rwprover::curation::ExpertIterConfig;
use rwprover::grpo::{TrainConfig, Variant};
use rwprover::policy::{Arch, SamplerConfig};
use rwprover::verifier::RewardConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub profile: String,
    pub seed: u64,
    pub out: String,
    pub workers: usize,

    // inputs, recorded so a manifest alone can replay a stage
    pub corpus: String,
    pub checkpoint: String,
    /// Optional verified-proof corpus that seeds expert iteration; when
    /// empty, oracle proofs for `teacher_fraction` of the training split
    /// are used instead.
    pub proofs: String,

    // generation
    pub gen_n: usize,
    pub gen_depth: usize,
    pub gen_scramble: usize,
    pub heldout_fraction: f64,

    // verifier and reward
    pub step_budget: usize,
    pub r_success: f64,
    pub r_fail: f64,

    // policy and sampling
    pub window: usize,
    pub hidden: usize,
    pub temperature: f64,
    pub max_len: usize,

    // supervised fine-tuning / expert iteration
    pub teacher_fraction: f64,
    pub ei_rounds: usize,
    pub ei_samples: usize,
    pub sft_lr: f64,
    pub sft_epochs: usize,
    pub sft_batch: usize,

    // RL
    pub group_size: usize,
    pub epsilon: f64,
    pub lr: f64,
    pub statements_per_batch: usize,
    pub max_rollout_len: usize,
    pub variant: String,
    pub iterations: usize,
    pub eval_every: usize,
    pub inner_epochs: usize,
    pub pool_samples: usize,
    pub window_lo: usize,
    pub window_hi: usize,
    pub heldout_samples: usize,

    // evaluation
    pub eval_budgets: Vec<usize>,
    pub eval_seeds: Vec<u64>,
    pub sweep_k: usize,
    pub sweep_temperatures: Vec<f64>,
    pub split: String,

    // repair
    pub repair_samples: usize,
    pub repair_attempts: usize,
    pub repair_max_failures: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::desk()
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            profile: "desk".into(),
            seed: 0,
            out: "out".into(),
            workers: 1,
            corpus: String::new(),
            checkpoint: String::new(),
            proofs: String::new(),
            gen_n: 400,
            gen_depth: 3,
            gen_scramble: 3,
            heldout_fraction: 0.25,
            step_budget: 32,
            r_success: 1.0,
            r_fail: -1.0,
            window: 4,
            hidden: 64,
            temperature: 1.0,
            max_len: 8,
            teacher_fraction: 1.0,
            ei_rounds: 2,
            ei_samples: 16,
            sft_lr: 0.1,
            sft_epochs: 2,
            sft_batch: 8,
            group_size: 8,
            epsilon: 0.2,
            lr: 0.02,
            statements_per_batch: 32,
            max_rollout_len: 8,
            variant: "grpo".into(),
            iterations: 200,
            eval_every: 50,
            inner_epochs: 1,
            pool_samples: 32,
            window_lo: 2,
            window_hi: 16,
            heldout_samples: 32,
            eval_budgets: vec![1, 16, 32, 64, 128],
            eval_seeds: vec![0, 1, 2],
            sweep_k: 16,
            sweep_temperatures: vec![0.6, 0.8, 1.0, 1.2, 1.4],
            split: "heldout".into(),
            repair_samples: 16,
            repair_attempts: 16,
            repair_max_failures: 200,
        }
    }

    /// Full-scale group size, batch and learning rate; the window and
    /// clip range are shared with the desk profile.
    pub fn paper_shaped() -> Self {
        RunConfig {
            profile: "paper-shaped".into(),
            group_size: 32,
            statements_per_batch: 32,
            lr: 1e-6,
            eval_budgets: vec![32, 64, 128],
            ..RunConfig::desk()
        }
    }

    pub fn profile(name: &str) -> Result<Self, HarnessError> {
        match name {
            "desk" => Ok(RunConfig::desk()),
            "paper-shaped" => Ok(RunConfig::paper_shaped()),
            other => Err(HarnessError::Config(format!("unknown profile `{other}` (desk, paper-shaped)"))),
        }
    }

    /// Resolves a configuration: profile defaults, then the config file,
    /// then `overrides` (later wins). The base profile is the `profile`
    /// argument if given, else the file's `profile` key, else `desk`.
    pub fn resolve(
        profile: Option<&str>,
        file_text: Option<&str>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self, HarnessError> {
        let file: toml::Table = match file_text {
            Some(t) => toml::from_str(t).map_err(|e| HarnessError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let base = profile.or_else(|| file.get("profile").and_then(|v| v.as_str())).unwrap_or("desk");
        let base = RunConfig::profile(base)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| HarnessError::Config(e.to_string()))?;
        for (k, v) in file.into_iter().chain(overrides.iter().cloned()) {
            if !merged.contains_key(&k) {
                return Err(HarnessError::Config(format!("unknown config key `{k}`")));
            }
            merged.insert(k, v);
        }
        if profile.is_some() {
            merged.insert("profile".into(), base.profile.into());
        }
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        RunConfig::resolve(None, Some(text), &[])
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::resolve(None, Some(&text), &[])
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.variant.parse::<Variant>().is_err() {
            return bad(format!("unknown variant `{}`", self.variant));
        }
        self.train_config().validate().map_err(HarnessError::Config)?;
        if self.window_lo > self.window_hi || self.window_hi > self.pool_samples {
            return bad(format!(
                "window [{}, {}] must satisfy lo <= hi <= pool_samples ({})",
                self.window_lo, self.window_hi, self.pool_samples
            ));
        }
        if self.gen_depth == 0 || self.gen_depth > 4 {
            return bad(format!("gen_depth must be in 1..=4, got {}", self.gen_depth));
        }
        if self.gen_scramble > 5 {
            return bad(format!("gen_scramble must be at most 5, got {}", self.gen_scramble));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return bad("heldout_fraction must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.teacher_fraction) {
            return bad("teacher_fraction must lie in [0, 1]".into());
        }
        if self.temperature <= 0.0 || self.sweep_temperatures.iter().any(|&t| t <= 0.0) {
            return bad("temperatures must be positive".into());
        }
        if self.step_budget == 0 || self.max_len == 0 || self.hidden == 0 || self.workers == 0 {
            return bad("step_budget, max_len, hidden and workers must be positive".into());
        }
        if self.eval_budgets.is_empty() || self.eval_budgets.contains(&0) || self.eval_seeds.is_empty() {
            return bad("eval_budgets and eval_seeds must be non-empty and budgets positive".into());
        }
        if !["heldout", "train", "all"].contains(&self.split.as_str()) {
            return bad(format!("split must be heldout, train or all, got `{}`", self.split));
        }
        if self.sft_batch == 0 || self.sweep_k == 0 || self.pool_samples == 0 {
            return bad("sft_batch, sweep_k and pool_samples must be positive".into());
        }
        Ok(())
    }

    pub fn arch(&self) -> Arch {
        Arch::with(self.window, self.hidden)
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig { r_success: self.r_success, r_fail: self.r_fail }
    }

    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig { temperature: self.temperature, max_len: self.max_len, seed }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            group_size: self.group_size,
            epsilon: self.epsilon,
            lr: self.lr,
            statements_per_batch: self.statements_per_batch,
            max_rollout_len: self.max_rollout_len,
            variant: self.variant.parse().unwrap_or(Variant::Grpo),
            iterations: self.iterations,
            eval_every: self.eval_every,
            seed: self.seed,
            temperature: self.temperature,
            inner_epochs: self.inner_epochs,
            step_budget: self.step_budget,
            workers: self.workers,
            reward: self.reward(),
        }
    }

    pub fn expert_config(&self) -> ExpertIterConfig {
        ExpertIterConfig {
            rounds: self.ei_rounds,
            samples_per_stmt: self.ei_samples,
            sft_lr: self.sft_lr,
            sft_epochs: self.sft_epochs,
            batch_size: self.sft_batch,
            temperature: self.temperature,
            max_len: self.max_len,
            step_budget: self.step_budget,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::desk().validate().unwrap();
        RunConfig::paper_shaped().validate().unwrap();
    }

    #[test]
    fn file_overrides_profile() {
        let cfg = RunConfig::from_text("profile = \"paper-shaped\"\nseed = 9\nlr = 0.5\n").unwrap();
        assert_eq!(cfg.group_size, 32);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.lr, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_text("sedd = 3\n").unwrap_err();
        assert!(err.to_string().contains("sedd"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_text("epsilon = 1.5\n").is_err());
        assert!(RunConfig::from_text("window_lo = 20\n").is_err());
        assert!(RunConfig::from_text("variant = \"ppo\"\n").is_err());
        assert!(RunConfig::from_text("profile = \"huge\"\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let over = vec![("seed".to_string(), toml::Value::Integer(5))];
        let cfg = RunConfig::resolve(Some("paper-shaped"), Some("profile = \"desk\"\nseed = 9\n"), &over).unwrap();
        assert_eq!(cfg.profile, "paper-shaped");
        assert_eq!(cfg.group_size, 32);
        assert_eq!(cfg.seed, 5);
    }

    #[test]
    fn manifest_text_roundtrips() {
        let mut cfg = RunConfig::desk();
        cfg.seed = 77;
        cfg.corpus = "x/statements.jsonl".into();
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
}
