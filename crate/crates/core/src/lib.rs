//! Reinforcement learning from verifier feedback on a toy rewriting
//! language.
//!
//! - [`lang`]: expressions, rules, tactics and scripts
//! - [`verifier`]: proof checking, terminal reward, batch pool, BFS oracle
//! - [`policy`]: autoregressive tactic policy with exact gradients
//! - [`grpo`]: group-relative clipped policy optimization
//! - [`curation`]: statement generation, pass@N, expert iteration, repair
//! - [`prompts`]: reflection and rewriting prompt rendering
//! - [`corpus`]: line-delimited record formats

pub mod corpus;
pub mod curation;
pub mod grpo;
pub mod lang;
pub mod policy;
pub mod prompts;
pub mod verifier;

pub use lang::{Expr, Path, ProofScript, Rule, Statement, Tactic};
pub use policy::{Arch, PolicyParams, SamplerConfig, Token, Vocab};
pub use verifier::{RewardConfig, Status, VerifierOutcome};
