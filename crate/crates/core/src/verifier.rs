//! Proof checking, the terminal reward, batched verification, and a
//! breadth-first provability oracle.
//!
//! Verification never fails with an error: every way a script can go wrong
//! is a [`Status`] in the returned [`VerifierOutcome`], so RL code only ever
//! sees rewards.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{
    apply_tactic, parse_script, Direction, Expr, LangError, ProofScript, Rule, Statement, Tactic,
};

pub const DEFAULT_STEP_BUDGET: usize = 32;
pub const DEFAULT_NODE_CAP: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Success,
    ParseError,
    UnknownRule,
    BadPath,
    RuleMismatch,
    IllegalDirection,
    DepthError,
    StepBudgetExceeded,
    UnsolvedGoal,
}

impl Status {
    pub const ALL: [Status; 9] = [
        Status::Success,
        Status::ParseError,
        Status::UnknownRule,
        Status::BadPath,
        Status::RuleMismatch,
        Status::IllegalDirection,
        Status::DepthError,
        Status::StepBudgetExceeded,
        Status::UnsolvedGoal,
    ];

    /// Statuses that point at a specific failing tactic.
    pub fn is_tactic_error(self) -> bool {
        matches!(
            self,
            Status::UnknownRule
                | Status::BadPath
                | Status::RuleMismatch
                | Status::IllegalDirection
                | Status::DepthError
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Success => "Success",
            Status::ParseError => "ParseError",
            Status::UnknownRule => "UnknownRule",
            Status::BadPath => "BadPath",
            Status::RuleMismatch => "RuleMismatch",
            Status::IllegalDirection => "IllegalDirection",
            Status::DepthError => "DepthError",
            Status::StepBudgetExceeded => "StepBudgetExceeded",
            Status::UnsolvedGoal => "UnsolvedGoal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Warning {
    /// The tactic at this index succeeded without changing the expression.
    NoOpRewrite(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierOutcome {
    pub status: Status,
    pub first_failure: Option<usize>,
    pub warnings: Vec<Warning>,
    pub final_lhs: Expr,
}

impl VerifierOutcome {
    pub fn is_success(&self) -> bool {
        self.status == Status::Success
    }

    /// One-line error message in the style of compiler feedback.
    pub fn feedback(&self) -> String {
        match (self.status, self.first_failure) {
            (Status::Success, _) => String::new(),
            (status, Some(i)) => format!(
                "error: {} at tactic {} (1-based line {})\ncurrent goal: {}",
                status.name(),
                i,
                i + 1,
                self.final_lhs
            ),
            (status, None) => format!("error: {}\ncurrent goal: {}", status.name(), self.final_lhs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub r_success: f64,
    pub r_fail: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { r_success: 1.0, r_fail: -1.0 }
    }
}

impl RewardConfig {
    pub fn is_valid(&self) -> bool {
        self.r_success > self.r_fail
    }
}

fn status_of(err: &LangError) -> Status {
    match err {
        LangError::Parse { .. } | LangError::ScriptParse { .. } => Status::ParseError,
        LangError::UnknownRule { .. } => Status::UnknownRule,
        LangError::BadPath => Status::BadPath,
        LangError::RuleMismatch => Status::RuleMismatch,
        LangError::IllegalDirection => Status::IllegalDirection,
        LangError::Depth { .. } => Status::DepthError,
    }
}

/// Runs `script` against `s.lhs`, stopping at the first tactic error or
/// after `step_budget` tactics.
pub fn check_proof(s: &Statement, script: &ProofScript, step_budget: usize) -> VerifierOutcome {
    let mut cur = s.lhs.clone();
    let mut warnings = Vec::new();
    for (i, t) in script.tactics.iter().enumerate() {
        if i >= step_budget {
            return VerifierOutcome {
                status: Status::StepBudgetExceeded,
                first_failure: None,
                warnings,
                final_lhs: cur,
            };
        }
        match apply_tactic(&cur, t) {
            Ok(next) => {
                if next == cur {
                    warnings.push(Warning::NoOpRewrite(i));
                }
                cur = next;
            }
            Err(err) => {
                return VerifierOutcome {
                    status: status_of(&err),
                    first_failure: Some(i),
                    warnings,
                    final_lhs: cur,
                }
            }
        }
    }
    let status = if cur == s.rhs { Status::Success } else { Status::UnsolvedGoal };
    VerifierOutcome { status, first_failure: None, warnings, final_lhs: cur }
}

/// Verifies script text. Unknown rule names are reported at the index of
/// the offending tactic; other syntax errors yield `ParseError`.
pub fn check_script_text(s: &Statement, text: &str, step_budget: usize) -> VerifierOutcome {
    match parse_script(text) {
        Ok(script) => check_proof(s, &script, step_budget),
        Err(LangError::UnknownRule { line, .. }) => {
            let index = tactic_lines_before(text, line);
            VerifierOutcome {
                status: Status::UnknownRule,
                first_failure: Some(index),
                warnings: Vec::new(),
                final_lhs: s.lhs.clone(),
            }
        }
        Err(_) => VerifierOutcome {
            status: Status::ParseError,
            first_failure: None,
            warnings: Vec::new(),
            final_lhs: s.lhs.clone(),
        },
    }
}

fn tactic_lines_before(text: &str, line: usize) -> usize {
    text.lines()
        .take(line - 1)
        .filter(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with("--")
        })
        .count()
}

/// Terminal reward: success or failure, warnings ignored.
pub fn reward_of(o: &VerifierOutcome, cfg: &RewardConfig) -> f64 {
    reward_of_status(o.status, cfg)
}

pub fn reward_of_status(status: Status, cfg: &RewardConfig) -> f64 {
    if status == Status::Success {
        cfg.r_success
    } else {
        cfg.r_fail
    }
}

/// Checks every item on a pool of `workers` threads; output order matches
/// input order and does not depend on `workers`.
pub fn verify_batch(
    items: &[(Statement, ProofScript)],
    workers: usize,
    step_budget: usize,
) -> Vec<VerifierOutcome> {
    let workers = workers.max(1);
    if workers == 1 || items.len() < 2 {
        return items.iter().map(|(s, p)| check_proof(s, p, step_budget)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("verification pool");
    pool.install(|| items.par_iter().map(|(s, p)| check_proof(s, p, step_budget)).collect())
}

/// Line record written for each verified item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub index: usize,
    pub status: Status,
    pub first_failure: Option<usize>,
    pub warnings: Vec<Warning>,
    pub reward: f64,
}

impl VerificationRecord {
    pub fn new(index: usize, o: &VerifierOutcome, cfg: &RewardConfig) -> Self {
        VerificationRecord {
            index,
            status: o.status,
            first_failure: o.first_failure,
            warnings: o.warnings.clone(),
            reward: reward_of(o, cfg),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search frontier exceeded {cap} nodes")]
    SearchBudgetExceeded { cap: usize },
}

/// All (rule, direction) pairs a tactic may use.
pub fn rule_directions() -> Vec<(Rule, Direction)> {
    let mut out = Vec::new();
    for rule in Rule::ALL {
        out.push((rule, Direction::Fwd));
        if rule.reversible() {
            out.push((rule, Direction::Rev));
        }
    }
    out
}

/// Every tactic that applies to `e`, with its result, in a fixed order.
pub fn applicable_tactics(e: &Expr) -> Vec<(Tactic, Expr)> {
    let pairs = rule_directions();
    let mut out = Vec::new();
    for path in e.paths() {
        for &(rule, dir) in &pairs {
            let t = Tactic::new(rule, dir, path.clone());
            if let Ok(next) = apply_tactic(e, &t) {
                out.push((t, next));
            }
        }
    }
    out
}

/// Shortest proof of `s` with at most `max_steps` tactics, by breadth-first
/// search over every applicable tactic.
pub fn oracle_prove(s: &Statement, max_steps: usize) -> Result<Option<ProofScript>, OracleError> {
    oracle_prove_capped(s, max_steps, DEFAULT_NODE_CAP)
}

pub fn oracle_prove_capped(
    s: &Statement,
    max_steps: usize,
    node_cap: usize,
) -> Result<Option<ProofScript>, OracleError> {
    if s.lhs == s.rhs {
        return Ok(Some(ProofScript::default()));
    }
    // (parent index, tactic) per discovered node
    let mut nodes: Vec<(usize, Option<Tactic>)> = vec![(usize::MAX, None)];
    let mut seen: HashMap<Expr, usize> = HashMap::new();
    seen.insert(s.lhs.clone(), 0);
    let mut frontier = VecDeque::from([(s.lhs.clone(), 0usize, 0usize)]);
    while let Some((expr, idx, depth)) = frontier.pop_front() {
        if depth == max_steps {
            continue;
        }
        for (t, next) in applicable_tactics(&expr) {
            if seen.contains_key(&next) {
                continue;
            }
            let id = nodes.len();
            nodes.push((idx, Some(t)));
            if next == s.rhs {
                return Ok(Some(reconstruct(&nodes, id)));
            }
            if nodes.len() > node_cap {
                return Err(OracleError::SearchBudgetExceeded { cap: node_cap });
            }
            seen.insert(next.clone(), id);
            frontier.push_back((next, id, depth + 1));
        }
    }
    Ok(None)
}

fn reconstruct(nodes: &[(usize, Option<Tactic>)], mut id: usize) -> ProofScript {
    let mut tactics = Vec::new();
    while let (parent, Some(t)) = &nodes[id] {
        tactics.push(t.clone());
        id = *parent;
    }
    tactics.reverse();
    ProofScript::new(tactics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_expr, Path};

    fn stmt(s: &str) -> Statement {
        Statement::parse(s).unwrap()
    }

    fn script(s: &str) -> ProofScript {
        parse_script(s).unwrap()
    }

    #[test]
    fn check_examples() {
        let s = stmt("(a + 0) = a");
        let o = check_proof(&s, &script("rw add_zero at ."), 32);
        assert_eq!(o.status, Status::Success);
        assert!(o.warnings.is_empty());

        let o = check_proof(&s, &script("rw mul_one at ."), 32);
        assert_eq!((o.status, o.first_failure), (Status::RuleMismatch, Some(0)));

        let o = check_proof(&s, &ProofScript::default(), 32);
        assert_eq!((o.status, o.first_failure), (Status::UnsolvedGoal, None));

        let s = stmt("(a + a) = (a + a)");
        let o = check_proof(&s, &script("rw add_comm at ."), 32);
        assert_eq!(o.status, Status::Success);
        assert_eq!(o.warnings, vec![Warning::NoOpRewrite(0)]);
    }

    #[test]
    fn step_budget_stops_execution() {
        let s = stmt("(a + b) = (b + a)");
        let p = script("rw add_comm at .\nrw add_comm at .\nrw add_comm at .");
        let o = check_proof(&s, &p, 2);
        assert_eq!(o.status, Status::StepBudgetExceeded);
        assert_eq!(o.first_failure, None);
        assert_eq!(o.final_lhs, parse_expr("(a + b)").unwrap());
        assert_eq!(check_proof(&s, &p, 3).status, Status::Success);
    }

    #[test]
    fn error_statuses_and_final_lhs() {
        let s = stmt("((1 + 2) + c) = (c + 3)");
        let o = check_proof(&s, &script("rw const_fold at L\nrw add_comm at L.L"), 32);
        assert_eq!((o.status, o.first_failure), (Status::BadPath, Some(1)));
        assert_eq!(o.final_lhs, parse_expr("(3 + c)").unwrap());
        let o = check_proof(&s, &script("rw <- const_fold at L"), 32);
        assert_eq!((o.status, o.first_failure), (Status::IllegalDirection, Some(0)));
    }

    #[test]
    fn text_level_errors() {
        let s = stmt("(a + 0) = a");
        let o = check_script_text(&s, "-- c\nrw add_zero at .\nrw flub at .", 32);
        assert_eq!((o.status, o.first_failure), (Status::UnknownRule, Some(1)));
        let o = check_script_text(&s, "rw add_zero .", 32);
        assert_eq!((o.status, o.first_failure), (Status::ParseError, None));
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        let s = stmt("(a + a) = (a + a)");
        let o = check_proof(&s, &script("rw add_comm at ."), 32);
        assert_eq!(reward_of(&o, &cfg), 1.0);
        assert_eq!(reward_of_status(Status::UnsolvedGoal, &cfg), -1.0);
        assert_eq!(reward_of_status(Status::StepBudgetExceeded, &cfg), -1.0);
    }

    #[test]
    fn batch_matches_sequential() {
        let s = stmt("(a + 0) = a");
        let items = vec![
            (s.clone(), script("rw add_zero at .")),
            (s.clone(), script("rw mul_one at .")),
        ];
        assert_eq!(verify_batch(&items, 1, 32), verify_batch(&items, 8, 32));
        assert!(verify_batch(&[], 4, 32).is_empty());
    }

    #[test]
    fn oracle_examples() {
        let p = oracle_prove(&stmt("(a + 0) = a"), 3).unwrap().unwrap();
        assert_eq!(p.tactics, vec![Tactic::fwd(Rule::AddZero, Path::root())]);
        let p = oracle_prove(&stmt("(a + b) = (b + a)"), 3).unwrap().unwrap();
        assert_eq!(p.tactics, vec![Tactic::fwd(Rule::AddComm, Path::root())]);
        assert!(oracle_prove(&stmt("a = b"), 3).unwrap().is_none());
        assert_eq!(oracle_prove(&stmt("a = a"), 0).unwrap(), Some(ProofScript::default()));
    }

    #[test]
    fn oracle_node_cap() {
        let s = stmt("(((a + b) * c) + 1) = 5");
        assert_eq!(
            oracle_prove_capped(&s, 6, 50),
            Err(OracleError::SearchBudgetExceeded { cap: 50 })
        );
    }

    #[test]
    fn record_line_format() {
        let s = stmt("(a + a) = (a + a)");
        let o = check_proof(&s, &script("rw add_comm at ."), 32);
        let rec = VerificationRecord::new(3, &o, &RewardConfig::default());
        assert_eq!(
            rec.to_line(),
            r#"{"index":3,"status":"Success","first_failure":null,"warnings":[{"NoOpRewrite":0}],"reward":1.0}"#
        );
        assert_eq!(VerificationRecord::from_line(&rec.to_line()).unwrap(), rec);
    }
}
