//! Line-delimited corpus records. Each line is one JSON object with a
//! fixed field order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{ProofRecord, RepairPair, StatementRecord};
use crate::lang::{parse_expr, render_expr, render_script, Statement};

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct CorpusError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StatementLine {
    id: usize,
    lhs: String,
    rhs: String,
    source: String,
    scramble_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pass_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pass_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_proof_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairLine {
    pub statement_id: usize,
    pub failing_script: String,
    pub first_failure: usize,
    pub repaired_script: String,
}

impl From<&RepairPair> for RepairLine {
    fn from(p: &RepairPair) -> Self {
        RepairLine {
            statement_id: p.statement_id,
            failing_script: render_script(&p.failing),
            first_failure: p.first_failure(),
            repaired_script: render_script(&p.repaired),
        }
    }
}

pub fn statement_to_line(r: &StatementRecord) -> String {
    let line = StatementLine {
        id: r.id,
        lhs: render_expr(&r.statement.lhs),
        rhs: render_expr(&r.statement.rhs),
        source: r.source.clone(),
        scramble_steps: r.scramble_steps,
        pass_count: r.pass_count,
        pass_n: r.pass_n,
        min_proof_len: r.min_proof_len,
    };
    serde_json::to_string(&line).expect("statement line serializes")
}

fn parse_lines<T, F>(text: &str, mut f: F) -> Result<Vec<T>, CorpusError>
where
    F: FnMut(&str) -> Result<T, String>,
{
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| f(l).map_err(|message| CorpusError { line: i + 1, message }))
        .collect()
}

pub fn read_statements(text: &str) -> Result<Vec<StatementRecord>, CorpusError> {
    parse_lines(text, |l| {
        let s: StatementLine = serde_json::from_str(l).map_err(|e| e.to_string())?;
        let lhs = parse_expr(&s.lhs).map_err(|e| format!("lhs: {e}"))?;
        let rhs = parse_expr(&s.rhs).map_err(|e| format!("rhs: {e}"))?;
        if let (Some(c), Some(n)) = (s.pass_count, s.pass_n) {
            if c > n {
                return Err(format!("pass_count {c} exceeds sample count {n}"));
            }
        }
        Ok(StatementRecord {
            id: s.id,
            statement: Statement::new(lhs, rhs),
            source: s.source,
            scramble_steps: s.scramble_steps,
            pass_count: s.pass_count,
            pass_n: s.pass_n,
            min_proof_len: s.min_proof_len,
        })
    })
}

pub fn write_statements(records: &[StatementRecord]) -> String {
    records.iter().map(|r| statement_to_line(r) + "\n").collect()
}

pub fn write_proofs(proofs: &[ProofRecord]) -> String {
    proofs.iter().map(|p| serde_json::to_string(p).expect("proof line serializes") + "\n").collect()
}

pub fn read_proofs(text: &str) -> Result<Vec<ProofRecord>, CorpusError> {
    parse_lines(text, |l| {
        let p: ProofRecord = serde_json::from_str(l).map_err(|e| e.to_string())?;
        crate::lang::parse_script(&p.script).map_err(|e| format!("script: {e}"))?;
        Ok(p)
    })
}

pub fn write_repairs(pairs: &[RepairPair]) -> String {
    pairs
        .iter()
        .map(|p| serde_json::to_string(&RepairLine::from(p)).expect("repair line serializes") + "\n")
        .collect()
}

pub fn read_repairs(text: &str) -> Result<Vec<RepairLine>, CorpusError> {
    parse_lines(text, |l| {
        let r: RepairLine = serde_json::from_str(l).map_err(|e| e.to_string())?;
        for s in [&r.failing_script, &r.repaired_script] {
            crate::lang::parse_script(s).map_err(|e| format!("script: {e}"))?;
        }
        Ok(r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::gen_statements;

    #[test]
    fn statement_line_layout() {
        let s = Statement::parse("((1 + 2) + c) = (c + 3)").unwrap();
        let r = StatementRecord::new(4, s, "gen-d3-s2", 2);
        assert_eq!(
            statement_to_line(&r),
            r#"{"id":4,"lhs":"((1 + 2) + c)","rhs":"(c + 3)","source":"gen-d3-s2","scramble_steps":2}"#
        );
    }

    #[test]
    fn statements_roundtrip() {
        let mut recs = gen_statements(1, 25, 3, 3).unwrap();
        recs[3].pass_count = Some(4);
        recs[3].pass_n = Some(32);
        let text = write_statements(&recs);
        assert_eq!(read_statements(&text).unwrap(), recs);
    }

    #[test]
    fn errors_report_line_numbers() {
        let good = statement_to_line(&StatementRecord::new(0, Statement::parse("a = a").unwrap(), "t", 0));
        let text = format!("{good}\n{{\"id\":1,\"lhs\":\"(a +\",\"rhs\":\"a\",\"source\":\"t\",\"scramble_steps\":0}}\n");
        let err = read_statements(&text).unwrap_err();
        assert_eq!(err.line, 2);
        let err = read_proofs("{\"statement_id\":0,\"script\":\"rw nope at .\",\"verified\":true}").unwrap_err();
        assert_eq!(err.line, 1);
    }
}
