//! The equational rewriting language: expressions, paths, rewrite rules,
//! tactics and proof scripts, with their text forms.
//!
//! Expressions are fully parenthesized binary trees over the variables
//! `a`, `b`, `c` and small natural-number constants:
//!
//! ```text
//! E := var | const | ( E + E ) | ( E * E )
//! ```
//!
//! A tactic rewrites the subterm at a path with one rule, forward or in
//! reverse. A proof script is a list of tactics, one per line:
//!
//! ```text
//! rw const_fold at L
//! rw <- add_comm at .
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum tree depth (a leaf has depth 1).
pub const MAX_DEPTH: usize = 8;
/// Largest constant an expression may contain.
pub const MAX_CONST: u8 = 99;
/// Longest path that can address a node in a tree of [`MAX_DEPTH`].
pub const MAX_PATH_LEN: usize = MAX_DEPTH - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("expression depth {depth} exceeds the cap of {MAX_DEPTH}")]
    Depth { depth: usize },
    #[error("line {line}: {message}")]
    ScriptParse { line: usize, message: String },
    #[error("line {line}: unknown rule `{name}`")]
    UnknownRule { line: usize, name: String },
    #[error("path descends into a leaf")]
    BadPath,
    #[error("rule pattern does not match the addressed subterm")]
    RuleMismatch,
    #[error("rule cannot be applied in reverse")]
    IllegalDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    A,
    B,
    C,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::A, Var::B, Var::C];

    pub fn name(self) -> char {
        match self {
            Var::A => 'a',
            Var::B => 'b',
            Var::C => 'c',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Var),
    Const(u8),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn constant(c: u8) -> Expr {
        Expr::Const(c)
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::Add(Box::new(l), Box::new(r))
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::Mul(Box::new(l), Box::new(r))
    }

    /// Depth counting nodes, so a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Add(l, r) | Expr::Mul(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Add(l, r) | Expr::Mul(l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn children(&self) -> Option<(&Expr, &Expr)> {
        match self {
            Expr::Add(l, r) | Expr::Mul(l, r) => Some((l, r)),
            _ => None,
        }
    }

    /// Evaluates the polynomial under an assignment of `a`, `b`, `c`.
    pub fn eval(&self, env: [i64; 3]) -> i64 {
        match self {
            Expr::Var(v) => env[v.index()],
            Expr::Const(c) => i64::from(*c),
            Expr::Add(l, r) => l.eval(env) + r.eval(env),
            Expr::Mul(l, r) => l.eval(env) * r.eval(env),
        }
    }

    /// Every valid path into this expression, in pre-order.
    pub fn paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        collect_paths(self, &mut cur, &mut out);
        out
    }
}

fn collect_paths(e: &Expr, cur: &mut Vec<Step>, out: &mut Vec<Path>) {
    out.push(Path(cur.clone()));
    if let Some((l, r)) = e.children() {
        cur.push(Step::L);
        collect_paths(l, cur, out);
        cur.pop();
        cur.push(Step::R);
        collect_paths(r, cur, out);
        cur.pop();
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Add(l, r) => write!(f, "({l} + {r})"),
            Expr::Mul(l, r) => write!(f, "({l} * {r})"),
        }
    }
}

impl FromStr for Expr {
    type Err = LangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

/// Canonical text form: fully parenthesized, single spaces around operators.
pub fn render_expr(e: &Expr) -> String {
    e.to_string()
}

pub fn parse_expr(text: &str) -> Result<Expr, LangError> {
    let mut p = ExprParser { src: text.as_bytes(), pos: 0 };
    let e = p.expr(1)?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl ExprParser<'_> {
    fn error(&self, message: &str) -> LangError {
        LangError::Parse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), LangError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", byte as char)))
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, LangError> {
        if depth > MAX_DEPTH {
            return Err(LangError::Depth { depth });
        }
        self.skip_ws();
        let Some(&c) = self.src.get(self.pos) else {
            return Err(self.error("unexpected end of input"));
        };
        match c {
            b'a' | b'b' | b'c' => {
                self.pos += 1;
                let v = match c {
                    b'a' => Var::A,
                    b'b' => Var::B,
                    _ => Var::C,
                };
                Ok(Expr::Var(v))
            }
            b'0'..=b'9' => {
                let start = self.pos;
                let mut value: u32 = 0;
                while let Some(d @ b'0'..=b'9') = self.src.get(self.pos) {
                    value = value * 10 + u32::from(d - b'0');
                    self.pos += 1;
                    if value > u32::from(MAX_CONST) {
                        return Err(LangError::Parse {
                            offset: start,
                            message: format!("constant exceeds {MAX_CONST}"),
                        });
                    }
                }
                Ok(Expr::Const(value as u8))
            }
            b'(' => {
                self.pos += 1;
                let l = self.expr(depth + 1)?;
                self.skip_ws();
                let op = match self.src.get(self.pos) {
                    Some(b'+') => b'+',
                    Some(b'*') => b'*',
                    _ => return Err(self.error("expected `+` or `*`")),
                };
                self.pos += 1;
                let r = self.expr(depth + 1)?;
                self.expect(b')')?;
                Ok(if op == b'+' { Expr::add(l, r) } else { Expr::mul(l, r) })
            }
            _ => Err(self.error("expected a variable, a constant, or `(`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Statement {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Statement {
    pub fn new(lhs: Expr, rhs: Expr) -> Self {
        Statement { lhs, rhs }
    }

    /// Parses `lhs = rhs`.
    pub fn parse(text: &str) -> Result<Statement, LangError> {
        let Some(eq) = text.find('=') else {
            return Err(LangError::Parse { offset: text.len(), message: "expected `=`".into() });
        };
        let lhs = parse_expr(&text[..eq])?;
        let rhs = parse_expr(&text[eq + 1..]).map_err(|e| match e {
            LangError::Parse { offset, message } => LangError::Parse { offset: offset + eq + 1, message },
            other => other,
        })?;
        Ok(Statement { lhs, rhs })
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    L,
    R,
}

/// Address of a subterm; the empty path is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Path(pub Vec<Step>);

impl Path {
    pub fn root() -> Path {
        Path(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.0
    }

    /// All paths of length at most `max_len`, ordered by length and then
    /// lexicographically (`.`, `L`, `R`, `L.L`, ...).
    pub fn all_up_to(max_len: usize) -> Vec<Path> {
        let mut out = vec![Path::root()];
        let mut layer = vec![Path::root()];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(layer.len() * 2);
            for p in &layer {
                for s in [Step::L, Step::R] {
                    let mut steps = p.0.clone();
                    steps.push(s);
                    next.push(Path(steps));
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str(".");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(match s {
                Step::L => "L",
                Step::R => "R",
            })?;
        }
        Ok(())
    }
}

impl FromStr for Path {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "." {
            return Ok(Path::root());
        }
        let steps = s
            .split('.')
            .map(|part| match part {
                "L" => Ok(Step::L),
                "R" => Ok(Step::R),
                _ => Err(format!("bad path `{s}`")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if steps.len() > MAX_PATH_LEN {
            return Err(format!("path `{s}` longer than {MAX_PATH_LEN}"));
        }
        Ok(Path(steps))
    }
}

pub fn subterm_at<'e>(e: &'e Expr, p: &Path) -> Result<&'e Expr, LangError> {
    let mut cur = e;
    for step in p.steps() {
        let (l, r) = cur.children().ok_or(LangError::BadPath)?;
        cur = match step {
            Step::L => l,
            Step::R => r,
        };
    }
    Ok(cur)
}

/// Rebuilds `e` with the subterm at `steps` replaced by `f(subterm)`.
fn replace_at(
    e: &Expr,
    steps: &[Step],
    f: &mut dyn FnMut(&Expr) -> Result<Expr, LangError>,
) -> Result<Expr, LangError> {
    let Some((first, rest)) = steps.split_first() else {
        return f(e);
    };
    match e {
        Expr::Add(l, r) | Expr::Mul(l, r) => {
            let (nl, nr) = match first {
                Step::L => (replace_at(l, rest, f)?, (**r).clone()),
                Step::R => ((**l).clone(), replace_at(r, rest, f)?),
            };
            Ok(match e {
                Expr::Add(..) => Expr::add(nl, nr),
                _ => Expr::mul(nl, nr),
            })
        }
        _ => Err(LangError::BadPath),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AddComm,
    MulComm,
    AddAssoc,
    MulAssoc,
    Distrib,
    AddZero,
    MulOne,
    MulZero,
    ConstFold,
}

impl Rule {
    pub const ALL: [Rule; 9] = [
        Rule::AddComm,
        Rule::MulComm,
        Rule::AddAssoc,
        Rule::MulAssoc,
        Rule::Distrib,
        Rule::AddZero,
        Rule::MulOne,
        Rule::MulZero,
        Rule::ConstFold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::AddComm => "add_comm",
            Rule::MulComm => "mul_comm",
            Rule::AddAssoc => "add_assoc",
            Rule::MulAssoc => "mul_assoc",
            Rule::Distrib => "distrib",
            Rule::AddZero => "add_zero",
            Rule::MulOne => "mul_one",
            Rule::MulZero => "mul_zero",
            Rule::ConstFold => "const_fold",
        }
    }

    pub fn from_name(name: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.name() == name)
    }

    /// `mul_zero` discards its left operand and `const_fold` has many
    /// preimages, so neither has a well-defined reverse.
    pub fn reversible(self) -> bool {
        !matches!(self, Rule::MulZero | Rule::ConstFold)
    }

    /// Pattern and replacement templates; `None` for `const_fold`, which is
    /// evaluated rather than matched.
    pub fn templates(self) -> Option<&'static (Template, Template)> {
        TEMPLATES[self as usize].as_ref()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rule template: holes bind arbitrary subterms and may repeat (the
/// reverse of `distrib` requires both products to share a factor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Template {
    Hole(usize),
    Lit(u8),
    Add(Box<Template>, Box<Template>),
    Mul(Box<Template>, Box<Template>),
}

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

fn hole(i: usize) -> Template {
    Template::Hole(i)
}

fn tadd(l: Template, r: Template) -> Template {
    Template::Add(Box::new(l), Box::new(r))
}

fn tmul(l: Template, r: Template) -> Template {
    Template::Mul(Box::new(l), Box::new(r))
}

static TEMPLATES: LazyLock<[Option<(Template, Template)>; 9]> = LazyLock::new(|| {
    [
        Some((tadd(hole(X), hole(Y)), tadd(hole(Y), hole(X)))),
        Some((tmul(hole(X), hole(Y)), tmul(hole(Y), hole(X)))),
        Some((
            tadd(tadd(hole(X), hole(Y)), hole(Z)),
            tadd(hole(X), tadd(hole(Y), hole(Z))),
        )),
        Some((
            tmul(tmul(hole(X), hole(Y)), hole(Z)),
            tmul(hole(X), tmul(hole(Y), hole(Z))),
        )),
        Some((
            tmul(hole(X), tadd(hole(Y), hole(Z))),
            tadd(tmul(hole(X), hole(Y)), tmul(hole(X), hole(Z))),
        )),
        Some((tadd(hole(X), Template::Lit(0)), hole(X))),
        Some((tmul(hole(X), Template::Lit(1)), hole(X))),
        Some((tmul(hole(X), Template::Lit(0)), Template::Lit(0))),
        None,
    ]
});

fn match_template<'e>(t: &Template, e: &'e Expr, binds: &mut [Option<&'e Expr>; 3]) -> bool {
    match (t, e) {
        (Template::Hole(i), _) => match binds[*i] {
            Some(bound) => bound == e,
            None => {
                binds[*i] = Some(e);
                true
            }
        },
        (Template::Lit(v), Expr::Const(c)) => v == c,
        (Template::Add(tl, tr), Expr::Add(l, r)) | (Template::Mul(tl, tr), Expr::Mul(l, r)) => {
            match_template(tl, l, binds) && match_template(tr, r, binds)
        }
        _ => false,
    }
}

fn instantiate(t: &Template, binds: &[Option<&Expr>; 3]) -> Expr {
    match t {
        Template::Hole(i) => binds[*i].expect("replacement hole bound by pattern").clone(),
        Template::Lit(v) => Expr::Const(*v),
        Template::Add(l, r) => Expr::add(instantiate(l, binds), instantiate(r, binds)),
        Template::Mul(l, r) => Expr::mul(instantiate(l, binds), instantiate(r, binds)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Fwd,
    Rev,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Fwd => Direction::Rev,
            Direction::Rev => Direction::Fwd,
        }
    }
}

/// Rewrites a single node (no path navigation).
pub fn rewrite_node(rule: Rule, dir: Direction, e: &Expr) -> Result<Expr, LangError> {
    if dir == Direction::Rev && !rule.reversible() {
        return Err(LangError::IllegalDirection);
    }
    let Some((pattern, replacement)) = rule.templates() else {
        return const_fold(e);
    };
    let (from, to) = match dir {
        Direction::Fwd => (pattern, replacement),
        Direction::Rev => (replacement, pattern),
    };
    let mut binds = [None; 3];
    if match_template(from, e, &mut binds) {
        Ok(instantiate(to, &binds))
    } else {
        Err(LangError::RuleMismatch)
    }
}

fn const_fold(e: &Expr) -> Result<Expr, LangError> {
    let value = match e {
        Expr::Add(l, r) => match (&**l, &**r) {
            (Expr::Const(x), Expr::Const(y)) => u32::from(*x) + u32::from(*y),
            _ => return Err(LangError::RuleMismatch),
        },
        Expr::Mul(l, r) => match (&**l, &**r) {
            (Expr::Const(x), Expr::Const(y)) => u32::from(*x) * u32::from(*y),
            _ => return Err(LangError::RuleMismatch),
        },
        _ => return Err(LangError::RuleMismatch),
    };
    if value > u32::from(MAX_CONST) {
        return Err(LangError::RuleMismatch);
    }
    Ok(Expr::Const(value as u8))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tactic {
    pub rule: Rule,
    pub dir: Direction,
    pub at: Path,
}

impl Tactic {
    pub fn new(rule: Rule, dir: Direction, at: Path) -> Tactic {
        Tactic { rule, dir, at }
    }

    pub fn fwd(rule: Rule, at: Path) -> Tactic {
        Tactic::new(rule, Direction::Fwd, at)
    }

    pub fn rev(rule: Rule, at: Path) -> Tactic {
        Tactic::new(rule, Direction::Rev, at)
    }

    pub fn inverse(&self) -> Tactic {
        Tactic::new(self.rule, self.dir.flip(), self.at.clone())
    }
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dir {
            Direction::Fwd => write!(f, "rw {} at {}", self.rule, self.at),
            Direction::Rev => write!(f, "rw <- {} at {}", self.rule, self.at),
        }
    }
}

pub fn apply_tactic(e: &Expr, t: &Tactic) -> Result<Expr, LangError> {
    if t.dir == Direction::Rev && !t.rule.reversible() {
        return Err(LangError::IllegalDirection);
    }
    let out = replace_at(e, t.at.steps(), &mut |sub| rewrite_node(t.rule, t.dir, sub))?;
    let depth = out.depth();
    if depth > MAX_DEPTH {
        return Err(LangError::Depth { depth });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ProofScript {
    pub tactics: Vec<Tactic>,
}

impl ProofScript {
    pub fn new(tactics: Vec<Tactic>) -> Self {
        ProofScript { tactics }
    }

    pub fn len(&self) -> usize {
        self.tactics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tactics.is_empty()
    }
}

impl fmt::Display for ProofScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tactics {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Renders one tactic per line, newline-terminated.
pub fn render_script(p: &ProofScript) -> String {
    p.to_string()
}

/// Parses a script. Blank lines and `--` comments are skipped; line numbers
/// in errors are 1-based.
pub fn parse_script(text: &str) -> Result<ProofScript, LangError> {
    let mut tactics = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        tactics.push(parse_tactic_line(line, i + 1)?);
    }
    Ok(ProofScript { tactics })
}

fn parse_tactic_line(line: &str, lineno: usize) -> Result<Tactic, LangError> {
    let bad = |message: &str| LangError::ScriptParse { line: lineno, message: message.to_string() };
    let mut words = line.split_whitespace();
    if words.next() != Some("rw") {
        return Err(bad("expected `rw`"));
    }
    let mut word = words.next().ok_or_else(|| bad("missing rule"))?;
    let dir = if word == "<-" {
        word = words.next().ok_or_else(|| bad("missing rule"))?;
        Direction::Rev
    } else {
        Direction::Fwd
    };
    let rule = Rule::from_name(word)
        .ok_or_else(|| LangError::UnknownRule { line: lineno, name: word.to_string() })?;
    if words.next() != Some("at") {
        return Err(bad("expected `at`"));
    }
    let path_text = words.next().ok_or_else(|| bad("missing path"))?;
    let at = path_text.parse::<Path>().map_err(|m| bad(&m))?;
    if words.next().is_some() {
        return Err(bad("trailing tokens"));
    }
    Ok(Tactic { rule, dir, at })
}
