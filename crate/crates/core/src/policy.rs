//! Autoregressive tactic policy.
//!
//! One token is one whole tactic (rule, direction, path with at most three
//! steps) or `EOS`. The network is a single tanh hidden layer over the
//! concatenation of statement features and a one-hot encoding of the last
//! [`Arch::window`] tokens of the prefix, followed by a softmax over the
//! vocabulary. Gradients are computed by hand.
//!
//! Parameter layout in the flat vector, with `I = features + window * slots`:
//!
//! ```text
//! w1: I x H   (input-major, one contiguous H-row per input)
//! b1: H
//! w2: V x H
//! b2: V
//! ```

use std::collections::HashMap;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::lang::{apply_tactic, subterm_at, Expr, Path, ProofScript, Statement, Tactic};
use crate::verifier::rule_directions;

/// Longest tactic path representable as a token.
pub const TOKEN_PATH_LEN: usize = 3;
/// Temperatures below this decode greedily.
pub const GREEDY_BELOW: f64 = 1e-4;

pub type Token = u16;

/// The tactic vocabulary. Ids are dense: `pair * paths + path`, where pairs
/// follow the rule table order (forward before reverse) and paths are
/// ordered by length, then lexicographically. `EOS` comes last.
pub struct Vocab {
    tactics: Vec<Tactic>,
    ids: HashMap<Tactic, Token>,
    paths: Vec<Path>,
    pairs: usize,
}

static VOCAB: LazyLock<Vocab> = LazyLock::new(Vocab::build);

impl Vocab {
    fn build() -> Vocab {
        let paths = Path::all_up_to(TOKEN_PATH_LEN);
        let pairs = rule_directions();
        let mut tactics = Vec::with_capacity(pairs.len() * paths.len());
        for &(rule, dir) in &pairs {
            for p in &paths {
                tactics.push(Tactic::new(rule, dir, p.clone()));
            }
        }
        let ids = tactics.iter().enumerate().map(|(i, t)| (t.clone(), i as Token)).collect();
        Vocab { tactics, ids, paths, pairs: pairs.len() }
    }

    pub fn get() -> &'static Vocab {
        &VOCAB
    }

    /// Number of output tokens, including `EOS`.
    pub fn len(&self) -> usize {
        self.tactics.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_tactics(&self) -> usize {
        self.tactics.len()
    }

    pub fn eos(&self) -> Token {
        self.tactics.len() as Token
    }

    /// Left-padding token for the context window (never emitted).
    pub fn begin(&self) -> Token {
        self.tactics.len() as Token
    }

    /// Distinct values a context slot can hold: every tactic plus `BEGIN`.
    pub fn slot_size(&self) -> usize {
        self.tactics.len() + 1
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs
    }

    pub fn tactic(&self, tok: Token) -> Option<&Tactic> {
        self.tactics.get(tok as usize)
    }

    pub fn tactics(&self) -> &[Tactic] {
        &self.tactics
    }

    pub fn id(&self, t: &Tactic) -> Option<Token> {
        self.ids.get(t).copied()
    }
}

/// Tokens for a script followed by `EOS`; `None` if a path is too long.
pub fn encode_script(p: &ProofScript) -> Option<Vec<Token>> {
    let vocab = Vocab::get();
    let mut out = p.tactics.iter().map(|t| vocab.id(t)).collect::<Option<Vec<_>>>()?;
    out.push(vocab.eos());
    Some(out)
}

/// Tactic tokens to a script; `EOS` and anything after it are dropped.
pub fn decode(tokens: &[Token]) -> ProofScript {
    let vocab = Vocab::get();
    ProofScript::new(tokens.iter().map_while(|&t| vocab.tactic(t).cloned()).collect())
}

const NODE_KINDS: usize = 8;
const PATTERN_KINDS: usize = 32;

/// Feature dimension produced by [`encode_statement`].
pub fn feature_dim() -> usize {
    let v = Vocab::get();
    let paths = v.paths().len();
    2 * NODE_KINDS + 2 + v.num_pairs() + 2 * PATTERN_KINDS + 1 + v.num_tactics() + paths + 2 * NODE_KINDS * paths
}

fn node_kind(e: &Expr) -> usize {
    match e {
        Expr::Var(v) => v.index(),
        Expr::Const(0) => 3,
        Expr::Const(1) => 4,
        Expr::Const(_) => 5,
        Expr::Add(..) => 6,
        Expr::Mul(..) => 7,
    }
}

fn coarse_kind(e: &Expr) -> usize {
    match e {
        Expr::Var(_) => 0,
        Expr::Const(_) => 1,
        Expr::Add(..) => 2,
        Expr::Mul(..) => 3,
    }
}

fn count_shapes(e: &Expr, kinds: &mut [f64], patterns: &mut [f64]) {
    kinds[node_kind(e)] += 1.0;
    if let Some((l, r)) = e.children() {
        let op = usize::from(matches!(e, Expr::Mul(..)));
        patterns[op * 16 + coarse_kind(l) * 4 + coarse_kind(r)] += 1.0;
        count_shapes(l, kinds, patterns);
        count_shapes(r, kinds, patterns);
    }
}

/// Fixed-size statement features:
/// node-kind counts per side, depth per side, which rule directions apply
/// anywhere in the lhs, (operator, child kind, child kind) counts per side,
/// whether the sides already agree, which tactic tokens apply to the lhs,
/// per-path agreement between the sides, and the node kind found at every
/// token-addressable path of each side.
pub fn encode_statement(s: &Statement) -> Vec<f64> {
    let vocab = Vocab::get();
    let mut x = Vec::with_capacity(feature_dim());

    for side in [&s.lhs, &s.rhs] {
        let mut kinds = [0.0; NODE_KINDS];
        let mut pats = [0.0; PATTERN_KINDS];
        count_shapes(side, &mut kinds, &mut pats);
        x.extend(kinds.iter().map(|c| c / 4.0));
    }
    x.push(s.lhs.depth() as f64 / 8.0);
    x.push(s.rhs.depth() as f64 / 8.0);

    let applicable: Vec<bool> =
        vocab.tactics().iter().map(|t| apply_tactic(&s.lhs, t).is_ok()).collect();
    let per_pair = vocab.paths().len();
    let lhs_paths: Vec<Path> = s.lhs.paths();
    let pairs = rule_directions();
    for (pi, &(rule, dir)) in pairs.iter().enumerate() {
        // any path, including ones too deep for a token
        let any_token = applicable[pi * per_pair..(pi + 1) * per_pair].iter().any(|&a| a);
        let any = any_token
            || lhs_paths
                .iter()
                .filter(|p| p.len() > TOKEN_PATH_LEN)
                .any(|p| apply_tactic(&s.lhs, &Tactic::new(rule, dir, p.clone())).is_ok());
        x.push(f64::from(u8::from(any)));
    }

    for side in [&s.lhs, &s.rhs] {
        let mut kinds = [0.0; NODE_KINDS];
        let mut pats = [0.0; PATTERN_KINDS];
        count_shapes(side, &mut kinds, &mut pats);
        x.extend(pats.iter().map(|c| c / 2.0));
    }
    x.push(f64::from(u8::from(s.lhs == s.rhs)));
    x.extend(applicable.iter().map(|&a| f64::from(u8::from(a))));

    for p in vocab.paths() {
        let l = subterm_at(&s.lhs, p).ok();
        let r = subterm_at(&s.rhs, p).ok();
        x.push(f64::from(u8::from(l.is_some() && l == r)));
    }
    for side in [&s.lhs, &s.rhs] {
        for p in vocab.paths() {
            let mut slot = [0.0; NODE_KINDS];
            if let Ok(sub) = subterm_at(side, p) {
                slot[node_kind(sub)] = 1.0;
            }
            x.extend(slot);
        }
    }
    debug_assert_eq!(x.len(), feature_dim());
    x
}

/// Architecture descriptor; the parameter count is a pure function of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub window: usize,
    pub features: usize,
    pub hidden: usize,
    pub vocab: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Arch::with(4, 64)
    }
}

impl Arch {
    pub fn with(window: usize, hidden: usize) -> Arch {
        Arch { window, features: feature_dim(), hidden, vocab: Vocab::get().len() }
    }

    pub fn inputs(&self) -> usize {
        self.features + self.window * Vocab::get().slot_size()
    }

    pub fn num_params(&self) -> usize {
        self.inputs() * self.hidden + self.hidden + self.vocab * self.hidden + self.vocab
    }

    fn offsets(&self) -> Offsets {
        let w1 = 0;
        let b1 = w1 + self.inputs() * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.vocab * self.hidden;
        Offsets { b1, w2, b2 }
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { temperature: 1.0, max_len: 8, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn greedy(max_len: usize) -> Self {
        SamplerConfig { temperature: GREEDY_BELOW / 2.0, max_len, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SamplerConfig { seed, ..self }
    }
}

/// Mixes a base seed with stream indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: Arch,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(arch: Arch) -> PolicyParams {
        PolicyParams { arch, theta: vec![0.0; arch.num_params()] }
    }

    /// Weights uniform in [-0.05, 0.05], biases zero.
    pub fn init(arch: Arch, seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::zeros(arch);
        let o = arch.offsets();
        for (i, w) in p.theta.iter_mut().enumerate() {
            let is_bias = (o.b1..o.w2).contains(&i) || i >= o.b2;
            if !is_bias {
                *w = rng.random_range(-0.05..=0.05);
            }
        }
        p
    }

    /// Precomputes the statement half of the network input.
    pub fn prepare<'p>(&'p self, s: &Statement) -> Prepared<'p> {
        self.prepare_features(encode_statement(s))
    }

    pub fn prepare_features(&self, features: Vec<f64>) -> Prepared<'_> {
        assert_eq!(features.len(), self.arch.features, "feature dimension");
        let h = self.arch.hidden;
        let o = self.arch.offsets();
        let mut base = self.theta[o.b1..o.b1 + h].to_vec();
        let active: Vec<usize> = (0..features.len()).filter(|&j| features[j] != 0.0).collect();
        for &j in &active {
            let row = &self.theta[j * h..(j + 1) * h];
            let xj = features[j];
            for (b, w) in base.iter_mut().zip(row) {
                *b += xj * w;
            }
        }
        Prepared { params: self, features, active, base }
    }

    pub fn step_logprobs(&self, s: &Statement, prefix: &[Token]) -> Vec<f64> {
        self.prepare(s).step_logprobs(prefix)
    }

    pub fn sample(&self, s: &Statement, cfg: &SamplerConfig) -> Vec<Token> {
        self.prepare(s).sample(cfg).0
    }

    pub fn seq_logprob(&self, s: &Statement, o: &[Token]) -> (f64, Vec<f64>) {
        self.prepare(s).seq_logprob(o)
    }

    pub fn grad_seq_logprob(&self, s: &Statement, o: &[Token]) -> Vec<f64> {
        let mut g = vec![0.0; self.theta.len()];
        let prep = self.prepare(s);
        prep.accumulate_grad(o, &vec![1.0; o.len()], &mut g);
        g
    }

    /// One gradient-ascent step on the mean sequence log-likelihood.
    pub fn sft_step(&self, batch: &[(Statement, Vec<Token>)], lr: f64) -> PolicyParams {
        assert!(!batch.is_empty(), "sft batch must be non-empty");
        let grad = ordered_grad_sum(self.theta.len(), batch.len(), |i, g| {
            let (s, o) = &batch[i];
            self.prepare(s).accumulate_grad(o, &vec![1.0; o.len()], g);
        });
        let scale = lr / batch.len() as f64;
        let mut next = self.clone();
        for (t, g) in next.theta.iter_mut().zip(&grad) {
            *t += scale * g;
        }
        next
    }

    /// Adds `step * direction` to the parameters.
    pub fn ascend(&self, direction: &[f64], step: f64) -> PolicyParams {
        let mut next = self.clone();
        for (t, g) in next.theta.iter_mut().zip(direction) {
            *t += step * g;
        }
        next
    }
}

/// Sums per-item gradient contributions in a fixed order so the result does
/// not depend on the number of rayon threads.
pub fn ordered_grad_sum<F>(dim: usize, n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    const CHUNK: usize = 8;
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut g = vec![0.0; dim];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut g);
            }
            g
        })
        .collect();
    let mut total = vec![0.0; dim];
    for g in &chunks {
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    total
}

/// A policy bound to one statement.
pub struct Prepared<'p> {
    params: &'p PolicyParams,
    features: Vec<f64>,
    active: Vec<usize>,
    base: Vec<f64>,
}

struct StepState {
    slots: Vec<usize>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Entropy (nats) of softmax(logits / temperature).
pub fn entropy_at(logits: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let lp = log_softmax(&scaled);
    -lp.iter().map(|l| l.exp() * l).sum::<f64>()
}

impl Prepared<'_> {
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Input indices of the context slots for the next step.
    fn slot_inputs(&self, prefix: &[Token]) -> Vec<usize> {
        let arch = &self.params.arch;
        let vocab = Vocab::get();
        let slot = vocab.slot_size();
        (0..arch.window)
            .map(|k| {
                // slot 0 holds the most recent token
                let tok = if k < prefix.len() { prefix[prefix.len() - 1 - k] } else { vocab.begin() };
                arch.features + k * slot + tok as usize
            })
            .collect()
    }

    fn forward(&self, prefix: &[Token]) -> StepState {
        let arch = &self.params.arch;
        let theta = &self.params.theta;
        let h = arch.hidden;
        let o = arch.offsets();
        let slots = self.slot_inputs(prefix);
        let mut pre = self.base.clone();
        for &j in &slots {
            for (p, w) in pre.iter_mut().zip(&theta[j * h..(j + 1) * h]) {
                *p += w;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let logits = (0..arch.vocab)
            .map(|v| {
                let row = &theta[o.w2 + v * h..o.w2 + (v + 1) * h];
                theta[o.b2 + v] + row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        StepState { slots, hidden, logits }
    }

    pub fn logits(&self, prefix: &[Token]) -> Vec<f64> {
        self.forward(prefix).logits
    }

    pub fn step_logprobs(&self, prefix: &[Token]) -> Vec<f64> {
        log_softmax(&self.forward(prefix).logits)
    }

    pub fn step_entropy(&self, prefix: &[Token], temperature: f64) -> f64 {
        entropy_at(&self.forward(prefix).logits, temperature)
    }

    /// Samples a token sequence; also returns the untempered per-token
    /// log-probabilities of the sampled tokens.
    pub fn sample(&self, cfg: &SamplerConfig) -> (Vec<Token>, Vec<f64>) {
        self.sample_after(&[], cfg)
    }

    /// Continues sampling after a fixed `prefix`, which conditions the
    /// context window but is not part of the returned tokens.
    pub fn sample_after(&self, prefix: &[Token], cfg: &SamplerConfig) -> (Vec<Token>, Vec<f64>) {
        let eos = Vocab::get().eos();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut context = prefix.to_vec();
        let mut out = Vec::new();
        let mut lps = Vec::new();
        while out.len() < cfg.max_len {
            let logits = self.forward(&context).logits;
            let lp = log_softmax(&logits);
            let tok = if cfg.temperature < GREEDY_BELOW {
                argmax(&logits)
            } else {
                let scaled: Vec<f64> = logits.iter().map(|z| z / cfg.temperature).collect();
                let probs: Vec<f64> = log_softmax(&scaled).iter().map(|l| l.exp()).collect();
                draw(&probs, rng.random::<f64>())
            };
            out.push(tok as Token);
            lps.push(lp[tok]);
            if tok as Token == eos {
                break;
            }
            context.push(tok as Token);
        }
        (out, lps)
    }

    pub fn seq_logprob(&self, o: &[Token]) -> (f64, Vec<f64>) {
        self.seq_logprob_after(&[], o)
    }

    pub fn seq_logprob_after(&self, prefix: &[Token], o: &[Token]) -> (f64, Vec<f64>) {
        let mut context = prefix.to_vec();
        let per: Vec<f64> = o
            .iter()
            .map(|&tok| {
                let lp = self.step_logprobs(&context)[tok as usize];
                context.push(tok);
                lp
            })
            .collect();
        (per.iter().sum(), per)
    }

    /// Adds the gradient of `sum_t coefs[t] * log pi(o_t | prefix)` to `grad`.
    pub fn accumulate_grad(&self, o: &[Token], coefs: &[f64], grad: &mut [f64]) {
        assert_eq!(o.len(), coefs.len());
        let arch = &self.params.arch;
        let theta = &self.params.theta;
        let h = arch.hidden;
        let off = arch.offsets();
        let mut dbase = vec![0.0; h];
        let mut dh = vec![0.0; h];
        for (t, (&tok, &c)) in o.iter().zip(coefs).enumerate() {
            if c == 0.0 {
                continue;
            }
            let st = self.forward(&o[..t]);
            let lp = log_softmax(&st.logits);
            dh.iter_mut().for_each(|v| *v = 0.0);
            for v in 0..arch.vocab {
                let onehot = if v == tok as usize { 1.0 } else { 0.0 };
                let dz = c * (onehot - lp[v].exp());
                grad[off.b2 + v] += dz;
                let row = off.w2 + v * h;
                for k in 0..h {
                    grad[row + k] += dz * st.hidden[k];
                    dh[k] += dz * theta[row + k];
                }
            }
            for k in 0..h {
                let dpre = dh[k] * (1.0 - st.hidden[k] * st.hidden[k]);
                dbase[k] += dpre;
                for &j in &st.slots {
                    grad[j * h + k] += dpre;
                }
            }
        }
        for k in 0..h {
            grad[off.b1 + k] += dbase[k];
        }
        for &j in &self.active {
            let xj = self.features[j];
            for k in 0..h {
                grad[j * h + k] += xj * dbase[k];
            }
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

const MAGIC: &[u8; 8] = b"RWPOLICY";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a policy checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("architecture mismatch: checkpoint {found:?}, expected {expected:?}")]
    ArchMismatch { found: Arch, expected: Arch },
    #[error("checkpoint truncated or has trailing bytes")]
    Length,
}

impl PolicyParams {
    /// Header (magic, version, window, features, hidden, vocab, count)
    /// followed by the parameters as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.theta.len());
        out.extend_from_slice(MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            self.arch.window as u32,
            self.arch.features as u32,
            self.arch.hidden as u32,
            self.arch.vocab as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.theta.len() as u64).to_le_bytes());
        for t in &self.theta {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint; features and vocabulary must match this build.
    pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParams, CheckpointError> {
        if bytes.len() < 36 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        if word(0) != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(word(0)));
        }
        let found = Arch {
            window: word(1) as usize,
            features: word(2) as usize,
            hidden: word(3) as usize,
            vocab: word(4) as usize,
        };
        let expected = Arch::with(found.window, found.hidden);
        if found != expected {
            return Err(CheckpointError::ArchMismatch { found, expected });
        }
        let count = u64::from_le_bytes(bytes[28..36].try_into().unwrap()) as usize;
        let body = &bytes[36..];
        if count != found.num_params() || body.len() != 8 * count {
            return Err(CheckpointError::Length);
        }
        let theta = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(PolicyParams { arch: found, theta })
    }

    pub fn from_bytes_expecting(bytes: &[u8], expected: &Arch) -> Result<PolicyParams, CheckpointError> {
        let p = PolicyParams::from_bytes(bytes)?;
        if &p.arch != expected {
            return Err(CheckpointError::ArchMismatch { found: p.arch, expected: *expected });
        }
        Ok(p)
    }
}
