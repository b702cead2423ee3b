//! Probabilistic context-free grammar tooling: the built-in `cfg3b` grammar,
//! leftmost sentence sampling with recorded derivations, length statistics,
//! the masked-token corruption pipeline, and corpus/dataset writers.
//!
//! Symbols are small integers; terminal and nonterminal ids share one space
//! and must not overlap. Token id 0 is reserved for the mask token and never
//! appears in a grammar.

use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::util::percentile_nearest_rank;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

/// Reserved id substituted at mask-token positions.
pub const MASK_TOKEN: Symbol = 0;

/// Expansion-depth guard that sampling never hits on depth-bounded grammars.
pub const DEFAULT_DEPTH_GUARD: u32 = 64;

pub type Symbol = u32;

/// One production `head -> body` with its selection probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: Symbol,
    pub body: Vec<Symbol>,
    pub probability: f64,
}

/// A validated probabilistic context-free grammar.
#[derive(Debug, Clone)]
pub struct Grammar {
    id: String,
    terminals: BTreeSet<Symbol>,
    nonterminals: BTreeSet<Symbol>,
    start: Symbol,
    rules: Vec<Rule>,
    by_head: BTreeMap<Symbol, Vec<usize>>,
}

impl Grammar {
    /// Build and validate a grammar. The nonterminal set is the set of rule
    /// heads; every body symbol must be a head or a terminal, heads must not
    /// be terminals, each head's probabilities must sum to 1 (within 1e-12),
    /// and the start symbol must have at least one rule.
    pub fn new(id: &str, terminals: &[Symbol], start: Symbol, rules: Vec<Rule>) -> Result<Self> {
        let terminals: BTreeSet<Symbol> = terminals.iter().copied().collect();
        let nonterminals: BTreeSet<Symbol> = rules.iter().map(|r| r.head).collect();
        if let Some(overlap) = nonterminals.intersection(&terminals).next() {
            return Err(Error::Config(format!(
                "symbol {overlap} is both a rule head and a terminal"
            )));
        }
        if terminals.contains(&MASK_TOKEN) || nonterminals.contains(&MASK_TOKEN) {
            return Err(Error::Config(format!(
                "symbol {MASK_TOKEN} is reserved for the mask token"
            )));
        }
        if !nonterminals.contains(&start) {
            return Err(Error::Config(format!("start symbol {start} has no rules")));
        }
        let mut by_head: BTreeMap<Symbol, Vec<usize>> = BTreeMap::new();
        for (idx, rule) in rules.iter().enumerate() {
            if rule.body.is_empty() {
                return Err(Error::Config(format!("rule {idx} for head {} is empty", rule.head)));
            }
            if !(rule.probability.is_finite() && (0.0..=1.0).contains(&rule.probability)) {
                return Err(Error::Config(format!(
                    "rule {idx} probability {} is outside [0, 1]",
                    rule.probability
                )));
            }
            for &sym in &rule.body {
                if !nonterminals.contains(&sym) && !terminals.contains(&sym) {
                    return Err(Error::Config(format!(
                        "rule {idx} references unknown symbol {sym}"
                    )));
                }
            }
            by_head.entry(rule.head).or_default().push(idx);
        }
        for (&head, idxs) in &by_head {
            let total: f64 = idxs.iter().map(|&i| rules[i].probability).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "probabilities for head {head} sum to {total}, expected 1"
                )));
            }
        }
        Ok(Self { id: id.to_string(), terminals, nonterminals, start, rules, by_head })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn start(&self) -> Symbol {
        self.start
    }

    pub fn terminals(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.terminals.iter().copied()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.nonterminals.iter().copied()
    }

    pub fn is_terminal(&self, sym: Symbol) -> bool {
        self.terminals.contains(&sym)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule_indices_for(&self, head: Symbol) -> &[usize] {
        self.by_head.get(&head).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The 32-rule benchmark grammar over vocabulary {1, 2, 3} with start symbol
/// 22 and two equally likely productions per nonterminal. The symbol ids run
/// in strict tiers (22; 19-21; 16-18; 13-15; 10-12; 7-9; terminals), so every
/// derivation reaches the terminals in exactly seven tiers.
pub fn cfg3b() -> Grammar {
    const TABLE: &[(Symbol, &[Symbol])] = &[
        (22, &[21, 20]),
        (22, &[20, 19]),
        (19, &[16, 17, 18]),
        (19, &[17, 18, 16]),
        (20, &[17, 16, 18]),
        (20, &[16, 17]),
        (21, &[18, 16]),
        (21, &[16, 18, 17]),
        (16, &[15, 13]),
        (16, &[13, 15, 14]),
        (17, &[14, 13, 15]),
        (17, &[15, 13, 14]),
        (18, &[15, 14, 13]),
        (18, &[14, 13]),
        (13, &[11, 12]),
        (13, &[12, 11]),
        (14, &[11, 10, 12]),
        (14, &[10, 11, 12]),
        (15, &[12, 11, 10]),
        (15, &[11, 12, 10]),
        (10, &[7, 9, 8]),
        (10, &[9, 8, 7]),
        (11, &[8, 7, 9]),
        (11, &[7, 8, 9]),
        (12, &[8, 9, 7]),
        (12, &[9, 7, 8]),
        (7, &[3, 1]),
        (7, &[1, 2, 3]),
        (8, &[3, 2]),
        (8, &[3, 1, 2]),
        (9, &[3, 2, 1]),
        (9, &[2, 1]),
    ];
    let rules = TABLE
        .iter()
        .map(|&(head, body)| Rule { head, body: body.to_vec(), probability: 0.5 })
        .collect();
    Grammar::new("cfg3b", &[1, 2, 3], 22, rules).expect("built-in grammar is valid")
}

/// A sampled sentence together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub tokens: Vec<Symbol>,
    /// Natural-log probability of the derivation tree.
    pub log_prob: f64,
    /// Global rule indices in leftmost expansion order.
    pub rules_used: Vec<usize>,
    /// Deepest tier reached, counting the start symbol as tier 1 and each
    /// expansion as one tier down; terminals sit on the tier below the rule
    /// that emitted them.
    pub depth: u32,
}

impl Derivation {
    /// Re-run the recorded leftmost expansion and return the tokens it
    /// yields. A derivation is internally consistent exactly when this equals
    /// `self.tokens`.
    pub fn replay(&self, grammar: &Grammar) -> Result<Vec<Symbol>> {
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut stack = vec![grammar.start()];
        let mut next_rule = 0usize;
        while let Some(sym) = stack.pop() {
            if grammar.is_terminal(sym) {
                out.push(sym);
                continue;
            }
            let idx = *self
                .rules_used
                .get(next_rule)
                .ok_or_else(|| Error::Generation("derivation ran out of rules".into()))?;
            next_rule += 1;
            let rule = &grammar.rules()[idx];
            if rule.head != sym {
                return Err(Error::Generation(format!(
                    "recorded rule {idx} expands {} but {sym} was next",
                    rule.head
                )));
            }
            stack.extend(rule.body.iter().rev());
        }
        if next_rule != self.rules_used.len() {
            return Err(Error::Generation("derivation has unused rules".into()));
        }
        Ok(out)
    }
}

/// Sample one sentence by leftmost expansion from the start symbol.
///
/// `max_depth` guards against unboundedly recursive grammars: expanding a
/// nonterminal on a tier beyond it aborts with a generation error.
/// Depth-stratified grammars never trigger a sufficiently large guard.
pub fn sample_sentence(
    grammar: &Grammar,
    rng: &mut ChaCha8Rng,
    max_depth: u32,
) -> Result<Derivation> {
    let mut tokens = Vec::new();
    let mut rules_used = Vec::new();
    let mut log_prob = 0.0;
    let mut depth = 1u32;
    // stack of (symbol, tier); bodies pushed in reverse for leftmost order
    let mut stack: Vec<(Symbol, u32)> = vec![(grammar.start(), 1)];
    while let Some((sym, tier)) = stack.pop() {
        depth = depth.max(tier);
        if grammar.is_terminal(sym) {
            tokens.push(sym);
            continue;
        }
        if tier >= max_depth {
            return Err(Error::Generation(format!(
                "expansion exceeded the depth guard {max_depth}"
            )));
        }
        let choices = grammar.rule_indices_for(sym);
        let mut u = rng.random::<f64>();
        let mut picked = *choices.last().expect("validated heads have rules");
        for &idx in choices {
            let p = grammar.rules()[idx].probability;
            if u < p {
                picked = idx;
                break;
            }
            u -= p;
        }
        let rule = &grammar.rules()[picked];
        rules_used.push(picked);
        log_prob += rule.probability.ln();
        for &child in rule.body.iter().rev() {
            stack.push((child, tier + 1));
        }
    }
    Ok(Derivation { tokens, log_prob, rules_used, depth })
}

/// Empirical sentence-length percentiles (nearest-rank 25/50/75/95).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthPercentiles {
    pub p25: usize,
    pub p50: usize,
    pub p75: usize,
    pub p95: usize,
}

pub fn length_percentiles(
    grammar: &Grammar,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LengthPercentiles> {
    if n < 100 {
        return Err(Error::Argument(format!(
            "length percentiles need at least 100 samples, got {n}"
        )));
    }
    let mut lengths = Vec::with_capacity(n);
    for _ in 0..n {
        lengths.push(sample_sentence(grammar, rng, DEFAULT_DEPTH_GUARD)?.tokens.len());
    }
    lengths.sort_unstable();
    Ok(LengthPercentiles {
        p25: percentile_nearest_rank(&lengths, 25.0),
        p50: percentile_nearest_rank(&lengths, 50.0),
        p75: percentile_nearest_rank(&lengths, 75.0),
        p95: percentile_nearest_rank(&lengths, 95.0),
    })
}

// ---------------------------------------------------------------------------
// Masked-token corruption
// ---------------------------------------------------------------------------

/// How a selected position was corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Replaced by [`MASK_TOKEN`] (probability 0.8 given selection).
    MaskToken,
    /// Replaced by a uniform terminal, possibly the original (0.1).
    RandomToken,
    /// Left as is but still a prediction target (0.1).
    Unchanged,
}

impl MaskKind {
    /// Single-letter code used in the serialized dataset.
    pub fn letter(self) -> char {
        match self {
            Self::MaskToken => 'm',
            Self::RandomToken => 'r',
            Self::Unchanged => 'u',
        }
    }
}

/// One masked-prediction example.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    pub original: Vec<Symbol>,
    pub corrupted: Vec<Symbol>,
    /// Selected positions (ascending) with their corruption kinds.
    pub positions: Vec<(usize, MaskKind)>,
}

/// Corrupt a sentence for masked-token prediction: each position is selected
/// independently with probability `mask_fraction`; a selected position
/// becomes the mask token with probability 0.8, a uniform random terminal
/// with probability 0.1, and stays unchanged with probability 0.1.
pub fn mask_sequence(
    grammar: &Grammar,
    seq: &[Symbol],
    mask_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MaskedSample> {
    if seq.is_empty() {
        return Err(Error::Argument("cannot mask an empty sequence".into()));
    }
    if !(mask_fraction > 0.0 && mask_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "mask fraction must lie strictly between 0 and 1, got {mask_fraction}"
        )));
    }
    if let Some(&bad) = seq.iter().find(|&&t| !grammar.is_terminal(t)) {
        return Err(Error::Argument(format!("token {bad} is not a terminal of the grammar")));
    }
    let alphabet: Vec<Symbol> = grammar.terminals().collect();
    let mut corrupted = seq.to_vec();
    let mut positions = Vec::new();
    for (pos, slot) in corrupted.iter_mut().enumerate() {
        if !rng.random_bool(mask_fraction) {
            continue;
        }
        // one decile decides the kind: 8 mask, 1 random, 1 unchanged
        let kind = match rng.random_range(0..10u8) {
            0..=7 => MaskKind::MaskToken,
            8 => MaskKind::RandomToken,
            _ => MaskKind::Unchanged,
        };
        match kind {
            MaskKind::MaskToken => *slot = MASK_TOKEN,
            MaskKind::RandomToken => *slot = alphabet[rng.random_range(0..alphabet.len())],
            MaskKind::Unchanged => {}
        }
        positions.push((pos, kind));
    }
    Ok(MaskedSample { original: seq.to_vec(), corrupted, positions })
}

// ---------------------------------------------------------------------------
// Corpus and dataset writers
// ---------------------------------------------------------------------------

/// Summary of a written corpus shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusStats {
    pub sentences: u64,
    pub tokens: u64,
    pub min_len: usize,
    pub max_len: usize,
}

/// Write `n` sentences as whitespace-separated token ids, one sentence per
/// line. Shards draw from disjoint streams of the same seed, so a corpus can
/// be produced in independent, individually reproducible pieces.
pub fn write_corpus(
    grammar: &Grammar,
    n: usize,
    seed: u64,
    shard: u64,
    out: &mut impl Write,
) -> Result<CorpusStats> {
    if n == 0 {
        return Err(Error::Argument("corpus needs at least one sentence".into()));
    }
    let mut rng = derive_rng(seed, "pcfg-corpus", shard);
    let mut stats =
        CorpusStats { sentences: 0, tokens: 0, min_len: usize::MAX, max_len: 0 };
    let mut line = String::new();
    for _ in 0..n {
        let s = sample_sentence(grammar, &mut rng, DEFAULT_DEPTH_GUARD)?;
        line.clear();
        for (i, t) in s.tokens.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&t.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
        stats.sentences += 1;
        stats.tokens += s.tokens.len() as u64;
        stats.min_len = stats.min_len.min(s.tokens.len());
        stats.max_len = stats.max_len.max(s.tokens.len());
    }
    Ok(stats)
}

/// Sidecar metadata for a corpus shard, as a small TOML document.
pub fn write_corpus_meta(
    grammar: &Grammar,
    seed: u64,
    shard: u64,
    stats: &CorpusStats,
    out: &mut impl Write,
) -> Result<()> {
    let mut table = toml::Table::new();
    table.insert("grammar".into(), toml::Value::String(grammar.id().into()));
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    table.insert("shard".into(), toml::Value::Integer(shard as i64));
    table.insert("sentences".into(), toml::Value::Integer(stats.sentences as i64));
    table.insert("tokens".into(), toml::Value::Integer(stats.tokens as i64));
    table.insert("min_len".into(), toml::Value::Integer(stats.min_len as i64));
    table.insert("max_len".into(), toml::Value::Integer(stats.max_len as i64));
    out.write_all(table.to_string().as_bytes())?;
    Ok(())
}

/// Summary of a written masked dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaskStats {
    pub sentences: u64,
    pub tokens: u64,
    pub selected: u64,
    pub mask_token: u64,
    pub random_token: u64,
    pub unchanged: u64,
}

/// Write `n` masked-prediction examples, one per line:
/// `original TAB corrupted TAB pos:kind,pos:kind,...` with space-separated
/// token ids, 0-based positions, and kind letters m/r/u. Sentences come from
/// the same stream as [`write_corpus`] with this seed and shard; the masking
/// noise uses its own stream, so the underlying corpus is unchanged.
pub fn write_masked_dataset(
    grammar: &Grammar,
    n: usize,
    mask_fraction: f64,
    seed: u64,
    shard: u64,
    out: &mut impl Write,
) -> Result<MaskStats> {
    if n == 0 {
        return Err(Error::Argument("dataset needs at least one sentence".into()));
    }
    let mut sentence_rng = derive_rng(seed, "pcfg-corpus", shard);
    let mut mask_rng = derive_rng(seed, "pcfg-mask", shard);
    let mut stats = MaskStats::default();
    let mut line = String::new();
    let append_tokens = |line: &mut String, toks: &[Symbol]| {
        for (i, t) in toks.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&t.to_string());
        }
    };
    for _ in 0..n {
        let s = sample_sentence(grammar, &mut sentence_rng, DEFAULT_DEPTH_GUARD)?;
        let masked = mask_sequence(grammar, &s.tokens, mask_fraction, &mut mask_rng)?;
        line.clear();
        append_tokens(&mut line, &masked.original);
        line.push('\t');
        append_tokens(&mut line, &masked.corrupted);
        line.push('\t');
        for (i, (pos, kind)) in masked.positions.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&pos.to_string());
            line.push(':');
            line.push(kind.letter());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
        stats.sentences += 1;
        stats.tokens += masked.original.len() as u64;
        stats.selected += masked.positions.len() as u64;
        for &(_, kind) in &masked.positions {
            match kind {
                MaskKind::MaskToken => stats.mask_token += 1,
                MaskKind::RandomToken => stats.random_token += 1,
                MaskKind::Unchanged => stats.unchanged += 1,
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_grammar_matches_published_table() {
        let g = cfg3b();
        assert_eq!(g.id(), "cfg3b");
        assert_eq!(g.start(), 22);
        assert_eq!(g.terminals().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(
            g.nonterminals().collect::<Vec<_>>(),
            vec![7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22]
        );
        assert_eq!(g.rules().len(), 32);
        // verbatim transcription of the published figure
        let expected: Vec<(Symbol, Vec<Symbol>)> = vec![
            (22, vec![21, 20]),
            (22, vec![20, 19]),
            (19, vec![16, 17, 18]),
            (19, vec![17, 18, 16]),
            (20, vec![17, 16, 18]),
            (20, vec![16, 17]),
            (21, vec![18, 16]),
            (21, vec![16, 18, 17]),
            (16, vec![15, 13]),
            (16, vec![13, 15, 14]),
            (17, vec![14, 13, 15]),
            (17, vec![15, 13, 14]),
            (18, vec![15, 14, 13]),
            (18, vec![14, 13]),
            (13, vec![11, 12]),
            (13, vec![12, 11]),
            (14, vec![11, 10, 12]),
            (14, vec![10, 11, 12]),
            (15, vec![12, 11, 10]),
            (15, vec![11, 12, 10]),
            (10, vec![7, 9, 8]),
            (10, vec![9, 8, 7]),
            (11, vec![8, 7, 9]),
            (11, vec![7, 8, 9]),
            (12, vec![8, 9, 7]),
            (12, vec![9, 7, 8]),
            (7, vec![3, 1]),
            (7, vec![1, 2, 3]),
            (8, vec![3, 2]),
            (8, vec![3, 1, 2]),
            (9, vec![3, 2, 1]),
            (9, vec![2, 1]),
        ];
        for (rule, (head, body)) in g.rules().iter().zip(&expected) {
            assert_eq!(rule.head, *head);
            assert_eq!(&rule.body, body);
            assert_eq!(rule.probability, 0.5);
        }
        // every head has exactly two alternatives
        for head in [7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22] {
            assert_eq!(g.rule_indices_for(head).len(), 2, "head {head}");
        }
        // within each body, consecutive symbols are distinct
        for rule in g.rules() {
            for pair in rule.body.windows(2) {
                assert_ne!(pair[0], pair[1], "rule {} -> {:?}", rule.head, rule.body);
            }
        }
    }

    #[test]
    fn invalid_grammars_are_rejected() {
        let r = |head, body: &[Symbol], p| Rule { head, body: body.to_vec(), probability: p };
        // probabilities must sum to one per head
        assert!(Grammar::new("g", &[1], 5, vec![r(5, &[1], 0.6), r(5, &[1, 1], 0.6)]).is_err());
        // heads cannot be terminals
        assert!(Grammar::new("g", &[5], 5, vec![r(5, &[5], 1.0)]).is_err());
        // bodies cannot reference unknown symbols
        assert!(Grammar::new("g", &[1], 5, vec![r(5, &[9], 1.0)]).is_err());
        // bodies cannot be empty
        assert!(Grammar::new("g", &[1], 5, vec![r(5, &[], 1.0)]).is_err());
        // the start symbol needs rules
        assert!(Grammar::new("g", &[1], 6, vec![r(5, &[1], 1.0)]).is_err());
        // the mask-token id is reserved
        assert!(Grammar::new("g", &[0, 1], 5, vec![r(5, &[1], 1.0)]).is_err());
        // a well-formed grammar passes
        assert!(Grammar::new("g", &[1], 5, vec![r(5, &[1], 0.5), r(5, &[1, 1], 0.5)]).is_ok());
    }

    #[test]
    fn sampled_sentences_have_fixed_tier_depth_and_replay() {
        let g = cfg3b();
        let mut rng = derive_rng(3, "pcfg-test", 0);
        let ln_half = 0.5f64.ln();
        for _ in 0..2000 {
            let s = sample_sentence(&g, &mut rng, DEFAULT_DEPTH_GUARD).unwrap();
            assert!(s.tokens.iter().all(|t| [1, 2, 3].contains(t)));
            // the symbol ids are strictly tiered (22; 19-21; 16-18; 13-15;
            // 10-12; 7-9; terminals), so every derivation spans exactly
            // seven tiers from start symbol to tokens
            assert_eq!(s.depth, 7);
            // uniform-half choices make the tree probability 2^-(rules used)
            assert!((s.log_prob - s.rules_used.len() as f64 * ln_half).abs() < 1e-9);
            assert_eq!(s.replay(&g).unwrap(), s.tokens);
        }
    }

    #[test]
    fn replay_rejects_foreign_rule_sequences() {
        let g = cfg3b();
        let mut rng = derive_rng(4, "pcfg-test", 0);
        let s = sample_sentence(&g, &mut rng, DEFAULT_DEPTH_GUARD).unwrap();
        let mut broken = s.clone();
        broken.rules_used[0] = 5; // head 20, but the start symbol is 22
        assert!(broken.replay(&g).is_err());
        let mut truncated = s.clone();
        truncated.rules_used.pop();
        assert!(truncated.replay(&g).is_err());
        let mut extended = s;
        extended.rules_used.push(0);
        assert!(extended.replay(&g).is_err());
    }

    #[test]
    fn depth_guard_stops_recursive_grammars() {
        // S -> S with probability 1 never terminates without the guard
        let looping = Grammar::new(
            "loop",
            &[1],
            5,
            vec![Rule { head: 5, body: vec![5], probability: 1.0 }],
        )
        .unwrap();
        let mut rng = derive_rng(5, "pcfg-test", 0);
        assert!(matches!(
            sample_sentence(&looping, &mut rng, 32),
            Err(Error::Generation(_))
        ));
        // a tight guard also rejects the benchmark grammar, a loose one never
        let g = cfg3b();
        assert!(sample_sentence(&g, &mut rng, 3).is_err());
        for _ in 0..50 {
            assert!(sample_sentence(&g, &mut rng, 7).is_ok());
        }
    }

    #[test]
    fn single_rule_grammar_is_deterministic_with_zero_log_prob() {
        let g = Grammar::new(
            "unit",
            &[1],
            5,
            vec![Rule { head: 5, body: vec![1], probability: 1.0 }],
        )
        .unwrap();
        let mut rng = derive_rng(6, "pcfg-test", 0);
        let s = sample_sentence(&g, &mut rng, 8).unwrap();
        assert_eq!(s.tokens, vec![1]);
        assert_eq!(s.log_prob, 0.0);
        assert_eq!(s.depth, 2);
    }

    #[test]
    fn length_percentiles_match_published_values() {
        let g = cfg3b();
        let mut rng = derive_rng(7, "pcfg-stats", 0);
        let p = length_percentiles(&g, 100_000, &mut rng).unwrap();
        let within = |got: usize, want: usize, tol: usize| {
            (got as i64 - want as i64).unsigned_abs() as usize <= tol
        };
        assert!(within(p.p25, 251, 5), "p25 = {}", p.p25);
        assert!(within(p.p50, 278, 5), "p50 = {}", p.p50);
        assert!(within(p.p75, 308, 5), "p75 = {}", p.p75);
        assert!(within(p.p95, 342, 6), "p95 = {}", p.p95);
        // deterministic under the same seed
        let again = length_percentiles(&g, 1000, &mut derive_rng(8, "pcfg-stats", 0)).unwrap();
        let once = length_percentiles(&g, 1000, &mut derive_rng(8, "pcfg-stats", 0)).unwrap();
        assert_eq!(again, once);
        assert!(length_percentiles(&g, 99, &mut rng).is_err());
    }

    #[test]
    fn masking_rates_match_the_selection_rule() {
        let g = cfg3b();
        let mut gen_rng = derive_rng(9, "pcfg-test", 0);
        let mut mask_rng = derive_rng(9, "pcfg-mask-test", 0);
        let mut total = 0u64;
        let mut selected = 0u64;
        let mut kinds = [0u64; 3];
        while total < 1_200_000 {
            let s = sample_sentence(&g, &mut gen_rng, DEFAULT_DEPTH_GUARD).unwrap();
            let m = mask_sequence(&g, &s.tokens, 0.30, &mut mask_rng).unwrap();
            total += s.tokens.len() as u64;
            selected += m.positions.len() as u64;
            for &(pos, kind) in &m.positions {
                match kind {
                    MaskKind::MaskToken => {
                        kinds[0] += 1;
                        assert_eq!(m.corrupted[pos], MASK_TOKEN);
                    }
                    MaskKind::RandomToken => {
                        kinds[1] += 1;
                        assert!(g.is_terminal(m.corrupted[pos]));
                    }
                    MaskKind::Unchanged => {
                        kinds[2] += 1;
                        assert_eq!(m.corrupted[pos], m.original[pos]);
                    }
                }
            }
            // untouched positions match the original
            let touched: Vec<usize> = m.positions.iter().map(|&(p, _)| p).collect();
            for (i, (&o, &c)) in m.original.iter().zip(&m.corrupted).enumerate() {
                if !touched.contains(&i) {
                    assert_eq!(o, c);
                }
            }
            // positions are ascending and in range
            assert!(touched.windows(2).all(|w| w[0] < w[1]));
            assert!(touched.iter().all(|&p| p < m.original.len()));
        }
        let sel_frac = selected as f64 / total as f64;
        assert!((sel_frac - 0.30).abs() < 0.002, "selected fraction {sel_frac}");
        let of_selected = |c: u64| c as f64 / selected as f64;
        assert!((of_selected(kinds[0]) - 0.80).abs() < 0.005, "mask share {}", of_selected(kinds[0]));
        assert!((of_selected(kinds[1]) - 0.10).abs() < 0.005, "random share {}", of_selected(kinds[1]));
        assert!((of_selected(kinds[2]) - 0.10).abs() < 0.005, "unchanged share {}", of_selected(kinds[2]));
    }

    #[test]
    fn vanishing_mask_fraction_selects_nothing() {
        let g = cfg3b();
        let mut gen_rng = derive_rng(10, "pcfg-test", 0);
        let mut mask_rng = derive_rng(10, "pcfg-mask-test", 0);
        // ~3e5 positions at 1e-12 per-position probability: the chance of
        // any selection is below 1e-6
        for _ in 0..1000 {
            let s = sample_sentence(&g, &mut gen_rng, DEFAULT_DEPTH_GUARD).unwrap();
            let m = mask_sequence(&g, &s.tokens, 1e-12, &mut mask_rng).unwrap();
            assert!(m.positions.is_empty());
            assert_eq!(m.corrupted, m.original);
        }
    }

    #[test]
    fn selection_indicators_are_uncorrelated_across_positions() {
        let g = cfg3b();
        let mut gen_rng = derive_rng(11, "pcfg-test", 0);
        let mut mask_rng = derive_rng(11, "pcfg-mask-test", 0);
        // correlation of adjacent-position selection indicators
        let (mut n, mut sx, mut sxx, mut sxy) = (0u64, 0u64, 0u64, 0u64);
        while n < 1_000_000 {
            let s = sample_sentence(&g, &mut gen_rng, DEFAULT_DEPTH_GUARD).unwrap();
            let m = mask_sequence(&g, &s.tokens, 0.30, &mut mask_rng).unwrap();
            let mut flags = vec![0u8; s.tokens.len()];
            for &(p, _) in &m.positions {
                flags[p] = 1;
            }
            for w in flags.windows(2) {
                n += 1;
                sx += u64::from(w[0]);
                sxx += u64::from(w[0]);
                sxy += u64::from(w[0] & w[1]);
            }
        }
        let nf = n as f64;
        let ex = sx as f64 / nf;
        let exy = sxy as f64 / nf;
        let var = sxx as f64 / nf - ex * ex;
        let rho = (exy - ex * ex) / var;
        assert!(rho.abs() < 0.01, "adjacent-position correlation {rho}");
    }

    #[test]
    fn masking_validates_inputs() {
        let g = cfg3b();
        let mut rng = derive_rng(12, "pcfg-test", 0);
        assert!(mask_sequence(&g, &[], 0.3, &mut rng).is_err());
        assert!(mask_sequence(&g, &[1, 2], 0.0, &mut rng).is_err());
        assert!(mask_sequence(&g, &[1, 2], 1.0, &mut rng).is_err());
        assert!(mask_sequence(&g, &[1, 9], 0.3, &mut rng).is_err());
    }

    #[test]
    fn corpus_writer_is_deterministic_and_parseable() {
        let g = cfg3b();
        let mut buf_a = Vec::new();
        let stats_a = write_corpus(&g, 50, 13, 0, &mut buf_a).unwrap();
        let mut buf_b = Vec::new();
        let stats_b = write_corpus(&g, 50, 13, 0, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(stats_a, stats_b);
        let mut buf_c = Vec::new();
        write_corpus(&g, 50, 13, 1, &mut buf_c).unwrap();
        assert_ne!(buf_a, buf_c, "shards must draw from distinct streams");

        let text = String::from_utf8(buf_a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 50);
        let mut tokens = 0u64;
        for line in &lines {
            for tok in line.split(' ') {
                let t: Symbol = tok.parse().unwrap();
                assert!(g.is_terminal(t));
                tokens += 1;
            }
        }
        assert_eq!(tokens, stats_a.tokens);
        assert_eq!(stats_a.sentences, 50);
        assert!(stats_a.min_len <= stats_a.max_len);

        let mut meta = Vec::new();
        write_corpus_meta(&g, 13, 0, &stats_a, &mut meta).unwrap();
        let parsed: toml::Table = String::from_utf8(meta).unwrap().parse().unwrap();
        assert_eq!(parsed["grammar"].as_str(), Some("cfg3b"));
        assert_eq!(parsed["seed"].as_integer(), Some(13));
        assert_eq!(parsed["sentences"].as_integer(), Some(50));
        assert_eq!(parsed["tokens"].as_integer(), Some(stats_a.tokens as i64));
    }

    #[test]
    fn masked_dataset_lines_parse_and_reconcile() {
        let g = cfg3b();
        let mut buf = Vec::new();
        let stats = write_masked_dataset(&g, 20, 0.30, 14, 0, &mut buf).unwrap();
        assert_eq!(stats.sentences, 20);
        assert_eq!(stats.selected, stats.mask_token + stats.random_token + stats.unchanged);
        // the sentences are the same stream as the plain corpus writer
        let mut corpus = Vec::new();
        write_corpus(&g, 20, 14, 0, &mut corpus).unwrap();
        let corpus_text = String::from_utf8(corpus).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut seen_selected = 0u64;
        for (line, corpus_line) in text.lines().zip(corpus_text.lines()) {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 3);
            assert_eq!(fields[0], corpus_line);
            let orig: Vec<Symbol> = fields[0].split(' ').map(|t| t.parse().unwrap()).collect();
            let corr: Vec<Symbol> = fields[1].split(' ').map(|t| t.parse().unwrap()).collect();
            assert_eq!(orig.len(), corr.len());
            if !fields[2].is_empty() {
                for item in fields[2].split(',') {
                    let (pos, kind) = item.split_once(':').unwrap();
                    let pos: usize = pos.parse().unwrap();
                    assert!(pos < orig.len());
                    match kind {
                        "m" => assert_eq!(corr[pos], MASK_TOKEN),
                        "r" => assert!(g.is_terminal(corr[pos])),
                        "u" => assert_eq!(corr[pos], orig[pos]),
                        other => panic!("unknown kind {other}"),
                    }
                    seen_selected += 1;
                }
            }
        }
        assert_eq!(seen_selected, stats.selected);
    }
}
