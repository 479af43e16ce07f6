//! The locally-normalized sequence-model contract and table-backed models.
//!
//! A sequence model assigns `p(y | x)` as a product of per-step conditionals
//! over `V ∪ {EOS}`, with `y_0 := BOS`. All scores live in log space: each
//! factor is at most zero, so prefix scores are monotonically non-increasing
//! in length, which is what makes best-first decoding exact.
//!
//! [`TableModel`] stores explicit conditionals per prefix up to a depth bound
//! and forces EOS beyond it. Table models serve as ground-truth oracles for
//! the search strategies: their complete-hypothesis space is finite and can
//! be enumerated exhaustively.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::corpus::SymbolId;

/// Tolerance on |log-sum-exp| for a distribution to count as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Tolerance for table-row probability sums and mass-conservation checks.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("symbol id {id} out of range for distribution of size {size}")]
    SymbolOutOfRange { id: SymbolId, size: usize },
    #[error("prefix may not contain EOS")]
    EosInPrefix,
    #[error("distribution not normalized: |log-sum-exp| = {delta:e}")]
    NotNormalized { delta: f64 },
    #[error("distribution for prefix `{prefix}` sums to {sum}, expected 1")]
    RowNotNormalized { prefix: String, sum: f64 },
    #[error("row for prefix `{prefix}` has length {len}, expected {expected}")]
    RowWrongLength {
        prefix: String,
        len: usize,
        expected: usize,
    },
    #[error("row prefix `{prefix}` lies at or beyond the depth bound {depth}")]
    RowBeyondDepth { prefix: String, depth: usize },
    #[error(
        "table model needs vocab_size >= 1 and depth_bound >= 1, got {vocab_size}, {depth_bound}"
    )]
    BadTableShape {
        vocab_size: usize,
        depth_bound: usize,
    },
    #[error("table file line {line}: {msg}")]
    TableFormat { line: usize, msg: String },
    #[error("model input must be non-empty")]
    EmptyInput,
    #[error("non-finite activation detected (model divergence)")]
    NonFinite,
}

/// Normalized log-probability vector over `V ∪ {EOS}`.
///
/// Entries are `<= 0` and never NaN; `-inf` encodes zero probability.
/// Log-sum-exp of the entries is zero within [`NORMALIZATION_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution {
    log_probs: Vec<f64>,
}

impl ConditionalDistribution {
    /// Wrap and validate a log-probability vector.
    pub fn new(log_probs: Vec<f64>) -> Result<Self, ModelError> {
        if log_probs.iter().any(|lp| lp.is_nan()) {
            return Err(ModelError::NonFinite);
        }
        let delta = log_sum_exp(&log_probs).abs();
        if delta > NORMALIZATION_TOL {
            return Err(ModelError::NotNormalized { delta });
        }
        Ok(ConditionalDistribution { log_probs })
    }

    /// Log probability of one symbol.
    #[inline]
    pub fn lp(&self, sym: SymbolId) -> f64 {
        self.log_probs[sym as usize]
    }

    pub fn get(&self, sym: SymbolId) -> Result<f64, ModelError> {
        self.log_probs
            .get(sym as usize)
            .copied()
            .ok_or(ModelError::SymbolOutOfRange {
                id: sym,
                size: self.log_probs.len(),
            })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_probs
    }

    /// Highest-probability symbol; ties break toward the lowest id.
    pub fn argmax(&self) -> SymbolId {
        let mut best = 0usize;
        for (i, &lp) in self.log_probs.iter().enumerate().skip(1) {
            if lp > self.log_probs[best] {
                best = i;
            }
        }
        best as SymbolId
    }
}

/// Numerically stable log(Σ exp(xs)). Returns -inf for all -inf input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// A locally-normalized conditional sequence model.
///
/// `begin` consumes the source `x` and yields the distribution for the first
/// output position; `extend` advances the decode state by one chosen symbol
/// and yields the next distribution. Models are immutable after construction
/// and safe to share across decoding workers; the state is per-decode.
pub trait SequenceModel {
    /// Incremental decode state after the first conditional has been produced.
    type State: Clone;

    /// Length of every conditional distribution, `|V ∪ {EOS}|`.
    fn vocab_size(&self) -> usize;

    /// Index of EOS within the distribution.
    fn eos(&self) -> SymbolId;

    /// Start a decode of `x`: state plus `p(· | x, BOS)`.
    fn begin(&self, x: &[SymbolId]) -> Result<(Self::State, ConditionalDistribution), ModelError>;

    /// Advance by one non-EOS symbol: new state plus the next conditional.
    fn extend(
        &self,
        state: &Self::State,
        symbol: SymbolId,
    ) -> Result<(Self::State, ConditionalDistribution), ModelError>;

    /// `p(· | x, prefix)` computed by replaying the prefix from the start.
    fn next_log_probs(
        &self,
        x: &[SymbolId],
        prefix: &[SymbolId],
    ) -> Result<ConditionalDistribution, ModelError> {
        let (mut state, mut dist) = self.begin(x)?;
        for &sym in prefix {
            if sym == self.eos() {
                return Err(ModelError::EosInPrefix);
            }
            let (next_state, next_dist) = self.extend(&state, sym)?;
            state = next_state;
            dist = next_dist;
        }
        Ok(dist)
    }

    /// Total log probability of a complete hypothesis: the sum of the
    /// conditionals of every symbol of `y` plus a final EOS factor. Returns
    /// `-inf` as soon as any factor is zero.
    fn sequence_log_prob(&self, x: &[SymbolId], y: &[SymbolId]) -> Result<f64, ModelError> {
        let (mut state, mut dist) = self.begin(x)?;
        let mut score = 0.0;
        for &sym in y {
            if sym == self.eos() {
                return Err(ModelError::EosInPrefix);
            }
            score += dist.get(sym)?;
            let (next_state, next_dist) = self.extend(&state, sym)?;
            state = next_state;
            dist = next_dist;
        }
        score += dist.get(self.eos())?;
        Ok(score)
    }

    /// Log probability of the empty string, `log p(EOS | x, BOS)`.
    fn empty_string_log_prob(&self, x: &[SymbolId]) -> Result<f64, ModelError> {
        let (_, dist) = self.begin(x)?;
        dist.get(self.eos())
    }
}

/// Explicit-table model: conditionals stored per prefix shorter than
/// `depth_bound`, forced EOS at and beyond it. Prefixes without a stored row
/// also take the forced-EOS rule. The source `x` is ignored.
#[derive(Debug, Clone)]
pub struct TableModel {
    alphabet: Vec<String>,
    depth_bound: usize,
    rows: HashMap<Vec<SymbolId>, Vec<f64>>,
}

impl TableModel {
    /// Build from `(prefix, probabilities)` rows. Each row must cover every
    /// symbol of the alphabet plus EOS (EOS last) and sum to one within
    /// [`ROW_SUM_TOL`].
    pub fn from_rows(
        alphabet: Vec<String>,
        depth_bound: usize,
        rows: &[(Vec<SymbolId>, Vec<f64>)],
    ) -> Result<Self, ModelError> {
        if alphabet.is_empty() {
            return Err(ModelError::BadTableShape {
                vocab_size: 0,
                depth_bound,
            });
        }
        let width = alphabet.len() + 1;
        let mut table = TableModel {
            alphabet,
            depth_bound,
            rows: HashMap::new(),
        };
        for (prefix, probs) in rows {
            let name = table.prefix_name(prefix);
            if probs.len() != width {
                return Err(ModelError::RowWrongLength {
                    prefix: name,
                    len: probs.len(),
                    expected: width,
                });
            }
            if prefix.len() >= depth_bound {
                return Err(ModelError::RowBeyondDepth {
                    prefix: name,
                    depth: depth_bound,
                });
            }
            let sum: f64 = probs.iter().sum();
            if probs
                .iter()
                .any(|&p| !(0.0..=1.0 + ROW_SUM_TOL).contains(&p))
                || (sum - 1.0).abs() > ROW_SUM_TOL
            {
                return Err(ModelError::RowNotNormalized { prefix: name, sum });
            }
            let log_row: Vec<f64> = probs.iter().map(|&p| p.ln()).collect();
            table.rows.insert(prefix.clone(), log_row);
        }
        Ok(table)
    }

    /// Alphabet spellings `a`, `b`, ... for generated models.
    pub fn default_alphabet(vocab_size: usize) -> Vec<String> {
        (0..vocab_size)
            .map(|i| {
                if i < 26 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("s{}", i)
                }
            })
            .collect()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn depth_bound(&self) -> usize {
        self.depth_bound
    }

    /// Number of explicitly stored conditional rows.
    pub fn stored_rows(&self) -> usize {
        self.rows.len()
    }

    /// Render a target symbol sequence with the table's spellings.
    pub fn render(&self, ids: &[SymbolId]) -> String {
        ids.iter()
            .map(|&id| {
                self.alphabet
                    .get(id as usize)
                    .map(String::as_str)
                    .unwrap_or("<bad>")
            })
            .collect()
    }

    /// Parse a rendered sequence back to symbol ids (single-char spellings).
    pub fn parse_sequence(&self, text: &str) -> Option<Vec<SymbolId>> {
        text.chars()
            .map(|c| {
                self.alphabet
                    .iter()
                    .position(|s| s == &c.to_string())
                    .map(|i| i as SymbolId)
            })
            .collect()
    }

    fn prefix_name(&self, prefix: &[SymbolId]) -> String {
        if prefix.is_empty() {
            return "<bos>".to_string();
        }
        let mut out = String::new();
        for (i, &sym) in prefix.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(
                self.alphabet
                    .get(sym as usize)
                    .map(String::as_str)
                    .unwrap_or("?"),
            );
        }
        out
    }

    fn dist_for(&self, prefix: &[SymbolId]) -> Vec<f64> {
        let width = self.alphabet.len() + 1;
        if prefix.len() < self.depth_bound {
            if let Some(row) = self.rows.get(prefix) {
                return row.clone();
            }
        }
        // Forced EOS: all probability mass on the end symbol.
        let mut row = vec![f64::NEG_INFINITY; width];
        row[width - 1] = 0.0;
        row
    }

    /// Serialize in the versioned `table v1` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("table v1\n");
        writeln!(out, "alphabet\t{}", self.alphabet.join(" ")).unwrap();
        writeln!(out, "depth\t{}", self.depth_bound).unwrap();
        // Rows in breadth-first lexicographic prefix order for stable output.
        let mut prefixes: Vec<&Vec<SymbolId>> = self.rows.keys().collect();
        prefixes.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        for prefix in prefixes {
            let row = &self.rows[prefix];
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, &lp)| {
                    let name = if i == self.alphabet.len() {
                        "<eos>"
                    } else {
                        &self.alphabet[i]
                    };
                    format!("{}:{}", name, lp.exp())
                })
                .collect();
            writeln!(out, "{}\t{}", self.prefix_name(prefix), cells.join(",")).unwrap();
        }
        out
    }

    /// Parse the `table v1` text format.
    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "table v1")) => {}
            _ => {
                return Err(ModelError::TableFormat {
                    line: 1,
                    msg: "expected header `table v1`".into(),
                })
            }
        }
        let alphabet: Vec<String> = match lines.next() {
            Some((_, line)) if line.starts_with("alphabet\t") => line["alphabet\t".len()..]
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            _ => {
                return Err(ModelError::TableFormat {
                    line: 2,
                    msg: "expected `alphabet\\t...`".into(),
                })
            }
        };
        let depth_bound: usize = match lines.next() {
            Some((_, line)) if line.starts_with("depth\t") => line["depth\t".len()..]
                .parse()
                .map_err(|_| ModelError::TableFormat {
                    line: 3,
                    msg: "bad depth".into(),
                })?,
            _ => {
                return Err(ModelError::TableFormat {
                    line: 3,
                    msg: "expected `depth\\t...`".into(),
                })
            }
        };
        let sym_of = |name: &str, line: usize| -> Result<SymbolId, ModelError> {
            alphabet
                .iter()
                .position(|s| s == name)
                .map(|i| i as SymbolId)
                .ok_or_else(|| ModelError::TableFormat {
                    line,
                    msg: format!("unknown symbol {:?}", name),
                })
        };
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let (prefix_s, cells_s) =
                line.split_once('\t')
                    .ok_or_else(|| ModelError::TableFormat {
                        line: line_no,
                        msg: "expected `prefix\\tsymbol:prob,...`".into(),
                    })?;
            let prefix: Vec<SymbolId> = if prefix_s == "<bos>" {
                Vec::new()
            } else {
                prefix_s
                    .split(' ')
                    .map(|name| sym_of(name, line_no))
                    .collect::<Result<_, _>>()?
            };
            let mut probs = vec![0.0; alphabet.len() + 1];
            for cell in cells_s.split(',') {
                let (name, p) = cell
                    .split_once(':')
                    .ok_or_else(|| ModelError::TableFormat {
                        line: line_no,
                        msg: format!("bad cell {:?}", cell),
                    })?;
                let p: f64 = p.parse().map_err(|_| ModelError::TableFormat {
                    line: line_no,
                    msg: format!("bad probability {:?}", p),
                })?;
                let slot = if name == "<eos>" {
                    alphabet.len()
                } else {
                    sym_of(name, line_no)? as usize
                };
                probs[slot] = p;
            }
            rows.push((prefix, probs));
        }
        TableModel::from_rows(alphabet, depth_bound, &rows)
    }
}

impl SequenceModel for TableModel {
    type State = Vec<SymbolId>;

    fn vocab_size(&self) -> usize {
        self.alphabet.len() + 1
    }

    fn eos(&self) -> SymbolId {
        self.alphabet.len() as SymbolId
    }

    fn begin(&self, _x: &[SymbolId]) -> Result<(Self::State, ConditionalDistribution), ModelError> {
        let dist = ConditionalDistribution::new(self.dist_for(&[]))?;
        Ok((Vec::new(), dist))
    }

    fn extend(
        &self,
        state: &Self::State,
        symbol: SymbolId,
    ) -> Result<(Self::State, ConditionalDistribution), ModelError> {
        if symbol == self.eos() {
            return Err(ModelError::EosInPrefix);
        }
        if symbol as usize >= self.alphabet.len() {
            return Err(ModelError::SymbolOutOfRange {
                id: symbol,
                size: self.vocab_size(),
            });
        }
        let mut prefix = state.clone();
        prefix.push(symbol);
        let dist = ConditionalDistribution::new(self.dist_for(&prefix))?;
        Ok((prefix, dist))
    }
}

/// Build a table model from `(prefix, probabilities)` rows over a generated
/// `a`, `b`, ... alphabet.
pub fn make_table_model(
    vocab_size: usize,
    depth_bound: usize,
    rows: &[(Vec<SymbolId>, Vec<f64>)],
) -> Result<TableModel, ModelError> {
    TableModel::from_rows(TableModel::default_alphabet(vocab_size), depth_bound, rows)
}

/// Draw a fully random table model: for every prefix shorter than
/// `depth_bound`, weights uniform in (0, 1] over `V ∪ {EOS}`, normalized.
/// Deterministic in the seed; prefixes are visited in breadth-first
/// lexicographic order.
pub fn sample_random_model(seed: u64, vocab_size: usize, depth_bound: usize) -> TableModel {
    assert!(
        vocab_size >= 1 && depth_bound >= 1,
        "vocab_size and depth_bound must be >= 1"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let width = vocab_size + 1;
    let mut rows = Vec::new();
    let mut frontier: Vec<Vec<SymbolId>> = vec![Vec::new()];
    for _depth in 0..depth_bound {
        let mut next = Vec::new();
        for prefix in frontier {
            let mut weights: Vec<f64> = (0..width).map(|_| 1.0 - rng.random::<f64>()).collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            rows.push((prefix.clone(), weights));
            for sym in 0..vocab_size {
                let mut child = prefix.clone();
                child.push(sym as SymbolId);
                next.push(child);
            }
        }
        frontier = next;
    }
    TableModel::from_rows(TableModel::default_alphabet(vocab_size), depth_bound, &rows)
        .expect("random rows are normalized by construction")
}

/// The worked two-symbol example model over `{a, b}`:
/// `p(·|BOS) = (a .55, b .35, eos .10)`, `p(·|a) = (.5, .3, .2)`,
/// `p(·|b) = (.05, .05, .9)`, any length-2 prefix forced to EOS.
pub fn toy1() -> TableModel {
    make_table_model(
        2,
        2,
        &[
            (vec![], vec![0.55, 0.35, 0.10]),
            (vec![0], vec![0.5, 0.3, 0.2]),
            (vec![1], vec![0.05, 0.05, 0.9]),
        ],
    )
    .expect("toy1 rows are normalized")
}

/// Enumerate every complete hypothesis of a table model together with its
/// log probability. Exhaustive oracle for mass-conservation and argmax tests.
pub fn enumerate_hypotheses(model: &TableModel) -> Vec<(Vec<SymbolId>, f64)> {
    let mut out = Vec::new();
    let eos = model.eos();
    let alphabet = model.alphabet.len();
    let mut stack: Vec<(Vec<SymbolId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        let dist = model.dist_for(&prefix);
        let eos_lp = dist[eos as usize];
        if eos_lp > f64::NEG_INFINITY {
            out.push((prefix.clone(), score + eos_lp));
        }
        if prefix.len() < model.depth_bound {
            for (sym, &lp) in dist.iter().enumerate().take(alphabet) {
                if lp > f64::NEG_INFINITY {
                    let mut child = prefix.clone();
                    child.push(sym as SymbolId);
                    stack.push((child, score + lp));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn toy1_root_distribution_reads_back() {
        let m = toy1();
        let dist = m.next_log_probs(&[], &[]).unwrap();
        assert!((dist.lp(0) - 0.55f64.ln()).abs() < TOL);
        assert!((dist.lp(1) - 0.35f64.ln()).abs() < TOL);
        assert!((dist.lp(2) - 0.10f64.ln()).abs() < TOL);
    }

    #[test]
    fn depth_bound_forces_eos() {
        let m = toy1();
        let dist = m.next_log_probs(&[], &[0, 0]).unwrap();
        assert_eq!(dist.lp(2), 0.0);
        assert_eq!(dist.lp(0), f64::NEG_INFINITY);
        assert_eq!(dist.lp(1), f64::NEG_INFINITY);
    }

    #[test]
    fn next_log_probs_is_deterministic() {
        let m = sample_random_model(7, 3, 3);
        let a = m.next_log_probs(&[], &[1, 2]).unwrap();
        let b = m.next_log_probs(&[], &[1, 2]).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn eos_in_prefix_is_rejected() {
        let m = toy1();
        assert!(matches!(
            m.next_log_probs(&[], &[2]),
            Err(ModelError::EosInPrefix)
        ));
        assert!(matches!(
            m.next_log_probs(&[], &[9]),
            Err(ModelError::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    #[allow(clippy::approx_constant)] // -2.3026 is the worked example's ln(0.10)
    fn sequence_log_prob_multiplies_factors() {
        let m = toy1();
        let b = m.sequence_log_prob(&[], &[1]).unwrap();
        assert!((b - (0.35f64 * 0.9).ln()).abs() < TOL);
        assert!((b - (-1.1552)).abs() < 1e-4);

        let aa = m.sequence_log_prob(&[], &[0, 0]).unwrap();
        assert!((aa - (0.55f64 * 0.5 * 1.0).ln()).abs() < TOL);
        assert!((aa - (-1.2910)).abs() < 1e-4);

        let empty = m.sequence_log_prob(&[], &[]).unwrap();
        assert!((empty - 0.10f64.ln()).abs() < TOL);
        assert!((empty - (-2.3026)).abs() < 1e-4);
    }

    #[test]
    fn empty_string_log_prob_matches_first_eos_factor() {
        let m = toy1();
        let lp = m.empty_string_log_prob(&[]).unwrap();
        assert!((lp - 0.10f64.ln()).abs() < TOL);

        let certain = make_table_model(1, 1, &[(vec![], vec![0.0, 1.0])]).unwrap();
        assert_eq!(certain.empty_string_log_prob(&[]).unwrap(), 0.0);

        let never = make_table_model(1, 1, &[(vec![], vec![1.0, 0.0])]).unwrap();
        assert_eq!(never.empty_string_log_prob(&[]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn toy1_hypothesis_mass_sums_to_one() {
        let hyps = enumerate_hypotheses(&toy1());
        assert_eq!(hyps.len(), 7);
        let mass: f64 = hyps.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((mass - 1.0).abs() <= ROW_SUM_TOL);
    }

    #[test]
    fn non_normalized_row_is_rejected_by_name() {
        let err = make_table_model(2, 1, &[(vec![], vec![0.5, 0.3, 0.1])]).unwrap_err();
        match err {
            ModelError::RowNotNormalized { prefix, sum } => {
                assert_eq!(prefix, "<bos>");
                assert!((sum - 0.9).abs() < TOL);
            }
            other => panic!("unexpected: {:?}", other),
        }
    }

    #[test]
    fn depth_zero_model_only_admits_the_empty_string() {
        let m = make_table_model(2, 0, &[]).unwrap();
        let hyps = enumerate_hypotheses(&m);
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0], (vec![], 0.0));
    }

    #[test]
    fn random_models_are_seed_deterministic() {
        let a = sample_random_model(42, 2, 3);
        let b = sample_random_model(42, 2, 3);
        assert_eq!(a.to_text(), b.to_text());
        let c = sample_random_model(43, 2, 3);
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn random_model_row_counts_and_normalization() {
        // Stored rows cover every prefix shorter than the depth bound:
        // 1 + V + V^2 rows for depth 3.
        let m3 = sample_random_model(5, 3, 3);
        assert_eq!(m3.stored_rows(), 13);
        let m2 = sample_random_model(5, 2, 3);
        assert_eq!(m2.stored_rows(), 7);
        for model in [&m3, &m2] {
            for row in model.rows.values() {
                let sum: f64 = row.iter().map(|lp| lp.exp()).sum();
                assert!((sum - 1.0).abs() <= ROW_SUM_TOL);
            }
        }
    }

    #[test]
    fn random_model_mass_is_conserved() {
        for seed in 0..20 {
            let m = sample_random_model(seed, 2, 4);
            let mass: f64 = enumerate_hypotheses(&m)
                .iter()
                .map(|(_, lp)| lp.exp())
                .sum();
            assert!(
                (mass - 1.0).abs() <= ROW_SUM_TOL,
                "seed {}: mass {}",
                seed,
                mass
            );
        }
    }

    #[test]
    fn table_text_round_trips_behaviorally() {
        let m = sample_random_model(11, 3, 3);
        let text = m.to_text();
        let back = TableModel::from_text(&text).unwrap();
        assert_eq!(back.stored_rows(), m.stored_rows());
        for (prefix, row) in &m.rows {
            let got = &back.rows[prefix];
            for (a, b) in row.iter().zip(got) {
                assert!((a - b).abs() < 1e-12 || (a == b));
            }
        }
        // A second serialization of the parsed model is byte-stable.
        assert_eq!(
            TableModel::from_text(&back.to_text()).unwrap().to_text(),
            back.to_text()
        );
    }

    #[test]
    fn table_text_rejects_garbage() {
        assert!(TableModel::from_text("nope").is_err());
        assert!(TableModel::from_text("table v1\nalphabet\ta b\ndepth\tx\n").is_err());
        let bad_row = "table v1\nalphabet\ta b\ndepth\t2\n<bos>\ta:0.5,b:0.3,<eos>:0.1\n";
        assert!(matches!(
            TableModel::from_text(bad_row),
            Err(ModelError::RowNotNormalized { .. })
        ));
    }

    #[test]
    fn log_sum_exp_handles_edge_cases() {
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert!((log_sum_exp(&[0.0f64.ln(), 1.0f64.ln()]) - 0.0).abs() < 1e-12);
        let third = (1.0f64 / 3.0).ln();
        assert!(log_sum_exp(&[third, third, third]).abs() < 1e-12);
    }
}
