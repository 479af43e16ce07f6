//! Decoding strategies over any [`SequenceModel`]: greedy search, beam
//! search, exact maximum-a-posteriori decoding with Dijkstra's algorithm, and
//! a brute-force enumeration oracle.
//!
//! Because every conditional log probability is at most zero, a hypothesis
//! score never increases as it grows. Best-first search therefore returns the
//! global optimum the first time it pops a complete hypothesis, and any known
//! complete hypothesis is a sound lower bound for pruning: a node whose score
//! already falls strictly below the bound can never recover.
//!
//! Ties are broken identically everywhere: higher score first, then shorter
//! hypothesis, then lexicographically smaller symbol sequence. This makes
//! every strategy deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::corpus::SymbolId;
use crate::model::{ModelError, SequenceModel};

/// Decoding strategy selector, as written in CLI flags and record files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Greedy,
    Beam { width: usize },
    Exact,
    BruteForce,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy => write!(f, "greedy"),
            Strategy::Beam { width } => write!(f, "beam:{}", width),
            Strategy::Exact => write!(f, "exact"),
            Strategy::BruteForce => write!(f, "brute_force"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "exact" => Ok(Strategy::Exact),
            "brute_force" => Ok(Strategy::BruteForce),
            _ => {
                if let Some(width) = s.strip_prefix("beam:") {
                    let width: usize = width
                        .parse()
                        .map_err(|_| format!("bad beam width in {:?}", s))?;
                    if width == 0 {
                        return Err("beam width must be >= 1".into());
                    }
                    Ok(Strategy::Beam { width })
                } else {
                    Err(format!(
                        "unknown strategy {:?} (expected greedy, beam:K, exact, brute_force)",
                        s
                    ))
                }
            }
        }
    }
}

/// A (possibly complete) search hypothesis: prefix, cumulative log score,
/// and whether EOS has been emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub prefix: Vec<SymbolId>,
    pub score: f64,
    pub complete: bool,
}

/// Configuration shared by the decoding strategies.
#[derive(Debug, Clone, Default)]
pub struct DecodeConfig {
    /// Beam width for [`beam_decode`]; must be >= 1 there.
    pub beam_width: usize,
    /// Hypothesis length cap. `None` resolves to `2 * |x| + 5`.
    pub max_len: Option<usize>,
    /// Prune exact-search pushes scoring strictly below this bound.
    pub lower_bound: Option<f64>,
    /// Complete hypothesis backing `lower_bound`; returned if pruning
    /// exhausts the queue.
    pub bound_witness: Option<Hypothesis>,
    /// Abort exact search when the queue would exceed this size.
    pub queue_capacity: Option<usize>,
}

impl DecodeConfig {
    pub fn with_beam(width: usize) -> Self {
        DecodeConfig {
            beam_width: width,
            ..DecodeConfig::default()
        }
    }

    pub fn resolved_max_len(&self, input_len: usize) -> usize {
        self.max_len.unwrap_or(2 * input_len + 5)
    }
}

/// Search counters: model expansions, peak queue size, wall time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub max_queue: usize,
    pub seconds: f64,
}

/// Decoded output: the winning sequence (possibly empty), its exact model
/// score, and the search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub y: Vec<SymbolId>,
    pub score: f64,
    pub stats: SearchStats,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
    #[error("queue capacity {capacity} exceeded")]
    QueueCapacityExceeded {
        capacity: usize,
        best_so_far: Option<Hypothesis>,
    },
    #[error("search space exhausted without a finite complete hypothesis")]
    Exhausted,
    #[error("brute force space of {hypotheses:.0} hypotheses exceeds the {limit} guard")]
    SpaceTooLarge { hypotheses: f64, limit: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Total hypothesis order: higher score, then shorter, then lexicographically
/// smaller. `Ordering::Greater` means `a` is preferred.
fn better(score_a: f64, prefix_a: &[SymbolId], score_b: f64, prefix_b: &[SymbolId]) -> Ordering {
    score_a
        .total_cmp(&score_b)
        .then_with(|| prefix_b.len().cmp(&prefix_a.len()))
        .then_with(|| prefix_b.cmp(prefix_a))
}

/// Greedy decoding: follow the per-step argmax (ties toward the lowest
/// symbol id) until EOS or the length cap, where EOS is force-appended and
/// scored. Equivalent to beam search with width 1.
pub fn greedy_decode<M: SequenceModel>(
    model: &M,
    x: &[SymbolId],
    cfg: &DecodeConfig,
) -> Result<DecodeResult, DecodeError> {
    let start = Instant::now();
    let max_len = cfg.resolved_max_len(x.len());
    let eos = model.eos();
    let (mut state, mut dist) = model.begin(x)?;
    let mut nodes = 1u64;
    let mut prefix = Vec::new();
    let mut score = 0.0;
    loop {
        if prefix.len() == max_len {
            score += dist.lp(eos);
            break;
        }
        let best = dist.argmax();
        score += dist.lp(best);
        if best == eos {
            break;
        }
        prefix.push(best);
        let (next_state, next_dist) = model.extend(&state, best)?;
        state = next_state;
        dist = next_dist;
        nodes += 1;
    }
    Ok(DecodeResult {
        y: prefix,
        score,
        stats: SearchStats {
            nodes_expanded: nodes,
            max_queue: 1,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

struct Beam<S> {
    prefix: Vec<SymbolId>,
    score: f64,
    state: S,
    dist: crate::model::ConditionalDistribution,
}

/// Standard beam search without length normalization. Each step ranks every
/// extension of the live beams, EOS included, in the global tie order; EOS
/// candidates that outrank the k-th surviving symbol extension retire to the
/// completed pool and the k best symbol extensions form the next beam. The
/// search stops once the best completed score is at least the best incomplete
/// score (extension can never raise a score), when every beam has completed,
/// or at the length cap. With `k = 1` this reduces exactly to greedy search.
pub fn beam_decode<M: SequenceModel>(
    model: &M,
    x: &[SymbolId],
    cfg: &DecodeConfig,
) -> Result<DecodeResult, DecodeError> {
    let start = Instant::now();
    let k = cfg.beam_width;
    if k == 0 {
        return Err(DecodeError::InvalidConfig("beam width must be >= 1".into()));
    }
    let max_len = cfg.resolved_max_len(x.len());
    let eos = model.eos();
    let vocab = model.vocab_size() as SymbolId;

    let (state0, dist0) = model.begin(x)?;
    let mut nodes = 1u64;
    let mut max_queue = 1usize;
    let mut beams = vec![Beam {
        prefix: Vec::new(),
        score: 0.0,
        state: state0,
        dist: dist0,
    }];
    let mut best_complete: Option<(Vec<SymbolId>, f64)> = None;

    loop {
        // Candidate extensions: (parent index, Some(symbol) or None for the
        // EOS completion, score). Beams at the length cap only complete.
        let mut candidates: Vec<(usize, Option<SymbolId>, f64)> = Vec::new();
        for (i, beam) in beams.iter().enumerate() {
            let complete_score = beam.score + beam.dist.lp(eos);
            if complete_score > f64::NEG_INFINITY {
                candidates.push((i, None, complete_score));
            }
            if beam.prefix.len() < max_len {
                for sym in 0..vocab {
                    if sym == eos {
                        continue;
                    }
                    let lp = beam.dist.lp(sym);
                    if lp > f64::NEG_INFINITY {
                        candidates.push((i, Some(sym), beam.score + lp));
                    }
                }
            }
        }
        if candidates.is_empty() {
            // Nothing finite to do; force-complete the best live beam the
            // way greedy does at the length cap.
            if best_complete.is_none() {
                if let Some(best) = beams
                    .iter()
                    .max_by(|a, b| better(a.score, &a.prefix, b.score, &b.prefix))
                {
                    best_complete = Some((best.prefix.clone(), best.score + best.dist.lp(eos)));
                }
            }
            break;
        }
        // Parents share a length, so the global tie order reduces to: score,
        // then completions before extensions (shorter hypothesis), then
        // lexicographic (parent prefix, symbol).
        candidates.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| a.1.is_some().cmp(&b.1.is_some()))
                .then_with(|| beams[a.0].prefix.cmp(&beams[b.0].prefix))
                .then_with(|| a.1.cmp(&b.1))
        });

        let mut survivors: Vec<(usize, SymbolId, f64)> = Vec::with_capacity(k);
        for (parent, sym, score) in candidates {
            match sym {
                None => {
                    let replace = match &best_complete {
                        None => true,
                        Some((prefix, best)) => {
                            better(score, &beams[parent].prefix, *best, prefix) == Ordering::Greater
                        }
                    };
                    if replace {
                        best_complete = Some((beams[parent].prefix.clone(), score));
                    }
                }
                Some(sym) => {
                    survivors.push((parent, sym, score));
                    if survivors.len() == k {
                        break;
                    }
                }
            }
        }

        let mut next = Vec::with_capacity(survivors.len());
        for (parent, sym, score) in survivors {
            let (state, dist) = model.extend(&beams[parent].state, sym)?;
            nodes += 1;
            let mut prefix = beams[parent].prefix.clone();
            prefix.push(sym);
            next.push(Beam {
                prefix,
                score,
                state,
                dist,
            });
        }
        beams = next;
        max_queue = max_queue.max(beams.len());
        if beams.is_empty() {
            break;
        }
        if let Some((_, complete_score)) = &best_complete {
            let best_incomplete = beams
                .iter()
                .map(|b| b.score)
                .fold(f64::NEG_INFINITY, f64::max);
            if *complete_score >= best_incomplete {
                break;
            }
        }
    }

    let (y, score) = best_complete.ok_or(DecodeError::Exhausted)?;
    Ok(DecodeResult {
        y,
        score,
        stats: SearchStats {
            nodes_expanded: nodes,
            max_queue,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

enum NodeKind<S> {
    Complete,
    Pending { parent: Arc<S>, last: SymbolId },
}

struct Node<S> {
    prefix: Vec<SymbolId>,
    score: f64,
    kind: NodeKind<S>,
}

impl<S> PartialEq for Node<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_order(other) == Ordering::Equal
    }
}
impl<S> Eq for Node<S> {}
impl<S> PartialOrd for Node<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S> Ord for Node<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_order(other)
    }
}

impl<S> Node<S> {
    fn cmp_order(&self, other: &Self) -> Ordering {
        better(self.score, &self.prefix, other.score, &other.prefix)
    }
}

/// Exact MAP decoding: best-first search over prefixes. The first complete
/// hypothesis popped is the global optimum because scores are monotonically
/// non-increasing in length. An optional lower bound from any complete
/// hypothesis prunes strictly-worse pushes without affecting the result.
pub fn dijkstra_decode<M: SequenceModel>(
    model: &M,
    x: &[SymbolId],
    cfg: &DecodeConfig,
) -> Result<DecodeResult, DecodeError> {
    let start = Instant::now();
    let max_len = cfg.resolved_max_len(x.len());
    let eos = model.eos();
    let vocab = model.vocab_size() as SymbolId;
    let bound = cfg.lower_bound.unwrap_or(f64::NEG_INFINITY);

    let mut heap: BinaryHeap<Node<M::State>> = BinaryHeap::new();
    let mut nodes = 1u64;
    let mut max_queue = 0usize;
    let mut best_complete_seen: Option<Hypothesis> = None;

    let (state0, dist0) = model.begin(x)?;

    // Push the EOS-completion and every finite single-symbol extension of a
    // freshly expanded node, honoring the bound, length cap, and capacity.
    let push_children = |heap: &mut BinaryHeap<Node<M::State>>,
                         best_seen: &mut Option<Hypothesis>,
                         max_queue: &mut usize,
                         state: M::State,
                         dist: &crate::model::ConditionalDistribution,
                         prefix: &[SymbolId],
                         score: f64|
     -> Result<(), DecodeError> {
        let eos_score = score + dist.lp(eos);
        if eos_score > f64::NEG_INFINITY && eos_score >= bound {
            let replace = match best_seen {
                None => true,
                Some(h) => better(eos_score, prefix, h.score, &h.prefix) == Ordering::Greater,
            };
            if replace {
                *best_seen = Some(Hypothesis {
                    prefix: prefix.to_vec(),
                    score: eos_score,
                    complete: true,
                });
            }
            heap.push(Node {
                prefix: prefix.to_vec(),
                score: eos_score,
                kind: NodeKind::Complete,
            });
        }
        if prefix.len() < max_len {
            let parent = Arc::new(state);
            for sym in 0..vocab {
                if sym == eos {
                    continue;
                }
                let lp = dist.lp(sym);
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let child_score = score + lp;
                if child_score < bound {
                    continue;
                }
                let mut child_prefix = Vec::with_capacity(prefix.len() + 1);
                child_prefix.extend_from_slice(prefix);
                child_prefix.push(sym);
                heap.push(Node {
                    prefix: child_prefix,
                    score: child_score,
                    kind: NodeKind::Pending {
                        parent: Arc::clone(&parent),
                        last: sym,
                    },
                });
            }
        }
        *max_queue = (*max_queue).max(heap.len());
        if let Some(cap) = cfg.queue_capacity {
            if heap.len() > cap {
                return Err(DecodeError::QueueCapacityExceeded {
                    capacity: cap,
                    best_so_far: best_seen.clone(),
                });
            }
        }
        Ok(())
    };

    push_children(
        &mut heap,
        &mut best_complete_seen,
        &mut max_queue,
        state0,
        &dist0,
        &[],
        0.0,
    )?;

    while let Some(node) = heap.pop() {
        match node.kind {
            NodeKind::Complete => {
                return Ok(DecodeResult {
                    y: node.prefix,
                    score: node.score,
                    stats: SearchStats {
                        nodes_expanded: nodes,
                        max_queue,
                        seconds: start.elapsed().as_secs_f64(),
                    },
                });
            }
            NodeKind::Pending { parent, last } => {
                let (state, dist) = model.extend(&parent, last)?;
                nodes += 1;
                push_children(
                    &mut heap,
                    &mut best_complete_seen,
                    &mut max_queue,
                    state,
                    &dist,
                    &node.prefix,
                    node.score,
                )?;
            }
        }
    }

    // Everything was pruned away; fall back to the hypothesis that supplied
    // the bound when the caller gave one.
    match &cfg.bound_witness {
        Some(witness) => Ok(DecodeResult {
            y: witness.prefix.clone(),
            score: witness.score,
            stats: SearchStats {
                nodes_expanded: nodes,
                max_queue,
                seconds: start.elapsed().as_secs_f64(),
            },
        }),
        None => Err(DecodeError::Exhausted),
    }
}

/// Guard threshold for [`brute_force_argmax`].
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Exhaustively score every sequence up to `max_len` and return the best by
/// the global tie order. Refuses spaces larger than `(|V|+1)^max_len >`
/// [`BRUTE_FORCE_LIMIT`].
pub fn brute_force_argmax<M: SequenceModel>(
    model: &M,
    x: &[SymbolId],
    max_len: usize,
) -> Result<DecodeResult, DecodeError> {
    let start = Instant::now();
    let space = (model.vocab_size() as f64).powi(max_len as i32);
    if !space.is_finite() || space > BRUTE_FORCE_LIMIT as f64 {
        return Err(DecodeError::SpaceTooLarge {
            hypotheses: space,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let eos = model.eos();
    let vocab = model.vocab_size() as SymbolId;
    let mut nodes = 1u64;
    let mut best: Option<(Vec<SymbolId>, f64)> = None;

    struct Dfs<'m, M: SequenceModel> {
        model: &'m M,
        eos: SymbolId,
        vocab: SymbolId,
        max_len: usize,
    }

    impl<'m, M: SequenceModel> Dfs<'m, M> {
        fn go(
            &self,
            state: &M::State,
            dist: &crate::model::ConditionalDistribution,
            prefix: &mut Vec<SymbolId>,
            score: f64,
            best: &mut Option<(Vec<SymbolId>, f64)>,
            nodes: &mut u64,
        ) -> Result<(), DecodeError> {
            let complete = score + dist.lp(self.eos);
            if complete > f64::NEG_INFINITY {
                let replace = match best {
                    None => true,
                    Some((b_prefix, b_score)) => {
                        better(complete, prefix, *b_score, b_prefix) == Ordering::Greater
                    }
                };
                if replace {
                    *best = Some((prefix.clone(), complete));
                }
            }
            if prefix.len() < self.max_len {
                for sym in 0..self.vocab {
                    if sym == self.eos {
                        continue;
                    }
                    let lp = dist.lp(sym);
                    if lp == f64::NEG_INFINITY {
                        continue;
                    }
                    let (state2, dist2) = self.model.extend(state, sym)?;
                    *nodes += 1;
                    prefix.push(sym);
                    self.go(&state2, &dist2, prefix, score + lp, best, nodes)?;
                    prefix.pop();
                }
            }
            Ok(())
        }
    }

    let (state0, dist0) = model.begin(x)?;
    let dfs = Dfs {
        model,
        eos,
        vocab,
        max_len,
    };
    let mut prefix = Vec::new();
    dfs.go(&state0, &dist0, &mut prefix, 0.0, &mut best, &mut nodes)?;

    let (y, score) = best.ok_or(DecodeError::Exhausted)?;
    Ok(DecodeResult {
        y,
        score,
        stats: SearchStats {
            nodes_expanded: nodes,
            max_queue: 0,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Run the strategy selected by `strategy` with the shared configuration.
pub fn decode<M: SequenceModel>(
    model: &M,
    x: &[SymbolId],
    strategy: Strategy,
    cfg: &DecodeConfig,
) -> Result<DecodeResult, DecodeError> {
    match strategy {
        Strategy::Greedy => greedy_decode(model, x, cfg),
        Strategy::Beam { width } => {
            let mut cfg = cfg.clone();
            cfg.beam_width = width;
            beam_decode(model, x, &cfg)
        }
        Strategy::Exact => dijkstra_decode(model, x, cfg),
        Strategy::BruteForce => brute_force_argmax(model, x, cfg.resolved_max_len(x.len())),
    }
}
