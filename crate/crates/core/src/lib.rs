//! Character-level morphological inflection transduction with exact decoding.
//!
//! The crate trains a small encoder–decoder transducer, decodes it with
//! greedy, beam, or provably exact best-first search, and measures how well
//! the model's probabilities are calibrated: search-error rates, empty-string
//! optima, probability gaps, and decode timing.
//!
//! Modules:
//! - [`corpus`]: UniMorph-style parsing, vocabularies, sample encoding.
//! - [`model`]: the locally-normalized sequence-model contract and
//!   table-backed oracle models.
//! - [`transducer`]: the trainable encoder–decoder with hand-written
//!   reverse-mode gradients.
//! - [`search`]: greedy / beam / exact (Dijkstra) / brute-force decoding.
//! - [`calibration`]: the measurement suite and its record/report formats.
//! - [`synth`]: a deterministic synthetic inflection language for
//!   desk-scale experiments.

pub mod calibration;
pub mod corpus;
pub mod model;
pub mod search;
pub mod synth;
pub mod transducer;

pub use corpus::{
    build_vocabulary, classify_resource, encode_all, encode_sample, parse_unimorph, CorpusError,
    EncodedSample, RawSample, ResourceClass, Symbol, SymbolId, SymbolKind, Vocabulary, BOS, EOS,
    PAD, UNK,
};
pub use model::{
    enumerate_hypotheses, log_sum_exp, make_table_model, sample_random_model, toy1,
    ConditionalDistribution, ModelError, SequenceModel, TableModel,
};
pub use search::{
    beam_decode, brute_force_argmax, decode, dijkstra_decode, greedy_decode, DecodeConfig,
    DecodeError, DecodeResult, Hypothesis, SearchStats, Strategy,
};
