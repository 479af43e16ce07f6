//! Shared fixtures for the decoding and transducer benchmarks.

use mitd_core::corpus::{build_vocabulary, encode_all, parse_unimorph, EncodedSample, Vocabulary};
use mitd_core::synth::{generate, SynthSpec};
use mitd_core::transducer::{train, Hyperparameters, Transducer};

/// A small trained transducer over the synthetic language, plus encoded test
/// samples to decode.
pub fn trained_fixture() -> (Transducer, Vec<EncodedSample>) {
    let spec = SynthSpec {
        train_count: 400,
        dev_count: 80,
        test_count: 40,
        seed: 77,
        ..SynthSpec::default()
    };
    let data = generate(&spec).expect("synth");
    let train_raw = parse_unimorph(&data.train).expect("train split");
    let dev_raw = parse_unimorph(&data.dev).expect("dev split");
    let test_raw = parse_unimorph(&data.test).expect("test split");
    let vocab: Vocabulary = build_vocabulary(&train_raw).expect("vocabulary");
    let (train_set, _) = encode_all(&vocab, &train_raw);
    let (dev_set, _) = encode_all(&vocab, &dev_raw);
    let (test_set, _) = encode_all(&vocab, &test_raw);
    let hyper = Hyperparameters {
        embed_dim: 32,
        hidden_dim: 48,
        max_epochs: 6,
        patience: 6,
        seed: 77,
        ..Hyperparameters::default()
    };
    let (params, _) = train(&train_set, &dev_set, &vocab, &hyper).expect("training");
    (Transducer::new(params, hyper, vocab), test_set)
}
