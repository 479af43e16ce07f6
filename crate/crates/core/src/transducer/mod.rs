//! A small trainable character-level encoder–decoder with attention.
//!
//! The encoder is a single-layer bidirectional gated recurrent network; the
//! decoder runs the same cell over the previous target embedding concatenated
//! with the previous attention context, attends over the encoder states with
//! dot-product attention, and projects to a log-softmax over the full symbol
//! table. Training is teacher-forced maximum likelihood with hand-written
//! reverse-mode gradients, adaptive-moment updates, global-norm clipping, and
//! early stopping on dev exact match.
//!
//! Everything is double precision and single-threaded by default, so a fixed
//! seed reproduces parameters bit for bit.

mod io;
mod net;

pub use io::{load_model, save_model, ModelIoError};

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::corpus::{EncodedSample, SymbolId, Vocabulary, BOS, EOS};
use crate::model::{ConditionalDistribution, ModelError, SequenceModel};

use net::{Dims, Mat};

/// Coordinate-subset seed for [`check_gradients`].
const GRADCHECK_SEED: u64 = 0x0063_6865_636b;
/// Smallest gradient magnitude a central difference at ε around 1e-5 can
/// resolve above double-precision roundoff, with margin.
pub const GRADCHECK_SIGNAL_FLOOR: f64 = 1e-6;
/// Salt separating the shuffle stream from parameter initialization.
const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Training and architecture settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            embed_dim: 64,
            hidden_dim: 128,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            grad_clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), TransducerError> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(TransducerError::BadHyper("dimensions must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TransducerError::BadHyper(
                "learning rate must be > 0".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TransducerError::BadHyper(
                "batch size and max epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TransducerError {
    #[error("invalid hyperparameters: {0}")]
    BadHyper(String),
    #[error("batch must be non-empty")]
    EmptyBatch,
    #[error("training set must be non-empty")]
    EmptyTrainSet,
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One gated-recurrent cell: gate and candidate weights over the input (`w*`)
/// and the carried state (`u*`), plus biases.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GruCell {
    pub wz: Mat,
    pub uz: Mat,
    pub bz: Vec<f64>,
    pub wr: Mat,
    pub ur: Mat,
    pub br: Vec<f64>,
    pub wh: Mat,
    pub uh: Mat,
    pub bh: Vec<f64>,
}

impl GruCell {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruCell {
            wz: Mat::zeros(hidden_dim, input_dim),
            uz: Mat::zeros(hidden_dim, hidden_dim),
            bz: vec![0.0; hidden_dim],
            wr: Mat::zeros(hidden_dim, input_dim),
            ur: Mat::zeros(hidden_dim, hidden_dim),
            br: vec![0.0; hidden_dim],
            wh: Mat::zeros(hidden_dim, input_dim),
            uh: Mat::zeros(hidden_dim, hidden_dim),
            bh: vec![0.0; hidden_dim],
        }
    }
}

/// Is a tensor a bias vector (zero-initialized) or a weight matrix?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TensorRole {
    Weight,
    Bias,
}

/// All learned weights. The same structure holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub(crate) src_embed: Mat,
    pub(crate) tgt_embed: Mat,
    pub(crate) enc_fwd: GruCell,
    pub(crate) enc_bwd: GruCell,
    pub(crate) dec: GruCell,
    pub(crate) attn: Mat,
    pub(crate) out_w: Mat,
    pub(crate) out_b: Vec<f64>,
}

impl ModelParameters {
    fn new_zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let (n, e, h) = (vocab_size, embed_dim, hidden_dim);
        ModelParameters {
            src_embed: Mat::zeros(n, e),
            tgt_embed: Mat::zeros(n, e),
            enc_fwd: GruCell::zeros(e, h),
            enc_bwd: GruCell::zeros(e, h),
            dec: GruCell::zeros(e + 2 * h, h),
            attn: Mat::zeros(h, 2 * h),
            out_w: Mat::zeros(n, 3 * h),
            out_b: vec![0.0; n],
        }
    }

    /// Zero-valued gradient structure with matching shapes.
    pub fn zeros_like(&self) -> Self {
        let d = self.dims();
        ModelParameters::new_zeros(d.n, d.e, d.h)
    }

    pub(crate) fn dims(&self) -> Dims {
        Dims {
            n: self.src_embed.rows,
            e: self.src_embed.cols,
            h: self.attn.rows,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.src_embed.rows
    }

    /// Canonical tensor manifest `(name, rows, cols)` in storage order.
    /// Bias vectors report `cols == 1`.
    pub fn manifest(&self) -> Vec<(&'static str, usize, usize)> {
        self.entries()
            .into_iter()
            .map(|(name, _, rows, cols)| (name, rows, cols))
            .collect()
    }

    fn entries(&self) -> Vec<(&'static str, TensorRole, usize, usize)> {
        fn cell_entries(
            names: [&'static str; 9],
            c: &GruCell,
        ) -> Vec<(&'static str, TensorRole, usize, usize)> {
            vec![
                (names[0], TensorRole::Weight, c.wz.rows, c.wz.cols),
                (names[1], TensorRole::Weight, c.uz.rows, c.uz.cols),
                (names[2], TensorRole::Bias, c.bz.len(), 1),
                (names[3], TensorRole::Weight, c.wr.rows, c.wr.cols),
                (names[4], TensorRole::Weight, c.ur.rows, c.ur.cols),
                (names[5], TensorRole::Bias, c.br.len(), 1),
                (names[6], TensorRole::Weight, c.wh.rows, c.wh.cols),
                (names[7], TensorRole::Weight, c.uh.rows, c.uh.cols),
                (names[8], TensorRole::Bias, c.bh.len(), 1),
            ]
        }
        let mut out = vec![
            (
                "src_embed",
                TensorRole::Weight,
                self.src_embed.rows,
                self.src_embed.cols,
            ),
            (
                "tgt_embed",
                TensorRole::Weight,
                self.tgt_embed.rows,
                self.tgt_embed.cols,
            ),
        ];
        out.extend(cell_entries(
            [
                "enc_fwd.wz",
                "enc_fwd.uz",
                "enc_fwd.bz",
                "enc_fwd.wr",
                "enc_fwd.ur",
                "enc_fwd.br",
                "enc_fwd.wh",
                "enc_fwd.uh",
                "enc_fwd.bh",
            ],
            &self.enc_fwd,
        ));
        out.extend(cell_entries(
            [
                "enc_bwd.wz",
                "enc_bwd.uz",
                "enc_bwd.bz",
                "enc_bwd.wr",
                "enc_bwd.ur",
                "enc_bwd.br",
                "enc_bwd.wh",
                "enc_bwd.uh",
                "enc_bwd.bh",
            ],
            &self.enc_bwd,
        ));
        out.extend(cell_entries(
            [
                "dec.wz", "dec.uz", "dec.bz", "dec.wr", "dec.ur", "dec.br", "dec.wh", "dec.uh",
                "dec.bh",
            ],
            &self.dec,
        ));
        out.push(("attn", TensorRole::Weight, self.attn.rows, self.attn.cols));
        out.push((
            "out_w",
            TensorRole::Weight,
            self.out_w.rows,
            self.out_w.cols,
        ));
        out.push(("out_b", TensorRole::Bias, self.out_b.len(), 1));
        out
    }

    /// Visit every tensor's storage in manifest order.
    pub(crate) fn for_each(&self, mut f: impl FnMut(&[f64])) {
        fn cell(c: &GruCell, f: &mut impl FnMut(&[f64])) {
            f(&c.wz.data);
            f(&c.uz.data);
            f(&c.bz);
            f(&c.wr.data);
            f(&c.ur.data);
            f(&c.br);
            f(&c.wh.data);
            f(&c.uh.data);
            f(&c.bh);
        }
        f(&self.src_embed.data);
        f(&self.tgt_embed.data);
        cell(&self.enc_fwd, &mut f);
        cell(&self.enc_bwd, &mut f);
        cell(&self.dec, &mut f);
        f(&self.attn.data);
        f(&self.out_w.data);
        f(&self.out_b);
    }

    pub(crate) fn for_each_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        fn cell(c: &mut GruCell, f: &mut impl FnMut(&mut [f64])) {
            f(&mut c.wz.data);
            f(&mut c.uz.data);
            f(&mut c.bz);
            f(&mut c.wr.data);
            f(&mut c.ur.data);
            f(&mut c.br);
            f(&mut c.wh.data);
            f(&mut c.uh.data);
            f(&mut c.bh);
        }
        f(&mut self.src_embed.data);
        f(&mut self.tgt_embed.data);
        cell(&mut self.enc_fwd, &mut f);
        cell(&mut self.enc_bwd, &mut f);
        cell(&mut self.dec, &mut f);
        f(&mut self.attn.data);
        f(&mut self.out_w.data);
        f(&mut self.out_b);
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each(|t| n += t.len());
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat_get(&self, idx: usize) -> f64 {
        let mut offset = 0;
        let mut value = f64::NAN;
        self.for_each(|t| {
            if idx >= offset && idx < offset + t.len() {
                value = t[idx - offset];
            }
            offset += t.len();
        });
        value
    }

    fn flat_set(&mut self, idx: usize, v: f64) {
        let mut offset = 0;
        self.for_each_mut(|t| {
            if idx >= offset && idx < offset + t.len() {
                t[idx - offset] = v;
            }
            offset += t.len();
        });
    }

    /// Flatten all tensors in manifest order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(|t| out.extend_from_slice(t));
        out
    }
}

/// Initialize parameters: weight matrices uniform in `[-r, r]` with
/// `r = sqrt(6 / (fan_in + fan_out))` (`fan_out` = rows, `fan_in` = cols),
/// biases zero. Tensors fill in manifest order, row-major, so the result is
/// deterministic in the seed.
pub fn init_params(h: &Hyperparameters, vocab_size: usize) -> ModelParameters {
    let mut params = ModelParameters::new_zeros(vocab_size, h.embed_dim, h.hidden_dim);
    let mut rng = ChaCha20Rng::seed_from_u64(h.seed);
    let entries = params.entries();
    let mut idx = 0;
    params.for_each_mut(|t| {
        let (_, role, rows, cols) = entries[idx];
        idx += 1;
        if role == TensorRole::Bias {
            return;
        }
        let r = (6.0 / (rows + cols) as f64).sqrt();
        for w in t.iter_mut() {
            *w = rng.random_range(-r..=r);
        }
    });
    params
}

/// Teacher-forced batch loss: mean negative log likelihood per scored step
/// (every target symbol plus the final EOS). Also returns each sample's
/// per-step target log probabilities.
pub fn forward_loss(
    params: &ModelParameters,
    batch: &[EncodedSample],
) -> Result<(f64, Vec<Vec<f64>>), TransducerError> {
    if batch.is_empty() {
        return Err(TransducerError::EmptyBatch);
    }
    let dims = params.dims();
    let mut nll = 0.0;
    let mut tokens = 0usize;
    let mut per_step = Vec::with_capacity(batch.len());
    for sample in batch {
        let (_, lps) = net::forward_sample(params, dims, &sample.x, &sample.y)?;
        nll -= lps.iter().sum::<f64>();
        tokens += lps.len();
        per_step.push(lps);
    }
    let loss = nll / tokens as f64;
    if !loss.is_finite() {
        return Err(TransducerError::Model(ModelError::NonFinite));
    }
    Ok((loss, per_step))
}

/// Exact analytic gradients of [`forward_loss`] over the batch, unclipped.
pub fn gradients(
    params: &ModelParameters,
    batch: &[EncodedSample],
) -> Result<ModelParameters, TransducerError> {
    Ok(loss_and_gradients(params, batch)?.1)
}

fn loss_and_gradients(
    params: &ModelParameters,
    batch: &[EncodedSample],
) -> Result<(f64, ModelParameters), TransducerError> {
    if batch.is_empty() {
        return Err(TransducerError::EmptyBatch);
    }
    let dims = params.dims();
    let mut caches = Vec::with_capacity(batch.len());
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for sample in batch {
        let (cache, lps) = net::forward_sample(params, dims, &sample.x, &sample.y)?;
        nll -= lps.iter().sum::<f64>();
        tokens += lps.len();
        caches.push(cache);
    }
    let loss = nll / tokens as f64;
    if !loss.is_finite() {
        return Err(TransducerError::Model(ModelError::NonFinite));
    }
    let scale = 1.0 / tokens as f64;
    let mut grads = params.zeros_like();
    for (sample, cache) in batch.iter().zip(&caches) {
        net::backward_sample(params, dims, &sample.x, &sample.y, cache, scale, &mut grads);
    }
    Ok((loss, grads))
}

/// Compare analytic gradients against central finite differences
/// `(L(w+ε) − L(w−ε)) / 2ε` on a fixed random subset of at least 200
/// coordinates. Returns the maximum relative error
/// `|a − n| / max(|a|, |n|, 1e-8)` over the subset.
///
/// The subset is drawn from coordinates whose analytic gradient magnitude is
/// at least [`GRADCHECK_SIGNAL_FLOOR`]: the difference quotient carries
/// roundoff of roughly `|L| * 2^-52 / ε` (about 3e-11 at ε = 1e-5), so a
/// smaller gradient cannot be distinguished from that noise by any
/// implementation and would dominate the relative error spuriously. When
/// fewer than 200 coordinates qualify (tiny or all-zero networks), the
/// subset falls back to every coordinate.
pub fn check_gradients(
    params: &ModelParameters,
    sample: &EncodedSample,
    epsilon: f64,
) -> Result<f64, TransducerError> {
    const COORDS: usize = 200;
    let batch = std::slice::from_ref(sample);
    let analytic = gradients(params, batch)?.flatten();
    let total = analytic.len();
    let eligible: Vec<usize> = (0..total)
        .filter(|&i| analytic[i].abs() >= GRADCHECK_SIGNAL_FLOOR)
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(GRADCHECK_SEED);
    let indices: Vec<usize> = if eligible.len() >= COORDS {
        rand::seq::index::sample(&mut rng, eligible.len(), COORDS)
            .into_iter()
            .map(|i| eligible[i])
            .collect()
    } else if total <= COORDS {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut rng, total, COORDS).into_vec()
    };
    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    for idx in indices {
        let original = probe.flat_get(idx);
        probe.flat_set(idx, original + epsilon);
        let (loss_plus, _) = forward_loss(&probe, batch)?;
        probe.flat_set(idx, original - epsilon);
        let (loss_minus, _) = forward_loss(&probe, batch)?;
        probe.flat_set(idx, original);
        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Per-epoch training history plus the selected (best-dev) epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean train NLL per token, one entry per completed epoch.
    pub train_loss: Vec<f64>,
    /// Dev exact-match accuracy under greedy decoding, per epoch.
    pub dev_accuracy: Vec<f64>,
    /// 1-based epoch whose parameters were returned (best dev accuracy,
    /// earliest on ties).
    pub selected_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// Plain-text rendering written next to trained models.
    pub fn to_text(&self) -> String {
        let mut out = String::from("train report v1\n");
        out.push_str(&format!("epochs\t{}\n", self.train_loss.len()));
        out.push_str(&format!("selected_epoch\t{}\n", self.selected_epoch));
        out.push_str(&format!("wall_seconds\t{}\n", self.wall_seconds));
        out.push_str("epoch\ttrain_loss\tdev_accuracy\n");
        for (i, (loss, acc)) in self.train_loss.iter().zip(&self.dev_accuracy).enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", i + 1, loss, acc));
        }
        out
    }

    pub fn best_dev_accuracy(&self) -> f64 {
        self.dev_accuracy
            .get(self.selected_epoch.saturating_sub(1))
            .copied()
            .unwrap_or(0.0)
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_step(
    params: &mut ModelParameters,
    grads: &ModelParameters,
    state: &mut AdamState,
    lr: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let mut flat_grads = Vec::with_capacity(state.m.len());
    grads.for_each(|t| flat_grads.extend_from_slice(t));
    let mut i = 0;
    params.for_each_mut(|t| {
        for w in t.iter_mut() {
            let g = flat_grads[i];
            state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
            state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            i += 1;
        }
    });
}

/// Scale gradients so their global L2 norm is at most `clip`.
fn clip_gradients(grads: &mut ModelParameters, clip: f64) {
    let mut sq = 0.0;
    grads.for_each(|t| sq += t.iter().map(|g| g * g).sum::<f64>());
    let norm = sq.sqrt();
    if norm > clip && norm > 0.0 {
        let factor = clip / norm;
        grads.for_each_mut(|t| t.iter_mut().for_each(|g| *g *= factor));
    }
}

/// Greedy exact-match accuracy of `params` over a sample set.
fn exact_match(
    params: &ModelParameters,
    samples: &[EncodedSample],
) -> Result<f64, TransducerError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let dims = params.dims();
    let mut hits = 0usize;
    for s in samples {
        let max_len = 2 * s.x.len() + 5;
        let predicted = net::greedy_predict(params, dims, &s.x, max_len)?;
        if predicted == s.y {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Train with shuffled mini-batches, adaptive-moment updates (β1 = 0.9,
/// β2 = 0.999, ε = 1e-8), global-norm clipping, and early stopping after
/// `patience` epochs without dev exact-match improvement. Returns the
/// parameters of the best dev epoch (earliest on ties) and the per-epoch
/// history. Fully deterministic given the seed.
pub fn train(
    train_set: &[EncodedSample],
    dev_set: &[EncodedSample],
    vocab: &Vocabulary,
    h: &Hyperparameters,
) -> Result<(ModelParameters, TrainReport), TransducerError> {
    h.validate()?;
    if train_set.is_empty() {
        return Err(TransducerError::EmptyTrainSet);
    }
    let start = Instant::now();
    let mut params = init_params(h, vocab.len());
    let mut adam = AdamState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(h.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut losses = Vec::new();
    let mut accuracies = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut stale_epochs = 0usize;

    for epoch in 1..=h.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for (batch_idx, chunk) in order.chunks(h.batch_size).enumerate() {
            let batch: Vec<EncodedSample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, mut grads) = loss_and_gradients(&params, &batch).map_err(|e| match e {
                TransducerError::Model(ModelError::NonFinite) => TransducerError::Diverged {
                    epoch,
                    batch: batch_idx,
                },
                other => other,
            })?;
            let tokens: usize = batch.iter().map(|s| s.y.len() + 1).sum();
            epoch_nll += loss * tokens as f64;
            epoch_tokens += tokens;
            clip_gradients(&mut grads, h.grad_clip_norm);
            adam_step(&mut params, &grads, &mut adam, h.learning_rate);
        }
        losses.push(epoch_nll / epoch_tokens as f64);
        let acc = exact_match(&params, dev_set)?;
        accuracies.push(acc);
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best_params = params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= h.patience {
                break;
            }
        }
        // Dev accuracy cannot improve past 1; stop as soon as it gets there.
        if best_acc >= 1.0 {
            break;
        }
    }

    let report = TrainReport {
        train_loss: losses,
        dev_accuracy: accuracies,
        selected_epoch: best_epoch,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((best_params, report))
}

/// A trained (or initialized) transducer bound to its vocabulary, usable by
/// every decoding strategy through [`SequenceModel`].
#[derive(Debug, Clone)]
pub struct Transducer {
    pub params: ModelParameters,
    pub hyper: Hyperparameters,
    pub vocab: Vocabulary,
}

/// Encoder outputs shared by all hypotheses of one decode.
#[derive(Debug)]
pub struct EncodedSource {
    s: Vec<f64>,
    p: Vec<f64>,
    len: usize,
}

/// Incremental decoder state after producing the current conditional.
#[derive(Debug, Clone)]
pub struct TransducerState {
    enc: Arc<EncodedSource>,
    g: Vec<f64>,
    c: Vec<f64>,
}

impl Transducer {
    pub fn new(params: ModelParameters, hyper: Hyperparameters, vocab: Vocabulary) -> Self {
        Transducer {
            params,
            hyper,
            vocab,
        }
    }
}

impl SequenceModel for Transducer {
    type State = TransducerState;

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn eos(&self) -> SymbolId {
        EOS
    }

    fn begin(&self, x: &[SymbolId]) -> Result<(Self::State, ConditionalDistribution), ModelError> {
        let dims = self.params.dims();
        let enc = net::encoder_forward(&self.params, dims, x)?;
        let source = Arc::new(EncodedSource {
            len: x.len(),
            s: enc.s,
            p: enc.p,
        });
        let g0 = vec![0.0; dims.h];
        let c0 = vec![0.0; 2 * dims.h];
        let step = net::decoder_step(
            &self.params,
            dims,
            &source.s,
            &source.p,
            source.len,
            &g0,
            &c0,
            BOS,
        )?;
        let dist = ConditionalDistribution::new(step.log_probs)?;
        let state = TransducerState {
            enc: source,
            g: step.gru.h,
            c: step.c,
        };
        Ok((state, dist))
    }

    fn extend(
        &self,
        state: &Self::State,
        symbol: SymbolId,
    ) -> Result<(Self::State, ConditionalDistribution), ModelError> {
        if symbol == EOS {
            return Err(ModelError::EosInPrefix);
        }
        let dims = self.params.dims();
        let step = net::decoder_step(
            &self.params,
            dims,
            &state.enc.s,
            &state.enc.p,
            state.enc.len,
            &state.g,
            &state.c,
            symbol,
        )?;
        let dist = ConditionalDistribution::new(step.log_probs)?;
        let next = TransducerState {
            enc: Arc::clone(&state.enc),
            g: step.gru.h,
            c: step.c,
        };
        Ok((next, dist))
    }
}


#[cfg(test)]
mod exhaustive_gradients {
    use super::*;
    use crate::corpus::{build_vocabulary, encode_all, parse_unimorph};

    /// Full-coordinate complement to [`check_gradients`]: every coordinate's
    /// analytic gradient must agree with the central difference to within the
    /// quotient's roundoff scale, with no subset selection involved.
    #[test]
    fn every_coordinate_matches_finite_differences_absolutely() {
        let corpus = "abeda\tabedel\tN;PL\nbadec\tbadecba\tG;SG\ncabe\tcabe\tN;SG\n";
        let samples = parse_unimorph(corpus).unwrap();
        let vocab = build_vocabulary(&samples).unwrap();
        let (encoded, _) = encode_all(&vocab, &samples);
        let hyper = Hyperparameters {
            embed_dim: 8,
            hidden_dim: 12,
            seed: 7100,
            ..Hyperparameters::default()
        };
        let params = init_params(&hyper, vocab.len());
        let batch = std::slice::from_ref(&encoded[0]);
        let analytic = gradients(&params, batch).unwrap().flatten();
        let eps = 1e-5;
        let mut probe = params.clone();
        let mut worst = 0.0f64;
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = probe.flat_get(idx);
            probe.flat_set(idx, orig + eps);
            let (lp, _) = forward_loss(&probe, batch).unwrap();
            probe.flat_set(idx, orig - eps);
            let (lm, _) = forward_loss(&probe, batch).unwrap();
            probe.flat_set(idx, orig);
            let numeric = (lp - lm) / (2.0 * eps);
            worst = worst.max((a - numeric).abs());
        }
        assert!(worst < 1e-9, "worst absolute disagreement {:.3e}", worst);
    }
}
