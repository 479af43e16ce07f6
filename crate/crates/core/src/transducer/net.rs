//! Forward and reverse passes for the encoder–decoder network.
//!
//! Everything here is plain double-precision slice arithmetic in a fixed
//! evaluation order, so results are bit-reproducible across runs. The
//! backward pass mirrors the forward pass step by step; its correctness is
//! checked against central finite differences in `check_gradients`.

use crate::corpus::SymbolId;
use crate::model::ModelError;

use super::{GruCell, ModelParameters};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out[r] = row(r) · x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// out[r] += row(r) · x
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// out += Aᵀ y
    pub fn tr_matvec_acc(&self, y: &[f64], out: &mut [f64]) {
        for (&yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            axpy(yr, row, out);
        }
    }

    /// A += y xᵀ
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        for (&yr, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if yr != 0.0 {
                axpy(yr, x, row);
            }
        }
    }
}

/// Unrolled dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = 4 * i;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

/// y += alpha * x
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// v := v - log Σ exp(v), numerically stable.
pub(crate) fn log_softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
}

/// Network dimensions derived from the parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub n: usize,
    pub e: usize,
    pub h: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct GruStepCache {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

/// One gated-recurrent step:
/// z = σ(Wz u + Uz h₋ + bz), r = σ(Wr u + Ur h₋ + br),
/// n = tanh(Wh u + Uh (r ⊙ h₋) + bh), h = (1−z) ⊙ h₋ + z ⊙ n.
fn gru_forward(cell: &GruCell, u: &[f64], h_prev: &[f64]) -> GruStepCache {
    let h_dim = cell.bz.len();
    let mut az = cell.bz.clone();
    cell.wz.matvec_acc(u, &mut az);
    cell.uz.matvec_acc(h_prev, &mut az);
    let z: Vec<f64> = az.iter().map(|&a| sigmoid(a)).collect();

    let mut ar = cell.br.clone();
    cell.wr.matvec_acc(u, &mut ar);
    cell.ur.matvec_acc(h_prev, &mut ar);
    let r: Vec<f64> = ar.iter().map(|&a| sigmoid(a)).collect();

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
    let mut ah = cell.bh.clone();
    cell.wh.matvec_acc(u, &mut ah);
    cell.uh.matvec_acc(&rh, &mut ah);
    let n: Vec<f64> = ah.iter().map(|&a| a.tanh()).collect();

    let mut h = vec![0.0; h_dim];
    for i in 0..h_dim {
        h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * n[i];
    }
    GruStepCache { z, r, n, h }
}

/// Reverse of [`gru_forward`]. Accumulates parameter gradients into `grads`,
/// writes the input gradient to `du` and the carried state gradient to
/// `dh_prev` (both overwritten).
#[allow(clippy::too_many_arguments)]
fn gru_backward(
    cell: &GruCell,
    grads: &mut GruCell,
    u: &[f64],
    h_prev: &[f64],
    step: &GruStepCache,
    dh: &[f64],
    du: &mut [f64],
    dh_prev: &mut [f64],
) {
    let h_dim = dh.len();
    let mut dn = vec![0.0; h_dim];
    let mut dz = vec![0.0; h_dim];
    for i in 0..h_dim {
        dn[i] = dh[i] * step.z[i];
        dz[i] = dh[i] * (step.n[i] - h_prev[i]);
        dh_prev[i] = dh[i] * (1.0 - step.z[i]);
    }
    let dah: Vec<f64> = dn
        .iter()
        .zip(&step.n)
        .map(|(d, n)| d * (1.0 - n * n))
        .collect();
    let rh: Vec<f64> = step.r.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    grads.wh.outer_acc(&dah, u);
    grads.uh.outer_acc(&dah, &rh);
    axpy(1.0, &dah, &mut grads.bh);

    let mut drh = vec![0.0; h_dim];
    cell.uh.tr_matvec_acc(&dah, &mut drh);
    let mut dar = vec![0.0; h_dim];
    for i in 0..h_dim {
        let dr = drh[i] * h_prev[i];
        dh_prev[i] += drh[i] * step.r[i];
        dar[i] = dr * step.r[i] * (1.0 - step.r[i]);
    }
    let daz: Vec<f64> = dz
        .iter()
        .zip(&step.z)
        .map(|(d, z)| d * z * (1.0 - z))
        .collect();

    grads.wz.outer_acc(&daz, u);
    grads.uz.outer_acc(&daz, h_prev);
    axpy(1.0, &daz, &mut grads.bz);
    grads.wr.outer_acc(&dar, u);
    grads.ur.outer_acc(&dar, h_prev);
    axpy(1.0, &dar, &mut grads.br);

    du.fill(0.0);
    cell.wz.tr_matvec_acc(&daz, du);
    cell.wr.tr_matvec_acc(&dar, du);
    cell.wh.tr_matvec_acc(&dah, du);
    // The candidate path reaches h_prev only through r ⊙ h_prev, which is
    // already folded in above via drh.
    cell.uz.tr_matvec_acc(&daz, dh_prev);
    cell.ur.tr_matvec_acc(&dar, dh_prev);
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    pub fwd: Vec<GruStepCache>,
    pub bwd: Vec<GruStepCache>,
    /// L × 2H encoder states, forward ⊕ backward per position.
    pub s: Vec<f64>,
    /// L × H attention projections `attn · s_i`.
    pub p: Vec<f64>,
}

/// Run the bidirectional encoder over `x` and pre-project the states for
/// attention.
pub(crate) fn encoder_forward(
    params: &ModelParameters,
    dims: Dims,
    x: &[SymbolId],
) -> Result<EncoderCache, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    for &sym in x {
        if sym as usize >= dims.n {
            return Err(ModelError::SymbolOutOfRange {
                id: sym,
                size: dims.n,
            });
        }
    }
    let len = x.len();
    let h = dims.h;
    let zeros = vec![0.0; h];

    let mut fwd: Vec<GruStepCache> = Vec::with_capacity(len);
    for (i, &sym) in x.iter().enumerate() {
        let h_prev = if i == 0 { &zeros } else { &fwd[i - 1].h };
        let u = params.src_embed.row(sym as usize);
        fwd.push(gru_forward(&params.enc_fwd, u, h_prev));
    }
    let mut bwd: Vec<Option<GruStepCache>> = vec![None; len];
    for (i, &sym) in x.iter().enumerate().rev() {
        let u = params.src_embed.row(sym as usize);
        let step = {
            let h_prev = if i == len - 1 {
                &zeros
            } else {
                &bwd[i + 1].as_ref().unwrap().h
            };
            gru_forward(&params.enc_bwd, u, h_prev)
        };
        bwd[i] = Some(step);
    }
    let bwd: Vec<GruStepCache> = bwd.into_iter().map(|s| s.unwrap()).collect();

    let mut s = vec![0.0; len * 2 * h];
    for i in 0..len {
        s[i * 2 * h..i * 2 * h + h].copy_from_slice(&fwd[i].h);
        s[i * 2 * h + h..(i + 1) * 2 * h].copy_from_slice(&bwd[i].h);
    }
    let mut p = vec![0.0; len * h];
    for i in 0..len {
        params
            .attn
            .matvec(&s[i * 2 * h..(i + 1) * 2 * h], &mut p[i * h..(i + 1) * h]);
    }
    Ok(EncoderCache { fwd, bwd, s, p })
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderStepCache {
    /// Cell input: previous target embedding ⊕ previous context.
    pub u: Vec<f64>,
    pub gru: GruStepCache,
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
    pub log_probs: Vec<f64>,
}

/// One decoder step: advance the cell with the previous symbol and context,
/// attend over the encoder states, and emit `log p(· | x, prefix)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn decoder_step(
    params: &ModelParameters,
    dims: Dims,
    enc_s: &[f64],
    enc_p: &[f64],
    enc_len: usize,
    g_prev: &[f64],
    c_prev: &[f64],
    prev_sym: SymbolId,
) -> Result<DecoderStepCache, ModelError> {
    let (n, e, h) = (dims.n, dims.e, dims.h);
    if prev_sym as usize >= n {
        return Err(ModelError::SymbolOutOfRange {
            id: prev_sym,
            size: n,
        });
    }
    let mut u = vec![0.0; e + 2 * h];
    u[..e].copy_from_slice(params.tgt_embed.row(prev_sym as usize));
    u[e..].copy_from_slice(c_prev);
    let gru = gru_forward(&params.dec, &u, g_prev);

    // Dot-product attention against the pre-projected encoder states.
    let mut scores = vec![0.0; enc_len];
    for i in 0..enc_len {
        scores[i] = dot(&gru.h, &enc_p[i * h..(i + 1) * h]);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut alpha: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let norm: f64 = alpha.iter().sum();
    for a in &mut alpha {
        *a /= norm;
    }
    let mut c = vec![0.0; 2 * h];
    for i in 0..enc_len {
        axpy(alpha[i], &enc_s[i * 2 * h..(i + 1) * 2 * h], &mut c);
    }

    let mut o = vec![0.0; 3 * h];
    o[..h].copy_from_slice(&gru.h);
    o[h..].copy_from_slice(&c);
    let mut log_probs = params.out_b.clone();
    params.out_w.matvec_acc(&o, &mut log_probs);
    log_softmax_inplace(&mut log_probs);

    Ok(DecoderStepCache {
        u,
        gru,
        alpha,
        c,
        log_probs,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct SampleCache {
    pub enc: EncoderCache,
    pub dec: Vec<DecoderStepCache>,
}

/// Teacher-forced forward pass over one `(x, y)` pair. Returns the cache and
/// the log probability of each scored step (every symbol of `y`, then EOS).
pub(crate) fn forward_sample(
    params: &ModelParameters,
    dims: Dims,
    x: &[SymbolId],
    y: &[SymbolId],
) -> Result<(SampleCache, Vec<f64>), ModelError> {
    use crate::corpus::{BOS, EOS};
    for &sym in y {
        if sym as usize >= dims.n {
            return Err(ModelError::SymbolOutOfRange {
                id: sym,
                size: dims.n,
            });
        }
    }
    let enc = encoder_forward(params, dims, x)?;
    let steps = y.len() + 1;
    let mut dec = Vec::with_capacity(steps);
    let mut step_lps = Vec::with_capacity(steps);
    let g0 = vec![0.0; dims.h];
    let c0 = vec![0.0; 2 * dims.h];
    for t in 0..steps {
        let prev = if t == 0 { BOS } else { y[t - 1] };
        let (g_prev, c_prev) = if t == 0 {
            (&g0, &c0)
        } else {
            let last: &DecoderStepCache = &dec[t - 1];
            (&last.gru.h, &last.c)
        };
        let step = decoder_step(params, dims, &enc.s, &enc.p, x.len(), g_prev, c_prev, prev)?;
        let target = if t < y.len() { y[t] } else { EOS };
        let lp = step.log_probs[target as usize];
        if lp.is_nan() || lp == f64::INFINITY {
            return Err(ModelError::NonFinite);
        }
        step_lps.push(lp);
        dec.push(step);
    }
    Ok((SampleCache { enc, dec }, step_lps))
}

/// Reverse pass for one sample: accumulate d(mean loss)/dθ into `grads`.
/// `scale` is the weight of one scored step in the batch loss, i.e.
/// `1 / total_tokens`.
pub(crate) fn backward_sample(
    params: &ModelParameters,
    dims: Dims,
    x: &[SymbolId],
    y: &[SymbolId],
    cache: &SampleCache,
    scale: f64,
    grads: &mut ModelParameters,
) {
    use crate::corpus::{BOS, EOS};
    let (n, e, h) = (dims.n, dims.e, dims.h);
    let len = x.len();
    let steps = y.len() + 1;
    let g0 = vec![0.0; h];

    let mut d_s = vec![0.0; len * 2 * h];
    let mut d_p = vec![0.0; len * h];
    let mut dg_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; 2 * h];
    let mut du = vec![0.0; e + 2 * h];
    let mut dg_prev = vec![0.0; h];

    for t in (0..steps).rev() {
        let step = &cache.dec[t];
        let target = if t < y.len() { y[t] } else { EOS } as usize;
        let prev = if t == 0 { BOS } else { y[t - 1] } as usize;
        let g_prev: &[f64] = if t == 0 { &g0 } else { &cache.dec[t - 1].gru.h };

        // d loss / d logits = (softmax - onehot) * scale
        let mut dlogits: Vec<f64> = step.log_probs.iter().map(|&lp| lp.exp() * scale).collect();
        dlogits[target] -= scale;

        axpy(1.0, &dlogits, &mut grads.out_b);
        let mut do_ = vec![0.0; 3 * h];
        for (j, &dj) in dlogits.iter().enumerate().take(n) {
            if dj != 0.0 {
                let row = grads.out_w.row_mut(j);
                axpy(dj, &step.gru.h, &mut row[..h]);
                axpy(dj, &step.c, &mut row[h..]);
            }
            axpy(dj, params.out_w.row(j), &mut do_);
        }
        let mut dg: Vec<f64> = dg_carry.clone();
        axpy(1.0, &do_[..h], &mut dg);
        let mut dc: Vec<f64> = dc_carry.clone();
        axpy(1.0, &do_[h..], &mut dc);

        // Attention backward: c = Σ α_i s_i, e_i = g · p_i, α = softmax(e).
        let mut dalpha = vec![0.0; len];
        for i in 0..len {
            dalpha[i] = dot(&dc, &cache.enc.s[i * 2 * h..(i + 1) * 2 * h]);
            axpy(step.alpha[i], &dc, &mut d_s[i * 2 * h..(i + 1) * 2 * h]);
        }
        let dot_sum: f64 = step.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for i in 0..len {
            let de = step.alpha[i] * (dalpha[i] - dot_sum);
            axpy(de, &cache.enc.p[i * h..(i + 1) * h], &mut dg);
            axpy(de, &step.gru.h, &mut d_p[i * h..(i + 1) * h]);
        }

        gru_backward(
            &params.dec,
            &mut grads.dec,
            &step.u,
            g_prev,
            &step.gru,
            &dg,
            &mut du,
            &mut dg_prev,
        );
        axpy(1.0, &du[..e], grads.tgt_embed.row_mut(prev));
        dc_carry.copy_from_slice(&du[e..]);
        dg_carry.copy_from_slice(&dg_prev);
    }
    // Gradients into g_0 = 0 and c_0 = 0 end here.

    // Attention projection parameters: p_i = attn · s_i.
    for i in 0..len {
        let dp_i = &d_p[i * h..(i + 1) * h];
        let s_i = &cache.enc.s[i * 2 * h..(i + 1) * 2 * h];
        grads.attn.outer_acc(dp_i, s_i);
        params
            .attn
            .tr_matvec_acc(dp_i, &mut d_s[i * 2 * h..(i + 1) * 2 * h]);
    }

    // Encoder backward, forward direction: position i depends on i-1.
    let zeros = vec![0.0; h];
    let mut dh_carry = vec![0.0; h];
    let mut dh = vec![0.0; h];
    let mut du_e = vec![0.0; e];
    for i in (0..len).rev() {
        dh.copy_from_slice(&d_s[i * 2 * h..i * 2 * h + h]);
        axpy(1.0, &dh_carry, &mut dh);
        let h_prev = if i == 0 {
            &zeros
        } else {
            &cache.enc.fwd[i - 1].h
        };
        let u = params.src_embed.row(x[i] as usize);
        gru_backward(
            &params.enc_fwd,
            &mut grads.enc_fwd,
            u,
            h_prev,
            &cache.enc.fwd[i],
            &dh,
            &mut du_e,
            &mut dh_carry,
        );
        axpy(1.0, &du_e, grads.src_embed.row_mut(x[i] as usize));
    }
    // Backward direction: position i depends on i+1.
    dh_carry.fill(0.0);
    for i in 0..len {
        dh.copy_from_slice(&d_s[i * 2 * h + h..(i + 1) * 2 * h]);
        axpy(1.0, &dh_carry, &mut dh);
        let h_prev = if i == len - 1 {
            &zeros
        } else {
            &cache.enc.bwd[i + 1].h
        };
        let u = params.src_embed.row(x[i] as usize);
        gru_backward(
            &params.enc_bwd,
            &mut grads.enc_bwd,
            u,
            h_prev,
            &cache.enc.bwd[i],
            &dh,
            &mut du_e,
            &mut dh_carry,
        );
        axpy(1.0, &du_e, grads.src_embed.row_mut(x[i] as usize));
    }
}

/// Greedy prediction with incremental state, used for dev-set exact match
/// during training. Follows the same argmax and length rules as the search
/// module's greedy decoder.
pub(crate) fn greedy_predict(
    params: &ModelParameters,
    dims: Dims,
    x: &[SymbolId],
    max_len: usize,
) -> Result<Vec<SymbolId>, ModelError> {
    use crate::corpus::{BOS, EOS};
    let enc = encoder_forward(params, dims, x)?;
    let mut g = vec![0.0; dims.h];
    let mut c = vec![0.0; 2 * dims.h];
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let step = decoder_step(params, dims, &enc.s, &enc.p, x.len(), &g, &c, prev)?;
        let mut best = 0usize;
        for (j, &lp) in step.log_probs.iter().enumerate().skip(1) {
            if lp > step.log_probs[best] {
                best = j;
            }
        }
        if best as SymbolId == EOS {
            break;
        }
        out.push(best as SymbolId);
        prev = best as SymbolId;
        g = step.gru.h;
        c = step.c;
    }
    Ok(out)
}
