//! Training forward pass, label-smoothed loss and exact backpropagation.

use rand::Rng as _;

use super::ops::{gemm, layer_norm, layer_norm_backward, linear, linear_backward, log_softmax, softmax_prefix, Scalar, View};
use super::params::{Attn, Lin, Model, Norm};
use crate::error::{Error, Result};
use crate::sampler::Batch;
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutput {
    /// Mean label-smoothed cross-entropy over supervised positions.
    pub loss: f64,
    pub tokens: usize,
}

pub(crate) fn lin_p<'a, T>(p: &'a [T], l: &Lin) -> (&'a [T], &'a [T]) {
    (&p[l.w..l.w + l.d_in * l.d_out], &p[l.b..l.b + l.d_out])
}

fn lin_g<'a, T>(g: &'a mut [T], l: &Lin) -> (&'a mut [T], &'a mut [T]) {
    debug_assert_eq!(l.b, l.w + l.d_in * l.d_out);
    g[l.w..l.b + l.d_out].split_at_mut(l.d_in * l.d_out)
}

pub(crate) fn norm_p<'a, T>(p: &'a [T], n: &Norm, d: usize) -> (&'a [T], &'a [T]) {
    (&p[n.g..n.g + d], &p[n.b..n.b + d])
}

fn norm_g<'a, T>(g: &'a mut [T], n: &Norm, d: usize) -> (&'a mut [T], &'a mut [T]) {
    debug_assert_eq!(n.b, n.g + d);
    g[n.g..n.b + d].split_at_mut(d)
}

struct LnTape<T> {
    y: Vec<T>,
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn ln_fwd<T: Scalar>(x: &[T], p: &[T], n: &Norm, rows: usize, d: usize) -> LnTape<T> {
    let (g, b) = norm_p(p, n, d);
    let mut t = LnTape {
        y: vec![T::zero(); rows * d],
        xhat: vec![T::zero(); rows * d],
        rstd: vec![T::zero(); rows],
    };
    layer_norm(x, g, b, d, &mut t.y, &mut t.xhat, &mut t.rstd);
    t
}

fn ln_bwd<T: Scalar>(t: &LnTape<T>, dy: &[T], p: &[T], g: &mut [T], n: &Norm, d: usize, dx: &mut [T]) {
    let (dg, db) = norm_g(g, n, d);
    layer_norm_backward(dy, &t.xhat, &t.rstd, &p[n.g..n.g + d], d, dg, db, dx);
}

fn lin_fwd<T: Scalar>(x: &[T], p: &[T], l: &Lin, rows: usize) -> Vec<T> {
    let (w, b) = lin_p(p, l);
    let mut y = vec![T::zero(); rows * l.d_out];
    linear(x, w, b, rows, l.d_in, l.d_out, &mut y);
    y
}

fn lin_bwd<T: Scalar>(x: &[T], dy: &[T], p: &[T], g: &mut [T], l: &Lin, rows: usize, dx: Option<&mut [T]>) {
    let (dw, db) = lin_g(g, l);
    linear_backward(x, &p[l.w..l.w + l.d_in * l.d_out], dy, rows, l.d_in, l.d_out, dw, db, dx);
}

fn dropout_mask<T: Scalar>(n: usize, rate: f64, rng: &mut Option<&mut Rng>) -> Option<Vec<T>> {
    let rng = rng.as_mut()?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let r = rate as f32;
    Some((0..n).map(|_| if rng.gen::<f32>() < r { T::zero() } else { keep }).collect())
}

fn apply_mask<T: Scalar>(x: &mut [T], m: &Option<Vec<T>>) {
    if let Some(m) = m {
        x.iter_mut().zip(m).for_each(|(v, &k)| *v = *v * k);
    }
}

/// Shapes of one batch.
#[derive(Clone, Copy)]
pub(crate) struct Dims {
    pub b: usize,
    pub d: usize,
    pub heads: usize,
}

impl Dims {
    fn dh(&self) -> usize {
        self.d / self.heads
    }
}

/// Multi-head attention with per-query valid key prefixes.
#[allow(clippy::too_many_arguments)]
fn mha_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    dm: Dims,
    sq: usize,
    sk: usize,
    valid: &dyn Fn(usize, usize) -> usize,
    probs: &mut [T],
    ctx: &mut [T],
) {
    let (d, dh) = (dm.d, dm.dh());
    let scale = T::of(1.0 / (dh as f64).sqrt());
    for b in 0..dm.b {
        for h in 0..dm.heads {
            let po = (b * dm.heads + h) * sq * sk;
            let qv = View { off: b * sq * d + h * dh, rs: d, cs: 1 };
            let kt = View { off: b * sk * d + h * dh, rs: 1, cs: d };
            gemm(sq, dh, sk, scale, q, qv, k, kt, T::zero(), probs, View::rows(po, sk));
            for i in 0..sq {
                let row = &mut probs[po + i * sk..po + (i + 1) * sk];
                softmax_prefix(row, valid(b, i));
            }
            let vv = View { off: b * sk * d + h * dh, rs: d, cs: 1 };
            gemm(sq, sk, dh, T::one(), probs, View::rows(po, sk), v, vv, T::zero(), ctx, qv);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn mha_backward<T: Scalar>(
    dctx: &[T],
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dm: Dims,
    sq: usize,
    sk: usize,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let (d, dh) = (dm.d, dm.dh());
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ds = vec![T::zero(); sq * sk];
    for b in 0..dm.b {
        for h in 0..dm.heads {
            let po = (b * dm.heads + h) * sq * sk;
            let qv = View { off: b * sq * d + h * dh, rs: d, cs: 1 };
            let kv = View { off: b * sk * d + h * dh, rs: d, cs: 1 };
            let kt = View { off: b * sk * d + h * dh, rs: 1, cs: d };
            gemm(sk, sq, dh, T::one(), probs, View::t(po, sk), dctx, qv, T::zero(), dv, kv);
            gemm(sq, dh, sk, T::one(), dctx, qv, v, kt, T::zero(), &mut ds, View::rows(0, sk));
            for i in 0..sq {
                let p = &probs[po + i * sk..po + (i + 1) * sk];
                let r = &mut ds[i * sk..(i + 1) * sk];
                let dot: f64 = p.iter().zip(r.iter()).map(|(a, b)| (*a * *b).f64()).sum();
                for (x, &pj) in r.iter_mut().zip(p) {
                    *x = T::of(pj.f64() * (x.f64() - dot) * scale);
                }
            }
            gemm(sq, sk, dh, T::one(), &ds, View::rows(0, sk), k, kv, T::zero(), dq, qv);
            gemm(sk, sq, dh, T::one(), &ds, View::t(0, sk), q, qv, T::zero(), dk, kv);
        }
    }
}

struct AttnTape<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
}

struct EncTape<T> {
    ln1: LnTape<T>,
    att: AttnTape<T>,
    drop1: Option<Vec<T>>,
    ln2: LnTape<T>,
    f1: Vec<T>,
    drop2: Option<Vec<T>>,
}

struct DecTape<T> {
    ln1: LnTape<T>,
    att: AttnTape<T>,
    drop1: Option<Vec<T>>,
    ln2: LnTape<T>,
    cross: AttnTape<T>,
    drop2: Option<Vec<T>>,
    ln3: LnTape<T>,
    f1: Vec<T>,
    drop3: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
fn attn_fwd<T: Scalar>(
    h: &[T],
    kv_src: &[T],
    p: &[T],
    a: &Attn,
    dm: Dims,
    sq: usize,
    sk: usize,
    valid: &dyn Fn(usize, usize) -> usize,
) -> (AttnTape<T>, Vec<T>) {
    let q = lin_fwd(h, p, &a.q, dm.b * sq);
    let k = lin_fwd(kv_src, p, &a.k, dm.b * sk);
    let v = lin_fwd(kv_src, p, &a.v, dm.b * sk);
    let mut probs = vec![T::zero(); dm.b * dm.heads * sq * sk];
    let mut ctx = vec![T::zero(); dm.b * sq * dm.d];
    mha_forward(&q, &k, &v, dm, sq, sk, valid, &mut probs, &mut ctx);
    let out = lin_fwd(&ctx, p, &a.o, dm.b * sq);
    (AttnTape { q, k, v, probs, ctx }, out)
}

/// Backward through one attention block. Adds into `dh` (query input) and
/// `dkv` (key/value input); `dkv = None` means keys and values were computed
/// from the query input.
#[allow(clippy::too_many_arguments)]
fn attn_bwd<T: Scalar>(
    t: &AttnTape<T>,
    dout: &[T],
    h: &[T],
    kv_src: &[T],
    p: &[T],
    g: &mut [T],
    a: &Attn,
    dm: Dims,
    sq: usize,
    sk: usize,
    dh: &mut [T],
    dkv: Option<&mut [T]>,
) {
    let d = dm.d;
    let mut dctx = vec![T::zero(); dm.b * sq * d];
    lin_bwd(&t.ctx, dout, p, g, &a.o, dm.b * sq, Some(&mut dctx));
    let mut dq = vec![T::zero(); dm.b * sq * d];
    let mut dk = vec![T::zero(); dm.b * sk * d];
    let mut dv = vec![T::zero(); dm.b * sk * d];
    mha_backward(&dctx, &t.q, &t.k, &t.v, &t.probs, dm, sq, sk, &mut dq, &mut dk, &mut dv);
    lin_bwd(h, &dq, p, g, &a.q, dm.b * sq, Some(&mut *dh));
    match dkv {
        Some(dkv) => {
            lin_bwd(kv_src, &dk, p, g, &a.k, dm.b * sk, Some(&mut *dkv));
            lin_bwd(kv_src, &dv, p, g, &a.v, dm.b * sk, Some(dkv));
        }
        None => {
            lin_bwd(kv_src, &dk, p, g, &a.k, dm.b * sk, Some(&mut *dh));
            lin_bwd(kv_src, &dv, p, g, &a.v, dm.b * sk, Some(dh));
        }
    }
}

fn add_into<T: Scalar>(x: &mut [T], y: &[T]) {
    x.iter_mut().zip(y).for_each(|(a, &b)| *a = *a + b);
}

fn masked<T: Scalar>(x: &[T], m: &Option<Vec<T>>) -> Vec<T> {
    let mut v = x.to_vec();
    apply_mask(&mut v, m);
    v
}

pub(crate) fn check_batch<T: Scalar>(m: &Model<T>, batch: &Batch) -> Result<()> {
    let c = &m.config;
    let v = c.vocab_size as u32;
    for &id in batch.encoder_ids.iter().chain(&batch.decoder_input_ids).chain(&batch.decoder_target_ids) {
        if id >= v {
            return Err(Error::TokenOutOfRange { id, size: c.vocab_size });
        }
    }
    let max_pos = batch.decoder_positions.iter().copied().max().unwrap_or(0) as usize;
    if batch.enc_len > c.max_positions || batch.dec_len > c.max_positions || max_pos >= c.max_positions {
        return Err(Error::InvalidArgument(format!(
            "sequence longer than max_positions {}",
            c.max_positions
        )));
    }
    if batch.enc_lengths.iter().any(|&l| l == 0 || l > batch.enc_len) {
        return Err(Error::InvalidArgument("encoder row lengths out of range".into()));
    }
    Ok(())
}

/// Embedding lookup scaled by `√d` plus sinusoidal positions.
pub(crate) fn embed<T: Scalar>(m: &Model<T>, ids: &[u32], positions: &[u32]) -> Vec<T> {
    let d = m.config.d_model;
    let scale = T::of((d as f64).sqrt());
    let e = m.layout.embed;
    let mut x = vec![T::zero(); ids.len() * d];
    for (r, (&id, &pos)) in ids.iter().zip(positions).enumerate() {
        let row = &m.params[e + id as usize * d..e + (id as usize + 1) * d];
        let pe = &m.pos_table[pos as usize * d..(pos as usize + 1) * d];
        for j in 0..d {
            x[r * d + j] = row[j] * scale + pe[j];
        }
    }
    x
}

fn embed_backward<T: Scalar>(m: &Model<T>, ids: &[u32], dx: &[T], g: &mut [T]) {
    let d = m.config.d_model;
    let scale = T::of((d as f64).sqrt());
    let e = m.layout.embed;
    for (r, &id) in ids.iter().enumerate() {
        let gr = &mut g[e + id as usize * d..e + (id as usize + 1) * d];
        for j in 0..d {
            gr[j] = gr[j] + dx[r * d + j] * scale;
        }
    }
}

/// Encoder output (final layer norm applied), `rows·len × d`.
pub(crate) fn encode<T: Scalar>(m: &Model<T>, ids: &[u32], rows: usize, len: usize, lengths: &[usize]) -> Vec<T> {
    let positions: Vec<u32> = (0..rows * len).map(|i| (i % len) as u32).collect();
    let dm = Dims { b: rows, d: m.config.d_model, heads: m.config.heads };
    encoder_forward(m, ids, &positions, dm, len, lengths, &mut None).2.y
}

fn encoder_forward<T: Scalar>(
    m: &Model<T>,
    ids: &[u32],
    positions: &[u32],
    dm: Dims,
    se: usize,
    lengths: &[usize],
    rng: &mut Option<&mut Rng>,
) -> (Option<Vec<T>>, Vec<EncTape<T>>, LnTape<T>) {
    let (p, c, d) = (&m.params, &m.config, dm.d);
    let n = dm.b * se;
    let mut x = embed(m, ids, positions);
    let drop0 = dropout_mask(x.len(), c.dropout_rate, rng);
    apply_mask(&mut x, &drop0);
    let valid = |b: usize, _i: usize| lengths[b];
    let mut tapes = Vec::with_capacity(m.layout.enc.len());
    for l in &m.layout.enc {
        let ln1 = ln_fwd(&x, p, &l.ln1, n, d);
        let (att, mut o) = attn_fwd(&ln1.y, &ln1.y, p, &l.attn, dm, se, se, &valid);
        let drop1 = dropout_mask(o.len(), c.dropout_rate, rng);
        apply_mask(&mut o, &drop1);
        add_into(&mut x, &o);
        let ln2 = ln_fwd(&x, p, &l.ln2, n, d);
        let mut f1 = lin_fwd(&ln2.y, p, &l.ff1, n);
        f1.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let mut f2 = lin_fwd(&f1, p, &l.ff2, n);
        let drop2 = dropout_mask(f2.len(), c.dropout_rate, rng);
        apply_mask(&mut f2, &drop2);
        add_into(&mut x, &f2);
        tapes.push(EncTape { ln1, att, drop1, ln2, f1, drop2 });
    }
    let out = ln_fwd(&x, p, &m.layout.enc_ln, n, d);
    (drop0, tapes, out)
}

/// Loss on `batch` and, when `with_grad`, the gradient of the mean loss.
/// `rng` enables dropout (training mode); `None` is evaluation mode.
pub fn loss_and_grad<T: Scalar>(
    m: &Model<T>,
    batch: &Batch,
    mut rng: Option<&mut Rng>,
    with_grad: bool,
) -> Result<(LossOutput, Option<Vec<T>>)> {
    check_batch(m, batch)?;
    let rows: Vec<usize> = (0..batch.rows * batch.dec_len).filter(|&i| batch.loss_mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument("batch has an empty loss mask".into()));
    }
    let c = &m.config;
    let p = &m.params;
    let (d, v) = (c.d_model, c.vocab_size);
    let dm = Dims { b: batch.rows, d, heads: c.heads };
    let (se, sd) = (batch.enc_len, batch.dec_len);
    let (ne, nd) = (dm.b * se, dm.b * sd);
    let enc_pos: Vec<u32> = (0..ne).map(|i| (i % se) as u32).collect();

    let (enc_drop0, enc_tapes, enc_out) = encoder_forward(m, &batch.encoder_ids, &enc_pos, dm, se, &batch.enc_lengths, &mut rng);
    let mem = &enc_out.y;

    let mut y = embed(m, &batch.decoder_input_ids, &batch.decoder_positions);
    let dec_drop0 = dropout_mask(y.len(), c.dropout_rate, &mut rng);
    apply_mask(&mut y, &dec_drop0);
    let causal = |_b: usize, i: usize| i + 1;
    let cross_valid = |b: usize, _i: usize| batch.enc_lengths[b];
    let mut dec_tapes = Vec::with_capacity(m.layout.dec.len());
    for l in &m.layout.dec {
        let ln1 = ln_fwd(&y, p, &l.ln1, nd, d);
        let (att, mut o) = attn_fwd(&ln1.y, &ln1.y, p, &l.self_attn, dm, sd, sd, &causal);
        let drop1 = dropout_mask(o.len(), c.dropout_rate, &mut rng);
        apply_mask(&mut o, &drop1);
        add_into(&mut y, &o);
        let ln2 = ln_fwd(&y, p, &l.ln2, nd, d);
        let (cross, mut co) = attn_fwd(&ln2.y, mem, p, &l.cross_attn, dm, sd, se, &cross_valid);
        let drop2 = dropout_mask(co.len(), c.dropout_rate, &mut rng);
        apply_mask(&mut co, &drop2);
        add_into(&mut y, &co);
        let ln3 = ln_fwd(&y, p, &l.ln3, nd, d);
        let mut f1 = lin_fwd(&ln3.y, p, &l.ff1, nd);
        f1.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let mut f2 = lin_fwd(&f1, p, &l.ff2, nd);
        let drop3 = dropout_mask(f2.len(), c.dropout_rate, &mut rng);
        apply_mask(&mut f2, &drop3);
        add_into(&mut y, &f2);
        dec_tapes.push(DecTape { ln1, att, drop1, ln2, cross, drop2, ln3, f1, drop3 });
    }
    let dec_out = ln_fwd(&y, p, &m.layout.dec_ln, nd, d);

    // logits only for supervised positions
    let n = rows.len();
    let mut hsel = vec![T::zero(); n * d];
    for (k, &r) in rows.iter().enumerate() {
        hsel[k * d..(k + 1) * d].copy_from_slice(&dec_out.y[r * d..(r + 1) * d]);
    }
    let e = m.layout.embed;
    let mut logits = vec![T::zero(); n * v];
    gemm(n, d, v, T::one(), &hsel, View::rows(0, d), p, View::t(e, d), T::zero(), &mut logits, View::rows(0, v));
    let eps = c.label_smoothing;
    let mut lp = vec![T::zero(); v];
    let mut total = 0.0f64;
    for (k, &r) in rows.iter().enumerate() {
        let row = &mut logits[k * v..(k + 1) * v];
        log_softmax(row, &mut lp);
        let y = batch.decoder_target_ids[r] as usize;
        let mean_lp: f64 = lp.iter().map(|x| x.f64()).sum::<f64>() / v as f64;
        total += -(1.0 - eps) * lp[y].f64() - eps * mean_lp;
        if with_grad {
            let off = eps / v as f64;
            for (j, x) in row.iter_mut().enumerate() {
                let target = if j == y { 1.0 - eps + off } else { off };
                *x = T::of((lp[j].f64().exp() - target) / n as f64);
            }
        }
    }
    let out = LossOutput { loss: total / n as f64, tokens: n };
    if !with_grad {
        return Ok((out, None));
    }

    let mut g = vec![T::zero(); m.layout.total];
    let dl = logits;
    let mut dh_sel = vec![T::zero(); n * d];
    gemm(n, v, d, T::one(), &dl, View::rows(0, v), p, View::rows(e, d), T::zero(), &mut dh_sel, View::rows(0, d));
    gemm(v, n, d, T::one(), &dl, View::t(0, v), &hsel, View::rows(0, d), T::one(), &mut g, View::rows(e, d));
    let mut d_out = vec![T::zero(); nd * d];
    for (k, &r) in rows.iter().enumerate() {
        d_out[r * d..(r + 1) * d].copy_from_slice(&dh_sel[k * d..(k + 1) * d]);
    }

    // decoder
    let mut dy = vec![T::zero(); nd * d];
    ln_bwd(&dec_out, &d_out, p, &mut g, &m.layout.dec_ln, d, &mut dy);
    let mut dmem = vec![T::zero(); ne * d];
    for (l, t) in m.layout.dec.iter().zip(&dec_tapes).rev() {
        let dff = masked(&dy, &t.drop3);
        let mut df1 = vec![T::zero(); nd * c.d_ff];
        lin_bwd(&t.f1, &dff, p, &mut g, &l.ff2, nd, Some(&mut df1));
        df1.iter_mut().zip(&t.f1).for_each(|(x, &a)| {
            if a <= T::zero() {
                *x = T::zero()
            }
        });
        let mut dh3 = vec![T::zero(); nd * d];
        lin_bwd(&t.ln3.y, &df1, p, &mut g, &l.ff1, nd, Some(&mut dh3));
        ln_bwd(&t.ln3, &dh3, p, &mut g, &l.ln3, d, &mut dy);

        let dco = masked(&dy, &t.drop2);
        let mut dh2 = vec![T::zero(); nd * d];
        attn_bwd(&t.cross, &dco, &t.ln2.y, mem, p, &mut g, &l.cross_attn, dm, sd, se, &mut dh2, Some(&mut dmem));
        ln_bwd(&t.ln2, &dh2, p, &mut g, &l.ln2, d, &mut dy);

        let dso = masked(&dy, &t.drop1);
        let mut dh1 = vec![T::zero(); nd * d];
        attn_bwd(&t.att, &dso, &t.ln1.y, &t.ln1.y, p, &mut g, &l.self_attn, dm, sd, sd, &mut dh1, None);
        ln_bwd(&t.ln1, &dh1, p, &mut g, &l.ln1, d, &mut dy);
    }
    apply_mask(&mut dy, &dec_drop0);
    embed_backward(m, &batch.decoder_input_ids, &dy, &mut g);

    // encoder
    let mut dx = vec![T::zero(); ne * d];
    ln_bwd(&enc_out, &dmem, p, &mut g, &m.layout.enc_ln, d, &mut dx);
    for (l, t) in m.layout.enc.iter().zip(&enc_tapes).rev() {
        let dff = masked(&dx, &t.drop2);
        let mut df1 = vec![T::zero(); ne * c.d_ff];
        lin_bwd(&t.f1, &dff, p, &mut g, &l.ff2, ne, Some(&mut df1));
        df1.iter_mut().zip(&t.f1).for_each(|(x, &a)| {
            if a <= T::zero() {
                *x = T::zero()
            }
        });
        let mut dh2 = vec![T::zero(); ne * d];
        lin_bwd(&t.ln2.y, &df1, p, &mut g, &l.ff1, ne, Some(&mut dh2));
        ln_bwd(&t.ln2, &dh2, p, &mut g, &l.ln2, d, &mut dx);

        let dao = masked(&dx, &t.drop1);
        let mut dh1 = vec![T::zero(); ne * d];
        attn_bwd(&t.att, &dao, &t.ln1.y, &t.ln1.y, p, &mut g, &l.attn, dm, se, se, &mut dh1, None);
        ln_bwd(&t.ln1, &dh1, p, &mut g, &l.ln1, d, &mut dx);
    }
    apply_mask(&mut dx, &enc_drop0);
    embed_backward(m, &batch.encoder_ids, &dx, &mut g);
    Ok((out, Some(g)))
}

/// Mean loss in evaluation mode (no dropout).
pub fn forward_loss<T: Scalar>(m: &Model<T>, batch: &Batch) -> Result<LossOutput> {
    Ok(loss_and_grad(m, batch, None, false)?.0)
}

/// Attention probabilities of every layer in evaluation mode, for
/// inspection: `(encoder self, decoder self, decoder cross)` per layer.
pub fn attention_maps<T: Scalar>(m: &Model<T>, batch: &Batch) -> Result<Vec<(String, Vec<T>)>> {
    check_batch(m, batch)?;
    let c = &m.config;
    let dm = Dims { b: batch.rows, d: c.d_model, heads: c.heads };
    let (se, sd) = (batch.enc_len, batch.dec_len);
    let enc_pos: Vec<u32> = (0..dm.b * se).map(|i| (i % se) as u32).collect();
    let (_, enc_tapes, enc_out) = encoder_forward(m, &batch.encoder_ids, &enc_pos, dm, se, &batch.enc_lengths, &mut None);
    let mut maps: Vec<(String, Vec<T>)> = enc_tapes
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("enc.{i}.self"), t.att.probs))
        .collect();
    let p = &m.params;
    let mut y = embed(m, &batch.decoder_input_ids, &batch.decoder_positions);
    let nd = dm.b * sd;
    for (i, l) in m.layout.dec.iter().enumerate() {
        let ln1 = ln_fwd(&y, p, &l.ln1, nd, dm.d);
        let (att, o) = attn_fwd(&ln1.y, &ln1.y, p, &l.self_attn, dm, sd, sd, &|_, i| i + 1);
        add_into(&mut y, &o);
        let ln2 = ln_fwd(&y, p, &l.ln2, nd, dm.d);
        let (cross, co) = attn_fwd(&ln2.y, &enc_out.y, p, &l.cross_attn, dm, sd, se, &|b, _| batch.enc_lengths[b]);
        add_into(&mut y, &co);
        let ln3 = ln_fwd(&y, p, &l.ln3, nd, dm.d);
        let mut f1 = lin_fwd(&ln3.y, p, &l.ff1, nd);
        f1.iter_mut().for_each(|v| *v = v.max(T::zero()));
        add_into(&mut y, &lin_fwd(&f1, p, &l.ff2, nd));
        maps.push((format!("dec.{i}.self"), att.probs));
        maps.push((format!("dec.{i}.cross"), cross.probs));
    }
    Ok(maps)
}

/// Decoder logits for every position of `batch` in evaluation mode,
/// `rows·dec_len × vocab`.
pub fn decoder_logits<T: Scalar>(m: &Model<T>, batch: &Batch) -> Result<Vec<T>> {
    check_batch(m, batch)?;
    let c = &m.config;
    let dm = Dims { b: batch.rows, d: c.d_model, heads: c.heads };
    let (se, sd) = (batch.enc_len, batch.dec_len);
    let mem = encode(m, &batch.encoder_ids, dm.b, se, &batch.enc_lengths);
    let p = &m.params;
    let nd = dm.b * sd;
    let mut y = embed(m, &batch.decoder_input_ids, &batch.decoder_positions);
    for l in &m.layout.dec {
        let ln1 = ln_fwd(&y, p, &l.ln1, nd, dm.d);
        let (_, o) = attn_fwd(&ln1.y, &ln1.y, p, &l.self_attn, dm, sd, sd, &|_, i| i + 1);
        add_into(&mut y, &o);
        let ln2 = ln_fwd(&y, p, &l.ln2, nd, dm.d);
        let (_, co) = attn_fwd(&ln2.y, &mem, p, &l.cross_attn, dm, sd, se, &|b, _| batch.enc_lengths[b]);
        add_into(&mut y, &co);
        let ln3 = ln_fwd(&y, p, &l.ln3, nd, dm.d);
        let mut f1 = lin_fwd(&ln3.y, p, &l.ff1, nd);
        f1.iter_mut().for_each(|v| *v = v.max(T::zero()));
        add_into(&mut y, &lin_fwd(&f1, p, &l.ff2, nd));
    }
    let out = ln_fwd(&y, p, &m.layout.dec_ln, nd, dm.d);
    let mut logits = vec![T::zero(); nd * c.vocab_size];
    gemm(nd, dm.d, c.vocab_size, T::one(), &out.y, View::rows(0, dm.d), p, View::t(m.layout.embed, dm.d), T::zero(), &mut logits, View::rows(0, c.vocab_size));
    Ok(logits)
}
