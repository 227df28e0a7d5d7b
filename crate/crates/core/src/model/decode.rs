//! Autoregressive greedy and beam decoding with an incremental key/value cache.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ops::{gemm, layer_norm_eval, linear, log_softmax, Scalar, View};
use super::params::{Attn, Model, Norm};
use super::transformer::{embed, encode, lin_p, norm_p};
use crate::error::{Error, Result};
use crate::tokenizer::{Vocabulary, EOS, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Beam { k: usize, alpha: f64 },
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeMode::Greedy => f.write_str("greedy"),
            DecodeMode::Beam { k, alpha } => write!(f, "beam{k}a{alpha}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated ids without the final EOS.
    pub ids: Vec<u32>,
    /// False when the length limit was hit before EOS.
    pub terminated: bool,
    /// Sum of token log-probabilities, EOS included.
    pub log_prob: f64,
}

pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

struct Memory<T> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    se: usize,
    lens: Vec<usize>,
}

/// Per-row self-attention caches, `rows × cap × d` per layer.
struct Cache<T> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    cap: usize,
    d: usize,
}

impl<T: Scalar> Cache<T> {
    fn new(layers: usize, rows: usize, cap: usize, d: usize) -> Cache<T> {
        Cache {
            k: vec![vec![T::zero(); rows * cap * d]; layers],
            v: vec![vec![T::zero(); rows * cap * d]; layers],
            cap,
            d,
        }
    }

    /// Keep rows `parents` (in that order), first `t` positions.
    fn gather(&self, parents: &[usize], t: usize) -> Cache<T> {
        let stride = self.cap * self.d;
        let pick = |src: &Vec<T>| {
            let mut out = vec![T::zero(); parents.len() * stride];
            for (r, &p) in parents.iter().enumerate() {
                out[r * stride..r * stride + t * self.d].copy_from_slice(&src[p * stride..p * stride + t * self.d]);
            }
            out
        };
        Cache {
            k: self.k.iter().map(pick).collect(),
            v: self.v.iter().map(pick).collect(),
            cap: self.cap,
            d: self.d,
        }
    }
}

fn lin_rows<T: Scalar>(x: &[T], p: &[T], l: &super::params::Lin, rows: usize) -> Vec<T> {
    let (w, b) = lin_p(p, l);
    let mut y = vec![T::zero(); rows * l.d_out];
    linear(x, w, b, rows, l.d_in, l.d_out, &mut y);
    y
}

fn ln_rows<T: Scalar>(x: &[T], p: &[T], n: &Norm, d: usize) -> Vec<T> {
    let (g, b) = norm_p(p, n, d);
    let mut y = vec![T::zero(); x.len()];
    layer_norm_eval(x, g, b, d, &mut y);
    y
}

/// Attention of one query row over `n` keys laid out with row stride `d`.
#[allow(clippy::too_many_arguments)]
fn attend_row<T: Scalar>(q: &[T], keys: &[T], vals: &[T], n: usize, d: usize, heads: usize, scores: &mut Vec<T>, out: &mut [T]) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    scores.resize(n, T::zero());
    for h in 0..heads {
        let qh = &q[h * dh..(h + 1) * dh];
        for j in 0..n {
            let kh = &keys[j * d + h * dh..j * d + (h + 1) * dh];
            scores[j] = qh.iter().zip(kh).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale;
        }
        super::ops::softmax_prefix(&mut scores[..n], n);
        let oh = &mut out[h * dh..(h + 1) * dh];
        oh.iter_mut().for_each(|x| *x = T::zero());
        for j in 0..n {
            let vh = &vals[j * d + h * dh..j * d + (h + 1) * dh];
            let s = scores[j];
            oh.iter_mut().zip(vh).for_each(|(o, &v)| *o = *o + s * v);
        }
    }
}

fn cross_memory<T: Scalar>(m: &Model<T>, sources: &[Vec<u32>]) -> Memory<T> {
    let se = sources.iter().map(Vec::len).max().unwrap_or(1);
    let n = sources.len();
    let mut ids = vec![PAD; n * se];
    for (r, s) in sources.iter().enumerate() {
        ids[r * se..r * se + s.len()].copy_from_slice(s);
    }
    let lens: Vec<usize> = sources.iter().map(Vec::len).collect();
    let mem = encode(m, &ids, n, se, &lens);
    let (mut k, mut v) = (Vec::new(), Vec::new());
    for l in &m.layout.dec {
        k.push(lin_rows(&mem, &m.params, &l.cross_attn.k, n * se));
        v.push(lin_rows(&mem, &m.params, &l.cross_attn.v, n * se));
    }
    Memory { k, v, se, lens }
}

/// Log-probabilities of the next token for each row, given the previous
/// token of each row at position `t`. Appends this step's keys and values
/// to the cache.
fn step<T: Scalar>(m: &Model<T>, mem: &Memory<T>, cache: &mut Cache<T>, src_of: &[usize], tokens: &[u32], t: usize) -> Vec<T> {
    let (p, c) = (&m.params, &m.config);
    let (d, rows, heads) = (c.d_model, tokens.len(), c.heads);
    let positions = vec![t as u32; rows];
    let mut y = embed(m, tokens, &positions);
    let stride = cache.cap * d;
    let mut scores = Vec::new();
    for (li, l) in m.layout.dec.iter().enumerate() {
        let h = ln_rows(&y, p, &l.ln1, d);
        let a: &Attn = &l.self_attn;
        let q = lin_rows(&h, p, &a.q, rows);
        let k = lin_rows(&h, p, &a.k, rows);
        let v = lin_rows(&h, p, &a.v, rows);
        let mut ctx = vec![T::zero(); rows * d];
        for r in 0..rows {
            let base = r * stride;
            cache.k[li][base + t * d..base + (t + 1) * d].copy_from_slice(&k[r * d..(r + 1) * d]);
            cache.v[li][base + t * d..base + (t + 1) * d].copy_from_slice(&v[r * d..(r + 1) * d]);
            attend_row(
                &q[r * d..(r + 1) * d],
                &cache.k[li][base..base + (t + 1) * d],
                &cache.v[li][base..base + (t + 1) * d],
                t + 1,
                d,
                heads,
                &mut scores,
                &mut ctx[r * d..(r + 1) * d],
            );
        }
        let o = lin_rows(&ctx, p, &a.o, rows);
        y.iter_mut().zip(&o).for_each(|(a, &b)| *a = *a + b);

        let h = ln_rows(&y, p, &l.ln2, d);
        let q = lin_rows(&h, p, &l.cross_attn.q, rows);
        for r in 0..rows {
            let s = src_of[r];
            let base = s * mem.se * d;
            let n = mem.lens[s];
            attend_row(
                &q[r * d..(r + 1) * d],
                &mem.k[li][base..base + n * d],
                &mem.v[li][base..base + n * d],
                n,
                d,
                heads,
                &mut scores,
                &mut ctx[r * d..(r + 1) * d],
            );
        }
        let o = lin_rows(&ctx, p, &l.cross_attn.o, rows);
        y.iter_mut().zip(&o).for_each(|(a, &b)| *a = *a + b);

        let h = ln_rows(&y, p, &l.ln3, d);
        let mut f1 = lin_rows(&h, p, &l.ff1, rows);
        f1.iter_mut().for_each(|x| *x = x.max(T::zero()));
        let f2 = lin_rows(&f1, p, &l.ff2, rows);
        y.iter_mut().zip(&f2).for_each(|(a, &b)| *a = *a + b);
    }
    let out = ln_rows(&y, p, &m.layout.dec_ln, d);
    let vsz = c.vocab_size;
    let mut logits = vec![T::zero(); rows * vsz];
    gemm(rows, d, vsz, T::one(), &out, View::rows(0, d), p, View::t(m.layout.embed, d), T::zero(), &mut logits, View::rows(0, vsz));
    let mut lp = vec![T::zero(); rows * vsz];
    for r in 0..rows {
        log_softmax(&logits[r * vsz..(r + 1) * vsz], &mut lp[r * vsz..(r + 1) * vsz]);
    }
    lp
}

/// Highest log-probability token, lowest id on ties.
fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

fn validate_sources<T: Scalar>(m: &Model<T>, sources: &[Vec<u32>]) -> Result<()> {
    for s in sources {
        if s.is_empty() || s.len() > m.config.max_positions {
            return Err(Error::InvalidArgument("source length outside (0, max_positions]".into()));
        }
        if let Some(&id) = s.iter().find(|&&id| id as usize >= m.config.vocab_size) {
            return Err(Error::TokenOutOfRange { id, size: m.config.vocab_size });
        }
    }
    Ok(())
}

/// Decode every source (full encoder ids, tag and EOS included) with a
/// per-source limit on generated tokens (EOS counted).
pub fn decode_with_limits<T: Scalar>(m: &Model<T>, sources: &[Vec<u32>], mode: DecodeMode, limits: &[usize]) -> Result<Vec<Hypothesis>> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    validate_sources(m, sources)?;
    assert_eq!(sources.len(), limits.len());
    let limits: Vec<usize> = limits.iter().map(|&l| l.clamp(1, m.config.max_positions)).collect();
    match mode {
        DecodeMode::Greedy => Ok(greedy(m, sources, &limits)),
        DecodeMode::Beam { k, alpha } => {
            if k == 0 {
                return Err(Error::InvalidArgument("beam size must be positive".into()));
            }
            Ok(beam(m, sources, &limits, k, alpha))
        }
    }
}

pub fn decode<T: Scalar>(m: &Model<T>, sources: &[Vec<u32>], mode: DecodeMode, max_len: usize) -> Result<Vec<Hypothesis>> {
    decode_with_limits(m, sources, mode, &vec![max_len; sources.len()])
}

fn greedy<T: Scalar>(m: &Model<T>, sources: &[Vec<u32>], limits: &[usize]) -> Vec<Hypothesis> {
    let mem = cross_memory(m, sources);
    let cap = *limits.iter().max().unwrap();
    let vsz = m.config.vocab_size;
    let mut out: Vec<Hypothesis> = (0..sources.len())
        .map(|_| Hypothesis { ids: Vec::new(), terminated: false, log_prob: 0.0 })
        .collect();
    let mut active: Vec<usize> = (0..sources.len()).collect();
    let mut tokens = vec![EOS; active.len()];
    let mut cache = Cache::new(m.layout.dec.len(), active.len(), cap, m.config.d_model);
    for t in 0..cap {
        if active.is_empty() {
            break;
        }
        let lp = step(m, &mem, &mut cache, &active, &tokens, t);
        let mut keep = Vec::new();
        let mut next_tokens = Vec::new();
        for (r, &s) in active.iter().enumerate() {
            let row = &lp[r * vsz..(r + 1) * vsz];
            let tok = argmax(row);
            let h = &mut out[s];
            h.log_prob += row[tok].f64();
            if tok as u32 == EOS {
                h.terminated = true;
            } else {
                h.ids.push(tok as u32);
                if t + 1 < limits[s] {
                    keep.push(r);
                    next_tokens.push(tok as u32);
                }
            }
        }
        if keep.len() != active.len() {
            cache = cache.gather(&keep, t + 1);
            active = keep.iter().map(|&r| active[r]).collect();
        }
        tokens = next_tokens;
    }
    out
}

#[derive(Clone)]
struct Beam {
    ids: Vec<u32>,
    log_prob: f64,
}

struct Candidate {
    score: f64,
    lp: f64,
    beam: usize,
    token: u32,
}

fn by_rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.lp.total_cmp(&a.lp))
        .then(a.beam.cmp(&b.beam))
        .then(a.token.cmp(&b.token))
}

/// Indices of the `n` best entries of `row` under (value desc, index asc).
fn top_n<T: Scalar>(row: &[T], n: usize) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::with_capacity(n + 1);
    for j in 0..row.len() {
        let pos = best.partition_point(|&b| row[b] >= row[j]);
        if pos < n {
            best.insert(pos, j);
            best.truncate(n);
        }
    }
    best
}

fn beam<T: Scalar>(m: &Model<T>, sources: &[Vec<u32>], limits: &[usize], k: usize, alpha: f64) -> Vec<Hypothesis> {
    let mem = cross_memory(m, sources);
    let cap = *limits.iter().max().unwrap();
    let vsz = m.config.vocab_size;
    let n = sources.len();
    let mut beams: Vec<Vec<Beam>> = (0..n).map(|_| vec![Beam { ids: Vec::new(), log_prob: 0.0 }]).collect();
    let mut finished: Vec<Vec<Beam>> = vec![Vec::new(); n];
    let mut done = vec![false; n];
    let mut rows_src: Vec<usize> = (0..n).collect();
    let mut tokens = vec![EOS; n];
    let mut cache = Cache::new(m.layout.dec.len(), n, cap, m.config.d_model);
    let mut t = 0;
    while t < cap && !rows_src.is_empty() {
        let lp = step(m, &mem, &mut cache, &rows_src, &tokens, t);
        let mut parents = Vec::new();
        let mut next_src = Vec::new();
        let mut next_tokens = Vec::new();
        let mut row = 0;
        for s in 0..n {
            if done[s] {
                continue;
            }
            let nb = beams[s].len();
            let mut cands = Vec::with_capacity(nb * (k + 1));
            for b in 0..nb {
                let r = &lp[(row + b) * vsz..(row + b + 1) * vsz];
                for j in top_n(r, k + 1) {
                    let l = r[j].f64();
                    cands.push(Candidate { score: beams[s][b].log_prob + l, lp: l, beam: b, token: j as u32 });
                }
            }
            cands.sort_by(by_rank);
            let mut next = Vec::new();
            for (rank, c) in cands.iter().enumerate() {
                let parent = &beams[s][c.beam];
                if c.token == EOS {
                    if rank < k {
                        finished[s].push(Beam { ids: parent.ids.clone(), log_prob: c.score });
                    }
                } else if next.len() < k {
                    let mut ids = parent.ids.clone();
                    ids.push(c.token);
                    next.push((Beam { ids, log_prob: c.score }, row + c.beam, c.token));
                }
                if next.len() == k {
                    break;
                }
            }
            if finished[s].len() >= k || t + 1 >= limits[s] || next.is_empty() {
                done[s] = true;
                if finished[s].is_empty() {
                    beams[s] = next.into_iter().map(|(b, _, _)| b).collect();
                }
            } else {
                beams[s] = Vec::with_capacity(next.len());
                for (b, parent_row, tok) in next {
                    beams[s].push(b);
                    parents.push(parent_row);
                    next_src.push(s);
                    next_tokens.push(tok);
                }
            }
            row += nb;
        }
        cache = cache.gather(&parents, t + 1);
        rows_src = next_src;
        tokens = next_tokens;
        t += 1;
    }
    (0..n)
        .map(|s| {
            let norm = |b: &Beam, extra: usize| b.log_prob / length_penalty(b.ids.len() + extra, alpha);
            let pick = |pool: &[Beam], extra: usize| {
                let mut best = 0;
                for i in 1..pool.len() {
                    if norm(&pool[i], extra) > norm(&pool[best], extra) {
                        best = i;
                    }
                }
                pool[best].clone()
            };
            if finished[s].is_empty() {
                let b = pick(&beams[s], 0);
                Hypothesis { ids: b.ids, terminated: false, log_prob: b.log_prob }
            } else {
                let b = pick(&finished[s], 1);
                Hypothesis { ids: b.ids, terminated: true, log_prob: b.log_prob }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub text: String,
    pub terminated: bool,
}

/// Output length limit used for translation: twice the source plus slack.
pub fn default_limit(src_tokens: usize) -> usize {
    2 * src_tokens + 10
}

/// Translate whitespace texts into `tgt_lang`, in chunks of `chunk` sentences.
pub fn translate<T: Scalar>(
    m: &Model<T>,
    vocab: &Vocabulary,
    texts: &[&str],
    tgt_lang: &str,
    mode: DecodeMode,
    chunk: usize,
) -> Result<Vec<Translation>> {
    let max_src = m.config.max_positions;
    let mut out = Vec::with_capacity(texts.len());
    for part in texts.chunks(chunk.max(1)) {
        let mut sources = Vec::with_capacity(part.len());
        let mut limits = Vec::with_capacity(part.len());
        for text in part {
            let mut ids = vocab.encode(text, Some(tgt_lang))?;
            if ids.len() > max_src {
                ids.truncate(max_src - 1);
                ids.push(EOS);
            }
            limits.push(default_limit(ids.len() - 2));
            sources.push(ids);
        }
        for h in decode_with_limits(m, &sources, mode, &limits)? {
            out.push(Translation {
                text: vocab.decode(&h.ids)?,
                terminated: h.terminated,
            });
        }
    }
    Ok(out)
}
