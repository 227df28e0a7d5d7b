use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ops::Scalar;
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers_enc: usize,
    pub layers_dec: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
    pub label_smoothing: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers_enc: 2,
            layers_dec: 2,
            d_model: 128,
            heads: 4,
            d_ff: 256,
            vocab_size,
            max_positions: 256,
            dropout_rate: 0.1,
            label_smoothing: 0.1,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 || self.vocab_size == 0 || self.max_positions == 0 {
            return bad("model dimensions must be positive");
        }
        if self.d_model % self.heads != 0 {
            return bad("d_model must be divisible by heads");
        }
        if self.d_model % 2 != 0 {
            return bad("d_model must be even for sinusoidal positions");
        }
        if self.layers_enc == 0 || self.layers_dec == 0 {
            return bad("encoder and decoder need at least one layer each");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lin {
    pub w: usize,
    pub b: usize,
    pub d_in: usize,
    pub d_out: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attn {
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub o: Lin,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncLayer {
    pub ln1: Norm,
    pub attn: Attn,
    pub ln2: Norm,
    pub ff1: Lin,
    pub ff2: Lin,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecLayer {
    pub ln1: Norm,
    pub self_attn: Attn,
    pub ln2: Norm,
    pub cross_attn: Attn,
    pub ln3: Norm,
    pub ff1: Lin,
    pub ff2: Lin,
}

/// Named tensors laid out in one flat buffer, in a fixed order.
#[derive(Debug, Clone)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
    pub(crate) embed: usize,
    pub(crate) enc: Vec<EncLayer>,
    pub(crate) enc_ln: Norm,
    pub(crate) dec: Vec<DecLayer>,
    pub(crate) dec_ln: Norm,
    /// Offsets of layer-norm gains, set to 1 at init.
    pub(crate) gains: Vec<usize>,
    /// Offsets of matrices initialised with the Xavier rule.
    pub(crate) matrices: Vec<Lin>,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    total: usize,
    gains: Vec<usize>,
    matrices: Vec<Lin>,
    d: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let off = self.total;
        self.total += shape.iter().product::<usize>();
        self.tensors.push(TensorInfo { name, shape, offset: off });
        off
    }
    fn lin(&mut self, name: &str, d_in: usize, d_out: usize) -> Lin {
        let w = self.push(format!("{name}.w"), vec![d_in, d_out]);
        let b = self.push(format!("{name}.b"), vec![d_out]);
        let l = Lin { w, b, d_in, d_out };
        self.matrices.push(l);
        l
    }
    fn norm(&mut self, name: &str) -> Norm {
        let d = self.d;
        let g = self.push(format!("{name}.g"), vec![d]);
        let b = self.push(format!("{name}.b"), vec![d]);
        self.gains.push(g);
        Norm { g, b }
    }
    fn attn(&mut self, name: &str) -> Attn {
        let d = self.d;
        Attn {
            q: self.lin(&format!("{name}.q"), d, d),
            k: self.lin(&format!("{name}.k"), d, d),
            v: self.lin(&format!("{name}.v"), d, d),
            o: self.lin(&format!("{name}.o"), d, d),
        }
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Layout {
        let d = c.d_model;
        let mut b = Builder {
            tensors: Vec::new(),
            total: 0,
            gains: Vec::new(),
            matrices: Vec::new(),
            d,
        };
        let embed = b.push("embed".into(), vec![c.vocab_size, d]);
        let enc = (0..c.layers_enc)
            .map(|l| EncLayer {
                ln1: b.norm(&format!("enc.{l}.ln1")),
                attn: b.attn(&format!("enc.{l}.attn")),
                ln2: b.norm(&format!("enc.{l}.ln2")),
                ff1: b.lin(&format!("enc.{l}.ff1"), d, c.d_ff),
                ff2: b.lin(&format!("enc.{l}.ff2"), c.d_ff, d),
            })
            .collect();
        let enc_ln = b.norm("enc.ln");
        let dec = (0..c.layers_dec)
            .map(|l| DecLayer {
                ln1: b.norm(&format!("dec.{l}.ln1")),
                self_attn: b.attn(&format!("dec.{l}.self")),
                ln2: b.norm(&format!("dec.{l}.ln2")),
                cross_attn: b.attn(&format!("dec.{l}.cross")),
                ln3: b.norm(&format!("dec.{l}.ln3")),
                ff1: b.lin(&format!("dec.{l}.ff1"), d, c.d_ff),
                ff2: b.lin(&format!("dec.{l}.ff2"), c.d_ff, d),
            })
            .collect();
        let dec_ln = b.norm("dec.ln");
        Layout {
            tensors: b.tensors,
            total: b.total,
            embed,
            enc,
            enc_ln,
            dec,
            dec_ln,
            gains: b.gains,
            matrices: b.matrices,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Parameters plus their configuration.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar = f32> {
    pub config: ModelConfig,
    pub layout: Arc<Layout>,
    pub params: Vec<T>,
    pub(crate) pos_table: Arc<Vec<T>>,
}

impl<T: Scalar> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl<T: Scalar> Model<T> {
    /// Deterministic in `config.seed`: Xavier-uniform matrices, embeddings
    /// uniform with std `d^-1/2`, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig) -> Result<Model<T>> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = rng_from_seed(derive_seed(config.seed, "init"));
        let d = config.d_model;
        let a = (3.0 / d as f64).sqrt();
        for p in &mut params[layout.embed..layout.embed + config.vocab_size * d] {
            *p = T::of(rng.gen_range(-a..a));
        }
        for m in &layout.matrices {
            let a = (6.0 / (m.d_in + m.d_out) as f64).sqrt();
            for p in &mut params[m.w..m.w + m.d_in * m.d_out] {
                *p = T::of(rng.gen_range(-a..a));
            }
        }
        for &g in &layout.gains {
            params[g..g + d].iter_mut().for_each(|p| *p = T::one());
        }
        Ok(Model::from_params(config.clone(), params))
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Model<T> {
        let layout = Layout::new(&config);
        assert_eq!(layout.total, params.len(), "parameter buffer does not match the layout");
        let pos_table = super::ops::sinusoid_table(config.max_positions, config.d_model);
        Model {
            config,
            layout: Arc::new(layout),
            params,
            pos_table: Arc::new(pos_table),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.tensor(name).map(|t| &self.params[t.range()])
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model::from_params(self.config.clone(), self.params.iter().map(|p| U::of(p.f64())).collect())
    }

    pub fn params_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.f64().to_le_bytes());
        }
        crate::util::sha256_hex(&bytes)
    }
}

/// Closed-form parameter count for tied embeddings and biased projections.
pub fn param_count(c: &ModelConfig) -> usize {
    let (d, f, v) = (c.d_model, c.d_ff, c.vocab_size);
    let attn = 4 * (d * d + d);
    let ffn = d * f + f + f * d + d;
    let ln = 2 * d;
    let enc = attn + ffn + 2 * ln;
    let dec = 2 * attn + ffn + 3 * ln;
    v * d + c.layers_enc * enc + ln + c.layers_dec * dec + ln
}
