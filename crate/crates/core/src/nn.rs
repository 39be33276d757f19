//! Linear layers, activations, multi-head attention and the encoder/decoder
//! blocks. Layers hold parameter indices; values arrive at call time as the
//! tensors produced by [`ParamLayout::bind`](crate::params::ParamLayout::bind).

use pinnsformer_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Initializer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Wavelet,
    Tanh,
    Sin,
    Relu,
    Sigmoid,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Wavelet => "wavelet",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sin => "sin",
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "wavelet" => ActivationKind::Wavelet,
            "tanh" => ActivationKind::Tanh,
            "sin" => ActivationKind::Sin,
            "relu" => ActivationKind::Relu,
            "sigmoid" => ActivationKind::Sigmoid,
            other => return Err(Error::Config(format!("unknown activation `{other}`"))),
        })
    }
}

/// `w1 * sin(x) + w2 * cos(x)`.
pub fn wavelet(w1: &Tensor, w2: &Tensor, x: &Tensor) -> Result<Tensor> {
    Ok(x.sin().mul(w1)?.add(&x.cos().mul(w2)?)?)
}

/// One activation site. Wavelet sites own their own `w1`, `w2` pair.
#[derive(Clone, Debug)]
pub enum Activation {
    Wavelet { w1: usize, w2: usize },
    Tanh,
    Sin,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn new(kind: ActivationKind, init: &mut Initializer, name: &str) -> Self {
        match kind {
            ActivationKind::Wavelet => Activation::Wavelet {
                w1: init.constant(format!("{name}.w1"), &[1], 1.0),
                w2: init.constant(format!("{name}.w2"), &[1], 1.0),
            },
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::Sin => Activation::Sin,
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::Sigmoid => Activation::Sigmoid,
        }
    }

    pub fn apply(&self, p: &[Tensor], x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Activation::Wavelet { w1, w2 } => wavelet(&p[*w1], &p[*w2], x)?,
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
            Activation::Relu => x.relu(),
            Activation::Sigmoid => x.sigmoid(),
        })
    }
}

/// Initial value of every bias entry.
pub const BIAS_INIT: f64 = 0.0;

/// `x Wᵀ + b` over the trailing axis. `W` is `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(init: &mut Initializer, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: init.xavier(format!("{name}.weight"), out_dim, in_dim),
            bias: Some(init.constant(format!("{name}.bias"), &[out_dim], BIAS_INIT)),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, p: &[Tensor], x: &Tensor) -> Result<Tensor> {
        if x.rank() == 1 {
            let y = self.forward(p, &x.reshape(&[1, x.numel()])?)?;
            return Ok(y.reshape(&[self.out_dim])?);
        }
        let y = x.matmul_t(&p[self.weight], false, true)?;
        Ok(match self.bias {
            Some(b) => y.add(&p[b])?,
            None => y,
        })
    }
}

/// Attention with `heads` heads over `[B, k, e]` sequences, biased Q/K/V/O
/// projections and no masking.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(init: &mut Initializer, name: &str, embed: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !embed.is_multiple_of(heads) {
            return Err(Error::InvalidSpec(format!(
                "embedding size {embed} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(init, &format!("{name}.q"), embed, embed),
            key: Linear::new(init, &format!("{name}.k"), embed, embed),
            value: Linear::new(init, &format!("{name}.v"), embed, embed),
            output: Linear::new(init, &format!("{name}.o"), embed, embed),
            heads,
        })
    }

    pub fn forward(&self, p: &[Tensor], query: &Tensor, key: &Tensor, value: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(p, query, key, value)?.0)
    }

    /// Also returns each head's `[B, k_q, k_kv]` attention weights.
    pub fn forward_with_weights(
        &self,
        p: &[Tensor],
        query: &Tensor,
        key: &Tensor,
        value: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let q = self.query.forward(p, query)?;
        let k = self.key.forward(p, key)?;
        let v = self.value.forward(p, value)?;
        let axis = q.rank() - 1;
        let dh = self.query.out_dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let head = |t: &Tensor| -> Result<Tensor> {
                if self.heads == 1 {
                    Ok(t.clone())
                } else {
                    Ok(t.narrow(axis, h * dh, dh)?)
                }
            };
            let (qh, kh, vh) = (head(&q)?, head(&k)?, head(&v)?);
            let w = qh.matmul_t(&kh, false, true)?.scale(scale).softmax_last()?;
            outs.push(w.matmul(&vh)?);
            weights.push(w);
        }
        let joined = if outs.len() == 1 {
            outs.pop().unwrap()
        } else {
            let refs: Vec<&Tensor> = outs.iter().collect();
            Tensor::concat(&refs, axis)?
        };
        Ok((self.output.forward(p, &joined)?, weights))
    }
}

/// Linear layers with an activation between consecutive ones:
/// `widths[0] -> widths[1] -> ... -> widths[n]`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
}

impl Mlp {
    pub fn new(init: &mut Initializer, name: &str, widths: &[usize], kind: ActivationKind) -> Self {
        let mut layers = Vec::new();
        let mut activations = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(Linear::new(init, &format!("{name}.{i}"), pair[0], pair[1]));
            if i + 2 < widths.len() {
                activations.push(Activation::new(kind, init, &format!("{name}.act{i}")));
            }
        }
        Mlp { layers, activations }
    }

    pub fn forward(&self, p: &[Tensor], x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, &h)?;
            if let Some(act) = self.activations.get(i) {
                h = act.apply(p, &h)?;
            }
        }
        Ok(h)
    }
}

/// `x += attn(act1(x)); x += ff(act2(x))`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub act1: Activation,
    pub attention: MultiHeadAttention,
    pub act2: Activation,
    pub feedforward: Mlp,
}

/// Like [`EncoderLayer`], but queries come from the decoder stream while keys
/// and values come from the encoder output. No self-attention.
#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub act1: Activation,
    pub attention: MultiHeadAttention,
    pub act2: Activation,
    pub feedforward: Mlp,
}

fn block_parts(
    init: &mut Initializer,
    name: &str,
    embed: usize,
    heads: usize,
    ff_widths: &[usize],
    kind: ActivationKind,
) -> Result<(Activation, MultiHeadAttention, Activation, Mlp)> {
    let act1 = Activation::new(kind, init, &format!("{name}.act1"));
    let attention = MultiHeadAttention::new(init, &format!("{name}.attn"), embed, heads)?;
    let act2 = Activation::new(kind, init, &format!("{name}.act2"));
    let mut widths = vec![embed];
    widths.extend_from_slice(ff_widths);
    widths.push(embed);
    let feedforward = Mlp::new(init, &format!("{name}.ff"), &widths, kind);
    Ok((act1, attention, act2, feedforward))
}

impl EncoderLayer {
    pub fn new(
        init: &mut Initializer,
        name: &str,
        embed: usize,
        heads: usize,
        ff_widths: &[usize],
        kind: ActivationKind,
    ) -> Result<Self> {
        let (act1, attention, act2, feedforward) = block_parts(init, name, embed, heads, ff_widths, kind)?;
        Ok(EncoderLayer { act1, attention, act2, feedforward })
    }

    pub fn forward(&self, p: &[Tensor], x: &Tensor) -> Result<Tensor> {
        let h = self.act1.apply(p, x)?;
        let x = x.add(&self.attention.forward(p, &h, &h, &h)?)?;
        let h = self.act2.apply(p, &x)?;
        Ok(x.add(&self.feedforward.forward(p, &h)?)?)
    }
}

impl DecoderLayer {
    pub fn new(
        init: &mut Initializer,
        name: &str,
        embed: usize,
        heads: usize,
        ff_widths: &[usize],
        kind: ActivationKind,
    ) -> Result<Self> {
        let (act1, attention, act2, feedforward) = block_parts(init, name, embed, heads, ff_widths, kind)?;
        Ok(DecoderLayer { act1, attention, act2, feedforward })
    }

    pub fn forward(&self, p: &[Tensor], x: &Tensor, encoded: &Tensor) -> Result<Tensor> {
        if x.shape() != encoded.shape() {
            return Err(pinnsformer_autodiff::AutodiffError::IncompatibleShapes {
                op: "decoder",
                lhs: x.shape().to_vec(),
                rhs: encoded.shape().to_vec(),
            }
            .into());
        }
        let h = self.act1.apply(p, x)?;
        let x = x.add(&self.attention.forward(p, &h, encoded, encoded)?)?;
        let h = self.act2.apply(p, &x)?;
        Ok(x.add(&self.feedforward.forward(p, &h)?)?)
    }
}
