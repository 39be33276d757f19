//! Full architectures: the pseudo-sequence transformer and the pointwise
//! baselines, all mapping `[B, S, d]` coordinate sequences to `[B, S, out]`.

use pinnsformer_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationKind, DecoderLayer, EncoderLayer, Linear, Mlp};
use crate::params::{Initializer, ParamLayout, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "pinnsformer")]
    PinnsFormer,
    #[serde(rename = "pinn-mlp")]
    PinnMlp,
    #[serde(rename = "fls")]
    Fls,
    #[serde(rename = "qres")]
    QRes,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::PinnsFormer => "pinnsformer",
            Architecture::PinnMlp => "pinn-mlp",
            Architecture::Fls => "fls",
            Architecture::QRes => "qres",
        }
    }

    fn default_activation(self) -> ActivationKind {
        match self {
            Architecture::PinnsFormer => ActivationKind::Wavelet,
            _ => ActivationKind::Tanh,
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pinnsformer" => Architecture::PinnsFormer,
            "pinn-mlp" | "pinn" | "mlp" => Architecture::PinnMlp,
            "fls" => Architecture::Fls,
            "qres" => Architecture::QRes,
            other => return Err(Error::UnknownArchitecture(other.to_string())),
        })
    }
}

/// Architecture hyperparameters. Transformer fields are ignored by the
/// baselines and vice versa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// Every activation site uses this kind; unset means wavelet for the
    /// transformer and tanh for the baselines.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationKind>,
    pub k: usize,
    pub dt: f64,
    pub embed: usize,
    pub heads: usize,
    pub encoders: usize,
    pub decoders: usize,
    /// Hidden widths of each feedforward sub-block.
    pub ff_widths: Vec<usize>,
    /// Hidden widths of the output MLP.
    pub head_widths: Vec<usize>,
    pub mlp_width: usize,
    /// Linear layers of the MLP baselines, or quadratic blocks of QRes.
    pub mlp_depth: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            arch: Architecture::PinnsFormer,
            activation: None,
            k: 5,
            dt: 1e-3,
            embed: 32,
            heads: 2,
            encoders: 1,
            decoders: 1,
            ff_widths: vec![256, 256],
            head_widths: vec![512, 512],
            mlp_width: 512,
            mlp_depth: 4,
        }
    }
}

impl ModelSpec {
    pub fn activation_kind(&self) -> ActivationKind {
        self.activation.unwrap_or(self.arch.default_activation())
    }

    /// Pseudo-sequence length actually fed to the network.
    pub fn seq_len(&self) -> usize {
        match self.arch {
            Architecture::PinnsFormer => self.k,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidK(self.k));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidStep(self.dt));
        }
        match self.arch {
            Architecture::PinnsFormer => {
                if self.embed == 0 || self.heads == 0 || !self.embed.is_multiple_of(self.heads) {
                    return Err(Error::InvalidSpec(format!(
                        "embedding size {} must be a positive multiple of {} heads",
                        self.embed, self.heads
                    )));
                }
            }
            _ => {
                if self.mlp_width == 0 || self.mlp_depth < 2 {
                    return Err(Error::InvalidSpec("MLP needs width ≥ 1 and depth ≥ 2".into()));
                }
            }
        }
        Ok(())
    }
}

/// Anything that maps coordinate sequences to outputs with flat parameters.
pub trait Surrogate: Sync {
    fn layout(&self) -> &ParamLayout;
    /// Number of pseudo steps per input point.
    fn seq_len(&self) -> usize;
    /// Time offset between consecutive pseudo steps.
    fn step(&self) -> f64;
    fn out_dim(&self) -> usize;
    /// `[B, S, d] -> [B, S, out]`.
    fn forward(&self, p: &[Tensor], seq: &Tensor) -> Result<Tensor>;
}

/// Extends each point `[.., t]` to `[.., t + jΔt]` for `j = 0..k`, giving
/// `[B, k, d]`. Time is the last coordinate. Step 0 is the input unchanged.
pub fn generate_pseudo_sequence(points: &Tensor, k: usize, dt: f64) -> Result<Tensor> {
    if k < 1 {
        return Err(Error::InvalidK(k));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(dt));
    }
    let &[b, d] = points.shape() else {
        return Err(Error::InvalidSpec(format!("points must be [B, d], got {:?}", points.shape())));
    };
    let mut offsets = vec![0.0; k * d];
    for j in 0..k {
        offsets[j * d + d - 1] = j as f64 * dt;
    }
    let offsets = Tensor::new(offsets, &[k, d])?;
    Ok(points.reshape(&[b, 1, d])?.broadcast_to(&[b, k, d])?.add(&offsets)?)
}

/// Step-0 slice of a `[B, k, m]` sequence output, as `[B, m]`.
pub fn extract_solution(seq_out: &Tensor) -> Result<Tensor> {
    let &[b, _, m] = seq_out.shape() else {
        return Err(Error::InvalidSpec(format!("expected [B, k, m], got {:?}", seq_out.shape())));
    };
    Ok(seq_out.narrow(1, 0, 1)?.reshape(&[b, m])?)
}

#[derive(Clone, Debug)]
enum Net {
    Transformer {
        mixer: Linear,
        encoders: Vec<EncoderLayer>,
        encoder_act: Activation,
        decoders: Vec<DecoderLayer>,
        decoder_act: Activation,
        head: Mlp,
    },
    Mlp(Mlp),
    QRes { blocks: Vec<(Linear, Linear)>, activation: Activation, output: Linear },
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    in_dim: usize,
    out_dim: usize,
    layout: ParamLayout,
    net: Net,
}

impl Model {
    /// Builds the network and its initial parameters: Xavier-uniform weights,
    /// zero biases, wavelet coefficients at 1.
    pub fn new(spec: &ModelSpec, in_dim: usize, out_dim: usize, seed: u64) -> Result<(Model, ParamStore)> {
        spec.validate()?;
        let kind = spec.activation_kind();
        let mut init = Initializer::new(seed);
        let net = match spec.arch {
            Architecture::PinnsFormer => {
                let mixer = Linear::new(&mut init, "mixer", in_dim, spec.embed);
                let encoders = (0..spec.encoders)
                    .map(|i| EncoderLayer::new(&mut init, &format!("encoder.{i}"), spec.embed, spec.heads, &spec.ff_widths, kind))
                    .collect::<Result<Vec<_>>>()?;
                let encoder_act = Activation::new(kind, &mut init, "encoder.act");
                let decoders = (0..spec.decoders)
                    .map(|i| DecoderLayer::new(&mut init, &format!("decoder.{i}"), spec.embed, spec.heads, &spec.ff_widths, kind))
                    .collect::<Result<Vec<_>>>()?;
                let decoder_act = Activation::new(kind, &mut init, "decoder.act");
                let mut widths = vec![spec.embed];
                widths.extend_from_slice(&spec.head_widths);
                widths.push(out_dim);
                let head = Mlp::new(&mut init, "head", &widths, kind);
                Net::Transformer { mixer, encoders, encoder_act, decoders, decoder_act, head }
            }
            Architecture::PinnMlp | Architecture::Fls => {
                let mut widths = vec![in_dim];
                widths.extend(std::iter::repeat_n(spec.mlp_width, spec.mlp_depth - 1));
                widths.push(out_dim);
                let mut mlp = Mlp::new(&mut init, "mlp", &widths, kind);
                if spec.arch == Architecture::Fls {
                    mlp.activations[0] = Activation::Sin;
                }
                Net::Mlp(mlp)
            }
            Architecture::QRes => {
                let activation = Activation::new(kind, &mut init, "qres.act");
                let blocks = (0..spec.mlp_depth)
                    .map(|i| {
                        let fan_in = if i == 0 { in_dim } else { spec.mlp_width };
                        (
                            Linear::new(&mut init, &format!("qres.{i}.h1"), fan_in, spec.mlp_width),
                            Linear::new(&mut init, &format!("qres.{i}.h2"), fan_in, spec.mlp_width),
                        )
                    })
                    .collect();
                let output = Linear::new(&mut init, "qres.out", spec.mlp_width, out_dim);
                Net::QRes { blocks, activation, output }
            }
        };
        let store = init.finish();
        let model = Model { spec: spec.clone(), in_dim, out_dim, layout: store.layout().clone(), net };
        Ok((model, store))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// `[B, d]` points through the pseudo-sequence generator and the network.
    pub fn forward_points(&self, p: &[Tensor], points: &Tensor) -> Result<Tensor> {
        let seq = generate_pseudo_sequence(points, self.seq_len(), self.step())?;
        self.forward(p, &seq)
    }
}

impl Surrogate for Model {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn seq_len(&self) -> usize {
        self.spec.seq_len()
    }

    fn step(&self) -> f64 {
        self.spec.dt
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn forward(&self, p: &[Tensor], seq: &Tensor) -> Result<Tensor> {
        match &self.net {
            Net::Transformer { mixer, encoders, encoder_act, decoders, decoder_act, head } => {
                let embedded = mixer.forward(p, seq)?;
                let mut enc = embedded.clone();
                for layer in encoders {
                    enc = layer.forward(p, &enc)?;
                }
                let enc = encoder_act.apply(p, &enc)?;
                let mut dec = embedded;
                for layer in decoders {
                    dec = layer.forward(p, &dec, &enc)?;
                }
                let dec = decoder_act.apply(p, &dec)?;
                head.forward(p, &dec)
            }
            Net::Mlp(mlp) => mlp.forward(p, seq),
            Net::QRes { blocks, activation, output } => {
                let mut h = seq.clone();
                for (h1, h2) in blocks {
                    let a = h1.forward(p, &h)?;
                    let b = h2.forward(p, &h)?;
                    h = activation.apply(p, &a.mul(&b)?.add(&a)?)?;
                }
                output.forward(p, &h)
            }
        }
    }
}
