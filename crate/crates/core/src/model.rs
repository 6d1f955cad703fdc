//! Model configuration and named parameter storage shared by the encoder,
//! both decoder heads, the trainer and the evaluator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::textops::Charset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Character-guided spatial attention over the feature map.
    Attention,
    /// Pooled image vector as the first recurrent input, no attention.
    NoAttention,
}

/// Plain convolutional stack: one 3x3 conv + relu per entry of `channels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { input_size: 128, channels: vec![16, 32, 48, 64, 64], strides: vec![2, 2, 2, 2, 1], kernel: 3 }
    }
}

impl EncoderConfig {
    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    /// Side of the (square) output grid.
    pub fn grid(&self) -> usize {
        self.input_size / self.total_stride()
    }

    pub fn out_channels(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    /// Depth of a feature-map cell: visual channels plus column and row
    /// one-hots.
    pub fn feature_depth(&self) -> usize {
        self.out_channels() + 2 * self.grid()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() {
            return Err(Error::Config("encoder: channels and strides must be nonempty and aligned".into()));
        }
        if self.kernel.is_multiple_of(2) || self.strides.contains(&0) || self.channels.contains(&0) {
            return Err(Error::Config("encoder: kernel must be odd, strides and channels positive".into()));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(self.total_stride()) {
            return Err(Error::Config(format!(
                "encoder: input size {} not divisible by total stride {}",
                self.input_size,
                self.total_stride()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { embed_dim: 32, hidden: 128, attn_dim: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// One character per line.
    pub charset: String,
    pub max_len: usize,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Attention,
            charset: Charset::default().to_lines(),
            max_len: 40,
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn charset(&self) -> Result<Charset> {
        Charset::from_lines(&self.charset)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.charset()?;
        let d = &self.decoder;
        if d.embed_dim == 0 || d.hidden == 0 || d.attn_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("decoder dims and max_len must be positive".into()));
        }
        Ok(())
    }

    /// Expected shape of every parameter, by name.
    pub fn param_shapes(&self) -> Result<BTreeMap<String, Vec<usize>>> {
        self.validate()?;
        let enc = &self.encoder;
        let dec = &self.decoder;
        let vocab = self.charset()?.size();
        let (e, d, a) = (dec.embed_dim, dec.hidden, dec.attn_dim);
        let mut s = BTreeMap::new();
        let mut cin = 1;
        for (i, &cout) in enc.channels.iter().enumerate() {
            s.insert(format!("enc.{i}.w"), vec![cout, cin, enc.kernel, enc.kernel]);
            s.insert(format!("enc.{i}.b"), vec![cout]);
            cin = cout;
        }
        s.insert("embed".into(), vec![vocab, e]);
        s.insert("head.w".into(), vec![d, 1]);
        s.insert("head.b".into(), vec![1]);
        match self.kind {
            ModelKind::Attention => {
                let f = enc.feature_depth();
                s.insert("lstm.w".into(), vec![e + f + d, 4 * d]);
                s.insert("attn.w".into(), vec![d, a]);
                s.insert("attn.u".into(), vec![f, a]);
                s.insert("attn.v".into(), vec![a]);
            }
            ModelKind::NoAttention => {
                s.insert("lstm.w".into(), vec![e + d, 4 * d]);
                s.insert("img.w".into(), vec![enc.out_channels(), e]);
                s.insert("img.b".into(), vec![e]);
            }
        }
        s.insert("lstm.b".into(), vec![4 * d]);
        Ok(s)
    }
}

pub type ParamStore = BTreeMap<String, Tensor>;

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    charset: Charset,
}

impl Model {
    /// Fan-in scaled uniform weights, zero biases, forget-gate bias 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let shapes = config.param_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = config.decoder.hidden;
        let mut params = ParamStore::new();
        for (name, shape) in &shapes {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".b") {
                let mut b = vec![0.0; n];
                if name == "lstm.b" {
                    b[hidden..2 * hidden].fill(1.0);
                }
                b
            } else {
                let bound = init_bound(name, shape);
                (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
            };
            params.insert(name.clone(), Tensor::new(shape.clone(), data)?);
        }
        Model::from_parts(config, params)
    }

    /// Every parameter set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let params = config.param_shapes()?.into_iter().map(|(k, s)| (k, Tensor::zeros(s))).collect();
        Model::from_parts(config, params)
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let shapes = config.param_shapes()?;
        if shapes.len() != params.len() {
            return Err(Error::Config(format!("expected {} parameters, found {}", shapes.len(), params.len())));
        }
        for (name, shape) in &shapes {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Config(format!("parameter {name}: shape {:?}, expected {shape:?}", t.shape())))
                }
                None => return Err(Error::Config(format!("missing parameter {name}"))),
            }
        }
        let charset = config.charset()?;
        Ok(Model { config, params, charset })
    }

    pub fn charset(&self) -> &Charset {
        &self.charset
    }

    pub fn param(&self, name: &str) -> &Tensor {
        &self.params[name]
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Records every parameter on `g`, as gradient leaves or constants.
    pub fn bind<T: Real>(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| {
                let t = t.cast::<T>();
                let v = if trainable { g.param(t) } else { g.constant(t) };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

fn init_bound(name: &str, shape: &[usize]) -> f32 {
    if name.starts_with("enc.") {
        // relu layers: fan_in = cin * k * k
        let fan_in: usize = shape[1..].iter().product();
        (6.0 / fan_in as f32).sqrt()
    } else if name == "embed" {
        (3.0 / shape[1] as f32).sqrt()
    } else {
        1.0 / (shape[0] as f32).sqrt()
    }
}

/// Graph handles of a model's parameters.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Handles for externally recorded parameters.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound { vars: vars.into_iter().collect() }
    }

    pub fn get(&self, name: &str) -> Var {
        self.vars[name]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
