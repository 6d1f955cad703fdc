//! Gradient checks of every differentiable op and of miniature models,
//! against central differences in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decoder::subbatch_loss;
use crate::encoder::encode_graph;
use crate::error::{Error, Result};
use crate::model::{Bound, DecoderConfig, EncoderConfig, Model, ModelConfig, ModelKind};
use crate::tensor::gradcheck::project;
use crate::tensor::{grad_check, grad_check_fn, Graph, OpKind, Padding, Tensor, Var};
use crate::textops::{encode, Charset, EncodedCandidate};

pub const TOLERANCE: f64 = 1e-3;

/// Pre-activations must be at least this far from a relu kink for a
/// finite-difference comparison to be meaningful.
const KINK_MARGIN: f64 = 5e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckRow {
    pub name: String,
    pub max_error: f64,
    pub seeds: usize,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.max_error < TOLERANCE
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero.
fn off_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = uniform(rng, shape, -1.0, 1.0);
    for v in t.data_mut() {
        *v = v.signum() * (0.1 + v.abs());
    }
    t
}

/// Distinct values, at least 0.01 apart, in random order.
fn distinct(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    Tensor::new(shape.to_vec(), v).unwrap()
}

fn op_cases(rng: &mut impl Rng) -> Vec<(String, OpKind, Vec<Tensor<f64>>)> {
    let u = |rng: &mut ChaCha8Rng, s: &[usize]| uniform(rng, s, -1.0, 1.0);
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    let rng = &mut r;
    vec![
        ("matmul".into(), OpKind::MatMul, vec![u(rng, &[3, 4]), u(rng, &[4, 5])]),
        (
            "conv2d_same".into(),
            OpKind::Conv2d { stride: 1, padding: Padding::Same, bias: true },
            vec![u(rng, &[2, 5, 5]), u(rng, &[3, 2, 3, 3]), u(rng, &[3])],
        ),
        (
            "conv2d_stride2".into(),
            OpKind::Conv2d { stride: 2, padding: Padding::Valid, bias: false },
            vec![u(rng, &[2, 7, 6]), u(rng, &[2, 2, 3, 3])],
        ),
        ("max_pool".into(), OpKind::MaxPool { size: 2, stride: 2 }, vec![distinct(rng, &[2, 6, 6])]),
        ("relu".into(), OpKind::Relu, vec![off_zero(rng, &[3, 4])]),
        ("tanh".into(), OpKind::Tanh, vec![u(rng, &[3, 4])]),
        ("sigmoid".into(), OpKind::Sigmoid, vec![uniform(rng, &[3, 4], -3.0, 3.0)]),
        ("add".into(), OpKind::Add, vec![u(rng, &[3, 4]), u(rng, &[3, 4])]),
        ("add_broadcast".into(), OpKind::Add, vec![u(rng, &[3, 4]), u(rng, &[4])]),
        ("mul".into(), OpKind::Mul, vec![u(rng, &[3, 4]), u(rng, &[3, 4])]),
        ("mul_broadcast".into(), OpKind::Mul, vec![u(rng, &[2, 3, 4]), u(rng, &[1, 4])]),
        ("scale".into(), OpKind::Scale(-0.7), vec![u(rng, &[5])]),
        ("concat_rows".into(), OpKind::Concat { axis: 0 }, vec![u(rng, &[2, 3]), u(rng, &[1, 3])]),
        ("concat_cols".into(), OpKind::Concat { axis: 1 }, vec![u(rng, &[2, 3]), u(rng, &[2, 2]), u(rng, &[2, 1])]),
        ("softmax".into(), OpKind::Softmax, vec![uniform(rng, &[3, 5], -2.0, 2.0)]),
        ("embedding".into(), OpKind::Embedding { indices: vec![1, 3, 1, 5] }, vec![u(rng, &[6, 4])]),
        ("slice".into(), OpKind::Slice { axis: 1, start: 2, len: 3 }, vec![u(rng, &[4, 6])]),
        ("reshape".into(), OpKind::Reshape { shape: vec![2, 6] }, vec![u(rng, &[3, 4])]),
        ("transpose".into(), OpKind::Transpose, vec![u(rng, &[3, 4])]),
        ("reduce_sum".into(), OpKind::Sum, vec![u(rng, &[3, 4])]),
        ("reduce_mean".into(), OpKind::Mean, vec![u(rng, &[3, 4])]),
        (
            "bce_with_logits".into(),
            OpKind::BceWithLogits { labels: vec![1.0, 0.0, 0.0, 1.0, 0.0], weights: vec![4.0, 1.0, 1.0, 4.0, 1.0] },
            vec![uniform(rng, &[5], -3.0, 3.0)],
        ),
    ]
}

/// Small model used for end-to-end checks: 16x16 input, 4x4 grid.
pub fn miniature_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        charset: Charset::new("abc ".chars()).unwrap().to_lines(),
        max_len: 6,
        encoder: EncoderConfig { input_size: 16, channels: vec![4, 4], strides: vec![2, 2], kernel: 3 },
        decoder: DecoderConfig { embed_dim: 4, hidden: 8, attn_dim: 6 },
    }
}

fn model_inputs(model: &Model, rng: &mut impl Rng) -> (Vec<String>, Vec<Tensor<f64>>) {
    let mut names = Vec::new();
    let mut inputs = Vec::new();
    for (k, t) in &model.params {
        names.push(k.clone());
        let mut t = t.cast::<f64>();
        if k.ends_with(".b") {
            // Nonzero biases so every term is exercised.
            for v in t.data_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
        inputs.push(t);
    }
    let s = model.config.encoder.input_size;
    inputs.push(uniform(rng, &[1, s, s], 0.0, 1.0));
    (names, inputs)
}

fn bound(names: &[String], vars: &[Var]) -> Bound {
    Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()))
}

fn kink_free<F>(inputs: &[Tensor<f64>], f: &F) -> Result<bool>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.constant(x.clone())).collect();
    f(&mut g, &vars)?;
    Ok(g.relu_margin().is_none_or(|m| m > KINK_MARGIN))
}

/// Redraws the check point until no relu input sits near its kink.
fn check_away_from_kinks<F, D>(rng: &mut ChaCha8Rng, draw: D, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    D: Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
{
    for _ in 0..100 {
        let inputs = draw(rng);
        if kink_free(&inputs, &f)? {
            return grad_check_fn(&inputs, &f);
        }
    }
    Err(Error::InvalidArgument("could not draw a check point away from relu kinks".into()))
}

fn candidates(cs: &Charset, max_len: usize) -> Vec<EncodedCandidate> {
    ["ab c", "cab", "a"].iter().map(|t| encode(t, cs, max_len).unwrap()).collect()
}

fn check_model(kind: ModelKind, seed: u64) -> Result<f64> {
    let cfg = miniature_config(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cands = candidates(&cfg.charset()?, cfg.max_len);
    let labels = [1.0f32, 0.0, 0.0];
    let names: Vec<String> = cfg.param_shapes()?.into_keys().collect();
    let draw = |rng: &mut ChaCha8Rng| {
        let model = Model::init(cfg.clone(), rng.gen()).unwrap();
        model_inputs(&model, rng).1
    };
    check_away_from_kinks(&mut rng, draw, |g, vars| {
        let (params, image) = vars.split_at(names.len());
        let p = bound(&names, params);
        Ok(subbatch_loss(g, &p, &cfg, image[0], &cands, &labels, 4.0)?.0)
    })
}

fn check_encoder(seed: u64) -> Result<f64> {
    let cfg = miniature_config(ModelKind::Attention);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = cfg.param_shapes()?.into_keys().filter(|k| k.starts_with("enc.")).collect();
    let draw = |rng: &mut ChaCha8Rng| {
        let model = Model::init(cfg.clone(), rng.gen()).unwrap();
        let (all, inputs) = model_inputs(&model, rng);
        let mut out: Vec<Tensor<f64>> =
            all.iter().zip(&inputs).filter(|(k, _)| k.starts_with("enc.")).map(|(_, t)| t.clone()).collect();
        out.push(inputs.last().unwrap().clone());
        out
    };
    check_away_from_kinks(&mut rng, draw, |g, vars| {
        let (params, image) = vars.split_at(names.len());
        let p = bound(&names, params);
        let f = encode_graph(g, &p, &cfg.encoder, image[0])?;
        project(g, f)
    })
}

/// Max relative error per op and per miniature model over `seeds` seeds.
pub fn gradcheck_suite(seeds: u64) -> Result<Vec<GradCheckRow>> {
    let mut rows: Vec<GradCheckRow> = Vec::new();
    let mut record = |name: String, err: f64| match rows.iter_mut().find(|r| r.name == name) {
        Some(r) => {
            r.max_error = r.max_error.max(err);
            r.seeds += 1;
        }
        None => rows.push(GradCheckRow { name, max_error: err, seeds: 1 }),
    };
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, kind, inputs) in op_cases(&mut rng) {
            record(name, grad_check(&kind, &inputs)?);
        }
        record("encoder".into(), check_encoder(seed)?);
        record("model_attention".into(), check_model(ModelKind::Attention, seed)?);
        record("model_no_attention".into(), check_model(ModelKind::NoAttention, seed)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_seed_passes() {
        for row in gradcheck_suite(1).unwrap() {
            assert!(row.passed(), "{row:?}");
        }
    }
}
