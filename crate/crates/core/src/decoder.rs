//! Character-guided attention decoder, the "no attention" baseline head,
//! and the weighted verification loss.
//!
//! At step `t` the decoder attends over the feature map with the previous
//! hidden state, `e = v^T tanh(W h + U f)`, pools a context vector with
//! the spatial softmax of `e`, and feeds `[embed(S_t), context]` to an LSTM.
//! The verification probability is a sigmoid readout of the hidden state
//! at the candidate's own last character.

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_graph, encode_image, FeatureMap};
use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::model::{Bound, Model, ModelConfig, ModelKind};
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::textops::EncodedCandidate;

#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub p_valid: f32,
    /// Probability after each character; the last entry equals `p_valid`.
    pub step_probs: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionStep {
    pub character: String,
    /// `e`, as `[row][col]`.
    pub relevance: Vec<Vec<f32>>,
    /// Softmax of `relevance`.
    pub attention: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub height: usize,
    pub width: usize,
    pub steps: Vec<AttentionStep>,
}

impl AttentionTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-image attention inputs shared by all candidates.
#[derive(Clone, Copy, Debug)]
pub struct AttnInputs {
    /// `[cells, depth]`
    pub feats: Var,
    /// `U f` for every cell, `[cells, attn_dim]`.
    proj: Var,
    /// `v` as a column, `[attn_dim, 1]`.
    v_col: Var,
    cells: usize,
}

pub fn prepare_attention<T: Real>(g: &mut Graph<T>, p: &Bound, feats: Var) -> Result<AttnInputs> {
    let proj = g.matmul(feats, p.get("attn.u"))?;
    let v = p.get("attn.v");
    let a = g.shape(v)[0];
    let v_col = g.reshape(v, &[a, 1])?;
    let cells = g.shape(feats)[0];
    Ok(AttnInputs { feats, proj, v_col, cells })
}

/// Attention for a batch of hidden states `[rows, hidden]`. Returns
/// `(context [rows, depth], alpha [rows, cells], e [rows, cells])`.
pub fn attend<T: Real>(g: &mut Graph<T>, p: &Bound, inp: &AttnInputs, h_prev: Var) -> Result<(Var, Var, Var)> {
    let rows = g.shape(h_prev)[0];
    let cells = inp.cells;
    let wh = g.matmul(h_prev, p.get("attn.w"))?;
    // Pair every row with every cell: [rows * cells, attn_dim].
    let row_of: Vec<usize> = (0..rows).flat_map(|r| std::iter::repeat_n(r, cells)).collect();
    let cell_of: Vec<usize> = (0..rows).flat_map(|_| 0..cells).collect();
    let wh = g.embedding(wh, &row_of)?;
    let proj = g.embedding(inp.proj, &cell_of)?;
    let pre = g.add(proj, wh)?;
    let act = g.tanh(pre)?;
    let e_col = g.matmul(act, inp.v_col)?;
    let e = g.reshape(e_col, &[rows, cells])?;
    let alpha = g.softmax(e)?;
    let ctx = g.matmul(alpha, inp.feats)?;
    Ok((ctx, alpha, e))
}

fn lstm_cell<T: Real>(g: &mut Graph<T>, p: &Bound, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let d = g.shape(h_prev)[1];
    let xh = g.concat(&[x, h_prev], 1)?;
    let z = g.matmul(xh, p.get("lstm.w"))?;
    let z = g.add(z, p.get("lstm.b"))?;
    let zi = g.slice(z, 1, 0, d)?;
    let zf = g.slice(z, 1, d, d)?;
    let zg = g.slice(z, 1, 2 * d, d)?;
    let zo = g.slice(z, 1, 3 * d, d)?;
    let i = g.sigmoid(zi)?;
    let f = g.sigmoid(zf)?;
    let gg = g.tanh(zg)?;
    let o = g.sigmoid(zo)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, gg)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

fn readout<T: Real>(g: &mut Graph<T>, p: &Bound, h: Var) -> Result<(Var, Var)> {
    let z = g.matmul(h, p.get("head.w"))?;
    let logit = g.add(z, p.get("head.b"))?;
    let y = g.sigmoid(logit)?;
    Ok((logit, y))
}

/// Graph handles of one decoder step; every tensor has one row per
/// candidate still running.
#[derive(Clone, Copy, Debug)]
pub struct StepOut {
    pub h: Var,
    pub c: Var,
    pub logit: Var,
    pub y: Var,
    pub alpha: Option<Var>,
    pub e: Option<Var>,
}

/// A sub-batch decoded together. Rows hold candidates sorted by
/// decreasing length (ties in input order) and drop out as candidates end,
/// so each row's arithmetic is the same as decoding it alone.
#[derive(Clone, Debug)]
pub struct DecoderRun {
    /// Candidate index held in each row.
    order: Vec<usize>,
    /// Row holding each candidate.
    row: Vec<usize>,
    lens: Vec<usize>,
    pub steps: Vec<StepOut>,
}

impl DecoderRun {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `[M]` logits at each candidate's own last character, in input order.
    pub fn last_logits<T: Real>(&self, g: &mut Graph<T>) -> Result<Var> {
        let parts = (0..self.len())
            .map(|k| {
                let r = self.row[k];
                g.slice(self.steps[self.lens[k] - 1].logit, 0, r, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        let cat = g.concat(&parts, 0)?;
        g.reshape(cat, &[parts.len()])
    }

    pub fn scores<T: Real>(&self, g: &Graph<T>) -> Vec<Score> {
        (0..self.len())
            .map(|k| {
                let r = self.row[k];
                let step_probs: Vec<f32> =
                    self.steps[..self.lens[k]].iter().map(|s| g.value(s.y).data()[r].to_f32()).collect();
                Score { p_valid: *step_probs.last().expect("nonempty candidate"), step_probs }
            })
            .collect()
    }

    fn trace(&self, g: &Graph<f32>, k: usize, cand: &EncodedCandidate, fmap: &FeatureMap) -> AttentionTrace {
        let r = self.row[k];
        let cells = fmap.height * fmap.width;
        let grid = |v: Var| -> Vec<Vec<f32>> {
            g.value(v).data()[r * cells..(r + 1) * cells].chunks(fmap.width).map(|row| row.to_vec()).collect()
        };
        let steps = self.steps[..self.lens[k]]
            .iter()
            .zip(cand.text.chars())
            .map(|(s, ch)| AttentionStep {
                character: ch.to_string(),
                relevance: grid(s.e.expect("attention step")),
                attention: grid(s.alpha.expect("attention step")),
            })
            .collect();
        AttentionTrace { height: fmap.height, width: fmap.width, steps }
    }
}

fn zero_state<T: Real>(g: &mut Graph<T>, rows: usize, hidden: usize) -> (Var, Var) {
    let h = g.constant(Tensor::zeros([rows, hidden]));
    let c = g.constant(Tensor::zeros([rows, hidden]));
    (h, c)
}

/// Mean of the visual channels over all cells, projected to the embedding
/// size: the first recurrent input of the baseline.
pub fn pooled_image_input<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &ModelConfig, feats: Var) -> Result<Var> {
    let cells = g.shape(feats)[0];
    let visual = g.slice(feats, 1, 0, cfg.encoder.out_channels())?;
    let avg = g.constant(Tensor::full([1, cells], T::one() / T::from_f64(cells as f64)));
    let pooled = g.matmul(avg, visual)?;
    let z = g.matmul(pooled, p.get("img.w"))?;
    g.add(z, p.get("img.b"))
}

/// Decoder passes for every candidate over one shared feature map.
pub fn run_candidates<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    feats: Var,
    cands: &[EncodedCandidate],
) -> Result<DecoderRun> {
    if cands.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    if cands.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyText);
    }
    let m = cands.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(cands[k].len()));
    let mut row = vec![0; m];
    for (r, &k) in order.iter().enumerate() {
        row[k] = r;
    }
    let lens: Vec<usize> = cands.iter().map(EncodedCandidate::len).collect();
    let hidden = cfg.decoder.hidden;

    let (attn, (mut h, mut c)) = match cfg.kind {
        ModelKind::Attention => (Some(prepare_attention(g, p, feats)?), zero_state(g, m, hidden)),
        ModelKind::NoAttention => {
            let x = pooled_image_input(g, p, cfg, feats)?;
            let x = g.embedding(x, &vec![0; m])?;
            let (h0, c0) = zero_state(g, m, hidden);
            (None, lstm_cell(g, p, x, h0, c0)?)
        }
    };
    let mut active = m;
    let mut steps = Vec::with_capacity(lens[order[0]]);
    for t in 0..lens[order[0]] {
        let now = order.iter().take_while(|&&k| lens[k] > t).count();
        if now < active {
            h = g.slice(h, 0, 0, now)?;
            c = g.slice(c, 0, 0, now)?;
            active = now;
        }
        let idx: Vec<usize> = order[..now].iter().map(|&k| cands[k].indices[t]).collect();
        let emb = g.embedding(p.get("embed"), &idx)?;
        let (x, alpha, e) = match &attn {
            Some(inp) => {
                let (ctx, alpha, e) = attend(g, p, inp, h)?;
                (g.concat(&[emb, ctx], 1)?, Some(alpha), Some(e))
            }
            None => (emb, None, None),
        };
        (h, c) = lstm_cell(g, p, x, h, c)?;
        let (logit, y) = readout(g, p, h)?;
        steps.push(StepOut { h, c, logit, y, alpha, e });
    }
    Ok(DecoderRun { order, row, lens, steps })
}

/// Encoder once, then every candidate.
pub fn run_image<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    image: Var,
    cands: &[EncodedCandidate],
) -> Result<DecoderRun> {
    let feats = encode_graph(g, p, &cfg.encoder, image)?;
    run_candidates(g, p, cfg, feats, cands)
}

pub fn class_weights(labels: &[f32], pos_weight: f32) -> Vec<f32> {
    labels.iter().map(|&y| if y == 1.0 { pos_weight } else { 1.0 }).collect()
}

/// Weighted cross-entropy over the last-step logits of one image's
/// sub-batch.
pub fn subbatch_loss<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    image: Var,
    cands: &[EncodedCandidate],
    labels: &[f32],
    pos_weight: f32,
) -> Result<(Var, DecoderRun)> {
    if labels.len() != cands.len() {
        return Err(Error::InvalidArgument(format!("{} labels for {} candidates", labels.len(), cands.len())));
    }
    let run = run_image(g, p, cfg, image, cands)?;
    let logits = run.last_logits(g)?;
    let y: Vec<T> = labels.iter().map(|&v| T::from_f32(v)).collect();
    let w: Vec<T> = class_weights(labels, pos_weight).into_iter().map(T::from_f32).collect();
    Ok((g.bce_with_logits(logits, &y, &w)?, run))
}

fn require_attention(model: &Model) -> Result<()> {
    if model.config.kind != ModelKind::Attention {
        return Err(Error::InvalidArgument("model has no attention decoder".into()));
    }
    Ok(())
}

/// Scores one candidate against an encoded image, with its attention maps.
pub fn score_candidate(model: &Model, fmap: &FeatureMap, cand: &EncodedCandidate) -> Result<(Score, AttentionTrace)> {
    require_attention(model)?;
    let mut g = Graph::<f32>::new();
    let p = model.bind(&mut g, false);
    let feats = g.constant(fmap.features.clone());
    let run = run_candidates(&mut g, &p, &model.config, feats, std::slice::from_ref(cand))?;
    let score = run.scores(&g).remove(0);
    Ok((score, run.trace(&g, 0, cand, fmap)))
}

/// Scores every candidate against one feature map without re-encoding.
pub fn score_fmap(model: &Model, fmap: &FeatureMap, cands: &[EncodedCandidate]) -> Result<Vec<Score>> {
    let mut g = Graph::<f32>::new();
    let p = model.bind(&mut g, false);
    let feats = g.constant(fmap.features.clone());
    let run = run_candidates(&mut g, &p, &model.config, feats, cands)?;
    Ok(run.scores(&g))
}

/// Encoder once, then all `cands`. Works for either model kind.
pub fn score_subbatch(model: &Model, image: &GrayImage, cands: &[EncodedCandidate]) -> Result<Vec<Score>> {
    if cands.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    let fmap = encode_image(model, image)?;
    score_fmap(model, &fmap, cands)
}

/// Baseline scorer: no attention trace is produced.
pub fn score_no_attention(model: &Model, image: &GrayImage, cand: &EncodedCandidate) -> Result<Score> {
    if model.config.kind != ModelKind::NoAttention {
        return Err(Error::InvalidArgument("model is not a no-attention baseline".into()));
    }
    Ok(score_subbatch(model, image, std::slice::from_ref(cand))?.remove(0))
}

/// Mean weighted binary cross-entropy of probabilities; positive terms
/// are scaled by `pos_weight`.
pub fn loss(probs: &[f32], labels: &[f32], pos_weight: f32) -> Result<f32> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} scores for {} labels", probs.len(), labels.len())));
    }
    let mut total = 0.0f64;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p as f64;
        total += if y == 1.0 {
            -(pos_weight as f64) * p.ln()
        } else if y == 0.0 {
            -(1.0 - p).ln()
        } else {
            return Err(Error::BadLabel(y));
        };
    }
    Ok((total / probs.len() as f64) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textops::{encode, Charset};

    fn cand(s: &str) -> EncodedCandidate {
        encode(s, &Charset::default(), 40).unwrap()
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[1.0], &[1.0], 1.0).unwrap(), 0.0);
        assert!((loss(&[0.5], &[1.0], 1.0).unwrap() - std::f32::consts::LN_2).abs() < 1e-5);
        assert!((loss(&[0.5, 0.5], &[1.0, 0.0], 4.0).unwrap() - 1.732_868).abs() < 1e-5);
        assert!(matches!(loss(&[0.5], &[2.0], 1.0), Err(Error::BadLabel(_))));
    }

    #[test]
    fn zero_model_is_undecided() {
        let m = Model::zeros(ModelConfig::default()).unwrap();
        let img = GrayImage::filled(128, 128, 0.3);
        let s = score_subbatch(&m, &img, &[cand("abc"), cand("hello world")]).unwrap();
        for sc in &s {
            assert_eq!(sc.p_valid, 0.5);
            assert!(sc.step_probs.iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn zero_scorer_gives_uniform_attention() {
        let m = Model::zeros(ModelConfig::default()).unwrap();
        let img = GrayImage::filled(128, 128, 0.3);
        let f = encode_image(&m, &img).unwrap();
        let (_, trace) = score_candidate(&m, &f, &cand("ab")).unwrap();
        assert_eq!(trace.steps.len(), 2);
        for step in &trace.steps {
            for row in &step.attention {
                assert!(row.iter().all(|&a| a == 1.0 / 64.0));
            }
        }
        let json = trace.to_json().unwrap();
        let back: AttentionTrace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn empty_subbatch_rejected() {
        let m = Model::zeros(ModelConfig::default()).unwrap();
        let img = GrayImage::filled(128, 128, 0.3);
        assert!(score_subbatch(&m, &img, &[]).is_err());
    }

    #[test]
    fn no_attention_zero_model() {
        let cfg = ModelConfig { kind: ModelKind::NoAttention, ..Default::default() };
        let m = Model::zeros(cfg).unwrap();
        let img = GrayImage::filled(128, 128, 0.3);
        assert_eq!(score_no_attention(&m, &img, &cand("xyz")).unwrap().p_valid, 0.5);
        let f = encode_image(&m, &img).unwrap();
        assert!(score_candidate(&m, &f, &cand("x")).is_err());
    }
}
