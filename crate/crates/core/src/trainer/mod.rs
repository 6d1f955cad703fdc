//! Two-phase training: from scratch on all negatives, then finetuning on
//! hard negatives only.

mod checkpoint;

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::decoder::subbatch_loss;
use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::model::{Model, ModelConfig};
use crate::sampler::{sample_pairs, Phase, SamplingConfig, TrainingPair};
use crate::tensor::{clip_global_norm, Graph, RmsPropState};
use crate::textops::{encode, EncodedCandidate};

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_images: usize,
    /// Phase-1 steps.
    pub steps: usize,
    /// Phase-2 steps; half of `steps` when unset.
    pub phase2_steps: Option<usize>,
    pub learning_rate: f32,
    pub rms_decay: f32,
    pub rms_epsilon: f32,
    /// Global gradient norm limit; `None` disables clipping.
    pub clip_norm: Option<f32>,
    /// Loss weight of positive pairs; `n_neg / n_pos` when unset.
    pub pos_weight: Option<f32>,
    pub sampling: SamplingConfig,
    pub model: ModelConfig,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_images: 8,
            steps: 16000,
            phase2_steps: None,
            learning_rate: 0.001,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            clip_norm: Some(5.0),
            pos_weight: None,
            sampling: SamplingConfig::default(),
            model: ModelConfig::default(),
            seed: 0,
            log_every: 10,
        }
    }
}

/// False for NaN.
fn positive(x: f32) -> bool {
    x > 0.0
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sampling.validate()?;
        if self.batch_images == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_images and log_every must be positive".into()));
        }
        if !positive(self.learning_rate) || !(0.0..1.0).contains(&self.rms_decay) || !positive(self.rms_epsilon) {
            return Err(Error::Config("need learning_rate > 0, rms_decay in [0, 1), rms_epsilon > 0".into()));
        }
        if self.clip_norm.is_some_and(|c| !positive(c)) || self.pos_weight.is_some_and(|w| !positive(w)) {
            return Err(Error::Config("clip_norm and pos_weight must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_for(&self, phase: Phase) -> usize {
        match phase {
            Phase::Scratch => self.steps,
            Phase::HardNegative => self.phase2_steps.unwrap_or(self.steps / 2),
        }
    }

    /// Candidates decoded per optimizer step.
    pub fn decoder_batch(&self) -> usize {
        self.batch_images * self.sampling.subbatch()
    }

    pub fn effective_pos_weight(&self) -> f32 {
        self.pos_weight.unwrap_or_else(|| self.sampling.pos_weight())
    }
}

/// Fresh checkpoint at step 0.
pub fn init_params(cfg: &TrainConfig, seed: u64) -> Result<Checkpoint> {
    cfg.validate()?;
    Ok(Checkpoint {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        step: 0,
        phase: None,
        provenance: serde_json::Value::Null,
        model: Model::init(cfg.model.clone(), seed)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub phase: Phase,
    /// Mean loss over the steps since the previous row.
    pub loss: f32,
    /// Balanced accuracy at threshold 0.5 over the same window.
    pub accuracy: f32,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,phase,loss,accuracy\n");
    for r in rows {
        writeln!(s, "{},{},{:.6},{:.6}", r.step, r.phase, r.loss, r.accuracy).unwrap();
    }
    s
}

/// Running confusion counts at threshold 0.5.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn add(&mut self, prob: f32, label: u8) {
        match (label == 1, prob >= 0.5) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
        }
    }

    /// Mean of the per-class recalls; classes without examples are skipped.
    pub fn balanced_accuracy(&self) -> f32 {
        let mut rates = Vec::new();
        if self.tp + self.fn_ > 0 {
            rates.push(self.tp as f32 / (self.tp + self.fn_) as f32);
        }
        if self.tn + self.fp > 0 {
            rates.push(self.tn as f32 / (self.tn + self.fp) as f32);
        }
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f32>() / rates.len() as f32
        }
    }
}

pub fn encode_pairs(model: &Model, pairs: &[TrainingPair]) -> Result<(Vec<EncodedCandidate>, Vec<f32>)> {
    let cands = pairs
        .iter()
        .map(|p| encode(&p.candidate, model.charset(), model.config.max_len))
        .collect::<Result<Vec<_>>>()?;
    Ok((cands, pairs.iter().map(|p| p.label as f32).collect()))
}

struct ImageStep {
    loss: f32,
    grads: BTreeMap<String, Vec<f32>>,
    probs: Vec<f32>,
    labels: Vec<u8>,
}

fn image_step(model: &Model, image: &GrayImage, pairs: &[TrainingPair], pos_weight: f32) -> Result<ImageStep> {
    let (cands, labels) = encode_pairs(model, pairs)?;
    let mut g = Graph::<f32>::new();
    let p = model.bind(&mut g, true);
    let x = g.constant(image.to_tensor());
    let (loss, run) = subbatch_loss(&mut g, &p, &model.config, x, &cands, &labels, pos_weight)?;
    g.backward(loss)?;
    let mut grads = BTreeMap::new();
    for (name, v) in p.iter() {
        let gv = g.grad(v).ok_or_else(|| Error::MissingGrad(name.to_string()))?;
        grads.insert(name.to_string(), gv.to_vec());
    }
    let probs = run.scores(&g).iter().map(|s| s.p_valid).collect();
    Ok(ImageStep { loss: g.value(loss).item(), grads, probs, labels: pairs.iter().map(|p| p.label).collect() })
}

pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig, phase: Phase, init: Option<&Checkpoint>) -> Result<TrainRun> {
    train_with(dataset, cfg, phase, init, |_| {})
}

/// As [`train`], calling `on_log` for every log row as it is produced.
pub fn train_with(
    dataset: &Dataset,
    cfg: &TrainConfig,
    phase: Phase,
    init: Option<&Checkpoint>,
    mut on_log: impl FnMut(&LogRow),
) -> Result<TrainRun> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut cfg = cfg.clone();
    let (mut model, start_step) = match (phase, init) {
        (Phase::HardNegative, None) => {
            return Err(Error::Config("phase 2 finetunes an existing checkpoint; pass one".into()))
        }
        (_, Some(ck)) => (ck.model.clone(), ck.step),
        (Phase::Scratch, None) => (Model::init(cfg.model.clone(), cfg.seed)?, 0),
    };
    cfg.model = model.config.clone();
    let steps = cfg.steps_for(phase);
    let pos_weight = cfg.effective_pos_weight();
    let size = cfg.model.encoder.input_size;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u8::from(phase) as u64);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut opt = RmsPropState::new(cfg.learning_rate, cfg.rms_decay, cfg.rms_epsilon);
    let mut log = Vec::new();
    let (mut window_loss, mut window_steps, mut conf) = (0.0f64, 0usize, Confusion::default());

    for step in 1..=steps {
        let mut batch = Vec::with_capacity(cfg.batch_images);
        while batch.len() < cfg.batch_images {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            let pairs = sample_pairs(&dataset.samples[i], &cfg.sampling, phase, &mut rng)?;
            batch.push((i, pairs));
        }
        let results: Vec<ImageStep> = batch
            .par_iter()
            .map(|(i, pairs)| {
                let img = dataset.load_image(*i, size)?;
                image_step(&model, &img, pairs, pos_weight)
            })
            .collect::<Result<_>>()?;

        let scale = 1.0 / results.len() as f32;
        let mut grads: BTreeMap<String, Vec<f32>> = BTreeMap::new();
        let mut loss = 0.0f32;
        for r in &results {
            loss += r.loss * scale;
            for (name, gv) in &r.grads {
                let acc = grads.entry(name.clone()).or_insert_with(|| vec![0.0; gv.len()]);
                for (a, &v) in acc.iter_mut().zip(gv) {
                    *a += v * scale;
                }
            }
            for (&p, &y) in r.probs.iter().zip(&r.labels) {
                conf.add(p, y);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NanLoss { step: start_step + step, loss });
        }
        if let Some(c) = cfg.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        opt.step(model.params.iter_mut().map(|(k, v)| (k.as_str(), v)), &grads)?;

        window_loss += loss as f64;
        window_steps += 1;
        if step % cfg.log_every == 0 || step == steps {
            let row = LogRow {
                step: start_step + step,
                phase,
                loss: (window_loss / window_steps as f64) as f32,
                accuracy: conf.balanced_accuracy(),
            };
            on_log(&row);
            log.push(row);
            (window_loss, window_steps, conf) = (0.0, 0, Confusion::default());
        }
    }
    let checkpoint = Checkpoint {
        format_version: FORMAT_VERSION,
        config: cfg,
        step: start_step + steps,
        phase: Some(phase),
        provenance: init.map(|c| c.provenance.clone()).unwrap_or(serde_json::Value::Null),
        model,
    };
    Ok(TrainRun { checkpoint, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_balanced_accuracy() {
        let mut c = Confusion::default();
        for (p, y) in [(0.9, 1), (0.2, 1), (0.1, 0), (0.1, 0), (0.1, 0), (0.7, 0)] {
            c.add(p, y);
        }
        assert!((c.balanced_accuracy() - (0.5 + 0.75) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn default_decoder_batch_is_forty() {
        assert_eq!(TrainConfig::default().decoder_batch(), 40);
    }

    #[test]
    fn phase_two_defaults_to_half() {
        let c = TrainConfig { steps: 101, ..Default::default() };
        assert_eq!(c.steps_for(Phase::HardNegative), 50);
    }

    #[test]
    fn init_weights_bounded_and_forget_bias_one() {
        let ck = init_params(&TrainConfig::default(), 0).unwrap();
        for (name, t) in &ck.model.params {
            assert!(t.data().iter().all(|v| v.abs() <= 1.0), "{name}");
        }
        let d = ck.config.model.decoder.hidden;
        let b = ck.model.param("lstm.b").data();
        assert!(b[d..2 * d].iter().all(|&v| v == 1.0));
        assert!(b[..d].iter().chain(&b[2 * d..]).all(|&v| v == 0.0));
        assert_eq!(init_params(&TrainConfig::default(), 0).unwrap(), ck);
    }

    #[test]
    fn log_format() {
        let rows = [LogRow { step: 10, phase: Phase::Scratch, loss: 0.5, accuracy: 0.75 }];
        assert_eq!(log_csv(&rows), "step,phase,loss,accuracy\n10,1,0.500000,0.750000\n");
    }
}
