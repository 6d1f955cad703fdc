use gav_core::datagen::generate;
use gav_core::decoder::subbatch_loss;
use gav_core::sampler::sample_pairs;
use gav_core::tensor::{clip_global_norm, RmsPropState};
use gav_core::trainer::{encode_pairs, train};
use gav_core::{Checkpoint, Dataset, GenConfig, Graph, Model, Phase, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn toy(images: usize) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&GenConfig { images, seed: 9, ..Default::default() }, dir.path()).unwrap();
    (dir, ds)
}

fn short(steps: usize) -> TrainConfig {
    TrainConfig { steps, batch_images: 2, log_every: 2, seed: 3, ..Default::default() }
}

#[test]
fn zero_steps_returns_init() {
    let (_d, ds) = toy(4);
    let cfg = short(0);
    let run = train(&ds, &cfg, Phase::Scratch, None).unwrap();
    assert_eq!(run.checkpoint.model, Model::init(cfg.model.clone(), cfg.seed).unwrap());
    assert!(run.log.is_empty());
}

#[test]
fn identical_seeds_identical_runs() {
    let (_d, ds) = toy(6);
    let a = train(&ds, &short(6), Phase::Scratch, None).unwrap();
    let b = train(&ds, &short(6), Phase::Scratch, None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    let c = train(&ds, &TrainConfig { seed: 4, ..short(6) }, Phase::Scratch, None).unwrap();
    assert_ne!(a.checkpoint.model, c.checkpoint.model);
}

#[test]
fn phase_two_continues_from_checkpoint() {
    let (_d, ds) = toy(6);
    let p1 = train(&ds, &short(4), Phase::Scratch, None).unwrap();
    assert!(train(&ds, &short(4), Phase::HardNegative, None).is_err());
    let p2 = train(&ds, &short(4), Phase::HardNegative, Some(&p1.checkpoint)).unwrap();
    assert_eq!(p2.checkpoint.step, 6);
    assert_eq!(p2.checkpoint.phase, Some(Phase::HardNegative));
    assert_eq!(p2.log.last().unwrap().step, 6);
    assert_ne!(p2.checkpoint.model, p1.checkpoint.model);
}

#[test]
fn saved_checkpoint_round_trips_bitwise() {
    let (d, ds) = toy(4);
    let run = train(&ds, &short(2), Phase::Scratch, None).unwrap();
    let path = d.path().join("ck.gav");
    run.checkpoint.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, run.checkpoint);
    assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn frozen_batch_loss_decreases() {
    let (_d, ds) = toy(2);
    let cfg = TrainConfig::default();
    let mut model = Model::init(cfg.model.clone(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch: Vec<_> = (0..2)
        .map(|i| {
            let pairs = sample_pairs(&ds.samples[i], &cfg.sampling, Phase::Scratch, &mut rng).unwrap();
            (ds.load_image(i, 128).unwrap(), encode_pairs(&model, &pairs).unwrap())
        })
        .collect();
    let mut opt = RmsPropState::new(cfg.learning_rate, cfg.rms_decay, cfg.rms_epsilon);
    let mut losses = Vec::new();
    for _ in 0..50 {
        let mut grads: BTreeMap<String, Vec<f32>> = BTreeMap::new();
        let mut total = 0.0;
        for (img, (cands, labels)) in &batch {
            let mut g = Graph::<f32>::new();
            let p = model.bind(&mut g, true);
            let x = g.constant(img.to_tensor());
            let (loss, _) = subbatch_loss(&mut g, &p, &model.config, x, cands, labels, 4.0).unwrap();
            g.backward(loss).unwrap();
            total += g.value(loss).item() / 2.0;
            for (name, v) in p.iter() {
                let acc = grads.entry(name.to_string()).or_default();
                acc.resize(g.grad(v).unwrap().len(), 0.0);
                for (a, &x) in acc.iter_mut().zip(g.grad(v).unwrap()) {
                    *a += x / 2.0;
                }
            }
        }
        losses.push(total);
        clip_global_norm(&mut grads, 5.0);
        opt.step(model.params.iter_mut().map(|(k, v)| (k.as_str(), v)), &grads).unwrap();
    }
    let mean = |xs: &[f32]| xs.iter().sum::<f32>() / xs.len() as f32;
    let late_min = losses[40..].iter().copied().fold(f32::INFINITY, f32::min);
    assert!(late_min < losses[0], "{losses:?}");
    assert!(mean(&losses[40..]) < mean(&losses[..10]), "{losses:?}");
}
