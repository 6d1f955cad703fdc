use criterion::{criterion_group, criterion_main, Criterion};
use gav_core::decoder::score_subbatch;
use gav_core::textops::encode;
use gav_core::{GrayImage, Model, ModelConfig, ModelKind};
use std::hint::black_box;

fn scoring(c: &mut Criterion) {
    let image = GrayImage::filled(128, 128, 0.5);
    for kind in [ModelKind::Attention, ModelKind::NoAttention] {
        let model = Model::init(ModelConfig { kind, ..Default::default() }, 0).unwrap();
        let cands: Vec<_> = ["golden dragon", "golden wagon", "little barbers", "the", "sunny bay cafe"]
            .iter()
            .map(|t| encode(t, model.charset(), 40).unwrap())
            .collect();
        c.bench_function(&format!("score_subbatch_{kind:?}_5_candidates"), |bench| {
            bench.iter(|| black_box(score_subbatch(&model, &image, &cands).unwrap()))
        });
    }
}

criterion_group!(benches, scoring);
criterion_main!(benches);
