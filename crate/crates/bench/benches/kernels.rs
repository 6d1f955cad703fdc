use criterion::{criterion_group, criterion_main, Criterion};
use gav_core::tensor::{Graph, Padding, Tensor};
use gav_core::textops::edit_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random(&[64, 80], &mut rng);
    let b = random(&[80, 64], &mut rng);
    c.bench_function("matmul_64x80x64", |bench| {
        bench.iter(|| {
            let mut g = Graph::<f32>::new();
            let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
            black_box(g.matmul(x, y).unwrap());
        })
    });
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[16, 64, 64], &mut rng);
    let w = random(&[32, 16, 3, 3], &mut rng);
    c.bench_function("conv2d_16to32_64px_stride2", |bench| {
        bench.iter(|| {
            let mut g = Graph::<f32>::new();
            let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
            black_box(g.conv2d(xv, wv, None, 2, Padding::Same).unwrap());
        })
    });
    c.bench_function("conv2d_forward_backward", |bench| {
        bench.iter(|| {
            let mut g = Graph::<f32>::new();
            let (xv, wv) = (g.param(x.clone()), g.param(w.clone()));
            let y = g.conv2d(xv, wv, None, 2, Padding::Same).unwrap();
            let l = g.sum(y).unwrap();
            g.backward(l).unwrap();
        })
    });
}

fn levenshtein(c: &mut Criterion) {
    c.bench_function("edit_distance_30_chars", |bench| {
        bench.iter(|| {
            edit_distance(black_box("golden dragon chinese restaurant"), black_box("golden wagon chinese restaurants"))
        })
    });
}

criterion_group!(benches, matmul, conv, levenshtein);
criterion_main!(benches);
