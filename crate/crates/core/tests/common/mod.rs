#![allow(dead_code)]

use gav_core::decoder::{score_subbatch, subbatch_loss};
use gav_core::textops::EncodedCandidate;
use gav_core::{Graph, GrayImage, Model};

/// Levenshtein distance by its recursive definition, memoized on suffix
/// positions. Inputs up to 6 bytes.
pub fn recursive_distance(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], memo: &mut [[Option<usize>; 7]; 7]) -> usize {
        if let Some(d) = memo[a.len()][b.len()] {
            return d;
        }
        let d = match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = go(ra, rb, memo) + usize::from(x != y);
                let del = go(ra, b, memo) + 1;
                let ins = go(a, rb, memo) + 1;
                sub.min(del).min(ins)
            }
        };
        memo[a.len()][b.len()] = Some(d);
        d
    }
    go(a, b, &mut [[None; 7]; 7])
}

/// Every string over {a, b, c} of length at most `max_len`.
pub fn all_strings(max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer.iter().flat_map(|s| ['a', 'b', 'c'].map(|c| format!("{s}{c}"))).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// (negative, positives, hardness) worked by hand.
pub const HARDNESS_TABLE: [(&str, &[&str], f64); 20] = [
    ("abc", &["abc"], 1.0),
    ("abc", &["xyz"], 0.0),
    ("abcd", &["abcf", "zzzzzzzz"], 0.75),
    ("cat", &["car"], 2.0 / 3.0),
    ("cafe", &["cake"], 0.75),
    ("golden dragon", &["golden wagon"], 11.0 / 13.0),
    ("kitten", &["sitting"], 4.0 / 7.0),
    ("a", &["b"], 0.0),
    ("ab", &["ba"], 0.0),
    ("abc", &["ab"], 2.0 / 3.0),
    ("abc", &["abcdef"], 0.5),
    ("ABC", &["abc"], 1.0),
    ("sun bay", &["sunny bay"], 7.0 / 9.0),
    ("the little barber", &["little barbers"], 12.0 / 17.0),
    ("pizza", &["plaza", "pasta"], 0.6),
    ("xyz", &["abc", "xya"], 2.0 / 3.0),
    ("books", &["boots"], 0.8),
    ("a b c", &["c b a"], 0.6),
    ("hotel", &["motel", "hostel"], 5.0 / 6.0),
    ("rose", &["rosa", "roses"], 0.8),
];

/// Number of exhaustive pairs checked, or the first disagreement.
pub fn check_edit_distance_exhaustive() -> Result<usize, String> {
    let strings = all_strings(6);
    for a in &strings {
        for b in &strings {
            let (dp, rec) = (gav_core::textops::edit_distance(a, b), recursive_distance(a.as_bytes(), b.as_bytes()));
            if dp != rec {
                return Err(format!("{a:?} {b:?}: {dp} != {rec}"));
            }
        }
    }
    Ok(strings.len() * strings.len())
}

pub fn check_hardness_table() -> Result<(), String> {
    for (neg, pos, want) in HARDNESS_TABLE {
        let got = gav_core::textops::hardness(neg, pos).map_err(|e| e.to_string())? as f64;
        if (got - want).abs() >= 1e-6 {
            return Err(format!("{neg:?} vs {pos:?}: {got} != {want}"));
        }
    }
    Ok(())
}

/// Largest gap between shared-tower scores and one-candidate-at-a-time
/// scores.
pub fn subbatch_score_gap(model: &Model, img: &GrayImage, cands: &[EncodedCandidate]) -> f32 {
    let shared = score_subbatch(model, img, cands).unwrap();
    cands
        .iter()
        .zip(&shared)
        .map(|(c, s)| {
            let alone = score_subbatch(model, img, std::slice::from_ref(c)).unwrap();
            (alone[0].p_valid - s.p_valid).abs()
        })
        .fold(0.0, f32::max)
}

/// Largest gap between encoder gradients of the shared sub-batch loss and
/// the mean of per-candidate gradients. Panics if an encoder tensor gets
/// no gradient at all.
pub fn subbatch_gradient_gap(model: &Model, img: &GrayImage, cands: &[EncodedCandidate], labels: &[f32]) -> f32 {
    let grads_of = |cs: &[EncodedCandidate], ls: &[f32]| {
        let mut g = Graph::<f32>::new();
        let p = model.bind(&mut g, true);
        let x = g.constant(img.to_tensor());
        let (loss, _) = subbatch_loss(&mut g, &p, &model.config, x, cs, ls, 4.0).unwrap();
        g.backward(loss).unwrap();
        p.iter()
            .filter(|(k, _)| k.starts_with("enc."))
            .map(|(k, v)| (k.to_string(), g.grad(v).unwrap().to_vec()))
            .collect::<Vec<_>>()
    };
    let m = cands.len() as f32;
    let shared = grads_of(cands, labels);
    let mut summed: Vec<Vec<f32>> = shared.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
    for (cand, &y) in cands.iter().zip(labels) {
        for (acc, (_, g)) in summed.iter_mut().zip(grads_of(std::slice::from_ref(cand), &[y])) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v / m;
            }
        }
    }
    let mut worst = 0.0f32;
    for ((k, a), b) in shared.iter().zip(&summed) {
        assert!(a.iter().any(|v| *v != 0.0), "{k} has no gradient");
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
