//! Per-image candidate sampling, positive word shuffling, and the
//! hardness filter used by the hard-negative phase.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::textops::hardness;

/// Training phase: 1 samples negatives evenly, 2 only from negatives whose
/// hardness exceeds the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Phase {
    Scratch,
    HardNegative,
}

impl TryFrom<u8> for Phase {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Phase::Scratch),
            2 => Ok(Phase::HardNegative),
            _ => Err(Error::Config(format!("phase must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        match p {
            Phase::Scratch => 1,
            Phase::HardNegative => 2,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub shuffle_prob: f32,
    pub hnm_threshold: f32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { n_pos: 1, n_neg: 4, shuffle_prob: 0.5, hnm_threshold: 0.3 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pos == 0 {
            return Err(Error::Config("n_pos must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.shuffle_prob) || !(0.0..=1.0).contains(&self.hnm_threshold) {
            return Err(Error::Config("shuffle_prob and hnm_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn subbatch(&self) -> usize {
        self.n_pos + self.n_neg
    }

    /// Negative-to-positive ratio, the default positive class weight.
    pub fn pos_weight(&self) -> f32 {
        self.n_neg.max(1) as f32 / self.n_pos as f32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub image: String,
    pub candidate: String,
    pub label: u8,
}

/// Uniformly permutes the space-separated words of `text`.
pub fn shuffle_words(text: &str, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = text.split(' ').collect();
    words.shuffle(rng);
    words.join(" ")
}

/// Negatives whose hardness against `positives` is strictly above
/// `threshold`, in their original order.
pub fn filter_hard<S: AsRef<str>, P: AsRef<str>>(
    negatives: &[S],
    positives: &[P],
    threshold: f32,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for n in negatives {
        if hardness(n.as_ref(), positives)? > threshold {
            out.push(n.as_ref().to_string());
        }
    }
    Ok(out)
}

fn draw<'a>(pool: &'a [String], k: usize, rng: &mut impl Rng) -> Vec<&'a String> {
    if pool.len() >= k {
        pool.choose_multiple(rng, k).collect()
    } else {
        (0..k).map(|_| &pool[rng.gen_range(0..pool.len())]).collect()
    }
}

/// `n_pos` positives (each shuffled with probability `shuffle_prob`)
/// followed by `n_neg` negatives from the phase's eligible pool. Pools
/// smaller than the request are sampled with replacement.
pub fn sample_pairs(
    sample: &Sample,
    cfg: &SamplingConfig,
    phase: Phase,
    rng: &mut impl Rng,
) -> Result<Vec<TrainingPair>> {
    if sample.positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    let pool = match phase {
        Phase::Scratch => sample.negatives.clone(),
        Phase::HardNegative => filter_hard(&sample.negatives, &sample.positives, cfg.hnm_threshold)?,
    };
    if pool.is_empty() && cfg.n_neg > 0 {
        return Err(match phase {
            Phase::HardNegative => {
                Error::HardPoolExhausted { image: sample.image.clone(), threshold: cfg.hnm_threshold }
            }
            Phase::Scratch => Error::InvalidArgument(format!("`{}` has no negatives", sample.image)),
        });
    }
    let mut pairs = Vec::with_capacity(cfg.subbatch());
    for pos in draw(&sample.positives, cfg.n_pos, rng) {
        let candidate = if rng.gen::<f32>() < cfg.shuffle_prob { shuffle_words(pos, rng) } else { pos.clone() };
        pairs.push(TrainingPair { image: sample.image.clone(), candidate, label: 1 });
    }
    if cfg.n_neg > 0 {
        for neg in draw(&pool, cfg.n_neg, rng) {
            pairs.push(TrainingPair { image: sample.image.clone(), candidate: neg.clone(), label: 0 });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Sample {
        Sample {
            image: "img/0.pgm".into(),
            positives: vec!["street view image".into()],
            negatives: ["street view imagex", "zzz", "street vie image", "qqq qqq", "street image", "abc"]
                .map(String::from)
                .to_vec(),
        }
    }

    #[test]
    fn phase_one_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = sample_pairs(&sample(), &SamplingConfig::default(), Phase::Scratch, &mut rng).unwrap();
        assert_eq!(pairs.len(), 5);
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), 1);
    }

    #[test]
    fn phase_two_only_hard_negatives() {
        let s = sample();
        let cfg = SamplingConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = sample_pairs(&s, &cfg, Phase::HardNegative, &mut rng).unwrap();
            for p in pairs.iter().filter(|p| p.label == 0) {
                assert!(hardness(&p.candidate, &s.positives).unwrap() > 0.3);
            }
        }
    }

    #[test]
    fn phase_two_empty_pool_is_error() {
        let s = Sample { image: "x".into(), positives: vec!["abc".into()], negatives: vec!["xyz".into()] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_pairs(&s, &SamplingConfig::default(), Phase::HardNegative, &mut rng).unwrap_err();
        assert!(matches!(err, Error::HardPoolExhausted { .. }));
        assert!(err.to_string().contains("threshold"));
    }

    #[test]
    fn small_pool_samples_with_replacement() {
        let s = Sample { image: "x".into(), positives: vec!["abc".into()], negatives: vec!["abd".into()] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = sample_pairs(&s, &SamplingConfig::default(), Phase::Scratch, &mut rng).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.candidate == "abd").count(), 4);
    }

    #[test]
    fn always_shuffle_permutes_positive() {
        let cfg = SamplingConfig { shuffle_prob: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = sample_pairs(&sample(), &cfg, Phase::Scratch, &mut rng).unwrap();
        let mut words: Vec<&str> = pairs[0].candidate.split(' ').collect();
        words.sort();
        assert_eq!(words, vec!["image", "street", "view"]);
        assert_eq!(pairs[0].label, 1);
    }

    #[test]
    fn shuffle_single_word_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(shuffle_words("abc", &mut rng), "abc");
    }

    #[test]
    fn shuffle_two_words_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let same = (0..n).filter(|_| shuffle_words("a b", &mut rng) == "a b").count();
        let frac = same as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn filter_hard_examples() {
        assert_eq!(filter_hard(&["abc"], &["abc"], 0.3).unwrap(), vec!["abc"]);
        assert!(filter_hard(&["xyz"], &["abc"], 0.3).unwrap().is_empty());
        let kept = filter_hard(&["abc", "abx", "xyz"], &["abc"], 0.0).unwrap();
        assert_eq!(kept, vec!["abc", "abx"]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SamplingConfig::default();
        let a = sample_pairs(&sample(), &cfg, Phase::Scratch, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_pairs(&sample(), &cfg, Phase::Scratch, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn shuffle_preserves_words(words in proptest::collection::vec("[a-z]{1,5}", 1..6), seed: u64) {
            let text = words.join(" ");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut got: Vec<String> = shuffle_words(&text, &mut rng).split(' ').map(String::from).collect();
            let mut want = words.clone();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn filtering_is_monotone(
            negs in proptest::collection::vec("[a-c]{1,6}", 0..8),
            pos in "[a-c]{1,6}",
            t1 in 0.0f32..1.0,
            t2 in 0.0f32..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = filter_hard(&negs, &[&pos], lo).unwrap();
            let b = filter_hard(&negs, &[&pos], hi).unwrap();
            prop_assert!(b.iter().all(|x| a.contains(x)));
        }

        #[test]
        fn label_counts(n_pos in 1usize..3, n_neg in 0usize..6, seed: u64) {
            let cfg = SamplingConfig { n_pos, n_neg, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = sample_pairs(&sample(), &cfg, Phase::Scratch, &mut rng).unwrap();
            prop_assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), n_pos);
            prop_assert_eq!(pairs.iter().filter(|p| p.label == 0).count(), n_neg);
        }
    }
}
