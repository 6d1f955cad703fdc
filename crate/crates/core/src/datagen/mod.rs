//! Synthetic storefront-like dataset: business names rendered with a
//! built-in bitmap font, with distortions, clutter and distractor words.
//!
//! Names come in clusters of look-alikes (one word substituted, often by
//! a similarly spelled word). Every name is the positive of exactly one
//! image and a negative for its cluster mates and for randomly chosen
//! other images, so positives and negatives share one text distribution.

pub mod font;
mod manifest;
mod render;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::save_pgm;
use crate::textops::{edit_distance, hardness};

pub use manifest::{parse_manifest, serialize_manifest, Dataset, Sample, MANIFEST};
pub use render::{render, sample_layout, Layout, TextItem};
pub use stats::{dataset_stats, DatasetStats};

/// Default word list for business names.
pub const NAME_WORDS: &[&str] = &[
    "golden", "dragon", "cafe", "cake", "care", "bar", "bay", "car", "cat", "king", "kings", "ring", "wing", "star",
    "stars", "start", "sun", "sunny", "fun", "pizza", "plaza", "pasta", "paste", "bake", "baker", "bakery", "house",
    "horse", "mouse", "grill", "grille", "deli", "dell", "west", "best", "nest", "east", "feast", "bell", "ball",
    "mall", "hall", "park", "bark", "mark", "shop", "ship", "chip", "chop", "tea", "sea", "lake", "lane", "land",
    "rose", "rosa", "little", "barber", "barbers", "the", "royal", "city", "market", "corner", "bistro", "diner",
    "dinner", "garden", "green", "blue", "red", "river", "tower", "town", "crown", "silver", "sliver", "hotel",
    "motel", "salon", "saloon", "books", "boots", "pet", "pets", "photo", "sushi", "noodle", "needle", "taco", "tacos",
    "burger", "bagel", "bagels", "coffee", "toffee", "wine", "vine", "fine", "fish", "dish", "pharmacy", "bank",
    "tank", "gym", "spa", "auto", "motor", "tire", "tile", "floor", "flower", "florist", "jewel", "jewels", "pearl",
    "dental", "rental", "mini", "main", "street", "avenue", "north", "south", "union", "onion", "lucky", "happy",
    "family", "palace", "place", "joe", "jo", "mama", "papa", "moon", "noon", "pho", "thai", "tai", "india", "media",
    "soul", "bowl", "coast", "toast", "yoga", "music", "magic", "24", "7", "99", "1st", "360", "88", "2nd",
];

/// Non-candidate text rendered small alongside the name.
pub const DISTRACTOR_WORDS: &[&str] = &[
    "open", "sale", "exit", "push", "pull", "closed", "welcome", "hours", "parking", "free", "wifi", "atm", "menu",
    "new", "hot", "enter", "only", "stop", "info", "daily", "today", "sign", "since", "est", "call",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// Images (and names) in a single split.
    pub images: usize,
    pub candidates_min: usize,
    pub candidates_max: usize,
    /// Names per look-alike cluster.
    pub cluster_size: usize,
    /// Every name gets at least one cluster mate harder than this.
    pub hard_threshold: f32,
    pub image_size: usize,
    /// Word counts 1..=4 are drawn with these relative weights.
    pub word_count_weights: [f32; 4],
    /// Probability that a cluster variant substitutes a similarly
    /// spelled word rather than an arbitrary one.
    pub similar_word_prob: f32,
    /// Font pixel size in image pixels.
    pub glyph_scale: f32,
    /// Relative scale jitter, uniform in `[-j, j]`.
    pub scale_jitter: f32,
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f32,
    /// Background lines and boxes per image.
    pub clutter: usize,
    /// Maximum distractor words per image.
    pub distractors: usize,
    /// Additive uniform pixel noise amplitude.
    pub noise: f32,
    pub vocabulary: Vec<String>,
    pub distractor_vocabulary: Vec<String>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            images: 2000,
            candidates_min: 10,
            candidates_max: 10,
            cluster_size: 3,
            hard_threshold: 0.3,
            image_size: 128,
            word_count_weights: [0.15, 0.45, 0.3, 0.1],
            similar_word_prob: 0.6,
            glyph_scale: 3.0,
            scale_jitter: 0.1,
            rotation_deg: 4.0,
            clutter: 3,
            distractors: 2,
            noise: 0.05,
            vocabulary: NAME_WORDS.iter().map(|s| s.to_string()).collect(),
            distractor_vocabulary: DISTRACTOR_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("datagen: {m}")));
        if self.images == 0 {
            return bad("images must be positive");
        }
        if self.candidates_min < 2 || self.candidates_min > self.candidates_max || self.candidates_max > 600 {
            return bad("candidates per image must satisfy 2 <= min <= max <= 600");
        }
        if self.cluster_size < 2 {
            return bad("cluster_size must be at least 2");
        }
        if !(0.0..1.0).contains(&self.hard_threshold) || !(0.0..=1.0).contains(&self.similar_word_prob) {
            return bad("hard_threshold must lie in [0, 1) and similar_word_prob in [0, 1]");
        }
        if self.image_size < 32 || !(0.5..=4.0).contains(&self.glyph_scale) {
            return bad("image_size >= 32 and glyph_scale in [0.5, 4] required");
        }
        if !(0.0..0.5).contains(&self.scale_jitter) || !(0.0..=30.0).contains(&self.rotation_deg) {
            return bad("scale_jitter in [0, 0.5) and rotation_deg in [0, 30] required");
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return bad("noise must lie in [0, 0.5]");
        }
        if self.word_count_weights.iter().any(|&w| w < 0.0) || self.word_count_weights.iter().sum::<f32>() <= 0.0 {
            return bad("word_count_weights must be nonnegative with positive sum");
        }
        let renderable = |w: &String| !w.is_empty() && w.chars().all(|c| c != ' ' && font::has_glyph(c));
        if !self.vocabulary.iter().all(renderable) || !self.distractor_vocabulary.iter().all(renderable) {
            return bad("vocabulary words must be nonempty and renderable");
        }
        let names: HashSet<&String> = self.vocabulary.iter().collect();
        if self.distractor_vocabulary.iter().any(|w| names.contains(w)) {
            return bad("distractor words must not appear in the name vocabulary");
        }
        Ok(())
    }
}

fn similar_words(vocab: &[String]) -> Vec<Vec<usize>> {
    vocab
        .iter()
        .map(|a| {
            (0..vocab.len())
                .filter(|&j| {
                    let b = &vocab[j];
                    let d = edit_distance(a, b);
                    d > 0 && d <= 2 && 2 * d <= a.len().max(b.len())
                })
                .collect()
        })
        .collect()
}

fn word_count(weights: &[f32; 4], rng: &mut impl Rng) -> usize {
    let total: f32 = weights.iter().sum();
    let mut r = rng.gen::<f32>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i + 1;
        }
        r -= w;
    }
    4
}

fn substring_related(a: &str, b: &str) -> bool {
    a.contains(b) || b.contains(a)
}

/// Builds clusters of look-alike names whose sizes sum to `total`.
fn make_clusters(
    cfg: &GenConfig,
    total: usize,
    used: &mut HashSet<String>,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<String>>> {
    let vocab = &cfg.vocabulary;
    if vocab.len() < 2 {
        return Err(Error::Config("datagen: vocabulary too small".into()));
    }
    let similar = similar_words(vocab);
    let n_clusters = total.div_ceil(cfg.cluster_size);
    let mut clusters = Vec::with_capacity(n_clusters);
    for c in 0..n_clusters {
        // Even split so that no cluster is a singleton.
        let size = total / n_clusters + usize::from(c < total % n_clusters);
        let mut made = None;
        for _ in 0..200 {
            if let Some(cl) = try_cluster(cfg, &similar, size, used, rng) {
                made = Some(cl);
                break;
            }
        }
        let cluster = made.ok_or_else(|| {
            Error::Config(format!(
                "datagen: vocabulary of {} words too small for {} distinct names",
                vocab.len(),
                used.len() + total
            ))
        })?;
        used.extend(cluster.iter().cloned());
        clusters.push(cluster);
    }
    Ok(clusters)
}

fn try_cluster(
    cfg: &GenConfig,
    similar: &[Vec<usize>],
    size: usize,
    used: &HashSet<String>,
    rng: &mut impl Rng,
) -> Option<Vec<String>> {
    let vocab = &cfg.vocabulary;
    let k = word_count(&cfg.word_count_weights, rng).min(vocab.len());
    let base: Vec<usize> = rand::seq::index::sample(rng, vocab.len(), k).into_vec();
    let join = |ws: &[usize]| ws.iter().map(|&i| vocab[i].as_str()).collect::<Vec<_>>().join(" ");
    let mut names = vec![join(&base)];
    let mut attempts = 0;
    while names.len() < size && attempts < 50 {
        attempts += 1;
        let mut words = base.clone();
        let pos = rng.gen_range(0..k);
        let sims = &similar[words[pos]];
        let replacement = if !sims.is_empty() && (k == 1 || rng.gen::<f32>() < cfg.similar_word_prob) {
            *sims.choose(rng).unwrap()
        } else {
            rng.gen_range(0..vocab.len())
        };
        if words.contains(&replacement) {
            continue;
        }
        words[pos] = replacement;
        let name = join(&words);
        if names.iter().any(|n| substring_related(n, &name)) {
            continue;
        }
        names.push(name);
    }
    if names.len() < size || names.iter().any(|n| used.contains(n) || n.chars().count() > 100) {
        return None;
    }
    // Each member needs a hard mate for the hard-negative phase.
    for (i, n) in names.iter().enumerate() {
        let mates: Vec<&String> = names.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m).collect();
        let best = mates.iter().map(|m| hardness(m, &[n]).unwrap_or(0.0)).fold(0.0f32, f32::max);
        if best <= cfg.hard_threshold {
            return None;
        }
    }
    Some(names)
}

/// Candidate lists for one split: cluster mates plus random other names.
fn assign_candidates(cfg: &GenConfig, clusters: &[Vec<String>], rng: &mut impl Rng) -> Vec<Sample> {
    let all: Vec<(usize, &String)> =
        clusters.iter().enumerate().flat_map(|(c, ns)| ns.iter().map(move |n| (c, n))).collect();
    let mut samples = Vec::with_capacity(all.len());
    for (idx, &(c, name)) in all.iter().enumerate() {
        let count = rng.gen_range(cfg.candidates_min..=cfg.candidates_max);
        let want = (count - 1).min(all.len() - 1);
        let mut mates: Vec<&String> = clusters[c].iter().filter(|m| *m != name).collect();
        mates.shuffle(rng);
        mates.truncate(want);
        let mut negatives: Vec<String> = mates.into_iter().cloned().collect();
        let mut tries = 0;
        while negatives.len() < want && tries < 50 * want {
            tries += 1;
            let (oc, other) = all[rng.gen_range(0..all.len())];
            if oc == c || negatives.contains(other) || substring_related(name, other) {
                continue;
            }
            negatives.push(other.clone());
        }
        negatives.shuffle(rng);
        samples.push(Sample { image: format!("images/{idx:05}.pgm"), positives: vec![name.clone()], negatives });
    }
    samples
}

fn image_rng(seed: u64, split: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split + 1) << 32) | index as u64);
    rng
}

/// Writes `manifest.jsonl` and `images/` for one split of `cfg.images`
/// images into `out`.
pub fn generate(cfg: &GenConfig, out: &Path) -> Result<Dataset> {
    let mut sets = generate_splits(cfg, out, &[("", cfg.images)])?;
    Ok(sets.remove(0))
}

/// Several splits drawn from one name pool (names never repeat across
/// splits). Each split is written to `out/<name>`; an empty name writes
/// to `out` itself.
pub fn generate_splits(cfg: &GenConfig, out: &Path, splits: &[(&str, usize)]) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    if splits.iter().any(|s| s.1 == 0) {
        return Err(Error::Config("datagen: every split needs at least one image".into()));
    }
    let mut name_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = HashSet::new();
    let mut clusters = Vec::with_capacity(splits.len());
    for &(_, n) in splits {
        clusters.push(make_clusters(cfg, n, &mut used, &mut name_rng)?);
    }
    let mut datasets = Vec::with_capacity(splits.len());
    for (si, (&(name, _), split_clusters)) in splits.iter().zip(&clusters).enumerate() {
        let dir = if name.is_empty() { out.to_path_buf() } else { out.join(name) };
        fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(&dir, e))?;
        let samples = assign_candidates(cfg, split_clusters, &mut name_rng);
        for (i, s) in samples.iter().enumerate() {
            let mut rng = image_rng(cfg.seed, si as u64, i);
            let layout = sample_layout(cfg, &s.positives[0], &mut rng);
            let img = render(&layout, true);
            save_pgm(&dir.join(&s.image), &img)?;
        }
        let ds = Dataset { root: dir, samples };
        ds.save_manifest()?;
        datasets.push(ds);
    }
    Ok(datasets)
}

/// Layout of image `index` of split `split` exactly as [`generate_splits`]
/// drew it; used to re-render without the name.
pub fn layout_for(cfg: &GenConfig, split: usize, index: usize, name: &str) -> Layout {
    let mut rng = image_rng(cfg.seed, split as u64, index);
    sample_layout(cfg, name, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(images: usize) -> GenConfig {
        GenConfig { images, seed: 11, ..Default::default() }
    }

    #[test]
    fn default_vocabularies_are_valid() {
        GenConfig::default().validate().unwrap();
    }

    #[test]
    fn counts_match_config() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small(100), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert_eq!(text.lines().count(), 100);
        for s in &ds.samples {
            assert_eq!(s.positives.len(), 1);
            assert_eq!(s.negatives.len(), 9);
            s.validate().unwrap();
            for c in s.positives.iter().chain(&s.negatives) {
                assert!(c.chars().count() <= 100);
            }
        }
    }

    #[test]
    fn every_sample_has_a_hard_negative() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small(60), dir.path()).unwrap();
        for s in &ds.samples {
            let hard = crate::sampler::filter_hard(&s.negatives, &s.positives, 0.3).unwrap();
            assert!(!hard.is_empty(), "{s:?}");
        }
    }

    #[test]
    fn splits_have_disjoint_names() {
        let dir = tempfile::tempdir().unwrap();
        let sets = generate_splits(&small(1), dir.path(), &[("train", 40), ("test", 20)]).unwrap();
        let a: HashSet<&String> = sets[0].samples.iter().map(|s| &s.positives[0]).collect();
        assert_eq!(a.len(), 40);
        assert!(sets[1].samples.iter().all(|s| !a.contains(&s.positives[0])));
        assert!(dir.path().join("test").join(MANIFEST).exists());
    }

    #[test]
    fn tiny_vocabulary_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { vocabulary: vec!["ab".into(), "cd".into(), "ef".into()], ..small(50) };
        assert!(generate(&cfg, dir.path()).is_err());
    }
}
