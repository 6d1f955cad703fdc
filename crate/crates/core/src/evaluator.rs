//! Per-candidate scoring and everything computed from the scores:
//! precision/recall curves, truncation sweeps, margins, probes, model
//! ensembles and image search.

use std::collections::HashSet;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::decoder::{score_fmap, Score};
use crate::encoder::{encode_image, FeatureMap};
use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::model::Model;
use crate::sampler::{sample_pairs, shuffle_words, Phase, SamplingConfig};
use crate::textops::encode;
use crate::trainer::Confusion;

/// Sizes the global worker pool from `GAV_THREADS` when set. Has no effect
/// once the pool exists.
pub fn configure_threads() {
    if let Some(n) = std::env::var("GAV_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub image: String,
    pub candidate: String,
    pub score: f32,
    pub label: u8,
}

/// Rejects datasets containing characters the model cannot embed.
pub fn check_charset(dataset: &Dataset, model: &Model) -> Result<()> {
    let cs = model.charset();
    for s in &dataset.samples {
        for (c, _) in s.candidates() {
            if let Some(ch) = c.to_lowercase().trim().chars().find(|&ch| !cs.contains(ch)) {
                return Err(Error::CharsetMismatch(format!("{ch:?} in {c:?} ({})", s.image)));
            }
        }
    }
    Ok(())
}

fn score_image(model: &Model, image: &GrayImage, texts: &[&str], max_len: usize) -> Result<Vec<Score>> {
    let cands = texts.iter().map(|t| encode(t, model.charset(), max_len)).collect::<Result<Vec<_>>>()?;
    let fmap = encode_image(model, image)?;
    score_fmap(model, &fmap, &cands)
}

/// Scores every candidate of every image, each candidate truncated to
/// `max_len` characters.
pub fn score_dataset(dataset: &Dataset, model: &Model, max_len: usize) -> Result<Vec<ScoredCandidate>> {
    let size = model.config.encoder.input_size;
    score_dataset_with(dataset, model, max_len, |i| dataset.load_image(i, size))
}

/// As [`score_dataset`] with images supplied by `image_of(index)`.
pub fn score_dataset_with<F>(
    dataset: &Dataset,
    model: &Model,
    max_len: usize,
    image_of: F,
) -> Result<Vec<ScoredCandidate>>
where
    F: Fn(usize) -> Result<GrayImage> + Sync,
{
    Ok(score_steps(dataset, model, max_len, image_of)?
        .into_iter()
        .flatten()
        .map(|(c, score)| ScoredCandidate { score: score.p_valid, ..c })
        .collect())
}

type StepRows = Vec<Vec<(ScoredCandidate, Score)>>;

fn score_steps<F>(dataset: &Dataset, model: &Model, max_len: usize, image_of: F) -> Result<StepRows>
where
    F: Fn(usize) -> Result<GrayImage> + Sync,
{
    check_charset(dataset, model)?;
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let s = &dataset.samples[i];
            let texts: Vec<(&str, u8)> = s.candidates().collect();
            let names: Vec<&str> = texts.iter().map(|t| t.0).collect();
            let scores = score_image(model, &image_of(i)?, &names, max_len)?;
            Ok(texts
                .iter()
                .zip(scores)
                .map(|(&(c, label), sc)| {
                    let row =
                        ScoredCandidate { image: s.image.clone(), candidate: c.to_string(), score: sc.p_valid, label };
                    (row, sc)
                })
                .collect())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f32,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Thresholds strictly decreasing.
    pub points: Vec<PrPoint>,
    /// Area under the step-interpolated curve.
    pub auc: f64,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.points {
            writeln!(s, "{},{:.6},{:.6}", p.threshold, p.precision, p.recall).unwrap();
        }
        s
    }

    /// Precision and recall when predicting positive at `score >= threshold`.
    pub fn at(&self, threshold: f32) -> Option<PrPoint> {
        self.points.iter().rev().find(|p| p.threshold >= threshold).copied()
    }
}

/// One point per distinct score, tied rows flipping together.
pub fn pr_curve(scored: &[ScoredCandidate]) -> Result<PrCurve> {
    let positives = scored.iter().filter(|s| s.label == 1).count();
    if positives == 0 {
        return Err(Error::InvalidArgument("precision/recall needs at least one positive".into()));
    }
    if let Some(s) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite(format!("score of {:?}", s.candidate)));
    }
    let mut order: Vec<&ScoredCandidate> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = order[i].score;
        while i < order.len() && order[i].score == t {
            if order[i].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint { threshold: t, precision, recall });
    }
    Ok(PrCurve { points, auc })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. 0.5 when either class is absent.
pub fn roc_auc(scored: &[ScoredCandidate]) -> f64 {
    let mut order: Vec<&ScoredCandidate> = scored.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));
    let n_pos = scored.iter().filter(|s| s.label == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    // Mann-Whitney U with average ranks for ties.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg_rank * order[i..j].iter().filter(|s| s.label == 1).count() as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// One curve per truncation length. Each candidate is decoded once at the
/// longest length; its score at length `n` is the step probability at the
/// last character of its `n`-truncation, equal to scoring that truncation.
pub fn max_length_sweep(dataset: &Dataset, model: &Model, lengths: &[usize]) -> Result<Vec<(usize, PrCurve)>> {
    if lengths.contains(&0) {
        return Err(Error::InvalidArgument("truncation lengths must be positive".into()));
    }
    let longest = lengths.iter().copied().max().unwrap_or(1);
    let size = model.config.encoder.input_size;
    let rows = score_steps(dataset, model, longest, |i| dataset.load_image(i, size))?;
    lengths
        .iter()
        .map(|&n| {
            let scored: Vec<ScoredCandidate> = rows
                .iter()
                .flatten()
                .map(|(c, s)| {
                    let k = encode(&c.candidate, model.charset(), n)?.len();
                    Ok(ScoredCandidate { score: s.step_probs[k - 1], ..c.clone() })
                })
                .collect::<Result<_>>()?;
            Ok((n, pr_curve(&scored)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMargin {
    pub image: String,
    pub margin_a: f32,
    pub margin_b: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub images: usize,
    pub mean_margin_a: f64,
    pub mean_margin_b: f64,
    pub mean_delta: f64,
    /// `mean_delta / |mean_margin_a|`.
    pub relative_change: f64,
    pub per_image: Vec<ImageMargin>,
}

/// Best positive minus best negative, per image, for images with both.
pub fn margins(scored: &[ScoredCandidate]) -> Vec<(String, f32)> {
    let mut out: Vec<(String, f32, f32)> = Vec::new();
    for s in scored {
        if out.last().is_none_or(|l| l.0 != s.image) {
            out.push((s.image.clone(), f32::NEG_INFINITY, f32::NEG_INFINITY));
        }
        let l = out.last_mut().unwrap();
        if s.label == 1 {
            l.1 = l.1.max(s.score);
        } else {
            l.2 = l.2.max(s.score);
        }
    }
    out.into_iter().filter(|(_, p, n)| p.is_finite() && n.is_finite()).map(|(i, p, n)| (i, p - n)).collect()
}

pub fn margin_report(dataset: &Dataset, a: &Model, b: &Model) -> Result<MarginReport> {
    let sa = score_dataset(dataset, a, a.config.max_len)?;
    let sb = score_dataset(dataset, b, b.config.max_len)?;
    margin_report_from(&sa, &sb)
}

pub fn margin_report_from(sa: &[ScoredCandidate], sb: &[ScoredCandidate]) -> Result<MarginReport> {
    check_aligned(sa, sb)?;
    let (ma, mb) = (margins(sa), margins(sb));
    let per_image: Vec<ImageMargin> = ma
        .into_iter()
        .zip(mb)
        .map(|((image, margin_a), (_, margin_b))| ImageMargin { image, margin_a, margin_b })
        .collect();
    let n = per_image.len().max(1) as f64;
    let mean_a = per_image.iter().map(|m| m.margin_a as f64).sum::<f64>() / n;
    let mean_b = per_image.iter().map(|m| m.margin_b as f64).sum::<f64>() / n;
    let delta = per_image.iter().map(|m| (m.margin_b - m.margin_a) as f64).sum::<f64>() / n;
    Ok(MarginReport {
        images: per_image.len(),
        mean_margin_a: mean_a,
        mean_margin_b: mean_b,
        mean_delta: delta,
        relative_change: if mean_a == 0.0 { 0.0 } else { delta / mean_a.abs() },
        per_image,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub trials: usize,
    pub positives: usize,
    pub multiword_positives: usize,
    /// Mean `|score(original) - score(permuted)|` over all trials.
    pub mean_abs_delta: f64,
    /// Among multi-word positives ranked first in their image, the fraction
    /// of permutations still ranked first.
    pub rank1_retention: f64,
    /// Same, over all multi-word positives.
    pub rank1_fraction: f64,
}

/// Scores `trials` word permutations of every positive. Multi-word
/// positives are only compared against permutations that differ from the
/// original string.
pub fn probe_shuffle(dataset: &Dataset, model: &Model, trials: usize, seed: u64) -> Result<ShuffleReport> {
    check_charset(dataset, model)?;
    let size = model.config.encoder.input_size;
    let max_len = model.config.max_len;
    struct Row {
        deltas: Vec<f64>,
        multiword: bool,
        original_first: bool,
        kept: usize,
    }
    let rows: Vec<Vec<Row>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let s = &dataset.samples[i];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let image = dataset.load_image(i, size)?;
            let fmap = encode_image(model, &image)?;
            let enc = |t: &str| encode(t, model.charset(), max_len);
            let neg_c = s.negatives.iter().map(|n| enc(n)).collect::<Result<Vec<_>>>()?;
            let best_neg = if neg_c.is_empty() {
                f32::NEG_INFINITY
            } else {
                score_fmap(model, &fmap, &neg_c)?.iter().map(|x| x.p_valid).fold(f32::NEG_INFINITY, f32::max)
            };
            let mut out = Vec::new();
            for pos in &s.positives {
                let original = score_fmap(model, &fmap, &[enc(pos)?])?[0].p_valid;
                let words = pos.split(' ').filter(|w| !w.is_empty()).collect::<HashSet<_>>().len();
                let multiword = words > 1;
                let mut perms = Vec::with_capacity(trials);
                for _ in 0..trials {
                    let mut p = shuffle_words(pos, &mut rng);
                    for _ in 0..32 {
                        if !multiword || p != *pos {
                            break;
                        }
                        p = shuffle_words(pos, &mut rng);
                    }
                    perms.push(enc(&p)?);
                }
                let scores = if perms.is_empty() { Vec::new() } else { score_fmap(model, &fmap, &perms)? };
                out.push(Row {
                    deltas: scores.iter().map(|x| (x.p_valid - original).abs() as f64).collect(),
                    multiword,
                    original_first: original > best_neg,
                    kept: scores.iter().filter(|x| x.p_valid > best_neg).count(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Row> = rows.into_iter().flatten().collect();
    let deltas: Vec<f64> = rows.iter().flat_map(|r| r.deltas.iter().copied()).collect();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    let multi: Vec<&Row> = rows.iter().filter(|r| r.multiword).collect();
    let firsts: Vec<&&Row> = multi.iter().filter(|r| r.original_first).collect();
    Ok(ShuffleReport {
        trials,
        positives: rows.len(),
        multiword_positives: multi.len(),
        mean_abs_delta: if deltas.is_empty() { 0.0 } else { deltas.iter().sum::<f64>() / deltas.len() as f64 },
        rank1_retention: ratio(firsts.iter().map(|r| r.kept).sum(), firsts.len() * trials),
        rank1_fraction: ratio(multi.iter().map(|r| r.kept).sum(), multi.len() * trials),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedReport {
    /// Ranking AUC with every image replaced by noise.
    pub masked_auc: f64,
    pub masked_pr_auc: f64,
    pub rows: usize,
}

/// Uniform noise image for `index`, independent of the dataset content.
pub fn noise_image(size: usize, seed: u64, index: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    GrayImage { width: size, height: size, pixels: (0..size * size).map(|_| rng.gen::<f32>()).collect() }
}

pub fn probe_masked(dataset: &Dataset, model: &Model, seed: u64) -> Result<(MaskedReport, Vec<ScoredCandidate>)> {
    let size = model.config.encoder.input_size;
    let scored = score_dataset_with(dataset, model, model.config.max_len, |i| Ok(noise_image(size, seed, i)))?;
    let report =
        MaskedReport { masked_auc: roc_auc(&scored), masked_pr_auc: pr_curve(&scored)?.auc, rows: scored.len() };
    Ok((report, scored))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub image: String,
    pub positive: String,
    pub positive_score: f32,
    pub subset: String,
    pub subset_score: f32,
}

/// Scores every proper contiguous word run of each multi-word positive
/// against its image.
pub fn probe_subset(dataset: &Dataset, model: &Model, query: Option<&str>) -> Result<Vec<SubsetRow>> {
    check_charset(dataset, model)?;
    let size = model.config.encoder.input_size;
    let max_len = model.config.max_len;
    let rows: Vec<Vec<SubsetRow>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let s = &dataset.samples[i];
            let chosen: Vec<&String> = s
                .positives
                .iter()
                .filter(|p| p.contains(' ') && query.is_none_or(|q| q.eq_ignore_ascii_case(p)))
                .collect();
            if chosen.is_empty() {
                return Ok(Vec::new());
            }
            let fmap = encode_image(model, &dataset.load_image(i, size)?)?;
            let mut out = Vec::new();
            for pos in chosen {
                let words: Vec<&str> = pos.split_whitespace().collect();
                let mut texts = vec![pos.clone()];
                for len in 1..words.len() {
                    for start in 0..=words.len() - len {
                        texts.push(words[start..start + len].join(" "));
                    }
                }
                let enc = texts.iter().map(|t| encode(t, model.charset(), max_len)).collect::<Result<Vec<_>>>()?;
                let sc = score_fmap(model, &fmap, &enc)?;
                for (t, x) in texts.iter().zip(&sc).skip(1) {
                    out.push(SubsetRow {
                        image: s.image.clone(),
                        positive: pos.clone(),
                        positive_score: sc[0].p_valid,
                        subset: t.clone(),
                        subset_score: x.p_valid,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn check_aligned(a: &[ScoredCandidate], b: &[ScoredCandidate]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("score lists differ in length: {} vs {}", a.len(), b.len())));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.image != y.image || x.candidate != y.candidate || x.label != y.label {
            return Err(Error::InvalidArgument(format!(
                "row {i} misaligned: ({}, {:?}) vs ({}, {:?})",
                x.image, x.candidate, y.image, y.candidate
            )));
        }
    }
    Ok(())
}

/// Elementwise maximum of two aligned score lists.
pub fn ensemble_max(a: &[ScoredCandidate], b: &[ScoredCandidate]) -> Result<Vec<ScoredCandidate>> {
    check_aligned(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| ScoredCandidate { score: x.score.max(y.score), ..x.clone() }).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub image: String,
    pub score: f32,
}

/// Feature maps of every image, in manifest order.
pub fn encode_dataset(dataset: &Dataset, model: &Model) -> Result<Vec<FeatureMap>> {
    let size = model.config.encoder.input_size;
    (0..dataset.len()).into_par_iter().map(|i| encode_image(model, &dataset.load_image(i, size)?)).collect()
}

/// Images scoring at least `threshold` against `query`, best first.
pub fn image_search(query: &str, dataset: &Dataset, model: &Model, threshold: f32) -> Result<Vec<SearchHit>> {
    search_features(query, dataset, &encode_dataset(dataset, model)?, model, threshold)
}

/// As [`image_search`] over precomputed feature maps.
pub fn search_features(
    query: &str,
    dataset: &Dataset,
    fmaps: &[FeatureMap],
    model: &Model,
    threshold: f32,
) -> Result<Vec<SearchHit>> {
    if fmaps.len() != dataset.len() {
        return Err(Error::InvalidArgument(format!("{} feature maps for {} images", fmaps.len(), dataset.len())));
    }
    let cand = encode(query, model.charset(), model.config.max_len)?;
    let mut hits: Vec<SearchHit> = fmaps
        .par_iter()
        .zip(&dataset.samples)
        .map(|(fmap, sample)| {
            let score = score_fmap(model, fmap, std::slice::from_ref(&cand))?[0].p_valid;
            Ok(SearchHit { image: sample.image.clone(), score })
        })
        .collect::<Result<_>>()?;
    hits.retain(|h| h.score >= threshold);
    hits.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(hits)
}

pub fn search_lines(hits: &[SearchHit]) -> String {
    hits.iter().map(|h| format!("{:.6}\t{}\n", h.score, h.image)).collect()
}

/// Balanced accuracy of sampled (image, candidate) pairs at threshold 0.5.
/// Pairs are drawn as in training, one sub-batch per image.
pub fn pair_accuracy(
    dataset: &Dataset,
    model: &Model,
    sampling: &SamplingConfig,
    phase: Phase,
    seed: u64,
) -> Result<Confusion> {
    check_charset(dataset, model)?;
    let size = model.config.encoder.input_size;
    let per_image: Vec<Vec<(f32, u8)>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let pairs = sample_pairs(&dataset.samples[i], sampling, phase, &mut rng)?;
            let texts: Vec<&str> = pairs.iter().map(|p| p.candidate.as_str()).collect();
            let scores = score_image(model, &dataset.load_image(i, size)?, &texts, model.config.max_len)?;
            Ok(scores.iter().zip(&pairs).map(|(s, p)| (s.p_valid, p.label)).collect())
        })
        .collect::<Result<_>>()?;
    let mut c = Confusion::default();
    for (p, y) in per_image.into_iter().flatten() {
        c.add(p, y);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[(f32, u8)]) -> Vec<ScoredCandidate> {
        v.iter()
            .enumerate()
            .map(|(i, &(score, label))| ScoredCandidate {
                image: format!("{}", i / 3),
                candidate: format!("c{i}"),
                score,
                label,
            })
            .collect()
    }

    #[test]
    fn hand_enumerated_point() {
        let c = pr_curve(&rows(&[(0.9, 1), (0.8, 0), (0.7, 1)])).unwrap();
        let p = c.at(0.85).unwrap();
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
        assert_eq!(c.points.len(), 3);
    }

    #[test]
    fn separated_scores_have_unit_auc() {
        let c = pr_curve(&rows(&[(0.9, 1), (0.8, 1), (0.3, 0), (0.1, 0)])).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(roc_auc(&rows(&[(0.9, 1), (0.8, 1), (0.3, 0), (0.1, 0)])), 1.0);
    }

    #[test]
    fn all_tied_scores_single_point() {
        let c = pr_curve(&rows(&[(0.5, 1), (0.5, 0), (0.5, 0), (0.5, 0)])).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].precision, 0.25);
        assert_eq!(c.points[0].recall, 1.0);
        assert_eq!(roc_auc(&rows(&[(0.5, 1), (0.5, 0), (0.5, 0)])), 0.5);
    }

    #[test]
    fn no_positives_is_error() {
        assert!(pr_curve(&rows(&[(0.5, 0)])).is_err());
    }

    #[test]
    fn csv_header() {
        let c = pr_curve(&rows(&[(0.9, 1)])).unwrap();
        assert!(c.to_csv().starts_with("threshold,precision,recall\n0.9,1.000000,1.000000"));
    }

    #[test]
    fn ensemble_examples() {
        let a = rows(&[(0.3, 1)]);
        let b = rows(&[(0.7, 1)]);
        assert_eq!(ensemble_max(&a, &b).unwrap()[0].score, 0.7);
        assert_eq!(ensemble_max(&a, &a).unwrap(), a);
        let mut c = b.clone();
        c[0].candidate = "other".into();
        assert!(ensemble_max(&a, &c).is_err());
    }

    #[test]
    fn margins_per_image() {
        let m = margins(&rows(&[(0.9, 1), (0.2, 0), (0.4, 0), (0.1, 1), (0.6, 0), (0.3, 0)]));
        assert_eq!(m.len(), 2);
        assert!((m[0].1 - 0.5).abs() < 1e-6);
        assert!((m[1].1 + 0.5).abs() < 1e-6);
        let r = margin_report_from(&rows(&[(0.9, 1), (0.2, 0)]), &rows(&[(0.9, 1), (0.2, 0)])).unwrap();
        assert_eq!(r.mean_delta, 0.0);
    }

    #[test]
    fn search_lines_format() {
        let s = search_lines(&[SearchHit { image: "images/00001.pgm".into(), score: 0.875 }]);
        assert_eq!(s, "0.875000\timages/00001.pgm\n");
    }

    fn brute(scored: &[ScoredCandidate], t: f32) -> (f64, f64) {
        let tp = scored.iter().filter(|s| s.score >= t && s.label == 1).count() as f64;
        let fp = scored.iter().filter(|s| s.score >= t && s.label == 0).count() as f64;
        let pos = scored.iter().filter(|s| s.label == 1).count() as f64;
        (tp / (tp + fp), tp / pos)
    }

    proptest! {
        #[test]
        fn curve_matches_confusion_matrix(v in proptest::collection::vec((0u8..20, 0u8..2), 1..50)) {
            let mut v: Vec<(f32, u8)> = v.into_iter().map(|(s, l)| (s as f32 / 20.0, l)).collect();
            v[0].1 = 1;
            let scored = rows(&v);
            let c = pr_curve(&scored).unwrap();
            let mut prev_t = f32::INFINITY;
            let mut prev_r = 0.0;
            for p in &c.points {
                prop_assert!(p.threshold < prev_t);
                prop_assert!(p.recall >= prev_r);
                prop_assert!((0.0..=1.0).contains(&p.precision));
                let (bp, br) = brute(&scored, p.threshold);
                prop_assert!((bp - p.precision).abs() < 1e-12 && (br - p.recall).abs() < 1e-12);
                prev_t = p.threshold;
                prev_r = p.recall;
            }
            prop_assert!((0.0..=1.0).contains(&c.auc));
        }

        #[test]
        fn ensemble_commutes(v in proptest::collection::vec((0.0f32..1.0, 0.0f32..1.0), 1..20)) {
            let a = rows(&v.iter().map(|x| (x.0, 0)).collect::<Vec<_>>());
            let b = rows(&v.iter().map(|x| (x.1, 0)).collect::<Vec<_>>());
            prop_assert_eq!(ensemble_max(&a, &b).unwrap(), ensemble_max(&b, &a).unwrap());
        }
    }
}
