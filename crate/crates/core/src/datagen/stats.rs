use std::collections::BTreeMap;
use std::fmt::Write;

use super::Sample;
use crate::textops::edit_distance;

/// Longest candidate the length histogram spans.
pub const MAX_CANDIDATE_LEN: usize = 100;

/// Histograms over candidates per image, candidate length (characters)
/// and the edit distance from each negative to its nearest positive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetStats {
    pub candidate_count: BTreeMap<usize, usize>,
    pub length: BTreeMap<usize, usize>,
    pub edit_distance: BTreeMap<usize, usize>,
}

pub fn dataset_stats(samples: &[Sample]) -> DatasetStats {
    let mut st = DatasetStats::default();
    for s in samples {
        *st.candidate_count.entry(s.num_candidates()).or_default() += 1;
        for (c, _) in s.candidates() {
            *st.length.entry(c.chars().count()).or_default() += 1;
        }
        for n in &s.negatives {
            let d = s.positives.iter().map(|p| edit_distance(n, p)).min().unwrap_or(0);
            *st.edit_distance.entry(d).or_default() += 1;
        }
    }
    st
}

impl DatasetStats {
    /// `(bin, count, cumulative fraction)` over a dense bin range.
    pub fn rows(hist: &BTreeMap<usize, usize>, lo: usize, hi: usize) -> Vec<(usize, usize, f64)> {
        let total: usize = hist.values().sum();
        let mut cum = 0;
        (lo..=hi)
            .map(|b| {
                let c = hist.get(&b).copied().unwrap_or(0);
                cum += c;
                (b, c, if total == 0 { 0.0 } else { cum as f64 / total as f64 })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,bin,count,cumulative\n");
        let span =
            |h: &BTreeMap<usize, usize>| (h.keys().next().copied().unwrap_or(0), h.keys().last().copied().unwrap_or(0));
        let (clo, chi) = span(&self.candidate_count);
        let (_, lhi) = span(&self.length);
        let (_, ehi) = span(&self.edit_distance);
        let sections = [
            ("candidates", Self::rows(&self.candidate_count, clo, chi)),
            ("length", Self::rows(&self.length, 0, lhi.max(MAX_CANDIDATE_LEN))),
            ("edit_distance", Self::rows(&self.edit_distance, 0, ehi)),
        ];
        for (metric, rows) in sections {
            for (b, c, cum) in rows {
                writeln!(out, "{metric},{b},{c},{cum:.6}").unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(pos: &str, negs: &[&str]) -> Sample {
        Sample {
            image: "x".into(),
            positives: vec![pos.into()],
            negatives: negs.iter().map(|n| n.to_string()).collect(),
        }
    }

    #[test]
    fn point_mass_candidate_count() {
        let samples: Vec<Sample> = (0..100).map(|_| s("abc", &["a", "b", "c", "d", "e", "f", "g", "h", "i"])).collect();
        let st = dataset_stats(&samples);
        assert_eq!(st.candidate_count.len(), 1);
        assert_eq!(st.candidate_count[&10], 100);
    }

    #[test]
    fn csv_cdf_reaches_one() {
        let st = dataset_stats(&[s("abc", &["abd", "x"]), s("hello", &["help"])]);
        let csv = st.to_csv();
        assert!(csv.starts_with("metric,bin,count,cumulative\n"));
        assert!(csv.contains("length,100,0,1.000000"));
        assert!(csv.contains("edit_distance,1,1,"));
        assert_eq!(st.edit_distance[&2], 1);
        assert_eq!(st.edit_distance[&3], 1);
    }
}
