use std::fs;
use std::path::Path;

use gav_core::datagen::{dataset_stats, generate, layout_for, parse_manifest, render, serialize_manifest, MANIFEST};
use gav_core::imageio;
use gav_core::textops::edit_distance;
use gav_core::GenConfig;

fn cfg(images: usize, seed: u64) -> GenConfig {
    GenConfig { images, seed, ..Default::default() }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![(MANIFEST.to_string(), fs::read(root.join(MANIFEST)).unwrap())];
    let mut names: Vec<_> = fs::read_dir(root.join("images")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        out.push((n.to_string_lossy().into_owned(), fs::read(root.join("images").join(&n)).unwrap()));
    }
    out
}

#[test]
fn same_seed_is_byte_identical() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&cfg(30, 4), a.path()).unwrap();
    generate(&cfg(30, 4), b.path()).unwrap();
    generate(&cfg(30, 5), c.path()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    assert_ne!(tree_bytes(a.path()), tree_bytes(c.path()));
}

#[test]
fn hundred_names_ten_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&cfg(100, 1), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    assert_eq!(text.lines().count(), 100);
    assert_eq!(serialize_manifest(&parse_manifest(&text).unwrap()), text);
    let stats = dataset_stats(&ds.samples);
    assert_eq!(stats.candidate_count.len(), 1);
    assert_eq!(stats.candidate_count[&10], 100);
    let csv = stats.to_csv();
    assert!(csv.lines().any(|l| l.starts_with("length,100,") && l.ends_with(",1.000000")));
}

#[test]
fn positive_is_rendered_where_it_was_placed() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(20, 2);
    let ds = generate(&c, dir.path()).unwrap();
    for (i, s) in ds.samples.iter().enumerate() {
        let layout = layout_for(&c, 0, i, &s.positives[0]);
        let stored = imageio::load(&ds.image_path(i)).unwrap();
        let with = render(&layout, true);
        assert_eq!(stored.to_bytes(), with.to_bytes(), "layout reproduces image {i}");
        let without = render(&layout, false);
        let b = layout.name.bbox();
        let mut inside = 0.0f32;
        for y in 0..with.height {
            for x in 0..with.width {
                let d = (with.get(x, y) - without.get(x, y)).abs();
                let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
                if fx >= b.0 - 1.0 && fx <= b.2 + 1.0 && fy >= b.1 - 1.0 && fy <= b.3 + 1.0 {
                    inside += d;
                } else {
                    assert_eq!(d, 0.0);
                }
            }
        }
        assert!(inside > 0.0);
    }
}

#[test]
fn distractors_are_never_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(40, 3);
    let ds = generate(&c, dir.path()).unwrap();
    for (i, s) in ds.samples.iter().enumerate() {
        let layout = layout_for(&c, 0, i, &s.positives[0]);
        for d in &layout.distractors {
            let word = d.lines.join(" ");
            assert!(s.candidates().all(|(cand, _)| cand != word));
            assert!(!c.vocabulary.contains(&word));
        }
    }
}

#[test]
fn edit_distance_histogram_matches_recount() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&cfg(10, 6), dir.path()).unwrap();
    let stats = dataset_stats(&ds.samples);
    let mut counts = std::collections::BTreeMap::new();
    for s in &ds.samples {
        for n in &s.negatives {
            // Positive sets have one element here.
            *counts.entry(edit_distance(n, &s.positives[0])).or_insert(0usize) += 1;
        }
    }
    assert_eq!(stats.edit_distance, counts);
    assert_eq!(counts.values().sum::<usize>(), 90);
}
