use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::resize_pad;
use crate::error::{Error, Result};
use crate::imageio::{self, GrayImage};

pub const MANIFEST: &str = "manifest.jsonl";

/// One image with its candidate business names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    /// Path relative to the dataset directory.
    pub image: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl Sample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.positives.is_empty() {
            return Err("no positive candidate".into());
        }
        let pos: HashSet<String> = self.positives.iter().map(|s| s.to_lowercase()).collect();
        if let Some(n) = self.negatives.iter().find(|n| pos.contains(&n.to_lowercase())) {
            return Err(format!("candidate {n:?} is both positive and negative"));
        }
        if self.positives.iter().chain(&self.negatives).any(|c| c.trim().is_empty()) {
            return Err("empty candidate".into());
        }
        Ok(())
    }

    pub fn num_candidates(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// Positives then negatives, with labels.
    pub fn candidates(&self) -> impl Iterator<Item = (&str, u8)> {
        let p = self.positives.iter().map(|s| (s.as_str(), 1));
        p.chain(self.negatives.iter().map(|s| (s.as_str(), 0)))
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(line).map_err(|e| Error::Manifest { line: i + 1, msg: e.to_string() })?;
        s.validate().map_err(|msg| Error::Manifest { line: i + 1, msg })?;
        out.push(s);
    }
    Ok(out)
}

pub fn serialize_manifest(samples: &[Sample]) -> String {
    let mut s = String::new();
    for sample in samples {
        s.push_str(&serde_json::to_string(sample).expect("samples serialize"));
        s.push('\n');
    }
    s
}

/// A manifest and the directory its image paths are relative to.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Dataset { root: root.to_path_buf(), samples: parse_manifest(&text)? })
    }

    pub fn save_manifest(&self) -> Result<()> {
        let path = self.root.join(MANIFEST);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(serialize_manifest(&self.samples).as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.samples[i].image)
    }

    /// Loads image `i` and brings it to `target x target`; padding noise
    /// is seeded by the image path so repeated loads agree.
    pub fn load_image(&self, i: usize, target: usize) -> Result<GrayImage> {
        let img = imageio::load(&self.image_path(i))?;
        if img.width == target && img.height == target {
            return Ok(img);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(&self.samples[i].image));
        resize_pad(&img, target, &mut rng)
    }
}

fn path_seed(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}
