use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::font::{self, ADVANCE, GLYPH_H, GLYPH_W, LINE};
use super::GenConfig;
use crate::imageio::GrayImage;

/// A block of centered text lines placed by a similarity transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextItem {
    pub lines: Vec<String>,
    pub cx: f32,
    pub cy: f32,
    /// Image pixels per font pixel.
    pub scale: f32,
    /// Radians, counter-clockwise.
    pub angle: f32,
    pub intensity: f32,
}

impl TextItem {
    /// Block size in font pixels.
    pub fn block_size(&self) -> (f32, f32) {
        let w = self.lines.iter().map(|l| line_width(l)).fold(0.0, f32::max);
        let h = (self.lines.len() * LINE - (LINE - GLYPH_H)) as f32;
        (w, h)
    }

    /// Axis-aligned bounding box `(x0, y0, x1, y1)` in image pixels.
    pub fn bbox(&self) -> (f32, f32, f32, f32) {
        let (w, h) = self.block_size();
        let (hw, hh) = (w * self.scale / 2.0, h * self.scale / 2.0);
        let (s, c) = self.angle.sin_cos();
        let ex = hw * c.abs() + hh * s.abs();
        let ey = hw * s.abs() + hh * c.abs();
        (self.cx - ex, self.cy - ey, self.cx + ex, self.cy + ey)
    }

    fn covers(&self, x: f32, y: f32) -> bool {
        let (w, h) = self.block_size();
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (c * dx - s * dy) / self.scale + w / 2.0;
        let v = (s * dx + c * dy) / self.scale + h / 2.0;
        if u < 0.0 || v < 0.0 || v >= h {
            return false;
        }
        let li = (v / LINE as f32) as usize;
        let row = v - (li * LINE) as f32;
        let Some(line) = self.lines.get(li) else {
            return false;
        };
        let col = u - (w - line_width(line)) / 2.0;
        if col < 0.0 {
            return false;
        }
        let ci = (col / ADVANCE as f32) as usize;
        let px = col - (ci * ADVANCE) as f32;
        match line.chars().nth(ci) {
            Some(ch) => font::pixel(ch, px as usize, row as usize),
            None => false,
        }
    }
}

fn line_width(line: &str) -> f32 {
    let n = line.chars().count();
    if n == 0 {
        0.0
    } else {
        (n * ADVANCE - (ADVANCE - GLYPH_W)) as f32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Clutter {
    Line { x0: f32, y0: f32, x1: f32, y1: f32, width: f32, intensity: f32 },
    Rect { x0: f32, y0: f32, x1: f32, y1: f32, width: f32, intensity: f32 },
}

impl Clutter {
    fn intensity(&self) -> f32 {
        match *self {
            Clutter::Line { intensity, .. } | Clutter::Rect { intensity, .. } => intensity,
        }
    }

    fn covers(&self, x: f32, y: f32) -> bool {
        match *self {
            Clutter::Line { x0, y0, x1, y1, width, .. } => seg_dist(x, y, x0, y0, x1, y1) <= width / 2.0,
            Clutter::Rect { x0, y0, x1, y1, width, .. } => {
                let inside =
                    x >= x0 - width / 2.0 && x <= x1 + width / 2.0 && y >= y0 - width / 2.0 && y <= y1 + width / 2.0;
                let core = x > x0 + width / 2.0 && x < x1 - width / 2.0 && y > y0 + width / 2.0 && y < y1 - width / 2.0;
                inside && !core
            }
        }
    }
}

fn seg_dist(x: f32, y: f32, x0: f32, y0: f32, x1: f32, y1: f32) -> f32 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((x - x0) * dx + (y - y0) * dy) / len2).clamp(0.0, 1.0) };
    let (px, py) = (x0 + t * dx - x, y0 + t * dy - y);
    (px * px + py * py).sqrt()
}

/// Everything needed to rasterize one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub size: usize,
    /// Background `a + gx * x + gy * y` with `x, y` in `[0, 1]`.
    pub background: (f32, f32, f32),
    pub clutter: Vec<Clutter>,
    pub name: TextItem,
    pub distractors: Vec<TextItem>,
    pub noise: f32,
    pub noise_seed: u64,
}

/// Greedy word wrap to at most `max_chars` per line.
pub fn wrap(text: &str, max_chars: usize) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        match lines.last_mut() {
            Some(l) if l.chars().count() + 1 + word.chars().count() <= max_chars => {
                l.push(' ');
                l.push_str(word);
            }
            _ => lines.push(word.to_string()),
        }
    }
    lines
}

fn overlaps(a: (f32, f32, f32, f32), b: (f32, f32, f32, f32), pad: f32) -> bool {
    a.0 - pad < b.2 && b.0 - pad < a.2 && a.1 - pad < b.3 && b.1 - pad < a.3
}

pub fn sample_layout(cfg: &GenConfig, name: &str, rng: &mut impl Rng) -> Layout {
    let size = cfg.image_size as f32;
    let base = rng.gen_range(0.25f32..0.75);
    let background = (base, rng.gen_range(-0.1f32..0.1), rng.gen_range(-0.1f32..0.1));
    let dark_text = base > 0.5;
    let contrast = rng.gen_range(0.35f32..0.6);
    let text_value = if dark_text { base - contrast } else { base + contrast };

    let margin = size * 0.05;
    let mut scale = cfg.glyph_scale * (1.0 + rng.gen_range(-cfg.scale_jitter..=cfg.scale_jitter));
    let angle = rng.gen_range(-cfg.rotation_deg..=cfg.rotation_deg).to_radians();
    let mut lines;
    loop {
        let max_chars = (((size - 2.0 * margin) / scale + 1.0) / ADVANCE as f32).floor().max(1.0) as usize;
        lines = wrap(name, max_chars);
        let fits_w = lines.iter().all(|l| line_width(l) * scale <= size - 2.0 * margin);
        let fits_h = (lines.len() * LINE) as f32 * scale <= size - 2.0 * margin;
        if (fits_w && fits_h) || scale < 0.75 {
            break;
        }
        scale *= 0.9;
    }
    let mut item = TextItem { lines, cx: 0.0, cy: 0.0, scale, angle, intensity: text_value };
    let (bw, bh) = {
        let b = TextItem { cx: 0.0, cy: 0.0, ..item.clone() }.bbox();
        (b.2 - b.0, b.3 - b.1)
    };
    let span = |extent: f32| {
        let lo = (extent / 2.0 + margin).min(size / 2.0);
        let hi = (size - extent / 2.0 - margin).max(size / 2.0);
        (lo, hi)
    };
    let (xl, xh) = span(bw);
    let (yl, yh) = span(bh);
    item.cx = if xh > xl { rng.gen_range(xl..xh) } else { size / 2.0 };
    item.cy = if yh > yl { rng.gen_range(yl..yh) } else { size / 2.0 };

    let mut clutter = Vec::with_capacity(cfg.clutter);
    for _ in 0..cfg.clutter {
        let intensity = base + rng.gen_range(-0.25f32..0.25);
        let width = rng.gen_range(1.0f32..3.0);
        let (x0, y0) = (rng.gen_range(0.0..size), rng.gen_range(0.0..size));
        let (x1, y1) = (rng.gen_range(0.0..size), rng.gen_range(0.0..size));
        clutter.push(if rng.gen_bool(0.5) {
            Clutter::Line { x0, y0, x1, y1, width, intensity }
        } else {
            Clutter::Rect { x0: x0.min(x1), y0: y0.min(y1), x1: x0.max(x1), y1: y0.max(y1), width, intensity }
        });
    }

    let name_box = item.bbox();
    let n_distractors = if cfg.distractors == 0 { 0 } else { rng.gen_range(0..=cfg.distractors) };
    let mut distractors: Vec<TextItem> = Vec::new();
    for _ in 0..n_distractors {
        let word = &cfg.distractor_vocabulary[rng.gen_range(0..cfg.distractor_vocabulary.len())];
        let d_scale = (cfg.glyph_scale * 0.5).max(0.75);
        let contrast = rng.gen_range(0.25f32..0.5);
        let mut d = TextItem {
            lines: vec![word.clone()],
            cx: 0.0,
            cy: 0.0,
            scale: d_scale,
            angle: rng.gen_range(-cfg.rotation_deg..=cfg.rotation_deg).to_radians(),
            intensity: if dark_text { base - contrast } else { base + contrast },
        };
        for _ in 0..20 {
            d.cx = rng.gen_range(0.0..size);
            d.cy = rng.gen_range(0.0..size);
            let b = d.bbox();
            let inside = b.0 >= 1.0 && b.1 >= 1.0 && b.2 <= size - 1.0 && b.3 <= size - 1.0;
            if inside && !overlaps(b, name_box, 3.0) && distractors.iter().all(|o| !overlaps(b, o.bbox(), 2.0)) {
                distractors.push(d);
                break;
            }
        }
    }
    Layout {
        size: cfg.image_size,
        background,
        clutter,
        name: item,
        distractors,
        noise: cfg.noise,
        noise_seed: rng.gen(),
    }
}

/// Rasterizes a layout with 2x2 supersampling. With `include_name` false
/// the name is left out and everything else is drawn identically.
pub fn render(layout: &Layout, include_name: bool) -> GrayImage {
    let n = layout.size;
    let mut texts: Vec<&TextItem> = layout.distractors.iter().collect();
    if include_name {
        texts.push(&layout.name);
    }
    let boxes: Vec<_> = texts.iter().map(|t| t.bbox()).collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(layout.noise_seed);
    let (a, gx, gy) = layout.background;
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let bg = a + gx * x as f32 / n as f32 + gy * y as f32 / n as f32;
            let mut acc = 0.0;
            for sy in 0..2 {
                for sx in 0..2 {
                    let px = x as f32 + 0.25 + 0.5 * sx as f32;
                    let py = y as f32 + 0.25 + 0.5 * sy as f32;
                    let mut v = bg;
                    for c in &layout.clutter {
                        if c.covers(px, py) {
                            v = c.intensity();
                        }
                    }
                    for (t, b) in texts.iter().zip(&boxes) {
                        if px >= b.0 && px <= b.2 && py >= b.1 && py <= b.3 && t.covers(px, py) {
                            v = t.intensity;
                        }
                    }
                    acc += v;
                }
            }
            // Drawn for every pixel so the noise field does not depend on the text.
            let noise = noise_rng.gen_range(-1.0f32..=1.0) * layout.noise;
            pixels.push((acc / 4.0 + noise).clamp(0.0, 1.0));
        }
    }
    GrayImage { width: n, height: n, pixels }
}
