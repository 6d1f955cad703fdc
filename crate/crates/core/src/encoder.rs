//! Convolutional image encoder with appended coordinate one-hots.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::model::{Bound, EncoderConfig, Model};
use crate::tensor::{Graph, Padding, Real, Tensor, Var};

/// Encoder output: per grid cell, `C` visual channels followed by a
/// column one-hot (`W` entries) and a row one-hot (`H` entries).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `[height * width, channels + width + height]`, cells in row-major
    /// order.
    pub features: Tensor,
}

impl FeatureMap {
    pub fn depth(&self) -> usize {
        self.channels + self.width + self.height
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let d = self.depth();
        let i = row * self.width + col;
        &self.features.data()[i * d..(i + 1) * d]
    }

    pub fn visual(&self, row: usize, col: usize) -> &[f32] {
        &self.cell(row, col)[..self.channels]
    }

    pub fn coords(&self, row: usize, col: usize) -> &[f32] {
        &self.cell(row, col)[self.channels..]
    }
}

/// `[h * w, w + h]` coordinate block.
pub fn coord_channels<T: Real>(h: usize, w: usize) -> Tensor<T> {
    let d = w + h;
    let mut data = vec![T::zero(); h * w * d];
    for row in 0..h {
        for col in 0..w {
            let cell = (row * w + col) * d;
            data[cell + col] = T::one();
            data[cell + w + row] = T::one();
        }
    }
    Tensor::new([h * w, d], data).expect("nonempty grid")
}

/// Runs the conv stack on a `[1, s, s]` image and returns the augmented
/// features `[cells, depth]`.
pub fn encode_graph<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &EncoderConfig, image: Var) -> Result<Var> {
    let s = cfg.input_size;
    if g.shape(image) != [1, s, s] {
        return Err(Error::shape("encode_image", &[g.shape(image), &[1, s, s]]));
    }
    let mut x = image;
    for (i, &stride) in cfg.strides.iter().enumerate() {
        let w = p.get(&format!("enc.{i}.w"));
        let b = p.get(&format!("enc.{i}.b"));
        let y = g.conv2d(x, w, Some(b), stride, Padding::Same)?;
        x = g.relu(y)?;
    }
    let (c, h, w) = {
        let sh = g.shape(x);
        (sh[0], sh[1], sh[2])
    };
    let flat = g.reshape(x, &[c, h * w])?;
    let visual = g.transpose(flat)?;
    let coords = g.constant(coord_channels(h, w));
    g.concat(&[visual, coords], 1)
}

/// Inference-only encoding of a preprocessed image.
pub fn encode_image(model: &Model, image: &GrayImage) -> Result<FeatureMap> {
    let cfg = &model.config.encoder;
    if image.width != cfg.input_size || image.height != cfg.input_size {
        return Err(Error::shape("encode_image", &[&[image.height, image.width], &[cfg.input_size, cfg.input_size]]));
    }
    let mut g = Graph::<f32>::new();
    let p = model.bind(&mut g, false);
    let x = g.constant(image.to_tensor());
    let f = encode_graph(&mut g, &p, cfg, x)?;
    let grid = cfg.grid();
    Ok(FeatureMap { height: grid, width: grid, channels: cfg.out_channels(), features: g.value(f).clone() })
}

/// Aspect-preserving bilinear resize so the longer side equals `target`,
/// placed at the top-left of a `target x target` canvas whose remainder
/// is uniform noise in [0, 1].
pub fn resize_pad(image: &GrayImage, target: usize, rng: &mut impl Rng) -> Result<GrayImage> {
    if image.width == 0 || image.height == 0 || image.pixels.is_empty() || target == 0 {
        return Err(Error::Image("cannot resize a zero-area image".into()));
    }
    let longer = image.width.max(image.height);
    let (nw, nh) = if longer == target {
        (image.width, image.height)
    } else {
        let scale = target as f64 / longer as f64;
        let nw = ((image.width as f64 * scale).round() as usize).clamp(1, target);
        let nh = ((image.height as f64 * scale).round() as usize).clamp(1, target);
        (nw, nh)
    };
    let mut out = vec![0.0f32; target * target];
    for y in 0..target {
        for x in 0..target {
            out[y * target + x] = if x < nw && y < nh {
                if (nw, nh) == (image.width, image.height) {
                    image.get(x, y)
                } else {
                    bilinear(image, x, y, nw, nh)
                }
            } else {
                rng.gen::<f32>()
            };
        }
    }
    GrayImage::new(target, target, out)
}

fn bilinear(img: &GrayImage, x: usize, y: usize, nw: usize, nh: usize) -> f32 {
    let sx = ((x as f32 + 0.5) * img.width as f32 / nw as f32 - 0.5).max(0.0);
    let sy = ((y as f32 + 0.5) * img.height as f32 / nh as f32 - 0.5).max(0.0);
    let x0 = (sx.floor() as usize).min(img.width - 1);
    let y0 = (sy.floor() as usize).min(img.height - 1);
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}
