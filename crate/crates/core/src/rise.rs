//! Randomized-mask baseline explainer.
//!
//! Each mask is an `s x s` Bernoulli(`keep_prob`) grid, bilinearly upsampled to
//! `(s + 1)` cells and cropped at a random sub-cell offset. The map is the
//! score-weighted average of masks, normalized by `mask_count * keep_prob`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::{apply_mask, resize_bilinear, SoftMask};
use crate::model::Classifier;
use crate::saliency::{Explainer, SaliencyMap};
use crate::tensor::Tensor;

pub const METHOD_TAG: &str = "rise";

/// Masks are generated and scored this many at a time.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiseConfig {
    pub mask_count: usize,
    pub cell_grid: usize,
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for RiseConfig {
    fn default() -> Self {
        RiseConfig {
            mask_count: 2000,
            cell_grid: 7,
            keep_prob: 0.5,
            seed: 0,
        }
    }
}

impl RiseConfig {
    fn validate(&self) -> Result<()> {
        if self.mask_count == 0 || self.cell_grid == 0 {
            return Err(Error::InvalidArgument(
                "mask_count and cell_grid must be at least 1".into(),
            ));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep_prob must be in (0, 1], got {}",
                self.keep_prob
            )));
        }
        Ok(())
    }
}

/// Sequential mask source; mask `k` depends only on the seed and `k`'s position.
struct MaskStream {
    rng: ChaCha8Rng,
    cfg: RiseConfig,
    width: usize,
    height: usize,
}

impl MaskStream {
    fn new(cfg: RiseConfig, width: usize, height: usize) -> Self {
        MaskStream {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            width,
            height,
        }
    }

    fn next_mask(&mut self) -> SoftMask {
        let s = self.cfg.cell_grid;
        let cell_w = self.width.div_ceil(s);
        let cell_h = self.height.div_ceil(s);
        let grid: Vec<f64> = (0..s * s)
            .map(|_| {
                if self.rng.gen_bool(self.cfg.keep_prob) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let dx = self.rng.gen_range(0..cell_w);
        let dy = self.rng.gen_range(0..cell_h);
        let up_w = (s + 1) * cell_w;
        let up_h = (s + 1) * cell_h;
        let up = resize_bilinear(&grid, s, s, up_w, up_h).expect("upsampled grid is larger");
        let mut values = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            let row = &up[(y + dy) * up_w + dx..(y + dy) * up_w + dx + self.width];
            values.extend(row.iter().map(|v| v.clamp(0.0, 1.0)));
        }
        SoftMask::new(self.width, self.height, values).expect("mask values in range")
    }
}

pub fn generate_random_masks(cfg: &RiseConfig, width: usize, height: usize) -> Result<Vec<SoftMask>> {
    cfg.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
    }
    let mut stream = MaskStream::new(*cfg, width, height);
    Ok((0..cfg.mask_count).map(|_| stream.next_mask()).collect())
}

pub fn rise_explain(model: &dyn Classifier, image: &Tensor, cfg: &RiseConfig) -> Result<SaliencyMap> {
    cfg.validate()?;
    let (_, h, w) = image.chw()?;
    let class = model.infer(image)?.scores.argmax();
    let mut stream = MaskStream::new(*cfg, w, h);
    let mut acc = vec![0.0; w * h];
    let mut remaining = cfg.mask_count;
    while remaining > 0 {
        let n = remaining.min(CHUNK);
        remaining -= n;
        let masks: Vec<SoftMask> = (0..n).map(|_| stream.next_mask()).collect();
        let masked: Vec<Tensor> = masks
            .par_iter()
            .map(|m| apply_mask(image, m))
            .collect::<Result<_>>()?;
        let scores = model.infer_scores_batch(&masked)?;
        for (mask, score) in masks.iter().zip(&scores) {
            let weight = score.get(class);
            for (a, m) in acc.iter_mut().zip(mask.values()) {
                *a += weight * m;
            }
        }
    }
    let norm = cfg.mask_count as f64 * cfg.keep_prob;
    acc.iter_mut().for_each(|a| *a /= norm);
    SaliencyMap::new(w, h, acc, class, METHOD_TAG)
}

impl Explainer for RiseConfig {
    fn tag(&self) -> &str {
        METHOD_TAG
    }

    fn explain_map(&self, model: &dyn Classifier, image: &Tensor) -> Result<SaliencyMap> {
        rise_explain(model, image, self)
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({
            "mask_count": self.mask_count,
            "cell_grid": self.cell_grid,
            "keep_prob": self.keep_prob,
            "seed": self.seed,
        })
    }
}
