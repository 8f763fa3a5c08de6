//! Heatmap colorization and overlay.

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::tensor::Tensor;

#[path = "colormap_data.rs"]
mod colormap_data;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Colormap {
    pub name: &'static str,
    pub table: [[u8; 3]; 256],
}

impl Colormap {
    pub fn viridis() -> Self {
        Colormap {
            name: "viridis",
            table: colormap_data::VIRIDIS,
        }
    }

    pub fn entry(&self, index: usize) -> [f64; 3] {
        let [r, g, b] = self.table[index];
        [r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0]
    }
}

impl Default for Colormap {
    fn default() -> Self {
        Self::viridis()
    }
}

/// Table index for each pixel after min-max normalization; constant maps use entry 0.
pub fn colormap_indices(saliency: &SaliencyMap) -> Vec<usize> {
    let v = saliency.values();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0; v.len()];
    }
    v.iter()
        .map(|&x| (((x - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as usize)
        .collect()
}

/// RGB `[3, H, W]` heatmap with values in `[0, 1]`.
pub fn colorize(saliency: &SaliencyMap, cmap: &Colormap) -> Tensor {
    let idx = colormap_indices(saliency);
    let plane = idx.len();
    let mut data = vec![0.0; 3 * plane];
    for (p, &i) in idx.iter().enumerate() {
        let rgb = cmap.entry(i);
        for ch in 0..3 {
            data[ch * plane + p] = rgb[ch];
        }
    }
    Tensor::from_parts(vec![3, saliency.height(), saliency.width()], data)
}

/// `(1 - alpha) * image + alpha * heat`, clamped. Single-channel images are
/// broadcast to RGB.
pub fn overlay(image: &Tensor, heat: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let (c, h, w) = image.chw()?;
    let (hc, hh, hw) = heat.chw()?;
    if hc != 3 || (hh, hw) != (h, w) || !(c == 1 || c == 3) {
        return Err(Error::ShapeMismatch {
            expected: vec![3, h, w],
            actual: heat.shape().to_vec(),
        });
    }
    let plane = h * w;
    let data = (0..3 * plane)
        .map(|i| {
            let src = if c == 1 { i % plane } else { i };
            ((1.0 - alpha) * image.data()[src] + alpha * heat.data()[i]).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Tensor::from_parts(vec![3, h, w], data))
}
