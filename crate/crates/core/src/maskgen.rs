//! Feature-map masks: binarize, upsample to image size, apply to the image.
//!
//! Upsampling is bilinear with the align-corners=false convention. For a
//! source of width `n` and target width `W`, output column `x` samples source
//! coordinate
//!
//! ```text
//! sx = clamp((x + 0.5) * n / W - 0.5, 0, n - 1)
//! ```
//!
//! and likewise for rows; the value is the usual bilinear blend of the four
//! neighbours `floor(sx)`, `min(floor(sx) + 1, n - 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Classifier, Inference};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    /// Activations strictly above `tau` become 1.
    pub tau: f64,
}

pub const DEFAULT_TAU: f64 = 0.5;

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, cells: Vec<bool>) -> Result<Self> {
        if width * height != cells.len() || cells.is_empty() {
            return Err(Error::LengthMismatch {
                what: "binary mask",
                expected: width * height,
                actual: cells.len(),
            });
        }
        Ok(BinaryMask {
            width,
            height,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }
}

/// A `[0, 1]`-valued mask at image resolution, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() || values.is_empty() {
            return Err(Error::LengthMismatch {
                what: "soft mask",
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("mask value {v} outside [0, 1]")));
        }
        Ok(SoftMask {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        SoftMask {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedImage {
    pub source_mask_index: usize,
    pub pixels: Tensor,
}

pub fn binarize(map: &[f64], width: usize, height: usize, tau: f64) -> Result<BinaryMask> {
    if let Some(v) = map.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite activation {v}")));
    }
    BinaryMask::new(width, height, map.iter().map(|&v| v > tau).collect())
}

/// Bilinear resize of a row-major grid to a target at least as large.
pub fn resize_bilinear(
    src: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Result<Vec<f64>> {
    if src.len() != src_w * src_h || src.is_empty() {
        return Err(Error::LengthMismatch {
            what: "resize source",
            expected: src_w * src_h,
            actual: src.len(),
        });
    }
    if dst_w < src_w || dst_h < src_h {
        return Err(Error::InvalidArgument(format!(
            "cannot upsample {src_w}x{src_h} to smaller {dst_w}x{dst_h}"
        )));
    }
    let axis = |dst: usize, n: usize| -> Vec<(usize, usize, f64)> {
        let scale = n as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(dst_w, src_w);
    let ys = axis(dst_h, src_h);
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = (1.0 - fx) * src[y0 * src_w + x0] + fx * src[y0 * src_w + x1];
            let bottom = (1.0 - fx) * src[y1 * src_w + x0] + fx * src[y1 * src_w + x1];
            out.push((1.0 - fy) * top + fy * bottom);
        }
    }
    Ok(out)
}

pub fn upsample_bilinear(mask: &BinaryMask, width: usize, height: usize) -> Result<SoftMask> {
    let src: Vec<f64> = mask.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    let values = resize_bilinear(&src, mask.width, mask.height, width, height)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(SoftMask {
        width,
        height,
        values,
    })
}

/// Multiplies every channel of a `[C, H, W]` image pointwise by the mask.
pub fn apply_mask(image: &Tensor, mask: &SoftMask) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if (w, h) != (mask.width, mask.height) {
        return Err(Error::ShapeMismatch {
            expected: vec![c, mask.height, mask.width],
            actual: image.shape().to_vec(),
        });
    }
    let data = image
        .data()
        .chunks(h * w)
        .flat_map(|plane| plane.iter().zip(&mask.values).map(|(p, m)| p * m))
        .collect();
    Ok(Tensor::from_parts(image.shape().to_vec(), data))
}

/// Masks and masked images for every tapped feature map, index-aligned.
#[derive(Debug, Clone)]
pub struct MaskedSet {
    /// Forward pass on the unmodified image.
    pub original: Inference,
    pub masks: Vec<SoftMask>,
    pub masked: Vec<MaskedImage>,
}

pub fn generate_masked_set(
    model: &dyn Classifier,
    image: &Tensor,
    cfg: &MaskConfig,
) -> Result<MaskedSet> {
    if !cfg.tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tau must be finite, got {}", cfg.tau)));
    }
    let original = model.infer(image)?;
    let (_, h, w) = image.chw()?;
    let features = &original.features;
    let (n_w, n_h) = (features.map_width(), features.map_height());
    let pairs: Vec<(SoftMask, MaskedImage)> = (0..features.count())
        .into_par_iter()
        .map(|i| {
            let binary = binarize(features.map(i), n_w, n_h, cfg.tau)?;
            let soft = upsample_bilinear(&binary, w, h)?;
            let pixels = apply_mask(image, &soft)?;
            Ok((
                soft,
                MaskedImage {
                    source_mask_index: i,
                    pixels,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (masks, masked) = pairs.into_iter().unzip();
    Ok(MaskedSet {
        original,
        masks,
        masked,
    })
}
