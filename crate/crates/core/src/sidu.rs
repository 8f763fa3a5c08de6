//! Similarity-difference and uniqueness weighting of feature-map masks.
//!
//! Each tapped feature map yields a mask and a masked image whose score vector
//! `p_i` is compared to the original score vector `p_org`:
//!
//! ```text
//! sd_i = exp(-|p_org - p_i| / (2 sigma^2))
//! u_i  = sum_j |p_i - p_j|
//! w_i  = sd_i * u_i
//! S    = (1/N) sum_i w_i * mask_i
//! ```
//!
//! Distances are Euclidean over the full class-probability vector. `S` is
//! left unnormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::{generate_masked_set, MaskConfig, MaskedImage, SoftMask};
use crate::model::Classifier;
use crate::saliency::{Explainer, SaliencyMap};
use crate::tensor::{ScoreVector, Tensor};

pub const DEFAULT_SIGMA: f64 = 0.25;
pub const METHOD_TAG: &str = "sidu";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiduConfig {
    pub sigma: f64,
    pub mask: MaskConfig,
}

impl Default for SiduConfig {
    fn default() -> Self {
        SiduConfig {
            sigma: DEFAULT_SIGMA,
            mask: MaskConfig::default(),
        }
    }
}

impl SiduConfig {
    pub fn with_sigma(sigma: f64) -> Self {
        SiduConfig {
            sigma,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        if !self.mask.tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be finite, got {}", self.mask.tau)));
        }
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub sd: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn similarity_differences(
    p_org: &ScoreVector,
    p_masked: &[ScoreVector],
    sigma: f64,
) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let denom = 2.0 * sigma * sigma;
    p_masked
        .iter()
        .map(|p| {
            if p.class_count() != p_org.class_count() {
                return Err(Error::LengthMismatch {
                    what: "masked score vector",
                    expected: p_org.class_count(),
                    actual: p.class_count(),
                });
            }
            // Keep sd strictly positive even when the kernel underflows.
            Ok((-p_org.l2_distance(p) / denom).exp().max(f64::MIN_POSITIVE))
        })
        .collect()
}

pub fn uniqueness(p_masked: &[ScoreVector]) -> Vec<f64> {
    p_masked
        .iter()
        .map(|pi| p_masked.iter().map(|pj| pi.l2_distance(pj)).sum())
        .collect()
}

pub fn combine_weights(sd: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if sd.len() != u.len() {
        return Err(Error::LengthMismatch {
            what: "uniqueness values",
            expected: sd.len(),
            actual: u.len(),
        });
    }
    Ok(sd.iter().zip(u).map(|(s, u)| s * u).collect())
}

/// Weighted mean of the masks. Pixels are accumulated in mask order.
pub fn compose_saliency(weights: &[f64], masks: &[SoftMask], class_id: usize) -> Result<SaliencyMap> {
    if weights.len() != masks.len() {
        return Err(Error::LengthMismatch {
            what: "masks",
            expected: weights.len(),
            actual: masks.len(),
        });
    }
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("no masks to compose".into()))?;
    let (w, h) = (first.width(), first.height());
    if let Some(m) = masks.iter().find(|m| (m.width(), m.height()) != (w, h)) {
        return Err(Error::ShapeMismatch {
            expected: vec![h, w],
            actual: vec![m.height(), m.width()],
        });
    }
    if let Some(bad) = weights.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("weight {bad} is negative or non-finite")));
    }
    let mut acc = vec![0.0; w * h];
    for (weight, mask) in weights.iter().zip(masks) {
        for (a, m) in acc.iter_mut().zip(mask.values()) {
            *a += weight * m;
        }
    }
    let n = masks.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    SaliencyMap::new(w, h, acc, class_id, METHOD_TAG)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub feature_count: usize,
    pub predicted_class: usize,
    pub original_scores: ScoreVector,
    pub masked_scores: Vec<ScoreVector>,
    pub provider: String,
}

#[derive(Debug, Clone)]
pub struct SiduExplanation {
    pub saliency: SaliencyMap,
    pub weights: WeightSet,
    pub diagnostics: Diagnostics,
    pub masks: Vec<SoftMask>,
}

/// Runs the full pipeline for the model's predicted class.
pub fn explain(model: &dyn Classifier, image: &Tensor, cfg: &SiduConfig) -> Result<SiduExplanation> {
    cfg.validate()?;
    let set = generate_masked_set(model, image, &cfg.mask)?;
    let images: Vec<Tensor> = set
        .masked
        .into_iter()
        .map(|MaskedImage { pixels, .. }| pixels)
        .collect();
    let masked_scores = model.infer_scores_batch(&images)?;
    let p_org = set.original.scores;
    let sd = similarity_differences(&p_org, &masked_scores, cfg.sigma)?;
    let u = uniqueness(&masked_scores);
    let w = combine_weights(&sd, &u)?;
    let predicted_class = p_org.argmax();
    let saliency = compose_saliency(&w, &set.masks, predicted_class)?;
    log::debug!(
        "sidu: {} feature maps, predicted class {predicted_class}",
        set.masks.len()
    );
    Ok(SiduExplanation {
        saliency,
        weights: WeightSet { sd, u, w },
        diagnostics: Diagnostics {
            feature_count: set.masks.len(),
            predicted_class,
            original_scores: p_org,
            masked_scores,
            provider: model.provider(),
        },
        masks: set.masks,
    })
}

impl Explainer for SiduConfig {
    fn tag(&self) -> &str {
        METHOD_TAG
    }

    fn explain_map(&self, model: &dyn Classifier, image: &Tensor) -> Result<SaliencyMap> {
        explain(model, image, self).map(|e| e.saliency)
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "sigma": self.sigma, "tau": self.mask.tau })
    }
}
