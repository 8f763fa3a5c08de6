//! Insertion and deletion faithfulness curves.
//!
//! Pixels are visited in decreasing saliency (row-major order breaks ties).
//! Deletion starts from the intact image and overwrites ranked pixels with a
//! substrate; insertion starts from a degraded base and restores them. Each
//! curve records the probability of the intact image's predicted class and is
//! summarized by its trapezoidal area.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::saliency::{Explainer, SaliencyMap};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Substrate {
    Zero,
    ChannelMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InsertionBase {
    /// Gaussian blur; `radius` is the kernel standard deviation in pixels,
    /// defaulting to 5% of the shorter image side.
    GaussianBlur { radius: Option<f64> },
    ChannelMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub step_fraction: f64,
    pub deletion_substrate: Substrate,
    pub insertion_base: InsertionBase,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            step_fraction: 0.01,
            deletion_substrate: Substrate::ChannelMean,
            insertion_base: InsertionBase::GaussianBlur { radius: None },
        }
    }
}

impl PerturbConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step fraction must be in (0, 1], got {}",
                self.step_fraction
            )));
        }
        if let InsertionBase::GaussianBlur { radius: Some(r) } = self.insertion_base {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid blur radius {r}")));
            }
        }
        Ok(())
    }

    /// Pixel counts perturbed at each step, from 0 to `total`.
    fn step_counts(&self, total: usize) -> Vec<usize> {
        let steps = (1.0 / self.step_fraction - 1e-9).ceil().max(1.0) as usize;
        (0..=steps)
            .map(|k| {
                if k == steps {
                    total
                } else {
                    ((k as f64 * self.step_fraction).min(1.0) * total as f64).round() as usize
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub fractions: Vec<f64>,
    pub probs: Vec<f64>,
    pub auc: f64,
}

impl EvalCurve {
    pub fn new(fractions: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let auc = auc(&fractions, &probs)?;
        Ok(EvalCurve {
            fractions,
            probs,
            auc,
        })
    }
}

/// Trapezoidal area under `probs` over non-decreasing `fractions` in `[0, 1]`.
pub fn auc(fractions: &[f64], probs: &[f64]) -> Result<f64> {
    if fractions.len() != probs.len() {
        return Err(Error::LengthMismatch {
            what: "curve probabilities",
            expected: fractions.len(),
            actual: probs.len(),
        });
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!("fraction {f} outside [0, 1]")));
    }
    if let Some(i) = fractions.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(format!(
            "fractions not monotone at index {}: {} after {}",
            i + 1,
            fractions[i + 1],
            fractions[i]
        )));
    }
    Ok(fractions
        .windows(2)
        .zip(probs.windows(2))
        .map(|(f, p)| (f[1] - f[0]) * (p[0] + p[1]) / 2.0)
        .sum())
}

/// Flat pixel indices by decreasing saliency; ties keep row-major order.
pub fn rank_pixels(saliency: &SaliencyMap) -> Vec<usize> {
    let values = saliency.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn channel_means(image: &Tensor) -> Vec<f64> {
    let (_, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    image
        .data()
        .chunks(h * w)
        .map(|plane| plane.iter().sum::<f64>() / (h * w) as f64)
        .collect()
}

fn fill_channels(image: &Tensor, per_channel: &[f64]) -> Tensor {
    let plane = image.shape()[1] * image.shape()[2];
    let data = per_channel
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, plane))
        .collect();
    Tensor::from_parts(image.shape().to_vec(), data)
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if sigma <= 0.0 {
        return Ok(image.clone());
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let mut out = Vec::with_capacity(c * h * w);
    let mut tmp = vec![0.0; h * w];
    for plane in image.data().chunks(h * w) {
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| {
                        let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                        kv * plane[y * w + sx]
                    })
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| {
                        let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                        kv * tmp[sy * w + x]
                    })
                    .sum();
                out.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(Tensor::from_parts(image.shape().to_vec(), out))
}

fn deletion_substrate(image: &Tensor, substrate: Substrate) -> Tensor {
    match substrate {
        Substrate::Zero => Tensor::zeros(image.shape().to_vec()),
        Substrate::ChannelMean => fill_channels(image, &channel_means(image)),
    }
}

fn insertion_start(image: &Tensor, base: InsertionBase) -> Result<Tensor> {
    match base {
        InsertionBase::ChannelMean => Ok(fill_channels(image, &channel_means(image))),
        InsertionBase::GaussianBlur { radius } => {
            let (_, h, w) = image.chw()?;
            let sigma = radius.unwrap_or(0.05 * h.min(w) as f64);
            gaussian_blur(image, sigma)
        }
    }
}

/// Walks from `start` towards `target`, copying ranked pixels in all channels.
fn progressive_curve(
    model: &dyn Classifier,
    class: usize,
    start: &Tensor,
    target: &Tensor,
    order: &[usize],
    cfg: &PerturbConfig,
) -> Result<EvalCurve> {
    let (_, h, w) = start.chw()?;
    let plane = h * w;
    let counts = cfg.step_counts(plane);
    let mut current = start.clone();
    let mut done = 0;
    let mut images = Vec::with_capacity(counts.len());
    for &count in &counts {
        for &px in &order[done..count] {
            for ch in 0..start.shape()[0] {
                current.data_mut()[ch * plane + px] = target.data()[ch * plane + px];
            }
        }
        done = count;
        images.push(current.clone());
    }
    let scores = model.infer_scores_batch(&images)?;
    let fractions = counts.iter().map(|&c| c as f64 / plane as f64).collect();
    let probs = scores.iter().map(|s| s.get(class)).collect();
    EvalCurve::new(fractions, probs)
}

fn check_dims(image: &Tensor, saliency: &SaliencyMap) -> Result<()> {
    let (c, h, w) = image.chw()?;
    if (saliency.width(), saliency.height()) != (w, h) {
        return Err(Error::ShapeMismatch {
            expected: vec![c, saliency.height(), saliency.width()],
            actual: image.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn deletion_curve(
    model: &dyn Classifier,
    image: &Tensor,
    saliency: &SaliencyMap,
    cfg: &PerturbConfig,
) -> Result<EvalCurve> {
    cfg.validate()?;
    check_dims(image, saliency)?;
    let class = model.infer(image)?.scores.argmax();
    let substrate = deletion_substrate(image, cfg.deletion_substrate);
    progressive_curve(model, class, image, &substrate, &rank_pixels(saliency), cfg)
}

pub fn insertion_curve(
    model: &dyn Classifier,
    image: &Tensor,
    saliency: &SaliencyMap,
    cfg: &PerturbConfig,
) -> Result<EvalCurve> {
    cfg.validate()?;
    check_dims(image, saliency)?;
    let class = model.infer(image)?.scores.argmax();
    let base = insertion_start(image, cfg.insertion_base)?;
    progressive_curve(model, class, &base, image, &rank_pixels(saliency), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub image_id: String,
    pub insertion_auc: f64,
    pub deletion_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub params: serde_json::Value,
    pub image_count: usize,
    pub mean_insertion_auc: f64,
    pub mean_deletion_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// How per-image AUCs are aggregated into the summary.
    pub aggregation: String,
    pub perturbation: PerturbConfig,
    pub provider: String,
    pub methods: Vec<MethodSummary>,
    pub rows: Vec<ReportRow>,
}

impl ComparisonReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// CSV with columns `method,image_id,insertion_auc,deletion_auc`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

/// Mean insertion/deletion AUC per method over `images` (id, image) pairs.
pub fn compare_methods(
    model: &dyn Classifier,
    images: &[(String, Tensor)],
    methods: &[&dyn Explainer],
    cfg: &PerturbConfig,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to evaluate".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for method in methods {
        let method_rows: Vec<ReportRow> = images
            .par_iter()
            .map(|(id, image)| {
                let map = method.explain_map(model, image)?;
                let ins = insertion_curve(model, image, &map, cfg)?;
                let del = deletion_curve(model, image, &map, cfg)?;
                log::info!(
                    "{} {id}: insertion {:.5} deletion {:.5}",
                    method.tag(),
                    ins.auc,
                    del.auc
                );
                Ok(ReportRow {
                    method: method.tag().to_string(),
                    image_id: id.clone(),
                    insertion_auc: ins.auc,
                    deletion_auc: del.auc,
                })
            })
            .collect::<Result<_>>()?;
        let n = method_rows.len() as f64;
        summaries.push(MethodSummary {
            method: method.tag().to_string(),
            params: method.params(),
            image_count: method_rows.len(),
            mean_insertion_auc: method_rows.iter().map(|r| r.insertion_auc).sum::<f64>() / n,
            mean_deletion_auc: method_rows.iter().map(|r| r.deletion_auc).sum::<f64>() / n,
        });
        rows.extend(method_rows);
    }
    Ok(ComparisonReport {
        aggregation: "arithmetic mean of per-image AUCs".into(),
        perturbation: *cfg,
        provider: model.provider(),
        methods: summaries,
        rows,
    })
}
