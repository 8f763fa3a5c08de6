#![allow(dead_code)]

pub mod oracle;

use sidu_core::{Classifier, FeatureStack, Inference, ScoreVector, Tensor};

/// Returns the same scores for every input.
pub struct Constant {
    pub shape: [usize; 3],
    pub probs: Vec<f64>,
}

impl Classifier for Constant {
    fn input_shape(&self) -> [usize; 3] {
        self.shape
    }

    fn class_count(&self) -> usize {
        self.probs.len()
    }

    fn infer(&self, image: &Tensor) -> sidu_core::Result<Inference> {
        assert_eq!(image.shape(), &self.shape[..]);
        Ok(Inference {
            scores: ScoreVector::new(self.probs.clone(), 1e-9)?,
            features: FeatureStack::new(Tensor::filled(vec![1, 2, 2], 1.0))?,
        })
    }

    fn provider(&self) -> String {
        "test:constant".into()
    }
}

/// Two classes; class 0 probability is the mean of channel 0 inside `region`.
pub struct RegionMean {
    pub size: usize,
    pub region: (usize, usize, usize, usize),
}

impl Classifier for RegionMean {
    fn input_shape(&self) -> [usize; 3] {
        [1, self.size, self.size]
    }

    fn class_count(&self) -> usize {
        2
    }

    fn infer(&self, image: &Tensor) -> sidu_core::Result<Inference> {
        let (x0, y0, w, h) = self.region;
        let mut sum = 0.0;
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                sum += image.data()[y * self.size + x];
            }
        }
        let p = sum / (w * h) as f64;
        Ok(Inference {
            scores: ScoreVector::new(vec![p, 1.0 - p], 1e-9)?,
            features: FeatureStack::new(Tensor::filled(vec![1, 2, 2], p))?,
        })
    }

    fn provider(&self) -> String {
        "test:region-mean".into()
    }
}
