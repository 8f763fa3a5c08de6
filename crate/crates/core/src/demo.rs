//! Seeded planted-patch classifier and labeled corpus.
//!
//! Images are 32x32 RGB with dim uniform noise and one 8x8 checkered patch
//! (6.25% of the image) painted in either the red or the green channel. The
//! model detects the checker texture per channel with a 3x3 alternating-sign
//! kernel, so its decisive evidence lies inside the patch by construction.
//! Class 0 is "red patch", class 1 "green patch", class 2 "no patch".
//!
//! The seed drives patch placement, colors, background noise and the weights
//! of the distractor channels that do not affect the decision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Conv2d, Dense, Layer, ModelSpec};
use crate::tensor::Tensor;

pub const IMAGE_SIZE: usize = 32;
pub const PATCH_SIZE: usize = 8;
pub const DEFAULT_IMAGE_COUNT: usize = 20;
pub const DEFAULT_SEED: u64 = 2020;
pub const CLASS_NAMES: [&str; 3] = ["red_patch", "green_patch", "no_patch"];

const FEATURE_MAPS: usize = 8;
const CONV1_CHANNELS: usize = 6;
/// Checker response above this level counts as texture; one unit above it saturates.
const DETECTOR_ONSET: f64 = 3.0;
const WHOLE_PATCH_ONSET: f64 = 7.6;
const PART_GAIN: f64 = 30.0;
const WHOLE_GAIN: f64 = 150.0;
const NONE_BIAS: f64 = 0.5;
const NOISE_LEVELS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PatchBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x..self.x + self.width).contains(&x) && (self.y..self.y + self.height).contains(&y)
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoLabel {
    pub id: String,
    pub label: usize,
    pub class_name: String,
    pub patch: PatchBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoImage {
    pub meta: DemoLabel,
    pub image: Tensor,
}

fn checker_sign(ky: usize, kx: usize) -> f64 {
    if (ky + kx).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// The planted-patch detector network for `seed`.
///
/// Layer 1 computes, per color, the checker response thresholded at two
/// levels so that their difference after pooling is the response clipped to
/// `[0, 1]`. Layer 2 turns each clipped detector into a part map (the detector
/// itself) and a whole-patch map that fires only where a full 3x3 block of
/// cells sees texture. The head adds a large bonus for the whole patch, so
/// confidence is high only when the entire patch is intact. Two seeded
/// distractor maps respond to overall brightness and are ignored by the head.
pub fn planted_patch_model(seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_64656c);
    let mut conv1 = vec![0.0; CONV1_CHANNELS * 3 * 9];
    let mut bias1 = vec![0.0; CONV1_CHANNELS];
    for color in 0..2 {
        for (k, onset) in [DETECTOR_ONSET, DETECTOR_ONSET + 1.0].into_iter().enumerate() {
            let oc = 2 * color + k;
            for ky in 0..3 {
                for kx in 0..3 {
                    conv1[((oc * 3 + color) * 3 + ky) * 3 + kx] = checker_sign(ky, kx);
                }
            }
            bias1[oc] = -onset;
        }
    }
    for oc in 4..CONV1_CHANNELS {
        for w in &mut conv1[oc * 27..(oc + 1) * 27] {
            *w = rng.gen_range(0.0..0.12);
        }
        bias1[oc] = -rng.gen_range(0.2..0.5);
    }

    let tap = |oc: usize, ic: usize, ky: usize, kx: usize| ((oc * CONV1_CHANNELS + ic) * 3 + ky) * 3 + kx;
    let mut conv2 = vec![0.0; FEATURE_MAPS * CONV1_CHANNELS * 9];
    let mut bias2 = vec![0.0; FEATURE_MAPS];
    for color in 0..2 {
        let (on, sat) = (2 * color, 2 * color + 1);
        let (exact, whole) = (2 * color, 2 * color + 1);
        conv2[tap(exact, on, 1, 1)] = 1.0;
        conv2[tap(exact, sat, 1, 1)] = -1.0;
        for ky in 0..3 {
            for kx in 0..3 {
                conv2[tap(whole, on, ky, kx)] = 1.0;
                conv2[tap(whole, sat, ky, kx)] = -1.0;
            }
        }
        bias2[whole] = -WHOLE_PATCH_ONSET;
    }
    for oc in 4..FEATURE_MAPS {
        for ic in 4..CONV1_CHANNELS {
            for ky in 0..3 {
                for kx in 0..3 {
                    conv2[tap(oc, ic, ky, kx)] = rng.gen_range(0.05..0.3);
                }
            }
        }
        bias2[oc] = -rng.gen_range(0.0..0.2);
    }

    let mut dense = vec![0.0; 3 * FEATURE_MAPS];
    for color in 0..2 {
        dense[color * FEATURE_MAPS + 2 * color] = PART_GAIN;
        dense[color * FEATURE_MAPS + 2 * color + 1] = WHOLE_GAIN;
    }
    let layers = vec![
        Layer::Conv2d(Conv2d::same(3, CONV1_CHANNELS, 3, conv1, bias1)),
        Layer::Relu,
        Layer::MaxPool2d { window: 2, stride: 2 },
        Layer::Conv2d(Conv2d::same(CONV1_CHANNELS, FEATURE_MAPS, 3, conv2, bias2)),
        Layer::Relu,
        Layer::GlobalAvgPool,
        Layer::Dense(Dense {
            inputs: FEATURE_MAPS,
            outputs: 3,
            weights: dense,
            bias: vec![0.0, 0.0, NONE_BIAS],
        }),
        Layer::Softmax,
    ];
    ModelSpec::new([3, IMAGE_SIZE, IMAGE_SIZE], layers, None).expect("demo model is well formed")
}

fn level(v: u32) -> f64 {
    v as f64 / 255.0
}

/// One noisy image with a checkered patch of `class` (0 red, 1 green) at `patch`.
pub fn render_patch_image(rng: &mut ChaCha8Rng, class: usize, patch: PatchBox) -> Tensor {
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let mut data = vec![0.0; 3 * plane];
    for v in data.iter_mut() {
        *v = level(rng.gen_range(0..NOISE_LEVELS));
    }
    let bright = level(rng.gen_range(235..=255));
    let dark = level(rng.gen_range(0..16));
    for y in patch.y..patch.y + patch.height {
        for x in patch.x..patch.x + patch.width {
            let p = y * IMAGE_SIZE + x;
            let on = (x + y) % 2 == 0;
            for ch in 0..3 {
                data[ch * plane + p] = if ch == class {
                    if on {
                        bright
                    } else {
                        dark
                    }
                } else {
                    level(rng.gen_range(0..20))
                };
            }
        }
    }
    Tensor::new(vec![3, IMAGE_SIZE, IMAGE_SIZE], data).expect("pixels in range")
}

/// `count` labeled images; labels alternate randomly between red and green.
pub fn demo_corpus(seed: u64, count: usize) -> Vec<DemoImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let label = rng.gen_range(0..2);
            let patch = PatchBox {
                x: rng.gen_range(0..=IMAGE_SIZE - PATCH_SIZE),
                y: rng.gen_range(0..=IMAGE_SIZE - PATCH_SIZE),
                width: PATCH_SIZE,
                height: PATCH_SIZE,
            };
            let image = render_patch_image(&mut rng, label, patch);
            DemoImage {
                meta: DemoLabel {
                    id: format!("demo_{i:03}"),
                    label,
                    class_name: CLASS_NAMES[label].to_string(),
                    patch,
                },
                image,
            }
        })
        .collect()
}
