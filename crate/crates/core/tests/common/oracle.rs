//! Deliberately naive reference implementation used to cross-check the
//! library: plain nested loops, no shared helpers with the crate under test.

#![allow(dead_code, clippy::needless_range_loop, clippy::manual_clamp)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sidu_core::model::{Conv2d, Dense, Layer};
use sidu_core::{ModelSpec, Tensor};

/// A small random CNN whose tapped layer has between 1 and `max_maps` channels.
pub fn random_model(rng: &mut ChaCha8Rng, max_maps: usize) -> ModelSpec {
    let channels = if rng.gen_bool(0.5) { 1 } else { 3 };
    let size = rng.gen_range(6..=14);
    let hidden = rng.gen_range(1..=6);
    let maps = rng.gen_range(1..=max_maps);
    let classes = rng.gen_range(2..=5);
    let mut w = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut layers = vec![
        Layer::Conv2d(Conv2d::same(channels, hidden, 3, w(hidden * channels * 9), w(hidden))),
        Layer::Relu,
    ];
    let pool = size >= 8;
    if pool {
        layers.push(Layer::MaxPool2d { window: 2, stride: 2 });
    }
    layers.push(Layer::Conv2d(Conv2d {
        in_channels: hidden,
        out_channels: maps,
        kernel: 3,
        stride: 1,
        padding: 1,
        weights: w(maps * hidden * 9),
        bias: w(maps),
    }));
    layers.push(Layer::Relu);
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Dense(Dense {
        inputs: maps,
        outputs: classes,
        weights: w(classes * maps).into_iter().map(|v| v * 4.0).collect(),
        bias: w(classes),
    }));
    layers.push(Layer::Softmax);
    ModelSpec::new([channels, size, size], layers, None).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Activations as `a[c][y][x]`, plus probabilities once a softmax is reached.
type Grid = Vec<Vec<Vec<f64>>>;

pub struct Forward {
    pub probs: Vec<f64>,
    pub tapped: Grid,
}

pub fn forward(model: &ModelSpec, image: &Tensor) -> Forward {
    let [c, h, w] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    let mut grid: Grid = (0..c)
        .map(|ch| (0..h).map(|y| (0..w).map(|x| image.data()[(ch * h + y) * w + x]).collect()).collect())
        .collect();
    let mut flat: Option<Vec<f64>> = None;
    let mut tapped = Grid::new();
    for (index, layer) in model.layers().iter().enumerate() {
        match layer {
            Layer::Conv2d(conv) => {
                let (ih, iw) = (grid[0].len() as isize, grid[0][0].len() as isize);
                let k = conv.kernel as isize;
                let p = conv.padding as isize;
                let s = conv.stride as isize;
                let oh = (ih + 2 * p - k) / s + 1;
                let ow = (iw + 2 * p - k) / s + 1;
                let mut out = vec![vec![vec![0.0; ow as usize]; oh as usize]; conv.out_channels];
                for oc in 0..conv.out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = conv.bias[oc];
                            for ic in 0..conv.in_channels {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let y = oy * s + ky - p;
                                        let x = ox * s + kx - p;
                                        if y < 0 || x < 0 || y >= ih || x >= iw {
                                            continue;
                                        }
                                        let wi = ((oc * conv.in_channels + ic) * conv.kernel + ky as usize)
                                            * conv.kernel
                                            + kx as usize;
                                        acc += conv.weights[wi] * grid[ic][y as usize][x as usize];
                                    }
                                }
                            }
                            out[oc][oy as usize][ox as usize] = acc;
                        }
                    }
                }
                grid = out;
            }
            Layer::Relu => match flat.as_mut() {
                Some(v) => v.iter_mut().for_each(|a| *a = a.max(0.0)),
                None => grid.iter_mut().flatten().flatten().for_each(|a| *a = a.max(0.0)),
            },
            Layer::MaxPool2d { window, stride } => {
                let (ih, iw) = (grid[0].len(), grid[0][0].len());
                let oh = (ih - window) / stride + 1;
                let ow = (iw - window) / stride + 1;
                grid = grid
                    .iter()
                    .map(|plane| {
                        (0..oh)
                            .map(|oy| {
                                (0..ow)
                                    .map(|ox| {
                                        let mut m = f64::NEG_INFINITY;
                                        for dy in 0..*window {
                                            for dx in 0..*window {
                                                m = m.max(plane[oy * stride + dy][ox * stride + dx]);
                                            }
                                        }
                                        m
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
            }
            Layer::GlobalAvgPool => {
                flat = Some(
                    grid.iter()
                        .map(|plane| {
                            let n = (plane.len() * plane[0].len()) as f64;
                            plane.iter().flatten().sum::<f64>() / n
                        })
                        .collect(),
                );
            }
            Layer::Dense(d) => {
                let input = flat.take().unwrap_or_else(|| grid.iter().flatten().flatten().copied().collect());
                flat = Some(
                    (0..d.outputs)
                        .map(|o| d.bias[o] + (0..d.inputs).map(|i| d.weights[o * d.inputs + i] * input[i]).sum::<f64>())
                        .collect(),
                );
            }
            Layer::Softmax => {
                let v = flat.as_mut().expect("softmax on flat input");
                let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = v.iter().map(|a| (a - m).exp()).sum();
                v.iter_mut().for_each(|a| *a = (*a - m).exp() / z);
            }
        }
        if index == model.tap_index() {
            tapped = grid.clone();
        }
    }
    Forward {
        probs: flat.expect("model ends in a flat output"),
        tapped,
    }
}

/// Bilinear sample of a binary grid at output pixel `(x, y)`, half-pixel centers.
fn bilinear(cells: &[Vec<f64>], x: usize, y: usize, w: usize, h: usize) -> f64 {
    let (nh, nw) = (cells.len(), cells[0].len());
    let coord = |i: usize, out: usize, n: usize| {
        let s = (i as f64 + 0.5) * n as f64 / out as f64 - 0.5;
        s.max(0.0).min((n - 1) as f64)
    };
    let sx = coord(x, w, nw);
    let sy = coord(y, h, nh);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(nw - 1), (y0 + 1).min(nh - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let v = cells[y0][x0] * (1.0 - fx) * (1.0 - fy)
        + cells[y0][x1] * fx * (1.0 - fy)
        + cells[y1][x0] * (1.0 - fx) * fy
        + cells[y1][x1] * fx * fy;
    v.max(0.0).min(1.0)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Saliency map, row-major, for the predicted class.
pub fn sidu(model: &ModelSpec, image: &Tensor, sigma: f64, tau: f64) -> Vec<f64> {
    let [c, h, w] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    let original = forward(model, image);
    let masks: Vec<Vec<f64>> = original
        .tapped
        .iter()
        .map(|map| {
            let cells: Vec<Vec<f64>> = map
                .iter()
                .map(|row| row.iter().map(|&a| if a > tau { 1.0 } else { 0.0 }).collect())
                .collect();
            let mut m = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    m.push(bilinear(&cells, x, y, w, h));
                }
            }
            m
        })
        .collect();
    let masked_probs: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| {
            let mut data = image.data().to_vec();
            for ch in 0..c {
                for i in 0..h * w {
                    data[ch * h * w + i] *= m[i];
                }
            }
            forward(model, &Tensor::new(vec![c, h, w], data).unwrap()).probs
        })
        .collect();
    let n = masks.len();
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let sd = (-distance(&original.probs, &masked_probs[i]) / (2.0 * sigma * sigma)).exp();
            let u: f64 = (0..n).map(|j| distance(&masked_probs[i], &masked_probs[j])).sum();
            sd * u
        })
        .collect();
    (0..h * w)
        .map(|p| (0..n).map(|i| weights[i] * masks[i][p]).sum::<f64>() / n as f64)
        .collect()
}
