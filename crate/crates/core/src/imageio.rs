//! PNG conversion between 8-bit files and `[C, H, W]` tensors in `[0, 1]`.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loads a PNG as a 1- or 3-channel tensor.
pub fn load_image(path: impl AsRef<Path>, channels: usize) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match channels {
        1 => img.to_luma8().into_raw().into_iter().map(to_unit).collect(),
        3 => {
            let raw = img.to_rgb8().into_raw();
            let mut planes = vec![0.0; 3 * w * h];
            for (p, px) in raw.chunks_exact(3).enumerate() {
                for ch in 0..3 {
                    planes[ch * w * h + p] = to_unit(px[ch]);
                }
            }
            planes
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "cannot load an image with {channels} channels"
            )))
        }
    };
    Tensor::new(vec![channels, h, w], data)
}

fn to_unit(v: u8) -> f64 {
    v as f64 / 255.0
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Saves a 1- or 3-channel tensor as 8-bit PNG.
pub fn save_image(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = image.chw()?;
    let plane = h * w;
    let d = image.data();
    match c {
        1 => {
            let buf: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                Luma([to_byte(d[y as usize * w + x as usize])])
            });
            buf.save(path)?;
        }
        3 => {
            let buf: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                let p = y as usize * w + x as usize;
                Rgb([to_byte(d[p]), to_byte(d[plane + p]), to_byte(d[2 * plane + p])])
            });
            buf.save(path)?;
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "cannot save an image with {c} channels"
            )))
        }
    }
    Ok(())
}

/// Grayscale PNG of a row-major `[0, 1]` grid.
pub fn save_gray(values: &[f64], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let t = Tensor::new(vec![1, height, width], values.to_vec())?;
    save_image(&t, path)
}
