//! Saliency maps and their portable export format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tensor::Tensor;

/// Non-negative per-pixel importance for one explained class, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    pub class_id: usize,
    pub method_tag: String,
}

impl SaliencyMap {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        class_id: usize,
        method_tag: impl Into<String>,
    ) -> Result<Self> {
        if width * height != values.len() || values.is_empty() {
            return Err(Error::LengthMismatch {
                what: "saliency map",
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "saliency value {v} is negative or non-finite"
            )));
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
            class_id,
            method_tag: method_tag.into(),
        })
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

    /// Share of the total saliency mass falling where `inside(x, y)` holds.
    /// Zero for an all-zero map.
    pub fn mass_fraction(&self, inside: impl Fn(usize, usize) -> bool) -> f64 {
        let total: f64 = self.values.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut hit = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                if inside(x, y) {
                    hit += self.get(x, y);
                }
            }
        }
        hit / total
    }
}

/// A saliency method that can be run against any classifier.
pub trait Explainer: Sync {
    fn tag(&self) -> &str;

    fn explain_map(&self, model: &dyn Classifier, image: &Tensor) -> Result<SaliencyMap>;

    /// Method parameters echoed into export sidecars and reports.
    fn params(&self) -> serde_json::Value;
}

/// JSON sidecar written next to a raw float map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub width: usize,
    pub height: usize,
    pub class_id: usize,
    pub method_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Little-endian `f32` bytes of the map, row-major.
pub fn map_to_f32le(map: &SaliencyMap) -> Vec<u8> {
    map.values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

/// Writes `<stem>.f32` and `<stem>.json`.
pub fn export_map(map: &SaliencyMap, sidecar: &MapSidecar, dir: &Path, stem: &str) -> Result<()> {
    let raw = dir.join(format!("{stem}.f32"));
    std::fs::write(&raw, map_to_f32le(map)).map_err(|e| Error::io(&raw, e))?;
    let json = dir.join(format!("{stem}.json"));
    let body = serde_json::to_vec_pretty(sidecar).expect("sidecar serializes");
    std::fs::write(&json, body).map_err(|e| Error::io(&json, e))
}

pub fn import_map(raw: &Path, sidecar: &Path) -> Result<(SaliencyMap, MapSidecar)> {
    let meta_bytes = std::fs::read(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: MapSidecar = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::InvalidArgument(format!("bad sidecar {}: {e}", sidecar.display())))?;
    let bytes = std::fs::read(raw).map_err(|e| Error::io(raw, e))?;
    if bytes.len() != meta.width * meta.height * 4 {
        return Err(Error::LengthMismatch {
            what: "raw saliency file bytes",
            expected: meta.width * meta.height * 4,
            actual: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let map = SaliencyMap::new(meta.width, meta.height, values, meta.class_id, meta.method_tag.clone())?;
    Ok((map, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_values() {
        assert!(SaliencyMap::new(2, 1, vec![0.0, -1e-9], 0, "x").is_err());
        assert!(SaliencyMap::new(2, 1, vec![0.0], 0, "x").is_err());
    }

    #[test]
    fn export_round_trips_through_f32() {
        let dir = tempfile::tempdir().unwrap();
        let map = SaliencyMap::new(2, 2, vec![0.0, 0.25, 0.5, 1.5], 1, "sidu").unwrap();
        let side = MapSidecar {
            width: 2,
            height: 2,
            class_id: 1,
            method_tag: "sidu".into(),
            sigma: Some(0.25),
            tau: Some(0.5),
            extra: Default::default(),
        };
        export_map(&map, &side, dir.path(), "img.sidu").unwrap();
        let (back, meta) =
            import_map(&dir.path().join("img.sidu.f32"), &dir.path().join("img.sidu.json")).unwrap();
        assert_eq!(back, map);
        assert_eq!(meta, side);
    }

    #[test]
    fn mass_fraction_of_zero_map_is_zero() {
        let map = SaliencyMap::new(2, 2, vec![0.0; 4], 0, "x").unwrap();
        assert_eq!(map.mass_fraction(|_, _| true), 0.0);
        let map = SaliencyMap::new(2, 2, vec![1.0, 3.0, 0.0, 0.0], 0, "x").unwrap();
        assert_eq!(map.mass_fraction(|x, _| x == 1), 0.75);
    }
}
