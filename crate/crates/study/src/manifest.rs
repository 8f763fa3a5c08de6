//! Study definition: which image pairs are shown and, hidden from raters,
//! which method sits behind each label.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: String,
    /// Relative to `image_dir`; the map refs are relative to `map_dir`.
    pub image_ref: String,
    pub map_a_ref: String,
    pub map_b_ref: String,
    /// Index into `methods` of the method shown as label A.
    pub hidden_assignment: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub study_id: String,
    pub image_dir: PathBuf,
    pub map_dir: PathBuf,
    pub methods: [String; 2],
    pub blinding_seed: u64,
    /// Every item shows `methods[0]` as A when set.
    pub fixed_labels: bool,
    pub items: Vec<StudyItem>,
}

fn list_files(dir: &Path) -> Result<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| StudyError::io(dir, e))? {
        let entry = entry.map_err(|e| StudyError::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            names.insert(name.to_string());
        }
    }
    Ok(names)
}

fn is_url_safe(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Which method is label A for each of `count` items.
pub fn assign_labels(blinding_seed: u64, count: usize, fixed_labels: bool) -> Vec<usize> {
    if fixed_labels {
        return vec![0; count];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(blinding_seed);
    (0..count).map(|_| usize::from(rng.gen_bool(0.5))).collect()
}

/// Builds a study with one item per `<id>.png` in `image_dir`; `map_dir`
/// must hold one `<id>.<method>.png` per method. Items are sorted by id.
pub fn create_study(
    study_id: &str,
    image_dir: &Path,
    map_dir: &Path,
    methods: &[String],
    blinding_seed: u64,
    fixed_labels: bool,
) -> Result<StudyManifest> {
    let methods: [String; 2] = methods
        .to_vec()
        .try_into()
        .map_err(|m: Vec<String>| StudyError::MethodCount(m.len()))?;
    if methods[0] == methods[1] {
        return Err(StudyError::Manifest("the two methods must differ".into()));
    }
    if !is_url_safe(study_id) {
        return Err(StudyError::Manifest(format!("study id `{study_id}` must be a non-empty [A-Za-z0-9_-] string")));
    }
    let files = list_files(image_dir)?;
    let maps = if map_dir == image_dir { files.clone() } else { list_files(map_dir)? };
    let ids: Vec<String> = files
        .iter()
        .filter_map(|name| name.strip_suffix(".png"))
        .filter(|stem| !stem.contains('.'))
        .map(str::to_string)
        .collect();
    if ids.is_empty() {
        return Err(StudyError::NoImages(image_dir.to_path_buf()));
    }
    if let Some(bad) = ids.iter().find(|id| !is_url_safe(id)) {
        return Err(StudyError::Manifest(format!("image id `{bad}` must match [A-Za-z0-9_-]+")));
    }
    let map_name = |id: &str, method: &str| format!("{id}.{method}.png");
    let missing: Vec<String> = ids
        .iter()
        .filter(|id| methods.iter().any(|m| !maps.contains(&map_name(id, m))))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(StudyError::MissingMaps(missing));
    }
    let assignment = assign_labels(blinding_seed, ids.len(), fixed_labels);
    let items = ids
        .iter()
        .zip(assignment)
        .map(|(id, a)| StudyItem {
            item_id: id.clone(),
            image_ref: format!("{id}.png"),
            map_a_ref: map_name(id, &methods[a]),
            map_b_ref: map_name(id, &methods[1 - a]),
            hidden_assignment: a,
        })
        .collect();
    let canonical = |d: &Path| fs::canonicalize(d).map_err(|e| StudyError::io(d, e));
    Ok(StudyManifest {
        study_id: study_id.to_string(),
        image_dir: canonical(image_dir)?,
        map_dir: canonical(map_dir)?,
        methods,
        blinding_seed,
        fixed_labels,
        items,
    })
}

impl StudyManifest {
    pub fn item(&self, item_id: &str) -> Option<&StudyItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| StudyError::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| StudyError::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| StudyError::io(&path, e))?;
        let manifest: StudyManifest =
            serde_json::from_str(&text).map_err(|e| StudyError::Manifest(format!("{}: {e}", path.display())))?;
        if manifest.items.iter().any(|i| i.hidden_assignment > 1) {
            return Err(StudyError::Manifest("hidden_assignment must be 0 or 1".into()));
        }
        Ok(manifest)
    }

    /// Item indices in the order `rater` sees them; a fixed shuffle per rater.
    pub fn rater_order(&self, rater: &str) -> Vec<usize> {
        use rand::seq::SliceRandom;
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(rater.as_bytes());
        let salt = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.blinding_seed ^ salt));
        order
    }
}
