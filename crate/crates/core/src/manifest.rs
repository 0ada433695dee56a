//! Dataset manifest: one JSON file listing every scene and the artifacts each
//! pipeline stage produced for it. Paths are stored relative to the manifest's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureOptions, VoxelGrid};
use crate::normalize::NormTransform;

const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub raw_ply: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<NormTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_ply: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_cameras: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered_ply: Option<PathBuf>,
    /// Set when the scene was uniformly subsampled instead of region-grown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_options: Option<FeatureOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<VoxelGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<FeatureLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl SceneEntry {
    /// Paths this entry references, with the field they come from.
    pub fn paths(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![("raw_ply", self.raw_ply.as_path())];
        let optional = [
            ("cameras", &self.cameras),
            ("mask", &self.mask),
            ("normalized_ply", &self.normalized_ply),
            ("normalized_cameras", &self.normalized_cameras),
            ("filtered_ply", &self.filtered_ply),
            ("features", &self.features),
        ];
        out.extend(optional.into_iter().filter_map(|(k, p)| p.as_deref().map(|p| (k, p))));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub scenes: Vec<SceneEntry>,
}

impl Default for SceneManifest {
    fn default() -> Self {
        SceneManifest { version: VERSION, scenes: Vec::new() }
    }
}

impl SceneManifest {
    /// Reads a manifest and checks that every file it references exists.
    pub fn load(path: &Path) -> Result<Self> {
        let m: SceneManifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.version != VERSION {
            return Err(Error::Config(format!("unsupported manifest version {}", m.version)));
        }
        m.check_files(&base_dir(path))?;
        Ok(m)
    }

    /// Like [`SceneManifest::load`] but yields an empty manifest when the file is absent.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    pub fn check_files(&self, base: &Path) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for e in &self.scenes {
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("scene name {} appears twice", e.name)));
            }
            for (field, p) in e.paths() {
                let full = base.join(p);
                if !full.is_file() {
                    return Err(Error::Config(format!(
                        "scene {}: {field} {} does not exist",
                        e.name,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&SceneEntry> {
        self.scenes.iter().find(|e| e.name == name)
    }

    /// The common Gaussian count, feature options and voxel grid of a
    /// training set.
    pub fn training_shape(&self) -> Result<(usize, FeatureOptions, VoxelGrid)> {
        let first = self.scenes.first().ok_or_else(|| Error::Config("the manifest lists no scenes".into()))?;
        let mut shape = None;
        for e in &self.scenes {
            let (Some(n), Some(opts), Some(grid), Some(_)) = (e.n, e.feature_options, e.grid, &e.filtered_ply) else {
                return Err(Error::Config(format!("scene {} has not been filtered and featurized", e.name)));
            };
            match shape {
                None => shape = Some((n, opts, grid)),
                Some(s0) if s0 != (n, opts, grid) => {
                    return Err(Error::Config(format!(
                        "scenes {} and {} disagree on N or feature options",
                        first.name, e.name
                    )))
                }
                _ => {}
            }
        }
        Ok(shape.unwrap())
    }
}

/// Directory manifest-relative paths resolve against.
pub fn base_dir(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, n: usize) -> SceneEntry {
        SceneEntry {
            name: name.into(),
            raw_ply: "a.ply".into(),
            filtered_ply: Some("a.ply".into()),
            feature_options: Some(FeatureOptions::default()),
            grid: Some(VoxelGrid::default()),
            n: Some(n),
            ..SceneEntry::default()
        }
    }

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.ply"), b"x").unwrap();
        let path = dir.path().join("m.json");
        let m = SceneManifest { scenes: vec![entry("s0", 8), entry("s1", 8)], ..Default::default() };
        m.save(&path).unwrap();
        let back = SceneManifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.training_shape().unwrap().0, 8);

        let mut missing = m.clone();
        missing.scenes[1].mask = Some("nope.pgm".into());
        missing.save(&path).unwrap();
        assert!(matches!(SceneManifest::load(&path), Err(Error::Config(_))));

        let dup = SceneManifest { scenes: vec![entry("s0", 8), entry("s0", 8)], ..Default::default() };
        assert!(dup.check_files(dir.path()).is_err());
    }

    #[test]
    fn training_shape_errors() {
        assert!(SceneManifest::default().training_shape().is_err());
        let mixed = SceneManifest { scenes: vec![entry("a", 8), entry("b", 16)], ..Default::default() };
        assert!(matches!(mixed.training_shape(), Err(Error::Config(_))));
        let raw = SceneManifest { scenes: vec![SceneEntry { name: "r".into(), ..Default::default() }], ..Default::default() };
        assert!(raw.training_shape().is_err());
    }
}
