use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::math::{PoseRecord, Similarity, Vec3};
use crate::scene::SceneError;

use super::CorrespondenceSet;

/// Parses lines of `u v X Y Z`; blank lines and `#` comments are skipped.
pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet, String> {
    let mut set = CorrespondenceSet::default();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", no + 1))?;
        if vals.len() != 5 || vals.iter().any(|v| !v.is_finite()) {
            return Err(format!("line {}: expected five finite numbers `u v X Y Z`", no + 1));
        }
        set.pixels.push((vals[0], vals[1]));
        set.object_points.push(Vec3::new(vals[2], vals[3], vals[4]));
    }
    Ok(set)
}

pub fn read_correspondences(path: &Path) -> Result<CorrespondenceSet, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_correspondences(&text).map_err(|message| SceneError::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn format_correspondences(set: &CorrespondenceSet) -> String {
    let mut s = String::from("# u v X Y Z\n");
    for (&(u, v), p) in set.pixels.iter().zip(&set.object_points) {
        let _ = writeln!(s, "{u} {v} {} {} {}", p.x, p.y, p.z);
    }
    s
}

/// One registered object in the poses document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub id: String,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    /// Loss terms reached by registration; absent for poses given in the
    /// config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub objects: Vec<PoseEntry>,
}

impl PoseEntry {
    pub fn new(id: &str, pose: &Similarity) -> Self {
        let r = PoseRecord::from(pose);
        Self {
            id: id.to_string(),
            rotation: r.rotation,
            translation: r.translation,
            scale: r.scale,
            dice: None,
            depth: None,
            loss: None,
        }
    }

    pub fn similarity(&self) -> Similarity {
        Similarity::from(&PoseRecord {
            rotation: self.rotation,
            translation: self.translation,
            scale: self.scale,
        })
    }
}

impl PoseFile {
    pub fn get(&self, id: &str) -> Option<&PoseEntry> {
        self.objects.iter().find(|e| e.id == id)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pose file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
