//! JSON model files.

use std::path::Path;

use hyptree_core::booster::IterationRecord;
use hyptree_core::{Ensemble, LossKind, Node, Tree};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};
use crate::ingest::FeatureSpec;

pub const FORMAT_VERSION: u64 = 1;

/// On-disk model: the ensemble plus the column mapping needed to rebuild its
/// inputs from a CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u64,
    pub loss: LossKind,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub target: String,
    pub features: Vec<FeatureSpec>,
    pub trees: Vec<Tree>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training_log: Vec<IterationRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u64>,
}

impl ModelFile {
    pub fn new(ensemble: Ensemble, target: impl Into<String>, features: Vec<FeatureSpec>) -> Result<Self> {
        if features.len() != ensemble.n_features {
            return Err(Error::Data(format!(
                "model has {} inputs but {} feature descriptions",
                ensemble.n_features,
                features.len()
            )));
        }
        Ok(ModelFile {
            format_version: FORMAT_VERSION,
            loss: ensemble.loss,
            base_score: ensemble.base_score,
            learning_rate: ensemble.learning_rate,
            n_features: ensemble.n_features,
            target: target.into(),
            features,
            trees: ensemble.trees,
            training_log: ensemble.training_log,
        })
    }

    pub fn ensemble(&self) -> Ensemble {
        Ensemble {
            loss: self.loss,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            n_features: self.n_features,
            trees: self.trees.clone(),
            training_log: self.training_log.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    /// Parses a model, checking the format version before the body.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let json_error = |source| Error::Json { path: path.to_path_buf(), source };
        let probe: VersionProbe = serde_json::from_str(text).map_err(json_error)?;
        match probe.format_version {
            Some(FORMAT_VERSION) => {}
            Some(found) => return Err(Error::FormatVersion { path: path.to_path_buf(), found, expected: FORMAT_VERSION }),
            None => return Err(Error::Data(format!("{}: not a model file (no format_version)", path.display()))),
        }
        let model: ModelFile = serde_json::from_str(text).map_err(json_error)?;
        if model.features.len() != model.n_features {
            return Err(Error::Data(format!("{}: n_features does not match the feature list", path.display())));
        }
        for (i, tree) in model.trees.iter().enumerate() {
            tree.validate().map_err(|e| Error::Data(format!("{}: tree {i}: {e}", path.display())))?;
            let out_of_range = tree.nodes.iter().any(|n| matches!(n, Node::Split { feature, .. } if *feature >= model.n_features));
            if out_of_range {
                return Err(Error::Data(format!("{}: tree {i} splits on a feature index >= n_features", path.display())));
            }
        }
        Ok(model)
    }
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::report::write_atomic(path, model.to_json().as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    ModelFile::from_json(&text, path)
}
