//! JSON model checkpoints: layer shapes plus flat parameter blocks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{MlpExtractor, SiModel, SoftmaxClassifier};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    /// Full layer chain of the extractor, input through embedding.
    extractor_dims: Vec<usize>,
    classes: usize,
    extractor_params: Vec<f64>,
    classifier_params: Vec<f64>,
}

const FORMAT: &str = "wjdot-model";
const VERSION: u32 = 1;

pub fn save_model(model: &SiModel, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format: FORMAT.into(),
        version: VERSION,
        extractor_dims: model.extractor.dims(),
        classes: model.classifier.classes(),
        extractor_params: model.extractor.params_flat(),
        classifier_params: model.classifier.params_flat(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Config(format!("cannot serialize model: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<SiModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(Error::Config(format!(
            "unsupported model format '{} {}'",
            file.format, file.version
        )));
    }
    let extractor = MlpExtractor::from_params(&file.extractor_dims, &file.extractor_params)?;
    let embed_dim = *file
        .extractor_dims
        .last()
        .ok_or_else(|| Error::Config("model checkpoint has no layers".into()))?;
    let classifier =
        SoftmaxClassifier::from_params(embed_dim, file.classes, &file.classifier_params)?;
    Ok(SiModel { extractor, classifier })
}
