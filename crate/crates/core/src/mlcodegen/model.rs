use std::path::Path;

use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MlpClassifier,
    MlpRegressor,
    SvmClassifier,
    SvmRegressor,
}

impl ModelKind {
    pub fn is_classifier(self) -> bool {
        matches!(self, ModelKind::MlpClassifier | ModelKind::SvmClassifier)
    }

    pub fn is_mlp(self) -> bool {
        matches!(self, ModelKind::MlpClassifier | ModelKind::MlpRegressor)
    }
}

/// A dense layer: `weights[out][in]`, `biases[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBody {
    pub layers: Vec<DenseLayer>,
}

/// One linear decision function. For one-vs-one classifiers a positive
/// decision votes for class index `pos`, otherwise for `neg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmPair {
    pub pos: usize,
    pub neg: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmBody {
    pub pairs: Vec<SvmPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Held-out rows, already normalised to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSplit {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
}

/// A trained floating-point model as exchanged with the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatModel {
    pub format_version: u32,
    pub id: String,
    pub dataset: String,
    pub kind: ModelKind,
    pub n_features: usize,
    /// Class labels for classifiers; empty for regressors.
    #[serde(default)]
    pub classes: Vec<i64>,
    pub normalization: Normalization,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm: Option<SvmBody>,
    /// Accuracy of the floating-point model on the test split, in percent,
    /// as recorded by the trainer.
    pub float_accuracy: f64,
    pub test: TestSplit,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("model `{id}`: {message}")]
    Invalid { id: String, message: String },
}

impl FloatModel {
    pub fn from_json(text: &str) -> Result<FloatModel, ModelError> {
        let model: FloatModel = serde_json::from_str(text).map_err(|source| ModelError::Json {
            path: "<input>".into(),
            source,
        })?;
        model.check()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<FloatModel, ModelError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: shown.clone(),
            source,
        })?;
        let model: FloatModel = serde_json::from_str(&text).map_err(|source| ModelError::Json {
            path: shown,
            source,
        })?;
        model.check()?;
        Ok(model)
    }

    pub fn mlp_layers(&self) -> Option<(&DenseLayer, &DenseLayer)> {
        let layers = &self.mlp.as_ref()?.layers;
        Some((&layers[0], &layers[1]))
    }

    pub fn svm_pairs(&self) -> Option<&[SvmPair]> {
        self.svm.as_ref().map(|s| s.pairs.as_slice())
    }

    fn invalid(&self, message: impl Into<String>) -> ModelError {
        ModelError::Invalid {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    /// Structural validation of the schema invariants.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(self.invalid(format!(
                "format_version {} unsupported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.n_features == 0 {
            return Err(self.invalid("n_features must be positive"));
        }
        if self.normalization.min.len() != self.n_features
            || self.normalization.max.len() != self.n_features
        {
            return Err(self.invalid("normalization vectors must have n_features entries"));
        }
        let n_classes = self.classes.len();
        if self.kind.is_classifier() && n_classes < 2 {
            return Err(self.invalid("classifiers need at least two classes"));
        }
        if !self.kind.is_classifier() && n_classes != 0 {
            return Err(self.invalid("regressors must not list classes"));
        }
        let finite = |v: &f64| v.is_finite();
        match (self.kind.is_mlp(), &self.mlp, &self.svm) {
            (true, Some(mlp), None) => {
                if mlp.layers.len() != 2 {
                    return Err(
                        self.invalid("an MLP needs exactly one hidden and one output layer")
                    );
                }
                let (hidden, out) = (&mlp.layers[0], &mlp.layers[1]);
                for (name, layer, inputs) in [
                    ("hidden", hidden, self.n_features),
                    ("output", out, hidden.outputs()),
                ] {
                    if layer.outputs() == 0 || layer.weights.len() != layer.outputs() {
                        return Err(
                            self.invalid(format!("{name} layer: weights and biases disagree"))
                        );
                    }
                    if layer.weights.iter().any(|row| row.len() != inputs) {
                        return Err(
                            self.invalid(format!("{name} layer: rows must have {inputs} weights"))
                        );
                    }
                    if !layer.weights.iter().flatten().all(finite)
                        || !layer.biases.iter().all(finite)
                    {
                        return Err(self.invalid(format!("{name} layer: non-finite parameter")));
                    }
                }
                let want = if self.kind.is_classifier() {
                    n_classes
                } else {
                    1
                };
                if out.outputs() != want {
                    return Err(self.invalid(format!("output layer must have {want} neurons")));
                }
            }
            (false, None, Some(svm)) => {
                if svm.pairs.is_empty() {
                    return Err(self.invalid("an SVM needs at least one decision function"));
                }
                if !self.kind.is_classifier() && svm.pairs.len() != 1 {
                    return Err(self.invalid("an SVM regressor has exactly one decision function"));
                }
                for p in &svm.pairs {
                    if p.weights.len() != self.n_features {
                        return Err(self.invalid("SVM weights must have n_features entries"));
                    }
                    if !p.weights.iter().all(finite) || !p.bias.is_finite() {
                        return Err(self.invalid("SVM: non-finite parameter"));
                    }
                    if self.kind.is_classifier()
                        && (p.pos >= n_classes || p.neg >= n_classes || p.pos == p.neg)
                    {
                        return Err(self.invalid("SVM pair class indices out of range"));
                    }
                }
            }
            _ => return Err(self.invalid("kind does not match the model body")),
        }
        if self.test.features.len() != self.test.labels.len() {
            return Err(self.invalid("test features and labels differ in length"));
        }
        if self
            .test
            .features
            .iter()
            .any(|row| row.len() != self.n_features)
        {
            return Err(self.invalid("test rows must have n_features values"));
        }
        if self
            .test
            .features
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(self.invalid("test features must be normalised to [0, 1]"));
        }
        if self.kind.is_classifier() && self.test.labels.iter().any(|l| !self.classes.contains(l)) {
            return Err(self.invalid("test label not among the classes"));
        }
        Ok(())
    }
}
