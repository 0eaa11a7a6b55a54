//! Versioned JSON model envelopes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tree::{FlatNode, TreeNode};
use super::{Classifier, Family, ForestConfig, ForestModel, GbtConfig, GbtModel, LogRegConfig, LogRegModel, TrainedModel};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u64,
    family: Family,
    feature_dim: usize,
    provider_tag: String,
    params: Value,
    payload: Value,
}

#[derive(Serialize, Deserialize)]
struct LinearPayload {
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
struct ForestPayload {
    trees: Vec<Vec<FlatNode>>,
}

#[derive(Serialize, Deserialize)]
struct BoostPayload {
    base_score: f64,
    trees: Vec<Vec<FlatNode>>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn from_value<T: for<'de> Deserialize<'de>>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Envelope(format!("{what}: {e}")))
}

fn flatten(trees: &[TreeNode]) -> Vec<Vec<FlatNode>> {
    trees.iter().map(TreeNode::to_preorder).collect()
}

fn unflatten(trees: &[Vec<FlatNode>], feature_dim: usize) -> Result<Vec<TreeNode>> {
    trees.iter().map(|t| TreeNode::from_preorder(t, feature_dim)).collect()
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    let (params, payload) = match &model.classifier {
        Classifier::LogReg(m) => (
            to_value(&m.config)?,
            to_value(&LinearPayload {
                weights: m.weights.clone(),
                bias: m.bias,
            })?,
        ),
        Classifier::Forest(m) => (to_value(&m.config)?, to_value(&ForestPayload { trees: flatten(&m.trees) })?),
        Classifier::Gbt(m) => (
            to_value(&m.config)?,
            to_value(&BoostPayload {
                base_score: m.base_score,
                trees: flatten(&m.trees),
            })?,
        ),
    };
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        family: model.family(),
        feature_dim: model.feature_dim(),
        provider_tag: model.provider_tag.clone(),
        params,
        payload,
    };
    Ok(serde_json::to_string_pretty(&envelope)?)
}

pub fn model_from_json(json: &str) -> Result<TrainedModel> {
    let raw: Value = serde_json::from_str(json).map_err(|e| Error::Envelope(e.to_string()))?;
    match raw.get("format_version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => return Err(Error::Envelope("missing format_version".into())),
    }
    let env: Envelope = from_value(raw, "envelope")?;
    let d = env.feature_dim;
    if d == 0 {
        return Err(Error::Envelope("feature_dim must be positive".into()));
    }
    let classifier = match env.family {
        Family::Logreg => {
            let config: LogRegConfig = from_value(env.params, "params")?;
            let p: LinearPayload = from_value(env.payload, "payload")?;
            if p.weights.len() != d {
                return Err(Error::Envelope(format!("{} weights for feature_dim {d}", p.weights.len())));
            }
            if !p.bias.is_finite() || p.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Envelope("non-finite weight".into()));
            }
            Classifier::LogReg(LogRegModel {
                weights: p.weights,
                bias: p.bias,
                config,
            })
        }
        Family::Forest => {
            let config: ForestConfig = from_value(env.params, "params")?;
            let p: ForestPayload = from_value(env.payload, "payload")?;
            if p.trees.is_empty() {
                return Err(Error::Envelope("forest has no trees".into()));
            }
            Classifier::Forest(ForestModel {
                trees: unflatten(&p.trees, d)?,
                feature_dim: d,
                config,
            })
        }
        Family::Gbt => {
            let config: GbtConfig = from_value(env.params, "params")?;
            let p: BoostPayload = from_value(env.payload, "payload")?;
            if !p.base_score.is_finite() {
                return Err(Error::Envelope("non-finite base_score".into()));
            }
            Classifier::Gbt(GbtModel {
                base_score: p.base_score,
                trees: unflatten(&p.trees, d)?,
                feature_dim: d,
                config,
            })
        }
    };
    Ok(TrainedModel {
        classifier,
        provider_tag: env.provider_tag,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = model_to_json(model)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::super::{train, ClassifierConfig};
    use super::*;
    use crate::rng;
    use crate::types::{Label, Matrix};

    fn data(n: usize, d: usize, seed: u64) -> (Matrix, Vec<Label>) {
        let mut r = rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng::normal(&mut r)).collect()).collect();
        let y = rows
            .iter()
            .map(|v| if v[0] + v[1] * v[2] > 0.0 { Label::Malicious } else { Label::Benign })
            .collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn round_trip_bit_identical_all_families() {
        let (x, y) = data(200, 6, 3);
        for f in Family::ALL {
            let mut cfg = ClassifierConfig::default_for(f, 12);
            if let ClassifierConfig::Forest(c) = &mut cfg {
                c.n_trees = 20;
            }
            let model = TrainedModel {
                classifier: train(&x, &y, &cfg).unwrap(),
                provider_tag: "local-hash-6".into(),
            };
            let back = model_from_json(&model_to_json(&model).unwrap()).unwrap();
            assert_eq!(back, model);
            let a = model.predict_proba(&x).unwrap();
            let b = back.predict_proba(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let (x, y) = data(30, 3, 1);
        let model = TrainedModel {
            classifier: train(&x, &y, &ClassifierConfig::default_for(Family::Logreg, 0)).unwrap(),
            provider_tag: "t".into(),
        };
        let json = model_to_json(&model).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(model_from_json(&json), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn corrupt_envelopes_rejected() {
        let bad = [
            "not json",
            r#"{"format_version":1}"#,
            r#"{"format_version":1,"family":"logreg","feature_dim":2,"provider_tag":"t","params":{},"payload":{"weights":[1.0],"bias":0.0}}"#,
            r#"{"format_version":1,"family":"forest","feature_dim":2,"provider_tag":"t","params":{},"payload":{"trees":[]}}"#,
            r#"{"format_version":1,"family":"gbt","feature_dim":2,"provider_tag":"t","params":{},"payload":{"base_score":0.0,"trees":[[{"kind":"split","feature":5,"threshold":0.0},{"kind":"leaf","value":0.1},{"kind":"leaf","value":0.2}]]}}"#,
            r#"{"format_version":1,"family":"gbt","feature_dim":2,"provider_tag":"t","params":{},"payload":{"base_score":0.0,"trees":[[{"kind":"split","feature":0,"threshold":0.0},{"kind":"leaf","value":0.1}]]}}"#,
            r#"{"format_version":1,"family":"svm","feature_dim":2,"provider_tag":"t","params":{},"payload":{}}"#,
        ];
        for json in bad {
            let err = model_from_json(json).unwrap_err();
            assert!(matches!(err, Error::Envelope(_)), "{json}: {err:?}");
        }
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = data(50, 4, 8);
        let model = TrainedModel {
            classifier: train(&x, &y, &ClassifierConfig::default_for(Family::Gbt, 2)).unwrap(),
            provider_tag: "local-hash-4".into(),
        };
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        assert!(matches!(load_model(dir.path().join("missing.json")), Err(Error::Io { .. })));
    }
}
