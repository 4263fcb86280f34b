//! Minibatch training and the model file format.

use serde::{Deserialize, Serialize};

use crate::imitation::dataset::DatasetRow;
use crate::imitation::features::{FeatureSpec, FEATURE_LEN};
use crate::imitation::mlp::{Adam, AdamConfig, Layer, Mlp, MlpError};
use crate::rng::{Channel, NoiseStream};

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_LAYERS: [usize; 5] = [FEATURE_LEN, 64, 32, 16, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layers: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS.to_vec(),
            epochs: 4,
            batch: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Per-feature min-max scaling fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn identity(len: usize) -> Self {
        Self {
            min: vec![0.0; len],
            max: vec![1.0; len],
        }
    }

    pub fn fit(rows: &[DatasetRow]) -> Self {
        let len = rows.first().map_or(0, |r| r.features.len());
        let mut m = Self {
            min: vec![f64::INFINITY; len],
            max: vec![f64::NEG_INFINITY; len],
        };
        for r in rows {
            for (k, &v) in r.features.iter().enumerate() {
                m.min[k] = m.min[k].min(v);
                m.max[k] = m.max[k].max(v);
            }
        }
        m
    }

    /// Maps the fitted range to `[0, 1]`; constant features map to 0. Values
    /// outside the fitted range are limited to `[-1, 2]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(-1.0, 2.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Network plus its input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp<f64>,
    pub scale: MinMax,
}

impl Policy {
    /// `(steering, throttle)` clamped to `[-1, 1]`.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.net.predict(&self.scale.apply(features))
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: Policy,
    /// Mean training loss of each epoch, weighted by batch size.
    pub loss_curve: Vec<f64>,
}

/// Trains from `init` (or a fresh Glorot initialization from `config.seed`
/// with scaling fitted to `rows`). Rows are reshuffled every epoch from the
/// same seeded stream.
pub fn train(
    rows: &[DatasetRow],
    config: &TrainConfig,
    init: Option<Policy>,
) -> Result<TrainResult, MlpError> {
    let mut rng = NoiseStream::new(config.seed, Channel::Training);
    let Policy {
        net: mut model,
        scale,
    } = match init {
        Some(p) => p,
        None => Policy {
            net: Mlp::init(&config.layers, &mut rng)?,
            scale: MinMax::fit(rows),
        },
    };
    let mut loss_curve = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainResult {
            policy: Policy { net: model, scale },
            loss_curve,
        });
    }
    if rows.is_empty() || config.batch == 0 {
        return Err(MlpError::Batch);
    }
    let inputs: Vec<Vec<f64>> = rows.iter().map(|r| scale.apply(&r.features)).collect();
    let targets: Vec<[f64; 2]> = rows.iter().map(DatasetRow::target).collect();
    let mut adam = Adam::new(&model, config.adam);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<&[f64]> = chunk.iter().map(|&i| targets[i].as_slice()).collect();
            let (grad, loss) = model.backward(&xs, &ys)?;
            total += loss * chunk.len() as f64;
            adam.step(&mut model, &grad);
        }
        loss_curve.push(total / rows.len() as f64);
    }
    Ok(TrainResult {
        policy: Policy { net: model, scale },
        loss_curve,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported model format_version {0}")]
    Version(u32),
    #[error("model document is inconsistent: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub rows: usize,
    pub loss_curve: Vec<f64>,
}

/// On-disk model: layer sizes, row-major weights, features and training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    /// `weights[l][out][in]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub hidden_activation: String,
    pub features: FeatureSpec,
    /// Min-max input scaling applied after featurization.
    pub input_scale: MinMax,
    pub metadata: ModelMetadata,
}

impl ModelDoc {
    pub fn new(policy: &Policy, features: FeatureSpec, metadata: ModelMetadata) -> Self {
        let model = &policy.net;
        Self {
            format_version: MODEL_FORMAT_VERSION,
            layer_sizes: model.sizes(),
            weights: model
                .layers
                .iter()
                .map(|l| l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: model.layers.iter().map(|l| l.biases.clone()).collect(),
            hidden_activation: "tanh".into(),
            features,
            input_scale: policy.scale.clone(),
            metadata,
        }
    }

    pub fn policy(&self) -> Result<Policy, ModelError> {
        let net = self.model()?;
        let n = net.input_len();
        if self.input_scale.min.len() != n || self.input_scale.max.len() != n {
            return Err(ModelError::Shape(format!(
                "input scaling does not have {n} entries"
            )));
        }
        Ok(Policy {
            net,
            scale: self.input_scale.clone(),
        })
    }

    pub fn model(&self) -> Result<Mlp<f64>, ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version(self.format_version));
        }
        let shape = |m: String| Err(ModelError::Shape(m));
        let n = self.layer_sizes.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return shape(format!(
                "{n} layer sizes for {} weight matrices",
                self.weights.len()
            ));
        }
        let mut layers = Vec::with_capacity(n - 1);
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (inputs, outputs) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            if w.len() != outputs || w.iter().any(|r| r.len() != inputs) || b.len() != outputs {
                return shape(format!("layer {k} is not {outputs}x{inputs}"));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: w.concat(),
                biases: b.clone(),
            });
        }
        let m = Mlp { layers };
        if !m.is_finite() {
            return shape("non-finite parameter".into());
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: Self = serde_json::from_str(text)?;
        doc.policy()?;
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ModelError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_rows(n: usize, seed: u64) -> Vec<DatasetRow> {
        let mut rng = NoiseStream::new(seed, Channel::Teleop);
        (0..n)
            .map(|k| {
                let features: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.uniform(0.0, 1.0)).collect();
                DatasetRow {
                    label_steering: 0.5 * (features[3] + features[20]),
                    label_throttle: 0.5,
                    features,
                    t: k as f64,
                    lap_id: 0,
                }
            })
            .collect()
    }

    #[test]
    fn min_max_scaling() {
        let mut rows = toy_rows(2, 0);
        rows[0].features[0] = 0.2;
        rows[1].features[0] = 0.6;
        rows[0].features[1] = 0.3;
        rows[1].features[1] = 0.3;
        let s = MinMax::fit(&rows);
        let y = s.apply(&[0.4, 0.3]);
        assert!((y[0] - 0.5).abs() < 1e-15);
        assert_eq!(y[1], 0.0);
        assert_eq!(s.apply(&[5.0])[0], 2.0);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let net = Mlp::init(
            &[FEATURE_LEN, 4, 2],
            &mut NoiseStream::new(1, Channel::Training),
        )
        .unwrap();
        let init = Policy {
            net,
            scale: MinMax::identity(FEATURE_LEN),
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(&[], &cfg, Some(init.clone())).unwrap();
        assert_eq!(out.policy, init);
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn toy_mapping_is_learned() {
        let rows = toy_rows(4000, 2);
        let cfg = TrainConfig {
            seed: 9,
            ..Default::default()
        };
        let a = train(&rows, &cfg, None).unwrap();
        assert_eq!(a.loss_curve.len(), 4);
        assert!(
            a.loss_curve[3] < 0.1 * a.loss_curve[0],
            "{:?}",
            a.loss_curve
        );
        let b = train(&rows, &cfg, None).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn model_document_round_trip() {
        let m = Mlp::init(
            &[FEATURE_LEN, 5, 3, 2],
            &mut NoiseStream::new(4, Channel::Training),
        )
        .unwrap();
        let meta = ModelMetadata {
            seed: 4,
            epochs: 0,
            batch: 64,
            lr: 1e-3,
            rows: 0,
            loss_curve: vec![],
        };
        let p = Policy {
            net: m.clone(),
            scale: MinMax::identity(FEATURE_LEN),
        };
        let doc = ModelDoc::new(&p, FeatureSpec::default(), meta);
        assert_eq!(doc.weights[0].len(), 5);
        assert_eq!(doc.weights[0][0].len(), FEATURE_LEN);
        let back = ModelDoc::from_json(&doc.to_json()).unwrap();
        assert_eq!(back.model().unwrap(), m);
        assert_eq!(back.policy().unwrap(), p);
        let mut bad_scale = doc.clone();
        bad_scale.input_scale.min.pop();
        assert!(bad_scale.policy().is_err());
        let mut broken = doc.clone();
        broken.weights[1].pop();
        assert!(broken.model().is_err());
    }
}
