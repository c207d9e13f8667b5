//! Toy-scale victim training: Adam on cross-entropy over labeled clouds.
//! Single-threaded and bit-deterministic for a fixed seed.

use rand::seq::SliceRandom;

use super::{argmax, ModelGrad, VictimError, VictimModel};
use crate::geometry::PointCloud;
use crate::nn::Adam;
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Per-epoch training statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainedVictim {
    pub model: VictimModel,
    pub history: Vec<EpochStats>,
}

/// Train a fresh default-width model on the labeled clouds.
///
/// The dataset must contain at least two distinct classes and every label
/// must be a valid class index.
pub fn train(dataset: &[PointCloud], cfg: &TrainConfig) -> Result<TrainedVictim, VictimError> {
    assert!(cfg.learning_rate > 0.0, "learning rate must be positive");
    if dataset.is_empty() {
        return Err(VictimError::InvalidDataset("empty dataset".into()));
    }
    let mut labels = Vec::with_capacity(dataset.len());
    for (i, cloud) in dataset.iter().enumerate() {
        match cloud.label {
            Some(l) => labels.push(l),
            None => {
                return Err(VictimError::InvalidDataset(format!(
                    "cloud {i} has no label"
                )))
            }
        }
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    let distinct = {
        let mut seen = vec![false; num_classes];
        for &l in &labels {
            seen[l] = true;
        }
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(VictimError::InvalidDataset(format!(
            "need at least 2 classes, found {distinct}"
        )));
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut model = VictimModel::init_default(num_classes, &mut rng);
    // Adam is per-parameter, so separate states for the two layer groups
    // behave identically to one joint optimizer.
    let mut adam_point = Adam::new(&model.point_layers, cfg.learning_rate);
    let mut adam_head = Adam::new(&model.head_layers, cfg.learning_rate);
    let mut grad = ModelGrad::zeros_like(&model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.reset();
            let mut batch_loss = 0.0;
            for &idx in batch {
                batch_loss += model.loss_and_param_grad(&dataset[idx], labels[idx], &mut grad)?;
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(VictimError::NonFiniteLoss { epoch });
            }
            grad.scale(1.0 / batch.len() as f64);
            adam_point.step(&mut model.point_layers, &grad.point);
            adam_head.step(&mut model.head_layers, &grad.head);
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let mean_loss = epoch_loss / dataset.len() as f64;
        let mut correct = 0usize;
        for (cloud, &label) in dataset.iter().zip(&labels) {
            if model.predict(cloud)? == label {
                correct += 1;
            }
        }
        history.push(EpochStats {
            epoch,
            mean_loss,
            train_accuracy: correct as f64 / dataset.len() as f64,
        });
    }
    Ok(TrainedVictim { model, history })
}

/// Fraction of clouds the model classifies correctly.
pub fn accuracy(model: &VictimModel, dataset: &[PointCloud]) -> Result<f64, VictimError> {
    let mut correct = 0usize;
    for cloud in dataset {
        let label = cloud
            .label
            .ok_or_else(|| VictimError::InvalidDataset("unlabeled cloud".into()))?;
        let logits = model.forward(cloud)?;
        if argmax(&logits) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_shape, ShapeKind};

    fn tiny_dataset(per_class: usize, seed: u64) -> Vec<PointCloud> {
        let mut out = Vec::new();
        for kind in [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Torus] {
            for i in 0..per_class {
                let s = crate::rng::derive_seed(seed, &format!("{}-{i}", kind.name()));
                let mut c = generate_shape(kind, 128, s);
                // Compact labels 0..3 for this three-class set.
                c.label = Some(match kind {
                    ShapeKind::Sphere => 0,
                    ShapeKind::Box => 1,
                    _ => 2,
                });
                out.push(c);
            }
        }
        out
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = tiny_dataset(4, 5);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn single_class_dataset_rejected() {
        let data: Vec<PointCloud> = (0..6)
            .map(|i| generate_shape(ShapeKind::Sphere, 64, i).with_label(0))
            .collect();
        let err = train(&data, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, VictimError::InvalidDataset(_)));
    }

    #[test]
    fn learns_tiny_three_class_problem() {
        let data = tiny_dataset(8, 9);
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 8,
            learning_rate: 2e-3,
            seed: 1,
        };
        let trained = train(&data, &cfg).unwrap();
        let final_acc = trained.history.last().unwrap().train_accuracy;
        assert!(final_acc >= 0.9, "train accuracy {final_acc}");
    }

    #[test]
    fn loss_mostly_decreases() {
        let data = tiny_dataset(8, 9);
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 8,
            learning_rate: 2e-3,
            seed: 1,
        };
        let trained = train(&data, &cfg).unwrap();
        let losses: Vec<f64> = trained.history.iter().map(|e| e.mean_loss).collect();
        let upticks = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(
            upticks * 5 <= losses.len(),
            "{upticks} upticks over {} epochs",
            losses.len()
        );
    }
}
