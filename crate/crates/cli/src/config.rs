//! JSON run-configuration file. Every key mirrors a command-line flag;
//! flags win over file values, file values win over built-in defaults.
//! Unknown keys are rejected up front.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub gen_data: GenDataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub repro: ReproSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataSection {
    pub classes: Option<usize>,
    pub per_class: Option<usize>,
    pub n_points: Option<usize>,
    pub train_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub field: Option<String>,
    pub method: Option<String>,
    pub p2s: Option<String>,
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub iters: Option<usize>,
    pub budget: Option<f64>,
    pub stop_on_success: Option<bool>,
    pub split: Option<String>,
    pub field_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproSection {
    pub per_class: Option<usize>,
    pub n_points: Option<usize>,
    pub epochs: Option<usize>,
    pub iters: Option<usize>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub field: Option<String>,
    pub field_steps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Flag > config-file > default.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
