//! Weight file format shared by the victim classifier and learned field
//! networks.
//!
//! Layout, all multi-byte values little-endian:
//!
//! ```text
//! bytes 0..4    magic "P2SW"
//! bytes 4..8    u32 header length in bytes
//! next          UTF-8 JSON header (see [`WeightsHeader`])
//! rest          f64 parameter blob: for each layer in header order,
//!               weights row-major [out][in], then biases [out]
//! ```
//!
//! Header fields:
//! - `format`: always `"p2s-weights"`
//! - `version`: format version, currently 1
//! - `role`: `"victim"` or `"field"`
//! - `activation`: `"relu"` (victim) or `"tanh"` (field)
//! - `layers`: `[in, out]` per linear layer, in forward order
//! - `point_layers`: victim only; how many leading layers are per-point
//!   (the rest form the pooled head)
//! - `sigma_noise`: field only; the training noise scale

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{VictimError, VictimModel};
use crate::field::{P2sField, ScoreNet};
use crate::nn::Linear;

const MAGIC: &[u8; 4] = b"P2SW";
const FORMAT: &str = "p2s-weights";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WeightsHeader {
    pub format: String,
    pub version: u32,
    pub role: String,
    pub activation: String,
    pub layers: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_noise: Option<f64>,
}

fn encode(header: &WeightsHeader, layers: &[&Linear]) -> Vec<u8> {
    let header_json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + header_json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for layer in layers {
        for v in layer.w.iter().chain(layer.b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn decode(bytes: &[u8], expect_role: &str) -> Result<(WeightsHeader, Vec<Linear>), VictimError> {
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(VictimError::Format("bad magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let blob_start = 8 + header_len;
    if bytes.len() < blob_start {
        return Err(VictimError::Format("truncated header".into()));
    }
    let header: WeightsHeader = serde_json::from_slice(&bytes[8..blob_start])
        .map_err(|e| VictimError::Format(format!("header parse: {e}")))?;
    if header.format != FORMAT {
        return Err(VictimError::Format(format!(
            "unknown format {:?}",
            header.format
        )));
    }
    if header.version != VERSION {
        return Err(VictimError::Format(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.role != expect_role {
        return Err(VictimError::Format(format!(
            "role mismatch: expected {expect_role:?}, found {:?}",
            header.role
        )));
    }
    let expected_params: usize = header
        .layers
        .iter()
        .map(|[i, o]| i * o + o)
        .sum();
    let blob = &bytes[blob_start..];
    if blob.len() != expected_params * 8 {
        return Err(VictimError::Format(format!(
            "blob length {} does not match layer shapes (expected {})",
            blob.len(),
            expected_params * 8
        )));
    }
    let mut layers = Vec::with_capacity(header.layers.len());
    let mut offset = 0;
    for [in_dim, out_dim] in &header.layers {
        let mut layer = Linear::zeros(*in_dim, *out_dim);
        for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
            *v = f64::from_le_bytes(blob[offset..offset + 8].try_into().unwrap());
            offset += 8;
        }
        if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
            return Err(VictimError::Format("non-finite parameter".into()));
        }
        layers.push(layer);
    }
    Ok((header, layers))
}

pub fn save_victim(model: &VictimModel, path: &Path) -> Result<(), VictimError> {
    let all: Vec<&Linear> = model
        .point_layers
        .iter()
        .chain(model.head_layers.iter())
        .collect();
    let header = WeightsHeader {
        format: FORMAT.into(),
        version: VERSION,
        role: "victim".into(),
        activation: "relu".into(),
        layers: all.iter().map(|l| [l.in_dim, l.out_dim]).collect(),
        point_layers: Some(model.point_layers.len()),
        sigma_noise: None,
    };
    atomic_write(path, &encode(&header, &all))?;
    Ok(())
}

pub fn load_victim(path: &Path) -> Result<VictimModel, VictimError> {
    let bytes = fs::read(path)?;
    let (header, layers) = decode(&bytes, "victim")?;
    let n_point = header
        .point_layers
        .ok_or_else(|| VictimError::Format("missing point_layers".into()))?;
    if n_point == 0 || n_point >= layers.len() {
        return Err(VictimError::Format(format!(
            "point_layers {n_point} out of range for {} layers",
            layers.len()
        )));
    }
    let mut layers = layers;
    let head = layers.split_off(n_point);
    Ok(VictimModel::from_layers(layers, head))
}

pub fn save_field_net(field: &P2sField, path: &Path) -> Result<(), VictimError> {
    let net = field
        .learned_net()
        .expect("only learned fields are serialized");
    let all: Vec<&Linear> = net.layers().iter().collect();
    let header = WeightsHeader {
        format: FORMAT.into(),
        version: VERSION,
        role: "field".into(),
        activation: "tanh".into(),
        layers: all.iter().map(|l| [l.in_dim, l.out_dim]).collect(),
        point_layers: None,
        sigma_noise: Some(field.scale()),
    };
    atomic_write(path, &encode(&header, &all))?;
    Ok(())
}

pub fn load_field_net(path: &Path) -> Result<P2sField, VictimError> {
    let bytes = fs::read(path)?;
    let (header, layers) = decode(&bytes, "field")?;
    let sigma = header
        .sigma_noise
        .ok_or_else(|| VictimError::Format("missing sigma_noise".into()))?;
    if layers.first().map(|l| l.in_dim) != Some(3)
        || layers.last().map(|l| l.out_dim) != Some(3)
    {
        return Err(VictimError::Format("field net must map 3 -> 3".into()));
    }
    Ok(P2sField::learned(ScoreNet::from_layers(layers), sigma))
}
