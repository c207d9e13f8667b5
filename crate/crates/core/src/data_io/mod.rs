//! Dataset ingestion, manifests, run logs and report persistence.
//!
//! All writes go through a temp-file rename so partially written artifacts
//! never appear under their final names. All randomness is funneled through
//! explicitly seeded generators.

mod off;
mod xyz;

pub use off::{read_off, sample_mesh_surface, OffMesh};
pub use xyz::{read_xyz, write_xyz};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackConfig, AttackOutcome};
use crate::geometry::{
    normalize, GeometryError, PointCloud, ShapeKind, ShapeParams,
};
use crate::metrics::{MetricsReport, OutcomeMetrics};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at {path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("mesh has no sampleable faces")]
    EmptyMesh,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp.partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Xyz,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub format: CloudFormat,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub n_points: usize,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        atomic_write(path, json.as_bytes()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: Self = serde_json::from_str(&text)
            .map_err(|e| DataError::InvalidManifest(format!("{}: {e}", path.display())))?;
        manifest.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(manifest)
    }

    /// Structural checks: unique ids, labels within the class table, files
    /// present on disk.
    pub fn validate(&self, base_dir: &Path) -> Result<(), DataError> {
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.entries {
            if !seen.insert(&entry.id) {
                return Err(DataError::InvalidManifest(format!(
                    "duplicate id {:?}",
                    entry.id
                )));
            }
            if entry.label >= self.classes.len() {
                return Err(DataError::InvalidManifest(format!(
                    "label {} of {:?} outside class table ({} classes)",
                    entry.label,
                    entry.id,
                    self.classes.len()
                )));
            }
            let full = base_dir.join(&entry.path);
            if !full.is_file() {
                return Err(DataError::InvalidManifest(format!(
                    "missing cloud file {}",
                    full.display()
                )));
            }
        }
        Ok(())
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Load every cloud of a split, normalized and labeled, in manifest
    /// order. Per-cloud subsampling seeds derive from the manifest seed and
    /// the cloud id.
    pub fn load_split(&self, base_dir: &Path, split: Split) -> Result<Vec<PointCloud>, DataError> {
        self.split_entries(split)
            .map(|entry| {
                let seed = derive_seed(self.seed, &entry.id);
                let cloud = load_cloud(
                    &base_dir.join(&entry.path),
                    entry.format,
                    self.n_points,
                    seed,
                )?;
                Ok(cloud.with_label(entry.label).with_id(entry.id.clone()))
            })
            .collect()
    }
}

/// Read a cloud file, reduce or sample it to at most `n_points`, and
/// normalize it.
///
/// XYZ files larger than `n_points` are subsampled uniformly without
/// replacement (ascending original order). OFF meshes with faces are
/// area-sampled to exactly `n_points`; faceless OFF vertex sets fall back
/// to the XYZ subsampling rule.
pub fn load_cloud(
    path: &Path,
    format: CloudFormat,
    n_points: usize,
    seed: u64,
) -> Result<PointCloud, DataError> {
    assert!(n_points >= 1);
    let mut rng = rng_from_seed(seed);
    let points = match format {
        CloudFormat::Xyz => subsample(xyz::read_xyz(path)?, n_points, &mut rng),
        CloudFormat::Off => {
            let mesh = off::read_off(path)?;
            if mesh.vertices.is_empty() {
                return Err(DataError::EmptyMesh);
            }
            if !mesh.faces.is_empty() {
                off::sample_mesh_surface(&mesh, n_points, &mut rng)?
            } else if mesh.vertices.len() >= n_points {
                subsample(mesh.vertices, n_points, &mut rng)
            } else {
                return Err(DataError::EmptyMesh);
            }
        }
    };
    if points.is_empty() {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            line: 1,
            column: 1,
            message: "no points in file".into(),
        });
    }
    Ok(normalize(&PointCloud::new(points))?)
}

/// Uniform sample of `n` elements without replacement, keeping ascending
/// original order. Identity when the input is already small enough.
fn subsample(points: Vec<crate::vec3::Vec3>, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<crate::vec3::Vec3> {
    use rand::Rng;
    if points.len() <= n {
        return points;
    }
    // Partial Fisher-Yates over indices, then restore order.
    let mut indices: Vec<usize> = (0..points.len()).collect();
    for i in 0..n {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Build the synthetic 5-class dataset: `classes` shape kinds x `per_class`
/// instances with randomized proportions, written as normalized XYZ files
/// under `out_dir/clouds/`, plus a manifest at `out_dir/manifest.json`.
///
/// The first `ceil(train_fraction * per_class)` instances of each class form
/// the train split. Fully deterministic for a fixed seed.
pub fn build_synthetic_dataset(
    out_dir: &Path,
    classes: usize,
    per_class: usize,
    n_points: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    assert!(
        (2..=ShapeKind::ALL.len()).contains(&classes),
        "class count must be between 2 and {}",
        ShapeKind::ALL.len()
    );
    assert!(per_class >= 1 && n_points >= 8);
    assert!((0.0..=1.0).contains(&train_fraction));
    let clouds_dir = out_dir.join("clouds");
    std::fs::create_dir_all(&clouds_dir).map_err(io_err(&clouds_dir))?;
    let train_count = (train_fraction * per_class as f64).ceil() as usize;

    let mut entries = Vec::with_capacity(classes * per_class);
    for kind in &ShapeKind::ALL[..classes] {
        for instance in 0..per_class {
            let id = format!("{}_{:04}", kind.name(), instance);
            let instance_seed = derive_seed(seed, &id);
            let mut rng = rng_from_seed(instance_seed);
            let params = ShapeParams::randomized(*kind, &mut rng);
            let raw = crate::geometry::sample_surface(params, n_points, &mut rng);
            let cloud = normalize(&PointCloud::new(raw))?;
            let rel = format!("clouds/{id}.xyz");
            xyz::write_xyz(&out_dir.join(&rel), &cloud.points)?;
            entries.push(ManifestEntry {
                id,
                path: rel,
                format: CloudFormat::Xyz,
                label: kind.label(),
                split: if instance < train_count {
                    Split::Train
                } else {
                    Split::Test
                },
            });
        }
    }
    let manifest = DatasetManifest {
        format_version: 1,
        classes: ShapeKind::ALL[..classes]
            .iter()
            .map(|k| k.name().to_string())
            .collect(),
        n_points,
        seed,
        entries,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// One line of the JSON-lines run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub label: usize,
    pub success: bool,
    pub clean_misclassified: bool,
    pub iterations: usize,
    pub max_displacement: f64,
    pub mean_displacement: f64,
    pub metrics: Option<OutcomeMetrics>,
}

impl RunRecord {
    pub fn from_outcome(clean: &PointCloud, outcome: &AttackOutcome) -> Self {
        let displacements: Vec<f64> = clean
            .points
            .iter()
            .zip(&outcome.adversarial.points)
            .map(|(p, q)| p.dist(*q))
            .collect();
        let max = displacements.iter().cloned().fold(0.0, f64::max);
        let mean = displacements.iter().sum::<f64>() / displacements.len().max(1) as f64;
        Self {
            id: outcome
                .adversarial
                .id
                .clone()
                .unwrap_or_else(|| "unnamed".into()),
            label: outcome.adversarial.label.unwrap_or(0),
            success: outcome.success,
            clean_misclassified: outcome.clean_misclassified,
            iterations: outcome.iterations,
            max_displacement: max,
            mean_displacement: mean,
            metrics: outcome.metrics,
        }
    }

    /// Rebuild the outcome view that `metrics::aggregate` consumes.
    pub fn to_outcome_stub(&self) -> AttackOutcome {
        AttackOutcome {
            adversarial: PointCloud::new(vec![crate::vec3::ZERO]),
            success: self.success,
            iterations: self.iterations,
            clean_misclassified: self.clean_misclassified,
            trajectory_digest: 0,
            metrics: self.metrics,
        }
    }
}

/// Header written next to every run log: the full attack configuration and
/// provenance of model/data, everything needed to reproduce the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub label: String,
    pub attack: AttackConfig,
    pub field_backend: Option<String>,
    pub manifest: String,
    pub model: String,
    pub split: Split,
}

pub fn write_run_log(
    dir: &Path,
    header: &RunHeader,
    records: &[RunRecord],
) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let header_path = dir.join("attack_config.json");
    let mut header_json = serde_json::to_string_pretty(header).expect("header serializes");
    header_json.push('\n');
    atomic_write(&header_path, header_json.as_bytes()).map_err(io_err(&header_path))?;

    let log_path = dir.join("run_log.jsonl");
    let mut buf = String::new();
    for record in records {
        buf.push_str(&serde_json::to_string(record).expect("record serializes"));
        buf.push('\n');
    }
    atomic_write(&log_path, buf.as_bytes()).map_err(io_err(&log_path))
}

pub fn read_run_log(dir: &Path) -> Result<(RunHeader, Vec<RunRecord>), DataError> {
    let header_path = dir.join("attack_config.json");
    let header_text = std::fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: RunHeader = serde_json::from_str(&header_text)
        .map_err(|e| DataError::InvalidManifest(format!("{}: {e}", header_path.display())))?;
    let log_path = dir.join("run_log.jsonl");
    let text = std::fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| DataError::Parse {
            path: log_path.display().to_string(),
            line: i + 1,
            column: 1,
            message: e.to_string(),
        })?);
    }
    Ok((header, records))
}

/// One labeled row of a report: a run and its aggregated metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub report: MetricsReport,
}

/// The JSON report document: raw (unscaled) values plus run metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format_version: u32,
    pub rows: Vec<ReportRow>,
    pub metadata: serde_json::Value,
}

/// Display scaling used in the CSV (matching the usual table convention):
/// ASR in percent, CD x 1e4, HD x 1e2, Curv x 1e2, EMD x 1e2; l2 and GR raw.
pub const CSV_HEADER: &str = "attack,asr_pct,cd_x1e4,hd_x1e2,l2,gr,curv_x1e2,emd_x1e2";

fn csv_cell(value: Option<f64>, scale: f64) -> String {
    match value {
        Some(v) => format!("{:.6}", v * scale),
        None => String::new(),
    }
}

/// Write the CSV (display-scaled) and JSON (raw values + metadata) report
/// files.
pub fn write_report(
    rows: &[ReportRow],
    metadata: serde_json::Value,
    csv_path: &Path,
    json_path: &Path,
) -> Result<(), DataError> {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in rows {
        let r = &row.report;
        csv.push_str(&format!(
            "{},{:.2},{},{},{},{},{},{}\n",
            row.label,
            r.asr * 100.0,
            csv_cell(r.cd, 1e4),
            csv_cell(r.hd, 1e2),
            csv_cell(r.l2, 1.0),
            csv_cell(r.gr, 1.0),
            csv_cell(r.curv, 1e2),
            csv_cell(r.emd, 1e2),
        ));
    }
    atomic_write(csv_path, csv.as_bytes()).map_err(io_err(csv_path))?;

    let doc = ReportDoc {
        format_version: 1,
        rows: rows.to_vec(),
        metadata,
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("report serializes");
    json.push('\n');
    atomic_write(json_path, json.as_bytes()).map_err(io_err(json_path))
}

pub fn read_report(json_path: &Path) -> Result<ReportDoc, DataError> {
    let text = std::fs::read_to_string(json_path).map_err(io_err(json_path))?;
    serde_json::from_str(&text)
        .map_err(|e| DataError::InvalidManifest(format!("{}: {e}", json_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::Vec3;

    #[test]
    fn synthetic_dataset_is_deterministic_and_balanced() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let m1 = build_synthetic_dataset(dir_a.path(), 5, 4, 64, 0.5, 42).unwrap();
        let m2 = build_synthetic_dataset(dir_b.path(), 5, 4, 64, 0.5, 42).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.entries.len(), 20);
        for label in 0..5 {
            assert_eq!(m1.entries.iter().filter(|e| e.label == label).count(), 4);
        }
        // Byte-identical manifests on disk.
        let ja = std::fs::read(dir_a.path().join("manifest.json")).unwrap();
        let jb = std::fs::read(dir_b.path().join("manifest.json")).unwrap();
        assert_eq!(ja, jb);
        // Train/test disjoint and exhaustive.
        let train: Vec<_> = m1.split_entries(Split::Train).collect();
        let test: Vec<_> = m1.split_entries(Split::Test).collect();
        assert_eq!(train.len() + test.len(), 20);
        assert_eq!(train.len(), 10);
    }

    #[test]
    fn load_split_returns_normalized_labeled_clouds() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_synthetic_dataset(dir.path(), 3, 2, 64, 0.5, 7).unwrap();
        let clouds = manifest.load_split(dir.path(), Split::Train).unwrap();
        assert_eq!(clouds.len(), 3);
        for c in &clouds {
            assert!(c.label.is_some());
            assert!(c.id.is_some());
            assert!((c.max_norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn manifest_validation_catches_duplicates_and_bad_labels() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_synthetic_dataset(dir.path(), 2, 2, 64, 0.5, 1).unwrap();
        let mut dup = manifest.clone();
        dup.entries[1].id = dup.entries[0].id.clone();
        assert!(dup.validate(dir.path()).is_err());
        let mut bad_label = manifest.clone();
        bad_label.entries[0].label = 99;
        assert!(bad_label.validate(dir.path()).is_err());
        let mut missing = manifest;
        missing.entries[0].path = "clouds/nope.xyz".into();
        assert!(missing.validate(dir.path()).is_err());
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        let err = serde_json::from_str::<DatasetManifest>(
            r#"{"format_version":1,"classes":[],"n_points":8,"seed":0,"entries":[],"extra":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn off_mesh_loads_as_sampled_normalized_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.off");
        std::fs::write(
            &path,
            "OFF\n8 6 12\n-1 -1 -1\n1 -1 -1\n1 1 -1\n-1 1 -1\n-1 -1 1\n1 -1 1\n1 1 1\n-1 1 1\n\
             4 0 1 2 3\n4 4 7 6 5\n4 0 4 5 1\n4 1 5 6 2\n4 2 6 7 3\n4 3 7 4 0\n",
        )
        .unwrap();
        let a = load_cloud(&path, CloudFormat::Off, 1024, 3).unwrap();
        assert_eq!(a.len(), 1024);
        assert!((a.max_norm() - 1.0).abs() < 1e-9);
        // Every sample still sits on a face of the (normalized) cube: undo
        // the normalization analytically through one reference vertex.
        let b = load_cloud(&path, CloudFormat::Off, 1024, 3).unwrap();
        assert_eq!(a.points, b.points);
        let scale = {
            // The raw cube has vertices at +-1; after centering at the
            // sample centroid, the farthest sample fixes the scale, so map
            // each normalized point back and check max |coordinate| = 1.
            let mut rng = crate::rng::rng_from_seed(3);
            let mesh = read_off(&path).unwrap();
            let raw = sample_mesh_surface(&mesh, 1024, &mut rng).unwrap();
            let (norm, transform) =
                crate::geometry::normalize_with_transform(&PointCloud::new(raw.clone())).unwrap();
            assert_eq!(norm.points, a.points);
            transform
        };
        for p in &a.points {
            let raw = *p * scale.scale + scale.centroid;
            let m = raw.x.abs().max(raw.y.abs()).max(raw.z.abs());
            assert!((m - 1.0).abs() < 1e-9, "off-face point {raw:?}");
        }
    }

    #[test]
    fn xyz_subsampling_is_deterministic_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.xyz");
        let points: Vec<Vec3> = (0..500)
            .map(|i| Vec3::new(i as f64, (i * 7 % 13) as f64, (i % 3) as f64))
            .collect();
        write_xyz(&path, &points).unwrap();
        let a = load_cloud(&path, CloudFormat::Xyz, 100, 9).unwrap();
        let b = load_cloud(&path, CloudFormat::Xyz, 100, 9).unwrap();
        let c = load_cloud(&path, CloudFormat::Xyz, 100, 10).unwrap();
        assert_eq!(a.points, b.points);
        assert_ne!(a.points, c.points);
        assert_eq!(a.len(), 100);
    }

    #[test]
    fn report_round_trip_and_scaling() {
        let report = MetricsReport {
            attacked: 10,
            succeeded: 10,
            excluded_clean_misclassified: 1,
            asr: 1.0,
            cd: Some(2.5e-4),
            hd: Some(3.5e-2),
            l2: Some(0.5),
            emd: Some(1.25e-2),
            gr: Some(0.11),
            curv: Some(4.5e-3),
        };
        let rows = vec![ReportRow {
            label: "ifgm".into(),
            report,
        }];
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("report.csv");
        let json_path = dir.path().join("report.json");
        write_report(&rows, serde_json::json!({"seed": 1}), &csv_path, &json_path).unwrap();

        let doc = read_report(&json_path).unwrap();
        assert_eq!(doc.rows, rows);

        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(cells[0], "ifgm");
        // Scaled values recompute from the raw JSON values.
        let cd_scaled: f64 = cells[2].parse().unwrap();
        assert!((cd_scaled - 2.5e-4 * 1e4).abs() < 5e-6);
        let hd_scaled: f64 = cells[3].parse().unwrap();
        assert!((hd_scaled - 3.5e-2 * 1e2).abs() < 5e-6);
        let emd_scaled: f64 = cells[7].parse().unwrap();
        assert!((emd_scaled - 1.25e-2 * 1e2).abs() < 5e-6);
    }

    #[test]
    fn run_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let header = RunHeader {
            label: "ifgm_plus".into(),
            attack: AttackConfig::default(),
            field_backend: Some("kde".into()),
            manifest: "dataset/manifest.json".into(),
            model: "victim.p2sw".into(),
            split: Split::Test,
        };
        let records = vec![RunRecord {
            id: "sphere_0001".into(),
            label: 0,
            success: true,
            clean_misclassified: false,
            iterations: 12,
            max_displacement: 0.05,
            mean_displacement: 0.01,
            metrics: None,
        }];
        write_run_log(dir.path(), &header, &records).unwrap();
        let (h, r) = read_run_log(dir.path()).unwrap();
        assert_eq!(h, header);
        assert_eq!(r, records);
    }
}
