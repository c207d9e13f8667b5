use std::path::Path;
use std::sync::OnceLock;

use anyhow::{bail, Context};
use rayon::prelude::*;

use p2s_core::attacks::{
    run_attack_batch, AttackConfig, AttackMethod, AttackOutcome, FieldSign,
};
use p2s_core::data_io::{
    build_synthetic_dataset, read_run_log, write_report, write_run_log, write_xyz, DataError,
    DatasetManifest, ReportRow, RunHeader, RunRecord, Split,
};
use p2s_core::field::{train_score_net, FieldError, P2sField, ScoreNetSpec};
use p2s_core::geometry::{GeometryError, PointCloud};
use p2s_core::metrics::{aggregate, fill_outcome_metrics, MetricError, MetricsReport};
use p2s_core::rng::derive_seed;
use p2s_core::victim::{accuracy, load_victim, save_victim, train, TrainConfig, VictimError, VictimModel};

use crate::config::{pick, FileConfig};
use crate::{
    AttackArgs, EvalArgs, FieldBackendArg, GenDataArgs, MethodArg, P2sArg, ReproArgs, SplitArg,
    TrainVictimArgs,
};

/// Marker for validation failures that should exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(v) = cause.downcast_ref::<VictimError>() {
            return match v {
                VictimError::NonFiniteLoss { .. } => 4,
                _ => 3,
            };
        }
        if let Some(f) = cause.downcast_ref::<FieldError>() {
            return match f {
                FieldError::NonFiniteLoss { .. } | FieldError::ZeroField(_) => 4,
                FieldError::CloudTooSmall { .. } => 3,
            };
        }
        if cause.is::<DataError>()
            || cause.is::<GeometryError>()
            || cause.is::<MetricError>()
            || cause.is::<std::io::Error>()
        {
            return 3;
        }
    }
    3
}

fn log_level() -> u8 {
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("P2S_LOG_LEVEL").as_deref() {
        Ok("quiet") => 0,
        Ok("debug") => 2,
        _ => 1,
    })
}

macro_rules! info {
    ($($arg:tt)*) => {
        if log_level() >= 1 {
            eprintln!($($arg)*);
        }
    };
}

macro_rules! debug {
    ($($arg:tt)*) => {
        if log_level() >= 2 {
            eprintln!($($arg)*);
        }
    };
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
}

const DEFAULT_SEED: u64 = 42;

pub fn gen_data(args: GenDataArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    init_threads(args.common.threads.or(file.threads));
    let seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    let classes = pick(args.classes, file.gen_data.classes, 5);
    let per_class = pick(args.per_class, file.gen_data.per_class, 100);
    let n_points = pick(args.n_points, file.gen_data.n_points, 1024);
    let train_fraction = pick(args.train_fraction, file.gen_data.train_fraction, 0.5);
    if !(2..=5).contains(&classes) {
        bail!(UsageError(format!(
            "--classes must be between 2 and 5, got {classes}"
        )));
    }
    if per_class == 0 || n_points < 8 || !(0.0..=1.0).contains(&train_fraction) {
        bail!(UsageError(
            "--per-class must be >= 1, --n-points >= 8, --train-fraction in [0,1]".into()
        ));
    }
    let manifest = build_synthetic_dataset(
        &args.out,
        classes,
        per_class,
        n_points,
        train_fraction,
        derive_seed(seed, "dataset"),
    )?;
    info!(
        "gen-data: {} clouds ({} classes x {}), manifest {}",
        manifest.entries.len(),
        classes,
        per_class,
        args.out.join("manifest.json").display()
    );
    Ok(())
}

pub fn train_victim(args: TrainVictimArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    init_threads(args.common.threads.or(file.threads));
    let seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    let cfg = TrainConfig {
        epochs: pick(args.epochs, file.train.epochs, 30),
        batch_size: pick(args.batch_size, file.train.batch_size, 16),
        learning_rate: pick(args.lr, file.train.learning_rate, 1e-3),
        seed: derive_seed(seed, "victim"),
    };
    if cfg.learning_rate <= 0.0 || cfg.epochs == 0 || cfg.batch_size == 0 {
        bail!(UsageError("epochs, batch size and learning rate must be positive".into()));
    }

    let manifest = DatasetManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let train_set = manifest.load_split(base, Split::Train)?;
    let test_set = manifest.load_split(base, Split::Test)?;
    info!("train-victim: {} train / {} test clouds", train_set.len(), test_set.len());

    let trained = train(&train_set, &cfg)?;
    let test_acc = if test_set.is_empty() {
        None
    } else {
        Some(accuracy(&trained.model, &test_set)?)
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let model_path = args.out.join("victim.p2sw");
    save_victim(&trained.model, &model_path)?;

    let log = serde_json::json!({
        "config": {
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "seed": cfg.seed,
        },
        "epochs": trained
            .history
            .iter()
            .map(|e| {
                serde_json::json!({
                    "epoch": e.epoch,
                    "mean_loss": e.mean_loss,
                    "train_accuracy": e.train_accuracy,
                })
            })
            .collect::<Vec<_>>(),
        "final_train_accuracy": trained.history.last().map(|e| e.train_accuracy),
        "test_accuracy": test_acc,
    });
    std::fs::write(args.out.join("train_log.json"), format!("{log:#}\n"))?;
    info!(
        "train-victim: final train acc {:.3}, test acc {:?}, model {}",
        trained.history.last().map(|e| e.train_accuracy).unwrap_or(0.0),
        test_acc,
        model_path.display()
    );
    Ok(())
}

pub struct ResolvedAttack {
    pub attack: AttackConfig,
    pub backend: FieldBackendArg,
    pub field_steps: usize,
    pub split: Split,
}

fn resolve_attack(args: &AttackArgs, file: &FileConfig, seed: u64) -> anyhow::Result<ResolvedAttack> {
    let method = match args.method {
        Some(MethodArg::Ifgm) => AttackMethod::Ifgm,
        Some(MethodArg::Pgd) => AttackMethod::Pgd,
        None => match file.attack.method.as_deref() {
            Some("ifgm") | None => AttackMethod::Ifgm,
            Some("pgd") => AttackMethod::Pgd,
            Some(other) => bail!(UsageError(format!("unknown method {other:?}"))),
        },
    };
    let sign = match args.p2s {
        Some(P2sArg::Plus) => FieldSign::Plus,
        Some(P2sArg::Minus) => FieldSign::Minus,
        Some(P2sArg::Off) => FieldSign::Off,
        None => match file.attack.p2s.as_deref() {
            Some("+") => FieldSign::Plus,
            Some("-") => FieldSign::Minus,
            Some("off") | None => FieldSign::Off,
            Some(other) => bail!(UsageError(format!("unknown p2s sign {other:?}"))),
        },
    };
    let backend = match args.field {
        Some(b) => b,
        None => match file.attack.field.as_deref() {
            Some("kde") | None => FieldBackendArg::Kde,
            Some("learned") => FieldBackendArg::Learned,
            Some(other) => bail!(UsageError(format!("unknown field backend {other:?}"))),
        },
    };
    let split = match args.split {
        Some(SplitArg::Train) => Split::Train,
        Some(SplitArg::Test) => Split::Test,
        None => match file.attack.split.as_deref() {
            Some("train") => Split::Train,
            Some("test") | None => Split::Test,
            Some(other) => bail!(UsageError(format!("unknown split {other:?}"))),
        },
    };
    let budget = args.budget.or(file.attack.budget);
    let attack = AttackConfig {
        method,
        field_sign: sign,
        theta: pick(args.theta, file.attack.theta, 0.5),
        alpha: pick(args.alpha, file.attack.alpha, 0.01),
        max_iters: pick(args.iters, file.attack.iters, 200),
        linf_budget: if method == AttackMethod::Pgd { budget } else { None },
        l2_budget: if method == AttackMethod::Ifgm { budget } else { None },
        magnitude_rule: p2s_core::attacks::MagnitudeRule::Uniform,
        seed,
        stop_on_success: pick(args.stop_on_success, file.attack.stop_on_success, true),
    };
    attack.validate().map_err(UsageError).map_err(anyhow::Error::from)?;
    Ok(ResolvedAttack {
        attack,
        backend,
        field_steps: pick(args.field_steps, file.attack.field_steps, 1200),
        split,
    })
}

/// Run one attack configuration over a set of clean clouds, computing the
/// imperceptibility metrics per outcome.
fn execute_attack(
    model: &VictimModel,
    clouds: &[PointCloud],
    attack: &AttackConfig,
    backend: FieldBackendArg,
    field_steps: usize,
) -> anyhow::Result<Vec<AttackOutcome>> {
    let spec = ScoreNetSpec::default();
    let mut outcomes = run_attack_batch(model, clouds, attack, |cloud, seed| {
        let field = match backend {
            FieldBackendArg::Kde => P2sField::kde_default(cloud),
            FieldBackendArg::Learned => {
                let h = p2s_core::field::default_bandwidth(cloud);
                train_score_net(cloud, &spec, h, field_steps, seed)
                    .expect("per-shape field training diverged")
            }
        };
        Some(field)
    });
    let metric_results: Vec<Result<(), MetricError>> = clouds
        .par_iter()
        .zip(outcomes.par_iter_mut())
        .map(|(clean, outcome)| fill_outcome_metrics(clean, outcome))
        .collect();
    for r in metric_results {
        r?;
    }
    Ok(outcomes)
}

fn write_attack_outputs(
    out: &Path,
    header: &RunHeader,
    clouds: &[PointCloud],
    outcomes: &[AttackOutcome],
) -> anyhow::Result<()> {
    let adv_dir = out.join("adv");
    std::fs::create_dir_all(&adv_dir)
        .with_context(|| format!("creating {}", adv_dir.display()))?;
    let records: Vec<RunRecord> = clouds
        .iter()
        .zip(outcomes)
        .map(|(clean, o)| RunRecord::from_outcome(clean, o))
        .collect();
    write_run_log(out, header, &records)?;
    for outcome in outcomes {
        let id = outcome.adversarial.id.as_deref().unwrap_or("unnamed");
        write_xyz(&adv_dir.join(format!("{id}.xyz")), &outcome.adversarial.points)?;
    }
    Ok(())
}

pub fn attack(args: AttackArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    init_threads(args.common.threads.or(file.threads));
    let seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    let resolved = resolve_attack(&args, &file, derive_seed(seed, "attack"))?;

    let manifest = DatasetManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let clouds = manifest.load_split(base, resolved.split)?;
    if clouds.is_empty() {
        bail!(UsageError("selected split has no clouds".into()));
    }
    let model = load_victim(&args.model)?;
    info!(
        "attack: {} clouds, method {:?}, p2s {:?}, theta {}, alpha {}, T {}",
        clouds.len(),
        resolved.attack.method,
        resolved.attack.field_sign,
        resolved.attack.theta,
        resolved.attack.alpha,
        resolved.attack.max_iters
    );

    let outcomes = execute_attack(
        &model,
        &clouds,
        &resolved.attack,
        resolved.backend,
        resolved.field_steps,
    )?;
    let header = RunHeader {
        label: run_label(&resolved.attack),
        attack: resolved.attack.clone(),
        field_backend: if resolved.attack.field_sign == FieldSign::Off {
            None
        } else {
            Some(backend_name(resolved.backend).to_string())
        },
        manifest: args.manifest.display().to_string(),
        model: args.model.display().to_string(),
        split: resolved.split,
    };
    write_attack_outputs(&args.out, &header, &clouds, &outcomes)?;

    let report = aggregate(&outcomes);
    info!(
        "attack: asr {:.3} ({}/{} attacked, {} excluded)",
        report.asr, report.succeeded, report.attacked, report.excluded_clean_misclassified
    );
    Ok(())
}

fn backend_name(b: FieldBackendArg) -> &'static str {
    match b {
        FieldBackendArg::Kde => "kde",
        FieldBackendArg::Learned => "learned",
    }
}

fn run_label(cfg: &AttackConfig) -> String {
    let method = match cfg.method {
        AttackMethod::Ifgm => "ifgm",
        AttackMethod::Pgd => "pgd",
    };
    let sign = match cfg.field_sign {
        FieldSign::Plus => "plus",
        FieldSign::Minus => "minus",
        FieldSign::Off => "off",
    };
    format!("{method}_{sign}")
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    init_threads(args.common.threads.or(file.threads));
    let mut rows = Vec::new();
    let mut meta_runs = Vec::new();
    for dir in &args.run_logs {
        let (header, records) = read_run_log(dir)
            .with_context(|| format!("reading run log {}", dir.display()))?;
        let outcomes: Vec<AttackOutcome> =
            records.iter().map(RunRecord::to_outcome_stub).collect();
        rows.push(ReportRow {
            label: header.label.clone(),
            report: aggregate(&outcomes),
        });
        meta_runs.push(serde_json::json!({
            "label": header.label,
            "attack": header.attack,
            "field_backend": header.field_backend,
            "records": records.len(),
        }));
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join("report.csv");
    let json_path = args.out.join("report.json");
    write_report(
        &rows,
        serde_json::json!({ "runs": meta_runs }),
        &csv_path,
        &json_path,
    )?;
    print!("{}", std::fs::read_to_string(&csv_path)?);
    info!("eval: wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

pub fn repro(args: ReproArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    init_threads(args.common.threads.or(file.threads));
    let seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    let per_class = pick(args.per_class, file.repro.per_class, 44);
    let n_points = pick(args.n_points, file.repro.n_points, 1024);
    let epochs = pick(args.epochs, file.repro.epochs, 30);
    let iters = pick(args.iters, file.repro.iters, 80);
    let alpha = pick(args.alpha, file.repro.alpha, 0.01);
    let theta = pick(args.theta, file.repro.theta, 0.5);
    let field_steps = pick(args.field_steps, file.repro.field_steps, 1200);
    let backend = match args.field {
        Some(b) => b,
        None => match file.repro.field.as_deref() {
            Some("kde") | None => FieldBackendArg::Kde,
            Some("learned") => FieldBackendArg::Learned,
            Some(other) => bail!(UsageError(format!("unknown field backend {other:?}"))),
        },
    };

    // Stage 1: dataset.
    let dataset_dir = args.out.join("dataset");
    let manifest = build_synthetic_dataset(
        &dataset_dir,
        5,
        per_class,
        n_points,
        0.5,
        derive_seed(seed, "dataset"),
    )?;
    let train_set = manifest.load_split(&dataset_dir, Split::Train)?;
    let test_set = manifest.load_split(&dataset_dir, Split::Test)?;
    info!("repro: dataset {} train / {} test", train_set.len(), test_set.len());

    // Stage 2: victim.
    let trained = train(
        &train_set,
        &TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: derive_seed(seed, "victim"),
        },
    )?;
    let test_acc = accuracy(&trained.model, &test_set)?;
    let victim_dir = args.out.join("victim");
    std::fs::create_dir_all(&victim_dir)?;
    save_victim(&trained.model, &victim_dir.join("victim.p2sw"))?;
    info!(
        "repro: victim train acc {:.3}, test acc {:.3}",
        trained.history.last().map(|e| e.train_accuracy).unwrap_or(0.0),
        test_acc
    );

    // Stage 3: the six attack rows. Fixed-iteration protocol: every run uses
    // the full budget and ASR is measured on the final clouds.
    let variants: [(AttackMethod, FieldSign); 6] = [
        (AttackMethod::Ifgm, FieldSign::Off),
        (AttackMethod::Ifgm, FieldSign::Plus),
        (AttackMethod::Ifgm, FieldSign::Minus),
        (AttackMethod::Pgd, FieldSign::Off),
        (AttackMethod::Pgd, FieldSign::Plus),
        (AttackMethod::Pgd, FieldSign::Minus),
    ];
    let mut rows = Vec::new();
    for (method, sign) in variants {
        let attack = AttackConfig {
            method,
            field_sign: sign,
            theta,
            alpha,
            max_iters: iters,
            linf_budget: if method == AttackMethod::Pgd { Some(0.5) } else { None },
            l2_budget: None,
            magnitude_rule: p2s_core::attacks::MagnitudeRule::Uniform,
            seed: derive_seed(seed, &format!("attack-{}", run_label_parts(method, sign))),
            stop_on_success: false,
        };
        let label = run_label(&attack);
        info!("repro: running {label}");
        let outcomes = execute_attack(&trained.model, &test_set, &attack, backend, field_steps)?;
        let run_dir = args.out.join("runs").join(&label);
        let header = RunHeader {
            label: label.clone(),
            attack: attack.clone(),
            field_backend: if sign == FieldSign::Off {
                None
            } else {
                Some(backend_name(backend).to_string())
            },
            manifest: "dataset/manifest.json".into(),
            model: "victim/victim.p2sw".into(),
            split: Split::Test,
        };
        write_attack_outputs(&run_dir, &header, &test_set, &outcomes)?;
        let report = aggregate(&outcomes);
        debug!("repro: {label} asr {:.3}", report.asr);
        rows.push(ReportRow { label, report });
    }

    // Stage 4: report + ordering summary.
    let metadata = serde_json::json!({
        "seed": seed,
        "per_class": per_class,
        "n_points": n_points,
        "epochs": epochs,
        "iters": iters,
        "alpha": alpha,
        "theta": theta,
        "field_backend": backend_name(backend),
        "field_steps": field_steps,
        "victim_test_accuracy": test_acc,
    });
    let csv_path = args.out.join("report.csv");
    let json_path = args.out.join("report.json");
    write_report(&rows, metadata, &csv_path, &json_path)?;
    print!("{}", std::fs::read_to_string(&csv_path)?);
    println!();
    for line in ordering_summary(&rows) {
        println!("{line}");
    }
    Ok(())
}

fn run_label_parts(method: AttackMethod, sign: FieldSign) -> String {
    run_label(&AttackConfig {
        method,
        field_sign: sign,
        ..AttackConfig::default()
    })
}

fn find<'a>(rows: &'a [ReportRow], label: &str) -> Option<&'a MetricsReport> {
    rows.iter().find(|r| r.label == label).map(|r| &r.report)
}

/// The ablation and generalization ordering checks, one PASS/FAIL line each.
pub fn ordering_summary(rows: &[ReportRow]) -> Vec<String> {
    let mut lines = Vec::new();
    let metric = |r: &MetricsReport, which: &str| -> Option<f64> {
        match which {
            "cd" => r.cd,
            "hd" => r.hd,
            _ => unreachable!(),
        }
    };
    // Ablation: forward field < no field < reversed field, per base method.
    for base in ["ifgm", "pgd"] {
        for which in ["cd", "hd"] {
            let values = (
                find(rows, &format!("{base}_plus")).and_then(|r| metric(r, which)),
                find(rows, &format!("{base}_off")).and_then(|r| metric(r, which)),
                find(rows, &format!("{base}_minus")).and_then(|r| metric(r, which)),
            );
            let line = match values {
                (Some(plus), Some(off), Some(minus)) => {
                    let ok = plus < off && off < minus;
                    format!(
                        "ordering ablation {base} {which}: {} (w/+ {plus:.6e} < w/o {off:.6e} < w/- {minus:.6e})",
                        if ok { "PASS" } else { "FAIL" }
                    )
                }
                _ => format!("ordering ablation {base} {which}: FAIL (missing metric values)"),
            };
            lines.push(line);
        }
    }
    // Guidance benefit at equal ASR, per base method.
    for base in ["ifgm", "pgd"] {
        let plus_row = find(rows, &format!("{base}_plus"));
        let off_row = find(rows, &format!("{base}_off"));
        for which in ["cd", "hd"] {
            let line = match (plus_row, off_row) {
                (Some(plus), Some(off)) => {
                    match (metric(plus, which), metric(off, which)) {
                        (Some(p), Some(o)) => {
                            let equal_asr = (plus.asr - off.asr).abs() < 1e-12;
                            let ok = equal_asr && p < o;
                            format!(
                                "ordering guidance {base} {which}: {} (w/+ {p:.6e} < w/o {o:.6e} at asr {:.3}/{:.3})",
                                if ok { "PASS" } else { "FAIL" },
                                plus.asr,
                                off.asr
                            )
                        }
                        _ => format!("ordering guidance {base} {which}: FAIL (missing metric values)"),
                    }
                }
                _ => format!("ordering guidance {base} {which}: FAIL (missing runs)"),
            };
            lines.push(line);
        }
    }
    lines
}
