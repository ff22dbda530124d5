//! The five subcommands. Each takes resolved paths (everything relative to
//! the workdir), talks to the core crate, and prints a short, scriptable
//! summary to stdout.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use cubeseg_core::datapipe::{
    expand_dataset, normalize, resize_bilinear, resize_nearest, split_dataset, to_grayscale,
    DatasetCache, SplitFractions,
};
use cubeseg_core::label::{LabelSpace, LabelSpaceMode};
use cubeseg_core::metrics::MetricsReport;
use cubeseg_core::models::SegmentationModel;
use cubeseg_core::scenegen::{
    generate_dataset, load_mask, load_rgb, save_rgb, DatasetManifest, SceneError, Split,
};
use cubeseg_core::trainer::{self, CheckpointPlan, TrainOutcome};
use cubeseg_core::viz::font::{draw_text, text_width};
use cubeseg_core::RgbImage;

use crate::config::RunConfig;
use crate::CliError;

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn load_manifest(root: &Path) -> Result<DatasetManifest, CliError> {
    let path = root.join("manifest.json");
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no dataset at {}; run `cubeseg generate` first",
            root.display()
        )));
    }
    Ok(DatasetManifest::load(&path)?)
}

fn print_counts(manifest: &DatasetManifest) {
    let (train, val, test) = manifest.split_counts();
    println!(
        "samples: {} (train {train}, val {val}, test {test})",
        manifest.samples.len()
    );
}

pub fn generate(workdir: &Path, config_path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(&workdir.join(config_path))?;
    let dataset_hash = cfg.dataset_hash();
    let root = workdir.join(&cfg.dataset.root);
    let manifest_path = root.join("manifest.json");

    if manifest_path.exists() {
        let existing = DatasetManifest::load(&manifest_path)?;
        if existing.config_hash == dataset_hash {
            println!("dataset at {} is up to date (config {dataset_hash})", root.display());
            print_counts(&existing);
            return Ok(());
        }
        return Err(CliError::Data(format!(
            "dataset at {} was generated from a different config ({} vs {dataset_hash}); \
             point dataset.root at a fresh directory or delete the old one",
            root.display(),
            existing.config_hash
        )));
    }

    let spec = cfg.generate_spec()?;
    let base = generate_dataset(&spec, &root)?;
    let rendered = base.samples.len();
    let aug = &cfg.dataset.augmentation;
    let expanded = expand_dataset(&base, &root, &aug.ops, aug.factor, cfg.dataset.seed)?;
    let s = &cfg.dataset.split;
    let fractions = SplitFractions {
        train: s.fractions[0],
        val: s.fractions[1],
        test: s.fractions[2],
    };
    let mut manifest = split_dataset(&expanded, fractions, s.seed, s.grouped)?;
    manifest.config_hash = dataset_hash.clone();
    manifest.save(&manifest_path)?;

    println!(
        "rendered {rendered} scenes into {} (x{} augmentation, config {dataset_hash})",
        root.display(),
        aug.factor
    );
    print_counts(&manifest);
    Ok(())
}

pub fn train(workdir: &Path, config_path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(&workdir.join(config_path))?;
    let hash = cfg.hash()?;
    let model_cfg = cfg.resolved_model()?;
    let root = workdir.join(&cfg.dataset.root);
    let manifest = load_manifest(&root)?;
    if manifest.config_hash != cfg.dataset_hash() {
        return Err(CliError::Data(format!(
            "dataset at {} does not match this config ({} vs {}); regenerate it",
            root.display(),
            manifest.config_hash,
            cfg.dataset_hash()
        )));
    }

    let train_data = DatasetCache::load(&manifest, &root, Split::Train, model_cfg.input_size)?;
    let val_data = DatasetCache::load(&manifest, &root, Split::Val, model_cfg.input_size)?;
    println!(
        "training {} on {} samples ({} val), input {}x{}, config {hash}",
        model_cfg.arch,
        train_data.len(),
        val_data.len(),
        model_cfg.input_size.0,
        model_cfg.input_size.1
    );

    let checkpoint_dir = workdir.join(&cfg.train.checkpoint_dir);
    ensure_dir(&checkpoint_dir)?;
    let plan = CheckpointPlan {
        dir: checkpoint_dir.clone(),
        meta: serde_json::json!({
            "config_hash": hash,
            "arch": model_cfg.arch.as_str(),
            "label_space": cfg.dataset.label_space,
        }),
    };

    let train_cfg = cfg.train_config();
    let total = train_cfg.epochs;
    let mut model = SegmentationModel::build(&model_cfg, train_cfg.seed)?;
    let outcome = trainer::train(
        &mut model,
        &train_data,
        &val_data,
        &train_cfg,
        Some(&plan),
        |epoch, stats| {
            println!(
                "epoch {epoch:>3}/{total}  train_loss {:.4}  val_loss {:.4}  \
                 train_miou {:.4}  val_miou {:.4}  {:.1}s",
                stats.train_loss,
                stats.val_loss,
                stats.train_mean_iou,
                stats.val_mean_iou,
                stats.seconds
            );
            std::ops::ControlFlow::Continue(())
        },
    )?;

    let report_dir = cfg.report_dir(workdir);
    ensure_dir(&report_dir)?;
    let arch = model_cfg.arch.as_str();
    let history_path = report_dir.join(format!("{arch}_history.json"));
    outcome.history.save_json(&history_path)?;
    outcome.history.render_curves(
        &report_dir.join(format!("{arch}_loss.png")),
        &report_dir.join(format!("{arch}_iou.png")),
    )?;
    write_run_summary(&report_dir, &cfg, &hash, arch, &outcome, &plan)?;

    println!(
        "best epoch {} val MeanIoU {:.4}; checkpoints in {}, reports in {}",
        outcome.best_epoch,
        outcome.best_val_mean_iou,
        checkpoint_dir.display(),
        report_dir.display()
    );
    Ok(())
}

fn write_run_summary(
    report_dir: &Path,
    cfg: &RunConfig,
    hash: &str,
    arch: &str,
    outcome: &TrainOutcome,
    plan: &CheckpointPlan,
) -> Result<(), CliError> {
    let summary = serde_json::json!({
        "config_hash": hash,
        "arch": arch,
        "label_space": cfg.dataset.label_space,
        "epochs": outcome.history.epochs.len(),
        "best_epoch": outcome.best_epoch,
        "best_val_mean_iou": outcome.best_val_mean_iou,
        "checkpoints": {
            "best": plan.best_path().display().to_string(),
            "last": plan.last_path().display().to_string(),
        },
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&report_dir.join(format!("{arch}_run.json")), &(text + "\n"))
}

pub fn evaluate(
    workdir: &Path,
    config_path: &Path,
    checkpoint: &Path,
    split: Split,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(&workdir.join(config_path))?;
    let hash = cfg.hash()?;
    let ckpt_path = workdir.join(checkpoint);
    let (mut model, extra) = SegmentationModel::load(&ckpt_path)?;
    match extra.get("config_hash").and_then(|v| v.as_str()) {
        Some(stored) if stored == hash => {}
        Some(stored) => {
            return Err(CliError::Checkpoint(format!(
                "{} was trained under config {stored}, this config hashes to {hash}",
                ckpt_path.display()
            )))
        }
        None => {
            return Err(CliError::Checkpoint(format!(
                "{} carries no config hash",
                ckpt_path.display()
            )))
        }
    }

    let root = workdir.join(&cfg.dataset.root);
    let manifest = load_manifest(&root)?;
    let data = DatasetCache::load(&manifest, &root, split, model.config().input_size)?;
    let arch = model.config().arch.as_str().to_string();
    let report = trainer::evaluate(
        &mut model,
        &data,
        cfg.train.batch_size,
        cfg.report.include_background,
    )?
    .tag("split", split_name(split))
    .tag("arch", &arch)
    .tag("config_hash", &hash)
    .tag("checkpoint", ckpt_path.display().to_string());

    let report_dir = cfg.report_dir(workdir);
    ensure_dir(&report_dir)?;
    let stem = format!("{arch}_{}_report", split_name(split));
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&report_dir.join(format!("{stem}.json")), &(json + "\n"))?;
    let table = report.render_table(&manifest.label_space.class_names);
    write_text(&report_dir.join(format!("{stem}.txt")), &table)?;

    print!("{table}");
    println!(
        "MeanIoU {:.4}  macro-F1 {:.4}  ({} split, config {hash})",
        report.mean_iou,
        report.macro_f1,
        split_name(split)
    );
    Ok(())
}

/// One comparison row; the numbers are carried over from the source report
/// untouched.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub split: String,
    pub num_classes: usize,
    pub mean_iou: f64,
    pub macro_f1: f64,
    pub config_hash: String,
    pub source: String,
    /// Set when this row's label space differs from the most common one in
    /// the table.
    pub mixed_label_space: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    /// Builds the table from loaded metrics reports, sorted by MeanIoU
    /// descending. Any source filename is kept for traceability.
    pub fn from_reports(reports: Vec<(String, MetricsReport)>) -> Self {
        let mut rows: Vec<ComparisonRow> = reports
            .into_iter()
            .map(|(source, r)| ComparisonRow {
                model: r.tags.get("arch").cloned().unwrap_or_else(|| source.clone()),
                split: r.tags.get("split").cloned().unwrap_or_else(|| "?".into()),
                num_classes: r.num_classes,
                mean_iou: r.mean_iou,
                macro_f1: r.macro_f1,
                config_hash: r.tags.get("config_hash").cloned().unwrap_or_default(),
                source,
                mixed_label_space: false,
            })
            .collect();
        rows.sort_by(|a, b| b.mean_iou.total_cmp(&a.mean_iou));

        // flag rows that disagree with the most common class count
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for row in &rows {
            match counts.iter_mut().find(|(n, _)| *n == row.num_classes) {
                Some((_, c)) => *c += 1,
                None => counts.push((row.num_classes, 1)),
            }
        }
        if let Some(&(majority, _)) = counts.iter().max_by_key(|(_, c)| *c) {
            for row in &mut rows {
                row.mixed_label_space = row.num_classes != majority;
            }
        }
        ComparisonReport { rows }
    }

    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<6} {:>8} {:>9} {:>9}  {}",
            "model", "split", "classes", "MeanIoU", "macro-F1", "config"
        );
        for row in &self.rows {
            let classes = if row.mixed_label_space {
                format!("{}*", row.num_classes)
            } else {
                row.num_classes.to_string()
            };
            let _ = writeln!(
                out,
                "{:<12} {:<6} {:>8} {:>9.4} {:>9.4}  {}",
                row.model, row.split, classes, row.mean_iou, row.macro_f1, row.config_hash
            );
        }
        if self.rows.iter().any(|r| r.mixed_label_space) {
            let _ = writeln!(out, "* label space differs from the other rows");
        }
        out
    }

    /// The text table drawn onto a PNG canvas.
    pub fn render_image(&self) -> RgbImage {
        let text = self.render_text();
        let lines: Vec<&str> = text.lines().collect();
        let line_h = 14;
        let pad = 10;
        let w = lines.iter().map(|l| text_width(l)).max().unwrap_or(0) + 2 * pad;
        let h = lines.len() * line_h + 2 * pad;
        let mut canvas = Array3::from_elem((h, w, 3), 245u8);
        for (i, line) in lines.iter().enumerate() {
            draw_text(
                &mut canvas,
                pad as i64,
                (pad + i * line_h) as i64,
                line,
                [25, 25, 30],
            );
        }
        canvas
    }
}

pub fn compare(workdir: &Path, reports: &[PathBuf], out_dir: &Path) -> Result<(), CliError> {
    let mut loaded = Vec::new();
    for path in reports {
        let full = workdir.join(path);
        let bytes = std::fs::read(&full)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", full.display())))?;
        let report: MetricsReport = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::Data(format!("{} is not a metrics report: {e}", full.display()))
        })?;
        let name = full
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| full.display().to_string());
        loaded.push((name, report));
    }
    let comparison = ComparisonReport::from_reports(loaded);

    let out = match std::env::var_os(crate::config::REPORT_DIR_ENV) {
        Some(dir) => workdir.join(dir),
        None => workdir.join(out_dir),
    };
    ensure_dir(&out)?;
    let json = serde_json::to_string_pretty(&comparison).expect("comparison serializes");
    write_text(&out.join("comparison.json"), &(json + "\n"))?;
    let text = comparison.render_text();
    write_text(&out.join("comparison.txt"), &text)?;
    save_rgb(&out.join("comparison.png"), &comparison.render_image())?;

    print!("{text}");
    println!("written to {}", out.display());
    Ok(())
}

fn label_space_for(extra: &serde_json::Value, num_classes: usize) -> LabelSpace {
    if let Some(mode) = extra
        .get("label_space")
        .and_then(|v| serde_json::from_value::<LabelSpaceMode>(v.clone()).ok())
    {
        let space = LabelSpace::new(mode);
        if space.num_classes == num_classes {
            return space;
        }
    }
    match num_classes {
        4 => LabelSpace::semantic4(),
        44 => LabelSpace::percube44(),
        n => {
            // checkpoint from a custom class count: generic names
            let mut space = LabelSpace::semantic4();
            space.num_classes = n;
            space.class_names = (0..n).map(|c| format!("class_{c}")).collect();
            space
        }
    }
}

fn gray_to_rgb(image: &Array2<f32>) -> RgbImage {
    let (h, w) = image.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, _)| {
        (image[(y, x)] * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

pub fn predict(
    workdir: &Path,
    checkpoint: &Path,
    image: &Path,
    truth: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let ckpt_path = workdir.join(checkpoint);
    let (mut model, extra) = SegmentationModel::load(&ckpt_path)?;
    let input_size = model.config().input_size;
    let num_classes = model.config().num_classes;

    let image_path = workdir.join(image);
    let rgb = load_rgb(&image_path).map_err(|e| match e {
        SceneError::Io { path, source } => {
            CliError::Io(format!("{}: {source}", path.display()))
        }
        other => CliError::Data(other.to_string()),
    })?;
    let gray = resize_bilinear(&normalize(&to_grayscale(&rgb)?), input_size);

    let truth_mask = match truth {
        Some(path) => {
            let mask = resize_nearest(&load_mask(&workdir.join(path))?, input_size);
            if let Some(&bad) = mask.iter().find(|&&v| v as usize >= num_classes) {
                return Err(CliError::Data(format!(
                    "truth mask contains class {bad}, model has {num_classes} classes"
                )));
            }
            Some(mask)
        }
        None => None,
    };

    let pred = trainer::predict(&mut model, &gray)?;
    let space = label_space_for(&extra, num_classes);
    let panel = cubeseg_core::viz::prediction_panel(
        &gray_to_rgb(&gray),
        truth_mask.as_ref(),
        &pred,
        &space,
    );
    let out_path = workdir.join(out);
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    save_rgb(&out_path, &panel)?;

    let hash = extra
        .get("config_hash")
        .and_then(|v| v.as_str())
        .unwrap_or("unknown");
    println!(
        "wrote {} ({} viewed at {}x{}, config {hash})",
        out_path.display(),
        model.config().arch,
        input_size.0,
        input_size.1
    );
    Ok(())
}
