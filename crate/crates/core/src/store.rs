//! Experiment configuration, artifact files, and the command entry points
//! behind the `vpnf` binary.
//!
//! Every command reads and writes plain files so stages can run as separate
//! processes: `simulate` → `split` → `train` → `evaluate` → `report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::metrics::{evaluate, ChannelScores};
use crate::physics::Medium;
use crate::roomsim::{build_dataset, sample_room, FoaDataset, GridSpec, RoomSpec};
use crate::training::{
    build_model, train, write_log_csv, ModelKind, Split, SplitMode, TrainConfig, ValidationRecord, VALIDATION_COUNT,
};

/// Overrides the default output directory.
pub const OUTPUT_ROOT_ENV: &str = "VPNF_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("vpnf-output"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rooms: usize,
    /// Explicit room seeds; when empty, rooms use `base_seed + i`.
    pub room_seeds: Vec<u64>,
    pub base_seed: u64,
    pub fs: f64,
    pub duration: f64,
    pub grid_spacing: f64,
    pub grid_points_per_axis: usize,
    pub medium: Medium,
    pub volume_train_counts: Vec<usize>,
    pub surface_train_counts: Vec<usize>,
    pub validation_count: usize,
    pub split_seed: u64,
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rooms: 10,
            room_seeds: Vec::new(),
            base_seed: 0,
            fs: 8000.0,
            duration: 0.1,
            grid_spacing: 0.05,
            grid_points_per_axis: 21,
            medium: Medium::default(),
            volume_train_counts: vec![30, 50, 70, 100, 150, 200],
            surface_train_counts: vec![100, 200],
            validation_count: VALIDATION_COUNT,
            split_seed: 0,
            models: ModelKind::ALL.to_vec(),
            train: TrainConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        if self.room_seeds.is_empty() {
            (0..self.rooms as u64).map(|i| self.base_seed + i).collect()
        } else {
            self.room_seeds.clone()
        }
    }

    pub fn grid_for(&self, room: &RoomSpec) -> GridSpec {
        GridSpec {
            origin: room.cube_origin,
            spacing: self.grid_spacing,
            points_per_axis: self.grid_points_per_axis,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(output_root)
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.train.validate()?;
        if self.seeds().is_empty() {
            return Err(Error::config("no rooms configured"));
        }
        if !(self.fs > 0.0 && self.duration > 0.0 && self.grid_spacing > 0.0 && self.grid_points_per_axis >= 2) {
            return Err(Error::config("sample rate, duration and grid must be positive"));
        }
        let n = self.grid_points_per_axis;
        let surface = n.pow(3) - (n - 2).pow(3);
        for &d in &self.volume_train_counts {
            if d + self.validation_count > n.pow(3) {
                return Err(Error::config(format!("volume D = {d} leaves no room for validation")));
            }
        }
        for &d in &self.surface_train_counts {
            if d + self.validation_count > surface {
                return Err(Error::config(format!("surface D = {d} exceeds the {surface}-point pool")));
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides; keys are dotted paths
    /// (`train.iterations=2000`) and values are parsed as JSON, falling back
    /// to a plain string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        apply_overrides(self, overrides)
    }
}

/// Applies dotted `key=value` overrides to any serializable config.
pub fn apply_overrides<T>(base: &T, overrides: &[String]) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut doc = serde_json::to_value(base)?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("override {item:?} is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .ok_or_else(|| Error::usage(format!("override key {key:?} does not name a field")))?
                .entry(part)
                .or_insert(Value::Null);
        }
        *slot = value;
    }
    serde_json::from_value(doc).map_err(|e| Error::config(format!("invalid override: {e}")))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a config file (or the defaults) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub file: PathBuf,
    pub room: RoomSpec,
    pub positions: usize,
    pub samples: usize,
}

pub fn dataset_file_name(seed: u64) -> String {
    format!("room_{seed:04}.foad")
}

/// Simulates every configured room into `out_dir` and writes `manifest.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let mut manifest = Vec::new();
    for seed in cfg.seeds() {
        let room = sample_room(seed)?;
        let ds = build_dataset(&room, cfg.grid_for(&room), cfg.fs, cfg.duration, &cfg.medium)?;
        let file = PathBuf::from(dataset_file_name(seed));
        let path = out_dir.join(&file);
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        ds.save(&path)?;
        log::info!("room {seed}: {} positions × {} samples -> {}", ds.num_positions(), ds.len, path.display());
        manifest.push(ManifestEntry {
            seed,
            file,
            room,
            positions: ds.num_positions(),
            samples: ds.len,
        });
    }
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// split

pub fn cmd_split(
    dataset: &Path,
    mode: SplitMode,
    train_count: usize,
    validation_count: usize,
    seed: u64,
    out: &Path,
) -> Result<Split> {
    let ds = FoaDataset::load(dataset)?;
    let split = Split::new(&ds.grid, mode, train_count, validation_count, seed)?;
    write_json(out, &split)?;
    Ok(split)
}

// ---------------------------------------------------------------------------
// train

/// Sidecar written next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub config: TrainConfig,
    pub dataset_seed: u64,
    pub split_mode: SplitMode,
    pub split_seed: u64,
    pub train_count: usize,
    pub history: Vec<ValidationRecord>,
    pub best_index: usize,
}

pub const CHECKPOINT_FILE: &str = "model.vpnf";
pub const TRAIN_RECORD_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

/// Trains one model and writes checkpoint, sidecar and log into `out_dir`.
pub fn cmd_train(dataset: &Path, split: &Path, config: &TrainConfig, out_dir: &Path) -> Result<TrainRecord> {
    let ds = FoaDataset::load(dataset)?;
    let split: Split = read_json(split)?;
    let model = build_model(config, &ds)?;
    let outcome = train(model, &ds, &split, config)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    outcome.best.save(&out_dir.join(CHECKPOINT_FILE))?;
    let mut csv = Vec::new();
    write_log_csv(&outcome.log, &mut csv).map_err(|e| Error::io(out_dir.join(TRAIN_LOG_FILE), e))?;
    write_file(&out_dir.join(TRAIN_LOG_FILE), &csv)?;
    let record = TrainRecord {
        config: config.clone(),
        dataset_seed: ds.seed,
        split_mode: split.mode,
        split_seed: split.seed,
        train_count: split.train.len(),
        history: outcome.history,
        best_index: outcome.best_index,
    };
    write_json(&out_dir.join(TRAIN_RECORD_FILE), &record)?;
    Ok(record)
}

// ---------------------------------------------------------------------------
// evaluate

/// One row of a report: a room × condition × model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub room_seed: u64,
    pub mode: SplitMode,
    pub train_count: usize,
    pub split_seed: u64,
    pub model: ModelKind,
    pub nmse_w_db: f64,
    pub nmse_xyz_db: f64,
    pub pcc_w: f64,
    pub pcc_xyz: f64,
    pub eval_positions: usize,
}

impl ReportRecord {
    pub fn new(room_seed: u64, split: &Split, model: ModelKind, scores: &ChannelScores) -> Self {
        ReportRecord {
            room_seed,
            mode: split.mode,
            train_count: split.train.len(),
            split_seed: split.seed,
            model,
            nmse_w_db: scores.nmse_w(),
            nmse_xyz_db: scores.nmse_xyz(),
            pcc_w: scores.pcc_w(),
            pcc_xyz: scores.pcc_xyz(),
            eval_positions: scores.positions,
        }
    }
}

pub fn write_report_csv(path: &Path, records: &[ReportRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::format("report", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("report", e.to_string()))?;
    write_file(path, &bytes)
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format("report", format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format("report", format!("{}: {e}", path.display()))))
        .collect()
}

/// Scores a checkpoint on the split's evaluation positions. The model kind
/// comes from the checkpoint's sidecar when present, else from `model`.
pub fn cmd_evaluate(
    checkpoint: &Path,
    dataset: &Path,
    split: &Path,
    model: Option<ModelKind>,
    out: &Path,
) -> Result<ReportRecord> {
    let field = FieldModel::load(checkpoint)?;
    let ds = FoaDataset::load(dataset)?;
    let split: Split = read_json(split)?;
    split.validate(ds.num_positions())?;
    let sidecar = checkpoint.with_file_name(TRAIN_RECORD_FILE);
    let kind = match model {
        Some(k) => k,
        None if sidecar.exists() => read_json::<TrainRecord>(&sidecar)?.config.model,
        None => return Err(Error::usage("model kind unknown: pass it explicitly or keep the checkpoint sidecar")),
    };
    if kind.head() != crate::field::FoaField::head(&field) {
        return Err(Error::config(format!("checkpoint head does not match model {kind}")));
    }
    let scores = evaluate(&field, &ds, &split.evaluation)?;
    let record = ReportRecord::new(ds.seed, &split, kind, &scores);
    write_report_csv(out, std::slice::from_ref(&record))?;
    Ok(record)
}

// ---------------------------------------------------------------------------
// report

/// Room-averaged scores for one condition and model (dB values averaged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: SplitMode,
    pub train_count: usize,
    pub model: ModelKind,
    pub rooms: usize,
    pub nmse_w_db: f64,
    pub nmse_xyz_db: f64,
    pub pcc_w: f64,
    pub pcc_xyz: f64,
}

type ConditionKey = (u8, usize, usize);

fn condition_key(r: &ReportRecord) -> ConditionKey {
    let mode = match r.mode {
        SplitMode::Volume => 0,
        SplitMode::Surface => 1,
    };
    let model = ModelKind::ALL.iter().position(|k| *k == r.model).unwrap_or(0);
    (mode, r.train_count, model)
}

/// Averages records over rooms per (mode, D, model).
pub fn summarize(records: &[ReportRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::usage("no report records"));
    }
    let mut groups: BTreeMap<ConditionKey, Vec<&ReportRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(condition_key(r)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for group in groups.values() {
        let first = group[0];
        let mut rooms: Vec<u64> = group.iter().map(|r| r.room_seed).collect();
        rooms.sort_unstable();
        if rooms.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config(format!(
                "room listed twice for {} {} D={}",
                first.model, first.mode, first.train_count
            )));
        }
        if group.iter().any(|r| r.eval_positions != first.eval_positions) {
            return Err(Error::config(format!(
                "incompatible evaluation sets for {} {} D={}",
                first.model, first.mode, first.train_count
            )));
        }
        let n = group.len() as f64;
        let mean = |f: fn(&ReportRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        rows.push(SummaryRow {
            mode: first.mode,
            train_count: first.train_count,
            model: first.model,
            rooms: group.len(),
            nmse_w_db: mean(|r| r.nmse_w_db),
            nmse_xyz_db: mean(|r| r.nmse_xyz_db),
            pcc_w: mean(|r| r.pcc_w),
            pcc_xyz: mean(|r| r.pcc_xyz),
        });
    }
    Ok(rows)
}

/// Fixed-width table: one line per model, NMSE and PCC for W and XYZ.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let mut last: Option<(SplitMode, usize)> = None;
    for r in rows {
        if last != Some((r.mode, r.train_count)) {
            out.push_str(&format!(
                "\n{} D={}\n{:<10} {:>10} {:>10} {:>8} {:>8}\n",
                r.mode, r.train_count, "model", "NMSE W", "NMSE XYZ", "PCC W", "PCC XYZ"
            ));
            last = Some((r.mode, r.train_count));
        }
        out.push_str(&format!(
            "{:<10} {:>10.2} {:>10.2} {:>8.3} {:>8.3}\n",
            r.model.name(),
            r.nmse_w_db,
            r.nmse_xyz_db,
            r.pcc_w,
            r.pcc_xyz
        ));
    }
    out
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_DATA_FILE: &str = "plot_data.csv";

/// Aggregates report CSVs into `summary.csv` and long-format `plot_data.csv`.
pub fn cmd_report(reports: &[PathBuf], out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut records = Vec::new();
    for p in reports {
        records.extend(read_report_csv(p)?);
    }
    let rows = summarize(&records)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| Error::format("summary", e.to_string()))?;
    }
    write_file(&out_dir.join(SUMMARY_FILE), &w.into_inner().map_err(|e| Error::format("summary", e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "train_count", "model", "metric", "value"])
        .map_err(|e| Error::format("plot data", e.to_string()))?;
    for r in &rows {
        for (metric, value) in [
            ("nmse_w_db", r.nmse_w_db),
            ("nmse_xyz_db", r.nmse_xyz_db),
            ("pcc_w", r.pcc_w),
            ("pcc_xyz", r.pcc_xyz),
        ] {
            w.write_record([
                r.mode.to_string(),
                r.train_count.to_string(),
                r.model.name().to_string(),
                metric.to_string(),
                value.to_string(),
            ])
            .map_err(|e| Error::format("plot data", e.to_string()))?;
        }
    }
    write_file(&out_dir.join(PLOT_DATA_FILE), &w.into_inner().map_err(|e| Error::format("plot data", e.to_string()))?)?;
    Ok(rows)
}

/// Pretty-printed default configuration.
pub fn cmd_defaults() -> Result<String> {
    Ok(serde_json::to_string_pretty(&ExperimentConfig::default())?)
}
