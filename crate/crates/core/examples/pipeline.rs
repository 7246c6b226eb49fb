//! The file-based workflow end to end: simulate rooms, split, train every
//! model kind, evaluate each checkpoint and aggregate the reports. Everything
//! lands under `VPNF_OUTPUT_ROOT` (default `vpnf-output/`).
//!
//!     cargo run --release --example pipeline -- [iterations]

use vpnf::store::{
    cmd_evaluate, cmd_report, cmd_simulate, cmd_split, cmd_train, format_table, output_root, ExperimentConfig,
    CHECKPOINT_FILE,
};
use vpnf::training::{ModelKind, SplitMode};

fn main() -> vpnf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let root = output_root().join("pipeline-example");

    // a coarse 9³ grid keeps this quick; drop the overrides for the full grid
    let cfg = ExperimentConfig::default().with_overrides(&[
        "rooms=2".into(),
        "duration=0.05".into(),
        "grid_spacing=0.125".into(),
        "grid_points_per_axis=9".into(),
        "volume_train_counts=[100]".into(),
        "surface_train_counts=[100]".into(),
        format!("train.iterations={iterations}"),
        "train.depth=2".into(),
        "train.width=32".into(),
        "train.lr0=1e-3".into(),
        "train.times_per_batch=16".into(),
        "train.collocation_count=2000".into(),
        "train.collocation_per_iteration=256".into(),
        "train.validation_interval=50".into(),
    ])?;
    let manifest = cmd_simulate(&cfg, &root.join("data"))?;

    let mut reports = Vec::new();
    for entry in &manifest {
        let dataset = root.join("data").join(&entry.file);
        for (mode, d) in [(SplitMode::Volume, 100), (SplitMode::Surface, 100)] {
            let tag = format!("{}_{mode}_{d}", entry.seed);
            let split = root.join(format!("{tag}_split.json"));
            cmd_split(&dataset, mode, d, cfg.validation_count, cfg.split_seed, &split)?;
            for model in ModelKind::ALL {
                let dir = root.join(&tag).join(model.name().replace('+', "plus"));
                let train = vpnf::training::TrainConfig { model, ..cfg.train.clone() };
                cmd_train(&dataset, &split, &train, &dir)?;
                let report = dir.join("report.csv");
                cmd_evaluate(&dir.join(CHECKPOINT_FILE), &dataset, &split, None, &report)?;
                reports.push(report);
            }
        }
    }
    let rows = cmd_report(&reports, &root.join("summary"))?;
    print!("{}", format_table(&rows));
    println!("artifacts in {}", root.display());
    Ok(())
}
