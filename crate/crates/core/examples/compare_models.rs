//! Train DANF, PI-DANF, VPNF and VPNF+ on one simulated room and print the
//! held-out comparison table.
//!
//!     cargo run --release --example compare_models -- [iterations] [width] [duration_s] [times_per_batch]
//!
//! The full desk configuration is `20000 128 0.1 250`; the defaults are a
//! much smaller run that finishes in well under an hour on one core.

use vpnf::metrics::evaluate;
use vpnf::physics::Medium;
use vpnf::roomsim::{build_dataset, sample_room, GridSpec};
use vpnf::store::{format_table, summarize, ReportRecord};
use vpnf::training::{build_model, train, ModelKind, Split, SplitMode, TrainConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> vpnf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let iterations: usize = arg(1, 2000);
    let width: usize = arg(2, 128);
    let duration: f64 = arg(3, 0.025);
    let times_per_batch: usize = arg(4, 8);

    let room = sample_room(0)?;
    let dataset = build_dataset(&room, GridSpec::default_for(room.cube_origin), 8000.0, duration, &Medium::default())?;
    let split = Split::new(&dataset.grid, SplitMode::Volume, 100, 50, 0)?;

    let mut records = Vec::new();
    for model in [ModelKind::Danf, ModelKind::PiDanf, ModelKind::Vpnf, ModelKind::VpnfPlus] {
        let config = TrainConfig {
            model,
            width,
            iterations,
            times_per_batch,
            collocation_count: 4000,
            collocation_per_iteration: 256,
            validation_interval: 250,
            seed: 1,
            ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let outcome = train(build_model(&config, &dataset)?, &dataset, &split, &config)?;
        let scores = evaluate(&outcome.best, &dataset, &split.evaluation)?;
        log::info!("{model}: {:.1} s, W {:.2} dB", t0.elapsed().as_secs_f64(), scores.nmse_w());
        records.push(ReportRecord::new(room.seed, &split, model, &scores));
    }
    print!("{}", format_table(&summarize(&records)?));
    Ok(())
}
