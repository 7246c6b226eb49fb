//! Fit a VPNF to a closed-form plane wave and score it on held-out positions.
//!
//!     cargo run --release --example plane_wave_fit -- [iterations]

use std::f64::consts::PI;

use vpnf::field::{plane_wave_phase, AnalyticPotential};
use vpnf::metrics::evaluate;
use vpnf::physics::Medium;
use vpnf::roomsim::{FoaDataset, GridSpec};
use vpnf::training::{build_model, train, ModelKind, Split, SplitMode, TrainConfig};

fn main() -> vpnf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);

    let medium = Medium::default();
    // two wavelengths across the 1 m cube
    let kn = 4.0 * PI;
    let dir = [1.0, 0.6, 0.3];
    let norm: f64 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];
    let k = dir.map(|d: f64| kn * d / norm.sqrt());
    let field = AnalyticPotential {
        medium,
        psi: move |p: &[f64; 4]| plane_wave_phase(k, 0.3, &medium, p).sin().scale(1.0 / kn),
    };

    let grid = GridSpec {
        origin: [0.0; 3],
        spacing: 0.1,
        points_per_axis: 11,
    };
    let dataset = FoaDataset::from_field(&field, grid, 8000.0, 80, 0)?;
    let split = Split::new(&grid, SplitMode::Volume, 100, 50, 1)?;

    let config = TrainConfig {
        model: ModelKind::Vpnf,
        depth: 2,
        width: 128,
        iterations,
        lr0: 1e-3,
        lr_min: 1e-5,
        times_per_batch: 6,
        validation_interval: 500,
        seed: 2,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let model = build_model(&config, &dataset)?;
    let outcome = train(model, &dataset, &split, &config)?;
    let scores = evaluate(&outcome.best, &dataset, &split.evaluation)?;
    println!(
        "{iterations} iterations in {:.1} s; held-out NMSE W {:.2} dB, XYZ {:.2} dB; PCC W {:.4}, XYZ {:.4}",
        t0.elapsed().as_secs_f64(),
        scores.nmse_w(),
        scores.nmse_xyz(),
        scores.pcc_w(),
        scores.pcc_xyz()
    );
    Ok(())
}
