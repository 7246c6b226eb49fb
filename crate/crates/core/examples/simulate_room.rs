//! Simulate one shoebox room on the default 21³ grid and print a few facts
//! about the resulting FOA impulse responses.
//!
//!     cargo run --release --example simulate_room -- [seed] [out.foad]

use vpnf::physics::Medium;
use vpnf::roomsim::{build_dataset, image_sources, sample_room, GridSpec, CHANNEL_NAMES};

fn main() -> vpnf::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = std::env::args().nth(2);
    let medium = Medium::default();

    let room = sample_room(seed)?;
    println!("room {seed}: {:.2} × {:.2} × {:.2} m", room.dims[0], room.dims[1], room.dims[2]);
    println!("  absorption {:?}", room.wall_absorption.map(|a| (a * 100.0).round() / 100.0));
    println!("  source {:?}, cube origin {:?}", room.source_pos, room.cube_origin);
    println!("  {} image sources within 100 ms", image_sources(&room, 0.1, &medium).len());

    let ds = build_dataset(&room, GridSpec::default_for(room.cube_origin), 8000.0, 0.1, &medium)?;
    println!("{} positions × {} samples at {} Hz", ds.num_positions(), ds.len, ds.fs);

    // the cube centre is position N/2 on an odd lattice
    let centre = ds.num_positions() / 2;
    for (c, name) in CHANNEL_NAMES.iter().enumerate() {
        let rir = ds.rir(centre, c);
        let (peak_at, peak) = rir.iter().enumerate().fold((0, 0.0f32), |b, (i, &v)| if v.abs() > b.1.abs() { (i, v) } else { b });
        let energy: f64 = rir.iter().map(|&v| f64::from(v).powi(2)).sum();
        println!("  {name}: peak {peak:+.4} at {:.2} ms, energy {energy:.3e}", 1e3 * ds.time(peak_at));
    }

    if let Some(path) = out {
        ds.save(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
