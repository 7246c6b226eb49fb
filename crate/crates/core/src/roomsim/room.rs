use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clearance kept between walls and both the source and the target cube.
pub const WALL_BUFFER: f64 = 0.5;
/// Edge length of the target region Ω.
pub const CUBE_SIZE: f64 = 1.0;
/// Minimum distance from the source to the closest point of Ω.
pub const SOURCE_CLEARANCE: f64 = 0.5;
/// Placement attempts before a room is declared too small.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Shoebox room with a point source and the cube Ω where RIRs are sampled.
///
/// Walls are indexed `[x=0, x=Lx, y=0, y=Ly, z=0, z=Lz]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims: [f64; 3],
    pub wall_absorption: [f64; 6],
    pub source_pos: [f64; 3],
    pub cube_origin: [f64; 3],
    pub cube_size: f64,
    pub seed: u64,
}

impl RoomSpec {
    pub fn cube_center(&self) -> [f64; 3] {
        self.cube_origin.map(|o| o + 0.5 * self.cube_size)
    }

    /// Whether `p` lies in the closed cube Ω (with slack `tol`).
    pub fn in_cube(&self, p: &[f64; 3], tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.cube_origin[a] - tol && p[a] <= self.cube_origin[a] + self.cube_size + tol)
    }

    /// Euclidean distance from `p` to the nearest point of Ω.
    pub fn distance_to_cube(&self, p: &[f64; 3]) -> f64 {
        box_distance(p, &self.cube_origin, self.cube_size)
    }

    /// Checks the placement invariants: absorption range, wall buffer for the
    /// source and all cube corners, and a source outside Ω.
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::config(format!("room dimensions must be positive: {:?}", self.dims)));
        }
        if self.wall_absorption.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::config(format!(
                "wall absorption must lie in (0, 1]: {:?}",
                self.wall_absorption
            )));
        }
        for a in 0..3 {
            let (lo, hi) = (WALL_BUFFER, self.dims[a] - WALL_BUFFER);
            let s = self.source_pos[a];
            let (c0, c1) = (self.cube_origin[a], self.cube_origin[a] + self.cube_size);
            if s < lo || s > hi || c0 < lo || c1 > hi {
                return Err(Error::config(format!("placement violates the {WALL_BUFFER} m wall buffer on axis {a}")));
            }
        }
        if self.in_cube(&self.source_pos, 0.0) {
            return Err(Error::config("source lies inside the target region"));
        }
        Ok(())
    }
}

pub(crate) fn box_distance(p: &[f64; 3], origin: &[f64; 3], size: f64) -> f64 {
    (0..3)
        .map(|a| {
            let d = (origin[a] - p[a]).max(0.0).max(p[a] - origin[a] - size);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Random room: horizontal dimensions in `[5, 8)` m, height in `[2.5, 4.5)`
/// m, per-wall absorption uniform in `[0.1, 0.9]`.
pub fn sample_room(seed: u64) -> Result<RoomSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [
        rng.gen_range(5.0..8.0),
        rng.gen_range(5.0..8.0),
        rng.gen_range(2.5..4.5),
    ];
    place_in_room(dims, &mut rng, seed)
}

/// Like [`sample_room`] with fixed dimensions.
pub fn sample_room_with_dims(dims: [f64; 3], seed: u64) -> Result<RoomSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    place_in_room(dims, &mut rng, seed)
}

fn place_in_room(dims: [f64; 3], rng: &mut ChaCha8Rng, seed: u64) -> Result<RoomSpec> {
    let wall_absorption = [0; 6].map(|_: i32| rng.gen_range(0.1..=0.9));
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let cube_origin = [0, 1, 2].map(|a| rng.gen_range(0.0..=(dims[a] - CUBE_SIZE).max(0.0)));
        let source_pos = [0, 1, 2].map(|a| rng.gen_range(0.0..=dims[a]));
        let room = RoomSpec {
            dims,
            wall_absorption,
            source_pos,
            cube_origin,
            cube_size: CUBE_SIZE,
            seed,
        };
        if room.validate().is_ok() && room.distance_to_cube(&source_pos) >= SOURCE_CLEARANCE {
            return Ok(room);
        }
    }
    Err(Error::config(format!(
        "no valid source/cube placement after {MAX_PLACEMENT_ATTEMPTS} attempts in room {dims:?}"
    )))
}
