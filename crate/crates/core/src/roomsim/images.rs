//! Mirror-image enumeration for a shoebox room.
//!
//! Along one axis of length `L`, a source at `s` has images
//! `(1 - 2q) s + 2 n L` for `q ∈ {0, 1}`, `n ∈ ℤ`, reflected `|n - q|` times
//! off the wall at 0 and `|n|` times off the wall at `L`.

use crate::physics::Medium;
use crate::roomsim::room::{box_distance, RoomSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    /// Product of wall reflection coefficients `sqrt(1 - α)`; the `1/(4πd)`
    /// spreading is applied at render time.
    pub amplitude: f64,
    pub order: usize,
}

/// Images along one axis: `(coordinate, reflections at 0, reflections at L)`.
pub fn axis_images(source: f64, length: f64, max_dist: f64, lo: f64, hi: f64) -> Vec<(f64, usize, usize)> {
    let n_max = ((max_dist + hi.abs() + length) / (2.0 * length)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..2i64 {
            let x = (1 - 2 * q) as f64 * source + 2.0 * n as f64 * length;
            let d = (lo - x).max(0.0).max(x - hi);
            if d <= max_dist || (n == 0 && q == 0) {
                out.push((x, (n - q).unsigned_abs() as usize, n.unsigned_abs() as usize));
            }
        }
    }
    out
}

/// Every image whose earliest arrival anywhere in Ω is within `horizon`
/// seconds. The direct source is always included; images with zero
/// amplitude are dropped.
pub fn image_sources(room: &RoomSpec, horizon: f64, medium: &Medium) -> Vec<ImageSource> {
    let radius = medium.sound_speed * horizon.max(0.0);
    let beta = room.wall_absorption.map(|a| (1.0 - a).max(0.0).sqrt());
    let per_axis: Vec<Vec<(f64, usize, usize)>> = (0..3)
        .map(|a| {
            let lo = room.cube_origin[a];
            axis_images(room.source_pos[a], room.dims[a], radius, lo, lo + room.cube_size)
        })
        .collect();

    let mut out = Vec::new();
    for &(x, x0, x1) in &per_axis[0] {
        for &(y, y0, y1) in &per_axis[1] {
            for &(z, z0, z1) in &per_axis[2] {
                let position = [x, y, z];
                let order = x0 + x1 + y0 + y1 + z0 + z1;
                if order > 0 && box_distance(&position, &room.cube_origin, room.cube_size) > radius {
                    continue;
                }
                let amplitude = beta[0].powi(x0 as i32)
                    * beta[1].powi(x1 as i32)
                    * beta[2].powi(y0 as i32)
                    * beta[3].powi(y1 as i32)
                    * beta[4].powi(z0 as i32)
                    * beta[5].powi(z1 as i32);
                if amplitude == 0.0 {
                    continue;
                }
                out.push(ImageSource {
                    position,
                    amplitude,
                    order,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> RoomSpec {
        RoomSpec {
            dims: [6.0, 5.5, 3.0],
            wall_absorption: [0.3, 0.5, 0.2, 0.6, 0.4, 0.7],
            source_pos: [1.0, 4.0, 1.5],
            cube_origin: [3.5, 1.0, 1.0],
            cube_size: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn fully_absorbing_walls_leave_direct_path() {
        let mut r = room();
        r.wall_absorption = [1.0; 6];
        let imgs = image_sources(&r, 0.1, &Medium::default());
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].position, r.source_pos);
        assert_eq!(imgs[0].amplitude, 1.0);
    }

    #[test]
    fn vanishing_horizon_keeps_direct_path() {
        let mut r = room();
        // source 1 m from Ω along x
        r.source_pos = [2.5, 1.5, 1.5];
        assert!((r.distance_to_cube(&r.source_pos) - 1.0).abs() < 1e-12);
        let imgs = image_sources(&r, 1e-9, &Medium::default());
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].order, 0);
    }

    #[test]
    fn amplitudes_follow_reflection_counts() {
        let r = room();
        let m = Medium::default();
        let imgs = image_sources(&r, 0.02, &m);
        // first-order image behind the x=0 wall
        let img = imgs
            .iter()
            .find(|i| (i.position[0] + 1.0).abs() < 1e-12 && i.position[1] == 4.0 && i.position[2] == 1.5)
            .expect("x=0 mirror image present");
        assert_eq!(img.order, 1);
        assert!((img.amplitude - (0.7f64).sqrt()).abs() < 1e-15);
        // everything listed is within reach of the horizon
        for i in &imgs {
            assert!(i.order == 0 || r.distance_to_cube(&i.position) <= 0.02 * m.sound_speed + 1e-12);
        }
    }
}
