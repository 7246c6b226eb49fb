//! Grids of FOA impulse responses and the `FOAD` dataset file.
//!
//! File layout (little-endian):
//!
//! ```text
//! "FOAD"            magic
//! u32               version
//! u64               header length in bytes
//! [u8]              JSON header (fs, len, n, medium, room, grid, seed)
//! f32 * N·4·L       impulse responses, position-major, then channel W X Y Z
//! f64 * N·3         receiver positions
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::checkpoint::Cursor;
use crate::error::{Error, Result};
use crate::field::{predict_foa_batch, FoaField};
use crate::physics::Medium;
use crate::roomsim::images::image_sources;
use crate::roomsim::render::{render_foa_rir, DELAY_TAPS};
use crate::roomsim::room::RoomSpec;

pub const DATASET_MAGIC: &[u8; 4] = b"FOAD";
pub const DATASET_VERSION: u32 = 1;

pub const CHANNELS: usize = 4;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["W", "X", "Y", "Z"];

/// Regular cubic lattice of receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    /// 21 points per axis at 5 cm spanning a 1 m cube.
    pub fn default_for(origin: [f64; 3]) -> Self {
        GridSpec {
            origin,
            spacing: 0.05,
            points_per_axis: 21,
        }
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.points_per_axis == 0
    }

    pub fn extent(&self) -> f64 {
        self.spacing * (self.points_per_axis.saturating_sub(1)) as f64
    }

    pub fn center(&self) -> [f64; 3] {
        self.origin.map(|o| o + 0.5 * self.extent())
    }

    /// Lattice coordinates of flat index `i` (x slowest, z fastest).
    pub fn lattice(&self, i: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        [i / (n * n), (i / n) % n, i % n]
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        let l = self.lattice(i);
        [0, 1, 2].map(|a| self.origin[a] + self.spacing * l[a] as f64)
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Indices of lattice points on the faces of the cube.
    pub fn surface_indices(&self) -> Vec<usize> {
        let last = self.points_per_axis.saturating_sub(1);
        (0..self.len())
            .filter(|&i| self.lattice(i).iter().any(|&c| c == 0 || c == last))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    fs: f64,
    len: usize,
    n: usize,
    medium: Medium,
    room: Option<RoomSpec>,
    grid: GridSpec,
    seed: u64,
}

/// FOA impulse responses on a grid of receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaDataset {
    pub fs: f64,
    /// Samples per impulse response.
    pub len: usize,
    pub positions: Vec<[f64; 3]>,
    /// `N × 4 × L`, position-major.
    pub rirs: Vec<f32>,
    pub medium: Medium,
    pub room: Option<RoomSpec>,
    pub grid: GridSpec,
    pub seed: u64,
}

impl FoaDataset {
    pub fn num_positions(&self) -> usize {
        self.positions.len()
    }

    pub fn duration(&self) -> f64 {
        self.len as f64 / self.fs
    }

    pub fn time(&self, sample: usize) -> f64 {
        sample as f64 / self.fs
    }

    pub fn rir(&self, position: usize, channel: usize) -> &[f32] {
        let start = (position * CHANNELS + channel) * self.len;
        &self.rirs[start..start + self.len]
    }

    /// `(w, x, y, z)` at one position and sample.
    pub fn sample(&self, position: usize, sample: usize) -> [f64; 4] {
        [0, 1, 2, 3].map(|c| self.rirs[(position * CHANNELS + c) * self.len + sample] as f64)
    }

    /// Samples a closed-form field on `grid` (used for analytic fixtures).
    pub fn from_field<F: FoaField + ?Sized>(field: &F, grid: GridSpec, fs: f64, len: usize, seed: u64) -> Result<Self> {
        let positions = grid.positions();
        let mut rirs = vec![0.0f32; positions.len() * CHANNELS * len];
        for (p, pos) in positions.iter().enumerate() {
            let points: Vec<[f64; 4]> = (0..len).map(|l| [pos[0], pos[1], pos[2], l as f64 / fs]).collect();
            let preds = predict_foa_batch(field, &points, false)?;
            for (l, pr) in preds.iter().enumerate() {
                let vals = [pr.w, pr.v[0], pr.v[1], pr.v[2]];
                for (c, v) in vals.iter().enumerate() {
                    rirs[(p * CHANNELS + c) * len + l] = *v as f32;
                }
            }
        }
        Ok(FoaDataset {
            fs,
            len,
            positions,
            rirs,
            medium: field.medium(),
            room: None,
            grid,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.rirs.len() != self.positions.len() * CHANNELS * self.len {
            return Err(Error::format("dataset", "impulse-response block does not match N·4·L"));
        }
        if self.rirs.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("dataset", "non-finite impulse-response sample"));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            fs: self.fs,
            len: self.len,
            n: self.positions.len(),
            medium: self.medium,
            room: self.room.clone(),
            grid: self.grid,
            seed: self.seed,
        })?;
        let mut buf = Vec::with_capacity(16 + header.len() + self.rirs.len() * 4 + self.positions.len() * 24);
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for v in &self.rirs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.positions {
            for c in p {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::io("<dataset stream>", e))
    }

    pub fn read<R: Read>(input: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| Error::io("<dataset stream>", e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != DATASET_MAGIC {
            return Err(Error::format("dataset", "bad magic"));
        }
        let version = cur.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::format("dataset", format!("unsupported version {version}")));
        }
        let hlen = cur.u64()? as usize;
        let header: Header = serde_json::from_slice(cur.take(hlen)?)?;
        let rirs = cur
            .take(header.n * CHANNELS * header.len * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let positions = cur
            .take(header.n * 3 * 8)?
            .chunks_exact(24)
            .map(|c| [0, 1, 2].map(|k| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().expect("8 bytes"))))
            .collect();
        if cur.pos != bytes.len() {
            return Err(Error::format("dataset", "trailing bytes"));
        }
        let ds = FoaDataset {
            fs: header.fs,
            len: header.len,
            positions,
            rirs,
            medium: header.medium,
            room: header.room,
            grid: header.grid,
            seed: header.seed,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut f)
    }
}

/// Renders the image-source FOA response at every grid point.
///
/// Images are collected up to `duration` plus half a delay kernel so that
/// pre-ringing of late arrivals is kept inside the window.
pub fn build_dataset(room: &RoomSpec, grid: GridSpec, fs: f64, duration: f64, medium: &Medium) -> Result<FoaDataset> {
    room.validate()?;
    medium.validate()?;
    if !(fs > 0.0 && duration > 0.0) {
        return Err(Error::config("sample rate and duration must be positive"));
    }
    let len = (fs * duration).round() as usize;
    let horizon = duration + (DELAY_TAPS / 2) as f64 / fs;
    let images = image_sources(room, horizon, medium);
    let positions = grid.positions();
    let rendered: Vec<Result<Vec<f32>>> = positions
        .par_iter()
        .map(|pos| {
            let rir = render_foa_rir(room, pos, &images, fs, len, medium)?;
            Ok(rir.iter().map(|v| *v as f32).collect())
        })
        .collect();
    let mut rirs = Vec::with_capacity(positions.len() * CHANNELS * len);
    for r in rendered {
        rirs.extend(r?);
    }
    let ds = FoaDataset {
        fs,
        len,
        positions,
        rirs,
        medium: *medium,
        room: Some(room.clone()),
        grid,
        seed: room.seed,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roomsim::room::sample_room;

    #[test]
    fn default_grid_counts() {
        let g = GridSpec::default_for([0.0; 3]);
        assert_eq!(g.len(), 9261);
        assert_eq!(g.surface_indices().len(), 21usize.pow(3) - 19usize.pow(3));
        assert!((g.extent() - 1.0).abs() < 1e-12);
        assert_eq!(g.position(g.len() - 1), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn small_dataset_round_trips() {
        let room = sample_room(5).unwrap();
        let grid = GridSpec {
            origin: room.cube_origin,
            spacing: 0.5,
            points_per_axis: 3,
        };
        let ds = build_dataset(&room, grid, 8000.0, 0.02, &Medium::default()).unwrap();
        assert_eq!(ds.len, 160);
        assert_eq!(ds.num_positions(), 27);
        let mut bytes = Vec::new();
        ds.write(&mut bytes).unwrap();
        let back = FoaDataset::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(bytes, again);
    }
}
